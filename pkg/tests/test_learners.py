import numpy as np
import pytest
from hypothesis import given, strategies as st

from kaczmarz_forgetting import learners, orderings, tasks
from kaczmarz_forgetting.learners import InnerSolveConfig, Learner
from kaczmarz_forgetting.tasks import Task, build_collection
from kaczmarz_forgetting.montecarlo import contraction_slack

EXAMPLES = [
    (np.zeros(2), Task([[1.0, 0.0]], [1.0]), [1.0, 0.0]),
    (np.array([3.0, 7.0]), Task([[1.0, 0.0]], [3.0]), [3.0, 7.0]),
    (np.zeros(2), Task([[1.0, 1.0]], [2.0]), [1.0, 1.0]),
]


def projection_oracle(w, task):
    x, y = task.x, task.y
    return w + x.T @ np.linalg.solve(x @ x.T, y - x @ w)


@pytest.mark.parametrize("w, task, expected", EXAMPLES)
def test_kaczmarz_examples(w, task, expected):
    out = learners.kaczmarz_step(w, task)
    np.testing.assert_allclose(out, expected, atol=1e-12)
    np.testing.assert_allclose(out, projection_oracle(w, task), atol=1e-12)


@pytest.mark.parametrize("w, task, expected", EXAMPLES)
def test_inner_gd_matches_kaczmarz(w, task, expected):
    out = learners.gd_inner_step_to_convergence(w, task)
    np.testing.assert_allclose(out, learners.kaczmarz_step(w, task), atol=1e-6)


@pytest.mark.parametrize("w, task, expected", EXAMPLES)
def test_modified_sgd_matches_kaczmarz(w, task, expected):
    w_star = np.linalg.pinv(task.x) @ task.y
    out = learners.modified_sgd_step(w, task, w_star)
    np.testing.assert_allclose(out, learners.kaczmarz_step(w, task), atol=1e-10)
    assert learners.modified_objective(out, task, w_star) <= 1e-16


def test_inner_gd_full_rank():
    out = learners.gd_inner_step_to_convergence(np.zeros(2), Task(np.eye(2), [1.0, 2.0]))
    np.testing.assert_allclose(out, [1, 2], atol=1e-9)


def test_inner_gd_iteration_count_vs_condition(rng):
    x = rng.standard_normal((2, 5)) @ np.diag([1, 1, 1, 1, 1.0])
    task = Task(x, x @ rng.standard_normal(5))
    cfg = InnerSolveConfig(residual_tol=1e-10)
    _, iters = learners.gd_inner_step_to_convergence(np.zeros(5), task, cfg, return_iters=True)
    s = np.linalg.svd(x, compute_uv=False)
    # contraction per iteration on the row space is 1 - (s_min/s_max)^2
    rate = 1 - (s[-1] / s[0]) ** 2
    predicted = np.log(1e-10 / (1 + np.linalg.norm(task.y))) / np.log(rate) + 50
    assert iters <= min(predicted, cfg.max_inner_iters)


def test_inner_gd_exhaustion():
    task = Task([[1.0, 0.0], [0.0, 1e-3]], [1.0, 1.0])
    with pytest.raises(learners.InnerSolveError) as info:
        learners.gd_inner_step_to_convergence(np.zeros(2), task, InnerSolveConfig(max_inner_iters=5))
    assert info.value.residual > 0


def test_modified_gradient_zero_at_solution(rng):
    c = tasks.gen_random_realizable(4, 3, 6, 2)
    for t in c.tasks:
        np.testing.assert_allclose(learners.modified_gradient(c.w_star, t, c.w_star), 0, atol=1e-14)
        np.testing.assert_allclose(learners.modified_sgd_step(c.w_star, t, c.w_star), c.w_star, atol=1e-14)


def test_rank1_examples():
    np.testing.assert_allclose(learners.rank1_normalized_step(np.zeros(2), [1.0, 0.0], 1.0), [1, 0])
    # (0,0) - (1/2)(0 - 2)(1,1)
    np.testing.assert_allclose(learners.rank1_normalized_step(np.zeros(2), [1.0, 1.0], 2.0), [1, 1])
    with pytest.raises(ValueError, match="degenerate rank-1 task"):
        learners.rank1_normalized_step(np.zeros(2), [0.0, 0.0], 1.0)


@given(st.integers(0, 2**31))
def test_rank1_matches_kaczmarz(seed):
    r = np.random.default_rng(seed)
    x, w, y = r.standard_normal(4), r.standard_normal(4), float(r.standard_normal())
    np.testing.assert_allclose(
        learners.rank1_normalized_step(w, x, y), learners.kaczmarz_step(w, Task([x], [y])), atol=1e-12
    )


def test_run_orthogonal_cyclic():
    c = build_collection([Task([[1.0, 0.0]], [2.0]), Task([[0.0, 1.0]], [-1.0])])
    traj = learners.run(c, orderings.cyclic(2, 2))
    np.testing.assert_allclose(traj.iterates[2], c.w_star, atol=1e-10)
    assert traj.iterates.shape == (3, 2)


def test_run_single_task_constant():
    c = tasks.gen_random_realizable(0, 1, 5, 2)
    traj = learners.run(c, orderings.cyclic(1, 6))
    np.testing.assert_allclose(traj.iterates[1], c.w_star, atol=1e-12)
    np.testing.assert_allclose(traj.iterates[1:], np.tile(traj.iterates[1], (6, 1)), atol=1e-12)


def test_three_learners_coincide():
    c = tasks.gen_random_realizable(11, 5, 10, (1, 4))
    o = orderings.sample_with_replacement(11, 5, 50)
    ref = learners.run(c, o, Learner.KACZMARZ).iterates
    for tag in (Learner.GD_INNER, Learner.MODIFIED_SGD):
        assert np.max(np.abs(learners.run(c, o, tag).iterates - ref)) <= 1e-6


def test_run_rejects_mismatched_ordering():
    c = tasks.gen_random_realizable(0, 3, 4, 1)
    with pytest.raises(ValueError):
        learners.run(c, orderings.cyclic(4, 3))


def test_trajectory_csv(tmp_path):
    c = tasks.gen_random_realizable(0, 3, 4, 1)
    traj = learners.run(c, orderings.cyclic(3, 4))
    path = tmp_path / "traj.csv"
    learners.export_csv(c, traj, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,tau_t,dist_sq,current_residual"
    assert len(lines) == 1 + 5  # t = 0..k
    assert lines[1].startswith("0,,")


@given(st.integers(0, 5000), st.integers(1, 6), st.integers(2, 8), st.integers(1, 25))
def test_pathwise_invariants(seed, T, d, k):
    c = tasks.gen_random_realizable(seed, T, d, (1, d))
    traj = learners.run(c, orderings.sample_with_replacement(seed, T, k))
    z = traj.iterates - c.w_star
    norms = np.linalg.norm(z, axis=1)
    slack = contraction_slack(c) * (1 + norms[:-1] + np.linalg.norm(c.w_star))
    assert np.all(np.diff(norms) <= slack)
    steps = np.sum(np.diff(traj.iterates, axis=0) ** 2, axis=1)
    assert abs(steps.sum() - (norms[0] ** 2 - norms[-1] ** 2)) <= 1e-8 * (1 + norms[0] ** 2)
    for t, m in enumerate(traj.ordering.indices, start=1):
        assert traj.per_step_current_residual[t - 1] <= 1e-8 * (1 + np.linalg.norm(c.tasks[m].y))

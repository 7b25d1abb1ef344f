import numpy as np
import pytest
from hypothesis import given, strategies as st

from kaczmarz_forgetting import bounds, learners, orderings, sgd, tasks
from kaczmarz_forgetting.montecarlo import mean_se


def test_single_component_exact_fit():
    w_star = np.array([0.3, -1.2, 2.0])
    p = sgd.make_problem([(np.eye(3), w_star)])
    run = sgd.sgd_with_replacement(p, np.zeros(3), 1.0, 1, seed=0)
    np.testing.assert_allclose(run.iterates[1], w_star, atol=1e-15)


def test_tiny_step_moves_little():
    p = sgd.gen_random_problem(0, 5, 4)
    w0 = np.ones(4)
    run = sgd.sgd_with_replacement(p, w0, 1e-6, 1, seed=1)
    bmax = max(np.linalg.norm(b) for _, b in p.components)
    assert np.linalg.norm(run.iterates[1] - w0) <= 1e-6 * p.beta * (np.linalg.norm(w0) + bmax)


def test_step_size_guard():
    p = sgd.gen_random_problem(0, 5, 4)
    with pytest.raises(sgd.StepSizeError, match="step size outside guaranteed range"):
        sgd.sgd_with_replacement(p, np.zeros(4), 2.0 / p.beta, 3, seed=0)


def test_beta_is_max_squared_spectral_norm():
    p = sgd.gen_random_problem(3, 6, 5, normalize=False)
    assert p.beta == pytest.approx(max(np.linalg.norm(a, 2) ** 2 for a, _ in p.components), rel=1e-9)


def test_rank1_unit_step_equals_modified_sgd():
    p = sgd.gen_rank1_unit_problem(2, 6, 4)
    run = sgd.sgd_with_replacement(p, np.zeros(4), 1.0 / p.beta, 20, seed=5)
    c = tasks.build_collection([tasks.Task(a, b) for a, b in p.components])
    o = orderings.explicit(run.sample_sequence[:20], 6)
    traj = learners.run(c, o, learners.Learner.MODIFIED_SGD)
    np.testing.assert_allclose(traj.iterates, run.iterates, atol=1e-12)


def test_without_replacement_single_component():
    p = sgd.make_problem([(np.array([[1.0, 2.0]]), [3.0])])
    a = sgd.sgd_without_replacement(p, np.zeros(2), 0.1, 1, seed=0)
    b = sgd.sgd_with_replacement(p, np.zeros(2), 0.1, 1, seed=0)
    np.testing.assert_allclose(a.iterates, b.iterates)


def test_without_replacement_deterministic_and_exhaustion():
    p = sgd.gen_random_problem(0, 5, 3)
    a = sgd.sgd_without_replacement(p, np.zeros(3), 0.5, 4, seed=9)
    b = sgd.sgd_without_replacement(p, np.zeros(3), 0.5, 4, seed=9)
    assert a.sample_sequence == b.sample_sequence
    assert len(set(a.sample_sequence)) == len(a.sample_sequence)
    with pytest.raises(orderings.OrderingExhausted):
        sgd.sgd_without_replacement(p, np.zeros(3), 0.5, 6, seed=0)


def test_wor_unit_step_small_instance():
    # n = 6 unit rows, T = 5: prefix average over the first T samples at w_T
    p = sgd.gen_rank1_unit_problem(0, 6, 4)
    vals = []
    for seed in range(2000):
        run = sgd.sgd_without_replacement(p, np.zeros(4), 1.0, 5, seed)
        vals.append(sgd.prefix_average_loss(run, p, 4))
    m, se = mean_se(vals)
    assert m + 3 * se <= 7 * 1.0 / 5**0.25


def test_regret_zero_start():
    p = sgd.gen_random_problem(1, 4, 3)
    run = sgd.sgd_with_replacement(p, p.w_star, 1.0, 10, seed=0)
    total, bound, ok = sgd.regret_sum(run, p.beta)
    assert total == 0 and ok
    assert bounds.bound_sgd_last(1.0, 1.0, 1.0, 4) > 0


def test_regret_bound_value_at_unit_scale():
    p = sgd.gen_random_problem(4, 10, 6)
    run = sgd.sgd_with_replacement(p, np.zeros(6), 1.0, 100, seed=3)
    assert run.D == pytest.approx(1.0)
    total, bound, ok = sgd.regret_sum(run, p.beta)
    assert bound == pytest.approx(0.5)
    assert ok and total <= 0.5


@given(st.integers(0, 10_000), st.sampled_from([0.25, 0.5, 1.0, 1.5, 1.9]), st.integers(1, 60))
def test_regret_bound_pathwise(seed, scale, steps):
    p = sgd.gen_random_problem(seed, 5, 4, normalize=False)
    w0 = np.random.default_rng(seed).standard_normal(4)
    run = sgd.sgd_with_replacement(p, w0, scale / p.beta, steps, seed)
    assert sgd.regret_sum(run, p.beta)[2]


def test_run_records():
    p = sgd.gen_random_problem(2, 5, 3)
    run = sgd.sgd_with_replacement(p, np.zeros(3), 0.7, 12, seed=4)
    for t, i in enumerate(run.sample_sequence[: len(run.per_step_loss)]):
        a, b = p.components[i]
        assert run.per_step_loss[t] == pytest.approx(0.5 * np.sum((a @ run.iterates[t] - b) ** 2), rel=1e-12, abs=1e-18)
    np.testing.assert_allclose(run.regret_partial_sums, np.cumsum(run.per_step_loss), rtol=1e-12)


def test_prefix_average_examples():
    p = sgd.gen_random_problem(2, 5, 3)
    run = sgd.sgd_with_replacement(p, p.w_star, 0.7, 6, seed=4)
    assert sgd.prefix_average_loss(run, p, 3) == 0
    single = sgd.make_problem([(np.array([[1.0, 1.0]]), [2.0])])
    run = sgd.sgd_with_replacement(single, np.zeros(2), 0.3, 4, seed=0)
    w = run.iterates[-1]
    assert sgd.prefix_average_loss(run, single, 2) == pytest.approx(single.loss(w, 0), rel=1e-14)
    with pytest.raises(IndexError):
        sgd.prefix_average_loss(run, single, 99)


def test_prefix_average_brute_force():
    p = sgd.gen_random_problem(6, 8, 4)
    run = sgd.sgd_without_replacement(p, np.zeros(4), 0.8, 5, seed=1)
    w = run.iterates[5]
    brute = 0.0
    for i in run.sample_sequence[:5]:
        a, b = p.components[i]
        brute += 0.5 * float(np.sum((a @ w - b) ** 2))
    assert sgd.prefix_average_loss(run, p, 4) == pytest.approx(brute / 5, rel=1e-12)


def test_batch_matches_single_runs():
    p = sgd.gen_random_problem(3, 7, 5)
    seqs = orderings.sample_batch("wr", range(6), 7, 11)
    W = sgd.run_batch(p, np.zeros(5), 0.9, seqs, 10)
    for r in range(6):
        single = sgd.run_with_sequence(p, np.zeros(5), 0.9, seqs[r])
        np.testing.assert_allclose(W[r], single.iterates[10], atol=1e-13)
    losses = sgd.batch_component_losses(p, W)
    assert losses[0, 2] == pytest.approx(p.loss(W[0], 2), rel=1e-12)


@given(st.integers(0, 100_000))
def test_gradient_identity_and_smoothness(seed):
    p = sgd.gen_random_problem(seed % 50, 4, 5, normalize=False)
    w = np.random.default_rng(seed).standard_normal(5) * 3
    for i in range(p.n):
        f = p.loss(w, i)
        g = p.gradient(w, i)
        assert 2 * f == pytest.approx(float(g @ (w - p.w_star)), rel=1e-10, abs=1e-12)
        assert g @ g <= 2 * p.beta * f * (1 + 1e-12) + 1e-14
        # descent lemma at eta = 1/beta
        assert p.loss(w - g / p.beta, i) <= f + 1e-12


def test_sgd_csv(tmp_path):
    p = sgd.gen_random_problem(2, 5, 3)
    run = sgd.sgd_with_replacement(p, np.zeros(3), 0.7, 4, seed=4)
    path = tmp_path / "run.csv"
    sgd.export_csv(run, p, path)
    assert path.read_text().splitlines()[0] == "t,i_t,loss,dist_sq"

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kaczmarz_forgetting import learners, metrics, montecarlo, orderings, tasks
from kaczmarz_forgetting.tasks import Task, build_collection


def brute(c, traj, k, at_final):
    tot = 0.0
    for t in range(1, k + 1):
        m = traj.ordering.indices[t - 1]
        w = traj.iterates[k] if at_final else traj.iterates[t - 1]
        for i in range(c.tasks[m].x.shape[0]):
            r = sum(c.tasks[m].x[i, j] * w[j] for j in range(c.dim)) - c.tasks[m].y[i]
            tot += r * r
    return tot / (2 * k)


def test_loss_zero_at_solution():
    c = tasks.gen_random_realizable(1, 4, 6, (1, 3))
    assert metrics.training_loss(c, c.w_star) <= 1e-16 * (1 + c.stats.radius_R**2 * c.stats.w_star_norm**2) * 10


def test_loss_single_identity():
    c = build_collection([Task(np.eye(2), [0.0, 0.0])])
    assert metrics.training_loss(c, [1.0, 1.0]) == pytest.approx(1.0)


@given(st.integers(0, 10_000))
def test_loss_brute_force(seed):
    c = tasks.gen_random_realizable(seed, 3, 5, (1, 4), (1, 4))
    w = np.random.default_rng(seed).standard_normal(5)
    naive = 0.0
    for t in c.tasks:
        for i in range(t.x.shape[0]):
            r = sum(t.x[i, j] * w[j] for j in range(5)) - t.y[i]
            naive += r * r
    assert metrics.training_loss(c, w) == pytest.approx(naive / (2 * c.T), rel=1e-12, abs=1e-14)


def test_forgetting_trivial_cases():
    c = tasks.gen_random_realizable(2, 3, 5, 2)
    traj = learners.run(c, orderings.sample_with_replacement(0, 3, 5))
    assert metrics.forgetting(c, traj, 1) <= 1e-16 * 100
    c1 = tasks.gen_random_realizable(2, 1, 5, 2)
    traj1 = learners.run(c1, orderings.cyclic(1, 4))
    for k in range(1, 5):
        assert metrics.forgetting(c1, traj1, k) <= 1e-28


def test_forgetting_and_regret_clone_brute_force():
    c = tasks.gen_two_task_clone(0, 2, 2, 0.05)
    traj = learners.run(c, orderings.sample_with_replacement(4, 2, 50))
    assert metrics.forgetting(c, traj, 50) == pytest.approx(brute(c, traj, 50, True), rel=1e-10, abs=1e-20)
    assert metrics.regret(c, traj, 50) == pytest.approx(brute(c, traj, 50, False), rel=1e-10)


def test_regret_examples():
    c = tasks.gen_random_realizable(5, 3, 4, 1)
    traj = learners.run(c, orderings.sample_with_replacement(1, 3, 6), w0=c.w_star)
    assert metrics.regret(c, traj, 6) <= 1e-28
    c1 = tasks.gen_random_realizable(5, 1, 4, 2)
    traj1 = learners.run(c1, orderings.cyclic(1, 5))
    expected = float(np.sum(c1.tasks[0].y ** 2)) / (2 * 5)
    assert metrics.regret(c1, traj1, 5) == pytest.approx(expected, rel=1e-12)


def test_forgetting_range_check():
    c = tasks.gen_random_realizable(5, 3, 4, 1)
    traj = learners.run(c, orderings.cyclic(3, 2))
    with pytest.raises(IndexError):
        metrics.forgetting(c, traj, 3)


def test_bridge_trivial():
    c1 = tasks.gen_random_realizable(5, 1, 4, 2)
    traj = learners.run(c1, orderings.cyclic(1, 4))
    lhs, rhs = metrics.bridge_forgetting_bound(c1, traj, 4)
    s = c1.stats
    assert lhs <= 1e-28
    assert rhs == pytest.approx(s.w_star_norm**2 * s.radius_R**2 / 4)
    c = build_collection([Task([[1.0, 0.0]], [1.0]), Task([[0.0, 1.0]], [1.0])])
    lhs, _ = metrics.bridge_forgetting_bound(c, learners.run(c, orderings.cyclic(2, 2)), 2)
    assert lhs <= 1e-30


def test_bridge_in_expectation():
    c = tasks.gen_random_realizable(8, 5, 10, (1, 3))
    k = 8
    s = montecarlo.simulate_regression(c, "wr", range(5000), [k], pathwise=False)
    st_ = c.stats
    lhs = s.forgetting[:, 0]
    rhs = s.current_before[:, 0] + st_.w_star_norm**2 * st_.radius_R**2 / k
    diff = lhs - rhs
    m, se = montecarlo.mean_se(diff)
    assert m <= 3 * se
    # common random numbers: the per-run helper agrees with the batched quantities
    for seed in range(5):
        traj = learners.run(c, orderings.sample_with_replacement(seed, c.T, k))
        pair = metrics.bridge_forgetting_bound(c, traj, k)
        assert pair == pytest.approx((lhs[seed], rhs[seed]), rel=1e-9, abs=1e-15)


def test_wor_decomposition_k_equals_T():
    c = tasks.gen_random_realizable(3, 4, 6, (1, 2))
    traj = learners.run(c, orderings.sample_without_replacement(9, 4, 4))
    loss, fterm, unseen = metrics.wor_loss_decomposition(c, traj, 4)
    assert unseen == 0
    assert loss == pytest.approx(fterm, rel=1e-12)


def test_wor_decomposition_two_orthogonal_tasks():
    c = build_collection([Task([[1.0, 0.0]], [1.0]), Task([[0.0, 1.0]], [3.0])])
    traj = learners.run(c, orderings.Ordering((0, 1), orderings.Policy.WITHOUT_REPLACEMENT, 2, 0))
    loss, fterm, unseen = metrics.wor_loss_decomposition(c, traj, 1)
    # w_1 = (1, 0): unseen residual is 9, seen is 0
    assert loss == pytest.approx(9 / 4)
    assert fterm == pytest.approx(0)
    assert unseen == pytest.approx(9 / 4)


def test_wor_decomposition_rejects_wr():
    c = tasks.gen_random_realizable(3, 4, 6, 1)
    traj = learners.run(c, orderings.sample_with_replacement(0, 4, 3))
    with pytest.raises(ValueError):
        metrics.wor_loss_decomposition(c, traj, 2)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_wor_decomposition_in_expectation(k):
    c = tasks.gen_random_realizable(6, 5, 8, (1, 3))
    T = c.T
    s = montecarlo.simulate_regression(c, "wor", range(3000), [k], pathwise=False)
    unseen = np.nan_to_num(s.unseen[:, 0]) if k == T else s.unseen[:, 0]
    rhs = k / T * s.forgetting[:, 0] + (T - k) / (2 * T) * unseen
    m, se = montecarlo.mean_se(s.loss[:, 0] - rhs)
    assert abs(m) <= 3 * se + 1e-14


def test_series_aligned():
    c = tasks.gen_random_realizable(0, 3, 4, 1)
    traj = learners.run(c, orderings.sample_with_replacement(0, 3, 10))
    s = metrics.series(c, traj, [1, 5, 10])
    assert len(s.loss) == len(s.forgetting) == len(s.regret) == len(s.dist_sq) == 3
    assert min(s.loss + s.forgetting + s.regret + s.dist_sq) >= -1e-12

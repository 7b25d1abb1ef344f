import numpy as np
import pytest
from hypothesis import given, strategies as st

from kaczmarz_forgetting import linalg, montecarlo, tasks
from kaczmarz_forgetting.tasks import Task, build_collection


def test_single_full_rank_task():
    c = build_collection([Task(np.eye(2), np.array([1.0, 0.0]))])
    np.testing.assert_allclose(c.w_star, [1, 0])


def test_orthogonal_rows():
    c = build_collection([Task([[1.0, 0.0]], [1.0]), Task([[0.0, 1.0]], [1.0])])
    np.testing.assert_allclose(c.w_star, [1, 1])


def test_inconsistent_rejected():
    with pytest.raises(linalg.NotRealizableError, match="not jointly realizable"):
        build_collection([Task([[1.0, 0.0]], [1.0]), Task([[1.0, 0.0]], [2.0])])


def test_task_shape_checks():
    with pytest.raises(ValueError):
        Task(np.ones((2, 3)), np.ones(3))
    with pytest.raises(ValueError, match="dimension mismatch"):
        build_collection([Task([[1.0, 0.0]], [1.0]), Task([[1.0, 0.0, 0.0]], [1.0])])


def test_random_realizable_contract():
    c = tasks.gen_random_realizable(0, 1, 3, 3, 3)
    assert c.realizability_residual <= 1e-8
    assert c.tasks[0].rank == 3


def test_random_realizable_deterministic():
    a = tasks.gen_random_realizable(5, 4, 6, (1, 3), (2, 5))
    b = tasks.gen_random_realizable(5, 4, 6, (1, 3), (2, 5))
    assert tasks.to_json(a) == tasks.to_json(b)
    for ta, tb in zip(a.tasks, b.tasks):
        assert ta.x.tobytes() == tb.x.tobytes() and ta.y.tobytes() == tb.y.tobytes()


@pytest.mark.parametrize("seed, T, d, rank", [(1, 4, 6, 1), (7, 3, 5, 2)])
def test_avg_rank_matches_svd_oracle(seed, T, d, rank):
    c = tasks.gen_random_realizable(seed, T, d, rank)
    oracle = np.mean([np.sum(np.linalg.svd(t.x, compute_uv=False) > 1e-9) for t in c.tasks])
    assert oracle == rank
    assert c.stats.avg_rank == pytest.approx(rank, abs=1e-6)


def test_clone_orthogonal_converges_in_two_steps():
    from kaczmarz_forgetting import learners, metrics, orderings

    c = tasks.gen_two_task_clone(0, 2, 2, np.pi / 2)
    traj = learners.run(c, orderings.cyclic(2, 2))
    np.testing.assert_allclose(traj.iterates[2], c.w_star, atol=1e-12)
    assert metrics.forgetting(c, traj, 2) <= 1e-20


def test_clone_counts():
    c = tasks.gen_two_task_clone(0, 5, 3, 0.2)
    rows = [tuple(np.round(t.x[0], 12)) for t in c.tasks]
    assert len(rows) == 5
    assert sorted(rows.count(r) for r in set(rows)) == [2, 3]
    assert rows[0] == rows[2] == rows[4]


def test_clone_forgetting_times_k_is_bounded():
    # brute-force Monte-Carlo over 10^4 orderings
    c = tasks.gen_two_task_clone(0, 2, 2, 0.1)
    ks = [10, 25, 50, 100, 200]
    sample = montecarlo.simulate_regression(c, "wr", range(10_000), ks, pathwise=False)
    s = c.stats
    scaled = sample.forgetting.mean(axis=0) * np.array(ks) / (s.w_star_norm**2 * s.radius_R**2)
    assert np.all(scaled > 1e-3) and np.all(scaled < 1.0)


def test_stats_examples():
    s = build_collection([Task([[1.0, 0.0]], [1.0]), Task([[0.0, 1.0]], [0.0])]).stats
    assert (s.radius_R, s.avg_rank, s.total_rows_N) == (1.0, 1.0, 2)
    s = build_collection([Task(2 * np.eye(3), np.ones(3))]).stats
    assert s.radius_R == pytest.approx(2) and s.avg_rank == 3


def test_normalized_unit_scale():
    c = tasks.normalized(tasks.gen_random_realizable(3, 4, 7, (1, 3)))
    assert c.stats.w_star_norm == pytest.approx(1, rel=1e-12)
    assert c.stats.radius_R == pytest.approx(1, rel=1e-12)
    assert c.realizability_residual <= 1e-8


def test_json_roundtrip(tmp_path):
    c = tasks.gen_random_realizable(2, 3, 5, (1, 2), (2, 4))
    path = tmp_path / "c.json"
    tasks.save(c, path)
    back = tasks.load(path)
    for a, b in zip(c.tasks, back.tasks):
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_allclose(back.w_star, c.w_star, atol=1e-14)


@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(2, 9))
def test_generated_collections_are_realizable(seed, T, d):
    c = tasks.gen_random_realizable(seed, T, d, (1, max(1, d - 1)))
    scale = 1 + max(np.linalg.norm(t.y) for t in c.tasks)
    for t in c.tasks:
        assert np.linalg.norm(t.x @ c.w_star - t.y) <= 1e-8 * scale
    # minimal norm: no component in the joint null space
    assert np.linalg.norm(linalg.complement_projection(c.stacked_x) @ c.w_star) <= 1e-8 * (1 + np.linalg.norm(c.w_star))

import numpy as np
import pytest

from lrcs.altmin import run_altmin, solve_u_least_squares, update_u_full_ls
from lrcs.errors import ConfigurationError, RankDeficientError
from lrcs.gdmin import SolverConfig, objective, run
from lrcs.metrics import sd2
from lrcs.model import generate_ground_truth, measure


def stacked_design_oracle(b, a, y):
    # one row kron(b_k, a_ik) per measurement; lstsq on the full mq x nr design
    q, m, n = a.shape
    rows = [np.kron(b[:, k], a[k, i]) for k in range(q) for i in range(m)]
    vec, *_ = np.linalg.lstsq(np.array(rows), y.reshape(-1), rcond=None)
    return vec.reshape(b.shape[0], n).T


def test_exact_b_recovers_subspace():
    t = generate_ground_truth(15, 12, 2, 2.0, seed=0)
    inst = measure(t, 6, 0.0, seed=0)
    u = update_u_full_ls(t.b_star, inst.matrices, inst.observations)
    assert sd2(t.u_star, u) <= 1e-8
    assert np.abs(u.T @ u - np.eye(2)).max() <= 1e-12


def test_rank_one_single_column_matches_dense_lstsq():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((1, 8, 4))
    y = rng.standard_normal((1, 8))
    b = np.array([[1.7]])
    raw = solve_u_least_squares(b, a, y)
    direct, *_ = np.linalg.lstsq(b[0, 0] * a[0], y[0], rcond=None)
    np.testing.assert_allclose(raw[:, 0], direct, rtol=1e-10)
    u = update_u_full_ls(b, a, y)
    np.testing.assert_allclose(np.abs(u[:, 0]), np.abs(direct) / np.linalg.norm(direct), rtol=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_matches_stacked_kronecker_design(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((5, 7, 4))
    y = rng.standard_normal((5, 7))
    b = rng.standard_normal((2, 5))
    np.testing.assert_allclose(solve_u_least_squares(b, a, y),
                               stacked_design_oracle(b, a, y), rtol=1e-9, atol=1e-10)


def test_zero_b_is_rank_deficient():
    rng = np.random.default_rng(0)
    with pytest.raises(RankDeficientError) as ei:
        solve_u_least_squares(np.zeros((2, 3)), rng.standard_normal((3, 5, 4)),
                              rng.standard_normal((3, 5)))
    assert ei.value.dimension == 8


def test_exact_minimization_property():
    t = generate_ground_truth(12, 10, 2, 1.5, seed=2)
    inst = measure(t, 8, 0.3, seed=2)
    rng = np.random.default_rng(9)
    b = t.b_star + 0.1 * rng.standard_normal(t.b_star.shape)
    u = solve_u_least_squares(b, inst.matrices, inst.observations)
    f0 = objective(u, b, inst.matrices, inst.observations)
    for _ in range(20):
        g = rng.standard_normal(u.shape)
        f1 = objective(u + 1e-4 * g, b, inst.matrices, inst.observations)
        assert f1 >= f0 * (1 - 1e-8)


def test_insufficient_samples():
    t = generate_ground_truth(30, 10, 2, 1.0, seed=0)
    inst = measure(t, 5, 0.0, seed=0)
    with pytest.raises(ConfigurationError):
        run_altmin(inst, SolverConfig(r=2))


def test_altmin_converges_faster_than_gdmin():
    t = generate_ground_truth(40, 40, 2, 1.0, seed=4)
    inst = measure(t, 20, 0.0, seed=4)
    cfg = SolverConfig(r=2, max_iters=200)
    _, ra = run_altmin(inst, cfg)
    _, rg = run(inst, cfg)
    assert ra.init_sd2 == rg.init_sd2
    assert ra.final.sd2 <= 1e-8 and rg.final.sd2 <= 1e-8
    assert ra.iters < rg.iters
    assert ra.solver == "altmin" and all(r.eta_used == 0.0 for r in ra.history)
    sds = ra.sd2_trajectory()
    assert all(b <= a or b < 1e-12 for a, b in zip(sds, sds[1:]))


def _nonincreasing(sds, floor=1e-12):
    return all(b <= a or max(a, b) < floor for a, b in zip(sds, sds[1:]))


def test_histories_nonincreasing_for_both_solvers():
    cfg = SolverConfig(r=2, max_iters=200)
    mono = {"altgdmin": 0, "altmin": 0}
    seeds = range(10)
    for seed in seeds:
        t = generate_ground_truth(40, 40, 2, 1.0, seed=seed)
        inst = measure(t, 30, 0.0, seed=seed)
        mono["altgdmin"] += _nonincreasing(run(inst, cfg)[1].sd2_trajectory())
        mono["altmin"] += _nonincreasing(run_altmin(inst, cfg)[1].sd2_trajectory())
    assert all(v / len(seeds) >= 0.95 for v in mono.values()), mono

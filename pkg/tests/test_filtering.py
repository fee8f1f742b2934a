import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isdim import filtering, inverse
from isdim.errors import ConsistencyError
from isdim.filtering import OneStepFilter, ProposalKind

GOLDEN = (math.sqrt(5) + 1) / 2


def _random_filter(rng, n, k):
    def spd(m):
        b = rng.standard_normal((m, m))
        return b @ b.T + 0.1 * np.eye(m)

    return OneStepFilter.dense(rng.standard_normal((n, n)), rng.standard_normal((k, n)), spd(n), spd(n), spd(k))


def test_standard_reduction_identity():
    ip = filtering.standard_reduction(OneStepFilter.dense(*[np.eye(2)] * 5))
    assert np.allclose(ip.Sigma, 2 * np.eye(2)) and np.allclose(ip.K, np.eye(2)) and np.allclose(ip.Gamma, np.eye(2))


def test_standard_reduction_zero_dynamics():
    q = np.diag([0.3, 0.7])
    ip = filtering.standard_reduction(OneStepFilter.dense(np.zeros((2, 2)), np.eye(2), np.eye(2), q, np.eye(2)))
    assert np.allclose(ip.Sigma, q)


def test_optimal_reduction_identity():
    f = OneStepFilter.dense(*[np.eye(2)] * 5)
    ip = filtering.optimal_reduction(f)
    assert np.allclose(ip.Sigma, np.eye(2)) and np.allclose(ip.K, np.eye(2)) and np.allclose(ip.Gamma, 2 * np.eye(2))
    assert np.allclose(inverse.operator_a(ip), 0.5 * np.eye(2))


@pytest.mark.parametrize("kind, lam", [(ProposalKind.STANDARD, 2.0), (ProposalKind.OPTIMAL, 0.5)])
def test_scalar_a(kind, lam):
    ip = filtering.reduction(OneStepFilter.scalar(), kind)
    assert inverse.operator_a(ip) == pytest.approx([lam], rel=1e-15)


def test_no_observation():
    f = OneStepFilter.dense(np.eye(2), np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2))
    ops = filtering.a_operators(f)
    assert np.all(ops.a_op == 0) and np.all(ops.a_st == 0)
    post = inverse.posterior(filtering.optimal_reduction(f), [1.0, 2.0])
    assert np.allclose(post.mean, 0) and np.allclose(post.covariance, np.eye(2))


def test_example_operators():
    P = np.diag([0.5, 0.25])
    eye = np.eye(2)
    ops = filtering.a_operators(OneStepFilter.dense(eye, eye, P, eye, eye))
    assert np.allclose(ops.a_st, [1.5, 1.25], rtol=1e-12)
    assert np.allclose(ops.a_op, [0.25, 0.125], rtol=1e-12)
    assert ops.st.tau == pytest.approx(2.75, rel=1e-12)
    assert ops.op.tau == pytest.approx(0.375, rel=1e-12)


def test_zero_dynamics_optimal_tau():
    f = OneStepFilter.dense(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2), np.eye(2))
    assert filtering.a_operators(f).op.tau == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_tau_op_below_tau_st(n, k, seed):
    ops = filtering.a_operators(_random_filter(np.random.default_rng(seed), n, k))
    assert ops.op.tau <= ops.st.tau * (1 + 1e-10)
    assert ops.op.efd <= ops.st.efd * (1 + 1e-10)


def test_scalar_and_dense_forms_agree():
    f = OneStepFilter.scalar(0.8, 1.3, 0.4, 0.7, 0.2, 3)
    a, b = filtering.a_operators(f), filtering.a_operators(f.to_dense())
    assert np.allclose(a.a_st, b.a_st, rtol=1e-12) and np.allclose(a.a_op, b.a_op, rtol=1e-12)


def test_a_operators_consistency_check(monkeypatch):
    monkeypatch.setattr(filtering, "REDUCTION_RTOL", -1.0)
    with pytest.raises(ConsistencyError):
        filtering.a_operators(OneStepFilter.scalar())


def test_negative_covariance_scalar():
    with pytest.raises(ValueError, match="covariance scalar must be positive"):
        OneStepFilter.scalar(r=-1.0)


def test_conditioned_dynamics_no_observation():
    M, Q = np.array([[0.5, 0.1], [0.0, 0.9]]), np.diag([0.2, 0.4])
    f = OneStepFilter.dense(M, np.zeros((1, 2)), np.eye(2), Q, np.eye(1))
    g = filtering.conditioned_dynamics(f, [1.0, 2.0], [5.0])
    assert np.allclose(g.mean, M @ [1.0, 2.0]) and np.allclose(g.covariance, Q)


def test_conditioned_dynamics_scalar():
    g = filtering.conditioned_dynamics(OneStepFilter.scalar(), [0.0], [2.0])
    assert g.mean == pytest.approx([1.0]) and g.covariance[0, 0] == pytest.approx(0.5)


def test_conditioned_dynamics_vanishing_gain():
    g = filtering.conditioned_dynamics(OneStepFilter.scalar(m=0.7, r=1e8), [0.5], [2.0])
    assert abs(g.mean[0] - 0.35) < 1e-6


def test_conditioned_dynamics_against_joint_gaussian():
    rng = np.random.default_rng(3)
    f = _random_filter(rng, 3, 2)
    v0, y1 = rng.standard_normal(3), rng.standard_normal(2)
    # joint law of (v1, y1) given v0, conditioned by Schur complement
    mv, cvv = f.M @ v0, f.Q
    cyy, cvy = f.H @ f.Q @ f.H.T + f.R, f.Q @ f.H.T
    g = filtering.conditioned_dynamics(f, v0, y1)
    assert np.allclose(g.mean, mv + cvy @ np.linalg.solve(cyy, y1 - f.H @ mv))
    assert np.allclose(g.covariance, cvv - cvy @ np.linalg.solve(cyy, cvy.T))


def test_stationary_golden():
    assert filtering.stationary_covariance(OneStepFilter.scalar()) == pytest.approx((math.sqrt(5) - 1) / 2, rel=1e-15)


def test_stationary_small_r():
    r = np.logspace(-2, -8, 7)
    p = [filtering.stationary_covariance(OneStepFilter.scalar(r=x)) for x in r]
    assert np.allclose(p, r, rtol=1.1e-2)
    slope = np.polyfit(np.log(r), np.log(p), 1)[0]
    assert slope == pytest.approx(1.0, abs=1e-2)


def test_stationary_operators_q_equals_r():
    ops = filtering.a_operators(filtering.at_stationarity(OneStepFilter.scalar(q=0.3, r=0.3)))
    assert ops.a_st[0] == pytest.approx(GOLDEN, rel=1e-12)
    assert ops.a_op[0] == pytest.approx((math.sqrt(5) - 1) / 4, rel=1e-12)


@pytest.mark.parametrize("q", [1e-3, 1e-2, 1e-1, 1.0, 10.0])
@pytest.mark.parametrize("r", [1e-3, 1e-2, 1e-1, 1.0, 10.0])
def test_stationary_fixed_point(q, r):
    f = OneStepFilter.scalar(q=q, r=r)
    p = filtering.stationary_covariance(f)
    assert abs(filtering.kalman_update(f, p) - p) <= 1e-10 * p


def test_kalman_update_no_observation():
    M, P, Q = np.array([[0.9, 0.2], [0.0, 1.1]]), np.diag([1.0, 2.0]), np.diag([0.1, 0.3])
    f = OneStepFilter.dense(M, np.zeros((2, 2)), P, Q, np.eye(2))
    assert np.allclose(filtering.kalman_update(f, P), M @ P @ M.T + Q)


def test_kalman_update_scalar_arithmetic():
    assert filtering.kalman_update(OneStepFilter.scalar(), 1.0) == pytest.approx(2 / 3, rel=1e-15)


def test_kalman_update_scalar_matches_dense():
    f = OneStepFilter.scalar(0.9, 1.2, 0.5, 0.3, 0.4, 2)
    assert np.allclose(filtering.kalman_update(f.to_dense(), 0.5 * np.eye(2)), filtering.kalman_update(f, 0.5) * np.eye(2))


def test_compare_no_observation():
    cmp = filtering.compare_proposals(OneStepFilter.scalar(h=0.0), [0.3], 1000, seed=0)
    assert cmp.log_rho_st == 0.0 and cmp.log_rho_op == 0.0
    assert cmp.ess_st == pytest.approx(1000) and cmp.ess_op == pytest.approx(1000)


def test_compare_unit():
    cmp = filtering.compare_proposals(OneStepFilter.scalar(), [0.0], 10**6, seed=0)
    assert cmp.log_rho_st == pytest.approx(math.log(3 / math.sqrt(5)), rel=1e-14)
    assert cmp.log_rho_op == pytest.approx(math.log(1.5 / math.sqrt(2)), rel=1e-14)
    assert cmp.st_exceeds_op
    assert abs(cmp.mc_st.rho - 3 / math.sqrt(5)) <= 3 * cmp.mc_st.std_error
    assert abs(cmp.mc_op.rho - 1.5 / math.sqrt(2)) <= 3 * cmp.mc_op.std_error


def test_compare_dense_matches_scalar():
    f = OneStepFilter.scalar(0.9, 1.1, 0.6, 0.4, 0.5, 2)
    y = [0.3, -0.8]
    a = filtering.compare_proposals(f, y, 100, seed=0)
    b = filtering.compare_proposals(f.to_dense(), y, 100, seed=0)
    assert b.log_rho_st == pytest.approx(a.log_rho_st, rel=1e-9)
    assert b.log_rho_op == pytest.approx(a.log_rho_op, rel=1e-9)


def test_compare_small_noise_stationary():
    f = filtering.at_stationarity(OneStepFilter.scalar(q=1.0, r=1e-4, d=3))
    y = math.sqrt(1e-4) * np.random.default_rng(0).standard_normal(3)
    st_ip, op_ip = filtering.standard_reduction(f), filtering.optimal_reduction(f)
    assert inverse.log_rho(st_ip, y) > 1.5 * math.log(1e4) - 3
    assert inverse.log_rho(op_ip, y) < 0.01


def test_truncation_verdict():
    converging = lambda d: math.fsum(1 / j**2 for j in range(1, d + 1))
    diverging = lambda d: math.fsum(1 / j for j in range(1, d + 1))
    assert filtering.truncation_verdict(converging, 4096).label == "finite"
    assert filtering.truncation_verdict(diverging, 4096).label == "inf"


def test_sweep_stationary_small_r():
    rep = filtering.sweep_tables34("stationary", {"r": [1e-2, 1e-3, 1e-4, 1e-5, 1e-6], "q": 1.0, "d": 3}, seed=0)
    assert rep.fit_st.slope == pytest.approx(1.5, rel=0.1)
    assert rep.fit_op.slope == pytest.approx(0.0, abs=0.05)
    assert rep.eig_fits["eig_p_inf"].slope == pytest.approx(1.0, abs=0.01)


def test_sweep_fixed_p_tied():
    rep = filtering.sweep_tables34("fixed_p", {"r": [1e-2, 1e-3, 1e-4, 1e-5, 1e-6], "q": "r", "p": 1.0, "d": 2}, seed=0)
    assert rep.fit_st.slope == pytest.approx(1.0, rel=0.1)
    assert rep.fit_op.slope == pytest.approx(1.0, rel=0.1)


def test_sweep_large_d():
    rep = filtering.sweep_tables34("fixed_p", {"d": [4, 8, 16, 32, 64], "r": 1.0, "q": 1.0, "p": 1.0}, seed=0)
    assert rep.driver == "d" and rep.n_seeds == 32
    assert rep.fit_st.r2 >= 0.95 and rep.fit_op.r2 >= 0.95


def test_sweep_rejects_two_drivers():
    with pytest.raises(ValueError):
        filtering.sweep_tables34("fixed_p", {"d": [1, 2, 3], "r": [1.0, 0.1]}, seed=0)

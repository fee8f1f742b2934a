import math
import warnings

import numpy as np
import pytest
import scipy.special
from hypothesis import given, settings
from hypothesis import strategies as st

from isdim import inverse, measures, sampler
from isdim.errors import ConsistencyError, DimensionError, IllConditionedError
from isdim.inverse import LinearGaussianIP, SpectralCascade


def _random_dense(rng, du, dy):
    K = rng.standard_normal((dy, du))
    B = rng.standard_normal((du, du))
    G = rng.standard_normal((dy, dy))
    return LinearGaussianIP.dense(K, B @ B.T + 0.1 * np.eye(du), G @ G.T + 0.1 * np.eye(dy))


def test_operator_a_unit():
    assert inverse.operator_a(LinearGaussianIP.diagonal([1.0], [1.0], [1.0])) == pytest.approx([1.0])
    a = inverse.operator_a(LinearGaussianIP.dense([[1.0]], [[1.0]], [[1.0]]))
    assert a.shape == (1, 1) and a[0, 0] == pytest.approx(1.0)


def test_cascade_spectrum():
    assert np.allclose(SpectralCascade(1.0, 0.5, 3).eigenvalues(), [2.0, 1.0, 2 / 3], rtol=1e-15)


def test_cascade_as_ip_matches_eigenvalues():
    c = SpectralCascade(1.3, 0.2, 7)
    assert np.allclose(inverse.operator_a(c.as_ip()), c.eigenvalues(), rtol=1e-14)


def test_dense_operator_a_against_direct_product():
    ip = _random_dense(np.random.default_rng(0), 4, 3)
    s = inverse._sym_sqrt(ip.Sigma)
    direct = s @ ip.K.T @ np.linalg.inv(ip.Gamma) @ ip.K @ s
    assert np.allclose(inverse.operator_a(ip), direct, rtol=1e-10)


def test_ill_conditioned_noise():
    with pytest.raises(IllConditionedError):
        inverse.operator_a(LinearGaussianIP.diagonal([1.0, 1.0], [1.0, 1.0], [1.0, 1e-13]))


@pytest.mark.parametrize(
    "a, tau, efd",
    [
        (np.zeros(4), 0.0, 0.0),
        (SpectralCascade(0.0, 1.0, 10).eigenvalues(), 10.0, 5.0),
        (np.array([1.0]), 1.0, 0.5),
    ],
)
def test_intrinsic_dims(a, tau, efd):
    dims = inverse.intrinsic_dims(a)
    assert dims.tau == pytest.approx(tau, abs=1e-15)
    assert dims.efd == pytest.approx(efd, abs=1e-15)


def test_intrinsic_dims_cascade_sums():
    beta, gamma, d = 0.7, 0.3, 50
    j = np.arange(1, d + 1) ** -beta
    dims = SpectralCascade(beta, gamma, d).intrinsic_dims()
    assert dims.tau == pytest.approx(j.sum() / gamma, rel=1e-13)
    assert dims.efd == pytest.approx(np.sum(j / (gamma + j)), rel=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_efd_bounded_by_nominal_dimension(du, dy, seed):
    ip = _random_dense(np.random.default_rng(seed), du, dy)
    dims = inverse.intrinsic_dims(inverse.operator_a(ip))
    assert dims.efd <= min(du, dy) + 1e-9
    lam_max = dims.a_spectrum[0]
    assert dims.tau / (1 + lam_max) <= dims.efd * (1 + 1e-12) + 1e-300
    assert dims.efd <= dims.tau * (1 + 1e-12)


def test_trace_identities_dense():
    ip = _random_dense(np.random.default_rng(1), 5, 3)
    post = inverse.posterior(ip, np.zeros(3))
    dims = inverse.intrinsic_dims(inverse.operator_a(ip))
    sigma_inv = np.linalg.inv(ip.Sigma)
    assert np.trace((np.linalg.inv(post.covariance) - sigma_inv) @ ip.Sigma) == pytest.approx(dims.tau, rel=1e-10)
    assert np.trace((ip.Sigma - post.covariance) @ sigma_inv) == pytest.approx(dims.efd, rel=1e-10)
    s = ip.whitened_operator()
    ssh = s @ np.linalg.inv(np.eye(5) + s.T @ s) @ s.T
    assert np.trace(ssh) == pytest.approx(dims.efd, rel=1e-10)


def test_posterior_unit():
    post = inverse.posterior(LinearGaussianIP.diagonal([1.0], [1.0], [1.0]), [3.0])
    assert post.variance == pytest.approx([0.5])
    assert post.mean == pytest.approx([1.5])


def test_posterior_no_information():
    ip = LinearGaussianIP.dense(np.zeros((2, 2)), np.diag([2.0, 3.0]), np.eye(2))
    post = inverse.posterior(ip, [1.0, -1.0])
    assert np.allclose(post.mean, 0.0) and np.allclose(post.covariance, np.diag([2.0, 3.0]))


def test_posterior_dense_matches_diagonal():
    ip = LinearGaussianIP.diagonal([0.5, 2.0, 1.0], [1.0, 0.3, 2.0], [0.2, 1.0, 0.5])
    y = np.array([0.1, -1.0, 2.0])
    a, b = inverse.posterior(ip, y), inverse.posterior(ip.to_dense(), y)
    assert np.allclose(b.mean, a.mean, rtol=1e-12)
    assert np.allclose(b.covariance, np.diag(a.variance), rtol=1e-12)


def test_posterior_route_check_raises(monkeypatch):
    ip = LinearGaussianIP.diagonal([1.0], [1.0], [1.0])
    monkeypatch.setattr(inverse, "ROUTE_RTOL", -1.0)
    with pytest.raises(ConsistencyError):
        inverse.posterior(ip, [1.0])


def test_log_g_zero_forward_map():
    ip = LinearGaussianIP.diagonal([0.0, 0.0], [1.0, 1.0], [1.0, 1.0])
    assert np.all(inverse.log_g(ip, np.random.default_rng(0).standard_normal((5, 2)), [1.0, 2.0]) == 0.0)


@pytest.mark.parametrize("u, y", [(0.5, 1.0), (-2.0, 0.3), (1.0, 0.0)])
def test_log_g_unit(u, y):
    ip = LinearGaussianIP.diagonal([1.0], [1.0], [1.0])
    assert inverse.log_g(ip, [u], [y]) == pytest.approx(-(u**2) / 2 + y * u, rel=1e-15)
    assert inverse.log_g(ip.to_dense(), [u], [y]) == pytest.approx(-(u**2) / 2 + y * u, rel=1e-14)


def test_log_g_rho_mc_unit():
    ip = LinearGaussianIP.diagonal([1.0], [1.0], [1.0])
    est = sampler.rho_mc(ip.prior(), lambda u: inverse.log_g(ip, u, [0.0]), 10**6, seed=0)
    assert abs(est.rho - 2 / math.sqrt(3)) <= 3 * est.std_error


@pytest.mark.parametrize(
    "lam, z, expected",
    [
        ([0.0], [1.3], 0.0),
        ([1.0], [0.0], math.log(2 / math.sqrt(3))),
        ([1.0, 1.0, 1.0], [0.0, 0.0, 0.0], 3 * math.log(2 / math.sqrt(3))),
    ],
)
def test_rho_closed_form_values(lam, z, expected):
    assert inverse.rho_closed_form_diag(lam, z) == pytest.approx(expected, abs=1e-15)


def test_rho_closed_form_cascade_beta0():
    assert SpectralCascade(0.0, 1.0, 3).log_rho(np.zeros(3)) == pytest.approx(3 * math.log(2 / math.sqrt(3)), rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.0, 50.0), st.floats(-5.0, 5.0)), min_size=1, max_size=6))
def test_rho_closed_form_matches_gaussian_route(pairs):
    lam, z = map(np.array, zip(*pairs))
    ip = LinearGaussianIP.diagonal(np.sqrt(lam), np.ones(lam.size), np.ones(lam.size))
    post = inverse.posterior(ip, z)
    expected = measures.log_rho_gaussian(post, ip.prior())
    assert inverse.rho_closed_form_diag(lam, z) == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_dense_log_rho_matches_gaussian_route():
    rng = np.random.default_rng(2)
    for _ in range(10):
        ip = _random_dense(rng, 4, 6)
        y = rng.standard_normal(6)
        expected = measures.log_rho_gaussian(inverse.posterior(ip, y), ip.prior().to_dense())
        assert inverse.log_rho(ip, y) == pytest.approx(expected, rel=1e-9)


def test_rho_closed_form_shape_check():
    with pytest.raises(DimensionError):
        inverse.rho_closed_form_diag([1.0, 2.0], [0.0])


def test_generate_data_small_noise():
    c = SpectralCascade(1.0, 1e-12, 5, truth_coeffs=np.arange(5.0))
    assert np.allclose(inverse.generate_data(c, 7), np.arange(5.0), atol=1e-5)


def test_generate_data_variance():
    c = SpectralCascade(0.0, 1.0, 1)
    y = np.array([inverse.generate_data(c, s)[0] for s in range(10**5)])
    assert np.var(y, ddof=1) == pytest.approx(1.0, rel=0.02)


def test_generate_data_band():
    c = SpectralCascade(1.0, 1e-4, 3, truth_coeffs=[1.0, 0.0, 0.0])
    y1 = np.array([inverse.generate_data(c, s)[0] for s in range(10**4)])
    # a 4 sigma band; about 0.6 of 10^4 draws are expected outside it
    assert np.sum(np.abs(y1 - 1.0) >= 4e-2) <= 3
    assert np.all(np.abs(y1 - 1.0) < 5e-2)


def test_spectral_jump():
    rep = inverse.spectral_jump(2, 100.0)
    assert rep.efd == pytest.approx(200 / 101, rel=1e-14)
    assert rep.log_rho == pytest.approx(2 * math.log(101 / math.sqrt(201)), rel=1e-14)
    assert rep.kl_bound_holds
    assert rep.log_rho_heuristic == pytest.approx(0.5 * rep.efd * math.log(100))


def test_spectral_jump_large_c():
    assert inverse.spectral_jump(3, 1e12).efd == pytest.approx(3.0, rel=1e-11)


def test_spectral_jump_tail():
    base = inverse.spectral_jump(2, 100.0)
    tail = np.full(10, 1e-4)
    assert abs(inverse.spectral_jump(2, 100.0, tail).efd - base.efd) < 1e-3


def test_spectral_jump_warns_for_small_c():
    with pytest.warns(UserWarning):
        inverse.spectral_jump(1, 0.5)


def test_spectral_jump_with_mean_satisfies_kl_bound():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = inverse.spectral_jump(2, 50.0, [1e-3, 1e-4], m=[0.5, -0.2, 0.01, 0.0])
    assert rep.kl_bound_holds


@pytest.mark.parametrize("t, s, beta", [(0, 0, 0), (1, 0.5, 3), (0.25, 0.25, 1)])
def test_deconvolution_beta(t, s, beta):
    assert inverse.deconvolution_model(t, s, 4, 1.0).beta == beta


def test_deconvolution_consistency():
    c = inverse.deconvolution_model(0, 1, 64, 1e-2)
    assert c.intrinsic_dims().efd == inverse.intrinsic_dims(c.eigenvalues()).efd


def test_tail_corrected_dims_zeta():
    for beta in (1.2, 2.0, 3.0):
        tau, _ = inverse.tail_corrected_dims(beta, 1.0, 2**10)
        assert tau == pytest.approx(scipy.special.zeta(beta), rel=1e-10)


def test_tail_corrected_efd_against_long_sum():
    beta, gamma, d = 1.5, 0.5, 512
    j = np.arange(1, 2**22 + 1, dtype=float) ** -beta
    _, efd = inverse.tail_corrected_dims(beta, gamma, d)
    # reference: direct sum to 2^22 plus an integral tail
    ref = math.fsum((j / (gamma + j)).tolist()) + (2**22) ** (1 - beta) / ((beta - 1) * gamma)
    assert efd == pytest.approx(ref, rel=1e-6)


def test_expected_log_rho_tail_against_direct_sum():
    beta, gamma, d = 1.5, 1.0, 256
    j = np.arange(d + 1, 2**22 + 1, dtype=float)
    lam = j**-beta / gamma
    # E over z ~ N(0, 1 + lam) of the closed-form terms
    terms = np.log1p(lam) - 0.5 * np.log1p(2 * lam) + lam * (1 + lam) / ((1 + 2 * lam) * (1 + lam))
    beyond = (2**22) ** (1 - beta) / ((beta - 1) * gamma)  # sum of lam past 2^22, leading order
    ref = math.fsum(terms.tolist()) + beyond
    assert inverse.expected_log_rho_tail(beta, gamma, d) == pytest.approx(ref, rel=1e-4)


def test_sweep_small_noise_fixed_d():
    rep = inverse.sweep_table1("small_noise_fixed_d", {"gamma": [1e-2, 1e-3, 1e-4, 1e-5], "d": 4}, seed=0)
    assert rep.fit_log_rho.slope == pytest.approx(2.0, rel=0.1)
    assert rep.fit_tau.slope == pytest.approx(1.0, rel=1e-9)


def test_sweep_large_d():
    rep = inverse.sweep_table1("large_d", {"d": [2**k for k in range(7, 12)], "beta": 0.5}, seed=0)
    assert rep.fit_log_rho.r2 >= 0.95
    assert rep.fit_tau.slope == pytest.approx(0.5, abs=0.05)


def test_sweep_regularity():
    rep = inverse.sweep_table1("regularity", {"beta": [1.05, 1.1, 1.2, 1.3, 1.5]}, seed=0)
    assert all(r.converged for r in rep.rows)
    assert rep.rows[0].tau * 0.05 == pytest.approx(1.0, rel=0.15)
    assert rep.fit_tau.slope == pytest.approx(1.0, rel=0.15)


def test_sweep_joint_and_infinite_noise():
    rep = inverse.sweep_table1("joint", {"d": [16, 32, 64, 128], "alpha": 1.0, "beta": 0.0}, seed=0)
    assert rep.log_rho_fit_axis == "d log d"
    assert rep.fit_log_rho.r2 > 0.9
    rep = inverse.sweep_table1("small_noise_infinite_d", {"gamma": [1e-1, 1e-2, 1e-3], "beta": 2.0}, seed=0, d_max=2**10)
    assert rep.fit_efd.slope == pytest.approx(0.5, abs=0.1)


def test_sweep_needs_three_points():
    with pytest.raises(ValueError):
        inverse.sweep_table1("large_d", {"d": [4, 8], "beta": 0.5}, seed=0)


def test_sweep_deterministic():
    grid = {"d": [8, 16, 32], "beta": 0.5}
    a = inverse.sweep_table1("large_d", grid, seed=11)
    b = inverse.sweep_table1("large_d", grid, seed=11)
    assert a.rows == b.rows

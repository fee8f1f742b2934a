"""Linear-Gaussian inverse problems y = K u + eta, u ~ N(0, Sigma), eta ~ N(0, Gamma).

The operator ``A = S* S`` with ``S = Gamma^{-1/2} K Sigma^{1/2}`` controls how
far the posterior moves from the prior. Its trace ``tau`` and
``efd = Tr((I + A)^{-1} A)`` are the two intrinsic dimensions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import scipy.linalg

from isdim import measures, rng
from isdim.errors import (
    ConsistencyError,
    DefinitenessError,
    DegenerateFitError,
    DimensionError,
    IllConditionedError,
)
from isdim.measures import DenseGaussian, DiagonalGaussian
from isdim.scaling import LinearFit, fit_line, fit_loglog

MAX_NOISE_CONDITION = 1e12
PSD_RTOL = 1e-10
ROUTE_RTOL = 1e-8
D_MAX = 2**14
CONVERGENCE_RTOL = 5e-3
FLUSH_FACTOR = 1e-300
IN_PROBABILITY_SEEDS = 32


def _sym_sqrt(m: np.ndarray, inverse: bool = False) -> np.ndarray:
    evals, evecs = np.linalg.eigh(m)
    p = -0.5 if inverse else 0.5
    return (evecs * evals**p) @ evecs.T


def _check_spd(m: np.ndarray, name: str) -> np.ndarray:
    m = np.array(np.atleast_2d(m), dtype=float)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got {m.shape}")
    scale = max(np.max(np.abs(m)), np.finfo(float).tiny)
    if np.max(np.abs(m - m.T)) > measures.SYMMETRY_RTOL * scale:
        raise DefinitenessError(f"{name} is not symmetric")
    m = 0.5 * (m + m.T)
    if np.linalg.eigvalsh(m)[0] <= 0:
        raise DefinitenessError(f"{name} is not positive definite")
    return m


@dataclass(frozen=True)
class LinearGaussianIP:
    """A linear inverse problem in diagonal or dense form.

    In diagonal form ``K``, ``Sigma`` and ``Gamma`` are vectors of equal
    length (per-coordinate multiplier and variances). In dense form they are
    matrices of shapes ``(d_y, d_u)``, ``(d_u, d_u)`` and ``(d_y, d_y)``.
    """

    form: Literal["diagonal", "dense"]
    K: np.ndarray
    Sigma: np.ndarray
    Gamma: np.ndarray

    def __post_init__(self):
        if self.form == "diagonal":
            K, Sigma, Gamma = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (self.K, self.Sigma, self.Gamma))
            if not (K.ndim == Sigma.ndim == Gamma.ndim == 1 and K.shape == Sigma.shape == Gamma.shape):
                raise DimensionError("diagonal K, Sigma and Gamma must be vectors of equal length")
            if np.any(Sigma <= 0) or np.any(Gamma <= 0) or not np.all(np.isfinite(np.r_[Sigma, Gamma])):
                raise DefinitenessError("prior and noise variances must be strictly positive")
        elif self.form == "dense":
            K = np.array(np.atleast_2d(self.K), dtype=float)
            Sigma = _check_spd(self.Sigma, "Sigma")
            Gamma = _check_spd(self.Gamma, "Gamma")
            if K.shape != (Gamma.shape[0], Sigma.shape[0]):
                raise DimensionError(f"K has shape {K.shape}, expected {(Gamma.shape[0], Sigma.shape[0])}")
        else:
            raise ValueError(f"form must be 'diagonal' or 'dense', got {self.form!r}")
        for a in (K, Sigma, Gamma):
            a.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "Gamma", Gamma)

    @classmethod
    def diagonal(cls, K, Sigma, Gamma) -> LinearGaussianIP:
        return cls("diagonal", K, Sigma, Gamma)

    @classmethod
    def dense(cls, K, Sigma, Gamma) -> LinearGaussianIP:
        return cls("dense", K, Sigma, Gamma)

    @property
    def d_u(self) -> int:
        return self.Sigma.shape[0]

    @property
    def d_y(self) -> int:
        return self.Gamma.shape[0]

    def to_dense(self) -> LinearGaussianIP:
        if self.form == "dense":
            return self
        return LinearGaussianIP.dense(np.diag(self.K), np.diag(self.Sigma), np.diag(self.Gamma))

    def prior(self) -> DiagonalGaussian | DenseGaussian:
        if self.form == "diagonal":
            return DiagonalGaussian(np.zeros(self.d_u), self.Sigma)
        return DenseGaussian(np.zeros(self.d_u), self.Sigma)

    def _noise_whitener(self) -> np.ndarray:
        evals = np.linalg.eigvalsh(self.Gamma)
        if evals[-1] / evals[0] > MAX_NOISE_CONDITION:
            raise IllConditionedError(f"noise covariance condition number {evals[-1] / evals[0]:.3e} exceeds 1e12")
        return _sym_sqrt(self.Gamma, inverse=True)

    def whitened_operator(self) -> np.ndarray:
        """S = Gamma^{-1/2} K Sigma^{1/2} (dense form only)."""
        return self._noise_whitener() @ self.K @ _sym_sqrt(self.Sigma)


def operator_a(ip: LinearGaussianIP) -> np.ndarray:
    """Eigenvalues of A in non-increasing order (diagonal form), or the
    symmetric matrix Sigma^{1/2} K* Gamma^{-1} K Sigma^{1/2} (dense form)."""
    if ip.form == "diagonal":
        gmax, gmin = np.max(ip.Gamma), np.min(ip.Gamma)
        if gmax / gmin > MAX_NOISE_CONDITION:
            raise IllConditionedError(f"noise covariance condition number {gmax / gmin:.3e} exceeds 1e12")
        return np.sort(ip.K**2 * ip.Sigma / ip.Gamma)[::-1]
    s = ip.whitened_operator()
    a = s.T @ s
    a = 0.5 * (a + a.T)
    evals = np.linalg.eigvalsh(a)
    if evals[0] < -PSD_RTOL * max(evals[-1], 1.0):
        raise ConsistencyError(f"A is not positive semidefinite (eigenvalue {evals[0]:.3e})")
    return a


def a_spectrum(a) -> np.ndarray:
    """Eigenvalues (non-increasing, rounding negatives clipped to 0) of a
    spectrum vector or symmetric matrix."""
    a = np.asarray(a, dtype=float)
    lam = np.linalg.eigvalsh(0.5 * (a + a.T)) if a.ndim == 2 else a.copy()
    if np.any(lam < -PSD_RTOL * max(float(np.max(lam, initial=0.0)), 1.0)):
        raise ValueError("A must be positive semidefinite")
    return np.sort(np.clip(lam, 0.0, None))[::-1]


@dataclass(frozen=True)
class IntrinsicDims:
    tau: float
    efd: float
    a_spectrum: np.ndarray = field(repr=False)


def intrinsic_dims(a) -> IntrinsicDims:
    """tau = sum(lambda), efd = sum(lambda / (1 + lambda))."""
    lam = a_spectrum(a)
    lam.setflags(write=False)
    return IntrinsicDims(math.fsum(lam.tolist()), math.fsum((lam / (1.0 + lam)).tolist()), lam)


def _rel_close(a: np.ndarray, b: np.ndarray, rtol: float) -> bool:
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b))) <= rtol * scale


def posterior(ip: LinearGaussianIP, y) -> DiagonalGaussian | DenseGaussian:
    """Posterior N(m, C), computed through the covariance (gain) formulas
    and through the precision formulas; the two must agree to 1e-8.

    Raises:
        ConsistencyError: if the two routes disagree.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (ip.d_y,):
        raise DimensionError(f"data has length {y.shape[0]}, expected {ip.d_y}")
    if ip.form == "diagonal":
        k, s, g = ip.K, ip.Sigma, ip.Gamma
        gain = s * k / (k * k * s + g)
        c1, m1 = s - gain * k * s, gain * y
        prec = 1 / s + k * k / g
        c2, m2 = 1 / prec, (k * y / g) / prec
        if not (_rel_close(c1, c2, ROUTE_RTOL) and _rel_close(m1, m2, ROUTE_RTOL)):
            raise ConsistencyError("covariance and precision routes disagree")
        return DiagonalGaussian(m1, c1)

    K, S, G = ip.K, ip.Sigma, ip.Gamma
    try:
        innov = K @ S @ K.T + G
        gain = scipy.linalg.solve(innov, K @ S, assume_a="pos").T
        c1 = S - gain @ K @ S
        m1 = gain @ y
        prec = scipy.linalg.inv(S) + K.T @ scipy.linalg.solve(G, K, assume_a="pos")
        prec = 0.5 * (prec + prec.T)
        c2 = scipy.linalg.inv(prec)
        m2 = scipy.linalg.solve(prec, K.T @ scipy.linalg.solve(G, y, assume_a="pos"), assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(f"posterior solve failed: {exc}") from exc
    c1 = 0.5 * (c1 + c1.T)
    c2 = 0.5 * (c2 + c2.T)
    if not (_rel_close(c1, c2, ROUTE_RTOL) and _rel_close(m1, m2, ROUTE_RTOL)):
        raise ConsistencyError("covariance and precision routes disagree")
    return DenseGaussian(m1, c1)


def log_g(ip: LinearGaussianIP, u, y) -> np.ndarray:
    """Unnormalized log density of the posterior with respect to the prior,
    -|Gamma^{-1/2} K u|^2 / 2 + <Gamma^{-1/2} y, Gamma^{-1/2} K u>.

    ``u`` may be a single state or an ``(n, d_u)`` batch.
    """
    u = np.asarray(u, dtype=float)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    single = u.ndim == 1
    u = np.atleast_2d(u)
    if u.shape[1] != ip.d_u or y.shape != (ip.d_y,):
        raise DimensionError("state or data dimension does not match the problem")
    if ip.form == "diagonal":
        ku = u * ip.K
        out = np.sum(-0.5 * ku**2 / ip.Gamma + ku * (y / ip.Gamma), axis=1)
    else:
        ku = u @ ip.K.T
        gi_ku = scipy.linalg.solve(ip.Gamma, ku.T, assume_a="pos").T
        out = -0.5 * np.sum(ku * gi_ku, axis=1) + gi_ku @ y
    return out[0] if single else out


def whitened_spectrum(ip: LinearGaussianIP, y) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of A and the whitened data along the matching directions.

    In these coordinates the problem decouples into independent scalar
    problems, which is what the closed form for rho needs.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if ip.form == "diagonal":
        lam = ip.K**2 * ip.Sigma / ip.Gamma
        z = y / np.sqrt(ip.Gamma)
        order = np.argsort(-lam, kind="stable")
        return lam[order], z[order]
    s = ip.whitened_operator()
    u, sv, _ = np.linalg.svd(s, full_matrices=False)
    return sv**2, u.T @ (ip._noise_whitener() @ y)


def rho_closed_form_diag(a_spectrum, z) -> float:
    """log rho for a decoupled problem with A-eigenvalues ``lambda`` and
    whitened data ``z``:

        sum_j log(1 + l_j) - log(1 + 2 l_j) / 2 + l_j z_j^2 / ((1 + 2 l_j)(1 + l_j))
    """
    lam = np.asarray(a_spectrum, dtype=float)
    z = np.asarray(z, dtype=float)
    if lam.shape != z.shape:
        raise DimensionError(f"{lam.shape[0]} eigenvalues but {z.shape[0]} data coordinates")
    if np.any(lam < 0):
        raise ValueError("eigenvalues must be nonnegative")
    terms = np.log1p(lam) - 0.5 * np.log1p(2 * lam) + lam * z**2 / ((1 + 2 * lam) * (1 + lam))
    return float(np.sum(terms))


def log_rho(ip: LinearGaussianIP, y) -> float:
    return rho_closed_form_diag(*whitened_spectrum(ip, y))


# Spectral cascade -------------------------------------------------------------


@dataclass(frozen=True)
class SpectralCascade:
    """Diagonal problem whose A has eigenvalues j^-beta / gamma, j = 1..d.

    Coordinates are those of K u in the eigenbasis: the prior variance of
    coordinate j is j^-beta and the noise is N(0, gamma I). ``truth_coeffs``
    are the coordinates of K u_true used to generate data.
    """

    beta: float
    gamma: float
    d: int
    truth_coeffs: np.ndarray = None

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        truth = np.zeros(self.d) if self.truth_coeffs is None else np.array(self.truth_coeffs, dtype=float)
        if truth.shape != (self.d,):
            raise DimensionError(f"truth has length {truth.shape[0]}, expected d={self.d}")
        truth.setflags(write=False)
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "truth_coeffs", truth)

    def eigenvalues(self) -> np.ndarray:
        j = np.arange(1, self.d + 1, dtype=float)
        lam = j ** (-self.beta) / self.gamma
        lam[lam < FLUSH_FACTOR * self.gamma] = 0.0
        return lam

    def prior_variances(self) -> np.ndarray:
        return np.arange(1, self.d + 1, dtype=float) ** (-self.beta)

    def as_ip(self) -> LinearGaussianIP:
        return LinearGaussianIP.diagonal(np.ones(self.d), self.prior_variances(), np.full(self.d, self.gamma))

    def whiten(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float) / math.sqrt(self.gamma)

    def log_rho(self, y) -> float:
        return rho_closed_form_diag(self.eigenvalues(), self.whiten(y))

    def intrinsic_dims(self) -> IntrinsicDims:
        return intrinsic_dims(self.eigenvalues())


def generate_data(c: SpectralCascade, seed: int) -> np.ndarray:
    """y_j = truth_j + sqrt(gamma) xi_j with xi standard normal."""
    xi = rng.generator(seed).standard_normal(c.d)
    return c.truth_coeffs + math.sqrt(c.gamma) * xi


def deconvolution_model(t: float, s: float, d: int, gamma: float, truth=None) -> SpectralCascade:
    """Periodic deconvolution in Fourier coordinates.

    A kernel with Fourier coefficients ~ j^-t and a prior (-Laplacian)^-s
    give A-eigenvalues ~ j^-(2t + 2s) / gamma. ``t = 0`` is direct
    observation; ``s = 0`` is a white prior.
    """
    if t < 0 or s < 0:
        raise ValueError("blur order t and prior smoothness s must be nonnegative")
    return SpectralCascade(2 * t + 2 * s, gamma, d, truth)


TAIL_MAX_LAMBDA = 0.25


def _power_sum_tail(k: int, beta: float, d: int) -> float:
    """Euler-Maclaurin estimate of sum_{j > d} j^(-beta k)."""
    e = beta * k
    return d ** (1 - e) / (e - 1) - 0.5 * d ** (-e) + e * d ** (-e - 1) / 12


def _series_tail(coeff, beta: float, gamma: float, d: int) -> float:
    """sum_{j > d} f(j^-beta / gamma) for f(l) = sum_k coeff(k) l^k."""
    lam_d = d ** (-beta) / gamma
    total, k = 0.0, 1
    while k <= 200:
        term = coeff(k) * gamma ** (-k) * _power_sum_tail(k, beta, d)
        total += term
        if abs(coeff(k)) * lam_d**k * d < 1e-17 * max(abs(total), 1e-300):
            break
        k += 1
    return total


# power-series coefficients in lambda of the per-mode summands
_TAU_COEFF = lambda k: 1.0 if k == 1 else 0.0
_EFD_COEFF = lambda k: (-1.0) ** (k + 1)
# log(1 + l) - log(1 + 2 l) / 2 + E[z^2] l / ((1 + 2 l)(1 + l)) with E[z^2] = 1
_LOG_RHO_COEFF = lambda k: (-1.0) ** (k + 1) * (1 - 2.0 ** (k - 1)) / k + (-1.0) ** (k - 1) * (2.0**k - 1)


def tail_corrected_dims(beta: float, gamma: float, d: int) -> tuple[float, float]:
    """(tau, efd) of the d = infinity cascade: explicit sum to ``d`` plus an
    Euler-Maclaurin remainder. Requires beta > 1."""
    if not beta > 1:
        raise ValueError(f"tau is infinite for beta <= 1 (got beta={beta})")
    dims = SpectralCascade(beta, gamma, d).intrinsic_dims()
    if d ** (-beta) / gamma > TAIL_MAX_LAMBDA:
        raise ValueError("truncation too short for the tail expansion")
    return (
        dims.tau + _series_tail(_TAU_COEFF, beta, gamma, d),
        dims.efd + _series_tail(_EFD_COEFF, beta, gamma, d),
    )


def expected_log_rho_tail(beta: float, gamma: float, d: int) -> float:
    """Expected contribution of modes j > d to log rho under zero truth
    (whitened data z_j standard normal)."""
    if d ** (-beta) / gamma > TAIL_MAX_LAMBDA:
        raise ValueError("truncation too short for the tail expansion")
    return _series_tail(_LOG_RHO_COEFF, beta, gamma, d)


@dataclass(frozen=True)
class SpectralJumpReport:
    tau: float
    efd: float
    kl: float
    log_rho: float
    log_rho_heuristic: float  # (efd / 2) log C

    @property
    def kl_bound_holds(self) -> bool:
        """exp(KL) <= rho, the exact inequality."""
        return self.kl <= self.log_rho * (1 + 1e-12) + 1e-300

    @property
    def heuristic_ratio(self) -> float:
        """log rho over (efd / 2) log C; the slack hidden in rho >~ C^(efd/2)."""
        return self.log_rho / self.log_rho_heuristic if self.log_rho_heuristic else math.nan


def spectral_jump(k: int, C: float, tail=(), m=None) -> SpectralJumpReport:
    """``k`` eigenvalues equal to ``C`` plus small ``tail`` eigenvalues, in
    whitened coordinates (prior N(0, I)) with posterior mean ``m``."""
    tail = np.asarray(tail, dtype=float).ravel()
    lam = np.r_[np.full(k, float(C)), tail]
    if C <= 1 or np.sum(tail) >= 1:
        warnings.warn("spectral jump expects C >> 1 and a tail summing to << 1", stacklevel=2)
    m = np.zeros(lam.size) if m is None else np.asarray(m, dtype=float)
    if m.shape != lam.shape:
        raise DimensionError(f"mean has length {m.shape[0]}, expected {lam.size}")
    if np.any((lam == 0) & (m != 0)):
        raise ValueError("posterior mean must vanish where A has a zero eigenvalue")
    # posterior mean sqrt(l) z / (1 + l) in whitened coordinates
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(lam > 0, m * (1 + lam) / np.sqrt(lam), 0.0)
    dims = intrinsic_dims(lam)
    kl = measures.kl_posterior_prior(lam, m, DiagonalGaussian.standard(lam.size))
    return SpectralJumpReport(dims.tau, dims.efd, kl, rho_closed_form_diag(lam, z), 0.5 * dims.efd * math.log(C))


# Table 1 sweeps ------------------------------------------------------------------

Regime = Literal["small_noise_fixed_d", "small_noise_infinite_d", "large_d", "joint", "regularity"]
REGIMES = ("small_noise_fixed_d", "small_noise_infinite_d", "large_d", "joint", "regularity")


@dataclass(frozen=True)
class Table1Row:
    regime: str
    parameter: str
    value: float
    beta: float
    gamma: float
    d: int
    tau: float
    efd: float
    log_rho_median: float
    log_rho_q25: float
    log_rho_q75: float
    converged: bool = True


@dataclass(frozen=True)
class Table1Report:
    regime: str
    rows: list[Table1Row]
    fit_tau: LinearFit
    fit_efd: LinearFit | None
    fit_log_rho: LinearFit
    log_rho_fit_axis: str
    n_seeds: int


def _quartiles(values) -> tuple[float, float, float]:
    q25, med, q75 = np.quantile(np.asarray(values, dtype=float), [0.25, 0.5, 0.75])
    return float(med), float(q25), float(q75)


def _data_xi(seed: int, index: int, length: int, n_seeds: int) -> np.ndarray:
    """Standard normal noise vectors, one per data seed. Shorter truncations
    use a prefix, i.e. the projection of the same data onto fewer modes."""
    return np.stack([rng.generator(seed, index, k).standard_normal(length) for k in range(n_seeds)])


def _infinite_surrogate(beta, gamma, d, xi):
    """tau, efd and per-seed log rho of the d = infinity cascade from a
    truncation at ``d`` plus remainders (expected remainder for log rho).
    Without a valid remainder expansion the bare truncation is returned."""
    cascade = SpectralCascade(beta, gamma, d)
    logs = np.array([cascade.log_rho(math.sqrt(gamma) * x[:d]) for x in xi])
    try:
        tau, efd = tail_corrected_dims(beta, gamma, d)
        logs = logs + expected_log_rho_tail(beta, gamma, d)
    except ValueError:
        dims = cascade.intrinsic_dims()
        tau, efd = dims.tau, dims.efd
    return tau, efd, logs


def sweep_table1(
    regime: Regime,
    grid: dict,
    seed: int,
    n_seeds: int | None = None,
    d_max: int = D_MAX,
) -> Table1Report:
    """Scaling of tau, efd and log rho for the spectral cascade in one regime.

    ``grid`` keys by regime (scalars or lists):

    - small_noise_fixed_d: gamma (list), d, beta (default 1)
    - small_noise_infinite_d: gamma (list), beta (> 1); d = ``d_max``
    - large_d: d (list), beta (< 1), gamma (default 1)
    - joint: d (list), alpha, beta; gamma = d^-alpha
    - regularity: beta (list, > 1), gamma (default 1); d = ``d_max``

    Data come from a zero truth. Regimes where gamma -> 0 use a single
    fixed dataset; the others report the median and quartiles of log rho
    over ``n_seeds`` datasets (default 32).
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    in_probability = regime in ("large_d", "regularity")
    if n_seeds is None:
        n_seeds = IN_PROBABILITY_SEEDS if in_probability else 1

    def listed(key):
        v = grid.get(key)
        if v is None:
            raise ValueError(f"regime {regime} needs grid values for '{key}'")
        return [float(x) for x in np.atleast_1d(v)]

    def scalar(key, default=None):
        v = grid.get(key, default)
        if v is None:
            raise ValueError(f"regime {regime} needs a value for '{key}'")
        return float(np.asarray(v).item())

    points: list[tuple[str, float, float, float, int]] = []  # (param, value, beta, gamma, d)
    if regime == "small_noise_fixed_d":
        beta, d = scalar("beta", 1.0), int(scalar("d"))
        points = [("gamma", g, beta, g, d) for g in listed("gamma")]
    elif regime == "small_noise_infinite_d":
        beta = scalar("beta")
        if beta <= 1:
            raise ValueError("d = infinity needs beta > 1")
        points = [("gamma", g, beta, g, d_max) for g in listed("gamma")]
    elif regime == "large_d":
        beta, gamma = scalar("beta"), scalar("gamma", 1.0)
        points = [("d", d, beta, gamma, int(d)) for d in listed("d")]
    elif regime == "joint":
        beta, alpha = scalar("beta"), scalar("alpha")
        points = [("d", d, beta, d ** (-alpha), int(d)) for d in listed("d")]
    else:
        gamma = scalar("gamma", 1.0)
        betas = listed("beta")
        if any(b <= 1 for b in betas):
            raise ValueError("regularity regime needs beta > 1")
        points = [("beta", b, b, gamma, d_max) for b in betas]
    if len(points) < 3:
        raise DegenerateFitError(f"need at least 3 grid points, got {len(points)}")

    infinite = regime in ("regularity", "small_noise_infinite_d")
    length = max(p[4] for p in points) * (2 if infinite else 1)
    # one dataset per seed, shared across the grid: each grid point sees a
    # prefix (projection) of the same infinite data vector
    xi = _data_xi(seed, 0, length, n_seeds)
    rows = []
    for param, value, beta, gamma, d in points:
        if infinite:
            tau, efd, logs = _infinite_surrogate(beta, gamma, d, xi)
            tau2, efd2, logs2 = _infinite_surrogate(beta, gamma, 2 * d, xi)
            pairs = [(tau, tau2), (efd, efd2), (float(np.median(logs)), float(np.median(logs2)))]
            converged = all(abs(a - b) <= CONVERGENCE_RTOL * abs(b) for a, b in pairs)
        else:
            cascade = SpectralCascade(beta, gamma, d)
            dims = cascade.intrinsic_dims()
            tau, efd = dims.tau, dims.efd
            logs = [cascade.log_rho(math.sqrt(gamma) * x[:d]) for x in xi]
            converged = True
        med, q25, q75 = _quartiles(logs)
        rows.append(Table1Row(regime, param, value, beta, gamma, d, tau, efd, med, q25, q75, converged))

    tau = np.array([r.tau for r in rows])
    efd = np.array([r.efd for r in rows])
    lr = np.array([r.log_rho_median for r in rows])
    if regime in ("small_noise_fixed_d", "small_noise_infinite_d"):
        x = np.array([1 / r.gamma for r in rows])
        axis, xr = "log(1/gamma)", np.log(x)
    elif regime == "large_d":
        x = np.array([r.d for r in rows], dtype=float)
        axis, xr = f"d^{1 - rows[0].beta:g}", x ** (1 - rows[0].beta)
    elif regime == "joint":
        x = np.array([r.d for r in rows], dtype=float)
        axis, xr = "d log d", x * np.log(x)
    else:
        x = np.array([1 / (r.beta - 1) for r in rows])
        axis, xr = "1/(beta-1)", x
    fit_tau = fit_loglog(x, tau)
    fit_efd = fit_loglog(x, efd) if np.ptp(efd) > 1e-12 * np.max(efd) else None
    return Table1Report(regime, rows, fit_tau, fit_efd, fit_line(xr, lr), axis, n_seeds)

"""Autonormalized importance sampling and its cost diagnostics.

Weights live in the log domain throughout. The second moment of the
target/proposal density is estimated as

    log rho = logsumexp(2 l) - 2 logsumexp(l) + log n

for log weights ``l``, which stays finite when the raw weights would
overflow or underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
import scipy.integrate
import scipy.special
from scipy.stats import norm

from isdim import measures, parallel, rng
from isdim.errors import DegenerateWeightsError, DimensionError, NoOracleError, NotApplicableError
from isdim.measures import DenseGaussian, DiagonalGaussian, Gaussian, ScalarPotential
from isdim.scaling import LinearFit, fit_line

JACKKNIFE_BLOCKS = 100
REPLICATION_CHUNK = 250

LogDensity = Callable[[np.ndarray], np.ndarray]
ProposalSampler = Callable[[int, np.random.Generator], np.ndarray]


def normalize(log_unnorm_weights) -> np.ndarray:
    """Normalized weights from unnormalized log weights."""
    lw = np.asarray(log_unnorm_weights, dtype=float)
    if lw.ndim != 1 or lw.size == 0:
        raise ValueError("log weights must be a nonempty vector")
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise ValueError("log weights must be finite or -inf")
    if np.all(lw == -np.inf):
        raise DegenerateWeightsError("all log weights are -inf")
    return np.exp(lw - scipy.special.logsumexp(lw))


@dataclass(frozen=True)
class WeightedEnsemble:
    """Particles with their log weights and normalized weights."""

    points: np.ndarray
    log_unnorm_weights: np.ndarray
    norm_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        lw = np.asarray(self.log_unnorm_weights, dtype=float)
        if points.ndim != 2 or lw.shape != (points.shape[0],):
            raise DimensionError(f"{lw.shape} log weights for {points.shape[0]} points")
        w = normalize(lw)
        for a in (points, lw, w):
            a.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "log_unnorm_weights", lw)
        object.__setattr__(self, "norm_weights", w)

    @classmethod
    def from_proposal(cls, proposal: Gaussian, log_g: LogDensity, n: int, seed: int) -> WeightedEnsemble:
        pts = measures.sample(proposal, n, seed)
        return cls(pts, log_g(pts))

    @property
    def n(self) -> int:
        return self.points.shape[0]


def autonormalized_estimate(e: WeightedEnsemble, phi: Callable[[np.ndarray], np.ndarray]) -> float:
    """sum_n w_n phi(u_n); ``phi`` maps an (n, dim) array to n values."""
    values = np.broadcast_to(np.asarray(phi(e.points), dtype=float), (e.n,))
    return float(e.norm_weights @ values)


def ess(e: WeightedEnsemble) -> float:
    """Effective sample size 1 / sum_n w_n**2, in [1, n]."""
    lw = e.log_unnorm_weights
    return float(np.exp(2 * scipy.special.logsumexp(lw) - scipy.special.logsumexp(2 * lw)))


@dataclass(frozen=True)
class RhoEstimate:
    """Monte Carlo estimate of rho with a jackknife standard error."""

    rho: float
    std_error: float
    n: int

    @property
    def log_rho(self) -> float:
        return math.log(self.rho)


def rho_from_log_weights(log_weights, blocks: int = JACKKNIFE_BLOCKS) -> RhoEstimate:
    """Estimate rho = pi(g^2) / pi(g)^2 from log weights of i.i.d. proposal draws.

    The standard error is a delete-one-block jackknife over ``blocks``
    contiguous blocks.
    """
    lw = np.asarray(log_weights, dtype=float)
    n = lw.size
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    if np.all(lw == -np.inf):
        raise DegenerateWeightsError("all log weights are -inf")
    log_rho = scipy.special.logsumexp(2 * lw) - 2 * scipy.special.logsumexp(lw) + math.log(n)
    rho = math.exp(log_rho)

    nb = min(blocks, n)
    shift = np.max(lw)
    w = np.exp(lw - shift)
    idx = np.array_split(np.arange(n), nb)
    s1 = np.array([w[i].sum() for i in idx])
    s2 = np.array([(w[i] ** 2).sum() for i in idx])
    sizes = np.array([i.size for i in idx], dtype=float)
    t1, t2 = s1.sum(), s2.sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        loo = (n - sizes) * (t2 - s2) / (t1 - s1) ** 2
    loo = loo[np.isfinite(loo)]
    if loo.size < 2:
        se = math.inf
    else:
        k = loo.size
        se = math.sqrt((k - 1) / k * float(np.sum((loo - loo.mean()) ** 2)))
    return RhoEstimate(rho, se, n)


def rho_mc(
    proposal: Union[Gaussian, ProposalSampler],
    log_g: LogDensity,
    n: int,
    seed: int,
    blocks: int = JACKKNIFE_BLOCKS,
) -> RhoEstimate:
    """Monte Carlo estimate of rho using ``n`` draws from ``proposal``.

    ``proposal`` is either a Gaussian measure or a callable ``(n, generator)``
    returning an ``(n, dim)`` array of draws.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    gen = rng.generator(seed)
    if isinstance(proposal, (DiagonalGaussian, DenseGaussian)):
        pts = measures.sample_with(proposal, n, gen)
    else:
        pts = np.asarray(proposal(n, gen), dtype=float)
    return rho_from_log_weights(log_g(pts), blocks)


# Bound verification --------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """A scalar test function of the first coordinate.

    ``exact(mean, var)`` returns its expectation under N(mean, var), or is
    None when no closed form is available.
    """

    __test__ = False  # not a pytest class

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    exact: Callable[[float, float], float] | None = None
    bounded: bool = True

    def __call__(self, u):
        return self.fn(u)


def _tanh_mean(mean, var):
    x, w = np.polynomial.hermite_e.hermegauss(200)
    return float(w @ np.tanh(mean + math.sqrt(var) * x) / math.sqrt(2 * math.pi))


def _clip_mean(mean, var):
    sd = math.sqrt(var)
    a, b = (-1 - mean) / sd, (1 - mean) / sd
    inner = mean * (norm.cdf(b) - norm.cdf(a)) + sd * (norm.pdf(a) - norm.pdf(b))
    return float(-norm.cdf(a) + norm.sf(b) + inner)


BOUNDED_FAMILY = (
    TestFunction("tanh", np.tanh, _tanh_mean),
    TestFunction("sin", np.sin, lambda m, v: math.sin(m) * math.exp(-v / 2)),
    TestFunction("clip", lambda u: np.clip(u, -1.0, 1.0), _clip_mean),
    TestFunction(
        "sign",
        lambda u: np.where(np.asarray(u) > 0, 1.0, -1.0),
        lambda m, v: 2 * norm.cdf(m / math.sqrt(v)) - 1,
    ),
)
IDENTITY = TestFunction("identity", lambda u: np.asarray(u, dtype=float), lambda m, v: float(m), bounded=False)


@dataclass(frozen=True)
class GaussianISModel:
    """Importance sampling a Gaussian target with a Gaussian proposal.

    The density g = d(target)/d(proposal) is normalized, so pi(g) = 1.
    """

    name: str
    proposal: Gaussian
    target: Gaussian

    def log_g(self, u) -> np.ndarray:
        return measures.log_density(self.target, u) - measures.log_density(self.proposal, u)

    @property
    def log_rho(self) -> float:
        return measures.log_rho_gaussian(self.target, self.proposal)

    @property
    def rho(self) -> float:
        return math.exp(self.log_rho)

    def exact_mean(self, phi: TestFunction) -> float:
        if phi.exact is None:
            raise NoOracleError(f"no closed-form target expectation for test function '{phi.name}'")
        return float(phi.exact(float(self.target.mean[0]), float(self.target.variance[0])))


def gaussian_shift(m: float, dim: int = 1) -> GaussianISModel:
    """Target N(m 1, I) sampled with proposal N(0, I); rho = exp(dim m^2)."""
    return GaussianISModel(
        f"shift(m={m:g},d={dim})",
        DiagonalGaussian(np.zeros(dim), np.ones(dim)),
        DiagonalGaussian(np.full(dim, float(m)), np.ones(dim)),
    )


@dataclass(frozen=True)
class BoundReport:
    phi: str
    empirical_bias: float
    empirical_mse: float
    rho: float
    n_particles: int
    replications: int
    std_error_bias: float
    std_error_mse: float

    @property
    def bias_bound(self) -> float:
        return 12.0 * self.rho / self.n_particles

    @property
    def mse_bound(self) -> float:
        return 4.0 * self.rho / self.n_particles

    @property
    def mse_within_bound(self) -> bool:
        return self.empirical_mse <= self.mse_bound + 3.0 * self.std_error_mse

    @property
    def bias_within_bound(self) -> bool:
        return abs(self.empirical_bias) <= self.bias_bound + 3.0 * self.std_error_bias


def _fsum_mean(x: np.ndarray) -> float:
    return math.fsum(x.tolist()) / x.size


def _mean_and_se(x: np.ndarray) -> tuple[float, float]:
    mean = _fsum_mean(x)
    var = math.fsum(((x - mean) ** 2).tolist()) / (x.size - 1)
    return mean, math.sqrt(var / x.size)


def estimate_errors(
    model: GaussianISModel,
    phis: Sequence[TestFunction],
    n: int,
    replications: int,
    seed: int,
    threads: int | None = None,
) -> np.ndarray:
    """Errors mu^N(phi) - mu(phi) over independent replications.

    Returns an array of shape ``(len(phis), replications)``. Replications are
    generated in fixed chunks with one derived stream per chunk, so the
    result does not depend on ``threads``.
    """
    exact = np.array([model.exact_mean(phi) for phi in phis])
    dim = model.proposal.dim
    chunks = [(c, min(REPLICATION_CHUNK, replications - start)) for c, start in enumerate(range(0, replications, REPLICATION_CHUNK))]

    def run(chunk):
        c, k = chunk
        gen = rng.generator(seed, c)
        pts = measures.sample_with(model.proposal, k * n, gen)
        lw = model.log_g(pts).reshape(k, n)
        w = np.exp(lw - scipy.special.logsumexp(lw, axis=1, keepdims=True))
        first = pts[:, 0].reshape(k, n)
        est = np.stack([np.sum(w * phi(first), axis=1) for phi in phis])
        return est - exact[:, None]

    return np.concatenate(parallel.map_ordered(run, chunks, threads), axis=1)


def bias_mse_experiment(
    model: GaussianISModel,
    phis: Sequence[TestFunction],
    n: int,
    replications: int,
    seed: int,
    threads: int | None = None,
) -> list[BoundReport]:
    """Empirical bias and MSE of the autonormalized estimator per test
    function, alongside the 12 rho / N and 4 rho / N bounds."""
    if replications < 100:
        raise ValueError(f"need at least 100 replications, got {replications}")
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    errors = estimate_errors(model, phis, n, replications, seed, threads)
    rho = model.rho
    reports = []
    for phi, err in zip(phis, errors):
        bias, bias_se = _mean_and_se(err)
        mse, mse_se = _mean_and_se(err**2)
        reports.append(BoundReport(phi.name, bias, mse, rho, n, replications, bias_se, mse_se))
    return reports


def ess_rho_consistency(model: GaussianISModel, n: int, seed: int) -> float:
    """|ess * rho / n - 1| for one ensemble of size ``n``."""
    e = WeightedEnsemble.from_proposal(model.proposal, model.log_g, n, seed)
    return abs(ess(e) * model.rho / n - 1.0)


# Unbounded test functions -----------------------------------------------------


@dataclass(frozen=True)
class CmseSpec:
    """Conjugate exponent pairs (d, e) and (p, q) for the MSE constant."""

    d: float = 2.0
    e: float = 2.0
    p: float = 2.0
    q: float = 2.0

    def __post_init__(self):
        for name in ("d", "e", "p", "q"):
            v = getattr(self, name)
            if not (1.0 < v < math.inf):
                raise ValueError(f"exponent {name} must lie in (1, inf), got {v}")
        if abs(1 / self.d + 1 / self.e - 1) > 1e-12 or abs(1 / self.p + 1 / self.q - 1) > 1e-12:
            raise ValueError("exponent pairs (d, e) and (p, q) must be conjugate")

    @staticmethod
    def constant(t: float) -> float:
        """C_t with C_t**(1/t) = t - 1."""
        if t < 2:
            raise ValueError(f"C_t is defined for t >= 2, got {t}")
        return (t - 1.0) ** t

    @property
    def g_order_second(self) -> float:
        return 2 * self.e

    @property
    def g_order_third(self) -> float:
        return 2 * self.q * (1 + 1 / self.p)


@dataclass(frozen=True)
class CmseMoments:
    """Moments under the proposal that enter the MSE constant.

    Central moments are written m_t[.]; the rest are raw.
    """

    pi_g: float
    pi_g2: float  # pi(g^2)
    m2_phi_g: float  # m_2[phi g]
    abs_phi_g_2d: float  # pi(|phi g|^(2d))
    m_2e_g: float  # m_{2e}[g]
    abs_phi_2p: float  # pi(|phi|^(2p))
    m_third_g: float  # m_{2q(1+1/p)}[g]
    m2_g: float  # m_2[g]
    m2_phibar_g: float  # m_2[(phi - mu(phi)) g]


@dataclass(frozen=True)
class CmseResult:
    c_mse: float
    bias_constant: float

    def mse_bound(self, n: int) -> float:
        return self.c_mse / n

    def bias_bound(self, n: int) -> float:
        return self.bias_constant / n


def cmse_bound(spec: CmseSpec, moments: CmseMoments) -> CmseResult:
    """MSE constant C_MSE (MSE <= C_MSE / N) and the bias constant for
    unbounded test functions."""
    vals = np.array([getattr(moments, f) for f in moments.__dataclass_fields__], dtype=float)
    if not np.all(np.isfinite(vals)) or np.any(vals < 0):
        raise NotApplicableError("every moment must be finite and nonnegative")
    if moments.pi_g <= 0:
        raise NotApplicableError("pi(g) must be positive")
    d, e, p, q = spec.d, spec.e, spec.p, spec.q
    pg = moments.pi_g
    t2, t3 = spec.g_order_second, spec.g_order_third
    c = (
        3 / pg**2 * moments.m2_phi_g
        + 3 / pg**4 * moments.abs_phi_g_2d ** (1 / d) * spec.constant(t2) ** (1 / e) * moments.m_2e_g ** (1 / e)
        + 3
        / pg ** (2 * (1 + 1 / p))
        * moments.abs_phi_2p ** (1 / p)
        * spec.constant(t3) ** (1 / q)
        * moments.m_third_g ** (1 / q)
    )
    bias = 2 / pg**2 * math.sqrt(moments.m2_g * moments.m2_phibar_g) + 2 * math.sqrt(c) * math.sqrt(
        moments.pi_g2
    ) / pg
    return CmseResult(float(c), float(bias))


def _normal_raw_moment(k: int, mean: float) -> float:
    return float(norm(loc=mean).moment(k)) if k > 0 else 1.0


def _shift_g_moment(k: float, m: float) -> float:
    """E_pi[g^k] for g = exp(m u - m^2 / 2), u ~ N(0, 1)."""
    return math.exp(k * (k - 1) * m * m / 2)


def _is_even_int(t: float) -> bool:
    return float(t).is_integer() and int(t) % 2 == 0


def _shift_central_g_moment(t: float, m: float) -> float:
    if _is_even_int(t):
        t = int(t)
        return math.fsum(math.comb(t, k) * (-1) ** (t - k) * _shift_g_moment(k, m) for k in range(t + 1))
    f = lambda u: abs(math.exp(m * u - m * m / 2) - 1) ** t * norm.pdf(u)
    return scipy.integrate.quad(f, -np.inf, np.inf, limit=200)[0]


def gaussian_shift_identity_moments(m: float, spec: CmseSpec = CmseSpec()) -> CmseMoments:
    """Moments for phi(u) = u on the 1-D shift model N(m, 1) vs N(0, 1).

    Uses g^k pi = exp(k (k - 1) m^2 / 2) N(k m, 1) for integer orders and
    numerical quadrature for fractional ones.
    """

    def mixed(j, k):  # E_pi[|u|^j g^k]
        if float(j).is_integer() and int(j) % 2 == 0:
            return _shift_g_moment(k, m) * _normal_raw_moment(int(j), k * m)
        f = lambda u: abs(u) ** j * math.exp(k * (m * u - m * m / 2)) * norm.pdf(u)
        return scipy.integrate.quad(f, -np.inf, np.inf, limit=200)[0]

    e_ug = m  # E_pi[u g] = target mean
    return CmseMoments(
        pi_g=1.0,
        pi_g2=_shift_g_moment(2, m),
        m2_phi_g=mixed(2, 2) - e_ug**2,
        abs_phi_g_2d=mixed(2 * spec.d, 2 * spec.d),
        m_2e_g=_shift_central_g_moment(spec.g_order_second, m),
        abs_phi_2p=mixed(2 * spec.p, 0),
        m_third_g=_shift_central_g_moment(spec.g_order_third, m),
        m2_g=_shift_g_moment(2, m) - 1.0,
        # E[(u - m)^2 g^2] = e^{m^2} (1 + m^2); E[(u - m) g] = 0
        m2_phibar_g=_shift_g_moment(2, m) * (1 + m * m),
    )


# Sweeps ----------------------------------------------------------------------


@dataclass(frozen=True)
class ProductRow:
    d: int
    log_rho_exact: float
    rho_mc: float = math.nan
    std_error: float = math.nan


def product_collapse_sweep(
    rho_1: float,
    d_values: Sequence[int],
    n: int | None = None,
    seed: int | None = None,
    mc_max_d: int = 3,
) -> list[ProductRow]:
    """rho for d independent copies of a 1-D problem with second moment rho_1.

    The exact column is d log rho_1. When ``n`` and ``seed`` are given, an MC
    column is added for d <= ``mc_max_d`` using the Gaussian shift model
    with m = sqrt(log rho_1).
    """
    if not rho_1 >= 1:
        raise ValueError(f"rho_1 must be at least 1, got {rho_1}")
    log_rho_1 = math.log(rho_1)
    rows = []
    for i, d in enumerate(d_values):
        if d < 1:
            raise ValueError(f"dimension must be positive, got {d}")
        exact = d * log_rho_1
        if n is not None and seed is not None and d <= mc_max_d:
            model = gaussian_shift(math.sqrt(log_rho_1), d)
            est = rho_mc(model.proposal, model.log_g, n, rng.derive_seed(seed, i))
            rows.append(ProductRow(d, exact, est.rho, est.std_error))
        else:
            rows.append(ProductRow(d, exact))
    return rows


def _is_constant(p: ScalarPotential) -> bool:
    grid = p.u_star + np.linspace(-10.0, 10.0, 2001)
    v = np.asarray(p.h(grid), dtype=float)
    return bool(np.ptp(v) == 0.0)


def rho_quadrature(p: ScalarPotential, proposal: DiagonalGaussian, epsilon: float) -> float:
    """rho for g = exp(-h / epsilon) under a 1-D Gaussian proposal, by quadrature."""
    if proposal.dim != 1:
        raise DimensionError("singular-limit proposal must be one dimensional")
    m0, sd0 = float(proposal.mean[0]), math.sqrt(float(proposal.variance[0]))
    h_star = float(np.asarray(p.h(np.array([p.u_star])))[0])
    width = 12.0 * math.sqrt(epsilon / p.h_pp)

    def moment(k):
        f = lambda u: math.exp(-k * (float(p.h(np.array([u]))[0]) - h_star) / epsilon) * norm.pdf(u, m0, sd0)
        a, b = p.u_star - width, p.u_star + width
        total = scipy.integrate.quad(f, a, b, points=[p.u_star], limit=400, epsabs=0, epsrel=1e-11)[0]
        total += scipy.integrate.quad(f, -np.inf, a, limit=400, epsabs=0, epsrel=1e-11)[0]
        total += scipy.integrate.quad(f, b, np.inf, limit=400, epsabs=0, epsrel=1e-11)[0]
        return total

    return moment(2) / moment(1) ** 2


@dataclass(frozen=True)
class SingularRow:
    epsilon: float
    rho_exact: float
    rho_mc: float
    std_error: float
    rate: float


@dataclass(frozen=True)
class SingularLimitReport:
    rows: list[SingularRow]
    fit_exact: LinearFit | None
    fit_mc: LinearFit | None


def singular_limit_sweep(
    p: ScalarPotential,
    proposal: DiagonalGaussian,
    epsilons: Sequence[float],
    n: int,
    seed: int,
) -> SingularLimitReport:
    """rho by quadrature and by MC for g = exp(-h / epsilon) over a grid of
    epsilons, with log-log slopes of rho against 1 / epsilon."""
    if any(not eps > 0 for eps in epsilons):
        raise ValueError("every epsilon must be positive")
    if _is_constant(p):
        rows = [SingularRow(eps, 1.0, 1.0, 0.0, math.nan) for eps in epsilons]
        return SingularLimitReport(rows, None, None)
    rows = []
    for i, eps in enumerate(epsilons):
        log_g = lambda u, eps=eps: -np.asarray(p.h(u[:, 0]), dtype=float) / eps
        est = rho_mc(proposal, log_g, n, rng.derive_seed(seed, i))
        rows.append(SingularRow(eps, rho_quadrature(p, proposal, eps), est.rho, est.std_error, measures.laplace_rho_rate(p, eps)))
    x = np.log([1 / r.epsilon for r in rows])
    fit_exact = fit_line(x, np.log([r.rho_exact for r in rows])) if len(rows) >= 3 else None
    fit_mc = fit_line(x, np.log([r.rho_mc for r in rows])) if len(rows) >= 3 else None
    return SingularLimitReport(rows, fit_exact, fit_mc)

"""One step of a linear-Gaussian particle filter.

    v1 = M v0 + xi,   y1 = H v1 + zeta,
    v0 ~ N(0, P),  xi ~ N(0, Q),  zeta ~ N(0, R).

The standard proposal (v1 drawn from the dynamics) is the inverse problem
with prior covariance M P M* + Q, forward map H and noise R. The optimal
proposal (v1 drawn given v0 and y1) reduces to the inverse problem for v0
with prior P, forward map H M and noise R + H Q H*. Both proposals are
analysed through these reductions; the joint (v0, v1) space is never
built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Literal

import numpy as np
import scipy.linalg

from isdim import inverse, measures, rng, sampler
from isdim.errors import ConsistencyError, DegenerateFitError, DimensionError, IllConditionedError
from isdim.inverse import IntrinsicDims, LinearGaussianIP
from isdim.measures import DenseGaussian
from isdim.scaling import LinearFit, fit_line, fit_loglog

REDUCTION_RTOL = 1e-10
FIXED_POINT_RTOL = 1e-10


class ProposalKind(str, Enum):
    STANDARD = "standard"
    OPTIMAL = "optimal"


@dataclass(frozen=True)
class OneStepFilter:
    """Filtering model in scalar-identity form (every operator is a scalar
    times the d x d identity) or dense form (explicit matrices)."""

    form: Literal["scalar", "dense"]
    M: object
    H: object
    P: object
    Q: object
    R: object
    d: int | None = None

    def __post_init__(self):
        if self.form == "scalar":
            vals = [float(getattr(self, k)) for k in "MHPQR"]
            for name, v in zip("PQR", vals[2:]):
                if not v > 0:
                    raise ValueError(f"covariance scalar must be positive: {name.lower()}={v}")
            if self.d is None or int(self.d) != self.d or self.d < 1:
                raise ValueError(f"scalar form needs a positive integer dimension d, got {self.d}")
            for k, v in zip("MHPQR", vals):
                object.__setattr__(self, k, v)
            object.__setattr__(self, "d", int(self.d))
        elif self.form == "dense":
            M = np.array(np.atleast_2d(self.M), dtype=float)
            H = np.array(np.atleast_2d(self.H), dtype=float)
            P = inverse._check_spd(self.P, "P")
            Q = inverse._check_spd(self.Q, "Q")
            R = inverse._check_spd(self.R, "R")
            n, k = P.shape[0], R.shape[0]
            if M.shape != (n, n) or Q.shape != (n, n) or H.shape != (k, n):
                raise DimensionError("inconsistent operator shapes")
            for a in (M, H, P, Q, R):
                a.setflags(write=False)
            for name, a in zip("MHPQR", (M, H, P, Q, R)):
                object.__setattr__(self, name, a)
            object.__setattr__(self, "d", n)
        else:
            raise ValueError(f"form must be 'scalar' or 'dense', got {self.form!r}")

    @classmethod
    def scalar(cls, m=1.0, h=1.0, p=1.0, q=1.0, r=1.0, d=1) -> OneStepFilter:
        return cls("scalar", m, h, p, q, r, d)

    @classmethod
    def dense(cls, M, H, P, Q, R) -> OneStepFilter:
        return cls("dense", M, H, P, Q, R)

    def to_dense(self) -> OneStepFilter:
        if self.form == "dense":
            return self
        eye = np.eye(self.d)
        return OneStepFilter.dense(self.M * eye, self.H * eye, self.P * eye, self.Q * eye, self.R * eye)

    @property
    def d_y(self) -> int:
        return self.d if self.form == "scalar" else self.R.shape[0]


def standard_reduction(f: OneStepFilter) -> LinearGaussianIP:
    """Prior M P M* + Q, forward map H, noise R."""
    if f.form == "scalar":
        ones = np.ones(f.d)
        return LinearGaussianIP.diagonal(f.H * ones, (f.M**2 * f.P + f.Q) * ones, f.R * ones)
    sigma = f.M @ f.P @ f.M.T + f.Q
    return LinearGaussianIP.dense(f.H, 0.5 * (sigma + sigma.T), f.R)


def optimal_reduction(f: OneStepFilter) -> LinearGaussianIP:
    """Prior P, forward map H M, noise R + H Q H*."""
    if f.form == "scalar":
        ones = np.ones(f.d)
        return LinearGaussianIP.diagonal(f.H * f.M * ones, f.P * ones, (f.R + f.H**2 * f.Q) * ones)
    gamma = f.R + f.H @ f.Q @ f.H.T
    return LinearGaussianIP.dense(f.H @ f.M, f.P, 0.5 * (gamma + gamma.T))


def reduction(f: OneStepFilter, kind: ProposalKind | str) -> LinearGaussianIP:
    kind = ProposalKind(kind)
    return standard_reduction(f) if kind is ProposalKind.STANDARD else optimal_reduction(f)


@dataclass(frozen=True)
class FilterOperators:
    a_st: np.ndarray  # spectrum, non-increasing
    a_op: np.ndarray
    st: IntrinsicDims
    op: IntrinsicDims


def _sqrtm(m):
    return inverse._sym_sqrt(m)


def a_operators(f: OneStepFilter) -> FilterOperators:
    """Spectra and intrinsic dimensions of A_st and A_op, evaluated from
    their defining products and checked against the reductions to 1e-10."""
    if f.form == "scalar":
        lam_st = (f.M**2 * f.P + f.Q) * f.H**2 / f.R
        lam_op = f.P * f.M**2 * f.H**2 / (f.R + f.H**2 * f.Q)
        a_st, a_op = np.full(f.d, lam_st), np.full(f.d, lam_op)
    else:
        s_half = _sqrtm(f.M @ f.P @ f.M.T + f.Q)
        a_st = s_half @ f.H.T @ scipy.linalg.solve(f.R, f.H, assume_a="pos") @ s_half
        p_half = _sqrtm(f.P)
        hm = f.H @ f.M
        a_op = p_half @ hm.T @ scipy.linalg.solve(f.R + f.H @ f.Q @ f.H.T, hm, assume_a="pos") @ p_half
    st, op = inverse.intrinsic_dims(a_st), inverse.intrinsic_dims(a_op)
    for kind, dims in ((ProposalKind.STANDARD, st), (ProposalKind.OPTIMAL, op)):
        ref = inverse.intrinsic_dims(inverse.operator_a(reduction(f, kind)))
        for a, b in ((dims.tau, ref.tau), (dims.efd, ref.efd)):
            if abs(a - b) > REDUCTION_RTOL * max(abs(a), abs(b), 1.0):
                raise ConsistencyError(f"{kind.value} operator disagrees with its reduction: {a} vs {b}")
    return FilterOperators(st.a_spectrum, op.a_spectrum, st, op)


def conditioned_dynamics(f: OneStepFilter, v0, y1) -> DenseGaussian:
    """Law of v1 given v0 and y1: N(m, Xi) with

    Xi = Q - Q H* (H Q H* + R)^{-1} H Q,  m = M v0 + Q H* (H Q H* + R)^{-1} (y1 - H M v0).
    """
    g = f.to_dense()
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    y1 = np.atleast_1d(np.asarray(y1, dtype=float))
    if v0.shape != (g.d,) or y1.shape != (g.d_y,):
        raise DimensionError("state or observation has the wrong dimension")
    s = g.H @ g.Q @ g.H.T + g.R
    gain = scipy.linalg.solve(s, g.H @ g.Q, assume_a="pos").T
    xi = g.Q - gain @ g.H @ g.Q
    mean = g.M @ v0 + gain @ (y1 - g.H @ g.M @ v0)
    return DenseGaussian(mean, 0.5 * (xi + xi.T))


def kalman_update(f: OneStepFilter, P):
    """One forecast-analysis covariance cycle started from ``P``.

    Scalar form takes and returns the scalar coefficient of the identity.
    """
    if f.form == "scalar":
        P = float(P)
        if not P > 0:
            raise ValueError("P must be positive")
        s = f.M**2 * P + f.Q
        # s - s h^2 s / (h^2 s + r), rearranged to avoid cancellation
        return s * f.R / (f.H**2 * s + f.R)
    P = inverse._check_spd(P, "P")
    s = f.M @ P @ f.M.T + f.Q
    try:
        gain = scipy.linalg.solve(f.H @ s @ f.H.T + f.R, f.H @ s, assume_a="pos").T
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(f"innovation solve failed: {exc}") from exc
    c = s - gain @ f.H @ s
    return 0.5 * (c + c.T)


def stationary_covariance(f: OneStepFilter) -> float:
    """Steady-state coefficient ((q^2 + 4 q r)^{1/2} - q) / 2 for M = H = I,
    Q = q I, R = r I; certified as a fixed point of ``kalman_update``."""
    if f.form != "scalar" or f.M != 1.0 or f.H != 1.0:
        raise ValueError("stationary covariance is only available for scalar form with M = H = I")
    q, r = f.Q, f.R
    # (sqrt(q^2 + 4qr) - q) / 2 without cancellation for small r
    p_inf = 2 * q * r / (math.sqrt(q * q + 4 * q * r) + q)
    nxt = kalman_update(f, p_inf)
    if abs(nxt - p_inf) > FIXED_POINT_RTOL * p_inf:
        raise ConsistencyError(f"steady state is not a fixed point: {p_inf} -> {nxt}")
    return p_inf


def at_stationarity(f: OneStepFilter) -> OneStepFilter:
    return OneStepFilter.scalar(f.M, f.H, stationary_covariance(f), f.Q, f.R, f.d)


# Proposal comparison ----------------------------------------------------------------


@dataclass(frozen=True)
class ProposalComparison:
    log_rho_st: float
    log_rho_op: float
    mc_st: sampler.RhoEstimate
    mc_op: sampler.RhoEstimate
    ess_st: float
    ess_op: float

    @property
    def st_exceeds_op(self) -> bool:
        return self.log_rho_st > self.log_rho_op


def closed_form_log_rho(ip: LinearGaussianIP, y) -> float:
    if ip.form == "diagonal":
        return inverse.log_rho(ip, y)
    return math.log1p(measures.chi2_divergence(inverse.posterior(ip, y), ip.prior()))


def compare_proposals(f: OneStepFilter, y1, n: int, seed: int) -> ProposalComparison:
    """Closed-form and Monte Carlo rho, plus ess, for both proposals."""
    y1 = np.atleast_1d(np.asarray(y1, dtype=float))
    out = []
    for i, kind in enumerate(ProposalKind):
        ip = reduction(f, kind)
        exact = closed_form_log_rho(ip, y1)
        pts = measures.sample(ip.prior(), n, rng.derive_seed(seed, i))
        lw = inverse.log_g(ip, pts, y1)
        est = sampler.rho_from_log_weights(lw)
        e = sampler.ess(sampler.WeightedEnsemble(pts, lw))
        out.append((exact, est, e))
    (st, mc_st, ess_st), (op, mc_op, ess_op) = out
    return ProposalComparison(st, op, mc_st, mc_op, ess_st, ess_op)


# Infinite-trace verdicts ------------------------------------------------------------


@dataclass(frozen=True)
class TraceVerdict:
    value: float
    value_doubled: float
    converged: bool

    @property
    def label(self) -> str:
        return "finite" if self.converged else "inf"


def truncation_verdict(quantity: Callable[[int], float], d: int, rtol: float = inverse.CONVERGENCE_RTOL) -> TraceVerdict:
    """Compare a truncated quantity at ``d`` and ``2 d``; a relative change
    above ``rtol`` labels it divergent."""
    a, b = quantity(d), quantity(2 * d)
    return TraceVerdict(a, b, abs(a - b) <= rtol * abs(b))


# Tables 3 and 4 ----------------------------------------------------------------------


@dataclass(frozen=True)
class FilterRow:
    init: str
    r: float
    q: float
    p: float
    d: int
    eig_a_st: float
    eig_a_op: float
    tau_st: float
    tau_op: float
    efd_st: float
    efd_op: float
    log_rho_st: float
    log_rho_op: float


@dataclass(frozen=True)
class FilterSweepReport:
    init: str
    driver: str
    rows: list[FilterRow]
    fit_st: LinearFit
    fit_op: LinearFit
    eig_fits: dict[str, LinearFit]
    n_seeds: int
    data_note: str = "y1 generated from truth v1 = 0: y1 = sqrt(r) xi"


def sweep_tables34(
    initialization: Literal["stationary", "fixed_p"],
    grid: dict,
    seed: int,
    n_seeds: int | None = None,
) -> FilterSweepReport:
    """Scaling of log rho for both proposals in the M = H = I scalar family.

    ``grid`` holds r, q, p, d as scalars or lists; ``q = "r"`` ties q to r.
    Exactly one of r or d is a list and drives the sweep. Small-noise
    sweeps (driver r) fit log rho against log(1/r) on one fixed dataset;
    large-d sweeps fit the median over ``n_seeds`` datasets (default 32)
    linearly against d.
    """
    if initialization not in ("stationary", "fixed_p"):
        raise ValueError(f"initialization must be 'stationary' or 'fixed_p', got {initialization!r}")
    rs = [float(x) for x in np.atleast_1d(grid.get("r", 1.0))]
    ds = [int(x) for x in np.atleast_1d(grid.get("d", 1))]
    tied = isinstance(grid.get("q"), str)
    if tied and grid["q"] != "r":
        raise ValueError("q must be a number or the string 'r'")
    q_fixed = None if tied else float(grid.get("q", 1.0))
    p_fixed = float(grid.get("p", 1.0))
    if len(rs) > 1 and len(ds) > 1:
        raise ValueError("sweep either r or d, not both")
    driver = "d" if len(ds) > 1 else "r"
    points = [(r, d) for r in rs for d in ds]
    if len(points) < 3:
        raise DegenerateFitError(f"need at least 3 grid points, got {len(points)}")
    if n_seeds is None:
        n_seeds = 1 if driver == "r" else inverse.IN_PROBABILITY_SEEDS
    xi = np.stack([rng.generator(seed, k).standard_normal(max(ds)) for k in range(n_seeds)])

    rows = []
    for r, d in points:
        q = r if tied else q_fixed
        f = OneStepFilter.scalar(1.0, 1.0, p_fixed, q, r, d)
        if initialization == "stationary":
            f = at_stationarity(f)
        ops = a_operators(f)
        st_ip, op_ip = standard_reduction(f), optimal_reduction(f)
        ys = math.sqrt(r) * xi[:, :d]
        lst = [inverse.log_rho(st_ip, y) for y in ys]
        lop = [inverse.log_rho(op_ip, y) for y in ys]
        rows.append(
            FilterRow(
                initialization, r, q, f.P, d,
                float(ops.a_st[0]), float(ops.a_op[0]),
                ops.st.tau, ops.op.tau, ops.st.efd, ops.op.efd,
                float(np.median(lst)), float(np.median(lop)),
            )
        )

    lst = np.array([row.log_rho_st for row in rows])
    lop = np.array([row.log_rho_op for row in rows])
    eig_fits = {}
    if driver == "r":
        x = np.log([1 / row.r for row in rows])
        rv = [row.r for row in rows]
        eig_fits["eig_a_st"] = fit_loglog(rv, [row.eig_a_st for row in rows])
        eig_fits["eig_a_op"] = fit_loglog(rv, [row.eig_a_op for row in rows])
        if initialization == "stationary":
            eig_fits["eig_p_inf"] = fit_loglog(rv, [row.p for row in rows])
    else:
        x = np.array([row.d for row in rows], dtype=float)
    return FilterSweepReport(initialization, driver, rows, fit_line(x, lst), fit_line(x, lop), eig_fits, n_seeds)

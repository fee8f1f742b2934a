"""Gaussian measures, sampling, and closed-form divergences.

Divergences between two Gaussians are evaluated after simultaneous
diagonalization: in a frame where the proposal covariance is the identity
and the target covariance is ``diag(s)``, everything factorizes over
coordinates. In that frame, with mean offset ``delta``,

    log rho = sum_i [ -0.5 * log(s_i * (2 - s_i)) + delta_i**2 / (2 - s_i) ]

which is finite iff every ``s_i < 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.linalg

from isdim import rng
from isdim.errors import DefinitenessError, DimensionError, NonIntegrableError

SYMMETRY_RTOL = 1e-12
CHI2_GUARD = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DiagonalGaussian:
    """Gaussian with independent coordinates, N(mean, diag(variance))."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = _frozen(np.atleast_1d(self.mean))
        variance = _frozen(np.atleast_1d(self.variance))
        if mean.ndim != 1 or variance.shape != mean.shape:
            raise DimensionError(
                f"mean and variance must be vectors of equal length, got {mean.shape} and {variance.shape}"
            )
        if not np.all(np.isfinite(variance)) or np.any(variance <= 0):
            raise DefinitenessError("all variances must be strictly positive and finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", variance)

    @classmethod
    def standard(cls, dim: int) -> DiagonalGaussian:
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return np.diag(self.variance)

    def to_dense(self) -> DenseGaussian:
        return DenseGaussian(self.mean, np.diag(self.variance))


@dataclass(frozen=True)
class DenseGaussian:
    """Gaussian N(mean, covariance) with a full SPD covariance matrix."""

    mean: np.ndarray
    covariance: np.ndarray
    _eig: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = _frozen(np.atleast_1d(self.mean))
        cov = np.array(np.atleast_2d(self.covariance), dtype=float)
        if mean.ndim != 1 or cov.shape != (mean.shape[0], mean.shape[0]):
            raise DimensionError(f"covariance shape {cov.shape} does not match mean length {mean.shape[0]}")
        if not np.all(np.isfinite(cov)):
            raise DefinitenessError("covariance has non-finite entries")
        scale = np.max(np.abs(cov))
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
            raise DefinitenessError("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        evals, evecs = np.linalg.eigh(cov)
        if evals[0] <= 0:
            raise DefinitenessError(f"covariance is not positive definite (smallest eigenvalue {evals[0]:.3e})")
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_eig", (evals, evecs))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.covariance)

    def sqrt_covariance(self) -> np.ndarray:
        """Symmetric square root of the covariance."""
        evals, evecs = self._eig
        return (evecs * np.sqrt(evals)) @ evecs.T

    def to_dense(self) -> DenseGaussian:
        return self


Gaussian = Union[DiagonalGaussian, DenseGaussian]


@dataclass(frozen=True)
class ScalarPotential:
    """A nonnegative potential h on the real line with a unique minimizer.

    ``h`` must be vectorized over numpy arrays. The minimizer and the
    curvature there are supplied by the caller and sanity checked on a grid.
    """

    h: Callable[[np.ndarray], np.ndarray]
    u_star: float
    h_pp: float

    def __post_init__(self):
        if not self.h_pp > 0:
            raise ValueError(f"curvature at the minimizer must be positive, got {self.h_pp}")
        grid = self.u_star + np.linspace(-5.0, 5.0, 1001)
        values = np.asarray(self.h(grid), dtype=float)
        h_star = float(np.asarray(self.h(np.array([self.u_star])))[0])
        if np.any(values < 0) or h_star < 0:
            raise ValueError("potential must be nonnegative")
        if np.any(values < h_star - 1e-12 * max(1.0, abs(h_star))):
            raise ValueError(f"u_star={self.u_star} is not a minimizer of h on the check grid")

    @classmethod
    def quadratic(cls, u_star: float = 0.0, curvature: float = 1.0) -> ScalarPotential:
        """h(u) = curvature * (u - u_star)**2 / 2."""
        return cls(lambda u: 0.5 * curvature * (np.asarray(u) - u_star) ** 2, u_star, curvature)


def sample(g: Gaussian, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` i.i.d. samples from ``g`` as an ``(n, dim)`` array."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    return sample_with(g, n, rng.generator(seed))


def sample_with(g: Gaussian, n: int, gen: np.random.Generator) -> np.ndarray:
    z = gen.standard_normal((n, g.dim))
    if isinstance(g, DiagonalGaussian):
        return g.mean + z * np.sqrt(g.variance)
    return g.mean + z @ g.sqrt_covariance()


def log_density(g: Gaussian, x) -> np.ndarray:
    """Normalized log density at the rows of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != g.dim:
        raise DimensionError(f"points have dimension {x.shape[-1]}, measure has {g.dim}")
    r = x - g.mean
    if isinstance(g, DiagonalGaussian):
        quad = np.sum(r**2 / g.variance, axis=-1)
        logdet = np.sum(np.log(g.variance))
    else:
        evals, evecs = g._eig
        w = (r @ evecs) / np.sqrt(evals)
        quad = np.sum(w**2, axis=-1)
        logdet = np.sum(np.log(evals))
    return -0.5 * (quad + logdet + g.dim * np.log(2 * np.pi))


def _whitened_frame(target: Gaussian, proposal: Gaussian) -> tuple[np.ndarray, np.ndarray]:
    """Covariance ratios ``s`` and mean offsets ``delta`` in the frame where
    the proposal is standard normal."""
    if target.dim != proposal.dim:
        raise DimensionError(f"target has dimension {target.dim}, proposal {proposal.dim}")
    if isinstance(target, DiagonalGaussian) and isinstance(proposal, DiagonalGaussian):
        s = target.variance / proposal.variance
        delta = (target.mean - proposal.mean) / np.sqrt(proposal.variance)
        return s, delta
    t, p = target.to_dense(), proposal.to_dense()
    # V^T C_p V = I and V^T C_t V = diag(s)
    s, v = scipy.linalg.eigh(t.covariance, p.covariance)
    delta = v.T @ (t.mean - p.mean)
    return s, delta


def log_rho_gaussian(target: Gaussian, proposal: Gaussian) -> float:
    """log of pi(g^2) / pi(g)^2 for g = d(target)/d(proposal)."""
    s, delta = _whitened_frame(target, proposal)
    if np.any(s >= 2.0 - CHI2_GUARD):
        raise NonIntegrableError(
            f"target/proposal variance ratio {np.max(s):.6g} >= 2: second moment of the density is infinite"
        )
    return float(np.sum(-0.5 * np.log(s * (2.0 - s)) + delta**2 / (2.0 - s)))


def chi2_divergence(target: Gaussian, proposal: Gaussian) -> float:
    """Chi-square divergence of ``target`` from ``proposal``; equals rho - 1.

    Raises:
        NonIntegrableError: if some target variance is at least twice the
            proposal variance in the jointly diagonalized frame.
    """
    return float(np.expm1(log_rho_gaussian(target, proposal)))


def kl_divergence(target: Gaussian, proposal: Gaussian) -> float:
    """KL(target || proposal) for two Gaussians."""
    s, delta = _whitened_frame(target, proposal)
    return float(0.5 * np.sum(s - 1.0 - np.log(s) + delta**2))


def kl_posterior_prior(a_spectrum, m, sigma: DiagonalGaussian) -> float:
    """KL divergence of a Gaussian posterior from its prior.

    Uses ``2 KL = log det(I + A) - Tr((I + A)^{-1} A) + m' Sigma^{-1} m``
    where ``a_spectrum`` holds the eigenvalues of A and ``m`` is the
    posterior mean (measured from the prior mean).
    """
    lam = np.asarray(a_spectrum, dtype=float)
    m = np.atleast_1d(np.asarray(m, dtype=float))
    if np.any(lam < 0):
        raise ValueError("eigenvalues of A must be nonnegative")
    if m.shape != (sigma.dim,):
        raise DimensionError(f"mean has length {m.shape[0]}, prior has dimension {sigma.dim}")
    if lam.shape[0] > sigma.dim:
        raise DimensionError(f"{lam.shape[0]} eigenvalues for a {sigma.dim}-dimensional prior")
    r = m - sigma.mean
    return float(0.5 * (np.sum(np.log1p(lam) - lam / (1.0 + lam)) + np.sum(r**2 / sigma.variance)))


def laplace_rho_rate(p: ScalarPotential, epsilon: float) -> float:
    """Small-epsilon rate sqrt(h''(u*) / (4 pi epsilon)) for rho when
    g = exp(-h / epsilon).

    This is an order-of-magnitude rate only: the proposal density at u* is
    left out, so only the epsilon**-0.5 dependence is meaningful.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return float(np.sqrt(p.h_pp / (4.0 * np.pi * epsilon)))

"""Closed-form success/error-rate bounds from facet distances.

Every formula reduces to one-dimensional Gaussian integrals along facet normals:
a facet at generalized distance a contributes a success factor over the slab
|x| <= xi/a-scaled width and an error tail beyond it. The unthresholded decision
corresponds to xi = 1/2; a confidence threshold h' moves each facet's xi inward
through the one-dimensional posterior equation. Products and sums over facets give
the lower (product/union) and upper (nearest-facet) bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfc

from .errors import NoRoot, ValidationError
from .voronoi import RelevantVectorSet

_SQRT2 = math.sqrt(2.0)


def one_dim_success(a: float, xi: float) -> float:
    """Probability mass of the slab (-xi, xi) under a unit-lattice Gaussian of scale a."""
    if a <= 0:
        raise ValidationError(f"distance must be positive, got {a}")
    if not (0 < xi <= 1):
        raise ValidationError(f"xi must lie in (0, 1], got {xi}")
    return float(erf(a * xi / _SQRT2))


def one_dim_error(a: float, xi: float, modified: bool = True) -> float:
    """Tail mass beyond 1 - xi; the modified variant stops at 1 + xi.

    The unmodified tail integrates to infinity and complements one_dim_success at
    xi = 1/2; the modified strip subtracts the far tail, which keeps the facet sum
    a usable error bound when xi approaches 1.
    """
    if a <= 0:
        raise ValidationError(f"distance must be positive, got {a}")
    if not (0 < xi <= 1):
        raise ValidationError(f"xi must lie in (0, 1], got {xi}")
    tail = float(erfc(a * (1.0 - xi) / _SQRT2))
    if not modified:
        return tail
    return tail - float(erfc(a * (1.0 + xi) / _SQRT2))


def lattice_normalizer(a: float) -> float:
    """h_{0} for one dimension: inverse theta sum over the integer lattice."""
    nmax = int(math.ceil(10.0 / a)) + 2
    n = np.arange(-nmax, nmax + 1, dtype=float)
    return float(1.0 / np.sum(np.exp(-0.5 * a * a * n * n)))


def _posterior_zero(a: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """p(0 | xi) for the one-dimensional unit-lattice posterior, vectorized."""
    amin = float(np.min(a))
    nmax = int(math.ceil(10.0 / amin)) + 2
    n = np.arange(-nmax, nmax + 2, dtype=float)
    z = a[:, None] * (n[None, :] - xi[:, None])
    denom = np.sum(np.exp(-0.5 * z * z), axis=1)
    num = np.exp(-0.5 * (a * xi) ** 2)
    return num / denom


def xi_from_h_many(a, h_prime: float) -> np.ndarray:
    """Solve p(0 | xi) = h' h0 per facet by bisection on (0, 1)."""
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ValidationError("facet distances must be positive")
    if not (0 < h_prime < 1):
        raise ValidationError(f"h_prime must lie in (0, 1), got {h_prime}")
    nmax = int(math.ceil(10.0 / float(np.min(a)))) + 2
    n = np.arange(-nmax, nmax + 1, dtype=float)
    h0 = 1.0 / np.sum(np.exp(-0.5 * (a[:, None] * n[None, :]) ** 2), axis=1)
    target = h_prime * h0
    hi_val = _posterior_zero(a, np.full_like(a, 1.0 - 1e-12))
    if np.any(hi_val >= target):
        bad = a[hi_val >= target]
        raise NoRoot(
            f"threshold {h_prime} is not attainable for facet distance(s) "
            f"{np.array2string(bad[:3])}; the one-dimensional posterior never falls that low"
        )
    lo = np.zeros_like(a)
    hi = np.ones_like(a)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        val = _posterior_zero(a, mid)
        high = val > target
        lo = np.where(high, mid, lo)
        hi = np.where(high, hi, mid)
    return 0.5 * (lo + hi)


def xi_from_h(a: float, h_prime: float) -> float:
    """Scalar form of xi_from_h_many."""
    return float(xi_from_h_many(np.array([a]), h_prime)[0])


@dataclass(frozen=True)
class RateBoundResult:
    """Aggregate bounds plus the per-facet terms they were built from."""

    alpha_lower: float
    alpha_upper: float
    beta_lower: float
    beta_upper: float
    per_facet: tuple  # (a_i, alpha_i, beta_i, xi_i) ascending in a_i
    h_prime: float | None = None


def _facet_arrays(rv: RelevantVectorSet, h_prime: float | None, modified: bool):
    a = rv.distances
    if h_prime is None:
        xi = np.full_like(a, 0.5)
    else:
        xi = xi_from_h_many(a, h_prime)
    alpha_i = erf(a * xi / _SQRT2)
    beta_i = erfc(a * (1.0 - xi) / _SQRT2)
    if modified:
        beta_i = beta_i - erfc(a * (1.0 + xi) / _SQRT2)
    return a, xi, alpha_i, beta_i


def _aggregate(a, xi, alpha_i, beta_i, h_prime, modified_lower: bool) -> RateBoundResult:
    log_alpha = np.log(alpha_i)
    prod_alpha = float(np.exp(np.sum(log_alpha)))
    sum_beta = float(np.sum(beta_i))
    alpha_lower = max(1.0 - sum_beta, prod_alpha)
    imin = int(np.argmin(a))
    alpha_upper = float(alpha_i[imin])
    iworst = int(np.argmax(beta_i))
    beta_min = float(beta_i[iworst])
    if modified_lower:
        others = np.delete(log_alpha, iworst)
        beta_lower = beta_min * float(np.exp(np.sum(others)))
    else:
        beta_lower = beta_min
    beta_upper = sum_beta
    per_facet = tuple(
        (float(a[i]), float(alpha_i[i]), float(beta_i[i]), float(xi[i]))
        for i in range(len(a))
    )
    return RateBoundResult(
        alpha_lower=alpha_lower,
        alpha_upper=alpha_upper,
        beta_lower=beta_lower,
        beta_upper=beta_upper,
        per_facet=per_facet,
        h_prime=h_prime,
    )


def map_bounds(rv: RelevantVectorSet) -> RateBoundResult:
    """Bounds for the unthresholded decision (xi = 1/2, error = exact complement)."""
    if rv.q == 0:
        raise ValidationError("empty facet set")
    a = rv.distances
    xi = np.full_like(a, 0.5)
    alpha_i = erf(a * 0.5 / _SQRT2)
    beta_i = 1.0 - alpha_i
    return _aggregate(a, xi, alpha_i, beta_i, None, modified_lower=False)


def conditional_bounds(rv: RelevantVectorSet, h_prime: float,
                       modified: bool = True) -> RateBoundResult:
    """Bounds for the thresholded decision at confidence h'.

    With ``modified`` (default) the error terms use the bounded strip and the error
    lower bound multiplies the worst facet by the other facets' success factors;
    otherwise the plain tail and nearest-facet forms are used.
    """
    if rv.q == 0:
        raise ValidationError("empty facet set")
    a, xi, alpha_i, beta_i = _facet_arrays(rv, h_prime, modified)
    return _aggregate(a, xi, alpha_i, beta_i, h_prime, modified_lower=modified)


def single_approximation(rv: RelevantVectorSet, h_prime: float | None):
    """Point estimates (alpha, beta): beta as sum of exclusive facet error terms.

    Each facet's error term is discounted by the other facets' success factors;
    alpha is the product bound. h_prime = None gives the unthresholded case.
    """
    if rv.q == 0:
        raise ValidationError("empty facet set")
    a, xi, alpha_i, beta_i = _facet_arrays(rv, h_prime, modified=True)
    return _single_from_terms(alpha_i, beta_i)


def _single_from_terms(alpha_i: np.ndarray, beta_i: np.ndarray):
    log_alpha = np.log(alpha_i)
    total = float(np.sum(log_alpha))
    beta = float(np.sum(beta_i * np.exp(total - log_alpha)))
    alpha = float(np.exp(total))
    return alpha, beta


def log10_odds(rate: float) -> float:
    """log10(r / (1 - r)), the plotting scale for rates near one."""
    if not (0 < rate < 1):
        raise ValidationError(f"rate must lie strictly in (0, 1), got {rate}")
    return math.log10(rate) - math.log10(1.0 - rate)


def log10_odds_from_error(beta: float) -> float:
    """Success log-odds computed from the complementary error rate (stable near 1)."""
    if not (0 < beta < 1):
        raise ValidationError(f"error rate must lie strictly in (0, 1), got {beta}")
    return math.log10(1.0 - beta) - math.log10(beta)


def log10_odds_se(rate: float, se: float) -> float:
    """Delta-method standard error of log10(r/(1-r))."""
    return se / (math.log(10.0) * rate * (1.0 - rate))

"""Dense symmetric forms and lattice-basis reduction.

The central object is a symmetric positive-definite quadratic form (an inverse
covariance matrix). Searches over the integer lattice run in a transformed basis
N' = Z N produced by Lovasz-reduced (LLL) preprocessing; the transformed form
M' = Z^-T M Z^-1 factors as A^T A with A lower triangular, so the partial quadratic
form of the first i coordinates of N' is a function of those coordinates alone and
the search can fix coordinate 1 first and descend layer by layer.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from ._intmat import int_det, int_inverse
from .errors import (
    DimensionMismatch,
    NotPositiveDefinite,
    ReductionFailed,
    UnimodularOverflow,
    ValidationError,
)

SYMMETRY_TOL = 1e-9
PIVOT_TOL = 1e-12
_INT64_MAX = 2**63 - 1


class Definiteness(enum.Enum):
    POSITIVE_DEFINITE = "positive-definite"
    POSITIVE_SEMIDEFINITE = "positive-semidefinite"


def _as_square(entries) -> np.ndarray:
    a = np.asarray(entries, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class SpdForm:
    """Symmetric positive-(semi)definite quadratic form.

    Construction symmetrizes by (M + M^T)/2 and records the pre-symmetrization
    residual; a residual above SYMMETRY_TOL (relative) is rejected outright.
    """

    entries: np.ndarray
    definiteness: Definiteness = Definiteness.POSITIVE_DEFINITE
    sym_residual: float = 0.0

    def __init__(self, entries, definiteness=Definiteness.POSITIVE_DEFINITE):
        a = _as_square(entries)
        resid = float(np.max(np.abs(a - a.T)))
        scale = float(np.max(np.abs(a))) or 1.0
        if resid > SYMMETRY_TOL * scale:
            raise ValidationError(
                f"matrix is not symmetric: residual {resid:.3e} exceeds "
                f"{SYMMETRY_TOL:.0e} x max entry"
            )
        sym = (a + a.T) / 2.0
        sym.flags.writeable = False
        object.__setattr__(self, "entries", sym)
        object.__setattr__(self, "definiteness", definiteness)
        object.__setattr__(self, "sym_residual", resid / scale)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class UnimodularTransform:
    """Integer change of lattice basis with determinant exactly +-1."""

    entries: np.ndarray

    def __init__(self, entries):
        rows = [[int(x) for x in row] for row in entries]
        n = len(rows)
        if any(len(r) != n for r in rows):
            raise DimensionMismatch("unimodular transform must be square")
        if any(abs(x) > _INT64_MAX for r in rows for x in r):
            raise UnimodularOverflow("transform entry outside the 64-bit range")
        d = int_det(rows)
        if d not in (1, -1):
            raise ValidationError(f"transform determinant is {d}, want +-1")
        a = np.array(rows, dtype=np.int64)
        a.flags.writeable = False
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def inverse(self) -> np.ndarray:
        inv = int_inverse([[int(x) for x in row] for row in self.entries])
        if any(abs(x) > _INT64_MAX for r in inv for x in r):
            raise UnimodularOverflow("inverse transform entry outside the 64-bit range")
        a = np.array(inv, dtype=np.int64)
        a.flags.writeable = False
        return a

    @property
    def determinant(self) -> int:
        return int_det([[int(x) for x in row] for row in self.entries])


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    """Lower-triangular L with L L^T equal to the source form."""

    entries: np.ndarray

    def __init__(self, entries):
        a = _as_square(entries)
        if np.any(np.diag(a) <= 0.0):
            raise NotPositiveDefinite("Cholesky factor must have a positive diagonal")
        a = np.tril(a)
        a.flags.writeable = False
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def cholesky(m: SpdForm) -> CholeskyFactor:
    """Standard lower-triangular factorization L L^T = m.

    Raises NotPositiveDefinite when any pivot is at or below PIVOT_TOL times the
    largest diagonal entry, which is where genuinely singular models land while
    condition numbers up to ~1e9 still pass.
    """
    a = m.entries
    tol = PIVOT_TOL * float(np.max(np.diag(a)))
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    if float(np.min(np.diag(low)) ** 2) <= tol:
        raise NotPositiveDefinite("pivot at or below the definiteness tolerance")
    return CholeskyFactor(low)


def search_factor(m: SpdForm | np.ndarray) -> np.ndarray:
    """Lower-triangular A with A^T A = m (layer-ordered factor for searches).

    With this factor the partial form of the first i coordinates is
    ||A[:i, :i] x[:i]||^2, so layer 1 of a search fixes coordinate 1.
    """
    a = m.entries if isinstance(m, SpdForm) else _as_square(m)
    rev = a[::-1, ::-1]
    try:
        c = np.linalg.cholesky(rev)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return np.ascontiguousarray(c.T[::-1, ::-1])


def quadratic_form(m: SpdForm, x) -> float:
    """x^T m x."""
    v = np.asarray(x, dtype=float)
    if v.shape != (m.dim,):
        raise DimensionMismatch(f"vector length {v.shape} does not match form dim {m.dim}")
    return float(v @ m.entries @ v)


def complexity_estimate(m, chi: float = 1.0) -> float:
    """Estimated search work: sum over layers of ellipsoid point-count estimates.

    Layer i contributes V_i chi^i / prod_{j<=i} A_jj with V_i the unit-ball volume
    and A the layer-ordered factor; reduction aims to shrink this sum.
    """
    if isinstance(m, ReducedForm):
        diag = np.diag(m.search_factor)
    else:
        diag = np.diag(search_factor(m))
    total = 0.0
    logprod = 0.0
    for i, d in enumerate(diag, start=1):
        logprod += math.log(d)
        logv = (i / 2.0) * math.log(math.pi) - math.lgamma(i / 2.0 + 1.0)
        total += math.exp(logv + i * math.log(chi) - logprod)
    return total


@dataclass(frozen=True, eq=False)
class ReducedForm:
    """A form together with the unimodular reduction that preconditions searches."""

    original: SpdForm
    transform: UnimodularTransform
    reduced: SpdForm
    factor: CholeskyFactor

    @cached_property
    def search_factor(self) -> np.ndarray:
        return search_factor(self.reduced)

    def to_reduced_coords(self, nu) -> np.ndarray:
        v = np.asarray(nu, dtype=float)
        if v.shape != (self.original.dim,):
            raise DimensionMismatch(
                f"vector length {v.shape} does not match form dim {self.original.dim}"
            )
        return self.transform.entries.astype(float) @ v

    def from_reduced_coords(self, n_prime: np.ndarray) -> np.ndarray:
        return self.transform.inverse.astype(np.int64) @ np.asarray(n_prime, dtype=np.int64)


def _gram_schmidt(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """mu (unit lower) and squared orthogonal norms b for the basis with Gram g."""
    p = g.shape[0]
    mu = np.zeros((p, p))
    b = np.zeros(p)
    for i in range(p):
        for j in range(i):
            mu[i, j] = (g[i, j] - np.dot(mu[i, :j] * b[:j], mu[j, :j])) / b[j]
        b[i] = g[i, i] - np.dot(mu[i, :i] ** 2, b[:i])
        if b[i] <= 0.0:
            raise NotPositiveDefinite("form is numerically singular during reduction")
        mu[i, i] = 1.0
    return mu, b


def lll_reduce(
    m: SpdForm,
    delta: float = 1.0,
    block_boundary: int | None = None,
) -> ReducedForm:
    """Lovasz-reduce the form so the layer-ordered factor diagonal descends.

    delta = 1 is the default working condition; it lacks a polynomial-time guarantee,
    so callers may lower it toward 1/4 for pathological inputs. When block_boundary
    is given, basis-vector swaps never cross the boundary between coordinates
    [1..boundary] and [boundary+1..p]; size reduction still may, which keeps the
    transform block-triangular so a search can aggregate marginal sums at the
    boundary layer.
    """
    if not (0.25 < delta <= 1.0):
        raise ValidationError(f"delta must lie in (1/4, 1], got {delta}")
    p = m.dim
    if block_boundary is not None and not (0 < block_boundary < p):
        raise DimensionMismatch(f"block boundary {block_boundary} outside (0, {p})")

    # Work in flip-reversed coordinates: ascending Lovasz order there is descending
    # search-layer order in the original indexing.
    g = m.entries[::-1, ::-1].copy()
    boundary_rev = None if block_boundary is None else p - block_boundary

    u = [[int(i == j) for j in range(p)] for i in range(p)]
    uinv = [[int(i == j) for j in range(p)] for i in range(p)]
    mu, b = _gram_schmidt(g)

    def size_reduce(k: int, j: int) -> None:
        r = round(mu[k, j])
        if r == 0:
            return
        g[k, :] -= r * g[j, :]
        g[:, k] -= r * g[:, j]
        for row in range(p):
            u[row][k] -= r * u[row][j]
        for col in range(p):
            uinv[j][col] += r * uinv[k][col]
        mu[k, :j] -= r * mu[j, :j]
        mu[k, j] -= r

    max_steps = 40000 * p * p
    steps = 0
    k = 1
    while k < p:
        steps += 1
        if steps > max_steps:
            raise ReductionFailed(
                f"no convergence within {max_steps} steps; retry with delta < 1"
            )
        for j in range(k - 1, -1, -1):
            size_reduce(k, j)
        swap_allowed = boundary_rev is None or k != boundary_rev
        lovasz_rhs = (delta - mu[k, k - 1] ** 2) * b[k - 1]
        if (not swap_allowed) or b[k] >= lovasz_rhs * (1.0 - 1e-14):
            k += 1
            continue
        g[[k - 1, k], :] = g[[k, k - 1], :]
        g[:, [k - 1, k]] = g[:, [k, k - 1]]
        for row in range(p):
            u[row][k - 1], u[row][k] = u[row][k], u[row][k - 1]
        uinv[k - 1], uinv[k] = uinv[k], uinv[k - 1]
        mu, b = _gram_schmidt(g)
        k = max(k - 1, 1)

    flip = slice(None, None, -1)
    z_rows = [[uinv[p - 1 - i][p - 1 - j] for j in range(p)] for i in range(p)]
    z = UnimodularTransform(z_rows)
    m_reduced = SpdForm(g[flip, flip])
    reduced = ReducedForm(original=m, transform=z, reduced=m_reduced,
                          factor=cholesky(m_reduced))

    zf = z.entries.astype(float)
    check = zf.T @ m_reduced.entries @ zf
    rel = float(np.max(np.abs(check - m.entries))) / (float(np.max(np.abs(m.entries))) or 1.0)
    if rel > 1e-9:
        raise ReductionFailed(f"round-trip residual {rel:.3e} exceeds 1e-9")

    # Reduction must never worsen the work estimate it optimizes.
    if complexity_estimate(reduced) > complexity_estimate(m):
        ident = UnimodularTransform(np.eye(p, dtype=int))
        return ReducedForm(original=m, transform=ident, reduced=m, factor=cholesky(m))
    return reduced


def identity_reduction(m: SpdForm) -> ReducedForm:
    """Trivial reduction wrapper (useful when the form is already well ordered)."""
    return ReducedForm(
        original=m,
        transform=UnimodularTransform(np.eye(m.dim, dtype=int)),
        reduced=m,
        factor=cholesky(m),
    )


def write_matrix(m: SpdForm | np.ndarray, path: str | Path) -> None:
    """Plain-text exchange format: first line p, then p whitespace-separated rows."""
    a = m.entries if isinstance(m, SpdForm) else _as_square(m)
    lines = [str(a.shape[0])]
    lines += [" ".join(repr(float(x)) for x in row) for row in a]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path: str | Path) -> np.ndarray:
    """Read the plain-text matrix exchange format."""
    tokens = Path(path).read_text().split()
    if not tokens:
        raise ValidationError(f"{path}: empty matrix file")
    try:
        p = int(tokens[0])
        vals = [float(t) for t in tokens[1:]]
    except ValueError as exc:
        raise ValidationError(f"{path}: malformed matrix file: {exc}") from exc
    if len(vals) != p * p:
        raise ValidationError(f"{path}: expected {p * p} entries, found {len(vals)}")
    return np.array(vals, dtype=float).reshape(p, p)

"""Lattice search and the two optimal decision rules.

A decision model couples a quadratic form with the common-increment sublattice that
must be marginalized: candidate integer vectors that differ by a sublattice element
carry the same decision value, and their posterior weights are summed. Internally
the coordinates are arranged (unimodular) so the sublattice spans the trailing
coordinates; the basis reduction then never mixes the two blocks, and the search
aggregates weights by the leading-coordinate prefix.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np

from . import _search
from ._intmat import complete_basis
from .errors import CapacityExceeded, DimensionMismatch, ValidationError
from .lattice import ReducedForm, SpdForm, lll_reduce

DEFAULT_TRUNCATION = 50.0
DEFAULT_CAP = 10**7
TIE_TOL = 1e-12
_GROUP_START = 256
_GROUP_CAP = 1 << 22


class Separability(enum.Enum):
    SEPARABLE = "separable"
    INTERMEDIATE = "intermediate"
    NONSEPARABLE = "nonseparable"


@dataclass(frozen=True, eq=False)
class AmbiguityModel:
    """A decision form plus the sublattice metadata driving marginalization.

    For separable models the form already lives on the decision coordinates
    (p0 = 0, p_delta = p). Otherwise n0_basis rows span the integer directions of
    the common increment, and decisions are equivalence classes modulo that
    sublattice.
    """

    form: SpdForm
    p0: int = 0
    n0_basis: np.ndarray | None = None
    separability: Separability = Separability.SEPARABLE

    def __post_init__(self):
        if self.p0 < 0 or self.p0 >= self.p:
            raise ValidationError(f"p0 = {self.p0} must lie in [0, p)")
        if self.p0 == 0:
            if self.n0_basis is not None and len(self.n0_basis) > 0:
                raise ValidationError("separable model cannot carry an n0 basis")
            if self.separability is not Separability.SEPARABLE:
                raise ValidationError("p0 = 0 requires the separable flag")
            object.__setattr__(self, "n0_basis", None)
            return
        if self.separability is Separability.SEPARABLE:
            raise ValidationError("separable flag requires p0 = 0")
        basis = np.asarray(self.n0_basis, dtype=np.int64)
        if basis.shape != (self.p0, self.p):
            raise DimensionMismatch(
                f"n0 basis shape {basis.shape} does not match (p0, p) = "
                f"({self.p0}, {self.p})"
            )
        if np.linalg.matrix_rank(basis.astype(float)) != self.p0:
            raise ValidationError("n0 basis vectors must be linearly independent")
        basis.flags.writeable = False
        object.__setattr__(self, "n0_basis", basis)

    @property
    def p(self) -> int:
        return self.form.dim

    @property
    def p_delta(self) -> int:
        return self.p - self.p0


@dataclass(frozen=True)
class DecisionOutcome:
    """Chosen decision vector (None = judgment avoided) plus search statistics."""

    chosen: np.ndarray | None
    confidence: float
    visited_nodes: int
    radius_final: float


def _check_nu(dim: int, nu) -> np.ndarray:
    v = np.asarray(nu, dtype=float)
    if v.shape != (dim,):
        raise DimensionMismatch(f"float solution length {v.shape} does not match p = {dim}")
    return v


def babai_nearest_plane(r: ReducedForm, nu) -> np.ndarray:
    """Layer-by-layer rounding; fast, suboptimal, O(p^2)."""
    nup = r.to_reduced_coords(_check_nu(r.original.dim, nu))
    n_prime = _search.babai_kernel(r.search_factor, nup)
    return r.from_reduced_coords(n_prime)


def closest_lattice_point(r: ReducedForm, nu, node_cap: int = DEFAULT_CAP):
    """Global minimizer of the quadratic form over the integer lattice.

    Returns (point, squared distance). The search starts from the nearest-plane
    point, whose distance fixes the initial radius, and shrinks the radius on every
    complete solution.
    """
    nup = r.to_reduced_coords(_check_nu(r.original.dim, nu))
    radii = np.zeros(64)
    best, best_d, visited, nrad, status = _search.closest_kernel(
        r.search_factor, nup, False, node_cap, radii
    )
    if status != _search.STATUS_OK:
        raise CapacityExceeded(f"closest-point search exceeded {node_cap} nodes")
    return r.from_reduced_coords(best), float(best_d)


def shortest_vector(r: ReducedForm, node_cap: int = DEFAULT_CAP):
    """Shortest nonzero lattice vector and its squared norm."""
    nup = np.zeros(r.original.dim)
    radii = np.zeros(64)
    best, best_d, visited, nrad, status = _search.closest_kernel(
        r.search_factor, nup, True, node_cap, radii
    )
    if status != _search.STATUS_OK:
        raise CapacityExceeded(f"shortest-vector search exceeded {node_cap} nodes")
    return r.from_reduced_coords(best), float(best_d)


def enumerate_within_radius(r: ReducedForm, nu, chi: float, cap: int = DEFAULT_CAP):
    """Exactly the lattice points with quadratic form <= chi^2, ascending.

    Returns a list of (point, squared distance). Raises CapacityExceeded when more
    than ``cap`` points fall inside.
    """
    if chi <= 0:
        raise ValidationError(f"radius must be positive, got {chi}")
    nup = r.to_reduced_coords(_check_nu(r.original.dim, nu))
    a = r.search_factor
    size = 4096
    while True:
        out_n = np.zeros((size, a.shape[0]), np.int64)
        out_d = np.zeros(size)
        count, visited, status = _search.enumerate_kernel(
            a, nup, chi * chi, out_n, out_d, cap
        )
        if status == _search.STATUS_OK:
            break
        if status == _search.STATUS_OUT_FULL and size < cap:
            size = min(size * 4, cap)
            continue
        raise CapacityExceeded(f"enumeration exceeded the cap of {cap} points")
    order = np.argsort(out_d[:count], kind="stable")
    back = r.transform.inverse
    return [(back @ out_n[i], float(out_d[i])) for i in order]


class Decoder:
    """Per-model search plan: coordinate arrangement, reduction, and buffers.

    Safe for concurrent *independent* instances; a single instance reuses its
    scratch buffers and is not thread-safe.
    """

    def __init__(self, model: AmbiguityModel, delta: float = 1.0):
        self.model = model
        p, p0 = model.p, model.p0
        if p0 > 0:
            t, tinv = complete_basis([[int(x) for x in v] for v in model.n0_basis])
            self.t = np.array(t, dtype=np.int64)
            self.tinv = np.array(tinv, dtype=np.int64)
        else:
            self.t = np.eye(p, dtype=np.int64)
            self.tinv = np.eye(p, dtype=np.int64)
        arranged = SpdForm(self.t.T.astype(float) @ model.form.entries @ self.t.astype(float))
        boundary = model.p_delta if p0 > 0 else None
        self.reduction = lll_reduce(arranged, delta=delta, block_boundary=boundary)
        self.a = self.reduction.search_factor
        # model nu -> search coords, and search leaf -> model coords
        self.nu_map = self.reduction.transform.entries.astype(float) @ \
            self.tinv.astype(float)
        self.zinv = self.reduction.transform.inverse
        self.p_delta = model.p_delta
        self._group_size = _GROUP_START
        self._alloc_groups()
        self._h0 = None

    def _alloc_groups(self):
        k, p = self._group_size, self.model.p
        self._keys = np.zeros((k, p), np.int64)
        self._mass = np.zeros(k)
        self._bestd = np.zeros(k)
        self._bestleaf = np.zeros((k, p), np.int64)

    def _posterior_raw(self, nu_model, c, node_cap):
        nup = self.nu_map @ _check_nu(self.model.p, nu_model)
        while True:
            kcount, shift, best_d, visited, chi2, status = _search.posterior_kernel(
                self.a, nup, self.p_delta, c, self._keys, self._mass,
                self._bestd, self._bestleaf, node_cap
            )
            if status == _search.STATUS_OK:
                return kcount, shift, best_d, visited, chi2
            if status == _search.STATUS_GROUP_FULL and self._group_size < _GROUP_CAP:
                self._group_size *= 4
                self._alloc_groups()
                continue
            raise CapacityExceeded("posterior enumeration exceeded its buffers")

    def canonical_rep(self, slot: int) -> np.ndarray:
        """Decision vector for a group: trailing sublattice coordinates zeroed."""
        leaf = self._bestleaf[slot]
        arr = self.zinv @ leaf
        arr[self.p_delta:] = 0
        return self.t @ arr

    def h0(self, c: float = DEFAULT_TRUNCATION, node_cap: int = DEFAULT_CAP) -> float:
        """Winner posterior when the float solution sits exactly on a lattice point."""
        if self._h0 is None:
            kcount, shift, best_d, visited, chi2 = self._posterior_raw(
                np.zeros(self.model.p), c, node_cap
            )
            total = float(np.sum(self._mass[:kcount]))
            top = int(np.argmax(self._mass[:kcount]))
            self._h0 = float(self._mass[top]) / total
        return self._h0

    def posterior(self, nu, c, node_cap):
        """Normalized per-decision masses, descending; ties lexicographic."""
        kcount, shift, best_d, visited, chi2 = self._posterior_raw(nu, c, node_cap)
        masses = self._mass[:kcount]
        total = float(np.sum(masses))
        reps = [self.canonical_rep(i) for i in range(kcount)]
        order = sorted(range(kcount),
                       key=lambda i: (-masses[i], tuple(reps[i].tolist())))
        return [(reps[i], float(masses[i]) / total) for i in order], visited, chi2

    def decide(self, nu, h_prime, c, node_cap) -> DecisionOutcome:
        kcount, shift, best_d, visited, chi2 = self._posterior_raw(nu, c, node_cap)
        masses = self._mass[:kcount]
        total = float(np.sum(masses))
        top = int(np.argmax(masses))
        best_mass = float(masses[top])
        for j in range(kcount):
            if j == top or abs(float(masses[j]) - best_mass) > TIE_TOL * total:
                continue
            if tuple(self.canonical_rep(j).tolist()) < tuple(self.canonical_rep(top).tolist()):
                top = j
        confidence = min(1.0, (float(masses[top]) / total) / self.h0(c, node_cap))
        chosen = self.canonical_rep(top) if confidence >= h_prime else None
        return DecisionOutcome(
            chosen=chosen,
            confidence=confidence,
            visited_nodes=int(visited),
            radius_final=float(chi2),
        )

    def decide_batch(self, nus_model: np.ndarray, h_prime: float, c, node_cap):
        """Vectorized decisions for sampling loops.

        Returns (win0, accept, conf) arrays; win0 marks the zero decision winning.
        """
        nups = np.ascontiguousarray(nus_model @ self.nu_map.T)
        n = nups.shape[0]
        win0 = np.zeros(n, np.uint8)
        accept = np.zeros(n, np.uint8)
        conf = np.zeros(n)
        while True:
            status = _search.decide_batch_kernel(
                self.a, nups, self.p_delta, c, self.h0(c, node_cap), h_prime,
                TIE_TOL, self._keys, self._mass, self._bestd, self._bestleaf,
                node_cap, win0, accept, conf
            )
            if status == _search.STATUS_OK:
                return win0, accept, conf
            if status == _search.STATUS_GROUP_FULL and self._group_size < _GROUP_CAP:
                self._group_size *= 4
                self._alloc_groups()
                continue
            raise CapacityExceeded("batch decision enumeration exceeded its buffers")

    def closest_batch(self, nus_model: np.ndarray, node_cap):
        """win0 flags from pure closest-point decisions (separable fast path)."""
        nups = np.ascontiguousarray(nus_model @ self.nu_map.T)
        win0 = np.zeros(nups.shape[0], np.uint8)
        status = _search.closest_batch_kernel(self.a, nups, node_cap, win0)
        if status != _search.STATUS_OK:
            raise CapacityExceeded("batch closest-point search exceeded the node cap")
        return win0


@functools.lru_cache(maxsize=64)
def _decoder_for(model: AmbiguityModel) -> Decoder:
    return Decoder(model)


def truncated_posterior(model: AmbiguityModel, nu, c: float = DEFAULT_TRUNCATION,
                        node_cap: int = DEFAULT_CAP):
    """Finite posterior over decision vectors, truncated at radius best + c.

    Masses are normalized to sum to one; the truncated tail is below about
    exp(-c/2) in relative mass. For marginal models each mass already sums the
    weights of the whole equivalence class found inside the radius.
    """
    if c <= 0:
        raise ValidationError(f"truncation constant must be positive, got {c}")
    posterior, _, _ = _decoder_for(model).posterior(nu, c, node_cap)
    return posterior


def map_decision(model: AmbiguityModel, nu, c: float = DEFAULT_TRUNCATION,
                 node_cap: int = DEFAULT_CAP) -> DecisionOutcome:
    """Posterior-maximizing decision; never avoids a judgment."""
    return _decoder_for(model).decide(_check_nu(model.p, nu), 0.0, c, node_cap)


def conditional_decision(model: AmbiguityModel, nu, h_prime: float,
                         c: float = DEFAULT_TRUNCATION,
                         node_cap: int = DEFAULT_CAP) -> DecisionOutcome:
    """Thresholded decision: the winner is returned only with confidence >= h_prime.

    Equality counts as acceptance. h_prime is on the normalized scale where a float
    solution exactly on a lattice point scores one.
    """
    if h_prime < 0:
        raise ValidationError(f"h_prime must be nonnegative, got {h_prime}")
    return _decoder_for(model).decide(_check_nu(model.p, nu), h_prime, c, node_cap)


def canonical_representative(model: AmbiguityModel, n) -> np.ndarray:
    """Canonical member of n's equivalence class (trailing sublattice coords zeroed)."""
    dec = _decoder_for(model)
    v = np.asarray(n, dtype=np.int64)
    if v.shape != (model.p,):
        raise DimensionMismatch(f"vector length {v.shape} does not match p = {model.p}")
    arr = dec.tinv @ v
    arr[model.p_delta:] = 0
    return dec.t @ arr

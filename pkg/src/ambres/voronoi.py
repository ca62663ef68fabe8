"""Facet-adjacent (Voronoi-relevant) lattice vectors and their distances.

A nonzero lattice vector n is relevant when the closed ellipsoid centered at n/2
with squared radius (n^T M n)/4 contains no lattice point besides 0 and n; each
such vector contributes a facet of the origin's decision cell, and the facet
distances drive every rate bound. One representative per +-pair is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _search
from .decoder import AmbiguityModel, Decoder, _decoder_for
from .errors import CapacityExceeded, ValidationError
from .lattice import SpdForm, identity_reduction, lll_reduce

DEFAULT_NODE_CAP = 10**8
_OUT_START = 1024
_OUT_CAP = 1 << 21


@dataclass(frozen=True)
class RelevantVectorSet:
    """Facet vectors (one per +-pair) with distances sorted ascending."""

    vectors: np.ndarray        # (q, p) int64, model coordinates
    distances: np.ndarray      # (q,) sqrt(n^T M n), ascending
    threshold_c: float         # slack used by the dynamic radius

    @property
    def q(self) -> int:
        return self.vectors.shape[0]

    @property
    def a_min(self) -> float:
        return float(self.distances[0])

    @property
    def a_max(self) -> float:
        return float(self.distances[-1])


def default_threshold(a_min: float) -> float:
    """Dynamic-radius slack: 2 a_min^2 + 10 keeps truncated facets negligible."""
    return 2.0 * a_min * a_min + 10.0


def is_relevant(m: SpdForm, n, node_cap: int = DEFAULT_NODE_CAP) -> bool:
    """Membership test: ellipsoid around n/2 of radius a/2 holds exactly {0, n}."""
    v = np.asarray(n, dtype=np.int64)
    if v.shape != (m.dim,):
        raise ValidationError(f"vector length {v.shape} does not match p = {m.dim}")
    if not np.any(v):
        raise ValidationError("the zero vector has no facet")
    r = lll_reduce(m)
    n_prime = r.transform.entries @ v
    a2 = float(v @ m.entries @ v)
    return bool(_search.is_relevant_kernel(r.search_factor, n_prime, a2, node_cap))


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so its first nonzero entry is positive."""
    out = vectors.copy()
    for row in out:
        nz = np.nonzero(row)[0]
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return out


def relevant_vectors(model: AmbiguityModel, c: float | None = None,
                     a_cap: float | None = None,
                     node_cap: int = DEFAULT_NODE_CAP) -> RelevantVectorSet:
    """All facet vectors with squared distance up to (largest found) + c.

    The scan enumerates candidates around the origin, discards common-increment
    sublattice members for marginal models, and certifies each survivor with the
    membership test. The radius starts at a_min^2 + c and the scan restarts with a
    grown radius until the last certified facet sits at least c inside it, which
    realizes the dynamic-radius rule without resurrecting pruned subtrees.

    In high dimension the complete facet set (up to 2^p - 1 pairs at distances up
    to twice the covering radius) is out of computational reach and contributes
    nothing measurable to the bounds; pass a_cap to truncate the scan at facet
    distance a_cap (a_min + 6 discards only facets with relative contribution
    below ~e^-18).
    """
    dec: Decoder = _decoder_for(model)
    a = dec.a
    p = model.p

    from .decoder import shortest_vector
    _, a_min2 = shortest_vector(dec.reduction, node_cap)
    if c is None:
        c = default_threshold(np.sqrt(a_min2))
    if c <= 0:
        raise ValidationError(f"threshold slack must be positive, got {c}")
    cap2 = np.inf if a_cap is None else max(a_cap * a_cap, a_min2 * (1.0 + 1e-9))

    zinv = dec.zinv
    size = _OUT_START
    chi2 = min(a_min2 + c, cap2)
    while True:
        out_n = np.zeros((size, p), np.int64)
        out_a2 = np.zeros(size)
        count, max_a2, visited, status = _search.relevant_pass_kernel(
            a, chi2, zinv, model.p0, out_n, out_a2, node_cap
        )
        if status == _search.STATUS_OUT_FULL and size < _OUT_CAP:
            size = min(size * 4, _OUT_CAP)
            continue
        if status != _search.STATUS_OK:
            raise CapacityExceeded("facet scan exceeded its caps")
        if count == 0:
            raise ValidationError("facet scan found no vectors; degenerate form")
        target = min(max_a2 + c, cap2)
        if target > chi2 * (1.0 + 1e-12):
            chi2 = target
            continue
        break

    back = dec.t.astype(np.int64) @ dec.zinv.astype(np.int64)
    vecs = (out_n[:count] @ back.T).astype(np.int64)
    vecs = _canonical_signs(vecs)
    dists = np.sqrt(out_a2[:count])
    order = np.lexsort(tuple(vecs[:, i] for i in range(p - 1, -1, -1)))
    vecs, dists = vecs[order], dists[order]
    order = np.argsort(dists, kind="stable")
    vecs, dists = vecs[order], dists[order]
    vecs.flags.writeable = False
    dists.flags.writeable = False
    return RelevantVectorSet(vectors=vecs, distances=dists, threshold_c=float(c))


def pairwise_condition_holds(m: SpdForm, rv: RelevantVectorSet) -> bool:
    """Necessary condition on every retained pair: |n_i^T M n_j| < a_i^2."""
    g = rv.vectors.astype(float) @ m.entries @ rv.vectors.T.astype(float)
    a2 = rv.distances**2
    off = np.abs(g) - a2[:, None] * (1 + 1e-12)
    np.fill_diagonal(off, -1.0)
    return bool(np.all(off < 0))

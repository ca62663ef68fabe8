"""Shared fixtures and independent brute-force oracles.

The oracles here deliberately avoid the package's search machinery: box
enumeration is plain numpy over explicit integer grids, and memberships are
tested from the definitions. They stay independent of the code paths they check.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from ambres.lattice import SpdForm


def random_spd(p: int, seed: int, scale: float = 1.0, spread: float = 1.0) -> SpdForm:
    """Seeded random SPD form with eigenvalues spread over ~10**spread."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    eigs = 10.0 ** rng.uniform(-spread / 2, spread / 2, size=p)
    return SpdForm(scale * (q * eigs) @ q.T)


def int_box(p: int, radius: int) -> np.ndarray:
    """All integer vectors with infinity norm <= radius, shape (count, p)."""
    rng = range(-radius, radius + 1)
    return np.array(list(itertools.product(rng, repeat=p)), dtype=np.int64)


def box_distances(m: np.ndarray, points: np.ndarray, nu: np.ndarray) -> np.ndarray:
    diff = points.astype(float) - nu[None, :]
    return np.einsum("ij,jk,ik->i", diff, m, diff)


def box_closest(m: np.ndarray, nu: np.ndarray, radius: int = 3):
    """Exhaustive closest point over the box around round(nu)."""
    center = np.rint(nu).astype(np.int64)
    pts = int_box(len(nu), radius) + center[None, :]
    d = box_distances(m, pts, nu)
    i = int(np.argmin(d))
    interior = bool(np.all(np.abs(pts[i] - center) < radius))
    return pts[i], float(d[i]), interior


def box_relevant(m: np.ndarray, radius: int = 4) -> set:
    """Exhaustive facet scan: membership test from the definition over a box.

    Returns canonical (first nonzero positive) tuples.
    """
    p = m.shape[0]
    cands = int_box(p, radius)
    cands = cands[np.any(cands != 0, axis=1)]
    # membership box has to cover the test ellipsoids themselves
    test_pts = int_box(p, 2 * radius + 1)
    out = set()
    for n in cands:
        first = n[np.nonzero(n)[0][0]]
        if first < 0:
            continue
        a2 = float(n @ m @ n)
        d = box_distances(m, test_pts, n.astype(float) / 2.0)
        inside = test_pts[d <= a2 / 4.0 * (1.0 + 1e-9)]
        ok = all(np.all(v == 0) or np.all(v == n) for v in inside)
        if ok:
            out.add(tuple(int(x) for x in n))
    return out


@pytest.fixture(scope="session")
def warm_kernels():
    """Compile the numba kernels once up front."""
    from ambres.decoder import AmbiguityModel, map_decision
    from ambres.voronoi import relevant_vectors

    m = AmbiguityModel(SpdForm(np.diag([9.0, 16.0])))
    map_decision(m, [0.1, -0.2])
    relevant_vectors(m)
    return True

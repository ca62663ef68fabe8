"""Depth-first lattice search kernels (numba-compiled).

All kernels work on a lower-triangular factor ``a`` with a^T a equal to the searched
quadratic form, in layer order: layer 0 fixes coordinate 0, the bottom layer is p-1,
and the partial distance after fixing coordinates 0..i is a function of those
coordinates alone. Branches at each layer follow the zig-zag ordering (rounded
center, then outward alternating), which visits candidates in nondecreasing partial
distance, so the first complete solution is the nearest-plane point and a failed
candidate prunes its whole layer.

The *_core functions take caller-owned scratch so batch drivers pay no per-sample
allocations. Scratch contract: dist[0] and ps[0, :] must be zero on entry; the cores
never write them, so buffers can be reused across calls.

Status codes: 0 ok, 1 node cap hit, 2 group buffer full, 3 output buffer full.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_NODE_CAP = 1
STATUS_GROUP_FULL = 2
STATUS_OUT_FULL = 3


@njit(cache=True, inline="always")
def _nearest_int(c):
    return np.int64(math.floor(c + 0.5))


@njit(cache=True, inline="always")
def _init_step(c, n):
    if c >= n:
        return np.int64(1)
    return np.int64(-1)


@njit(cache=True)
def _scratch(p):
    nvec = np.zeros(p, np.int64)
    dist = np.zeros(p + 1)
    ps = np.zeros((p + 1, p))
    cent = np.zeros(p)
    step = np.zeros(p, np.int64)
    return nvec, dist, ps, cent, step


@njit(cache=True)
def babai_kernel(a, nup):
    """Nearest-plane solution: round layer by layer, top to bottom."""
    p = a.shape[0]
    n = np.zeros(p, np.int64)
    s = np.zeros(p)
    for i in range(p):
        c = nup[i] - s[i] / a[i, i]
        n[i] = _nearest_int(c)
        diff = n[i] - nup[i]
        for k in range(i + 1, p):
            s[k] += a[k, i] * diff
    return n


@njit(cache=True)
def _closest_core(a, nup, skip_zero, node_cap, radii_out, best,
                  nvec, dist, ps, cent, step):
    p = a.shape[0]
    best_d = np.inf
    chi2 = np.inf
    visited = 0
    nrad = 0
    status = STATUS_OK

    i = 0
    cent[0] = nup[0]
    nvec[0] = _nearest_int(cent[0])
    step[0] = _init_step(cent[0], nvec[0])
    while True:
        visited += 1
        if visited > node_cap:
            status = STATUS_NODE_CAP
            break
        y = a[i, i] * (nvec[i] - cent[i])
        d = dist[i] + y * y
        if d <= chi2:
            if i == p - 1:
                take = True
                if skip_zero:
                    take = False
                    for j in range(p):
                        if nvec[j] != 0:
                            take = True
                            break
                if take and d < best_d:
                    best_d = d
                    chi2 = d
                    for j in range(p):
                        best[j] = nvec[j]
                    if nrad < radii_out.shape[0]:
                        radii_out[nrad] = d
                    nrad += 1
                nvec[i] += step[i]
                step[i] = -step[i] - (1 if step[i] > 0 else -1)
            else:
                diff = nvec[i] - nup[i]
                for k in range(i + 1, p):
                    ps[i + 1, k] = ps[i, k] + a[k, i] * diff
                dist[i + 1] = d
                i += 1
                cent[i] = nup[i] - ps[i, i] / a[i, i]
                nvec[i] = _nearest_int(cent[i])
                step[i] = _init_step(cent[i], nvec[i])
        else:
            i -= 1
            if i < 0:
                break
            nvec[i] += step[i]
            step[i] = -step[i] - (1 if step[i] > 0 else -1)
    return best_d, visited, nrad, status


@njit(cache=True)
def closest_kernel(a, nup, skip_zero, node_cap, radii_out):
    """Closest lattice point (or shortest nonzero vector when skip_zero)."""
    p = a.shape[0]
    best = np.zeros(p, np.int64)
    nvec, dist, ps, cent, step = _scratch(p)
    best_d, visited, nrad, status = _closest_core(
        a, nup, skip_zero, node_cap, radii_out, best, nvec, dist, ps, cent, step
    )
    return best, best_d, visited, nrad, status


@njit(cache=True)
def enumerate_kernel(a, nup, chi2, out_n, out_d, node_cap):
    """All lattice points with quadratic form <= chi2 (fixed radius)."""
    p = a.shape[0]
    cap = out_n.shape[0]
    nvec, dist, ps, cent, step = _scratch(p)
    count = 0
    visited = 0
    status = STATUS_OK

    i = 0
    cent[0] = nup[0]
    nvec[0] = _nearest_int(cent[0])
    step[0] = _init_step(cent[0], nvec[0])
    while True:
        visited += 1
        if visited > node_cap:
            status = STATUS_NODE_CAP
            break
        y = a[i, i] * (nvec[i] - cent[i])
        d = dist[i] + y * y
        if d <= chi2:
            if i == p - 1:
                if count >= cap:
                    status = STATUS_OUT_FULL
                    break
                for j in range(p):
                    out_n[count, j] = nvec[j]
                out_d[count] = d
                count += 1
                nvec[i] += step[i]
                step[i] = -step[i] - (1 if step[i] > 0 else -1)
            else:
                diff = nvec[i] - nup[i]
                for k in range(i + 1, p):
                    ps[i + 1, k] = ps[i, k] + a[k, i] * diff
                dist[i + 1] = d
                i += 1
                cent[i] = nup[i] - ps[i, i] / a[i, i]
                nvec[i] = _nearest_int(cent[i])
                step[i] = _init_step(cent[i], nvec[i])
        else:
            i -= 1
            if i < 0:
                break
            nvec[i] += step[i]
            step[i] = -step[i] - (1 if step[i] > 0 else -1)
    return count, visited, status


@njit(cache=True)
def _posterior_core(a, nup, p_delta, c, keys, mass, bestd, bestleaf, node_cap,
                    nvec, dist, ps, cent, step):
    p = a.shape[0]
    kcap = keys.shape[0]
    kcount = 0
    shift = np.inf
    best_d = np.inf
    chi2 = np.inf
    visited = 0
    status = STATUS_OK

    i = 0
    cent[0] = nup[0]
    nvec[0] = _nearest_int(cent[0])
    step[0] = _init_step(cent[0], nvec[0])
    while True:
        visited += 1
        if visited > node_cap:
            status = STATUS_NODE_CAP
            break
        y = a[i, i] * (nvec[i] - cent[i])
        d = dist[i] + y * y
        if d <= chi2:
            if i == p - 1:
                if d < best_d:
                    if shift < np.inf:
                        fac = math.exp(-(shift - d) / 2.0)
                        for j in range(kcount):
                            mass[j] *= fac
                    shift = d
                    best_d = d
                    chi2 = d + c
                w = math.exp(-(d - shift) / 2.0)
                slot = -1
                for j in range(kcount):
                    same = True
                    for t in range(p_delta):
                        if keys[j, t] != nvec[t]:
                            same = False
                            break
                    if same:
                        slot = j
                        break
                if slot < 0:
                    if kcount >= kcap:
                        status = STATUS_GROUP_FULL
                        break
                    slot = kcount
                    kcount += 1
                    for t in range(p_delta):
                        keys[slot, t] = nvec[t]
                    mass[slot] = 0.0
                    bestd[slot] = np.inf
                mass[slot] += w
                if d < bestd[slot]:
                    bestd[slot] = d
                    for t in range(p):
                        bestleaf[slot, t] = nvec[t]
                nvec[i] += step[i]
                step[i] = -step[i] - (1 if step[i] > 0 else -1)
            else:
                diff = nvec[i] - nup[i]
                for k in range(i + 1, p):
                    ps[i + 1, k] = ps[i, k] + a[k, i] * diff
                dist[i + 1] = d
                i += 1
                cent[i] = nup[i] - ps[i, i] / a[i, i]
                nvec[i] = _nearest_int(cent[i])
                step[i] = _init_step(cent[i], nvec[i])
        else:
            i -= 1
            if i < 0:
                break
            nvec[i] += step[i]
            step[i] = -step[i] - (1 if step[i] > 0 else -1)
    return kcount, shift, best_d, visited, chi2, status


@njit(cache=True)
def posterior_kernel(a, nup, p_delta, c, keys, mass, bestd, bestleaf, node_cap):
    """Group leaf weights by the first p_delta coordinates, radius best + c.

    Masses are exp(-(d - shift)/2) with shift equal to the best distance seen so
    far; they are rescaled whenever the best improves. Returns (group count,
    shift, best distance, visited, final radius^2, status).
    """
    p = a.shape[0]
    nvec, dist, ps, cent, step = _scratch(p)
    return _posterior_core(a, nup, p_delta, c, keys, mass, bestd, bestleaf,
                           node_cap, nvec, dist, ps, cent, step)


@njit(cache=True)
def is_relevant_kernel(a, n_prime, a2, node_cap):
    """Closed-ellipsoid membership test around n/2 with squared radius a2/4.

    True iff the only lattice points inside are the origin and n itself; any third
    point (boundary included, up to a small relative slack) exits early.
    """
    p = a.shape[0]
    chi2 = 0.25 * a2 * (1.0 + 1e-9)
    nup = np.empty(p)
    for j in range(p):
        nup[j] = 0.5 * n_prime[j]
    nvec, dist, ps, cent, step = _scratch(p)
    visited = 0

    i = 0
    cent[0] = nup[0]
    nvec[0] = _nearest_int(cent[0])
    step[0] = _init_step(cent[0], nvec[0])
    while True:
        visited += 1
        if visited > node_cap:
            return False
        y = a[i, i] * (nvec[i] - cent[i])
        d = dist[i] + y * y
        if d <= chi2:
            if i == p - 1:
                is_zero = True
                is_n = True
                for j in range(p):
                    if nvec[j] != 0:
                        is_zero = False
                    if nvec[j] != n_prime[j]:
                        is_n = False
                if not (is_zero or is_n):
                    return False
                nvec[i] += step[i]
                step[i] = -step[i] - (1 if step[i] > 0 else -1)
            else:
                diff = nvec[i] - nup[i]
                for k in range(i + 1, p):
                    ps[i + 1, k] = ps[i, k] + a[k, i] * diff
                dist[i + 1] = d
                i += 1
                cent[i] = nup[i] - ps[i, i] / a[i, i]
                nvec[i] = _nearest_int(cent[i])
                step[i] = _init_step(cent[i], nvec[i])
        else:
            i -= 1
            if i < 0:
                break
            nvec[i] += step[i]
            step[i] = -step[i] - (1 if step[i] > 0 else -1)
    return True


@njit(cache=True)
def relevant_pass_kernel(a, chi2, zinv, n0_rank, out_n, out_a2, node_cap):
    """One fixed-radius pass of the facet scan around the origin.

    Enumerates one representative of each +-pair with squared norm <= chi2, skips
    vectors inside the common-increment sublattice (those whose first p - n0_rank
    coordinates vanish after mapping back by zinv) when n0_rank > 0, and keeps the
    vectors passing the membership test. Returns (count, largest kept squared norm,
    visited, status).
    """
    p = a.shape[0]
    cap = out_n.shape[0]
    p_delta = p - n0_rank
    nup = np.zeros(p)
    nvec, dist, ps, cent, step = _scratch(p)
    count = 0
    max_a2 = 0.0
    visited = 0
    status = STATUS_OK

    i = 0
    cent[0] = 0.0
    nvec[0] = 0
    step[0] = np.int64(1)
    while True:
        visited += 1
        if visited > node_cap:
            status = STATUS_NODE_CAP
            break
        y = a[i, i] * (nvec[i] - cent[i])
        d = dist[i] + y * y
        if d <= chi2:
            if i == p - 1:
                keep = False
                for j in range(p):
                    if nvec[j] != 0:
                        keep = nvec[j] > 0
                        break
                if keep and n0_rank > 0:
                    inside = True
                    for r in range(p_delta):
                        acc = np.int64(0)
                        for j in range(p):
                            acc += zinv[r, j] * nvec[j]
                        if acc != 0:
                            inside = False
                            break
                    if inside:
                        keep = False
                if keep and is_relevant_kernel(a, nvec, d, node_cap):
                    if count >= cap:
                        status = STATUS_OUT_FULL
                        break
                    for j in range(p):
                        out_n[count, j] = nvec[j]
                    out_a2[count] = d
                    count += 1
                    if d > max_a2:
                        max_a2 = d
                nvec[i] += step[i]
                step[i] = -step[i] - (1 if step[i] > 0 else -1)
            else:
                diff = nvec[i] - nup[i]
                for k in range(i + 1, p):
                    ps[i + 1, k] = ps[i, k] + a[k, i] * diff
                dist[i + 1] = d
                i += 1
                cent[i] = -ps[i, i] / a[i, i]
                nvec[i] = _nearest_int(cent[i])
                step[i] = _init_step(cent[i], nvec[i])
        else:
            i -= 1
            if i < 0:
                break
            nvec[i] += step[i]
            step[i] = -step[i] - (1 if step[i] > 0 else -1)
    return count, max_a2, visited, status


@njit(cache=True)
def decide_batch_kernel(a, nups, p_delta, c, h0, h_prime, tie_tol,
                        keys, mass, bestd, bestleaf, node_cap,
                        win0, accept, conf):
    """Run the grouped-posterior decision on each row of nups.

    Fills win0 (winner is the zero group), accept (confidence >= h_prime) and conf
    (winner posterior normalized by h0, clipped to 1). Ties within tie_tol of the
    top normalized mass resolve to the lexicographically smallest key.
    """
    p = a.shape[0]
    nsamp = nups.shape[0]
    nvec, dist, ps, cent, step = _scratch(p)
    for s in range(nsamp):
        kcount, shift, best_d, visited, chi2, status = _posterior_core(
            a, nups[s], p_delta, c, keys, mass, bestd, bestleaf, node_cap,
            nvec, dist, ps, cent, step
        )
        if status != STATUS_OK:
            return status
        total = 0.0
        for j in range(kcount):
            total += mass[j]
        top = 0
        for j in range(1, kcount):
            if mass[j] > mass[top]:
                top = j
        for j in range(kcount):
            if j == top:
                continue
            if abs(mass[j] - mass[top]) <= tie_tol * total:
                smaller = False
                for t in range(p_delta):
                    if keys[j, t] != keys[top, t]:
                        smaller = keys[j, t] < keys[top, t]
                        break
                if smaller:
                    top = j
        cval = (mass[top] / total) / h0
        if cval > 1.0:
            cval = 1.0
        conf[s] = cval
        zero = True
        for t in range(p_delta):
            if keys[top, t] != 0:
                zero = False
                break
        win0[s] = 1 if zero else 0
        accept[s] = 1 if cval >= h_prime else 0
    return STATUS_OK


@njit(cache=True)
def closest_batch_kernel(a, nups, node_cap, win0):
    """Fast path for unthresholded decisions on fully separated models."""
    nsamp = nups.shape[0]
    p = a.shape[0]
    best = np.zeros(p, np.int64)
    radii_scratch = np.zeros(1)
    nvec, dist, ps, cent, step = _scratch(p)
    for s in range(nsamp):
        best_d, visited, nrad, status = _closest_core(
            a, nups[s], False, node_cap, radii_scratch, best,
            nvec, dist, ps, cent, step
        )
        if status != STATUS_OK:
            return status
        zero = True
        for t in range(p):
            if best[t] != 0:
                zero = False
                break
        win0[s] = 1 if zero else 0
    return STATUS_OK


@njit(cache=True)
def neighbor_sum_batch_kernel(xs, centers, m, out):
    """out[s] = sum_j exp(-0.5 (x_s - c_j)^T m (x_s - c_j)); shifted-center weights."""
    nsamp = xs.shape[0]
    ncen = centers.shape[0]
    p = xs.shape[1]
    for s in range(nsamp):
        acc = 0.0
        for j in range(ncen):
            q = 0.0
            for r in range(p):
                vr = xs[s, r] - centers[j, r]
                row = 0.0
                for t in range(p):
                    row += m[r, t] * (xs[s, t] - centers[j, t])
                q += vr * row
            acc += math.exp(-0.5 * q)
        out[s] = acc
    return STATUS_OK

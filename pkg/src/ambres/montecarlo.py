"""Importance-sampling Monte Carlo rate estimation and proposal optimization.

Two estimators are provided. The direct one draws float solutions from a proposal
Gaussian, runs the actual decision on each draw, and reweights hits by the density
ratio; its variance coefficient kappa is minimized over the proposal's inverse
covariance. The shifted-center one targets very low error rates: it samples inside
the acceptance region of the zero decision and accumulates, per sample, the
analytic sum of density ratios over the neighboring decision centers, which keeps
the weights smooth where the direct estimator almost never scores a hit.

Determinism contract: samples are generated in fixed chunks of CHUNK, chunk j
seeded by SeedSequence(seed, spawn_key=(j,)) feeding a counter-based Philox
generator, and reduced in chunk order, so results are bit-identical for a given
(inputs, seed) regardless of how chunks might be distributed over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

from . import _search
from .bounds import xi_from_h_many
from .decoder import AmbiguityModel, Decoder, _decoder_for, DEFAULT_TRUNCATION
from .errors import (
    EmptyNeighborSet,
    InvalidProposal,
    OptimizationDiverged,
    ValidationError,
)
from .lattice import SpdForm
from .voronoi import RelevantVectorSet

CHUNK = 1 << 15
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ProposalForm:
    """Inverse covariance of the sampling Gaussian."""

    form: SpdForm


@dataclass(frozen=True)
class RateEstimate:
    value: float
    std_error: float
    samples: int
    seed: int
    variant: str            # plain | importance_v1 | importance_v2_shifted
    hits: int
    truncation_bound: float | None = None


def _validate_proposal(model: AmbiguityModel, proposal: ProposalForm):
    """Cholesky factors of M-tilde and 2M - M-tilde; InvalidProposal when either fails."""
    mt = proposal.form.entries
    m = model.form.entries
    if mt.shape != m.shape:
        raise InvalidProposal("proposal size does not match the model")
    try:
        lt = np.linalg.cholesky(mt)
    except np.linalg.LinAlgError as exc:
        raise InvalidProposal("proposal form is not positive-definite") from exc
    try:
        lq = np.linalg.cholesky(2.0 * m - mt)
    except np.linalg.LinAlgError as exc:
        raise InvalidProposal(
            "2M - M-tilde is not positive-definite; the weighted variance diverges"
        ) from exc
    return lt, lq


def _chunk_normals(seed: int, j: int, size: int, p: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(j,))
    gen = np.random.Generator(np.random.Philox(ss))
    return gen.standard_normal((size, p))


def _finish(vsum: float, v2sum: float, n: int, hits: int, seed: int,
            variant: str, trunc: float | None = None) -> RateEstimate:
    value = vsum / n
    var = max(v2sum - n * value * value, 0.0) / max(n - 1, 1)
    return RateEstimate(
        value=float(value),
        std_error=float(math.sqrt(var / n)),
        samples=n,
        seed=seed,
        variant=variant,
        hits=hits,
        truncation_bound=trunc,
    )


def mc_rate(model: AmbiguityModel, h_prime: float | None, target: str,
            proposal: ProposalForm, n: int, seed: int,
            c: float = DEFAULT_TRUNCATION, node_cap: int = 10**7) -> RateEstimate:
    """Weighted hit estimate of the success (alpha) or error (beta) rate.

    Each draw is decided by the real decision rule: a success hit is the zero
    decision accepted, an error hit any nonzero decision accepted. h_prime = None
    runs the unthresholded rule, which never rejects.
    """
    if target not in ("alpha", "beta"):
        raise ValidationError(f"target must be alpha or beta, got {target}")
    if n < 1:
        raise ValidationError("sample count must be at least 1")
    lt, _ = _validate_proposal(model, proposal)
    dec: Decoder = _decoder_for(model)
    m = model.form.entries
    mt = proposal.form.entries
    delta = m - mt
    plain = bool(np.array_equal(m, mt))
    sign, logdet_m = np.linalg.slogdet(m)
    signt, logdet_mt = np.linalg.slogdet(mt)
    wconst = math.exp(0.5 * (logdet_m - logdet_mt))
    fast_map = h_prime is None and model.p0 == 0

    vsum = 0.0
    v2sum = 0.0
    hits = 0
    nchunks = (n + CHUNK - 1) // CHUNK
    for j in range(nchunks):
        size = min(CHUNK, n - j * CHUNK)
        z = _chunk_normals(seed, j, size, model.p)
        x = solve_triangular(lt.T, z.T, lower=False).T
        if fast_map:
            win0 = dec.closest_batch(x, node_cap)
            mask = win0.astype(bool)
        else:
            win0, accept, conf = dec.decide_batch(x, h_prime or 0.0, c, node_cap)
            mask = accept.astype(bool) & (win0.astype(bool))
        if target == "beta":
            if fast_map:
                mask = ~mask
            else:
                mask = accept.astype(bool) & (~win0.astype(bool))
        if plain:
            w = mask.astype(float)
        else:
            q = np.einsum("ij,jk,ik->i", x, delta, x)
            w = np.where(mask, wconst * np.exp(-0.5 * q), 0.0)
        vsum += float(np.sum(w))
        v2sum += float(np.sum(w * w))
        hits += int(np.count_nonzero(mask))
    return _finish(vsum, v2sum, n, hits, seed,
                   "plain" if plain else "importance_v1")


def neighbor_centers(model: AmbiguityModel, rv: RelevantVectorSet,
                     h_prime: float, rel_tol: float = 1e-3,
                     node_cap: int = 10**7) -> np.ndarray:
    """Decision centers whose density ratio can reach rel_tol of the leading one.

    Candidates come from a fixed-radius enumeration around the origin; for marginal
    models only the minimum-norm representative of each equivalence class is kept
    (keeping two members of one class would double-count it in the shifted sum).
    """
    dec: Decoder = _decoder_for(model)
    m = model.form.entries
    a = rv.distances
    xi = xi_from_h_many(a, h_prime)
    cell_radius = 0.5 * math.sqrt(float(np.sum(np.diag(dec.a) ** 2)))
    lead = float(np.min(a * (1.0 - xi)))
    chi = cell_radius + math.sqrt(lead * lead + 2.0 * math.log(1.0 / rel_tol))

    from .decoder import enumerate_within_radius
    pts = enumerate_within_radius(dec.reduction, np.zeros(model.p), chi, cap=node_cap)
    centers: dict[tuple, tuple[float, np.ndarray]] = {}
    for n_arr, d2 in pts:
        if not np.any(n_arr):
            continue
        key = tuple(int(x) for x in n_arr[: model.p_delta])
        if all(k == 0 for k in key):
            continue  # same class as the zero decision
        if key not in centers or d2 < centers[key][0]:
            centers[key] = (d2, n_arr)
    if not centers:
        raise EmptyNeighborSet("no usable neighbor centers inside the candidate radius")
    ordered = sorted(centers.items(), key=lambda kv: (kv[1][0], kv[0]))
    arr = np.array([dec.t @ kv[1][1] for kv in ordered], dtype=float)
    return arr


def mc_rate_shifted(model: AmbiguityModel, h_prime: float, rv: RelevantVectorSet,
                    proposal: ProposalForm, n: int, seed: int,
                    c: float = DEFAULT_TRUNCATION, rel_tol: float = 1e-3,
                    node_cap: int = 10**7) -> RateEstimate:
    """Shifted-center error-rate estimator for very high confidence thresholds.

    Samples land in the zero decision's acceptance region with probability near
    one; each accepted sample contributes the analytic sum of density ratios over
    the neighbor centers. Converges where the direct estimator's hits starve
    (roughly log10 h'/(1-h') > 15).
    """
    if n < 1:
        raise ValidationError("sample count must be at least 1")
    if rv.q == 0:
        raise EmptyNeighborSet("empty facet set")
    lt, _ = _validate_proposal(model, proposal)
    dec: Decoder = _decoder_for(model)
    m = model.form.entries
    mt = proposal.form.entries
    sign, logdet_m = np.linalg.slogdet(m)
    signt, logdet_mt = np.linalg.slogdet(mt)
    wconst = math.exp(0.5 * (logdet_m - logdet_mt))
    centers = neighbor_centers(model, rv, h_prime, rel_tol, node_cap)

    vsum = 0.0
    v2sum = 0.0
    hits = 0
    nchunks = (n + CHUNK - 1) // CHUNK
    nb = np.zeros(CHUNK)
    for j in range(nchunks):
        size = min(CHUNK, n - j * CHUNK)
        z = _chunk_normals(seed, j, size, model.p)
        x = solve_triangular(lt.T, z.T, lower=False).T
        win0, accept, conf = dec.decide_batch(x, h_prime, c, node_cap)
        mask = accept.astype(bool) & win0.astype(bool)
        _search.neighbor_sum_batch_kernel(x, centers, m, nb[:size])
        qt = np.einsum("ij,jk,ik->i", x, mt, x)
        w = np.where(mask, wconst * np.exp(0.5 * qt) * nb[:size], 0.0)
        vsum += float(np.sum(w))
        v2sum += float(np.sum(w * w))
        hits += int(np.count_nonzero(mask))
    return _finish(vsum, v2sum, n, hits, seed, "importance_v2_shifted", rel_tol)


def kappa(model: AmbiguityModel, proposal: ProposalForm, h_prime: float | None,
          rv: RelevantVectorSet) -> float:
    """Variance coefficient of the direct weighted estimator for the error rate.

    kappa/N approximates the estimator variance while hits are rare. Evaluated in
    closed form: determinant prefactor times the exclusive-facet error sum, with
    each facet's scale replaced by a_i^2 / sqrt(n_i^T M (2M - M-tilde)^-1 M n_i)
    while the facet's xi keeps its decision-geometry value.
    """
    if rv.q == 0:
        raise ValidationError("empty facet set")
    _validate_proposal(model, proposal)
    m = model.form.entries
    mt = proposal.form.entries
    qform = 2.0 * m - mt
    a = rv.distances
    xi = np.full_like(a, 0.5) if h_prime is None else xi_from_h_many(a, h_prime)

    g = rv.vectors.astype(float) @ m  # rows n_i^T M
    sol = np.linalg.solve(qform, g.T)  # columns (2M - Mt)^-1 M n_i
    denom = np.sqrt(np.einsum("ij,ji->i", g, sol))
    a_eff = a * a / denom

    from scipy.special import erf, erfc
    alpha_i = erf(a_eff * xi / _SQRT2)
    beta_i = erfc(a_eff * (1.0 - xi) / _SQRT2) - erfc(a_eff * (1.0 + xi) / _SQRT2)
    log_alpha = np.log(alpha_i)
    total = float(np.sum(log_alpha))
    j_norm = float(np.sum(beta_i * np.exp(total - log_alpha)))

    sign, logdet_m = np.linalg.slogdet(m)
    signt, logdet_mt = np.linalg.slogdet(mt)
    signq, logdet_q = np.linalg.slogdet(qform)
    pref = math.exp(logdet_m - 0.5 * (logdet_mt + logdet_q))
    return pref * j_norm


def theoretical_se(kappa_value: float, n: int) -> float:
    """Asymptotic standard error sqrt(kappa / n) of the direct estimator."""
    return math.sqrt(kappa_value / n)


def _sym_from_upper(x: np.ndarray, p: int) -> np.ndarray:
    out = np.zeros((p, p))
    iu = np.triu_indices(p)
    out[iu] = x
    out.T[iu] = x
    return out


def optimize_proposal(model: AmbiguityModel, h_prime: float | None,
                      rv: RelevantVectorSet, init: ProposalForm,
                      max_iter: int = 500) -> ProposalForm:
    """Quasi-Newton minimization of kappa over the symmetric proposal entries.

    The free parameters are the upper triangle of M-tilde; gradients are central
    finite differences with a 1e-5 relative step. Feasibility (both M-tilde and
    2M - M-tilde positive-definite) is maintained by kappa's own blow-up at the
    boundary plus an infinite penalty outside. Intended for error-rate targets,
    where the rare-hit assumption behind kappa holds.
    """
    p = model.p
    iu = np.triu_indices(p)
    x0 = init.form.entries[iu].copy()
    scale = float(np.max(np.abs(model.form.entries)))

    def objective(x):
        mt = _sym_from_upper(x, p)
        try:
            prop = ProposalForm(SpdForm(mt))
            return kappa(model, prop, h_prime, rv)
        except (InvalidProposal, np.linalg.LinAlgError, ValidationError):
            return 1e300

    k0 = objective(x0)
    if not np.isfinite(k0) or k0 >= 1e300:
        raise InvalidProposal("initial proposal is infeasible")

    best = {"x": x0.copy(), "k": k0}

    def tracked(x):
        val = objective(x)
        if val < best["k"]:
            best["k"] = val
            best["x"] = x.copy()
        return val

    def jac(x):
        g = np.zeros_like(x)
        for i in range(x.size):
            h = 1e-5 * max(abs(x[i]), 0.01 * scale)
            xp = x.copy()
            xm = x.copy()
            xp[i] += h
            xm[i] -= h
            fp = tracked(xp)
            fm = tracked(xm)
            g[i] = (fp - fm) / (2.0 * h)
        return g

    try:
        minimize(tracked, x0, jac=jac, method="BFGS",
                 options={"maxiter": max_iter, "gtol": 1e-12})
    except (ValueError, FloatingPointError) as exc:
        if best["k"] >= k0:
            raise OptimizationDiverged(str(exc)) from exc
    if not np.isfinite(best["k"]):
        raise OptimizationDiverged("no finite kappa found")
    if best["k"] >= k0:
        return init
    return ProposalForm(SpdForm(_sym_from_upper(best["x"], p)))

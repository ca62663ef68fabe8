"""Experiment drivers shared by the command line and the scripts.

Every driver returns a list of row dicts ready for CSV emission. Rates are
reported both raw and on the log10(r/(1-r)) scale, and every rate row names the
method that produced it (bound-union, bound-min-distance, mc-v1, mc-v2); the
hybrid drivers use the closed-form bound wherever the union/min-distance gap is
below GAP_TOL on the log-odds scale and Monte Carlo elsewhere.
"""

from __future__ import annotations

import os

import numpy as np

from .bounds import RateBoundResult, log10_odds, log10_odds_from_error, log10_odds_se, map_bounds
from .decoder import AmbiguityModel, _decoder_for, conditional_decision, map_decision, shortest_vector
from .errors import AmbresError, ValidationError
from .lattice import SpdForm
from .gnss.builder import build_model, range_error_variance, succeeding_init_model
from .gnss.scenario import Scenario
from .montecarlo import ProposalForm, mc_rate
from .voronoi import RelevantVectorSet, relevant_vectors

GAP_TOL = 0.05          # log-odds gap below which the union bound is used as-is
FACET_CAP_OFFSET = 6.0  # facets beyond a_min + offset are negligible for bounds


def _env_float(name: str, default: float) -> float:
    raw = os.environ.get(name)
    return default if raw is None else float(raw)


def posterior_truncation() -> float:
    return _env_float("AMBRES_POSTERIOR_C", 50.0)


def facet_cap_offset() -> float:
    return _env_float("AMBRES_FACET_CAP_OFFSET", FACET_CAP_OFFSET)


def facet_threshold() -> float | None:
    raw = os.environ.get("AMBRES_VORONOI_C")
    return None if raw is None else float(raw)


def facet_set(model: AmbiguityModel) -> RelevantVectorSet:
    """Facet set truncated for bound work (a <= a_min + offset)."""
    dec = _decoder_for(model)
    _, a_min2 = shortest_vector(dec.reduction)
    cap = float(np.sqrt(a_min2)) + facet_cap_offset()
    return relevant_vectors(model, c=facet_threshold(), a_cap=cap)


def _alpha_log_odds(bounds_result: RateBoundResult) -> tuple[float, float, float]:
    """(union-lower, min-distance-upper, gap) for alpha on the log-odds scale."""
    bu = min(bounds_result.beta_upper, 1.0 - 1e-16)
    lower = log10_odds_from_error(max(bu, 1e-300))
    bl = max(bounds_result.beta_lower, 1e-300)
    upper = log10_odds_from_error(min(bl, 1.0 - 1e-16))
    return lower, upper, upper - lower


def scaled_proposal(model: AmbiguityModel, rv: RelevantVectorSet,
                    h_prime: float | None = None) -> ProposalForm:
    """Cheap variance reduction: minimize kappa over the one-parameter family t M.

    2M - tM stays positive-definite for t < 2; the scalar search captures most of
    the achievable reduction for error-rate targets at a fraction of the cost of
    the full entrywise optimization.
    """
    from scipy.optimize import minimize_scalar

    from .montecarlo import kappa

    def obj(t):
        try:
            return kappa(model, ProposalForm(SpdForm(t * model.form.entries)),
                         h_prime, rv)
        except AmbresError:
            return 1e300

    res = minimize_scalar(obj, bounds=(0.05, 1.95), method="bounded",
                          options={"xatol": 1e-3})
    t = float(res.x) if float(res.fun) < obj(1.0) else 1.0
    return ProposalForm(SpdForm(t * model.form.entries))


def alpha_map_row(model: AmbiguityModel, samples: int, seed: int) -> dict:
    """Hybrid estimate of the unthresholded success rate on the log-odds scale.

    Uses the union bound where it is tight; otherwise Monte Carlo, sampling the
    error rate by reweighted importance sampling when the success rate is high
    (direct hit counting cannot resolve it there) and sampling the success rate
    directly when it is moderate.
    """
    rv = facet_set(model)
    mb = map_bounds(rv)
    lower, upper, gap = _alpha_log_odds(mb)
    if gap <= GAP_TOL:
        return {
            "alpha_log_odds": lower,
            "alpha": 1.0 - mb.beta_upper,
            "se_log_odds": 0.0,
            "method": "bound-union",
            "q": rv.q,
        }
    if lower >= 2.0:
        # high success rate: estimate the complementary error rate instead
        est = mc_rate(model, None, "beta", scaled_proposal(model, rv), samples,
                      seed, c=posterior_truncation())
        if est.hits == 0 or est.value <= 0.0:
            return {
                "alpha_log_odds": lower,
                "alpha": 1.0 - mb.beta_upper,
                "se_log_odds": 0.0,
                "method": "bound-union",
                "q": rv.q,
            }
        beta = min(est.value, 1.0 - 1e-16)
        return {
            "alpha_log_odds": log10_odds_from_error(beta),
            "alpha": 1.0 - beta,
            "se_log_odds": log10_odds_se(1.0 - beta, est.std_error),
            "method": "mc-v1-beta",
            "q": rv.q,
        }
    est = mc_rate(model, None, "alpha", ProposalForm(model.form), samples, seed,
                  c=posterior_truncation())
    value = min(max(est.value, 1e-12), 1.0 - 1e-12)
    return {
        "alpha_log_odds": log10_odds(value),
        "alpha": est.value,
        "se_log_odds": log10_odds_se(value, est.std_error),
        "method": "mc-v1",
        "q": rv.q,
    }


def run_sweep_iono(base: Scenario, grid, measurement_sets, init_kinds=("cold",),
                   samples: int = 200_000, seed: int = 1) -> list[dict]:
    """One row per (measurement set, iono sigma, init kind)."""
    grid = list(grid)
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError("iono grid must be nonempty and strictly increasing")
    rows = []
    for ms in measurement_sets:
        for sig in grid:
            for kind in init_kinds:
                s = base.with_changes(measurement_set=ms, sigma_delta_iono=float(sig))
                if kind == "cold":
                    model = build_model(s.with_changes(pre_measurement_epochs=0))
                elif kind in ("self", "non_self"):
                    model = succeeding_init_model(s, kind)
                else:
                    raise ValidationError(f"unknown init kind {kind!r}")
                row = alpha_map_row(model, samples, seed)
                row.update({"measurement_set": ms, "sigma_delta_iono": sig, "init": kind})
                rows.append(row)
    return rows


def run_sweep_duration(base: Scenario, durations, start_epochs=(0,),
                       modes=("kinematic", "static"), samples: int = 200_000,
                       seed: int = 1) -> list[dict]:
    """One row per (start epoch, duration, coordinates prior)."""
    durations = list(durations)
    if not durations or any(d < 1 for d in durations):
        raise ValidationError("durations must be positive epoch counts")
    interval = base.epoch_interval
    rows = []
    for start in start_epochs:
        for dur in durations:
            n = int(round(dur / interval))
            if start + n > base.n_epochs:
                raise ValidationError(
                    f"window [{start}, {start + n}) exceeds the scenario's "
                    f"{base.n_epochs} epochs"
                )
            for mode in modes:
                if n == 1 and mode == "static":
                    continue  # single epoch: identical to kinematic
                s = base.with_changes(satellites=base.satellites[start:start + n],
                                      coordinates_prior=mode)
                row = alpha_map_row(build_model(s), samples, seed)
                row.update({"start": start, "duration": dur, "coordinates": mode})
                rows.append(row)
    return rows


def run_init_compare(base: Scenario, samples: int = 200_000, seed: int = 1) -> list[dict]:
    """cold / non_self / self at the scenario's iono sigma."""
    rows = []
    for kind in ("cold", "non_self", "self"):
        if kind == "cold":
            model = build_model(base.with_changes(pre_measurement_epochs=0))
        else:
            s = base if kind == "self" else base.with_changes(windup_informed=False)
            model = succeeding_init_model(s, kind)
        row = alpha_map_row(model, samples, seed)
        row["init"] = kind
        rows.append(row)
    return rows


def run_range_error(base: Scenario, grid) -> list[dict]:
    """Per-epoch range-error variance for each iono sigma in the grid."""
    rows = []
    for sig in grid:
        var = range_error_variance(base.with_changes(sigma_delta_iono=float(sig)))
        for epoch, v in enumerate(var):
            rows.append({
                "sigma_delta_iono": float(sig),
                "epoch": epoch,
                "range_error_var_m2": float(v),
                "method": "posterior",
            })
    return rows


def run_bounds(model: AmbiguityModel, h_grid=None) -> list[dict]:
    """Aggregate bound rows (and per-facet rows) for the model."""
    from .bounds import conditional_bounds, single_approximation
    rv = facet_set(model)
    rows = []

    def emit(tag, res: RateBoundResult, h):
        lower, upper, gap = _alpha_log_odds(res)
        rows.append({
            "kind": tag, "h_prime": h,
            "alpha_lower": res.alpha_lower, "alpha_upper": res.alpha_upper,
            "beta_lower": res.beta_lower, "beta_upper": res.beta_upper,
            "alpha_log_odds_lower": lower, "alpha_log_odds_upper": upper,
            "method": "bound-union/min-distance", "q": rv.q,
        })

    emit("map", map_bounds(rv), "")
    for h in (h_grid or ()):
        res = conditional_bounds(rv, float(h))
        emit("conditional", res, float(h))
        alpha_s, beta_s = single_approximation(rv, float(h))
        rows.append({
            "kind": "single-approximation", "h_prime": float(h),
            "alpha_lower": alpha_s, "alpha_upper": alpha_s,
            "beta_lower": beta_s, "beta_upper": beta_s,
            "alpha_log_odds_lower": log10_odds(alpha_s) if 0 < alpha_s < 1 else "",
            "alpha_log_odds_upper": "",
            "method": "single-approximation", "q": rv.q,
        })
    return rows


def run_voronoi(model: AmbiguityModel, c: float | None = None,
                a_cap: float | None = None) -> list[dict]:
    rv = relevant_vectors(model, c=c if c is not None else facet_threshold(),
                          a_cap=a_cap)
    rows = []
    for vec, dist in zip(rv.vectors, rv.distances):
        row = {f"n{i + 1}": int(v) for i, v in enumerate(vec)}
        row["a"] = float(dist)
        rows.append(row)
    return rows


def run_decode(model: AmbiguityModel, nu, h_prime: float | None) -> list[dict]:
    if h_prime is None:
        out = map_decision(model, nu, c=posterior_truncation())
    else:
        out = conditional_decision(model, nu, h_prime, c=posterior_truncation())
    return [{
        "chosen": "" if out.chosen is None else " ".join(str(int(x)) for x in out.chosen),
        "accepted": int(out.chosen is not None),
        "confidence": out.confidence,
        "visited_nodes": out.visited_nodes,
        "radius_final": out.radius_final,
    }]

"""Command-line entry point.

Subcommands: decode, voronoi, bounds, mc, sweep-iono, sweep-duration, range-error,
init-compare. Inputs come from a scenario YAML (--scenario), a serialized model
(--model), or a bare matrix in the exchange format (--matrix, treated as a fully
separated model). Outputs are CSV with one provenance comment line; with a fixed
seed the bytes are identical run to run.

Exit codes: 0 success, 2 validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from . import __version__, experiments
from .decoder import AmbiguityModel
from .errors import AmbresError, ValidationError
from .gnss.builder import build_model, succeeding_init_model
from .gnss.scenario import Scenario, load_scenario
from .lattice import SpdForm, read_matrix
from .model_io import load_model
from .montecarlo import ProposalForm, mc_rate, mc_rate_shifted, optimize_proposal

VALIDATION_EXIT = 2
NUMERICAL_EXIT = 3


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad grid {text!r}: {exc}") from exc


def _load_model_arg(args) -> AmbiguityModel:
    given = [x for x in (args.scenario, args.model, args.matrix) if x]
    if len(given) != 1:
        raise ValidationError("give exactly one of --scenario, --model, --matrix")
    if args.scenario:
        return build_model(load_scenario(args.scenario))
    if args.model:
        return load_model(args.model)
    return AmbiguityModel(SpdForm(read_matrix(args.matrix)))


def _scenario_arg(args) -> Scenario:
    if not args.scenario:
        raise ValidationError("this command needs --scenario")
    return load_scenario(args.scenario)


def _write_rows(rows: list[dict], args, provenance: dict) -> None:
    if not rows:
        raise ValidationError("no rows produced")
    buf = io.StringIO()
    tags = " ".join(f"{k}={v}" for k, v in provenance.items())
    buf.write(f"# ambres={__version__} {tags}\n")
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _add_common(p: argparse.ArgumentParser, scenario_only: bool = False) -> None:
    p.add_argument("--scenario", help="scenario YAML file")
    if not scenario_only:
        p.add_argument("--model", help="serialized model file")
        p.add_argument("--matrix", help="bare matrix in the exchange format")
    p.add_argument("--out", help="output CSV path (default stdout)")
    p.add_argument("--format", choices=["csv"], default="csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ambres", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="decide the integer vector for a float solution")
    _add_common(p)
    p.add_argument("--nu", required=True, help="comma-separated float solution")
    p.add_argument("--h-prime", type=float, default=None)

    p = sub.add_parser("voronoi", help="facet vectors and distances")
    _add_common(p)
    p.add_argument("--threshold-c", type=float, default=None)
    p.add_argument("--a-cap", type=float, default=None)

    p = sub.add_parser("bounds", help="closed-form rate bounds")
    _add_common(p)
    p.add_argument("--h-prime-grid", default="", help="comma-separated h' values")

    p = sub.add_parser("mc", help="Monte Carlo rate estimate")
    _add_common(p)
    p.add_argument("--target", choices=["alpha", "beta"], default="alpha")
    p.add_argument("--h-prime", type=float, default=None)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=["v1", "v2"], default="v1")
    p.add_argument("--proposal", default="model",
                   help="model | optimized | file:<matrix path>")

    p = sub.add_parser("sweep-iono", help="success rate vs iono sigma")
    _add_common(p, scenario_only=True)
    p.add_argument("--grid", required=True, help="comma-separated sigmas (m)")
    p.add_argument("--sets", default="L1+L2+L5", help="comma-separated measurement sets")
    p.add_argument("--init", default="cold", help="comma-separated init kinds")
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=1)

    p = sub.add_parser("sweep-duration", help="success rate vs sampling duration")
    _add_common(p, scenario_only=True)
    p.add_argument("--grid", required=True, help="comma-separated durations (s)")
    p.add_argument("--starts", default="0", help="comma-separated start epochs")
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=1)

    p = sub.add_parser("range-error", help="range-error variance vs iono sigma")
    _add_common(p, scenario_only=True)
    p.add_argument("--grid", required=True)

    p = sub.add_parser("init-compare", help="cold vs succeeding initialization")
    _add_common(p, scenario_only=True)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=1)
    return ap


def _cmd_mc(args) -> list[dict]:
    model = _load_model_arg(args)
    prop = ProposalForm(model.form)
    if args.proposal.startswith("file:"):
        prop = ProposalForm(SpdForm(read_matrix(args.proposal[5:])))
    rv = None
    if args.proposal == "optimized" or args.variant == "v2":
        rv = experiments.facet_set(model)
    if args.proposal == "optimized":
        prop = optimize_proposal(model, args.h_prime, rv, ProposalForm(model.form))
    if args.variant == "v2":
        if args.h_prime is None:
            raise ValidationError("variant v2 needs --h-prime")
        est = mc_rate_shifted(model, args.h_prime, rv, prop, args.samples, args.seed,
                              c=experiments.posterior_truncation())
        method = "mc-v2"
    else:
        est = mc_rate(model, args.h_prime, args.target, prop, args.samples, args.seed,
                      c=experiments.posterior_truncation())
        method = "mc-v1"
    from .bounds import log10_odds, log10_odds_se
    rate = min(max(est.value, 1e-300), 1.0 - 1e-16)
    return [{
        "h_prime": "" if args.h_prime is None else args.h_prime,
        "target": args.target if args.variant == "v1" else "beta",
        "rate": est.value,
        "std_error": est.std_error,
        "rate_log_odds": log10_odds(rate) if 0 < rate < 1 else "",
        "se_log_odds": log10_odds_se(rate, est.std_error) if 0 < rate < 1 else "",
        "samples": est.samples,
        "hits": est.hits,
        "variant": est.variant,
        "seed": est.seed,
        "method": method,
    }]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    prov = {"command": args.command}
    for key in ("seed", "samples", "h_prime"):
        if getattr(args, key, None) is not None:
            prov[key] = getattr(args, key)
    prov["posterior_c"] = experiments.posterior_truncation()
    prov["facet_cap_offset"] = experiments.facet_cap_offset()
    try:
        if args.command == "decode":
            model = _load_model_arg(args)
            nu = _parse_grid(args.nu)
            rows = experiments.run_decode(model, nu, args.h_prime)
        elif args.command == "voronoi":
            rows = experiments.run_voronoi(_load_model_arg(args),
                                           c=args.threshold_c, a_cap=args.a_cap)
        elif args.command == "bounds":
            grid = _parse_grid(args.h_prime_grid) if args.h_prime_grid else []
            rows = experiments.run_bounds(_load_model_arg(args), grid)
        elif args.command == "mc":
            rows = _cmd_mc(args)
        elif args.command == "sweep-iono":
            rows = experiments.run_sweep_iono(
                _scenario_arg(args), _parse_grid(args.grid),
                [t.strip() for t in args.sets.split(",") if t.strip()],
                [t.strip() for t in args.init.split(",") if t.strip()],
                samples=args.samples, seed=args.seed,
            )
        elif args.command == "sweep-duration":
            rows = experiments.run_sweep_duration(
                _scenario_arg(args),
                [int(float(d)) for d in _parse_grid(args.grid)],
                start_epochs=[int(float(x)) for x in _parse_grid(args.starts)],
                samples=args.samples, seed=args.seed,
            )
        elif args.command == "range-error":
            rows = experiments.run_range_error(_scenario_arg(args), _parse_grid(args.grid))
        elif args.command == "init-compare":
            rows = experiments.run_init_compare(_scenario_arg(args),
                                                samples=args.samples, seed=args.seed)
        else:  # pragma: no cover
            raise ValidationError(f"unknown command {args.command}")
        _write_rows(rows, args, prov)
        return 0
    except (ValidationError, OSError) as exc:
        print(f"ambres: {exc}", file=sys.stderr)
        return VALIDATION_EXIT
    except AmbresError as exc:
        print(f"ambres: {exc}", file=sys.stderr)
        return NUMERICAL_EXIT


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end for the capacity solvers and sweeps.

Commands
--------
  capacity fock      constrained Blahut-Arimoto over Fock inputs
  capacity poisson   mass-point solver for the continuous Poisson channel
  rate-negbin        negative-binomial lower-bound rate (optimised over r)
  analytic           closed-form baselines at one (eta, nbar)
  sweep              grid sweep emitting one CSV row per cell
  prior              optimal Fock prior profile as CSV

Single solves print JSON (floats rounded to 12 significant digits) with
the fully resolved configuration echoed under "config"; sweeps and prior
tables are CSV with `# schema:` and `# config:` header comments, so any
run can be reproduced from its own output.  Grid flags accept a single
value, a comma list, or ``start:stop:count`` with an optional ``log10``
suffix (``start:stop:log10`` defaults to 10 points).

Exit codes: 0 success, 2 usage error, 3 solver non-convergence (the
result is still printed, flagged), 4 I/O error.  The environment
variable ``PNRCAP_OUT_DIR`` supplies a default directory for relative
``--out`` paths; every scientific parameter must be an explicit flag.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys

import numpy as np

from .analytic import (
    bowen_asymptotic,
    classical_capacity,
    gordon_asymptotic,
    heterodyne_capacity,
    holevo_g,
    homodyne_capacity,
)
from .ba import CapacityResult, SolverConfig, fock_capacity
from .experiments import SweepGrid, prior_profile, run_sweep
from .negbin import negbin_best_rate, negbin_mutual_info
from .poisson import ContinuousSolverConfig, poisson_capacity

__all__ = ["main", "build_parser", "parse_grid"]

OUT_DIR_ENV = "PNRCAP_OUT_DIR"
_SCHEMA_PREFIX = "pnrcap"


class UsageError(ValueError):
    """Invalid command-line input (maps to exit code 2)."""


def _fmt(value) -> str:
    """CSV cell formatting: floats at 12 significant digits."""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _jsonable(value):
    """Round floats to 12 significant digits; NaN/inf become null."""
    if isinstance(value, bool):
        return value
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value) or math.isinf(value):
            return None
        return float(f"{value:.12g}")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def _emit_json(payload: dict, stream=None) -> None:
    stream = stream or sys.stdout
    json.dump(_jsonable(payload), stream, indent=2)
    stream.write("\n")


def _resolve_out(path: str | None) -> str | None:
    if path is None:
        return None
    base = os.environ.get(OUT_DIR_ENV)
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def _write_csv(path: str | None, schema: str, config: dict, header, rows) -> None:
    """Single-writer CSV emission with schema/config comment lines."""

    def write(stream) -> None:
        stream.write(f"# schema: {_SCHEMA_PREFIX}-{schema}\n")
        stream.write(f"# config: {json.dumps(_jsonable(config), sort_keys=True)}\n")
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])

    if path is None:
        write(sys.stdout)
    else:
        with open(path, "w", newline="") as stream:
            write(stream)


def parse_grid(spec: str) -> list:
    """Parse a value, comma list, or start:stop:count[:log10] grid flag."""
    spec = spec.strip()
    if not spec:
        raise UsageError("empty grid specification")
    if "," in spec:
        return [float(tok) for tok in spec.split(",") if tok.strip()]
    parts = spec.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) > 4:
        raise UsageError(f"cannot parse grid {spec!r}")
    start, stop = float(parts[0]), float(parts[1])
    rest = parts[2:]
    logscale = bool(rest) and rest[-1] == "log10"
    if logscale:
        rest = rest[:-1]
    if len(rest) > 1:
        raise UsageError(f"cannot parse grid {spec!r}")
    count = int(rest[0]) if rest else 10
    if count < 1:
        raise UsageError("grid count must be at least 1")
    if count == 1:
        return [start]
    if logscale:
        if start <= 0.0 or stop <= 0.0:
            raise UsageError("log10 grids need positive endpoints")
        return np.geomspace(start, stop, count).tolist()
    return np.linspace(start, stop, count).tolist()


def _config_dict(command: str, args: argparse.Namespace, keys) -> dict:
    config = {"command": command}
    for key in keys:
        config[key] = getattr(args, key)
    return config


def _prior_payload(result: CapacityResult, full: bool) -> dict:
    probs = result.prior.probs
    payload = {
        "size": int(probs.size),
        "mean_photons": result.prior.mean_photons,
        "p0": float(probs[0]),
        "effective_support": int(np.max(np.nonzero(probs > 1e-12)[0], initial=0)),
    }
    if full:
        payload["probs"] = probs
    return payload


def _cmd_capacity_fock(args) -> int:
    config = SolverConfig(
        tolerance=args.tol,
        max_iterations=args.max_iter,
        initial_cutoff=args.cutoff,
        max_cutoff=args.max_cutoff,
    )
    result = fock_capacity(args.eta, args.nbar, config)
    run_config = _config_dict(
        "capacity fock",
        args,
        ["eta", "nbar", "tol", "max_iter", "cutoff", "max_cutoff", "full_prior", "out"],
    )
    _emit_json(
        {
            "config": run_config,
            "rate_bits": result.rate_bits,
            "gap_bits": result.gap_bits,
            "iterations": result.iterations,
            "multiplier": result.multiplier,
            "mean_constraint_residual": result.mean_constraint_residual,
            "converged": result.converged,
            "prior": _prior_payload(result, args.full_prior),
        }
    )
    out = _resolve_out(args.out)
    if out is not None:
        rows = list(enumerate(result.prior.probs.tolist()))
        _write_csv(out, "fock-prior-v1", run_config, ["k", "prob"], rows)
    return 0 if result.converged else 3


def _cmd_capacity_poisson(args) -> int:
    config = ContinuousSolverConfig(
        tolerance=args.tol,
        n_points=args.points,
        max_outer_iterations=args.max_outer,
    )
    result = poisson_capacity(args.output_mean, config)
    run_config = _config_dict(
        "capacity poisson",
        args,
        ["output_mean", "tol", "points", "max_outer", "full_prior", "out"],
    )
    atoms = result.mass_points
    payload = {
        "config": run_config,
        "rate_bits": result.rate_bits,
        "gap_bits": result.gap_bits,
        "iterations": result.iterations,
        "multiplier": result.multiplier,
        "mean_constraint_residual": result.mean_constraint_residual,
        "converged": result.converged,
        "mass_points": {
            "count": len(atoms),
            "mean": atoms.mean,
        },
    }
    if args.full_prior:
        payload["mass_points"]["intensities"] = atoms.intensities
        payload["mass_points"]["weights"] = atoms.weights
    _emit_json(payload)
    out = _resolve_out(args.out)
    if out is not None:
        rows = list(zip(atoms.intensities.tolist(), atoms.weights.tolist()))
        _write_csv(out, "poisson-prior-v1", run_config, ["intensity", "weight"], rows)
    return 0 if result.converged else 3


def _cmd_rate_negbin(args) -> int:
    run_config = _config_dict("rate-negbin", args, ["eta", "nbar", "r", "out"])
    if args.r is not None:
        if args.r <= 0.0:
            raise UsageError("--r must be positive")
        rate = negbin_mutual_info(args.eta, args.nbar, args.r)
        r_star = args.r
        optimised = False
    else:
        rate, r_star = negbin_best_rate(args.eta, args.nbar)
        optimised = True
    _emit_json(
        {
            "config": run_config,
            "rate_bits": rate,
            "r_star": r_star,
            "optimised": optimised,
        }
    )
    out = _resolve_out(args.out)
    if out is not None:
        _write_csv(
            out,
            "negbin-rate-v1",
            run_config,
            ["eta", "nbar", "rate_bits", "r_star"],
            [[args.eta, args.nbar, rate, r_star]],
        )
    return 0


_ANALYTIC_COLUMNS = [
    "eta",
    "nbar",
    "output_mean",
    "c_classical",
    "c_hom",
    "c_het",
    "bowen",
    "gordon",
]


def _analytic_row(eta: float, nbar: float) -> list:
    def guarded(fn):
        try:
            return float(fn(eta, nbar))
        except ValueError:
            return float("nan")

    return [
        eta,
        nbar,
        eta * nbar,
        float(classical_capacity(eta, nbar)),
        float(homodyne_capacity(eta, nbar)),
        float(heterodyne_capacity(eta, nbar)),
        guarded(bowen_asymptotic),
        guarded(gordon_asymptotic),
    ]


def _cmd_analytic(args) -> int:
    run_config = _config_dict("analytic", args, ["eta", "nbar", "out"])
    row = _analytic_row(args.eta, args.nbar)
    _emit_json(
        {"config": run_config, **dict(zip(_ANALYTIC_COLUMNS, row))}
    )
    out = _resolve_out(args.out)
    if out is not None:
        _write_csv(out, "analytic-v1", run_config, _ANALYTIC_COLUMNS, [row])
    return 0


def _cmd_sweep(args) -> int:
    etas = parse_grid(args.etas)
    nbars = parse_grid(args.nbars)
    grid = SweepGrid(etas=tuple(etas), nbars=tuple(nbars))
    fock_config = SolverConfig(tolerance=args.tol, max_iterations=args.max_iter)
    poisson_config = ContinuousSolverConfig(tolerance=args.poisson_tol)
    records = run_sweep(
        grid, jobs=args.jobs, fock_config=fock_config, poisson_config=poisson_config
    )
    run_config = _config_dict(
        "sweep", args, ["etas", "nbars", "tol", "poisson_tol", "max_iter", "jobs", "out"]
    )
    header = [f.name for f in dataclasses.fields(records[0])]
    rows = [[getattr(rec, name) for name in header] for rec in records]
    out = _resolve_out(args.out)
    _write_csv(out, "sweep-v1", run_config, header, rows)
    if out is not None:
        _emit_json(
            {
                "config": run_config,
                "rows": len(records),
                "out": out,
                "all_converged": all(
                    r.fock_converged and r.poisson_converged and not r.error
                    for r in records
                ),
            }
        )
    clean = all(
        r.fock_converged and r.poisson_converged and not r.error for r in records
    )
    return 0 if clean else 3


def _cmd_prior(args) -> int:
    config = SolverConfig(
        tolerance=args.tol,
        max_iterations=args.max_iter,
        initial_cutoff=args.cutoff,
        max_cutoff=args.max_cutoff,
    )
    profile = prior_profile(args.eta, args.nbar, config, floor_ratio=args.floor_ratio)
    run_config = _config_dict(
        "prior",
        args,
        ["eta", "nbar", "tol", "max_iter", "cutoff", "max_cutoff", "floor_ratio", "out"],
    )
    summary = {
        "config": run_config,
        "rate_bits": profile.rate_bits,
        "p0": profile.p0,
        "interior_maxima": list(profile.interior_maxima),
        "converged": profile.converged,
        "support_size": int(profile.probs.size),
    }
    out = _resolve_out(args.out)
    rows = list(enumerate(profile.probs.tolist()))
    if out is None:
        _write_csv(None, "prior-v1", summary, ["k", "prob"], rows)
    else:
        _write_csv(out, "prior-v1", summary, ["k", "prob"], rows)
        _emit_json(summary)
    return 0 if profile.converged else 3


def _add_common_solver_flags(parser, tol_default: float) -> None:
    parser.add_argument("--tol", type=float, default=tol_default,
                        help=f"convergence tolerance in bits (default {tol_default:g})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pnrcap",
        description="Capacity of the lossy photon-counting channel: "
        "Blahut-Arimoto solvers, analytic baselines, sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    capacity = sub.add_parser("capacity", help="capacity solvers")
    kinds = capacity.add_subparsers(dest="kind", required=True)

    fock = kinds.add_parser("fock", help="Fock-input constrained Blahut-Arimoto")
    fock.add_argument("--eta", type=float, required=True, help="transmissivity in [0, 1]")
    fock.add_argument("--nbar", type=float, required=True, help="mean input photon number")
    _add_common_solver_flags(fock, 1e-9)
    fock.add_argument("--max-iter", type=int, default=100_000, dest="max_iter")
    fock.add_argument("--cutoff", type=int, default=None,
                      help="initial Fock cutoff (default: automatic)")
    fock.add_argument("--max-cutoff", type=int, default=200_000, dest="max_cutoff")
    fock.add_argument("--full-prior", action="store_true", dest="full_prior",
                      help="include the full prior vector in the JSON report")
    fock.add_argument("--out", default=None, help="write the prior table as CSV")
    fock.set_defaults(handler=_cmd_capacity_fock)

    pois = kinds.add_parser("poisson", help="continuous-input Poisson channel")
    pois.add_argument("--output-mean", type=float, required=True, dest="output_mean",
                      help="detected mean photon number eta*nbar")
    _add_common_solver_flags(pois, 1e-4)
    pois.add_argument("--points", type=int, default=64, help="initial mass points")
    pois.add_argument("--max-outer", type=int, default=400, dest="max_outer")
    pois.add_argument("--full-prior", action="store_true", dest="full_prior",
                      help="include the mass points in the JSON report")
    pois.add_argument("--out", default=None, help="write the mass points as CSV")
    pois.set_defaults(handler=_cmd_capacity_poisson)

    negbin = sub.add_parser("rate-negbin", help="negative-binomial lower-bound rate")
    negbin.add_argument("--eta", type=float, required=True)
    negbin.add_argument("--nbar", type=float, required=True)
    negbin.add_argument("--r", type=float, default=None,
                        help="fix the shape parameter instead of optimising it")
    negbin.add_argument("--out", default=None, help="write the rate as a CSV row")
    negbin.set_defaults(handler=_cmd_rate_negbin)

    analytic = sub.add_parser("analytic", help="closed-form baseline rates")
    analytic.add_argument("--eta", type=float, required=True)
    analytic.add_argument("--nbar", type=float, required=True)
    analytic.add_argument("--out", default=None, help="write the row as CSV")
    analytic.set_defaults(handler=_cmd_analytic)

    sweep = sub.add_parser("sweep", help="grid sweep over (eta, nbar)")
    sweep.add_argument("--etas", required=True,
                       help="grid: value, comma list, or start:stop:count[:log10]")
    sweep.add_argument("--nbars", required=True,
                       help="grid: value, comma list, or start:stop:count[:log10]")
    _add_common_solver_flags(sweep, 1e-6)
    sweep.add_argument("--poisson-tol", type=float, default=1e-4, dest="poisson_tol")
    sweep.add_argument("--max-iter", type=int, default=100_000, dest="max_iter")
    sweep.add_argument("--jobs", type=int, default=1,
                       help="concurrent grid cells (deterministic output order)")
    sweep.add_argument("--out", default=None, help="CSV path (default: stdout)")
    sweep.set_defaults(handler=_cmd_sweep)

    prior = sub.add_parser("prior", help="optimal Fock prior profile")
    prior.add_argument("--eta", type=float, required=True)
    prior.add_argument("--nbar", type=float, required=True)
    _add_common_solver_flags(prior, 1e-9)
    prior.add_argument("--max-iter", type=int, default=100_000, dest="max_iter")
    prior.add_argument("--cutoff", type=int, default=None)
    prior.add_argument("--max-cutoff", type=int, default=200_000, dest="max_cutoff")
    prior.add_argument("--floor-ratio", type=float, default=1e-8, dest="floor_ratio",
                       help="ignore maxima below this fraction of the peak weight")
    prior.add_argument("--out", default=None, help="CSV path (default: stdout)")
    prior.set_defaults(handler=_cmd_prior)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        # covers quadrature-accuracy failures and multiplier bracketing
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

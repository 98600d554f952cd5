"""Command line entry point: ``regime-stop <subcommand> [flags]``.

JSON or CSV goes to stdout (or ``--out``); diagnostics go to stderr as one
line ``regime-stop: error: <Code>: <message>``. Exit status is 0 only when
the computation finished and every embedded check passed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import CalibrationError, calibrate, read_csv
from .closed_form import solution_record, solve
from .model import PARAM_KEYS, REFERENCE_PARAMS, ValidationError, parse_config_text, validate
from .montecarlo import InvalidHorizon, InvalidThreshold, SimConfig, monitor_convergence, policy_dominance, simulate_policy
from .studies import SweepSpec, asymptotic_curves, function_profiles, rows_to_csv, run_sweep, surface, table_comparison
from .verification import positivity_sweep, qvi_residuals, qvi_sweep

SCHEMA_VERSION = 1
PROG = "regime-stop"


class CliError(Exception):
    def __init__(self, code: str, message: str, status: int = 1):
        super().__init__(message)
        self.code = code
        self.status = status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        code = "UnknownSubcommand" if "invalid choice" in message else "UsageError"
        raise CliError(code, message, status=2)


# -- parameter resolution --------------------------------------------------

def load_params_file(path: str) -> dict:
    """Parameters from a ``key = value`` file or a JSON document.

    JSON may be a flat object, or any output of this tool that carries a
    ``params`` object (e.g. ``calibrate``).
    """
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        obj = json.loads(text)
        obj = obj.get("result", obj)
        obj = obj.get("params", obj)
        if not isinstance(obj, dict):
            raise CliError("ConfigError", f"{path}: no parameter object found")
        return obj
    try:
        return parse_config_text(text)
    except ValueError as exc:
        raise CliError("ConfigError", f"{path}: {exc}") from None


def resolve_params(args) -> dict:
    raw = REFERENCE_PARAMS.as_dict() if args.config is None else load_params_file(args.config)
    for key in PARAM_KEYS:
        v = getattr(args, f"p_{key}", None)
        if v is not None:
            raw[key] = v
    return raw


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("parameter overrides (applied after --config)")
    for key in PARAM_KEYS:
        g.add_argument(f"--{key}", dest=f"p_{key}", type=float, default=None, metavar="X")


def _floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# -- output ----------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _manifest(args, params: dict | None, payload: str) -> dict:
    return {
        "subcommand": args.command,
        "params": params,
        "seed": getattr(args, "seed", None),
        "tool_version": __version__,
        "argv": list(args.argv),
        "output_sha256": hashlib.sha256(payload.encode()).hexdigest(),
    }


def emit_json(args, result: dict, params: dict | None, stream) -> None:
    body = _jsonable(result)
    digest_src = json.dumps(body, sort_keys=True)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": args.command,
        "result": body,
        "manifest": _manifest(args, params, digest_src),
    }
    text = json.dumps(doc, indent=2 if args.pretty else None, sort_keys=not args.pretty)
    _write(args, text + "\n", stream)


def emit_csv(args, text: str, params: dict | None, stream, err) -> None:
    """CSV body; the manifest goes next to ``--out`` or as one JSON line on stderr."""
    _write(args, text, stream)
    manifest = {"schema_version": SCHEMA_VERSION, "manifest": _manifest(args, params, text)}
    line = json.dumps(_jsonable(manifest), sort_keys=True)
    if args.out:
        Path(args.out + ".manifest.json").write_text(line + "\n")
    else:
        err.write(line + "\n")


def _write(args, text: str, stream) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        stream.write(text)


# -- subcommands -----------------------------------------------------------

def cmd_solve(args, out, err) -> int:
    params = validate(resolve_params(args))
    sol = solve(params)
    result = solution_record(sol, params)
    result["v0"] = float(sol.value(args.x1, args.x2, 0))
    result["v1"] = float(sol.value(args.x1, args.x2, 1))
    result["x1"], result["x2"] = args.x1, args.x2
    emit_json(args, result, params.as_dict(), out)
    return 0


def cmd_verify(args, out, err) -> int:
    params = validate(resolve_params(args))
    sol = solve(params)
    rep = qvi_residuals(sol, points=args.points)
    result = {"k": sol.k, "reference": _report_summary(rep)}
    ok = rep.passed
    if args.draws:
        reps = qvi_sweep(args.draws, args.seed, points=args.points)
        failed = [i for i, r in reps if not r.passed]
        result["qvi_sweep"] = {"draws": args.draws, "seed": args.seed, "failed_indices": failed,
                               "worst_psi_min": min(r.psi_min for _, r in reps),
                               "worst_phi_min": min(r.phi_min for _, r in reps),
                               "worst_ode_residual": max(r.ode_residual_max for _, r in reps),
                               "worst_smoothfit_gap": max(r.smoothfit_gap for _, r in reps)}
        ok = ok and not failed
    if args.positivity_draws:
        s = positivity_sweep(args.positivity_draws, args.seed)
        result["positivity"] = {"draws": s.draws, "seed": s.seed, "counterexamples": s.counterexamples,
                                "mu1_gt_mu2": s.mu1_gt_mu2, "sigma_mu1_le_mu2": s.sigma_mu1_le_mu2}
        ok = ok and s.passed
    result["passed"] = ok
    if args.report:
        Path(args.report).write_text(json.dumps(_jsonable(rep.as_dict())) + "\n")
    emit_json(args, result, params.as_dict(), out)
    if not ok:
        err.write(f"{PROG}: error: VerificationFailed: see result for the failing checks\n")
    return 0 if ok else 1


def _report_summary(rep) -> dict:
    d = rep.as_dict()
    d.pop("grid")
    return d


def cmd_simulate(args, out, err) -> int:
    params = validate(resolve_params(args))
    k = solve(params).k
    override = None if args.threshold_multiplier is None else args.threshold_multiplier * k
    cfg = SimConfig(
        params, x1_0=args.x1, x2_0=args.x2, alpha_0=args.alpha, paths=args.paths,
        horizon=args.horizon, seed=args.seed, monitor_step=args.monitor_step,
        threshold_override=override,
    )
    if args.dominance is not None:
        rows = [r.__dict__ for r in policy_dominance(cfg, args.dominance)]
        emit_csv(args, rows_to_csv(rows), params.as_dict(), out, err)
        return 0
    if args.convergence:
        chk = monitor_convergence(cfg)
        rep = chk.coarse
        result = {**rep.as_dict(), "error": rep.error,
                  "error_budget": rep.error_budget + chk.shift, "refinement": chk.as_dict()}
        ok = rep.error <= rep.error_budget + chk.shift
    else:
        rep = simulate_policy(cfg)
        result = {**rep.as_dict(), "error": rep.error, "error_budget": rep.error_budget}
        # comparison with the closed form only applies at the solved threshold
        ok = override is not None or rep.error <= rep.error_budget
    result["within_budget"] = ok
    emit_json(args, result, params.as_dict(), out)
    if not ok:
        err.write(f"{PROG}: error: OutsideErrorBudget: |estimate - closed form| exceeds the error budget\n")
    return 0 if ok else 1


def cmd_calibrate(args, out, err) -> int:
    series = read_csv(args.input)
    res = calibrate(series, periods_per_year=args.periods_per_year, min_obs=args.min_obs)
    params = res.to_params(rho=args.rho, lambda0=args.lambda0, lambda1=args.lambda1, K=args.K)
    result = {"params": params.as_dict(), "calibration": res.as_dict()}
    emit_json(args, result, None, out)
    return 0


def cmd_table(args, out, err) -> int:
    if args.sweep:
        params = validate(resolve_params(args))
        name, _, values = args.sweep.partition("=")
        if not values:
            raise CliError("UsageError", f"--sweep expects param=v1,v2,..., got {args.sweep!r}", 2)
        try:
            spec = SweepSpec(params, name.strip(), _floats(values), ("k", "C1", "C2", "C3", "k0", "k1"))
        except (KeyError, argparse.ArgumentTypeError) as exc:
            raise CliError("UsageError", str(exc).strip("'\""), 2) from None
        rows = run_sweep(spec)
        emit_csv(args, rows_to_csv(rows), params.as_dict(), out, err)
        return 0 if all(not r["error"] for r in rows) else 1
    params = validate(resolve_params(args))
    if args.kind == "asymptotic":
        emit_csv(args, rows_to_csv(asymptotic_curves(params)), params.as_dict(), out, err)
        return 0
    if args.kind == "profiles":
        emit_csv(args, rows_to_csv(function_profiles(solve(params))), params.as_dict(), out, err)
        return 0
    rows = table_comparison(params)
    emit_csv(args, rows_to_csv(rows), params.as_dict(), out, err)
    bad = sum(not r["ok"] for r in rows)
    if bad:
        err.write(f"{PROG}: error: TableMismatch: {bad} of {len(rows)} entries outside tolerance\n")
    return 0 if not bad else 1


def cmd_surface(args, out, err) -> int:
    params = validate(resolve_params(args))
    grid = np.logspace(math.log10(args.lambda_min), math.log10(args.lambda_max), args.points)
    l0 = np.array(args.lambda0_grid) if args.lambda0_grid else grid
    l1 = np.array(args.lambda1_grid) if args.lambda1_grid else grid
    s = surface(params, l0, l1)
    emit_csv(args, s.to_csv(), params.as_dict(), out, err)
    return 0 if np.all(np.isfinite(s.k)) else 1


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value or JSON parameter file")
    common.add_argument("--out", default=argparse.SUPPRESS, help="write output here instead of stdout")
    common.add_argument("--pretty", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)

    p = _Parser(prog=PROG, description="Optimal closing threshold for a pairs position under trading constraints.")
    p.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--pretty", action="store_true", default=False)
    p.add_argument("--seed", type=int, default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", parents=[common], help="threshold, coefficients and values")
    _add_param_flags(s)
    s.add_argument("--x1", type=float, default=1.0)
    s.add_argument("--x2", type=float, default=1.0)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("verify", parents=[common], help="QVI residual and positivity checks")
    _add_param_flags(s)
    s.add_argument("--points", type=int, default=4096)
    s.add_argument("--draws", type=int, default=0, help="random parameter draws for the QVI sweep")
    s.add_argument("--positivity-draws", type=int, default=0)
    s.add_argument("--report", default=None, help="write the full residual report (with grid) here")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimate of the policy value")
    _add_param_flags(s)
    s.add_argument("--paths", type=int, default=100_000)
    s.add_argument("--horizon", type=float, default=20.0)
    s.add_argument("--x1", type=float, default=1.0)
    s.add_argument("--x2", type=float, default=1.0)
    s.add_argument("--alpha", type=int, choices=(0, 1), default=1)
    s.add_argument("--monitor-step", type=float, default=1e-4)
    s.add_argument("--threshold-multiplier", type=float, default=None)
    s.add_argument("--convergence", action="store_true", help="rerun at half the monitoring step")
    s.add_argument("--dominance", type=_floats, default=None, metavar="M1,M2,...")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("calibrate", parents=[common], help="estimate drifts and volatilities from prices")
    s.add_argument("input", help="CSV with header date,p1,p2")
    s.add_argument("--periods-per-year", type=float, default=252.0)
    s.add_argument("--min-obs", type=int, default=30)
    s.add_argument("--rho", type=float, default=REFERENCE_PARAMS.rho)
    s.add_argument("--lambda0", type=float, default=REFERENCE_PARAMS.lambda0)
    s.add_argument("--lambda1", type=float, default=REFERENCE_PARAMS.lambda1)
    s.add_argument("--K", type=float, default=REFERENCE_PARAMS.K)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("table", parents=[common], help="sensitivity tables and curves as CSV")
    _add_param_flags(s)
    s.add_argument("--sweep", default=None, metavar="PARAM=V1,V2,...")
    s.add_argument("--kind", choices=("printed", "asymptotic", "profiles"), default="printed")
    s.set_defaults(func=cmd_table)

    s = sub.add_parser("surface", parents=[common], help="k over a (lambda0, lambda1) grid as CSV")
    _add_param_flags(s)
    s.add_argument("--lambda-min", type=float, default=1e-2)
    s.add_argument("--lambda-max", type=float, default=1e3)
    s.add_argument("--points", type=int, default=26)
    s.add_argument("--lambda0-grid", type=_floats, default=None)
    s.add_argument("--lambda1-grid", type=_floats, default=None)
    s.set_defaults(func=cmd_surface)
    return p


def main(argv=None, stdout=None, stderr=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        args.argv = argv
        return args.func(args, out, err)
    except CliError as exc:
        status, code, msg = exc.status, exc.code, str(exc)
    except ValidationError as exc:
        status, code, msg = 1, "InvalidParameters", str(exc)
    except (InvalidHorizon, InvalidThreshold, CalibrationError) as exc:
        status, code, msg = 1, type(exc).__name__, str(exc)
    except (OSError, json.JSONDecodeError) as exc:
        status, code, msg = 1, type(exc).__name__, str(exc)
    except ValueError as exc:
        status, code, msg = 1, "InvalidArgument", str(exc)
    err.write(f"{PROG}: error: {code}: {' '.join(msg.split())}\n")
    return status


if __name__ == "__main__":
    sys.exit(main())

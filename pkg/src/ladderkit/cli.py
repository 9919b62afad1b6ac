"""Command-line front end.

Model files are JSON documents::

    {"minus": {"drift": 0, "sigma2": 1, "downRate": 0, "downLaw": {"alpha": [..], "T": [[..]]}},
     "upRate": 1, "upLaw": {"alpha": [1], "T": [[-1]]}}

Every command prints a JSON report (or CSV for tables with ``--format csv``).
Exit codes: 0 success, 1 input error, 2 non-convergence, 3 Monte Carlo
disagreement (``compare`` with some ``|z| > 4``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from datetime import datetime, timezone
from importlib import metadata

import numpy as np

from . import fluctuation as fl
from . import phasetype as pht
from .model import (
    ExcludedModelError,
    PathClass,
    PhLevyModel,
    cl_roots,
    levy_exponent,
    mean_slope,
)
from .simulate import SimConfig, simulate_first_passage, simulate_paths, simulate_sup, simulate_wh4, write_samples_csv
from .whfactor import (
    MonotonicityError,
    NonConvergenceError,
    TiltUnavailableError,
    solve_ladder,
    tilt_model,
    tilt_root,
)

EXIT_OK, EXIT_INPUT, EXIT_NONCONV, EXIT_ZSCORE = 0, 1, 2, 3
Z_LIMIT = 4.0


class InputError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        z = complex(x)
        return z.real if z.imag == 0 else {"re": z.real, "im": z.imag}
    if isinstance(x, np.generic):
        return x.item()
    if hasattr(x, "to_dict"):
        return _jsonable(x.to_dict())
    return x


def load_model(path: str) -> tuple[PhLevyModel, bytes]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top level must be an object")
    try:
        return PhLevyModel.from_dict(doc), raw
    except (ExcludedModelError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: invalid model: {exc}") from exc


def _report(args, raw: bytes, outputs: dict, diagnostics: dict | None = None) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config", "format", "output")}
    digest = hashlib.sha256(raw + json.dumps(flags, sort_keys=True, default=str).encode()).hexdigest()
    return {
        "command": args.command,
        "flags": flags,
        "inputsDigest": digest,
        "outputs": _jsonable(outputs),
        "diagnostics": _jsonable(diagnostics or {}),
        "version": _version(),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _grid(spec: str) -> np.ndarray:
    """``"lo:hi:n"`` or a comma list; values are imaginary parts."""
    try:
        if ":" in spec:
            lo, hi, n = spec.split(":")
            return np.linspace(float(lo), float(hi), int(n))
        return np.array([float(v) for v in spec.split(",")])
    except ValueError as exc:
        raise InputError(f"bad grid {spec!r}") from exc


def _floats(spec: str) -> list[float]:
    try:
        return [float(v) for v in spec.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"bad number list {spec!r}") from exc


# --- commands ------------------------------------------------------------------


def cmd_validate(args):
    model, raw = load_model(args.config)
    problems = []
    for name, law in (("downLaw", model.minus.down_law), ("upLaw", model.up_law)):
        if law is not None:
            problems += [f"{name}: {p}" for p in pht.validate(law)]
    grid = _grid(args.grid)
    out = {
        "pathClass": model.path_class.value,
        "meanSlope": mean_slope(model),
        "phasesUp": model.m_up,
        "kappaGrid": [{"s": complex(0, t), "kappa": levy_exponent(model, 1j * t)} for t in grid],
        "violations": problems,
    }
    out["summary"] = f"{model.path_class.value}, mean_slope={out['meanSlope']}"
    return _report(args, raw, out), (EXIT_INPUT if problems else EXIT_OK), None


def cmd_solve(args):
    model, raw = load_model(args.config)
    sol = solve_ladder(model, args.a, tol=args.tol, max_iter=args.max_iter)
    out = sol.to_dict()
    if model.path_class is PathClass.GENERAL:
        out["phiAPlusLambda"] = sol.phi
    return _report(args, raw, out, {"iterations": sol.iterations, "residual": sol.residual}), EXIT_OK, None


def cmd_first_passage(args):
    model, raw = load_model(args.config)
    sol = solve_ladder(model, args.q)
    rows = []
    for k in _floats(args.levels):
        if k < 0:
            raise InputError("levels must be nonnegative")
        ov = fl.overshoot_law(model, args.q, k, sol)
        rows.append(
            {
                "k": k,
                "laplace": fl.first_passage_lt(model, args.q, k, sol),
                "creep": ov.atom0,
                "overshootAlpha": [] if ov.tail is None else ov.tail.alpha.tolist(),
            }
        )
    return _report(args, raw, {"q": args.q, "rows": rows}), EXIT_OK, rows


def cmd_wh(args):
    model, raw = load_model(args.config)
    sol = solve_ladder(model, args.a)
    rows = []
    for t in _grid(args.grid):
        s = 1j * t
        pr = fl.wh_plus_roots(model, args.a, s)
        pm = fl.wh_plus_matrix(model, args.a, s, sol)
        mn = fl.wh_minus(model, args.a, s)
        ident = pm * mn * (args.a - levy_exponent(model, s)) / args.a
        rows.append({"t": t, "phiPlusRoots": pr, "phiPlusMatrix": pm, "routeGap": abs(pr - pm), "phiMinus": mn, "identityGap": abs(ident - 1)})
    diag = {"maxRouteGap": max(r["routeGap"] for r in rows), "maxIdentityGap": max(r["identityGap"] for r in rows)}
    return _report(args, raw, {"a": args.a, "rows": rows}, diag), EXIT_OK, rows


def cmd_ladder(args):
    model, raw = load_model(args.config)
    sub = model.path_class is PathClass.MINUS_IS_SUBORDINATOR
    if sub and args.local_time_c is None:
        raise InputError("the subordinator case needs --local-time-c")
    c = args.local_time_c
    desc = fl.ladder_height_law(model, c)
    sol = solve_ladder(model, args.a)
    rows = []
    for t in _grid(args.grid):
        rows.append(
            {
                "s": t,
                "kappaPlus": fl.ladder_cumulant_plus(model, args.a, t, c, sol),
                "kappaMinus": fl.ladder_cumulant_minus(model, args.a, t),
            }
        )
    out = {"a": args.a, "ladderHeight": desc, "rows": rows}
    diag = {}
    if sub and args.a > 0:
        # the root-product form divides by prod(rho), which vanishes at a = 0
        chk = fl.kappa_plus_sub_check(model, args.a, c, [1j * r["s"] for r in rows], sol)
        diag = {"rootsFormGap": chk["rootsDiscrepancy"], "literalFormGap": chk["literalDiscrepancy"]}
    return _report(args, raw, out, diag), EXIT_OK, rows


def cmd_roots(args):
    model, raw = load_model(args.config)
    rep = cl_roots(model, args.a)
    out = {
        "a": args.a,
        "positiveRoots": rep.positive_roots,
        "otherRoots": rep.other_roots,
        "spuriousRoots": rep.spurious_roots,
        "countPositive": len(rep.positive_roots),
    }
    rows = [{"root": r, "side": "positive"} for r in rep.positive_roots] + [{"root": r, "side": "other"} for r in rep.other_roots]
    return _report(args, raw, out), EXIT_OK, rows


def cmd_tilt(args):
    model, raw = load_model(args.config)
    gamma = tilt_root(model) if args.gamma is None else args.gamma
    tilted = tilt_model(model, gamma)
    out = {"gamma": gamma, "kappaAtGamma": levy_exponent(model, gamma), "tiltedModel": tilted.to_dict(), "tiltedMeanSlope": mean_slope(tilted)}
    return _report(args, raw, out), EXIT_OK, None


def _sim_cfg(args) -> SimConfig:
    try:
        return SimConfig(args.paths, args.seed, args.q, args.level, not args.no_bridge)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def cmd_simulate(args):
    model, raw = load_model(args.config)
    cfg = _sim_cfg(args)
    sample = simulate_paths(model, cfg)
    fp = simulate_first_passage(model, cfg, sample)
    sup = simulate_sup(model, cfg, sample)
    if args.samples_csv:
        write_samples_csv(args.samples_csv, sample)
    out = {
        "pCross": fp["pCross"],
        "creepFraction": fp["creepFraction"],
        "phaseFrequencies": fp["phaseFrequencies"],
        "supAtom0": sup.atom0(),
        "supMean": float(sup.samples.mean()),
    }
    return _report(args, raw, out, {"notes": sample.notes}), EXIT_OK, None


def cmd_compare(args):
    model, raw = load_model(args.config)
    cfg = _sim_cfg(args)
    q, k = args.q, args.level
    sol = solve_ladder(model, q)
    sample = simulate_paths(model, cfg)
    fp = simulate_first_passage(model, cfg, sample)
    sup = simulate_sup(model, cfg, sample)
    law = fl.sup_law(model, q, sol)
    rows = [("pCross", fl.first_passage_lt(model, q, k, sol), fp["pCross"])]
    for lv in (0.5 * k, 2.0 * k) if k > 0 else (0.5, 2.0):
        rows.append((f"supTail@{lv:g}", law.survival(lv), sup.tail(lv)))
    lp = fl.ladder_phase(model, q, k, sol)
    if model.path_class is PathClass.GENERAL and lp.size:
        rows.append(("creepFraction", float(lp[0]), fp["creepFraction"]))
    rows.append((f"wh4({args.wh4_a:g},{args.wh4_b:g})", fl.wh4_rhs(model, q, args.wh4_a, args.wh4_b), simulate_wh4(model, cfg, args.wh4_a, args.wh4_b, sample)))
    table = []
    for name, exact, est in rows:
        table.append({"quantity": name, "analytic": exact, "estimate": est.value, "stdError": est.std_error, "z": est.z_score(exact)})
    worst = max(abs(r["z"]) for r in table)
    code = EXIT_ZSCORE if worst > Z_LIMIT else EXIT_OK
    return _report(args, raw, {"rows": table}, {"maxAbsZ": worst, "notes": sample.notes}), code, table


# --- plumbing -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ladderkit", description="First passage and Wiener-Hopf factors for Levy processes with phase-type jumps.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="model JSON file")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--output", "-o", help="write the report here instead of stdout")
        sp.set_defaults(func=func)
        return sp

    sp = add("validate", cmd_validate, "check a model file")
    sp.add_argument("--grid", default="0.5:5:10", help="imaginary parts for the kappa table (lo:hi:n or list)")

    sp = add("solve", cmd_solve, "solve for eta and Q_plus")
    sp.add_argument("--a", type=float, required=True, help="killing rate")
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.add_argument("--max-iter", type=int, default=10000)

    sp = add("first-passage", cmd_first_passage, "first-passage transforms and overshoot laws")
    sp.add_argument("--q", type=float, required=True)
    sp.add_argument("--levels", required=True, help="comma-separated levels")

    sp = add("wh", cmd_wh, "Wiener-Hopf factors on the imaginary axis, both routes")
    sp.add_argument("--a", type=float, required=True)
    sp.add_argument("--grid", default="0.1:5:10")

    sp = add("ladder", cmd_ladder, "ladder height law and ladder exponents")
    sp.add_argument("--a", type=float, default=0.0)
    sp.add_argument("--local-time-c", type=float, default=None)
    sp.add_argument("--grid", default="0.5:5:10", help="real points s")

    sp = add("roots", cmd_roots, "roots of kappa(s) = a")
    sp.add_argument("--a", type=float, required=True)

    sp = add("tilt", cmd_tilt, "exponentially tilted model")
    sp.add_argument("--gamma", type=float, default=None, help="default: positive root of kappa")

    for name, func, help_ in (("simulate", cmd_simulate, "Monte Carlo estimates"), ("compare", cmd_compare, "analytic values against Monte Carlo")):
        sp = add(name, func, help_)
        sp.add_argument("--q", type=float, required=True)
        sp.add_argument("--level", type=float, default=1.0)
        sp.add_argument("--paths", type=int, default=100000)
        sp.add_argument("--seed", type=int, default=20261016)
        sp.add_argument("--no-bridge", action="store_true", help="monitor on a 1e-3 grid instead of exact bridge maxima")
        if name == "simulate":
            sp.add_argument("--samples-csv", default=None)
        else:
            sp.add_argument("--wh4-a", type=float, default=1.0)
            sp.add_argument("--wh4-b", type=float, default=0.5)
    return p


def _to_csv(rows) -> str:
    rows = [_jsonable(r) for r in rows]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()) if rows else [])
    w.writeheader()
    for r in rows:
        w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})
    return buf.getvalue()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report, code, rows = args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NonConvergenceError, MonotonicityError) as exc:
        last = getattr(exc, "last_step", None)
        print(f"error: {exc}" + (f" (last step {last:.3g})" if last is not None else ""), file=sys.stderr)
        return EXIT_NONCONV
    except (TiltUnavailableError, ExcludedModelError, ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.format == "csv":
        if rows is None:
            print("error: this command has no tabular output; use --format json", file=sys.stderr)
            return EXIT_INPUT
        text = _to_csv(rows)
    else:
        text = json.dumps(report, indent=2) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())

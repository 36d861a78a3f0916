"""Command line driver for regularity certification runs.

Input is a registry instance name or a problem file path; output is a short
human summary on stdout plus, on request, a canonical JSON report (--out)
and a per-sample CSV dump (--csv).  Command-line flags override values from
the problem file, which override library defaults.

Exit codes:
  0  every requested analysis ran and no verdict failed
  1  a verdict failed or could not be established (details in the report)
  2  input error: malformed file, unknown instance, bad flag values; no
     report file is written
  3  internal guard tripped: lattice size cap or LP iteration limit
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np

from .errors import (DimensionMismatch, GridTooLarge, InvalidParameter,
                     NotAffine, NotInSet, NotPolyhedral, ProblemFileError,
                     RegcertError, SimplexIterationLimit, UnknownInstance)
from .geometry import TOL_FEAS, TOL_MEMBER
from .instances import builtin, registry_names
from .multimap import default_region, image_distance, image_distance_batch
from .oracle import Grid, grid_modulus
from .problems import (SCHEMA_VERSION, Problem, canonical_json,
                       instance_problem, load_problem, problem_to_dict,
                       samples_csv)
from .regularity import (NORM_CHOICE, SLOPE_SLACK, RegularityQuery,
                         coderivative_criterion,
                         empirical_directional_modulus, parametric_sweep,
                         perturbation_bound, robinson_condition,
                         slope_criterion)
from .slopes import ScalarField, error_bound_certificate

_GUARDS = (GridTooLarge, SimplexIterationLimit)

_INPUT_ERRORS = (ProblemFileError, UnknownInstance, NotInSet,
                 DimensionMismatch, InvalidParameter, NotAffine,
                 NotPolyhedral)

_EPILOG = """\
precedence: command-line flags > problem-file values > library defaults.

exit codes:
  0  all requested analyses ran and held
  1  a verdict failed or could not be established
  2  input error (no report file is written)
  3  internal guard tripped (lattice size cap, LP iteration limit)
"""


# ---------------------------------------------------------------------------
# Small helpers.

def _fmt(value: float) -> str:
    if np.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.6g}"


def _write_atomic(path: str, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _parse_floats(text: str, flag: str) -> list:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise InvalidParameter(
            f"{flag} expects comma-separated numbers, got {text!r}") from None


def _load_target(target: str) -> Problem:
    if target.endswith(".json") or os.path.sep in target \
            or os.path.isfile(target):
        return load_problem(target)
    return instance_problem(builtin(target))


def _build_query(problem: Problem, args) -> RegularityQuery:
    region = problem.region
    if region is None:
        region = default_region(problem.x0, 2.5 * problem.epsilon,
                                sample_budget=4000, grid_resolution=7)
    if getattr(args, "budget", None) is not None:
        if args.budget < 1:
            raise InvalidParameter("--budget must be positive")
        region = replace(region, sample_budget=args.budget)
    if getattr(args, "seed", None) is not None:
        region = replace(region, seed=args.seed)
    tol = getattr(args, "tol", None)
    tol = TOL_MEMBER if tol is None else tol
    return RegularityQuery(problem.F, problem.x0, problem.y0, dc=problem.dc,
                           epsilon=problem.epsilon, region=region,
                           tol_member=tol)


def _precheck_analyses(problem: Problem) -> None:
    """Reject unsatisfiable analysis requests before any work starts."""
    for i, spec in enumerate(problem.analyses):
        op = spec["op"]
        path = f"analyses[{i}]"
        if op == "slope" and "tau" not in spec:
            raise ProblemFileError(f"{path}.tau", "slope analysis needs tau")
        if op == "coderivative":
            if problem.dc is None:
                raise ProblemFileError(
                    path, "coderivative analysis needs a direction")
            if problem.F.K_polyhedron is None:
                raise ProblemFileError(
                    path, "coderivative analysis needs a polyhedral "
                          "constraint set")
        if op == "perturb":
            for key in ("tau", "delta", "ybar_norm", "alpha", "L"):
                if key not in spec:
                    raise ProblemFileError(f"{path}.{key}",
                                           "perturb analysis needs " + key)
        if op == "sweep":
            if problem.family_kind is None:
                raise ProblemFileError(path, "sweep analysis needs a family")
            if not spec.get("p_grid") and not problem.p_grid:
                raise ProblemFileError(f"{path}.p_grid",
                                       "sweep analysis needs a p grid")
        if op == "error_bound" and "xbar" not in spec:
            raise ProblemFileError(f"{path}.xbar",
                                   "error_bound analysis needs xbar "
                                   "(a point outside the solution set)")


# ---------------------------------------------------------------------------
# Analysis runners.  Each returns the result payload and a verdict; verdicts
# stay None for purely informational runs (no target given).

def _residual_field(q: RegularityQuery) -> ScalarField:
    y0 = q.y0

    def batch(X: np.ndarray) -> np.ndarray:
        Y = np.tile(y0, (X.shape[0], 1))
        return image_distance_batch(q.F, X, Y)

    return ScalarField(q.F.dim_in, fn=lambda x: image_distance(q.F, x, y0),
                       batch=batch)


def _run_modulus(problem, q, params, args, collect):
    est = empirical_directional_modulus(q, threads=args.threads,
                                        collect=collect)
    witness = None
    if est.worst_witness is not None:
        witness = {"x": est.worst_witness[0], "y": est.worst_witness[1]}
    result = {"sup_ratio": est.sup_ratio, "n_admissible": est.n_admissible,
              "n_checked": est.n_checked, "worst_witness": witness}
    target = params.get("tau_target")
    holds = None
    if target is not None:
        holds = bool(np.isfinite(est.sup_ratio) and est.sup_ratio <= target)
    return result, holds, est.samples


def _run_slope(problem, q, params, args):
    res = slope_criterion(q, params["tau"],
                          n_points=params.get("n_points", 24),
                          slope_budget=params.get("slope_budget", 300),
                          slack=params.get("slack", SLOPE_SLACK))
    result = {"min_slope": res.min_slope, "threshold": res.threshold,
              "tau": res.tau, "slack": res.slack,
              "n_violators": len(res.violators),
              "violators": [{"x": x, "y": y, "slope": s}
                            for x, y, s in res.violators[:5]]}
    return result, bool(res.holds)


def _run_robinson(problem, q, params, args):
    if params.get("ybar") is not None:
        ybar = np.asarray(params["ybar"], dtype=float)
    elif q.dc is not None:
        ybar = q.dc.ybar
    else:
        ybar = np.zeros(q.F.dim_out)
    res = robinson_condition(q.F, q.x0, ybar)
    result = {"margin": res.margin, "ybar": ybar,
              "lambda_max": res.lambda_max, "u_max": res.u_max}
    return result, bool(res.holds)


def _run_coderivative(problem, q, params, args):
    ladder = tuple(params.get("delta_ladder", (0.2, 0.1, 0.05)))
    est = coderivative_criterion(
        q, delta_ladder=ladder,
        samples_per_delta=params.get("samples_per_delta", 800))
    result = {"inf_value": est.inf_value,
              "per_delta": [{"delta": d, "min": v, "n_pairs": n}
                            for d, v, n in est.per_delta],
              "n_pairs": est.n_pairs,
              "bound_direction": est.bound_direction}
    m = params.get("m")
    holds = None if m is None else bool(est.holds_for_m(m))
    return result, holds


def _run_perturb_op(params):
    bound = perturbation_bound(params["tau"], params["delta"],
                               params["ybar_norm"], params["alpha"],
                               params["L"])
    return {"bound": bound}, True


def _run_sweep(problem, q, params, args):
    family = problem.family()
    grid = params.get("p_grid") or list(problem.p_grid)
    res = parametric_sweep(family, grid, q, threads=args.threads)
    result = {"uniform_modulus": res.uniform_modulus,
              "per_p": [{"p": p, "sup_ratio": s} for p, s in res.per_p]}
    target = params.get("tau_target")
    holds = None
    if target is not None:
        holds = bool(np.isfinite(res.uniform_modulus)
                     and res.uniform_modulus <= target)
    return result, holds


def _run_error_bound(problem, q, params, args):
    cert = error_bound_certificate(
        _residual_field(q), np.asarray(params["xbar"], dtype=float),
        q.region, max_slope_points=params.get("max_slope_points", 16),
        slope_budget=params.get("slope_budget", 300))
    result = {"f_value": cert.f_value, "d_sublevel": cert.d_sublevel,
              "slope_inf": cert.slope_inf,
              "n_slope_points": cert.n_slope_points,
              "boundary_witness": cert.boundary_witness}
    return result, bool(cert.holds)


def _run_analysis(problem, q, spec, args, collect):
    params = {k: v for k, v in spec.items() if k != "op"}
    record = {"op": spec["op"], "params": params, "result": None,
              "holds": None, "error": None}
    samples = None
    guard = False
    try:
        if spec["op"] == "modulus":
            record["result"], record["holds"], samples = _run_modulus(
                problem, q, params, args, collect)
        elif spec["op"] == "slope":
            record["result"], record["holds"] = _run_slope(
                problem, q, params, args)
        elif spec["op"] == "robinson":
            record["result"], record["holds"] = _run_robinson(
                problem, q, params, args)
        elif spec["op"] == "coderivative":
            record["result"], record["holds"] = _run_coderivative(
                problem, q, params, args)
        elif spec["op"] == "perturb":
            record["result"], record["holds"] = _run_perturb_op(params)
        elif spec["op"] == "sweep":
            record["result"], record["holds"] = _run_sweep(
                problem, q, params, args)
        elif spec["op"] == "error_bound":
            record["result"], record["holds"] = _run_error_bound(
                problem, q, params, args)
    except _GUARDS as exc:
        record["error"] = {"type": type(exc).__name__, "message": str(exc)}
        guard = True
    except RegcertError as exc:
        record["error"] = {"type": type(exc).__name__, "message": str(exc)}
    return record, samples, guard


def _describe(record: dict) -> str:
    op = record["op"]
    if record["error"] is not None:
        return (f"{op}: ERROR {record['error']['type']}: "
                f"{record['error']['message']}")
    res = record["result"]
    if op == "modulus":
        body = (f"sup_ratio={_fmt(res['sup_ratio'])} over "
                f"{res['n_admissible']} admissible pairs")
    elif op == "slope":
        body = (f"min_slope={_fmt(res['min_slope'])} vs threshold "
                f"{_fmt(res['threshold'])}")
    elif op == "robinson":
        body = f"margin={_fmt(res['margin'])}"
    elif op == "coderivative":
        body = (f"inf={_fmt(res['inf_value'])} over {res['n_pairs']} dual "
                f"pairs ({res['bound_direction']} bound)")
    elif op == "perturb":
        body = f"bound={_fmt(res['bound'])}"
    elif op == "sweep":
        body = f"uniform_modulus={_fmt(res['uniform_modulus'])}"
    else:
        body = (f"f={_fmt(res['f_value'])} d={_fmt(res['d_sublevel'])} "
                f"slope_inf={_fmt(res['slope_inf'])}")
    tag = {True: " -> PASS", False: " -> FAIL", None: ""}[record["holds"]]
    return f"{op}: {body}{tag}"


# ---------------------------------------------------------------------------
# Report pipeline shared by analyze and the single-analysis commands.

def _headline(records: list) -> dict:
    out = {"modulus_estimate": None, "min_slope": None,
           "coderivative_inf": None, "robinson_margin": None}
    for rec in records:
        if rec["error"] is not None:
            continue
        res = rec["result"]
        if rec["op"] == "modulus" and out["modulus_estimate"] is None:
            out["modulus_estimate"] = res["sup_ratio"]
        elif rec["op"] == "slope" and out["min_slope"] is None:
            out["min_slope"] = res["min_slope"]
        elif rec["op"] == "coderivative" and out["coderivative_inf"] is None:
            out["coderivative_inf"] = res["inf_value"]
        elif rec["op"] == "robinson" and out["robinson_margin"] is None:
            out["robinson_margin"] = res["margin"]
    return out


def _witnesses(records: list) -> dict:
    out = {}
    for rec in records:
        if rec["error"] is not None or rec["result"] is None:
            continue
        if rec["op"] == "modulus" and rec["result"]["worst_witness"]:
            out.setdefault("modulus_worst", rec["result"]["worst_witness"])
        if rec["op"] == "slope" and rec["result"]["violators"]:
            out.setdefault("slope_violators", rec["result"]["violators"])
        if rec["op"] == "error_bound" and \
                rec["result"]["boundary_witness"] is not None:
            out.setdefault("sublevel_boundary",
                           rec["result"]["boundary_witness"])
    return out


def _run_problem(problem: Problem, args) -> int:
    _precheck_analyses(problem)
    q = _build_query(problem, args)
    t0 = time.perf_counter()
    records = []
    all_samples = None
    guard_hit = False
    want_csv = getattr(args, "csv", None) is not None
    for spec in problem.analyses:
        collect = want_csv and all_samples is None and spec["op"] == "modulus"
        record, samples, guard = _run_analysis(problem, q, spec, args,
                                               collect)
        records.append(record)
        guard_hit = guard_hit or guard
        if samples is not None and all_samples is None:
            all_samples = samples
    wall = time.perf_counter() - t0

    n_failed = sum(1 for r in records if r["holds"] is False)
    n_errors = sum(1 for r in records if r["error"] is not None)
    verdicts = {"all_hold": n_failed == 0 and n_errors == 0,
                "n_analyses": len(records), "n_failed": n_failed,
                "n_errors": n_errors}

    report = {
        "schema_version": SCHEMA_VERSION,
        "problem": problem_to_dict(problem),
        "query": {"epsilon": q.epsilon, "seed": q.seed,
                  "sample_budget": q.region.sample_budget,
                  "grid_resolution": q.region.grid_resolution,
                  "box": q.region.box, "tol_member": q.tol_member},
        "analyses": records,
        "verdicts": verdicts,
        "summary": _headline(records),
        "witnesses": _witnesses(records),
        "seed": q.seed,
        "tolerances": {"tol_member": q.tol_member, "tol_feas": TOL_FEAS,
                       "slope_slack": SLOPE_SLACK},
        "norm_choice": NORM_CHOICE,
        "generated_at": None if args.no_timestamp
        else datetime.now(timezone.utc).isoformat(),
        "wall_time_s": None if args.no_timestamp else round(wall, 3),
    }

    name = problem.name or "problem"
    print(f"{name}: {len(records)} analyses, seed {q.seed}, budget "
          f"{q.region.sample_budget}")
    for record in records:
        print("  " + _describe(record))
    if getattr(args, "out", None):
        _write_atomic(args.out, canonical_json(report))
        print(f"report written to {args.out}")
    if want_csv:
        if all_samples is None:
            print("no modulus samples collected; csv not written",
                  file=sys.stderr)
        else:
            _write_atomic(args.csv, samples_csv(all_samples, q.F.dim_in,
                                                q.F.dim_out))
            print(f"samples written to {args.csv}")
    if guard_hit:
        return 3
    return 1 if n_failed or n_errors else 0


# ---------------------------------------------------------------------------
# Subcommand entry points.

def _cmd_analyze(args) -> int:
    return _run_problem(_load_target(args.problem), args)


def _cmd_single(args, spec: dict) -> int:
    problem = _load_target(args.problem)
    problem.analyses = (spec,)
    return _run_problem(problem, args)


def _cmd_modulus(args) -> int:
    spec = {"op": "modulus"}
    if args.tau is not None:
        spec["tau_target"] = args.tau
    return _cmd_single(args, spec)


def _cmd_slope(args) -> int:
    spec = {"op": "slope", "tau": args.tau, "n_points": args.n_points,
            "slope_budget": args.slope_budget}
    return _cmd_single(args, spec)


def _cmd_robinson(args) -> int:
    spec = {"op": "robinson"}
    if args.ybar is not None:
        spec["ybar"] = _parse_floats(args.ybar, "--ybar")
    return _cmd_single(args, spec)


def _cmd_coderivative(args) -> int:
    spec = {"op": "coderivative",
            "delta_ladder": _parse_floats(args.delta_ladder,
                                          "--delta-ladder"),
            "samples_per_delta": args.samples_per_delta}
    if args.m is not None:
        spec["m"] = args.m
    return _cmd_single(args, spec)


def _cmd_sweep(args) -> int:
    spec = {"op": "sweep"}
    if args.tau is not None:
        spec["tau_target"] = args.tau
    if args.p_grid is not None:
        spec["p_grid"] = _parse_floats(args.p_grid, "--p-grid")
    return _cmd_single(args, spec)


def _cmd_perturb(args) -> int:
    bound = perturbation_bound(args.tau, args.delta, args.ybar_norm,
                               args.alpha, args.L)
    print(_fmt(bound))
    if args.out:
        report = {
            "schema_version": SCHEMA_VERSION,
            "analysis": {"op": "perturb", "tau": args.tau,
                         "delta": args.delta, "ybar_norm": args.ybar_norm,
                         "alpha": args.alpha, "L": args.L},
            "result": {"bound": bound},
            "generated_at": None if args.no_timestamp
            else datetime.now(timezone.utc).isoformat(),
        }
        _write_atomic(args.out, canonical_json(report))
        print(f"report written to {args.out}")
    return 0


def _cmd_oracle_check(args) -> int:
    problem = _load_target(args.problem)
    q = _build_query(problem, args)
    din, dout = q.F.dim_in, q.F.dim_out
    px = args.points_x if args.points_x else (201 if din == 1 else 41)
    py = args.points_y if args.points_y else (201 if dout == 1 else 21)
    g_x = Grid(np.stack([q.x0 - 2.5 * q.epsilon, q.x0 + 2.5 * q.epsilon],
                        axis=1), px)
    g_y = Grid(np.stack([q.y0 - q.epsilon, q.y0 + q.epsilon], axis=1), py)
    oracle_sup = grid_modulus(q.F, q, g_x, g_y)
    est = empirical_directional_modulus(q, threads=args.threads)
    emp = est.sup_ratio

    step = max(g_x.step, g_y.step)
    if np.isinf(oracle_sup) and np.isinf(emp):
        agree, tol, diff = True, np.inf, 0.0
    elif np.isinf(oracle_sup) != np.isinf(emp):
        agree, tol, diff = False, 0.0, np.inf
    else:
        tol = step * max(1.0, oracle_sup)
        diff = abs(emp - oracle_sup)
        agree = diff <= tol

    name = problem.name or "problem"
    print(f"{name}: estimator={_fmt(emp)} oracle={_fmt(oracle_sup)} "
          f"diff={_fmt(diff)} tol={_fmt(tol)} "
          f"-> {'PASS' if agree else 'FAIL'}")
    if args.out:
        report = {
            "schema_version": SCHEMA_VERSION,
            "problem": problem_to_dict(problem),
            "oracle_check": {"estimator": emp, "oracle": oracle_sup,
                             "difference": diff, "tolerance": tol,
                             "grid_step": step, "points_x": px,
                             "points_y": py, "agree": agree},
            "seed": q.seed,
            "generated_at": None if args.no_timestamp
            else datetime.now(timezone.utc).isoformat(),
        }
        _write_atomic(args.out, canonical_json(report))
        print(f"report written to {args.out}")
    return 0 if agree else 1


def _cmd_instances(args) -> int:
    if args.export:
        problem = instance_problem(builtin(args.export))
        text = canonical_json(problem_to_dict(problem))
        if args.out:
            _write_atomic(args.out, text)
            print(f"problem written to {args.out}")
        else:
            sys.stdout.write(text)
        return 0
    for name in registry_names():
        inst = builtin(name)
        known = inst.known
        mod = "?" if known is None or known.modulus is None \
            else _fmt(known.modulus)
        rob = "?" if known is None or known.robinson is None \
            else str(known.robinson)
        dims = f"({inst.F.dim_in}->{inst.F.dim_out})"
        direction = " directional" if inst.dc is not None else ""
        print(f"{name} {dims}: modulus={mod} robinson={rob}{direction}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing.

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regcert",
        description="Estimate and certify metric regularity of "
                    "finite-dimensional set-valued mappings.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version",
                        version="regcert 0.1.0")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="PATH",
                        help="write a canonical JSON report (atomic)")
    common.add_argument("--csv", metavar="PATH",
                        help="write per-sample records of the first "
                             "modulus analysis")
    common.add_argument("--seed", type=int, default=None,
                        help="sampling seed (overrides the problem file)")
    common.add_argument("--budget", type=int, default=None,
                        help="sample budget (overrides the problem file)")
    common.add_argument("--tol", type=float, default=None,
                        help=f"membership tolerance (default {TOL_MEMBER})")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for sampling loops")
    common.add_argument("--no-timestamp", action="store_true",
                        help="omit timestamps and wall time for "
                             "byte-stable reports")

    p = sub.add_parser("analyze", parents=[common],
                       help="run every analysis listed in the problem")
    p.add_argument("problem", help="problem file path or instance name")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("modulus", parents=[common],
                       help="empirical modulus estimate")
    p.add_argument("problem", help="problem file path or instance name")
    p.add_argument("--tau", type=float, default=None,
                   help="target modulus; verdict is sup_ratio <= tau")
    p.set_defaults(func=_cmd_modulus)

    p = sub.add_parser("slope", parents=[common],
                       help="envelope slope criterion for a given tau")
    p.add_argument("problem", help="problem file path or instance name")
    p.add_argument("--tau", type=float, required=True,
                   help="modulus to certify against")
    p.add_argument("--n-points", type=int, default=24,
                   help="admissible pairs to probe")
    p.add_argument("--slope-budget", type=int, default=300,
                   help="samples per slope evaluation")
    p.set_defaults(func=_cmd_slope)

    p = sub.add_parser("robinson", parents=[common],
                       help="interiority LP certificate")
    p.add_argument("problem", help="problem file path or instance name")
    p.add_argument("--ybar", metavar="V1,V2,...", default=None,
                   help="direction (defaults to the problem direction, "
                        "else zero for the undirected condition)")
    p.set_defaults(func=_cmd_robinson)

    p = sub.add_parser("coderivative", parents=[common],
                       help="dual-pair coderivative criterion")
    p.add_argument("problem", help="problem file path or instance name")
    p.add_argument("--delta-ladder", metavar="D1,D2,...",
                   default="0.2,0.1,0.05", help="delta values to sweep")
    p.add_argument("--samples-per-delta", type=int, default=800,
                   help="dual pairs per delta")
    p.add_argument("--m", type=float, default=None,
                   help="threshold; verdict is inf > m")
    p.set_defaults(func=_cmd_coderivative)

    p = sub.add_parser("perturb",
                       help="stability bound under Lipschitz perturbation")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--ybar-norm", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--L", type=float, required=True,
                   help="Lipschitz size of the perturbation")
    p.add_argument("--out", metavar="PATH",
                   help="write a canonical JSON report (atomic)")
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit timestamps for byte-stable reports")
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("sweep", parents=[common],
                       help="uniform modulus over a parameter family")
    p.add_argument("problem", help="problem file path or instance name")
    p.add_argument("--tau", type=float, default=None,
                   help="target; verdict is uniform modulus <= tau")
    p.add_argument("--p-grid", metavar="P1,P2,...", default=None,
                   help="parameter grid (overrides the problem file)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("oracle-check", parents=[common],
                       help="compare the estimator against the grid oracle")
    p.add_argument("problem", help="problem file path or instance name")
    p.add_argument("--points-x", type=int, default=None,
                   help="lattice points per x axis")
    p.add_argument("--points-y", type=int, default=None,
                   help="lattice points per y axis")
    p.set_defaults(func=_cmd_oracle_check)

    p = sub.add_parser("instances",
                       help="list registry instances or export one")
    p.add_argument("--export", metavar="NAME", default=None,
                   help="emit the named instance as a problem file")
    p.add_argument("--out", metavar="PATH",
                   help="write the export here instead of stdout")
    p.set_defaults(func=_cmd_instances)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _GUARDS as exc:
        print(f"internal guard: {exc}", file=sys.stderr)
        return 3
    except _INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except RegcertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

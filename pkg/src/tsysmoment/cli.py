"""Command-line front end.

Problem files are JSON documents::

    {
      "interval": [0, 1],
      "functions": ["1", "x"],
      "objective": "x^2",
      "moments": [1, 0.5],
      "options": {"grid": 4097, "seed": 0, "tol": 1e-9, "rescale": "1"}
    }

Exit codes: 0 success, 1 usage/IO/spec error, 2 refuted hypothesis,
3 inconclusive, 4 infeasible, 5 no convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    HypothesisNotVerified,
    InfeasibleError,
    NoConvergenceError,
    NotMSystemError,
    ParseError,
    PreconditionError,
    SingularJacobianError,
    TsysError,
)
from .expr import Expression, parse
from .extremal import BoundConfig, bound, measure_for_original, objective_independence_check
from .funcsys import FunctionSystem, rescale
from .lp_oracle import DEFAULT_GRID, LADDER, Sense, make_grid, solve_grid_lp
from .tsys_verify import ZERO_TOL, Status, check_mplus_wronskian, check_tplus_ladder, normalize_signs

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REFUTED = 2
EXIT_INCONCLUSIVE = 3
EXIT_INFEASIBLE = 4
EXIT_NO_CONVERGENCE = 5

COMPARE_TOL = 1e-6


class SpecError(TsysError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    a: float
    b: float
    functions: tuple[Expression, ...]
    objective: Expression
    moments: tuple[float, ...]
    grid_size: int = DEFAULT_GRID
    seed: int | None = None
    tol: float | None = None
    rescale: Expression | None = None

    def system(self, rescaled: bool = True) -> FunctionSystem:
        sys_ = FunctionSystem(self.a, self.b, self.functions + (self.objective,))
        if rescaled and self.rescale is not None:
            sys_ = rescale(sys_, self.rescale)
        return sys_


def _expr(source, where: str) -> Expression:
    if not isinstance(source, str):
        raise SpecError(f"{where}: expected an expression string")
    try:
        return parse(source)
    except ParseError as exc:
        raise SpecError(f"{where}: {exc}") from exc


def spec_from_dict(doc) -> ProblemSpec:
    if not isinstance(doc, dict):
        raise SpecError("spec must be a JSON object")
    missing = [k for k in ("interval", "functions", "objective", "moments") if k not in doc]
    if missing:
        raise SpecError(f"missing keys: {', '.join(missing)}")
    interval = doc["interval"]
    if not (isinstance(interval, list) and len(interval) == 2):
        raise SpecError("interval must be a two-element array")
    a, b = (float(v) for v in interval)
    if not a < b:
        raise SpecError(f"interval needs a < b, got [{a}, {b}]")
    funcs = doc["functions"]
    if not isinstance(funcs, list) or not funcs:
        raise SpecError("functions must be a nonempty array of expressions")
    functions = tuple(_expr(f, f"functions[{i}]") for i, f in enumerate(funcs))
    objective = _expr(doc["objective"], "objective")
    moments = doc["moments"]
    if not isinstance(moments, list):
        raise SpecError("moments must be an array of numbers")
    if len(moments) != len(functions):
        raise SpecError(f"arity mismatch: {len(functions)} functions but {len(moments)} moments")
    options = doc.get("options", {}) or {}
    resc = options.get("rescale")
    return ProblemSpec(
        a, b, functions, objective, tuple(float(v) for v in moments),
        grid_size=int(options.get("grid", DEFAULT_GRID)),
        seed=None if options.get("seed") is None else int(options["seed"]),
        tol=None if options.get("tol") is None else float(options["tol"]),
        rescale=None if resc is None else _expr(resc, "options.rescale"),
    )


def load_spec(path) -> ProblemSpec:
    text = Path(path).read_text()
    if not text.strip():
        raise SpecError(f"{path}: empty spec file")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return spec_from_dict(doc)


# ----------------------------------------------------------------- output

def _f(v) -> str:
    return repr(float(v))


class Reporter:
    def __init__(self, as_json: bool, stream=None):
        self.as_json = as_json
        self.stream = stream or sys.stdout
        self.record: dict = {}

    def line(self, text: str = ""):
        if not self.as_json:
            print(text, file=self.stream)

    def finish(self, exit_code: int) -> int:
        if self.as_json:
            self.record["exit_code"] = exit_code
            print(json.dumps(self.record, sort_keys=True), file=self.stream)
        return exit_code


def _atoms_text(pairs) -> str:
    return "[" + ", ".join(f"({_f(x)}, {_f(w)})" for x, w in pairs) + "]"


# --------------------------------------------------------------- commands

def _settings(args, spec: ProblemSpec) -> tuple[int, float]:
    if args.seed is not None:
        seed = args.seed
    elif spec.seed is not None:
        seed = spec.seed
    elif os.environ.get("TSYS_SEED"):
        seed = int(os.environ["TSYS_SEED"])
    else:
        seed = 0
    tol = args.tol if args.tol is not None else (spec.tol if spec.tol is not None else ZERO_TOL)
    return seed, tol


def cmd_verify(spec: ProblemSpec, out: Reporter, seed: int = 0, tol: float = ZERO_TOL) -> int:
    system = spec.system()
    out.line(f"system: {system}")
    out.record.update({"command": "verify", "seed": seed})
    try:
        signs = normalize_signs(system, seed=seed, tol=tol)
    except NotMSystemError as exc:
        v = exc.verdict
        out.line(f"level {exc.level}: {v.status.value} ({v.note})")
        out.line(f"  witness nodes: {list(v.witness) if v.witness else None}")
        out.line(f"  determinant: {_f(v.value) if v.value is not None else None}")
        out.record.update({"signs": None, "levels": [v.to_record()]})
        return out.finish(EXIT_INCONCLUSIVE if v.status is Status.INCONCLUSIVE else EXIT_REFUTED)

    normalized = system.with_signs(list(signs))
    ladder = check_tplus_ladder(normalized, seed=seed, tol=tol)
    out.line(f"signs: {list(signs)}" + ("" if signs.trivial else "  (system is M+ after these flips)"))
    for v in ladder:
        out.line(f"level {v.level}: {v.status.value} (sample {v.sample_size})")
    w = check_mplus_wronskian(normalized, tol=tol)
    out.line(f"wronskian: {w.status.value}" + (f" at level {w.level}, x={w.witness}, W={w.value!r}"
                                               if w.witness else ""))
    out.record.update({
        "signs": list(signs),
        "levels": [v.to_record() for v in ladder],
        "wronskian": w.to_record(),
    })
    statuses = [v.status for v in ladder] + [w.status]
    if Status.REFUTED in statuses:
        return out.finish(EXIT_REFUTED)
    if Status.INCONCLUSIVE in statuses:
        return out.finish(EXIT_INCONCLUSIVE)
    return out.finish(EXIT_OK)


def cmd_bound(spec: ProblemSpec, sense, out: Reporter, seed: int = 0, tol: float = ZERO_TOL,
              override: bool = False) -> int:
    sense = Sense.parse(sense)
    system = spec.system()
    config = BoundConfig(grid_size=spec.grid_size, seed=seed, override=override, tol=tol)
    out.record.update({"command": "bound", "sense": sense.value})
    try:
        report = bound(system, spec.moments, sense, config)
    except HypothesisNotVerified as exc:
        out.line(f"hypothesis not verified: {exc}")
        for v in exc.verdicts:
            out.line(f"  level {v.level}: {v.status.value}")
        out.record["hypothesis"] = [v.to_record() for v in exc.verdicts]
        return out.finish(EXIT_REFUTED)
    except InfeasibleError as exc:
        out.line(f"infeasible: {exc}")
        out.record["error"] = str(exc)
        return out.finish(EXIT_INFEASIBLE)
    except (NoConvergenceError, SingularJacobianError) as exc:
        out.line(f"no convergence: {exc}")
        out.record["error"] = str(exc)
        return out.finish(EXIT_NO_CONVERGENCE)

    measure = report.measure
    if spec.rescale is not None:
        measure = measure_for_original(measure, spec.rescale)
    out.line(f"sense: {sense.value}")
    out.line(f"value: {_f(report.value)}")
    out.line(f"atoms: {_atoms_text(measure.pairs())}")
    out.line(f"cone: {report.cone.classification.value} (margin {_f(report.cone.margin)})")
    if report.template is not None:
        t = report.template
        out.line(f"template: {t.total_points} points, forced {sorted(t.forced_endpoints)}")
    out.line(f"moment residual: {_f(report.moment_residual)}")
    out.line(f"newton iterations: {report.newton_iterations}")
    out.line(f"oracle value: {_f(report.oracle_value)} (grid {report.oracle.grid_size})")
    out.line(f"oracle gap: {_f(report.oracle_gap)}")
    for flag in report.flags:
        out.line(f"note: {flag}")
    rec = report.to_record()
    rec["atoms"] = measure.to_record()
    out.record.update(rec)
    return out.finish(EXIT_OK)


def cmd_oracle(spec: ProblemSpec, sense, grids, out: Reporter) -> int:
    sense = Sense.parse(sense)
    system = spec.system()
    n = system.size - 2
    out.record.update({"command": "oracle", "sense": sense.value, "rungs": []})
    ok = True
    for N in grids:
        try:
            res = solve_grid_lp(system, spec.moments, make_grid(system.a, system.b, N), sense)
        except InfeasibleError as exc:
            out.line(f"grid {N}: infeasible ({exc})")
            out.record["error"] = str(exc)
            return out.finish(EXIT_INFEASIBLE)
        support = len(res.measure)
        ok &= support <= n + 1
        out.line(f"grid {N}: value {_f(res.value)} support {support} atoms {_atoms_text(res.measure.pairs())}")
        rec = res.to_record()
        rec["support_size"] = support
        out.record["rungs"].append(rec)
    out.record["support_bound_ok"] = ok
    if not ok:
        out.line(f"support exceeds n+1 = {n + 1}")
        return out.finish(EXIT_USAGE)
    return out.finish(EXIT_OK)


def cmd_compare(spec: ProblemSpec, alt: str, out: Reporter, seed: int = 0, tol: float = ZERO_TOL,
                override: bool = False, sense=None) -> int:
    system = spec.system()
    config = BoundConfig(grid_size=spec.grid_size, seed=seed, override=override, tol=tol)
    out.record.update({"command": "compare", "alt": alt})
    try:
        alt_expr = parse(alt)
        if spec.rescale is not None:
            from .expr import div

            alt_expr = div(alt_expr, spec.rescale)
        dist = objective_independence_check(system, spec.moments, alt_expr, sense, config)
    except HypothesisNotVerified as exc:
        out.line(f"hypothesis not verified: {exc}")
        out.record["hypothesis"] = [v.to_record() for v in exc.verdicts]
        return out.finish(EXIT_REFUTED)
    except InfeasibleError as exc:
        out.line(f"infeasible: {exc}")
        return out.finish(EXIT_INFEASIBLE)
    except (NoConvergenceError, SingularJacobianError) as exc:
        out.line(f"no convergence: {exc}")
        return out.finish(EXIT_NO_CONVERGENCE)
    out.line(f"support distance: {_f(dist)}")
    out.record["support_distance"] = dist
    return out.finish(EXIT_OK if dist <= COMPARE_TOL else EXIT_INCONCLUSIVE)


# ------------------------------------------------------------------- main

def _grids(text: str) -> list[int]:
    try:
        sizes = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid list {text!r}")
    if not sizes or min(sizes) < 2:
        raise argparse.ArgumentTypeError("grid sizes must be integers >= 2")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", required=True, help="problem spec (JSON)")
    common.add_argument("--seed", type=int, default=None, help="sampling seed (fallback: TSYS_SEED)")
    common.add_argument("--tol", type=float, default=None, help="zero tolerance for sign decisions")
    common.add_argument("--json", action="store_true", help="emit one JSON report object")
    common.add_argument("--override", action="store_true",
                        help="proceed even if the T+ hypothesis is not verified")

    p = argparse.ArgumentParser(prog="tsysmoment", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="check T+/M+ structure")
    b = sub.add_parser("bound", parents=[common], help="sharp bound on the objective moment")
    b.add_argument("--sense", choices=["max", "min"], required=True)
    o = sub.add_parser("oracle", parents=[common], help="grid-LP ladder")
    o.add_argument("--grids", type=_grids, default=list(LADDER))
    o.add_argument("--sense", choices=["max", "min"], default="max")
    c = sub.add_parser("compare", parents=[common], help="objective independence check")
    c.add_argument("--alt", required=True, help="alternative objective expression")
    c.add_argument("--sense", choices=["max", "min"], default=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    out = Reporter(args.json)
    try:
        spec = load_spec(args.spec)
        seed, tol = _settings(args, spec)
        if args.command == "verify":
            return cmd_verify(spec, out, seed, tol)
        if args.command == "bound":
            return cmd_bound(spec, args.sense, out, seed, tol, args.override)
        if args.command == "oracle":
            return cmd_oracle(spec, args.sense, args.grids, out)
        return cmd_compare(spec, args.alt, out, seed, tol, args.override, args.sense)
    except (OSError, SpecError, PreconditionError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""
Command-line front end.

Exit codes: 0 ok, 1 selfcheck failure, 2 bad input, 3 no convergence,
4 resource limit.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .baselines import sandwich_check
from .cd_rate import (
    AuxiliaryChannel,
    OptimizerOptions,
    achieved_distortions,
    optimal_decoders,
    optimize_cd_rate,
)
from .coding_sim import CodebookConfig, TypicalityParams, run_sweep
from .exceptions import CompDeliveryError, Infeasible, NonConvergence, ShapeMismatch, TooLarge
from .gcd_rate import DecoderSpec, GCDProblem, optimize_gcd_rate
from .prob_core import DecoderRule, DistortionMeasure, check_budgets, validate_joint

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_RESOURCE = 0, 1, 2, 3, 4
LN2 = math.log(2)


class InputError(CompDeliveryError):
    pass


@dataclass
class ProblemFile:
    """In-memory form of a JSON problem file."""

    alphabets: list
    pmf: list
    distortions: list
    budgets: list
    u_size: int | None = None
    optimizer: dict = field(default_factory=dict)
    simulator: dict = field(default_factory=dict)
    decoders: list | None = None

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.alphabets)

    def source(self):
        return validate_joint(self.pmf, self.sizes)

    def measures(self) -> list[DistortionMeasure]:
        return [DistortionMeasure(m) for m in self.distortions]

    def to_dict(self) -> dict:
        d = {
            "alphabets": self.alphabets,
            "pmf": self.pmf,
            "distortions": self.distortions,
            "budgets": [_num_out(b) for b in self.budgets],
        }
        if self.u_size is not None:
            d["u_size"] = self.u_size
        if self.optimizer:
            d["optimizer"] = self.optimizer
        if self.simulator:
            d["simulator"] = self.simulator
        if self.decoders is not None:
            d["decoders"] = [
                {"targets": s["targets"], "budgets": [_num_out(b) for b in s["budgets"]]}
                for s in self.decoders
            ]
        return d


def _num_in(v):
    if isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return math.inf
    return float(v)


def _num_out(v):
    return "inf" if math.isinf(v) else v


OPTIMIZER_KEYS = {f.name for f in fields(OptimizerOptions)}
SIMULATOR_KEYS = {"ns", "trials", "seeds", "gamma", "m1", "l1", "l2", "delta", "k0", "k1", "k2", "k3"}


def parse_problem(raw: dict) -> ProblemFile:
    """Validate a decoded JSON problem; raises :class:`InputError` or a validation error."""
    if not isinstance(raw, dict):
        raise InputError("problem file must hold a JSON object")
    missing = [k for k in ("alphabets", "pmf", "distortions", "budgets") if k not in raw]
    if missing:
        raise InputError(f"problem file lacks {missing}")
    alphabets = raw["alphabets"]
    if isinstance(alphabets, list) and all(isinstance(a, int) for a in alphabets):
        alphabets = [[str(i) for i in range(a)] for a in alphabets]
    alphabets = [[str(s) for s in a] for a in alphabets]
    pmf = [float(v) for v in np.asarray(raw["pmf"], dtype=float).reshape(-1)]
    p = ProblemFile(
        alphabets=alphabets,
        pmf=pmf,
        distortions=[np.asarray(m, dtype=float).tolist() for m in raw["distortions"]],
        budgets=[_num_in(b) for b in raw["budgets"]],
        u_size=None if raw.get("u_size") is None else int(raw["u_size"]),
        optimizer=dict(raw.get("optimizer") or {}),
        simulator=dict(raw.get("simulator") or {}),
        decoders=None,
    )
    if raw.get("decoders") is not None:
        p.decoders = [
            {"targets": [int(i) for i in s["targets"]], "budgets": [_num_in(b) for b in s["budgets"]]}
            for s in raw["decoders"]
        ]
    bad = set(p.optimizer) - OPTIMIZER_KEYS
    if bad:
        raise InputError(f"unknown optimizer options {sorted(bad)}")
    bad = set(p.simulator) - SIMULATOR_KEYS
    if bad:
        raise InputError(f"unknown simulator options {sorted(bad)}")
    # full validation up front
    p.source()
    dms = p.measures()
    if len(dms) != len(p.sizes):
        raise ShapeMismatch("one distortion matrix per source coordinate is required")
    for dm, n in zip(dms, p.sizes):
        if dm.n_source != n:
            raise ShapeMismatch("distortion matrix rows must match the alphabet size")
    check_budgets(p.budgets)
    for s in p.decoders or []:
        check_budgets(s["budgets"])
    return p


def load_problem(path: str) -> ProblemFile:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read problem file {path}: {e}") from e
    return parse_problem(raw)


# ---------------------------------------------------------------------------


def _options(args, prob: ProblemFile) -> OptimizerOptions:
    o = OptimizerOptions(**prob.optimizer)
    if prob.u_size is not None:
        o = replace(o, u_size=prob.u_size)
    if args.seed is not None:
        o = replace(o, seed=args.seed)
    if args.restarts is not None:
        o = replace(o, restarts=args.restarts)
    if args.u_size is not None:
        o = replace(o, u_size=args.u_size)
    return o


def _cd_parts(prob: ProblemFile):
    src = prob.source()
    if src.n_coords != 2:
        raise ShapeMismatch("this command needs a two-coordinate problem (use `gcd` for more)")
    dms = prob.measures()
    if len(prob.budgets) != 2:
        raise ShapeMismatch("budgets must be a pair [D_X, D_Y]")
    return src, (dms[0], dms[1]), tuple(prob.budgets)


def _rate_fields(rate: float, bits: bool) -> dict:
    return {
        "rate": rate / LN2 if bits else rate,
        "units": "bits" if bits else "nats",
        "rate_nats": rate,
        "rate_bits": rate / LN2,
    }


def _solution_dict(sol) -> dict:
    return {
        "channel": sol.channel.rows.tolist(),
        "decoders": [d.table.tolist() for d in sol.decoders],
    }


def cmd_rate(args, out) -> int:
    prob = load_problem(args.problem)
    src, dms, budgets = _cd_parts(prob)
    opts = _options(args, prob)
    sol = optimize_cd_rate(src, dms, budgets, opts)
    feas = np.isfinite(sol.restart_rates)
    rep = {
        **_rate_fields(sol.rate, args.bits),
        "seed": opts.seed,
        "budgets": [_num_out(b) for b in budgets],
        "achieved_distortions": list(sol.achieved_distortions),
        "feasible": sol.feasible,
        "restarts_used": sol.restarts_used,
        "restarts_feasible": int(feas.sum()),
        "restart_rate_median_nats": float(np.median(sol.restart_rates[feas])),
        "u_size": sol.channel.u_size,
    }
    if args.dump_solution:
        rep["solution"] = _solution_dict(sol)
    _emit(rep, args, out)
    return EXIT_OK


def _parse_list(s: str) -> list[float]:
    try:
        return [_num_in(v) for v in s.split(",") if v.strip()]
    except ValueError as e:
        raise InputError(f"bad number list {s!r}") from e


def cmd_curve(args, out) -> int:
    prob = load_problem(args.problem)
    src, dms, _ = _cd_parts(prob)
    opts = _options(args, prob)
    if args.diag:
        points = [(d, d) for d in _parse_list(args.diag)]
    elif args.dx and args.dy:
        points = [(a, b) for a in _parse_list(args.dx) for b in _parse_list(args.dy)]
    else:
        raise InputError("give --diag or both --dx and --dy")
    if not points:
        raise InputError("the grid needs at least one point")
    rows = []
    for dx, dy in points:
        try:
            sol = optimize_cd_rate(src, dms, (dx, dy), opts)
            rows.append({"D_X": dx, "D_Y": dy, "rate_nats": sol.rate, "status": "ok"})
        except Infeasible:
            rows.append({"D_X": dx, "D_Y": dy, "rate_nats": math.inf, "status": "infeasible"})
        except NonConvergence:
            rows.append({"D_X": dx, "D_Y": dy, "rate_nats": math.nan, "status": "nonconvergence"})
    monotone = _monotone(rows)
    if args.format == "json":
        _emit({"units": "bits" if args.bits else "nats", "seed": opts.seed, "points": [
            {**r, "rate": _scale(r["rate_nats"], args.bits)} for r in rows
        ], "monotone": monotone}, args, out)
        return EXIT_OK
    unit = "bits" if args.bits else "nats"
    out.write(f"D_X,D_Y,rate_{unit},status\n")
    for r in rows:
        out.write(f"{r['D_X']!r},{r['D_Y']!r},{_scale(r['rate_nats'], args.bits)!r},{r['status']}\n")
    out.write(f"# seed={opts.seed} units={unit} monotone={str(monotone).lower()}\n")
    return EXIT_OK


def _scale(v: float, bits: bool) -> float:
    return v / LN2 if bits else v


def _monotone(rows, tol: float = 1e-3) -> bool:
    """No point has a larger rate than a point it dominates (both budgets larger)."""
    ok = [r for r in rows if r["status"] == "ok"]
    for a in ok:
        for b in ok:
            if b["D_X"] >= a["D_X"] and b["D_Y"] >= a["D_Y"] and b["rate_nats"] > a["rate_nats"] + tol:
                return False
    return True


def cmd_baselines(args, out) -> int:
    prob = load_problem(args.problem)
    src, dms, budgets = _cd_parts(prob)
    opts = _options(args, prob)
    rep = sandwich_check(src, dms, budgets, opts)
    k = 1 / LN2 if args.bits else 1.0
    scaled = {
        key: ([v * k for v in val] if isinstance(val, list) and key != "budgets" else
              val * k if isinstance(val, float) else val)
        for key, val in rep.items()
    }
    scaled["budgets"] = [_num_out(b) for b in budgets]
    scaled["units"] = "bits" if args.bits else "nats"
    scaled["seed"] = opts.seed
    _emit(scaled, args, out)
    return EXIT_OK


def _load_solution(path: str, src, dms):
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read solution file {path}: {e}") from e
    raw = raw.get("solution", raw)
    ch = AuxiliaryChannel(np.asarray(raw["channel"], dtype=float))
    if "decoders" in raw:
        decs = tuple(DecoderRule(np.asarray(t)) for t in raw["decoders"])
    else:
        decs = optimal_decoders(src, ch, dms)
    return ch, decs


def cmd_simulate(args, out) -> int:
    prob = load_problem(args.problem)
    src, dms, budgets = _cd_parts(prob)
    sim = dict(prob.simulator)
    if args.solution:
        ch, decs = _load_solution(args.solution, src, dms)
    else:
        sol = optimize_cd_rate(src, dms, budgets, _options(args, prob))
        ch, decs = sol.channel, sol.decoders
    params = TypicalityParams(**{k: sim[k] for k in ("delta", "k0", "k1", "k2", "k3") if k in sim})
    base = CodebookConfig(n=1, **{k: sim[k] for k in ("gamma", "m1", "l1", "l2") if k in sim})
    if args.ns:
        ns = [int(v) for v in _parse_list(args.ns)]
    else:
        ns = sim.get("ns", [8, 12, 16])
    trials = args.trials or int(sim.get("trials", 1000))
    seeds = [args.seed] if args.seed is not None else sim.get("seeds", [0])
    bud = tuple(b if math.isfinite(b) else d for b, d in zip(budgets, achieved_distortions(src, ch, decs, dms)))
    rep = run_sweep(src, ch, decs, dms, ns, base, params, trials, bud, seeds)
    if args.out:
        Path(args.out + ".json").write_text(rep.to_json() + "\n")
        Path(args.out + ".csv").write_text(rep.to_csv())
    out.write(rep.to_csv() if args.format == "csv" else rep.to_json() + "\n")
    return EXIT_OK


def _gcd_problem(prob: ProblemFile) -> GCDProblem:
    src = prob.source()
    dms = prob.measures()
    if prob.decoders is None:
        if src.n_coords != 2:
            raise InputError("a problem with more than two sources needs a `decoders` list")
        specs = [{"targets": [0], "budgets": [prob.budgets[0]]}, {"targets": [1], "budgets": [prob.budgets[1]]}]
    else:
        specs = prob.decoders
    return GCDProblem(src, tuple(
        DecoderSpec(tuple(s["targets"]), tuple(dms[i] for i in s["targets"]), tuple(s["budgets"]))
        for s in specs
    ))


def cmd_gcd(args, out) -> int:
    prob = load_problem(args.problem)
    problem = _gcd_problem(prob)
    opts = _options(args, prob)
    sol = optimize_gcd_rate(problem, opts)
    rep = {
        **_rate_fields(sol.rate, args.bits),
        "seed": opts.seed,
        "feasible": sol.feasible,
        "restarts_used": sol.restarts_used,
        "achieved_distortions": [
            {"decoder": j, "target": i, "distortion": d} for (j, i), d in sol.achieved_distortions.items()
        ],
    }
    canonical = [s.targets for s in problem.decoder_specs] == [(0,), (1,)] and problem.source.n_coords == 2
    if canonical:
        dms = prob.measures()
        b = tuple(s.budgets[0] for s in problem.decoder_specs)
        cd = optimize_cd_rate(problem.source, (dms[0], dms[1]), b, opts)
        rep["cd_rate_nats"] = cd.rate
        rep["cd_delta_nats"] = sol.rate - cd.rate
    if args.dump_solution:
        rep["solution"] = {
            "channel": sol.channel.rows.tolist(),
            "decoders": [
                {"decoder": j, "target": i, "table": r.table.tolist()} for (j, i), r in sol.decoders.items()
            ],
        }
    _emit(rep, args, out)
    return EXIT_OK


def cmd_selfcheck(args, out) -> int:
    from .selfcheck import run_selfcheck

    results = run_selfcheck(seed=args.seed or 0)
    ok = all(r[1] for r in results)
    if args.format == "json":
        _emit({"checks": [{"name": n, "passed": p, "detail": d} for n, p, d in results], "passed": ok}, args, out)
    else:
        for name, passed, detail in results:
            out.write(f"{'PASS' if passed else 'FAIL'} {name}: {detail}\n")
    return EXIT_OK if ok else EXIT_CHECK


def _emit(obj, args, out):
    if args.format == "csv" and isinstance(obj, dict):
        flat = {k: v for k, v in obj.items() if not isinstance(v, (dict, list))}
        out.write(",".join(flat) + "\n")
        out.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in flat.values()) + "\n")
        return
    out.write(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default: from file or 0)")
    common.add_argument("--restarts", type=int, default=None)
    common.add_argument("--u-size", type=int, default=None, dest="u_size")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--bits", action="store_true", help="report rates in bits")
    common.add_argument("--dump-solution", action="store_true", dest="dump_solution")
    common.add_argument("--dump-problem", action="store_true", dest="dump_problem",
                        help="print the parsed problem file and exit")

    p = argparse.ArgumentParser(prog="compdelivery", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("rate", parents=[common], help="optimize the two-source rate")
    s.add_argument("problem")
    s.set_defaults(func=cmd_rate)

    s = sub.add_parser("curve", parents=[common], help="sweep budgets (CSV by default)")
    s.add_argument("problem")
    s.add_argument("--diag", help="comma list of D used for both budgets")
    s.add_argument("--dx", help="comma list of D_X values (with --dy: full grid)")
    s.add_argument("--dy", help="comma list of D_Y values")
    s.set_defaults(func=cmd_curve, format=None)

    s = sub.add_parser("baselines", parents=[common], help="lossless, conditional and Wyner-Ziv bounds")
    s.add_argument("problem")
    s.set_defaults(func=cmd_baselines)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo of the binning scheme")
    s.add_argument("problem")
    s.add_argument("--solution", help="JSON from `rate --dump-solution` (default: optimize now)")
    s.add_argument("--ns", help="comma list of block lengths")
    s.add_argument("--trials", type=int)
    s.add_argument("--out", help="write OUT.json and OUT.csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("gcd", parents=[common], help="optimize the N-source rate")
    s.add_argument("problem")
    s.set_defaults(func=cmd_gcd)

    s = sub.add_parser("selfcheck", parents=[common], help="run invariants on built-in instances")
    s.set_defaults(func=cmd_selfcheck, format="text")
    return p


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.func is cmd_curve and args.format is None:
        args.format = "csv"
    try:
        if args.dump_problem and getattr(args, "problem", None):
            out.write(json.dumps(load_problem(args.problem).to_dict(), indent=2) + "\n")
            return EXIT_OK
        return args.func(args, out)
    except TooLarge as e:
        print(f"error: TooLarge: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except NonConvergence as e:
        print(f"error: NonConvergence: {e}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (CompDeliveryError, ValueError, KeyError, TypeError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Every successful invocation prints one JSON report line containing the query
echo, the embedded problem document, the result with its witness, solver
statistics, and timing.  Reports are self-contained: `verify-witness` re-checks
the certificate inside a report against the problem it carries.

Exit codes: 0 query answered (whatever the verdict), 1 usage error, 2 input
validation error, 3 enumeration size guard exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction
from typing import Optional

from . import analysis, deviation, lp, oracle, rationalize
from .model import (
    DecisionProblem,
    JointDistribution,
    MarginalDistribution,
    ParseError,
    ValidationError,
    format_rational,
    instantiate,
    load_problem,
    parse_rational,
    problem_from_dict,
    problem_to_dict,
)


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # do not sys.exit from inside the library
        raise UsageError(message)


def _split_dist_items(spec: str) -> list[tuple[str, str]]:
    """Parse ``leaf:weight,...`` where leaf ids may themselves contain commas."""
    items: list[tuple[str, str]] = []
    pending: list[str] = []
    for token in spec.split(","):
        if ":" in token:
            head, _, weight = token.rpartition(":")
            items.append((",".join(pending + [head]), weight))
            pending = []
        else:
            pending.append(token)
    if pending:
        raise UsageError(f"dangling distribution tokens {','.join(pending)!r}")
    return items


def _parse_marginal(problem: DecisionProblem, spec: str) -> MarginalDistribution:
    return MarginalDistribution.from_mapping(
        problem, {leaf: w for leaf, w in _split_dist_items(spec)}
    )


def _parse_joint(problem: DecisionProblem, spec: str) -> JointDistribution:
    weights = {}
    for key, w in _split_dist_items(spec):
        if "@" not in key:
            raise UsageError(f"joint cell {key!r} must look like leaf@state")
        leaf, _, state = key.rpartition("@")
        weights[(leaf, state)] = w
    return JointDistribution.from_mapping(problem, weights)


def _load_dist_file(problem: DecisionProblem, path: str, joint: bool):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh, parse_float=Fraction)
    if joint:
        return JointDistribution.from_mapping(problem, doc)
    return MarginalDistribution.from_mapping(problem, doc)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("problem", help="problem file (JSON)")
    sub.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                     help="pin a parameter, e.g. --param delta=4/5 (repeatable)")
    sub.add_argument("--max-rules", type=int, default=deviation.DEFAULT_MAX_RULES,
                     help="cap on pure-rule enumeration")
    sub.add_argument("--pretty", action="store_true",
                     help="append a human-readable summary after the JSON report")


def _build_parser() -> _Parser:
    parser = _Parser(prog="dynrat", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("check-seq", help="can a single action sequence be rationalized?")
    _add_common(s)
    s.add_argument("--seq", required=True, help="comma-joined action labels")

    s = subs.add_parser("check-joint", help="can a joint action-state law be rationalized?")
    _add_common(s)
    s.add_argument("--dist", help="inline cells leaf@state:p/q,...")
    s.add_argument("--dist-file", help="JSON file {leaf: {state: weight}}")

    s = subs.add_parser("check-marginal", help="can an action-sequence law be rationalized?")
    _add_common(s)
    s.add_argument("--dist", help="inline cells leaf:p/q,...")
    s.add_argument("--dist-file", help="JSON file {leaf: weight}")

    s = subs.add_parser("maxprob", help="largest rationalizable probability of a sequence")
    _add_common(s)
    s.add_argument("--seq", required=True)

    s = subs.add_parser("identify", help="parameter values consistent with an observation")
    _add_common(s)
    s.add_argument("--seq", help="observed action sequence")
    s.add_argument("--marginal", help="observed marginal, inline leaf:p/q,...")
    s.add_argument("--joint", help="observed joint, inline leaf@state:p/q,...")
    s.add_argument("--sweep", required=True, help="parameter to sweep")
    s.add_argument("--range", required=True, metavar="LO:HI", dest="sweep_range")
    s.add_argument("--tol", default=None, help="bracketing tolerance (default range/1024)")
    s.add_argument("--grid", type=int, default=33, help="number of scan points")

    s = subs.add_parser("enumerate-rules", help="list every adapted pure deviation rule")
    _add_common(s)

    s = subs.add_parser("verify-witness", help="re-check the certificate inside a report")
    s.add_argument("report", help="report file produced by another subcommand")
    s.add_argument("--pretty", action="store_true")

    s = subs.add_parser("simulate", help="sample (state, signals, play) and report the empirical law")
    _add_common(s)
    s.add_argument("--structure", required=True, help="information structure JSON file")
    s.add_argument("--strategy", required=True, help="strategy JSON file")
    s.add_argument("-n", type=int, required=True, help="number of draws")
    s.add_argument("--seed", type=int, default=0)

    return parser


def _load_problem_and_params(args) -> tuple[DecisionProblem, dict]:
    with open(args.problem, "r", encoding="utf-8") as fh:
        base = load_problem(fh.read())
    params: dict[str, Fraction] = {}
    for item in args.param:
        if "=" not in item:
            raise UsageError(f"--param expects NAME=VALUE, got {item!r}")
        name, _, value = item.partition("=")
        params[name] = parse_rational(value)
    return base, params


def _float_repr(q: Fraction) -> float:
    return float(q)


def _pretty_verdict(result: dict) -> list[str]:
    lines = []
    if "rationalizable" in result:
        verdict = "rationalizable" if result["rationalizable"] else "NOT rationalizable"
        kind = result["witness"]["kind"].replace("_", " ")
        lines.append(f"verdict: {verdict} (witness: {kind})")
    if "value" in result:
        q = Fraction(result["value"])
        lines.append(f"value: {result['value']} (~{float(q):.6g})")
    return lines


def _emit(report: dict, pretty: bool) -> None:
    print(json.dumps(report, sort_keys=True))
    if pretty:
        for line in _pretty_verdict(report["result"]):
            print(line)


def _query_echo(args, **extra) -> dict:
    echo = {"command": args.command, "params": {}}
    for item in getattr(args, "param", []):
        name, _, value = item.partition("=")
        echo["params"][name] = format_rational(parse_rational(value))
    echo.update(extra)
    return echo


def _run_query(args) -> dict:
    base, params = _load_problem_and_params(args)
    pivots_before = lp.pivot_tally()
    result: dict
    rules_enumerated = 0
    if args.command == "identify":
        inst = base  # the swept parameter stays free; pinning happens per grid point
    else:
        inst = instantiate(base, params) if (params or base.has_params) else base

    if args.command == "check-seq":
        seq = inst.sequence(args.seq)
        verdict = rationalize.rationalize_sequence(inst, seq)
        result = verdict.to_json_dict()
        try:
            rules_enumerated = len(deviation.enumerate_pure_rules(inst, args.max_rules))
        except deviation.SizeGuardError:
            rules_enumerated = 0
        query = _query_echo(args, seq=args.seq)

    elif args.command == "check-joint":
        if (args.dist is None) == (args.dist_file is None):
            raise UsageError("give exactly one of --dist / --dist-file")
        joint = (_parse_joint(inst, args.dist) if args.dist
                 else _load_dist_file(inst, args.dist_file, joint=True))
        rule = rationalize.dominated_on_average(inst, joint)
        if rule is None:
            triple = rationalize.obedient_triple_from_joint(joint)
            result = rationalize.Verdict(True, triple).to_json_dict()
        else:
            result = rationalize.Verdict(False, rule).to_json_dict()
        query = _query_echo(args, dist=joint.to_json_dict())

    elif args.command == "check-marginal":
        if (args.dist is None) == (args.dist_file is None):
            raise UsageError("give exactly one of --dist / --dist-file")
        marginal = (_parse_marginal(inst, args.dist) if args.dist
                    else _load_dist_file(inst, args.dist_file, joint=False))
        rule = rationalize.intermediately_dominated(inst, marginal)
        if rule is None:
            joint = rationalize.rationalizing_joint(
                inst, marginal=marginal, max_rules=args.max_rules
            )
            if joint is None:  # pragma: no cover - dichotomy guarantees a witness
                raise rationalize.InternalInconsistencyError("no witness on either side")
            triple = rationalize.obedient_triple_from_joint(joint)
            result = rationalize.Verdict(True, triple).to_json_dict()
            rules_enumerated = len(deviation.enumerate_pure_rules(inst, args.max_rules))
        else:
            result = rationalize.Verdict(False, rule).to_json_dict()
        query = _query_echo(args, dist=marginal.to_json_dict())

    elif args.command == "maxprob":
        seq = inst.sequence(args.seq)
        value = analysis.max_rationalizable_probability(inst, seq, args.max_rules)
        result = {"value": format_rational(value)}
        rules_enumerated = len(deviation.enumerate_pure_rules(inst, args.max_rules))
        query = _query_echo(args, seq=args.seq)

    elif args.command == "identify":
        given = [x for x in (args.seq, args.marginal, args.joint) if x is not None]
        if len(given) != 1:
            raise UsageError("give exactly one of --seq / --marginal / --joint")
        lo, _, hi = args.sweep_range.partition(":")
        if not hi:
            raise UsageError("--range expects LO:HI")
        pinned = {}
        for item in args.param:
            name, _, value = item.partition("=")
            pinned[name] = value
        probe = instantiate(base, {**pinned, args.sweep: lo}) if base.has_params else base
        if args.seq is not None:
            observation = probe.sequence(args.seq)
            obs_echo = {"seq": args.seq}
        elif args.marginal is not None:
            observation = _parse_marginal(probe, args.marginal)
            obs_echo = {"marginal": observation.to_json_dict()}
        else:
            observation = _parse_joint(probe, args.joint)
            obs_echo = {"joint": observation.to_json_dict()}
        iset = analysis.identified_set(
            base, observation, args.sweep, lo, hi,
            tolerance=args.tol, grid_points=args.grid,
            fixed=pinned or None, max_rules=args.max_rules,
        )
        result = {"identified_set": iset.to_json_dict()}
        query = _query_echo(args, sweep=args.sweep, range=args.sweep_range,
                            tol=args.tol, grid=args.grid, **obs_echo)

    elif args.command == "enumerate-rules":
        rules = deviation.enumerate_pure_rules(inst, args.max_rules)
        rules_enumerated = len(rules)
        result = {"count": len(rules), "rules": [r.to_json_dict() for r in rules]}
        query = _query_echo(args)

    elif args.command == "simulate":
        with open(args.structure, "r", encoding="utf-8") as fh:
            structure = oracle.InformationStructure.from_json_dict(inst, json.load(fh))
        with open(args.strategy, "r", encoding="utf-8") as fh:
            strategy = oracle.Strategy.from_json_dict(inst, json.load(fh))
        empirical = oracle.simulate(inst, strategy, structure, args.n, args.seed)
        result = {"empirical": empirical.to_json_dict(), "n": args.n, "seed": args.seed}
        query = _query_echo(args, n=args.n, seed=args.seed,
                            structure=structure.to_json_dict(),
                            strategy=strategy.to_json_dict())

    else:  # pragma: no cover
        raise UsageError(f"unknown command {args.command!r}")

    return {
        "query": query,
        "problem": problem_to_dict(base),
        "result": result,
        "stats": {
            "lp_pivots": lp.pivot_tally() - pivots_before,
            "rules_enumerated": rules_enumerated,
        },
    }


# ---------------------------------------------------------------------------
# Witness re-verification
# ---------------------------------------------------------------------------

def _verify_report(doc: dict) -> tuple[bool, str]:
    problem = problem_from_dict(doc["problem"])
    query = doc["query"]
    params = {n: parse_rational(v) for n, v in query.get("params", {}).items()}
    inst = instantiate(problem, params) if problem.has_params else problem
    result = doc["result"]
    if "witness" not in result:
        return False, "report carries no witness"
    witness = result["witness"]
    kind = witness.get("kind")

    if kind == "deviation_rule":
        rule = deviation.DeviationRule.from_json_dict(inst, witness["kernel"])
        if query["command"] == "check-seq":
            ok = deviation.dominates_sequence(inst, rule, inst.sequence(query["seq"]))
        elif query["command"] == "check-joint":
            joint = JointDistribution.from_mapping(inst, query["dist"])
            ok = deviation.dominates_joint(inst, rule, joint)
        elif query["command"] == "check-marginal":
            marginal = MarginalDistribution.from_mapping(inst, query["dist"])
            ok = deviation.dominates_marginal(inst, rule, marginal)
        else:
            return False, f"no dominance check for command {query['command']!r}"
        return ok, "dominating rule re-checked" if ok else "rule does not dominate"

    if kind == "obedient_triple":
        triple = rationalize.ObedientTriple.from_json_dict(inst, witness)
        if not oracle.verify_obedient_optimality(inst, triple):
            return False, "obeying the recommendations is not optimal"
        induced = triple.induced_joint()
        if query["command"] == "check-seq":
            seq = inst.sequence(query["seq"])
            mass = sum(induced.matrix[inst.leaf_index[seq]], Fraction(0))
            if mass <= 0:
                return False, "witness puts zero probability on the sequence"
        elif query["command"] == "check-joint":
            if induced != JointDistribution.from_mapping(inst, query["dist"]):
                return False, "witness induces a different joint law"
        elif query["command"] == "check-marginal":
            want = MarginalDistribution.from_mapping(inst, query["dist"])
            if induced.action_marginal() != want:
                return False, "witness induces a different marginal"
        return True, "obedient triple re-checked"

    return False, f"unknown witness kind {kind!r}"


def run(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    started = time.perf_counter()
    try:
        args = parser.parse_args(argv)
        if args.command == "verify-witness":
            with open(args.report, "r", encoding="utf-8") as fh:
                doc = json.load(fh, parse_float=Fraction)
            ok, detail = _verify_report(doc)
            report = {
                "query": {"command": "verify-witness"},
                "problem": doc.get("problem"),
                "result": {"valid": ok, "detail": detail},
                "stats": {"lp_pivots": 0, "rules_enumerated": 0},
            }
        else:
            report = _run_query(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, ValidationError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except deviation.SizeGuardError as exc:
        print(f"size guard: {exc}", file=sys.stderr)
        return 3
    report["timing_ms"] = round((time.perf_counter() - started) * 1000.0, 3)
    _emit(report, getattr(args, "pretty", False))
    return 0


def main() -> None:  # console entry point
    sys.exit(run())

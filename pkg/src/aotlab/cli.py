"""Command-line front end.

Exit codes: 0 success, 1 validation or constraint failure (AoT violation,
count mismatch, bound exceeded, resource cap), 2 malformed input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from fractions import Fraction

import numpy as np

from . import bounds as bnd
from . import inequalities as ineqs
from . import quantum as qs
from . import symmetry as sym
from .core import (
    Scenario,
    check_aot,
    count_extreme_points,
    dumps_aott,
    iter_trees,
    loads_aott,
    loads_table,
    tree_to_correlations,
)
from .errors import DomainError, ParseError, ResourceLimitError, StructureError, UnsupportedScenarioError
from .mindim import Realization, minimal_dimension, synthesize_realization

EXIT_OK, EXIT_FAIL, EXIT_MALFORMED = 0, 1, 2


class Failure(Exception):
    """Validation failure carrying an already rendered result."""

    def __init__(self, text: str):
        super().__init__(text)
        self.text = text


def _num(v):
    if isinstance(v, Fraction):
        v = Fraction(int(v.numerator), int(v.denominator))
        return v.numerator if v.denominator == 1 else str(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(v)


def _dump(doc) -> str:
    return json.dumps(doc, sort_keys=True)


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def _threads(args) -> int:
    env = os.environ.get("AOTLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ParseError(f"AOTLAB_THREADS must be an integer, got {env!r}") from exc
    if args.threads is not None:
        return max(1, args.threads)
    return os.cpu_count() or 1


def _need_format(args, *allowed: str) -> str:
    fmt = args.format or allowed[0]
    if fmt not in allowed:
        raise ParseError(f"--format {fmt} is not available here (choose from {', '.join(allowed)})")
    return fmt


def _scenario(args) -> Scenario:
    return Scenario(args.O, args.S, args.L)


def _load_tree(path: str):
    return loads_aott(_read(path))


def _load_instruments(path: str):
    """Realization JSON (from ``realize``) or instrument JSON with complex entries."""
    text = _read(path)
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise ParseError(f"{path} is not JSON: {exc}") from exc
    if isinstance(doc, dict) and "transitions" in doc:
        real = Realization.from_json(text)
        rho, insts = qs.instruments_from_realization(real)
        return rho, insts, real.O, real.S
    rho, insts = qs.instruments_from_json(text)
    first = next(iter(insts.values()))
    return rho, insts, first.outcomes, len(insts)


# --------------------------------------------------------------------------
# subcommands


def cmd_enumerate(args) -> str:
    sc = _scenario(args)
    total = count_extreme_points(sc)
    stop = total if args.stop is None else min(args.stop, total)
    if stop - args.start > args.limit:
        raise ResourceLimitError(
            f"{stop - args.start} trees requested, above --limit {args.limit}; narrow --start/--stop"
        )
    trees = list(iter_trees(sc, args.start, stop))
    fmt = _need_format(args, "csv", "json", "aott")
    if fmt == "aott":
        return "\n".join(dumps_aott(t) for t in trees)
    if fmt == "json":
        return _dump({
            "scenario": {"O": sc.O, "S": sc.S, "L": sc.L},
            "total": str(total),
            "trees": [{"index": str(t.index), "tuples": [list(z) for z in t.tuples]} for t in trees],
        })
    return _csv(["index", "tuples"], [[t.index, str(t)] for t in trees])


def cmd_classify(args) -> str:
    sc = _scenario(args)
    fmt = _need_format(args, "json", "csv")
    doc = {"scenario": {"O": sc.O, "S": sc.S, "L": sc.L}, "mode": args.mode, "variant": args.variant}
    try:
        if args.mode == sym.ORE:
            doc["formula"] = str(sym.count_ore_classes(sc))
        else:
            rep = sym.count_re_classes(sc)
            doc["formula"] = str(rep.class_count)
            doc["breakdown"] = {k: str(v) for k, v in rep.breakdown.items()}
    except UnsupportedScenarioError as exc:
        if not args.brute_force:
            raise
        doc["formula"] = None
        doc["formula_note"] = str(exc)
    if args.brute_force:
        count = sym.brute_force_class_count(sc, args.mode, args.variant, args.cap, _threads(args))
        doc["brute_force"] = str(count)
        doc["match"] = doc["formula"] == str(count) if doc["formula"] is not None else None
    if fmt == "csv":
        text = _csv(
            ["O", "S", "L", "mode", "formula_count", "brute_force_count", "match"],
            [[sc.O, sc.S, sc.L, args.mode, doc["formula"] or "", doc.get("brute_force", ""),
              "" if doc.get("match") is None else str(doc["match"]).lower()]],
        )
    else:
        text = _dump(doc)
    if doc.get("match") is False:
        raise Failure(text)
    return text


def cmd_canonicalize(args) -> str:
    tree = _load_tree(args.tree)
    canon = sym.canonical_form(tree, args.mode, args.variant)
    fmt = _need_format(args, "aott", "json")
    if fmt == "json":
        return _dump({
            "mode": args.mode,
            "canonical": [list(t) for t in canon.tuples],
            "index": str(canon.index),
            "is_canonical": canon == tree,
        })
    return dumps_aott(canon)


def cmd_mindim(args) -> str:
    tree = _load_tree(args.tree)
    d, assignment = minimal_dimension(tree)
    _need_format(args, "json")
    return _dump({
        "dimension": d,
        "defining_nodes": [list(n) for n in assignment.defining_nodes],
        "state_of_node": [
            {"node": [l, k], "state": s} for (l, k), s in sorted(assignment.state_of_node.items())
        ],
    })


def cmd_realize(args) -> str:
    tree = _load_tree(args.tree)
    _need_format(args, "json")
    return synthesize_realization(tree).to_json()


def cmd_simulate(args) -> str:
    rho, insts, O, S = _load_instruments(args.realization)
    try:
        inputs = tuple(int(v) for v in args.inputs.replace(",", " ").split())
    except ValueError as exc:
        raise ParseError(f"--inputs must list integer settings, got {args.inputs!r}") from exc
    if not inputs or any(x not in insts for x in inputs):
        raise ParseError(f"--inputs must be settings in 1..{S}")
    sc = Scenario(O, S, len(inputs))
    rows = []
    for outs in sc.output_sequences():
        p = qs.sequence_probability(rho, insts, inputs, outs)
        if qs.is_exact(np.asarray(rho)):
            p = Fraction(p)
        rows.append((outs, p))
    fmt = _need_format(args, "json", "csv")
    if fmt == "csv":
        return _csv(["outputs", "p"], [[" ".join(map(str, o)), _num(p)] for o, p in rows])
    return _dump({
        "inputs": list(inputs),
        "distribution": [{"outputs": list(o), "p": _num(p)} for o, p in rows],
    })


def _load_table_arg(args):
    given = [a for a in ("table", "tree", "realization") if getattr(args, a, None)]
    if len(given) != 1:
        raise ParseError("give exactly one of --table, --tree or --realization")
    if args.table:
        return loads_table(_read(args.table))
    if args.tree:
        return tree_to_correlations(_load_tree(args.tree))
    rho, insts, O, S = _load_instruments(args.realization)
    if args.L is None:
        raise ParseError("--realization needs --L")
    return qs.correlation_table(rho, insts, Scenario(O, S, args.L))


def cmd_aot_check(args) -> str:
    table = _load_table_arg(args)
    report = check_aot(table, args.tolerance)
    _need_format(args, "json")
    text = _dump({
        "passed": report.passed,
        "violations": [
            {
                "kind": v.kind,
                "inputs": list(v.inputs),
                "outputs": list(v.outputs),
                "value": _num(v.value),
                "reference": _num(v.reference),
                "reference_inputs": list(v.reference_inputs) if v.reference_inputs else None,
            }
            for v in report.violations
        ],
    })
    if not report.passed:
        raise Failure(text)
    return text


def cmd_bounds(args) -> str:
    report = bnd.bound_report(args.O, args.S, args.L, improved=args.improved)
    if args.emit_witness:
        build = bnd.construct_witness_appc if args.improved else bnd.construct_witness_main
        with open(args.emit_witness, "w", encoding="utf-8") as fh:
            fh.write(dumps_aott(build(args.O, args.S, args.L)))
    _need_format(args, "json")
    return report.to_json()


def _load_blocks(path: str) -> list:
    try:
        doc = json.loads(_read(path))
        items = doc["blocks"] if isinstance(doc, dict) else doc
        blocks = []
        for item in items:
            bound = item.get("bound")
            bound = None if bound is None else float(bound)
            if "builtin" in item:
                ineq, tree = ineqs.builtin_b(int(item["builtin"]))
            else:
                tree = loads_aott(item["tree"])
                ineq = ineqs.from_extreme_point(tree)
            blocks.append(ineqs.Block(ineq, tree, bound))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed blocks file: {exc}") from exc
    return blocks


def cmd_compose(args) -> str:
    blocks = _load_blocks(args.blocks)
    sc = blocks[0].tree.scenario if blocks else None
    if args.plan:
        plan = ineqs.CompositionPlan.from_json(_read(args.plan))
    else:
        if sc is None:
            raise ParseError("no blocks given")
        plan = ineqs.CompositionPlan.uniform(sc.S, sc.L, args.periods)
    ineq, bound, tree = ineqs.compose(blocks, plan)
    _need_format(args, "json")
    return _dump({
        "inequality": json.loads(ineq.to_json()),
        "bound": bound,
        "algebraic_bound": _num(ineq.algebraic_bound),
        "tree": dumps_aott(tree),
    })


def cmd_evaluate(args) -> str:
    text = _read(args.ineq)
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise ParseError(f"{args.ineq} is not JSON: {exc}") from exc
    if isinstance(doc, dict) and "inequality" in doc:
        ineq = ineqs.TemporalInequality.from_json(json.dumps(doc["inequality"]))
        if doc.get("bound") is not None and args.dimension is not None:
            ineq.bounds.setdefault(args.dimension, float(doc["bound"]))
    else:
        ineq = ineqs.TemporalInequality.from_json(text)
    if args.L is None:
        args.L = ineq.scenario.L
    table = _load_table_arg(args)
    value = ineqs.evaluate(ineq, table)
    out = {"value": _num(value), "algebraic_bound": _num(ineq.algebraic_bound)}
    if args.dimension is not None:
        bound = ineq.bounds.get(args.dimension)
        out["dimension"] = args.dimension
        out["bound"] = bound
        if bound is not None:
            out["within_bound"] = float(value) <= bound + args.tolerance
            if not out["within_bound"]:
                raise Failure(_dump(out))
    _need_format(args, "json")
    return _dump(out)


def cmd_robustness(args) -> str:
    rng = np.random.default_rng(args.seed)
    rows, offending = [], None
    fmt = _need_format(args, "csv", "json")
    for trial in range(args.trials):
        d = args.dimension[trial % len(args.dimension)]
        length = args.length[(trial // len(args.dimension)) % len(args.length)]
        eps = args.eps[(trial // (len(args.dimension) * len(args.length))) % len(args.eps)]
        rho = qs.random_state(d, rng)
        nominal = qs.random_instrument_set(d, args.O, args.S, rng)
        drift = qs.random_instrument_set(d, args.O, args.S, rng)
        perturbed, cert = qs.perturb_convex(nominal, eps, drift)
        rep = qs.robustness_check(
            rho, nominal, perturbed, cert, Scenario(args.O, args.S, length),
            perturb_first_step=args.perturb_first_step,
        )
        rows.append([trial, d, length, eps, cert, rep.max_deviation, rep.max_ratio, len(rep.violations)])
        if rep.violations and offending is None:
            offending = {
                "trial": trial,
                "epsilon": eps,
                "length": length,
                "violation": rep.violations[0],
                "nominal": json.loads(qs.instruments_to_json(rho, nominal)),
                "perturbed": json.loads(qs.instruments_to_json(rho, perturbed)),
            }
    header = ["trial", "dimension", "length", "epsilon", "certified_eps", "max_deviation", "max_ratio", "violations"]
    if fmt == "csv":
        text = _csv(header, [[r[0], r[1], r[2], repr(r[3]), repr(r[4]), repr(r[5]), repr(r[6]), r[7]] for r in rows])
    else:
        text = _dump({
            "trials": len(rows),
            "violations": sum(r[7] for r in rows),
            "max_ratio": max((r[6] for r in rows), default=0.0),
            "rows": [dict(zip(header, r)) for r in rows],
            "offending": offending,
        })
    if offending is not None:
        if fmt == "csv":
            sys.stderr.write(_dump(offending) + "\n")
        raise Failure(text)
    return text


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (randomized commands)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: all cores; AOTLAB_THREADS overrides)")
    common.add_argument("--format", choices=["json", "csv", "aott"], default=None, help="output format")
    common.add_argument("--out", default=None, help="write the result here instead of standard output")

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--O", type=int, required=True, help="number of outcomes")
    scen.add_argument("--S", type=int, required=True, help="number of settings")
    scen.add_argument("--L", type=int, required=True, help="sequence length")

    group = argparse.ArgumentParser(add_help=False)
    group.add_argument("--mode", choices=[sym.ORE, sym.RE], default=sym.RE,
                       help="outcome relabelings only (ORE) or also setting relabelings (RE)")
    group.add_argument("--variant", choices=[sym.WREATH, sym.DIRECT], default=sym.WREATH,
                       help="per-setting outcome permutations (wreath) or one global permutation (direct)")

    table_src = argparse.ArgumentParser(add_help=False)
    table_src.add_argument("--table", help="correlation table JSON")
    table_src.add_argument("--tree", help="strategy tree (aott); its deterministic table is used")
    table_src.add_argument("--realization", help="realization or instrument JSON; simulated over --L steps")
    table_src.add_argument("--L", type=int, default=None, help="length for --realization")
    table_src.add_argument("--tolerance", type=float, default=1e-9, help="tolerance for floating tables")

    p = argparse.ArgumentParser(prog="aotlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("enumerate", parents=[common, scen], help="list extreme points by index")
    s.add_argument("--start", type=int, default=0)
    s.add_argument("--stop", type=int, default=None)
    s.add_argument("--limit", type=int, default=100000, help="refuse to list more trees than this")
    s.set_defaults(func=cmd_enumerate)

    s = sub.add_parser("classify", parents=[common, scen, group], help="count symmetry classes")
    s.add_argument("--brute-force", action="store_true", help="also count orbits by explicit group action")
    s.add_argument("--cap", type=int, default=sym.DEFAULT_CAP, help="largest polytope to brute-force")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("canonicalize", parents=[common, group], help="canonical representative of a tree")
    s.add_argument("--tree", required=True)
    s.set_defaults(func=cmd_canonicalize)

    s = sub.add_parser("mindim", parents=[common], help="minimal dimension of a tree")
    s.add_argument("--tree", required=True)
    s.set_defaults(func=cmd_mindim)

    s = sub.add_parser("realize", parents=[common], help="minimal realization of a tree as JSON")
    s.add_argument("--tree", required=True)
    s.set_defaults(func=cmd_realize)

    s = sub.add_parser("simulate", parents=[common], help="output distribution for one input sequence")
    s.add_argument("--realization", required=True, help="realization or instrument JSON")
    s.add_argument("--inputs", required=True, help='settings, e.g. "2 1"')
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("aot-check", parents=[common, table_src], help="check the no-signalling-from-the-future constraints")
    s.set_defaults(func=cmd_aot_check)

    s = sub.add_parser("bounds", parents=[common, scen], help="dimension lower bounds for worst-case extreme points")
    s.add_argument("--improved", action="store_true", help="include the improved construction")
    s.add_argument("--emit-witness", default=None, help="write the witness tree (aott) here")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("compose", parents=[common], help="compose block inequalities into a longer one")
    s.add_argument("--blocks", required=True, help='JSON: {"blocks": [{"builtin": 1, "bound": C} | {"tree": "<aott>", "bound": C}]}')
    s.add_argument("--plan", default=None, help="composition plan JSON (default: block 0 everywhere)")
    s.add_argument("--periods", type=int, default=2, help="periods when no plan is given")
    s.set_defaults(func=cmd_compose)

    s = sub.add_parser("evaluate", parents=[common, table_src], help="evaluate an inequality on a table")
    s.add_argument("--ineq", required=True, help="inequality JSON or compose output")
    s.add_argument("--dimension", type=int, default=None, help="check the bound stored for this dimension")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("robustness", parents=[common], help="random drift trials against the deviation bound")
    s.add_argument("--eps", type=float, nargs="+", default=[0.001, 0.01, 0.1])
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--length", type=int, nargs="+", default=[2, 3, 4])
    s.add_argument("--dimension", type=int, nargs="+", default=[2, 3])
    s.add_argument("--O", type=int, default=2)
    s.add_argument("--S", type=int, default=2)
    s.add_argument("--perturb-first-step", action="store_true",
                   help="drift every step and check the bound L*eps instead")
    s.set_defaults(func=cmd_robustness)
    return p


def _emit(args, text: str) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text = args.func(args)
    except Failure as exc:
        _emit(args, exc.text)
        return EXIT_FAIL
    except (ResourceLimitError, UnsupportedScenarioError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAIL
    except (ParseError, StructureError, DomainError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_MALFORMED
    _emit(args, text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

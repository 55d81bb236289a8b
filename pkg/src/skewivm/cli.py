"""Command-line entry points: analyze, run, bench.

Exit codes: 0 success, 1 query syntax error, 2 non-hierarchical query,
3 verification failure, 4 rejected delete.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench as bench_mod
from .datafiles import format_result_row, load_database, read_updates
from .engine import preprocess
from .errors import (
    EngineError,
    NotHierarchicalError,
    QuerySyntaxError,
    RejectedDeleteError,
)
from .oracle import brute_force_eval
from .query import (
    ConjunctiveQuery,
    delta_index,
    hierarchy_violation,
    is_free_connex,
    is_q_hierarchical,
    parse_query,
)
from .storage import Interner
from .vorder import canonical_vo, dynamic_width, free_top, kappa_measure, static_width, xi_measure

EXIT_OK = 0
EXIT_SYNTAX = 1
EXIT_NOT_HIERARCHICAL = 2
EXIT_VERIFY = 3
EXIT_REJECTED = 4


def _read_query(spec: str) -> ConjunctiveQuery:
    path = Path(spec)
    text = path.read_text() if path.exists() else spec
    return parse_query(text.strip())


def _vo_dot(vo, name: str) -> str:
    lines = [f'digraph "{name}" {{', "  node [shape=plaintext];"]
    counter = [0]

    def visit(node) -> str:
        nid = f"n{counter[0]}"
        counter[0] += 1
        label = node if isinstance(node, str) else str(node)
        lines.append(f'  {nid} [label="{label}"];')
        for kid in vo.kids(node):
            cid = visit(kid)
            lines.append(f"  {nid} -> {cid};")
        return nid

    for r in vo.roots:
        visit(r)
    lines.append("}")
    return "\n".join(lines)


def cmd_analyze(args) -> int:
    try:
        q = _read_query(args.query)
    except QuerySyntaxError as exc:
        print(json.dumps({"error": str(exc)}))
        return EXIT_SYNTAX
    pair = hierarchy_violation(q)
    if pair is not None:
        print(json.dumps({"hierarchical": False, "violating_pair": list(pair)}))
        return EXIT_NOT_HIERARCHICAL
    vo = canonical_vo(q)
    free = set(q.free)
    report = {
        "query": str(q),
        "hierarchical": True,
        "free_connex": is_free_connex(q),
        "q_hierarchical": is_q_hierarchical(q),
        "delta_index": delta_index(q),
        "static_width": static_width(q),
        "dynamic_width": dynamic_width(q),
        "xi_root": max(xi_measure(vo, r, free) for r in vo.roots),
        "kappa": kappa_measure(vo, free),
    }
    state = preprocess(q, {sym: {} for sym in q.symbols()}, args.epsilon, mode="dynamic")
    report["plan"] = state.plan_json()
    if args.dot:
        parts = [_vo_dot(vo, "canonical"), _vo_dot(free_top(vo), "free_top"), state.dot()]
        Path(args.dot).write_text("\n".join(parts) + "\n")
    print(json.dumps(report, indent=None if args.json else 2))
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        q = _read_query(args.query)
    except QuerySyntaxError as exc:
        print(f"syntax error: {exc}", file=sys.stderr)
        return EXIT_SYNTAX
    interner = Interner()
    try:
        db = load_database(q, args.data, interner)
    except EngineError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_SYNTAX
    mode = "dynamic" if args.updates else "static"
    try:
        state = preprocess(q, db, args.epsilon, mode=mode)
    except NotHierarchicalError as exc:
        print(f"not hierarchical: {exc}", file=sys.stderr)
        return EXIT_NOT_HIERARCHICAL

    def verify() -> bool:
        got = state.result_multiset()
        want = brute_force_eval(q, state.db_snapshot())
        return got == want

    applied = 0
    if args.updates:
        try:
            for symbol, row, mult in read_updates(args.updates, q, interner):
                state.on_update(symbol, row, mult)
                applied += 1
                if args.verify and args.checkpoint_every and applied % args.checkpoint_every == 0:
                    state.check_invariants()
                    if not verify():
                        print(f"verification failed after update {applied}", file=sys.stderr)
                        return EXIT_VERIFY
        except RejectedDeleteError as exc:
            print(f"rejected delete: {exc}", file=sys.stderr)
            return EXIT_REJECTED
    if args.verify:
        if mode == "dynamic":
            state.check_invariants()
        if not verify():
            print("verification failed on final state", file=sys.stderr)
            return EXIT_VERIFY
    if args.dot:
        Path(args.dot).write_text(state.dot() + "\n")
    if args.enumerate:
        rows = ((row, m) for row, m in state.enumerate_result())
        if args.sorted:
            buffered = [(tuple(interner.lookup(v) for v in row), m) for row, m in rows]
            for row, m in sorted(buffered):
                print(",".join(list(row) + [str(m)]))
        else:
            for row, m in rows:
                print(format_result_row(row, m, interner))
    else:
        summary = {
            "n": state.N,
            "m": state.M,
            "epsilon": state.epsilon,
            "mode": mode,
            "updates_applied": applied,
            "distinct_results": len(state.result_multiset()),
            "majors": state.counters.major_rebalances,
            "minors": state.counters.minor_rebalances,
        }
        print(json.dumps(summary, indent=None if args.json else 2))
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        q = _read_query(args.query)
    except QuerySyntaxError as exc:
        print(f"syntax error: {exc}", file=sys.stderr)
        return EXIT_SYNTAX
    pair = hierarchy_violation(q)
    if pair is not None:
        print(f"not hierarchical: {pair}", file=sys.stderr)
        return EXIT_NOT_HIERARCHICAL
    sizes = [int(s) for s in args.bench_sizes.split(",")]
    epsilons = [float(e) for e in args.epsilon_grid.split(",")]
    print("n,epsilon,max_per_update_ops,amortized_ops,max_delay_ops,majors,minors")
    for row in bench_mod.run_ladder(q, sizes, epsilons, args.seed):
        print(row.as_csv())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skewivm",
        description="Skew-aware incremental view maintenance for hierarchical queries")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="classify a query and report width measures")
    p.add_argument("--query", required=True, help="query text or path to a query file")
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--dot", metavar="OUT", help="write DOT of variable orders and view trees")
    p.add_argument("--json", action="store_true", help="compact single-line JSON")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("run", help="load data, replay updates, enumerate")
    p.add_argument("--query", required=True)
    p.add_argument("--data", required=True, help="directory of relation CSV files")
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--updates", help="update stream file (enables dynamic mode)")
    p.add_argument("--verify", action="store_true",
                   help="compare against the brute-force oracle at checkpoints")
    p.add_argument("--checkpoint-every", type=int, default=25)
    p.add_argument("--enumerate", action="store_true",
                   help="stream results as CSV v1,...,vk,multiplicity")
    p.add_argument("--sorted", action="store_true",
                   help="buffer and sort the enumeration lexicographically")
    p.add_argument("--dot", metavar="OUT")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="counter-based scaling measurements")
    p.add_argument("--query", required=True)
    p.add_argument("--bench-sizes", default="1024,4096,16384")
    p.add_argument("--epsilon-grid", dest="epsilon_grid", default="0.5")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Three subcommands:

* ``prepare``: read a PSPLIB .sm file, draw cash flows from the given seed,
  derive the deadline window and weekly discount rate, and write the JSON
  sidecar next to the input (or to --out). Idempotent for a fixed seed.
* ``solve``: run one algorithm (ms-pacs, pacs, acs, or bnb-exact) on a
  prepared instance and emit a single JSON result line plus optional CSV
  trace and LP export. Every emitted schedule is re-checked for feasibility;
  an infeasible schedule aborts with exit code 2 and a violation dump, which
  should never happen and indicates a bug.
* ``report``: aggregate result files into a long-format summary CSV with
  best/mean/std npv per instance and mode, pairwise win counts, percentage
  gaps against a bounds file when given, and aggregates grouped by task
  count and by rf/rs/nc attributes when records carry them.

Exit codes: 0 success, 1 input or runtime error, 2 infeasible output
(bug sentinel) or bad usage (argparse default).

All randomness flows from --seed; NPVMERGE_THREADS caps worker processes.
"""

from __future__ import annotations

import argparse
import csv
import glob as globmod
import json
import os
import statistics
import sys
import time

from npvmerge.acs import AcsParams, run_colony
from npvmerge.bnb import solve_restricted
from npvmerge.merge import (
    MsParams,
    build_restricted,
    export_lp,
    full_split,
    ms_pacs,
)
from npvmerge.model import (
    InstanceError,
    PsplibParseError,
    compute_deadline_and_discount,
    generate_cashflows,
    instance_from_dict,
    parse_psplib,
    save_instance,
    topological_order,
)
from npvmerge.paco import run_paco
from npvmerge.schedule import check_feasible, decode, npv
from npvmerge.seeding import generator_from, master_sequence

_MODES = ("ms-pacs", "pacs", "acs", "bnb-exact")
_ATTR_KEYS = ("rf", "rs", "nc")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="npvmerge",
        description="Max-npv project scheduling: merge search over ant colonies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    prep = sub.add_parser("prepare", help="turn a PSPLIB .sm file into a sidecar")
    prep.add_argument("--instance", required=True, help="PSPLIB .sm file")
    prep.add_argument("--seed", required=True, type=int, help="cash flow seed")
    prep.add_argument("--out", help="sidecar path (default: <stem>_seed<seed>.json)")

    solve = sub.add_parser("solve", help="run one algorithm on one instance")
    solve.add_argument("--mode", required=True, choices=_MODES)
    solve.add_argument(
        "--instance",
        required=True,
        help="prepared sidecar (.json) or raw PSPLIB .sm (prepared in-memory)",
    )
    solve.add_argument("--seed", required=True, type=int)
    solve.add_argument("--colonies", type=int, default=5, help="colony count n_s")
    solve.add_argument("--t-total", type=float, default=900.0, help="wall budget (s)")
    solve.add_argument(
        "--t-iter", type=float, default=60.0, help="exact-solve budget per iteration (s)"
    )
    solve.add_argument("--split-k", type=int, default=500, help="split budget K")
    solve.add_argument("--ants", type=int, default=10)
    solve.add_argument("--q0", type=float, default=0.9)
    solve.add_argument("--acs-iters", type=int, default=2000)
    solve.add_argument(
        "--ms-iters", type=int, default=None, help="cap on merge-search iterations"
    )
    solve.add_argument(
        "--sync-interval", type=int, default=50, help="pacs cooperation interval"
    )
    solve.add_argument("--out", help="write the result JSON line here (else stdout)")
    solve.add_argument("--trace", help="write a CSV trace here")
    solve.add_argument("--export-lp", help="write the restricted model in LP format")

    rep = sub.add_parser("report", help="summarize result files into a CSV")
    rep.add_argument(
        "--results", required=True, nargs="+", help="result files or globs"
    )
    rep.add_argument("--bounds", help="JSON file mapping instance name to upper bound")
    rep.add_argument("--out", help="summary CSV path (else stdout)")
    return parser


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------


def cmd_prepare(args: argparse.Namespace) -> int:
    instance = parse_psplib(args.instance)
    instance = generate_cashflows(instance, args.seed)
    instance = compute_deadline_and_discount(instance)
    out = args.out
    if out is None:
        stem, _ = os.path.splitext(args.instance)
        out = f"{stem}_seed{args.seed}.json"
    save_instance(instance, out)
    print(out)
    return 0


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _load_solver_instance(path: str, seed: int):
    """Sidecar JSON as-is; raw .sm prepared in-memory with the solve seed."""
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
        instance = instance_from_dict(raw)
        attrs = {key: raw[key] for key in _ATTR_KEYS if key in raw}
        return instance, attrs
    instance = parse_psplib(path)
    instance = generate_cashflows(instance, seed)
    instance = compute_deadline_and_discount(instance)
    return instance, {}


def _write_trace(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_solve(args: argparse.Namespace) -> int:
    if args.colonies < 1:
        raise InstanceError("--colonies must be >= 1")
    if args.split_k < 1:
        raise InstanceError("--split-k must be >= 1")
    if args.mode == "ms-pacs" and args.t_iter > args.t_total:
        raise InstanceError("--t-iter cannot exceed --t-total")
    if args.export_lp and args.mode not in ("ms-pacs", "bnb-exact"):
        raise InstanceError("--export-lp needs a mode that builds a restricted model")

    instance, attrs = _load_solver_instance(args.instance, args.seed)
    started = time.monotonic()
    deadline = started + args.t_total
    acs_params = AcsParams(n_ants=args.ants, q0=args.q0, max_iterations=args.acs_iters)
    extra: dict = {}
    trace_header: list[str] = []
    trace_rows: list[list] = []

    if args.mode == "acs":
        result = run_colony(
            instance,
            acs_params,
            generator_from(master_sequence(args.seed)),
            iterations=args.acs_iters,
            deadline=deadline,
            collect_trace=bool(args.trace),
        )
        schedule, value = result.schedule, result.value
        extra["iterations"] = result.iterations
        trace_header = ["iteration", "best_npv", "convergence_factor"]
        trace_rows = [[i, f"{v:.6f}", f"{cf:.6f}"] for i, v, cf in result.trace]
    elif args.mode == "pacs":
        pool = run_paco(
            instance,
            args.colonies,
            acs_params,
            seed=args.seed,
            mode="standalone",
            iterations=args.acs_iters,
            deadline=deadline,
            sync_interval=args.sync_interval,
        )
        schedule, value = pool.global_best, pool.global_best_value
        extra["iterations"] = max(pool.iterations)
        trace_header = ["colony", "best_npv", "iterations"]
        trace_rows = [
            [c, f"{v:.6f}", it]
            for c, (v, it) in enumerate(zip(pool.values, pool.iterations))
        ]
    elif args.mode == "ms-pacs":
        params = MsParams(
            n_colonies=args.colonies,
            t_total=args.t_total,
            t_iter=args.t_iter,
            split_k=args.split_k,
            acs_iterations=args.acs_iters,
            max_iterations=args.ms_iters,
        )
        result = ms_pacs(instance, params, args.seed, acs_params=acs_params)
        schedule, value = result.schedule, result.value
        extra["iterations"] = result.iterations
        trace_header = [
            "iteration",
            "pool_best",
            "groups_pre",
            "groups_post",
            "solver_status",
            "incumbent_npv",
            "wall_secs",
        ]
        trace_rows = [
            [
                row.iteration,
                f"{row.pool_best:.6f}",
                row.groups_pre,
                row.groups_post,
                row.solver_status,
                f"{row.incumbent_npv:.6f}",
                f"{row.wall_secs:.3f}",
            ]
            for row in result.trace
        ]
        if args.export_lp and result.last_model is not None:
            export_lp(result.last_model, args.export_lp)
    else:  # bnb-exact
        incumbent = decode(topological_order(instance), instance)
        model = build_restricted(full_split(instance), instance, incumbent)
        result = solve_restricted(model, t_iter=args.t_total)
        schedule, value = result.schedule, result.value
        extra["optimal"] = result.optimal
        extra["nodes"] = result.nodes
        trace_header = ["nodes", "best_npv", "optimal"]
        trace_rows = [[result.nodes, f"{result.value:.6f}", result.optimal]]
        if args.export_lp:
            export_lp(model, args.export_lp)

    report = check_feasible(schedule, instance)
    if not report.ok:
        print(
            f"BUG: {args.mode} emitted an infeasible schedule on {instance.name}:",
            file=sys.stderr,
        )
        for violation in report.violations[:20]:
            print(f"  {violation.kind}: {violation.detail}", file=sys.stderr)
        return 2

    record = {
        "instance": instance.name,
        "mode": args.mode,
        "seed": args.seed,
        "n": instance.n,
        "npv": value,
        "feasible": True,
        "wall_secs": round(time.monotonic() - started, 3),
        "starts": list(schedule.starts),
    }
    record.update(extra)
    if attrs:
        record["attrs"] = attrs
    line = json.dumps(record, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(line + "\n")
    else:
        print(line)
    if args.trace:
        _write_trace(args.trace, trace_header, trace_rows)
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _load_records(patterns: list[str]) -> list[dict]:
    paths: list[str] = []
    for pattern in patterns:
        hits = sorted(globmod.glob(pattern))
        if not hits and os.path.exists(pattern):
            hits = [pattern]
        if not hits:
            raise FileNotFoundError(f"no result files match {pattern!r}")
        paths.extend(hits)
    records = []
    for path in paths:
        with open(path, "r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: not a JSON record") from exc
    if not records:
        raise ValueError("result files contain no records")
    return records


def gap_percent(upper: float, lower: float) -> float:
    """Percentage gap of a solution value against an upper bound."""
    return (upper - lower) / upper * 100.0


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def build_report(records: list[dict], bounds: dict | None) -> list[list[str]]:
    """Long-format summary rows: section, instance, group, mode, metric, value."""
    by_key: dict[tuple[str, str], list[dict]] = {}
    for rec in records:
        by_key.setdefault((rec["instance"], rec["mode"]), []).append(rec)

    rows: list[list[str]] = []
    best: dict[tuple[str, str], float] = {}
    gaps: dict[tuple[str, str], float] = {}
    for (inst, mode), recs in sorted(by_key.items()):
        npvs = [r["npv"] for r in recs]
        best_v = max(npvs)
        best[(inst, mode)] = best_v
        entries = [
            ("runs", len(npvs)),
            ("best_npv", best_v),
            ("mean_npv", statistics.fmean(npvs)),
            ("std_npv", statistics.pstdev(npvs)),
        ]
        if bounds and inst in bounds:
            gaps[(inst, mode)] = gap_percent(float(bounds[inst]), best_v)
            entries.append(("gap_pct", gaps[(inst, mode)]))
        for metric, value in entries:
            rows.append(["per_instance", inst, "", mode, metric, _fmt(value)])

    modes = sorted({mode for _, mode in by_key})
    instances = sorted({inst for inst, _ in by_key})
    for a in modes:
        for b in modes:
            if a >= b:
                continue
            shared = [
                i for i in instances if (i, a) in best and (i, b) in best
            ]
            wins_a = sum(1 for i in shared if best[(i, a)] > best[(i, b)])
            wins_b = sum(1 for i in shared if best[(i, b)] > best[(i, a)])
            rows.append(["wins", "", "", f"{a}>{b}", "instances", str(wins_a)])
            rows.append(["wins", "", "", f"{b}>{a}", "instances", str(wins_b)])

    n_of: dict[str, int] = {}
    attrs_of: dict[str, dict] = {}
    for rec in records:
        n_of.setdefault(rec["instance"], rec.get("n", 0))
        if "attrs" in rec:
            attrs_of.setdefault(rec["instance"], rec["attrs"])

    def aggregate(section: str, group_of_inst) -> None:
        cells: dict[tuple[str, str], list[float]] = {}
        gap_cells: dict[tuple[str, str], list[float]] = {}
        for (inst, mode), value in best.items():
            group = group_of_inst(inst)
            if group is None:
                continue
            cells.setdefault((group, mode), []).append(value)
            if (inst, mode) in gaps:
                gap_cells.setdefault((group, mode), []).append(gaps[(inst, mode)])
        for (group, mode), values in sorted(cells.items()):
            rows.append(
                [section, "", group, mode, "mean_best_npv", _fmt(statistics.fmean(values))]
            )
            rows.append(
                [section, "", group, mode, "std_best_npv", _fmt(statistics.pstdev(values))]
            )
            gvals = gap_cells.get((group, mode))
            if gvals:
                rows.append(
                    [section, "", group, mode, "mean_gap_pct", _fmt(statistics.fmean(gvals))]
                )
                rows.append(
                    [section, "", group, mode, "std_gap_pct", _fmt(statistics.pstdev(gvals))]
                )

    aggregate("by_n", lambda inst: f"n={n_of.get(inst, 0)}")
    for key in _ATTR_KEYS:
        def group_fn(inst, key=key):
            attrs = attrs_of.get(inst)
            if attrs is None or key not in attrs:
                return None
            return f"{key}={attrs[key]}"

        aggregate(f"by_{key}", group_fn)
    return rows


def cmd_report(args: argparse.Namespace) -> int:
    records = _load_records(args.results)
    bounds = None
    if args.bounds:
        with open(args.bounds, "r", encoding="utf-8") as handle:
            bounds = json.load(handle)
    rows = build_report(records, bounds)
    header = ["section", "instance", "group", "mode", "metric", "value"]
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows(rows)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "prepare":
            return cmd_prepare(args)
        if args.command == "solve":
            return cmd_solve(args)
        return cmd_report(args)
    except (PsplibParseError, InstanceError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

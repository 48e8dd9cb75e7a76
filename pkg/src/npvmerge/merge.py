"""Merge search over pooled solutions.

Each feasible schedule encodes to an n x deadline 0/1 matrix (columns are the
time points 1..deadline). Cells of that matrix that carry the same value in
every pooled solution are merged into one group; a restricted model over one
binary per group is then solved exactly. Because any pooled solution is
constant on every group, the pool stays feasible for the restricted model, so
re-optimization can only improve on it.

Fully merged groups are usually too coarse, so :func:`random_split` refines
each group by drawing time thresholds among the group's distinct time points
(cells on the same side of every threshold stay together). When the split
budget K exceeds a group's distinct-time count, leftover budget separates
cells that share a time point, task by task; with K at least the group size
every cell stands alone and the restricted model is the original model.

The outer loop (:func:`ms_pacs`) alternates colony rounds and merge steps:
pool the per-colony bests plus the best-so-far, partition, split, rebuild the
restricted model warm-started with the pool best, and let the embedded
branch-and-bound improve it within its per-iteration time slice.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from npvmerge.acs import AcsParams
from npvmerge.model import Instance
from npvmerge.paco import run_paco
from npvmerge.schedule import (
    Schedule,
    check_feasible,
    discount_table,
    encode_binary,
    npv,
)
from npvmerge.seeding import generator_from

Cell = tuple[int, int]  # (task, column); column c is time point c+1


@dataclass(frozen=True)
class SolutionPool:
    """Feasible schedules plus their stacked binary encodings (S, n, deadline)."""

    schedules: tuple[Schedule, ...]
    encodings: np.ndarray

    @staticmethod
    def from_schedules(schedules, instance: Instance) -> "SolutionPool":
        schedules = tuple(schedules)
        if not schedules:
            raise ValueError("solution pool is empty")
        for idx, sched in enumerate(schedules):
            report = check_feasible(sched, instance)
            if not report.ok:
                raise ValueError(
                    f"pool schedule {idx} is infeasible: {report.violations[:3]}"
                )
        stack = np.stack([encode_binary(s, instance) for s in schedules])
        return SolutionPool(schedules=schedules, encodings=stack)


@dataclass(frozen=True)
class Partition:
    """Disjoint cover of all (task, column) cells, canonically ordered.

    Groups are sorted by their lexicographically smallest cell and each
    group's cells are sorted (task-major); group_of[i, c] is the group id.
    """

    n: int
    horizon: int
    groups: tuple[tuple[Cell, ...], ...]
    group_of: np.ndarray


def _partition_from_groups(n: int, horizon: int, groups) -> Partition:
    canon = [tuple(sorted(g)) for g in groups if g]
    canon.sort(key=lambda cells: cells[0])
    group_of = np.full((n, horizon), -1, dtype=np.int64)
    for gid, cells in enumerate(canon):
        for i, c in cells:
            if group_of[i, c] != -1:
                raise ValueError(f"cell {(i, c)} assigned to two groups")
            group_of[i, c] = gid
    if (group_of < 0).any():
        raise ValueError("partition does not cover every cell")
    return Partition(n=n, horizon=horizon, groups=tuple(canon), group_of=group_of)


def partition(pool: SolutionPool) -> Partition:
    """Group cells by their value vector across the pool."""
    s, n, horizon = pool.encodings.shape
    vectors = pool.encodings.reshape(s, n * horizon).T
    _, inverse = np.unique(vectors, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    buckets: dict[int, list[Cell]] = {}
    for flat, label in enumerate(inverse):
        buckets.setdefault(int(label), []).append(divmod(flat, horizon))
    return _partition_from_groups(n, horizon, buckets.values())


def full_split(instance: Instance) -> Partition:
    """Every cell its own group: the restricted model equals the original one."""
    n, horizon = instance.n, instance.deadline
    if horizon <= 0:
        raise ValueError("instance deadline is unset")
    groups = [((i, c),) for i in range(n) for c in range(horizon)]
    return _partition_from_groups(n, horizon, groups)


def _sample_distinct(values: list[int], count: int, rng: np.random.Generator) -> list[int]:
    """Partial Fisher-Yates draw of ``count`` values, pinned to rng.integers."""
    arr = list(values)
    for i in range(count):
        j = i + int(rng.integers(0, len(arr) - i))
        arr[i], arr[j] = arr[j], arr[i]
    return arr[:count]


def random_split(part: Partition, k: int, rng: np.random.Generator) -> Partition:
    """Refine each group into at most k sub-groups by random time thresholds.

    Thresholds are drawn without replacement from the group's distinct
    columns; a cell goes to the bin of the smallest threshold at or above its
    column. When k-1 covers every distinct column the group decomposes into
    its time classes, and any remaining budget (up to k sub-groups total)
    then peels single cells off multi-cell time classes in task order; with
    k >= group size the group fully atomizes. k=1 returns the partition
    unchanged.
    """
    if k < 1:
        raise ValueError("split budget k must be >= 1")
    if k == 1:
        return part
    new_groups: list[list[Cell]] = []
    for cells in part.groups:
        if len(cells) < 2:
            new_groups.append(list(cells))
            continue
        columns = sorted({c for _, c in cells})
        if k - 1 < len(columns):
            thresholds = sorted(_sample_distinct(columns, k - 1, rng))
            bins: dict[int, list[Cell]] = {}
            for cell in cells:
                lo, hi = 0, len(thresholds)
                while lo < hi:
                    mid = (lo + hi) // 2
                    if thresholds[mid] >= cell[1]:
                        hi = mid
                    else:
                        lo = mid + 1
                bins.setdefault(lo, []).append(cell)
            for b in sorted(bins):
                new_groups.append(bins[b])
        else:
            # thresholds cover every column: time classes, then peel ties
            classes: dict[int, list[Cell]] = {}
            for cell in sorted(cells, key=lambda ic: (ic[1], ic[0])):
                classes.setdefault(cell[1], []).append(cell)
            pieces = [classes[c] for c in sorted(classes)]
            budget = k - len(pieces)
            out: list[list[Cell]] = []
            for piece in pieces:
                while budget > 0 and len(piece) > 1:
                    out.append([piece[0]])
                    piece = piece[1:]
                    budget -= 1
                out.append(piece)
            new_groups.extend(out)
    return _partition_from_groups(part.n, part.horizon, new_groups)


# ---------------------------------------------------------------------------
# Restricted model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RestrictedModel:
    """Binary program over one variable per partition group.

    Constraint families (all lifted from the time-indexed task model and
    deduplicated after aggregation):

    * ``monotonicity``/``precedence_pairs``: pairs (a, b) meaning y_a <= y_b,
    * ``fixed_one``: groups containing a deadline-column cell,
    * ``fixed_zero``: groups containing a cell before a task's release (or
      unreachable under a predecessor's duration),
    * ``resource_rows``: integer rows sum(coef_g * y_g) <= rhs, one per
      (resource, period) after constant folding, duplicates removed.
    """

    n_groups: int
    objective: np.ndarray
    monotonicity: tuple[tuple[int, int], ...]
    precedence_pairs: tuple[tuple[int, int], ...]
    fixed_one: tuple[int, ...]
    fixed_zero: tuple[int, ...]
    resource_rows: tuple[tuple[tuple[tuple[int, int], ...], int], ...]
    partition: Partition
    instance: Instance
    incumbent: Schedule
    warm_start: np.ndarray


def group_assignment(
    schedule: Schedule, part: Partition, instance: Instance
) -> np.ndarray:
    """The schedule's 0/1 value per group; raises unless it is group-constant.

    Any schedule from the pool a partition was built on is group-constant by
    construction; anything else usually is not.
    """
    labels = part.group_of
    g_count = len(part.groups)
    x = encode_binary(schedule, instance)
    ones = np.zeros(g_count, dtype=np.int64)
    np.add.at(ones, labels.ravel(), x.ravel().astype(np.int64))
    sizes = np.bincount(labels.ravel(), minlength=g_count)
    mixed = (ones != 0) & (ones != sizes)
    if mixed.any():
        raise ValueError(
            f"schedule is not constant on groups {np.flatnonzero(mixed)[:5].tolist()}"
        )
    return (ones == sizes).astype(np.uint8)


def build_restricted(
    part: Partition, instance: Instance, incumbent: Schedule
) -> RestrictedModel:
    """Aggregate the time-indexed model over the partition's groups.

    The incumbent must take one value per group (always true when it comes
    from the pool the partition was built on); its group assignment becomes
    the warm start.
    """
    n, horizon = part.n, part.horizon
    if (n, horizon) != (instance.n, instance.deadline):
        raise ValueError("partition shape does not match the instance")
    labels = part.group_of
    g_count = len(part.groups)
    durations = instance.durations()
    cash = np.array(instance.cashflows(), dtype=np.float64)
    w = discount_table(instance)

    # objective: telescoped per-cell weights, summed per group
    cellw = np.empty((n, horizon), dtype=np.float64)
    if horizon > 1:
        cellw[:, : horizon - 1] = np.outer(cash, w[1:horizon] - w[2 : horizon + 1])
    cellw[:, horizon - 1] = cash * w[horizon]
    objective = np.zeros(g_count, dtype=np.float64)
    np.add.at(objective, labels.ravel(), cellw.ravel())

    mono: set[tuple[int, int]] = set()
    for i in range(n):
        row = labels[i]
        for c in range(1, horizon):
            a, b = int(row[c - 1]), int(row[c])
            if a != b:
                mono.add((a, b))

    fixed_one = {int(g) for g in labels[:, horizon - 1]}
    fixed_zero: set[int] = set()
    for i in range(n):
        for c in range(min(durations[i] - 1, horizon)):
            fixed_zero.add(int(labels[i, c]))

    prec: set[tuple[int, int]] = set()
    for p, j in instance.precedence:
        dj = durations[j]
        for t in range(1, horizon + 1):
            if t - dj < 1:
                fixed_zero.add(int(labels[j, t - 1]))
            else:
                a, b = int(labels[j, t - 1]), int(labels[p, t - dj - 1])
                if a != b:
                    prec.add((a, b))

    conflict = fixed_one & fixed_zero
    if conflict:
        raise ValueError(f"groups {sorted(conflict)} are forced both to 0 and 1")

    rows: list[tuple[tuple[tuple[int, int], ...], int]] = []
    seen_rows: set = set()
    limits = instance.limits
    demands = [t.demand for t in instance.tasks]
    for m in range(instance.k):
        for p in range(horizon):  # period p covers [p, p+1)
            coefs: dict[int, int] = {}
            rhs = int(limits[m])
            for i in range(n):
                r = demands[i][m]
                if r == 0:
                    continue
                q_plus = p + durations[i]  # time point of the completion test
                if q_plus > horizon:
                    rhs -= r  # task certainly done by then: constant 1
                else:
                    g = int(labels[i, q_plus - 1])
                    coefs[g] = coefs.get(g, 0) + r
                if p >= 1:
                    g = int(labels[i, p - 1])
                    coefs[g] = coefs.get(g, 0) - r
            terms = tuple(sorted((g, c) for g, c in coefs.items() if c != 0))
            if not terms:
                if rhs < 0:
                    raise ValueError(
                        f"resource {m} is overcommitted at period {p} regardless "
                        "of the schedule"
                    )
                continue
            key = (terms, rhs)
            if key not in seen_rows:
                seen_rows.add(key)
                rows.append(key)

    warm = group_assignment(incumbent, part, instance)

    return RestrictedModel(
        n_groups=g_count,
        objective=objective,
        monotonicity=tuple(sorted(mono)),
        precedence_pairs=tuple(sorted(prec)),
        fixed_one=tuple(sorted(fixed_one)),
        fixed_zero=tuple(sorted(fixed_zero)),
        resource_rows=tuple(rows),
        partition=part,
        instance=instance,
        incumbent=incumbent,
        warm_start=warm,
    )


def check_assignment(model: RestrictedModel, y: np.ndarray) -> bool:
    """Does ``y`` (0/1 per group) satisfy every restricted constraint?"""
    for g in model.fixed_one:
        if y[g] != 1:
            return False
    for g in model.fixed_zero:
        if y[g] != 0:
            return False
    for a, b in model.monotonicity:
        if y[a] > y[b]:
            return False
    for a, b in model.precedence_pairs:
        if y[a] > y[b]:
            return False
    for terms, rhs in model.resource_rows:
        total = sum(coef * int(y[g]) for g, coef in terms)
        if total > rhs:
            return False
    return True


def assignment_value(model: RestrictedModel, y: np.ndarray) -> float:
    return float(np.sum(model.objective * y))


def schedule_from_assignment(model: RestrictedModel, y: np.ndarray) -> Schedule:
    """Expand group values to the x matrix and read completion times off it."""
    x = y[model.partition.group_of]
    first_one = np.argmax(x, axis=1)  # columns are 1 from the completion on
    completions = first_one + 1
    durations = np.array(model.instance.durations(), dtype=np.int64)
    return Schedule(starts=tuple(int(c - d) for c, d in zip(completions, durations)))


# ---------------------------------------------------------------------------
# LP export
# ---------------------------------------------------------------------------


def _lp_terms(pairs: list[tuple[float, str]]) -> str:
    chunks: list[str] = []
    for coef, name in pairs:
        if not chunks:
            lead = "-" if coef < 0 else ""
            chunks.append(f"{lead}{_lp_num(abs(coef))} {name}")
        else:
            sign = "-" if coef < 0 else "+"
            chunks.append(f"{sign} {_lp_num(abs(coef))} {name}")
    return " ".join(chunks)


def _lp_num(x: float) -> str:
    if float(x) == int(x):
        return str(int(x))
    return format(float(x), ".17g")


def export_lp(model: RestrictedModel, path: str | None = None) -> str:
    """The restricted model in LP format with stable names y_g<id>.

    Returns the text and, when ``path`` is given, also writes it there.
    Output is byte-identical for identical models: groups, constraint
    families, and rows are already canonically ordered.
    """
    lines: list[str] = ["Maximize"]
    obj_pairs = [
        (float(model.objective[g]), f"y_g{g}")
        for g in range(model.n_groups)
        if model.objective[g] != 0.0
    ]
    if not obj_pairs:
        obj_pairs = [(0.0, "y_g0")]
    lines.append(" obj: " + _lp_terms(obj_pairs))
    lines.append("Subject To")
    idx = 0
    for a, b in model.monotonicity:
        lines.append(f" mono{idx}: y_g{b} - y_g{a} >= 0")
        idx += 1
    idx = 0
    for a, b in model.precedence_pairs:
        lines.append(f" prec{idx}: y_g{b} - y_g{a} >= 0")
        idx += 1
    idx = 0
    for g in model.fixed_one:
        lines.append(f" done{idx}: y_g{g} = 1")
        idx += 1
    idx = 0
    for g in model.fixed_zero:
        lines.append(f" rel{idx}: y_g{g} = 0")
        idx += 1
    idx = 0
    for terms, rhs in model.resource_rows:
        body = _lp_terms([(float(c), f"y_g{g}") for g, c in terms])
        lines.append(f" res{idx}: {body} <= {rhs}")
        idx += 1
    lines.append("Binaries")
    names = [f"y_g{g}" for g in range(model.n_groups)]
    for start in range(0, len(names), 12):
        lines.append(" " + " ".join(names[start : start + 12]))
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
    return text


# ---------------------------------------------------------------------------
# Outer loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MsParams:
    """Knobs for the merge-search outer loop.

    t_total is the wall-clock budget for the whole run; t_iter caps each
    exact re-optimization. acs_iterations is the per-colony budget of each
    pooled round. max_iterations, when set, bounds the number of outer
    iterations (useful for reproducible runs).
    """

    n_colonies: int = 5
    t_total: float = 900.0
    t_iter: float = 60.0
    split_k: int = 500
    acs_iterations: int = 2000
    max_iterations: int | None = None


@dataclass(frozen=True)
class MsTraceRow:
    iteration: int
    pool_best: float
    groups_pre: int
    groups_post: int
    solver_status: str
    incumbent_npv: float
    wall_secs: float


@dataclass(frozen=True)
class MsResult:
    schedule: Schedule
    value: float
    iterations: int
    wall_secs: float
    trace: tuple[MsTraceRow, ...]
    last_model: RestrictedModel | None = field(compare=False, default=None)


def ms_pacs(
    instance: Instance,
    params: MsParams,
    seed: int | np.random.SeedSequence,
    acs_params: AcsParams | None = None,
) -> MsResult:
    """Alternate pooled colony rounds with exact merge re-optimization.

    The best-so-far schedule is monotone non-decreasing in npv: it is carried
    into the next pool, the restricted model is warm-started with the best
    pool member, and a worse solver answer is never adopted.
    """
    from npvmerge.bnb import solve_restricted  # local import to avoid a cycle

    if params.n_colonies < 1:
        raise ValueError("n_colonies must be >= 1")
    if params.t_iter > params.t_total:
        raise ValueError("t_iter cannot exceed t_total")
    if acs_params is None:
        acs_params = AcsParams()
    started = time.monotonic()
    deadline = started + params.t_total
    master = (
        seed if isinstance(seed, np.random.SeedSequence)
        else np.random.SeedSequence(seed)
    )
    best_sched: Schedule | None = None
    best_value = float("-inf")
    trace: list[MsTraceRow] = []
    last_model: RestrictedModel | None = None
    iteration = 0
    while True:
        iteration += 1
        paco_seq, split_seq = master.spawn(2)
        pool_result = run_paco(
            instance,
            params.n_colonies,
            acs_params,
            seed=paco_seq,
            seed_best=best_sched,
            mode="pooled",
            iterations=params.acs_iterations,
            deadline=deadline,
        )
        members = list(pool_result.pool)
        if best_sched is not None:
            members.insert(0, best_sched)
        pool = SolutionPool.from_schedules(members, instance)
        values = [npv(s, instance) for s in pool.schedules]
        pool_best = max(values)
        incumbent = pool.schedules[values.index(pool_best)]

        part = partition(pool)
        refined = random_split(part, params.split_k, generator_from(split_seq))
        model = build_restricted(refined, instance, incumbent)
        last_model = model

        budget = min(params.t_iter, deadline - time.monotonic())
        if budget > 0:
            result = solve_restricted(model, t_iter=budget)
            status = "optimal" if result.optimal else "feasible"
            candidate, cand_value = result.schedule, result.value
        else:
            status = "skipped"
            candidate, cand_value = incumbent, pool_best
        if best_sched is None or cand_value > best_value:
            best_sched, best_value = candidate, cand_value
        trace.append(
            MsTraceRow(
                iteration=iteration,
                pool_best=pool_best,
                groups_pre=len(part.groups),
                groups_post=len(refined.groups),
                solver_status=status,
                incumbent_npv=best_value,
                wall_secs=time.monotonic() - started,
            )
        )
        if params.max_iterations is not None and iteration >= params.max_iterations:
            break
        if time.monotonic() >= deadline:
            break
    return MsResult(
        schedule=best_sched,
        value=best_value,
        iterations=iteration,
        wall_secs=time.monotonic() - started,
        trace=tuple(trace),
        last_model=last_model,
    )

"""Exact branch-and-bound for the restricted group model.

Search layout: a best-first heap of frontier nodes, each stored as its
decision chain from the root, combined with depth-first dives. Popping a node
replays its decisions on a single shared state (trail-based undo), then dives
by repeatedly branching on the undetermined group with the largest absolute
objective mass, preferring the warm-start value; the sibling child goes onto
the heap with the parent's bound.

Propagation is an implication closure (monotonicity and precedence pairs are
both of the form y_a <= y_b) plus an incremental minimum-LHS check per
resource row, all in exact integer arithmetic. The bound relaxes resource
rows and group coupling across tasks: per task the fixed cells bracket the
completion time into a window, and the bound takes the best discounted
cashflow inside it. At a full assignment the window is a point and the bound
equals the objective value computed with the same float operations, so
pruning against the incumbent never discards an improving leaf.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass

import numpy as np

from npvmerge.merge import RestrictedModel, group_assignment
from npvmerge.schedule import Schedule, discount_table, npv


@dataclass(frozen=True)
class SolveResult:
    """Outcome of one exact solve; optimal means the tree was exhausted."""

    schedule: Schedule
    value: float
    optimal: bool
    nodes: int
    wall_secs: float


def _window_bound(
    values: np.ndarray,
    labels: np.ndarray,
    cash: np.ndarray,
    durations: np.ndarray,
    w: np.ndarray,
    horizon: int,
) -> float:
    """Best discounted value per task over its still-possible completion
    window, summed; relaxes resource rows and cross-task group coupling."""
    grid = values[labels]  # (n, horizon)
    is_one = grid == 1
    is_zero = grid == 0
    hi = np.argmax(is_one, axis=1) + 1  # the deadline column is fixed to 1
    rev = is_zero[:, ::-1]
    any_zero = rev.any(axis=1)
    last_zero = horizon - 1 - np.argmax(rev, axis=1)
    lo = np.where(any_zero, last_zero + 2, 1)
    lo = np.maximum(lo, durations)
    per_task = np.where(cash > 0, cash * w[lo], cash * w[hi])
    return float(np.sum(per_task))


def relaxation_bound(model: RestrictedModel) -> float:
    """The search's root bound: an upper limit on any feasible assignment's
    value, computed after propagating the forced groups."""
    state = _State(model)
    ok = True
    for g in model.fixed_one:
        ok = ok and state.fix(g, 1)
    for g in model.fixed_zero:
        ok = ok and state.fix(g, 0)
    if not ok:
        raise ValueError("restricted model is infeasible at the root")
    instance = model.instance
    return _window_bound(
        state.values,
        model.partition.group_of,
        np.array(instance.cashflows(), dtype=np.float64),
        np.array(instance.durations(), dtype=np.int64),
        discount_table(instance),
        instance.deadline,
    )


class _State:
    """Shared assignment with trail-based undo."""

    __slots__ = (
        "values",
        "trail",
        "up",
        "down",
        "row_rhs",
        "row_min",
        "rows_of",
    )

    def __init__(self, model: RestrictedModel):
        g = model.n_groups
        self.values = np.full(g, -1, dtype=np.int8)
        self.trail: list[int] = []
        self.up: list[list[int]] = [[] for _ in range(g)]
        self.down: list[list[int]] = [[] for _ in range(g)]
        for a, b in model.monotonicity:
            self.up[a].append(b)
            self.down[b].append(a)
        for a, b in model.precedence_pairs:
            self.up[a].append(b)
            self.down[b].append(a)
        self.row_rhs: list[int] = []
        self.row_min: list[int] = []
        self.rows_of: list[list[tuple[int, int]]] = [[] for _ in range(g)]
        for terms, rhs in model.resource_rows:
            rid = len(self.row_rhs)
            self.row_rhs.append(rhs)
            self.row_min.append(sum(c for _, c in terms if c < 0))
            for grp, coef in terms:
                self.rows_of[grp].append((rid, coef))

    def fix(self, group: int, value: int) -> bool:
        """Assign and close under implications; False on conflict (trail keeps
        whatever was applied, callers undo to their mark)."""
        stack = [(group, value)]
        values = self.values
        while stack:
            g, v = stack.pop()
            cur = values[g]
            if cur == v:
                continue
            if cur == 1 - v:
                return False
            values[g] = v
            self.trail.append(g)
            conflict = False
            for rid, coef in self.rows_of[g]:
                # move this term from its minimum (min(coef, 0)) to coef * v;
                # apply every delta even on conflict so undo_to stays symmetric
                delta = coef * v - (coef if coef < 0 else 0)
                self.row_min[rid] += delta
                if self.row_min[rid] > self.row_rhs[rid]:
                    conflict = True
            if conflict:
                return False
            if v == 1:
                for other in self.up[g]:
                    stack.append((other, 1))
            else:
                for other in self.down[g]:
                    stack.append((other, 0))
        return True

    def undo_to(self, mark: int) -> None:
        while len(self.trail) > mark:
            g = self.trail.pop()
            v = int(self.values[g])
            for rid, coef in self.rows_of[g]:
                self.row_min[rid] -= coef * v - (coef if coef < 0 else 0)
            self.values[g] = -1


def solve_restricted(
    model: RestrictedModel,
    incumbent: Schedule | None = None,
    t_iter: float = 60.0,
    max_nodes: int | None = None,
) -> SolveResult:
    """Maximize the restricted model within a wall-clock budget.

    The incumbent (the model's own unless one is passed, which must then be
    group-constant as well) seeds both the pruning baseline and the preferred
    branch direction; the result is never worse than it. optimal=True only
    when the search tree was fully exhausted inside the budget. t_iter <= 0
    skips the search entirely.
    """
    started = time.monotonic()
    instance = model.instance
    cash = np.array(instance.cashflows(), dtype=np.float64)
    durations = np.array(instance.durations(), dtype=np.int64)
    w = discount_table(instance)
    labels = model.partition.group_of
    horizon = instance.deadline

    if incumbent is None:
        best_sched = model.incumbent
        warm = model.warm_start
    else:
        best_sched = incumbent
        warm = group_assignment(incumbent, model.partition, instance)
    best_value = npv(best_sched, instance)
    if t_iter <= 0:
        return SolveResult(best_sched, best_value, False, 0, 0.0)
    deadline = started + t_iter

    state = _State(model)
    ok = True
    for g in model.fixed_one:
        ok = ok and state.fix(g, 1)
    for g in model.fixed_zero:
        ok = ok and state.fix(g, 0)
    if not ok:
        raise ValueError("restricted model is infeasible at the root")
    root_mark = len(state.trail)

    absobj = np.abs(model.objective)

    def bound() -> float:
        return _window_bound(state.values, labels, cash, durations, w, horizon)

    def leaf_schedule() -> Schedule:
        grid = state.values[labels]
        completions = np.argmax(grid == 1, axis=1) + 1
        return Schedule(starts=tuple(int(c - d) for c, d in zip(completions, durations)))

    counter = itertools.count()
    heap: list[tuple[float, int, tuple[tuple[int, int], ...]]] = []
    root_bound = bound()
    nodes = 0
    exhausted = False
    out_of_budget = False
    if root_bound > best_value:
        heapq.heappush(heap, (-root_bound, next(counter), ()))
    else:
        exhausted = True

    while heap:
        if time.monotonic() >= deadline or (
            max_nodes is not None and nodes >= max_nodes
        ):
            out_of_budget = True
            break
        neg_bound, _, decisions = heapq.heappop(heap)
        if -neg_bound <= best_value:
            continue
        replay_ok = True
        for g, v in decisions:
            if not state.fix(g, v):
                replay_ok = False
                break
        if replay_ok:
            path = list(decisions)
            while True:
                nodes += 1
                if time.monotonic() >= deadline or (
                    max_nodes is not None and nodes >= max_nodes
                ):
                    out_of_budget = True
                    break
                node_bound = bound()
                if node_bound <= best_value:
                    break
                free = np.flatnonzero(state.values == -1)
                if free.size == 0:
                    best_value = node_bound
                    best_sched = leaf_schedule()
                    break
                g = int(free[np.argmax(absobj[free])])
                v = int(warm[g])
                heapq.heappush(
                    heap,
                    (-node_bound, next(counter), tuple(path) + ((g, 1 - v),)),
                )
                mark = len(state.trail)
                if not state.fix(g, v):
                    state.undo_to(mark)
                    break
                path.append((g, v))
        state.undo_to(root_mark)
        if out_of_budget:
            break
    if not heap and not out_of_budget:
        exhausted = True

    return SolveResult(
        schedule=best_sched,
        value=best_value,
        optimal=exhausted,
        nodes=nodes,
        wall_secs=time.monotonic() - started,
    )

"""Schedules over an Instance: value, feasibility, decoding, binary encoding.

A schedule assigns every task an integer start; task i occupies the periods
``[s_i, s_i + d_i)`` and its cash flow is discounted by the completion time,
``npv = sum_i c_i * exp(-alpha * (s_i + d_i))``.

:func:`decode` turns a precedence-consistent permutation into a feasible
schedule. It walks the permutation; each not-yet-scheduled task seeds a set
made of the task plus all its transitive successors. Sets whose summed cash
flow is negative are pushed as late as possible (scanning start slots
downward), all other sets as early as possible, which delays payments and
accelerates income. After every single placement the set is re-scanned from
the front, so a task becomes eligible as soon as its last predecessor inside
the set is placed. If chain-directed placement ever wedges, the whole
permutation is redecoded with plain earliest placement, which always succeeds
on instances whose horizon covers the summed durations.

:func:`encode_binary` maps a schedule to the time-indexed 0/1 matrix used by
the merge stage: ``x[i][t-1] = 1`` iff task i has completed by time point t,
for t = 1..deadline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from npvmerge.model import Instance, predecessors, successors, topological_order

Permutation = tuple[int, ...]


class DecodeError(RuntimeError):
    """No feasible slot for a task; indicates an over-constrained instance."""


@dataclass(frozen=True)
class Schedule:
    """Start times indexed by task id."""

    starts: tuple[int, ...]


@dataclass(frozen=True)
class Violation:
    """One feasibility defect.

    kind is "precedence" with detail (i, j), "resource" with detail (m, t),
    or "deadline" with detail (i,).
    """

    kind: str
    detail: tuple[int, ...]


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    violations: tuple[Violation, ...]


@dataclass
class _InstanceOps:
    """Arrays derived from an Instance, shared by the hot paths."""

    durations: np.ndarray
    cashflows: np.ndarray
    demands: np.ndarray
    limits: np.ndarray
    preds: tuple[tuple[int, ...], ...]
    succs: tuple[tuple[int, ...], ...]
    est: np.ndarray
    lst: np.ndarray
    discount_table: np.ndarray


@lru_cache(maxsize=128)
def _ops(instance: Instance) -> _InstanceOps:
    n = instance.n
    d = np.array(instance.durations(), dtype=np.int64)
    preds = tuple(tuple(p) for p in predecessors(instance))
    succs = tuple(tuple(s) for s in successors(instance))
    order = topological_order(instance)
    est = np.zeros(n, dtype=np.int64)
    for j in order:
        if preds[j]:
            est[j] = max(est[p] + d[p] for p in preds[j])
    delta = instance.deadline
    lst = np.full(n, delta, dtype=np.int64) - d
    for j in reversed(order):
        if succs[j]:
            lst[j] = min(int(lst[s]) for s in succs[j]) - d[j]
            if lst[j] > delta - d[j]:
                lst[j] = delta - d[j]
    table = np.array(
        [math.exp(-instance.discount * t) for t in range(delta + 1)], dtype=np.float64
    )
    return _InstanceOps(
        durations=d,
        cashflows=np.array(instance.cashflows(), dtype=np.float64),
        demands=np.array([t.demand for t in instance.tasks], dtype=np.int64),
        limits=np.array(instance.limits, dtype=np.int64),
        preds=preds,
        succs=succs,
        est=est,
        lst=lst,
        discount_table=table,
    )


def discount_table(instance: Instance) -> np.ndarray:
    """exp(-alpha * t) for t = 0..deadline; shared so values compare exactly."""
    return _ops(instance).discount_table


def completion_times(schedule: Schedule, instance: Instance) -> np.ndarray:
    return np.array(schedule.starts, dtype=np.int64) + _ops(instance).durations


def npv(schedule: Schedule, instance: Instance) -> float:
    """Discounted value of the schedule: sum_i c_i * exp(-alpha * (s_i + d_i)).

    Defined for any integer starts, including schedules that violate the
    deadline or start before time zero; feasibility is checked elsewhere.
    """
    ops = _ops(instance)
    finish = np.array(schedule.starts, dtype=np.int64) + ops.durations
    if finish.size == 0:
        return 0.0
    if finish.min() >= 0 and finish.max() <= instance.deadline:
        return float(np.sum(ops.cashflows * ops.discount_table[finish]))
    return float(np.sum(ops.cashflows * np.exp(-instance.discount * finish)))


def resource_profile(schedule: Schedule, instance: Instance) -> np.ndarray:
    """Per-resource usage over periods 0..deadline-1 (k x deadline matrix)."""
    ops = _ops(instance)
    delta = instance.deadline
    usage = np.zeros((instance.k, delta), dtype=np.int64)
    for i, s in enumerate(schedule.starts):
        lo = max(int(s), 0)
        hi = min(int(s) + int(ops.durations[i]), delta)
        if lo < hi:
            usage[:, lo:hi] += ops.demands[i][:, None]
    return usage


def check_feasible(schedule: Schedule, instance: Instance) -> FeasibilityReport:
    """Collect every deadline, precedence, and resource violation."""
    if len(schedule.starts) != instance.n:
        raise ValueError(
            f"schedule has {len(schedule.starts)} starts for {instance.n} tasks"
        )
    ops = _ops(instance)
    delta = instance.deadline
    violations: list[Violation] = []
    for i, s in enumerate(schedule.starts):
        if s < 0 or s + int(ops.durations[i]) > delta:
            violations.append(Violation("deadline", (i,)))
    for i, j in instance.precedence:
        if schedule.starts[i] + int(ops.durations[i]) > schedule.starts[j]:
            violations.append(Violation("precedence", (i, j)))
    usage = resource_profile(schedule, instance)
    over = usage > ops.limits[:, None]
    for m, t in np.argwhere(over):
        violations.append(Violation("resource", (int(m), int(t))))
    return FeasibilityReport(ok=not violations, violations=tuple(violations))


def validate_permutation(order: Sequence[int], instance: Instance) -> None:
    """Raise ValueError unless ``order`` is a precedence-consistent permutation."""
    n = instance.n
    if sorted(order) != list(range(n)):
        raise ValueError("not a permutation of 0..n-1")
    position = {task: idx for idx, task in enumerate(order)}
    for i, j in instance.precedence:
        if position[i] > position[j]:
            raise ValueError(f"permutation places {j} before its predecessor {i}")


def permutation_from_schedule(schedule: Schedule, instance: Instance) -> Permutation:
    """Order tasks by (start, id); precedence-consistent for feasible schedules."""
    return tuple(sorted(range(instance.n), key=lambda i: (schedule.starts[i], i)))


# ---------------------------------------------------------------------------
# Decoder
# ---------------------------------------------------------------------------


def _successor_closure(seed: int, succs, position) -> list[int]:
    """Seed plus all transitive successors, ordered by permutation position."""
    stack = [seed]
    seen = {seed}
    while stack:
        u = stack.pop()
        for v in succs[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return sorted(seen, key=position.__getitem__)


def _pick_start(
    usage: np.ndarray,
    limits: np.ndarray,
    demand: np.ndarray,
    lb: int,
    ub: int,
    du: int,
    latest: bool,
) -> int | None:
    """Earliest (or latest) start in [lb, ub] keeping usage within limits."""
    if lb > ub:
        return None
    window = usage[:, lb : ub + du]
    over = np.any(window + demand[:, None] > limits[:, None], axis=0)
    prefix = np.concatenate(([0], np.cumsum(over)))
    conflicts = prefix[du : du + ub - lb + 1] - prefix[: ub - lb + 1]
    fits = np.flatnonzero(conflicts == 0)
    if fits.size == 0:
        return None
    return lb + int(fits[-1] if latest else fits[0])


def _place(u, latest, ops, starts, scheduled, usage):
    du = int(ops.durations[u])
    lb = int(ops.est[u])
    for p in ops.preds[u]:
        if scheduled[p]:
            lb = max(lb, starts[p] + int(ops.durations[p]))
    ub = int(ops.lst[u])
    for v in ops.succs[u]:
        if scheduled[v]:
            ub = min(ub, starts[v] - du)
    s = _pick_start(usage, ops.limits, ops.demands[u], lb, ub, du, latest)
    if s is None:
        raise DecodeError(f"no feasible start for task {u} in window [{lb}, {ub}]")
    starts[u] = s
    scheduled[u] = True
    usage[:, s : s + du] += ops.demands[u][:, None]


def _closure_pass(order, instance, ops):
    """Chain-directed placement: whole successor closures early or late."""
    n = instance.n
    position = {int(task): idx for idx, task in enumerate(order)}
    starts = [-1] * n
    scheduled = [False] * n
    usage = np.zeros((instance.k, instance.deadline), dtype=np.int64)
    for seed in order:
        seed = int(seed)
        if scheduled[seed]:
            continue
        members = _successor_closure(seed, ops.succs, position)
        sign = float(np.sum(ops.cashflows[members]))
        latest = sign < 0.0
        while True:
            for u in members:
                if scheduled[u]:
                    continue
                if all(scheduled[p] for p in ops.preds[u]):
                    _place(u, latest, ops, starts, scheduled, usage)
                    break  # placement may unblock earlier members: re-scan
            else:
                break
    if not all(scheduled):
        raise DecodeError("permutation is not precedence-consistent")
    return starts


def _serial_pass(order, instance, ops):
    """Earliest placement in permutation order; total whenever the horizon
    covers the summed durations, since some task is always running before
    any earliest-feasible start."""
    n = instance.n
    starts = [-1] * n
    scheduled = [False] * n
    usage = np.zeros((instance.k, instance.deadline), dtype=np.int64)
    for u in order:
        u = int(u)
        if scheduled[u] or not all(scheduled[p] for p in ops.preds[u]):
            raise DecodeError("permutation is not precedence-consistent")
        _place(u, False, ops, starts, scheduled, usage)
    return starts


def decode(order: Sequence[int], instance: Instance) -> Schedule:
    """Turn a precedence-consistent permutation into a feasible schedule.

    Deterministic: the same permutation always yields the same schedule.
    Placement runs successor-chain-directed (net gains early, net costs
    late); if that wedges a task between already-placed neighbours with no
    free slot, the whole permutation is redecoded with plain earliest
    placement, which only fails when the instance itself is too cramped.
    """
    if instance.deadline <= 0:
        raise ValueError("instance deadline is unset; prepare the instance first")
    ops = _ops(instance)
    try:
        starts = _closure_pass(order, instance, ops)
    except DecodeError:
        starts = _serial_pass(order, instance, ops)
    return Schedule(starts=tuple(starts))


# ---------------------------------------------------------------------------
# Binary encoding
# ---------------------------------------------------------------------------


def encode_binary(schedule: Schedule, instance: Instance) -> np.ndarray:
    """n x deadline 0/1 matrix; column t-1 says whether the task is done by t."""
    ops = _ops(instance)
    delta = instance.deadline
    x = np.zeros((instance.n, delta), dtype=np.uint8)
    for i, s in enumerate(schedule.starts):
        finish = int(s) + int(ops.durations[i])
        if s < 0 or finish > delta:
            raise ValueError(f"task {i} finishes at {finish}, outside 1..{delta}")
        x[i, finish - 1 :] = 1
    return x


def schedule_from_completions(
    completions: Sequence[int], instance: Instance
) -> Schedule:
    d = _ops(instance).durations
    return Schedule(
        starts=tuple(int(c) - int(d[i]) for i, c in enumerate(completions))
    )

"""Problem instances: PSPLIB parsing, cash flows, deadline and discount rate.

An :class:`Instance` holds the real tasks only. PSPLIB single-mode files carry
a dummy supersource (job 1) and supersink (last job) with zero duration and
zero demand; the parser strips both and renumbers the remaining jobs to
0-based ids, so task ``i`` of the instance is job ``i + 2`` of the file.

Cash flows are not part of PSPLIB. :func:`generate_cashflows` draws one value
per task, i.i.d. uniform over [-500, 1000), from numpy's PCG64 generator
seeded with ``SeedSequence(seed)``; the exact stream is pinned by tests.
:func:`compute_deadline_and_discount` sets the deadline to 3.5 times the
largest transitive-predecessor workload and the discount rate to the weekly
equivalent of 5% annual interest.
"""

from __future__ import annotations

import heapq
import json
import math
import os
import re
from dataclasses import dataclass, replace

import numpy as np


class PsplibParseError(ValueError):
    """Raised for malformed PSPLIB input; carries the offending line number."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class InstanceError(ValueError):
    """Raised when an instance violates a structural requirement."""


@dataclass(frozen=True)
class Task:
    """One real activity: fixed duration, signed cash flow, per-resource demand."""

    duration: int
    cashflow: float
    demand: tuple[int, ...]


@dataclass(frozen=True)
class Instance:
    """An immutable scheduling instance.

    Attributes:
        name: label used in result records and reports.
        tasks: the real tasks, indexed 0..n-1.
        limits: renewable capacity per resource, length k.
        precedence: arcs (i, j) meaning task i must finish before j starts.
        deadline: latest allowed completion time (0 while unset).
        discount: continuous discount rate per time unit (0.0 while unset).
        seed: seed used for cash flow generation, None while unset.
    """

    name: str
    tasks: tuple[Task, ...]
    limits: tuple[int, ...]
    precedence: tuple[tuple[int, int], ...]
    deadline: int = 0
    discount: float = 0.0
    seed: int | None = None

    @property
    def n(self) -> int:
        return len(self.tasks)

    @property
    def k(self) -> int:
        return len(self.limits)

    def durations(self) -> tuple[int, ...]:
        return tuple(t.duration for t in self.tasks)

    def cashflows(self) -> tuple[float, ...]:
        return tuple(t.cashflow for t in self.tasks)


def predecessors(instance: Instance) -> list[list[int]]:
    preds: list[list[int]] = [[] for _ in range(instance.n)]
    for i, j in instance.precedence:
        preds[j].append(i)
    return preds


def successors(instance: Instance) -> list[list[int]]:
    succs: list[list[int]] = [[] for _ in range(instance.n)]
    for i, j in instance.precedence:
        succs[i].append(j)
    return succs


def topological_order(instance: Instance) -> tuple[int, ...]:
    """Kahn's algorithm with a lowest-id tie break; raises on cycles."""
    n = instance.n
    indeg = [0] * n
    succs = successors(instance)
    for _, j in instance.precedence:
        indeg[j] += 1
    ready = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in succs[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, j)
    if len(order) != n:
        raise InstanceError("precedence graph contains a cycle")
    return tuple(order)


def longest_chain_duration(instance: Instance) -> int:
    """Duration of the heaviest precedence chain (critical path, no resources)."""
    order = topological_order(instance)
    preds = predecessors(instance)
    d = instance.durations()
    finish = [0] * instance.n
    for j in order:
        start = max((finish[p] for p in preds[j]), default=0)
        finish[j] = start + d[j]
    return max(finish, default=0)


def validate_instance(instance: Instance, *, solve_ready: bool = False) -> None:
    """Check structural invariants; raise InstanceError on the first failure.

    With ``solve_ready`` the instance must also carry a positive deadline and
    discount rate and the deadline must admit the longest precedence chain.
    """
    n, k = instance.n, instance.k
    if n == 0:
        raise InstanceError("instance has no tasks")
    if k == 0:
        raise InstanceError("instance has no resources")
    for m, limit in enumerate(instance.limits):
        if limit < 0:
            raise InstanceError(f"resource {m} has negative capacity {limit}")
    for i, task in enumerate(instance.tasks):
        if task.duration < 1:
            raise InstanceError(f"task {i} has duration {task.duration}; must be >= 1")
        if len(task.demand) != k:
            raise InstanceError(
                f"task {i} has {len(task.demand)} demand entries, expected {k}"
            )
        for m, need in enumerate(task.demand):
            if need < 0:
                raise InstanceError(f"task {i} has negative demand on resource {m}")
            if need > instance.limits[m]:
                raise InstanceError(
                    f"task {i} demands {need} of resource {m}, "
                    f"capacity is {instance.limits[m]}"
                )
    seen = set()
    for arc in instance.precedence:
        i, j = arc
        if not (0 <= i < n and 0 <= j < n):
            raise InstanceError(f"precedence arc {arc} references an unknown task")
        if i == j:
            raise InstanceError(f"precedence arc {arc} is a self-loop")
        if arc in seen:
            raise InstanceError(f"precedence arc {arc} is duplicated")
        seen.add(arc)
    topological_order(instance)  # raises on cycles
    if solve_ready:
        if instance.discount <= 0.0:
            raise InstanceError("discount rate is unset")
        if instance.deadline <= 0:
            raise InstanceError("deadline is unset")
        chain = longest_chain_duration(instance)
        if instance.deadline < chain:
            raise InstanceError(
                f"deadline {instance.deadline} is below the longest "
                f"precedence chain duration {chain}; no feasible schedule exists"
            )


# ---------------------------------------------------------------------------
# PSPLIB single-mode (.sm) reader
# ---------------------------------------------------------------------------


def _ints(text: str) -> list[int]:
    return [int(tok) for tok in re.findall(r"-?\d+", text)]


def parse_psplib(path: str | os.PathLike[str]) -> Instance:
    """Read a PSPLIB single-mode .sm file into an Instance.

    Dummy source/sink jobs are removed and arcs touching them dropped (they
    never connect two real jobs). Cash flows, deadline and discount are left
    unset. Multi-mode files and nonrenewable resources are rejected.
    """
    with open(path, "r", encoding="utf-8", errors="replace") as handle:
        text = handle.read()
    name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return parse_psplib_text(text, name=name)


def parse_psplib_text(text: str, name: str = "") -> Instance:
    lines = text.splitlines()

    def find(marker: str) -> int:
        for idx, line in enumerate(lines):
            if marker in line:
                return idx
        raise PsplibParseError(f"missing section {marker!r}")

    def int_after_colon(idx: int, marker: str) -> int:
        _, _, tail = lines[idx].partition(":")
        values = _ints(tail)
        if not values:
            raise PsplibParseError(f"no integer after {marker!r}", idx + 1)
        return values[0]

    njobs_idx = find("jobs (incl.")
    njobs = int_after_colon(njobs_idx, "jobs")
    if njobs < 3:
        raise PsplibParseError(f"{njobs} jobs leaves no real task", njobs_idx + 1)

    renew_idx = find("- renewable")
    k = int_after_colon(renew_idx, "renewable")
    if k < 1:
        raise PsplibParseError("instance declares no renewable resource", renew_idx + 1)
    for marker in ("- nonrenewable", "- doubly constrained"):
        try:
            idx = find(marker)
        except PsplibParseError:
            continue
        if int_after_colon(idx, marker) != 0:
            raise PsplibParseError(
                f"{marker.strip('- ')} resources are not supported", idx + 1
            )

    # --- precedence rows: jobnr #modes #successors successor ids ---
    prec_idx = find("PRECEDENCE RELATIONS")
    successors_by_job: dict[int, list[int]] = {}
    row = prec_idx + 2  # skip the column-header line
    for _ in range(njobs):
        if row >= len(lines):
            raise PsplibParseError("precedence table ends early", len(lines))
        values = _ints(lines[row])
        if len(values) < 3:
            raise PsplibParseError("malformed precedence row", row + 1)
        jobnr, nmodes, nsucc = values[0], values[1], values[2]
        if nmodes != 1:
            raise PsplibParseError(
                f"job {jobnr} has {nmodes} modes; only single-mode input is supported",
                row + 1,
            )
        succ = values[3:]
        if len(succ) != nsucc:
            raise PsplibParseError(
                f"job {jobnr} announces {nsucc} successors but lists {len(succ)}",
                row + 1,
            )
        if jobnr in successors_by_job:
            raise PsplibParseError(f"job {jobnr} appears twice", row + 1)
        for s in succ:
            if not (1 <= s <= njobs):
                raise PsplibParseError(f"job {jobnr} lists unknown successor {s}", row + 1)
        successors_by_job[jobnr] = succ
        row += 1
    if set(successors_by_job) != set(range(1, njobs + 1)):
        raise PsplibParseError("precedence table does not cover every job", row)

    # --- durations and demands: jobnr mode duration demand[k] ---
    req_idx = find("REQUESTS/DURATIONS")
    durations_by_job: dict[int, int] = {}
    demands_by_job: dict[int, tuple[int, ...]] = {}
    row = req_idx + 1
    seen = 0
    while seen < njobs:
        if row >= len(lines):
            raise PsplibParseError("durations table ends early", len(lines))
        values = _ints(lines[row])
        # tolerate the header and dashed separator lines
        if len(values) != 3 + k or (seen == 0 and "jobnr" in lines[row]):
            row += 1
            if row - req_idx > njobs + 10:
                raise PsplibParseError("durations table not found where expected", row)
            continue
        jobnr, nmode, duration = values[0], values[1], values[2]
        if jobnr != seen + 1:
            raise PsplibParseError(
                f"durations table out of order: expected job {seen + 1}, got {jobnr}",
                row + 1,
            )
        if nmode != 1:
            raise PsplibParseError(f"job {jobnr} uses mode {nmode}", row + 1)
        durations_by_job[jobnr] = duration
        demands_by_job[jobnr] = tuple(values[3:])
        seen += 1
        row += 1

    avail_idx = find("RESOURCEAVAILABILITIES")
    limits: tuple[int, ...] | None = None
    for row in range(avail_idx + 1, min(avail_idx + 4, len(lines))):
        values = _ints(lines[row])
        # skip the "R 1  R 2 ..." name header; the capacity row is bare numbers
        if len(values) == k and not re.search(r"[A-Za-z]", lines[row]):
            limits = tuple(values)
            break
    if limits is None:
        raise PsplibParseError("capacity row not found", avail_idx + 1)

    # --- strip dummies, renumber to 0-based real ids ---
    source, sink = 1, njobs
    for dummy in (source, sink):
        if durations_by_job[dummy] != 0 or any(demands_by_job[dummy]):
            raise PsplibParseError(
                f"job {dummy} is expected to be a zero-duration dummy"
            )
    real = range(2, njobs)
    tasks = tuple(
        Task(duration=durations_by_job[j], cashflow=0.0, demand=demands_by_job[j])
        for j in real
    )
    arcs = sorted(
        (i - 2, j - 2)
        for i in real
        for j in successors_by_job[i]
        if j != sink
    )
    instance = Instance(
        name=name,
        tasks=tasks,
        limits=limits,
        precedence=tuple(arcs),
    )
    validate_instance(instance)
    return instance


# ---------------------------------------------------------------------------
# Cash flows, deadline, discount
# ---------------------------------------------------------------------------

CASHFLOW_LOW = -500.0
CASHFLOW_HIGH = 1000.0


def generate_cashflows(instance: Instance, seed: int) -> Instance:
    """Return a copy with cash flows drawn i.i.d. uniform over [-500, 1000).

    The generator is numpy's PCG64 seeded with ``SeedSequence(seed)``; one
    draw per task, in task-id order. The stream is part of the public
    contract so prepared instances are reproducible across platforms.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    draws = rng.uniform(CASHFLOW_LOW, CASHFLOW_HIGH, size=instance.n)
    tasks = tuple(
        replace(task, cashflow=float(value))
        for task, value in zip(instance.tasks, draws)
    )
    return replace(instance, tasks=tasks, seed=seed)


def weekly_discount_rate(annual_rate: float = 0.05) -> float:
    """Weekly rate compounding to ``annual_rate`` over 52 weeks."""
    return (1.0 + annual_rate) ** (1.0 / 52.0) - 1.0


def predecessor_workloads(instance: Instance) -> tuple[int, ...]:
    """For each task, the summed duration of all its transitive predecessors."""
    order = topological_order(instance)
    preds = predecessors(instance)
    d = instance.durations()
    closure = [0] * instance.n  # bitmask of transitive predecessors
    for j in order:
        mask = 0
        for p in preds[j]:
            mask |= closure[p] | (1 << p)
        closure[j] = mask
    loads = []
    for j in range(instance.n):
        mask = closure[j]
        total = 0
        while mask:
            low = mask & -mask
            total += d[low.bit_length() - 1]
            mask ^= low
        loads.append(total)
    return tuple(loads)


def compute_deadline_and_discount(
    instance: Instance, *, stretch: float = 3.5, annual_rate: float = 0.05
) -> Instance:
    """Set the deadline window and discount rate.

    The deadline is ``ceil(stretch * max_j l_j)`` where ``l_j`` sums the
    durations of task j's transitive predecessors; when the instance has no
    precedence at all the fallback is ``ceil(stretch * sum(d))``.
    """
    loads = predecessor_workloads(instance)
    heaviest = max(loads, default=0)
    if heaviest > 0:
        deadline = math.ceil(stretch * heaviest)
    else:
        deadline = math.ceil(stretch * sum(instance.durations()))
    return replace(
        instance, deadline=deadline, discount=weekly_discount_rate(annual_rate)
    )


# ---------------------------------------------------------------------------
# JSON sidecar
# ---------------------------------------------------------------------------

_SIDE_CAR_KEYS = {
    "name",
    "n",
    "k",
    "durations",
    "demands",
    "limits",
    "precedence",
    "cashflows",
    "deadline",
    "alpha",
    "seed",
}


def instance_to_dict(instance: Instance) -> dict:
    return {
        "name": instance.name,
        "n": instance.n,
        "k": instance.k,
        "durations": list(instance.durations()),
        "demands": [list(t.demand) for t in instance.tasks],
        "limits": list(instance.limits),
        "precedence": [list(arc) for arc in instance.precedence],
        "cashflows": list(instance.cashflows()),
        "deadline": instance.deadline,
        "alpha": instance.discount,
        "seed": instance.seed,
    }


def instance_from_dict(data: dict) -> Instance:
    missing = _SIDE_CAR_KEYS - set(data)
    if missing:
        raise InstanceError(f"sidecar is missing keys: {sorted(missing)}")
    n, k = data["n"], data["k"]
    for key, expected in (("durations", n), ("demands", n), ("cashflows", n),
                          ("limits", k)):
        if len(data[key]) != expected:
            raise InstanceError(
                f"sidecar field {key!r} has length {len(data[key])}, expected {expected}"
            )
    tasks = tuple(
        Task(duration=int(d), cashflow=float(c), demand=tuple(int(x) for x in dem))
        for d, c, dem in zip(data["durations"], data["cashflows"], data["demands"])
    )
    instance = Instance(
        name=str(data["name"]),
        tasks=tasks,
        limits=tuple(int(x) for x in data["limits"]),
        precedence=tuple(sorted((int(i), int(j)) for i, j in data["precedence"])),
        deadline=int(data["deadline"]),
        discount=float(data["alpha"]),
        seed=None if data["seed"] is None else int(data["seed"]),
    )
    validate_instance(instance)
    return instance


def save_instance(instance: Instance, path: str | os.PathLike[str]) -> None:
    """Write the JSON sidecar; key order and float formatting are stable."""
    payload = json.dumps(instance_to_dict(instance), indent=2, sort_keys=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(payload + "\n")


def load_instance(path: str | os.PathLike[str]) -> Instance:
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    return instance_from_dict(data)

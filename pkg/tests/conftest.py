"""Shared builders for test instances.

The generators guarantee feasibility by construction: every instance admits
at least the serial schedule (deadline >= total duration, capacity >= any
single demand), so decoding and enumeration never start from an empty
feasible set.
"""

from __future__ import annotations

import numpy as np
import pytest

from npvmerge.model import Instance, Task, predecessors
from npvmerge.schedule import Schedule, schedule_from_completions


def make_instance(
    durations,
    cashflows,
    demands,
    limits,
    precedence=(),
    deadline=None,
    discount=0.01,
    name="test",
    seed=None,
):
    tasks = tuple(
        Task(duration=int(d), cashflow=float(c), demand=tuple(int(r) for r in dem))
        for d, c, dem in zip(durations, cashflows, demands)
    )
    if deadline is None:
        deadline = int(sum(durations))
    return Instance(
        name=name,
        tasks=tasks,
        limits=tuple(int(r) for r in limits),
        precedence=tuple((int(a), int(b)) for a, b in precedence),
        deadline=int(deadline),
        discount=float(discount),
        seed=seed,
    )


def random_precedence(rng, n, density=0.35):
    pairs = []
    for b in range(1, n):
        for a in range(b):
            if rng.random() < density:
                pairs.append((a, b))
    return tuple(pairs)


def random_tiny_instance(rng, max_n=4, max_delta=10):
    """Small enough for exhaustive enumeration, always feasible."""
    n = int(rng.integers(2, max_n + 1))
    durations = rng.integers(1, 3, size=n).tolist()
    slack = int(rng.integers(0, 3))
    deadline = min(max_delta, sum(durations) + slack)
    k = int(rng.integers(1, 3))
    demands = rng.integers(0, 3, size=(n, k)).tolist()
    limits = [max(2, max(row[m] for row in demands)) for m in range(k)]
    cashflows = rng.uniform(-500.0, 1000.0, size=n).round(3).tolist()
    discount = float(rng.choice([0.01, 0.002]))
    return make_instance(
        durations,
        cashflows,
        demands,
        limits,
        precedence=random_precedence(rng, n),
        deadline=deadline,
        discount=discount,
        name=f"tiny{n}",
    )


def random_slack_instance(rng, min_n=5, max_n=8):
    """Decoder-property instances: enough horizon slack to serialize."""
    n = int(rng.integers(min_n, max_n + 1))
    durations = rng.integers(1, 5, size=n).tolist()
    deadline = sum(durations) + int(rng.integers(2, 7))
    k = 2
    demands = rng.integers(0, 4, size=(n, k)).tolist()
    limits = [max(3, max(row[m] for row in demands)) for m in range(k)]
    cashflows = rng.uniform(-500.0, 1000.0, size=n).round(3).tolist()
    return make_instance(
        durations,
        cashflows,
        demands,
        limits,
        precedence=random_precedence(rng, n, density=0.3),
        deadline=deadline,
        discount=0.001,
        name=f"slack{n}",
    )


def random_linear_extension(rng, instance):
    """A random precedence-compatible permutation of the task ids."""
    preds = predecessors(instance)
    remaining = {i: set(preds[i]) for i in range(instance.n)}
    eligible = sorted(i for i in range(instance.n) if not remaining[i])
    order = []
    while eligible:
        pick = int(rng.integers(0, len(eligible)))
        task = eligible.pop(pick)
        order.append(task)
        for j in range(instance.n):
            if task in remaining[j]:
                remaining[j].discard(task)
                if not remaining[j]:
                    eligible.append(j)
        eligible.sort()
    return tuple(order)


def tight_instance(rng, n, name=None):
    """Resource-bound instance where schedule order genuinely matters."""
    durations = rng.integers(1, 11, size=n).tolist()
    k = 4
    demands = np.zeros((n, k), dtype=np.int64)
    for i in range(n):
        used = rng.choice(k, size=int(rng.integers(1, 3)), replace=False)
        for m in used:
            demands[i, m] = int(rng.integers(1, 11))
    limits = [
        int(max(demands[:, m].max(), 1) + rng.integers(0, 5)) for m in range(k)
    ]
    cashflows = rng.uniform(-500.0, 1000.0, size=n).round(3).tolist()
    # layered precedence, psplib-like out-degree <= 3
    pairs = []
    for a in range(n - 1):
        succ_count = int(rng.integers(0, 3))
        if succ_count:
            hi = min(n, a + 8)
            pool = np.arange(a + 1, hi)
            for b in rng.choice(pool, size=min(succ_count, len(pool)), replace=False):
                pairs.append((a, int(b)))
    pairs = sorted(set(pairs))
    # generous horizon: serial lower bound times a stretch factor
    deadline = int(np.ceil(3.5 * max(durations) * max(1, n // 6)))
    deadline = max(deadline, sum(durations))
    return make_instance(
        durations,
        cashflows,
        demands.tolist(),
        limits,
        precedence=pairs,
        deadline=deadline,
        discount=0.0009387127031117437,
        name=name or f"tight{n}",
    )


# ---------------------------------------------------------------------------
# The 3-task, 11-time-point worked example used by the partition goldens
# ---------------------------------------------------------------------------


def figure_instance():
    return make_instance(
        durations=(1, 2, 3),
        cashflows=(150.0, -80.0, 60.0),
        demands=((1,), (1,), (1,)),
        limits=(10,),
        precedence=(),
        deadline=11,
        discount=0.01,
        name="figure3x11",
    )


def figure_pool_schedules(instance):
    """Three feasible schedules over 3 tasks x 11 time points.

    Task completion times per schedule: first task (5, 9, 1), second
    (7, 11, 11), third (6, 6, 8). Their cell classes have sizes
    4/4/8/11/4/2, including an all-zeros class of 11 cells and a 4-cell
    class present only in the first schedule.
    """
    completions = ((5, 7, 6), (9, 11, 6), (1, 11, 8))
    return [schedule_from_completions(c, instance) for c in completions]


@pytest.fixture
def figure_setup():
    inst = figure_instance()
    return inst, figure_pool_schedules(inst)


# ---------------------------------------------------------------------------
# Synthesized PSPLIB single-mode text (j30 shaped: 30 real jobs + 2 dummies)
# ---------------------------------------------------------------------------


def psplib_text(rng, n_real=30, k=4):
    njobs = n_real + 2
    durations = [0] + rng.integers(1, 11, size=n_real).tolist() + [0]
    demands = np.zeros((njobs, k), dtype=np.int64)
    for i in range(1, njobs - 1):
        used = rng.choice(k, size=int(rng.integers(1, 3)), replace=False)
        for m in used:
            demands[i, m] = int(rng.integers(1, 11))
    limits = [
        int(max(demands[:, m].max(), 1) + rng.integers(0, 5)) for m in range(k)
    ]

    successors = {j: [] for j in range(1, njobs + 1)}
    first_layer = sorted(rng.choice(np.arange(2, 5), size=3, replace=False).tolist())
    successors[1] = [int(x) for x in first_layer]
    for j in range(2, njobs):
        count = int(rng.integers(1, 4))
        hi = njobs
        pool = np.arange(j + 1, hi + 1)
        picks = rng.choice(pool, size=min(count, len(pool)), replace=False)
        successors[j] = sorted(int(x) for x in picks)
    successors[njobs] = []

    horizon = sum(durations)
    lines = [
        "*" * 72,
        "file with basedata            : synthetic.bas",
        f"initial value random generator: {int(rng.integers(1, 10**6))}",
        "*" * 72,
        "projects                      :  1",
        f"jobs (incl. supersource/sink ):  {njobs}",
        f"horizon                       :  {horizon}",
        "RESOURCES",
        f"  - renewable                 :  {k}   R",
        "  - nonrenewable              :  0   N",
        "  - doubly constrained        :  0   D",
        "*" * 72,
        "PROJECT INFORMATION:",
        "pronr.  #jobs rel.date duedate tardcost  MPM-Time",
        f"    1     {n_real}      0       {horizon}       0       {horizon}",
        "*" * 72,
        "PRECEDENCE RELATIONS:",
        "jobnr.    #modes  #successors   successors",
    ]
    for j in range(1, njobs + 1):
        succ = successors[j]
        succ_txt = "  ".join(f"{s:4d}" for s in succ)
        lines.append(f"  {j:4d}        1          {len(succ)}        {succ_txt}")
    lines += [
        "*" * 72,
        "REQUESTS/DURATIONS:",
        "jobnr. mode duration  " + "  ".join(f"R {m + 1}" for m in range(k)),
        "-" * 72,
    ]
    for j in range(1, njobs + 1):
        dem = "  ".join(f"{demands[j - 1, m]:3d}" for m in range(k))
        lines.append(f"  {j:4d}    1   {durations[j - 1]:4d}    {dem}")
    lines += [
        "*" * 72,
        "RESOURCEAVAILABILITIES:",
        "  " + "  ".join(f"R {m + 1}" for m in range(k)),
        "  " + "  ".join(f"{r:4d}" for r in limits),
        "*" * 72,
    ]
    return "\n".join(lines) + "\n"

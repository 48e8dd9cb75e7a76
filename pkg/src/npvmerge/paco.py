"""Several colonies at once, with reproducible results.

Two cooperation modes:

* ``pooled``: colonies run fully independently for the whole budget; one
  colony may be seeded with the caller's best solution. The result is the
  pool of per-colony bests, which the merge stage consumes.
* ``standalone``: colonies run in rounds of ``sync_interval`` iterations and
  at every round boundary adopt the global best as their own best-so-far if
  it beats theirs. This is the strongest pure-metaheuristic configuration.

Each colony draws from its own PCG64 stream, pre-split from the master seed
before any work starts, and results are collected by colony index. Output is
therefore identical whether colonies run serially or on any number of
workers; ``NPVMERGE_THREADS`` only caps how many processes run at a time.
Budgets are enforced at iteration boundaries, so a wall-clock limit may be
overshot by one iteration.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from npvmerge.acs import AcsParams, ColonyState, init_colony, run_iterations, _result
from npvmerge.model import Instance
from npvmerge.schedule import Permutation, Schedule, npv, permutation_from_schedule
from npvmerge.seeding import generator_from, split_sequences


@dataclass(frozen=True)
class ColonyPool:
    """Per-colony bests plus the global best across colonies (and the seed)."""

    pool: tuple[Schedule, ...]
    values: tuple[float, ...]
    permutations: tuple[Permutation, ...]
    global_best: Schedule
    global_best_value: float
    iterations: tuple[int, ...]


def thread_cap() -> int:
    """Worker limit: NPVMERGE_THREADS if set, else the machine's CPU count."""
    raw = os.environ.get("NPVMERGE_THREADS", "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"NPVMERGE_THREADS must be an integer, got {raw!r}")
    else:
        value = os.cpu_count() or 1
    return max(1, value)


def _run_pooled_colony(args) -> tuple[int, Permutation, Schedule, float, int]:
    idx, instance, params, sequence, seed_perm, iterations, deadline = args
    rng = generator_from(sequence)
    result = _result_of_run(instance, params, rng, seed_perm, iterations, deadline)
    return idx, result.permutation, result.schedule, result.value, result.iterations


def _result_of_run(instance, params, rng, seed_perm, iterations, deadline):
    state = init_colony(instance, params, rng, seed_perm)
    run_iterations(state, iterations, deadline=deadline)
    return _result(state)


def _advance_state(args) -> tuple[int, ColonyState, int]:
    idx, state, iterations, deadline = args
    done = run_iterations(state, iterations, deadline=deadline)
    return idx, state, done


def run_paco(
    instance: Instance,
    n_colonies: int,
    params: AcsParams,
    seed: int | np.random.SeedSequence,
    seed_best: Schedule | None = None,
    mode: str = "pooled",
    iterations: int | None = None,
    deadline: float | None = None,
    sync_interval: int = 50,
) -> ColonyPool:
    """Run ``n_colonies`` colonies for ``iterations`` waves each.

    ``seed`` is either the master integer seed or an already-split
    SeedSequence. ``seed_best`` (when given) seeds colony 0 and participates
    in the global best. ``deadline`` is a time.monotonic timestamp.
    """
    if n_colonies < 1:
        raise ValueError("n_colonies must be >= 1")
    if mode not in ("pooled", "standalone"):
        raise ValueError(f"unknown mode {mode!r}")
    sequence = (
        seed if isinstance(seed, np.random.SeedSequence)
        else np.random.SeedSequence(seed)
    )
    streams = split_sequences(sequence, n_colonies)
    budget = params.max_iterations if iterations is None else iterations
    seed_perm = (
        permutation_from_schedule(seed_best, instance)
        if seed_best is not None
        else None
    )
    workers = min(n_colonies, thread_cap())

    if mode == "pooled":
        jobs = [
            (i, instance, params, streams[i], seed_perm if i == 0 else None,
             budget, deadline)
            for i in range(n_colonies)
        ]
        results: list[tuple] = [None] * n_colonies  # type: ignore[list-item]
        if workers == 1:
            for job in jobs:
                out = _run_pooled_colony(job)
                results[out[0]] = out
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for out in pool.map(_run_pooled_colony, jobs):
                    results[out[0]] = out
        perms = tuple(r[1] for r in results)
        schedules = tuple(r[2] for r in results)
        values = tuple(r[3] for r in results)
        iters = tuple(r[4] for r in results)
        return _with_global_best(
            instance, schedules, values, perms, iters, seed_best
        )

    # standalone: rounds with best-solution exchange
    states = [
        init_colony(instance, params, generator_from(streams[i]),
                    seed_perm if i == 0 else None)
        for i in range(n_colonies)
    ]
    best_value = float("-inf")
    best_sched: Schedule | None = None
    best_perm: Permutation | None = None
    if seed_best is not None:
        best_sched, best_perm = seed_best, seed_perm
        best_value = npv(seed_best, instance)
    left = budget
    while left > 0:
        if deadline is not None and time.monotonic() >= deadline:
            break
        round_iters = min(sync_interval, left)
        jobs = [(i, states[i], round_iters, deadline) for i in range(n_colonies)]
        dones = [0] * n_colonies
        if workers == 1:
            for job in jobs:
                idx, state, done = _advance_state(job)
                states[idx] = state
                dones[idx] = done
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for idx, state, done in pool.map(_advance_state, jobs):
                    states[idx] = state
                    dones[idx] = done
        for state in states:
            if state.best_perm is not None and state.best_value > best_value:
                best_value = state.best_value
                best_sched = state.best_schedule
                best_perm = state.best_perm
        for state in states:
            if state.best_perm is not None and best_value > state.best_value:
                state.best_perm = best_perm
                state.best_schedule = best_sched
                state.best_value = best_value
        left -= round_iters
        if min(dones) < round_iters:
            break  # a colony hit the wall clock mid-round

    finals = [_result(state) for state in states]
    return _with_global_best(
        instance,
        tuple(r.schedule for r in finals),
        tuple(r.value for r in finals),
        tuple(r.permutation for r in finals),
        tuple(r.iterations for r in finals),
        seed_best,
    )


def _with_global_best(
    instance: Instance,
    schedules: tuple[Schedule, ...],
    values: tuple[float, ...],
    perms: tuple[Permutation, ...],
    iters: tuple[int, ...],
    seed_best: Schedule | None,
) -> ColonyPool:
    best_idx = max(range(len(values)), key=lambda i: (values[i], -i))
    best_sched, best_value = schedules[best_idx], values[best_idx]
    if seed_best is not None:
        seed_value = npv(seed_best, instance)
        if seed_value > best_value:
            best_sched, best_value = seed_best, seed_value
    return ColonyPool(
        pool=schedules,
        values=values,
        permutations=perms,
        global_best=best_sched,
        global_best_value=best_value,
        iterations=iters,
    )

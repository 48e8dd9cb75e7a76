"""Ant colony system over precedence-consistent task permutations.

The pheromone matrix ``tau`` is position-wise: ``tau[p][j]`` is the appeal of
putting task j at position p. Each ant fills positions left to right from the
eligible set (tasks whose predecessors are all placed). With probability q0
it takes the task with the highest pheromone, otherwise it samples the
eligible set proportionally to pheromone. Every selection immediately decays
the chosen entry toward ``tau_min`` (``tau := tau * rho + tau_min``), which
pushes later ants of the same wave away from repeating it; after each
iteration the best-so-far permutation is reinforced position by position
(``tau := tau * rho + reward``), whose fixed point is ``reward / (1 - rho)``.

Permutations are scored by decoding them to a schedule and taking the npv;
there is no second fitness definition anywhere in the package. When the
pheromone concentrates (convergence factor above the threshold) the matrix is
reset to ``tau0`` while the best-so-far solution is kept.
"""

from __future__ import annotations

import time
from bisect import insort
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from npvmerge.model import Instance, predecessors, successors
from npvmerge.schedule import Permutation, Schedule, decode, npv


@dataclass(frozen=True)
class AcsParams:
    n_ants: int = 10
    q0: float = 0.9
    rho: float = 0.1
    reward: float = 0.01
    tau_min: float = 0.001
    tau0: float = 0.5
    max_iterations: int = 2000
    convergence_threshold: float = 0.99


@dataclass(frozen=True)
class ColonyResult:
    permutation: Permutation
    schedule: Schedule
    value: float
    iterations: int
    trace: tuple[tuple[int, float, float], ...] = ()


@dataclass
class ColonyState:
    """Resumable colony: pheromone, RNG, and the best solution so far."""

    instance: Instance
    params: AcsParams
    tau: np.ndarray
    rng: np.random.Generator
    best_perm: Permutation | None = None
    best_schedule: Schedule | None = None
    best_value: float = float("-inf")
    iterations: int = 0
    trace: list[tuple[int, float, float]] = field(default_factory=list)


def initial_pheromone(n: int, params: AcsParams) -> np.ndarray:
    return np.full((n, n), params.tau0, dtype=np.float64)


def convergence_factor(tau: np.ndarray) -> float:
    """Mean over positions of (max pheromone / total pheromone); 1/n when flat."""
    return float(np.mean(tau.max(axis=1) / tau.sum(axis=1)))


def global_update(tau: np.ndarray, permutation: Sequence[int], params: AcsParams) -> None:
    """Reinforce the best-so-far assignment of tasks to positions."""
    idx = np.arange(len(permutation))
    perm = np.asarray(permutation, dtype=np.int64)
    tau[idx, perm] = tau[idx, perm] * params.rho + params.reward


def construct_permutation(
    instance: Instance,
    tau: np.ndarray,
    params: AcsParams,
    rng: np.random.Generator,
    greedy: bool = False,
) -> Permutation:
    """Build one precedence-consistent permutation, applying local updates.

    The eligible set is kept in ascending task id order, so pheromone ties
    resolve to the lowest id and the roulette wheel (cumulative sums, one
    uniform draw) is reproducible. With ``greedy`` the q-draw is skipped and
    the argmax rule used throughout.
    """
    n = instance.n
    preds = predecessors(instance)
    succs = successors(instance)
    remaining = [len(p) for p in preds]
    eligible = sorted(i for i in range(n) if remaining[i] == 0)
    q0, rho, tau_min = params.q0, params.rho, params.tau_min
    order: list[int] = []
    for pos in range(n):
        if len(eligible) == 1:
            pick = 0
        else:
            row = tau[pos, eligible]
            if greedy or rng.random() < q0:
                pick = int(np.argmax(row))
            else:
                wheel = np.cumsum(row)
                shot = rng.random() * wheel[-1]
                pick = min(int(np.searchsorted(wheel, shot, side="right")),
                           len(eligible) - 1)
        task = eligible.pop(pick)
        tau[pos, task] = tau[pos, task] * rho + tau_min
        order.append(task)
        for v in succs[task]:
            remaining[v] -= 1
            if remaining[v] == 0:
                insort(eligible, v)
    return tuple(order)


def init_colony(
    instance: Instance,
    params: AcsParams,
    rng: np.random.Generator,
    seed_solution: Permutation | None = None,
) -> ColonyState:
    state = ColonyState(
        instance=instance,
        params=params,
        tau=initial_pheromone(instance.n, params),
        rng=rng,
    )
    if seed_solution is not None:
        schedule = decode(seed_solution, instance)
        state.best_perm = tuple(int(t) for t in seed_solution)
        state.best_schedule = schedule
        state.best_value = npv(schedule, instance)
    return state


def run_iterations(
    state: ColonyState,
    iterations: int,
    deadline: float | None = None,
    collect_trace: bool = False,
) -> int:
    """Advance the colony; returns how many iterations actually ran.

    Stops early at the wall-clock ``deadline`` (time.monotonic reference),
    always at an iteration boundary.
    """
    instance, params = state.instance, state.params
    done = 0
    for _ in range(iterations):
        if deadline is not None and time.monotonic() >= deadline:
            break
        wave_perm: Permutation | None = None
        wave_sched: Schedule | None = None
        wave_value = float("-inf")
        for _ant in range(params.n_ants):
            perm = construct_permutation(instance, state.tau, params, state.rng)
            sched = decode(perm, instance)
            value = npv(sched, instance)
            if value > wave_value:
                wave_perm, wave_sched, wave_value = perm, sched, value
        if wave_value > state.best_value:
            state.best_perm = wave_perm
            state.best_schedule = wave_sched
            state.best_value = wave_value
        global_update(state.tau, state.best_perm, params)
        cf = convergence_factor(state.tau)
        if cf > params.convergence_threshold:
            state.tau[:] = params.tau0
        state.iterations += 1
        done += 1
        if collect_trace:
            state.trace.append((state.iterations, state.best_value, cf))
    return done


def _result(state: ColonyState) -> ColonyResult:
    if state.best_perm is None:
        # nothing ran and no seed was given: fall back to one greedy build
        perm = construct_permutation(
            state.instance, state.tau, state.params, state.rng, greedy=True
        )
        sched = decode(perm, state.instance)
        state.best_perm = perm
        state.best_schedule = sched
        state.best_value = npv(sched, state.instance)
    return ColonyResult(
        permutation=state.best_perm,
        schedule=state.best_schedule,
        value=state.best_value,
        iterations=state.iterations,
        trace=tuple(state.trace),
    )


def run_colony(
    instance: Instance,
    params: AcsParams,
    rng: np.random.Generator,
    seed_solution: Permutation | None = None,
    iterations: int | None = None,
    deadline: float | None = None,
    collect_trace: bool = False,
) -> ColonyResult:
    """Run one colony for ``iterations`` waves (default params.max_iterations).

    The best npv never decreases over iterations, and never falls below the
    value of ``seed_solution`` when one is given.
    """
    state = init_colony(instance, params, rng, seed_solution)
    budget = params.max_iterations if iterations is None else iterations
    run_iterations(state, budget, deadline=deadline, collect_trace=collect_trace)
    return _result(state)

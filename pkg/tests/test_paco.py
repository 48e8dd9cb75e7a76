"""Multi-colony coordination: pooled and synchronized standalone modes."""

import numpy as np
import pytest

from npvmerge.acs import AcsParams, run_colony
from npvmerge.model import topological_order
from npvmerge.paco import ColonyPool, _with_global_best, run_paco, thread_cap
from npvmerge.schedule import decode, npv
from npvmerge.seeding import generator_from, split_sequences

from conftest import random_tiny_instance, tight_instance


def small_params(**overrides):
    base = dict(n_ants=3, max_iterations=2000)
    base.update(overrides)
    return AcsParams(**base)


def test_thread_cap_reads_environment(monkeypatch):
    monkeypatch.delenv("NPVMERGE_THREADS", raising=False)
    assert thread_cap() >= 1
    monkeypatch.setenv("NPVMERGE_THREADS", "3")
    assert thread_cap() == 3
    monkeypatch.setenv("NPVMERGE_THREADS", "0")
    assert thread_cap() == 1
    monkeypatch.setenv("NPVMERGE_THREADS", "-2")
    assert thread_cap() == 1
    monkeypatch.setenv("NPVMERGE_THREADS", "four")
    with pytest.raises(ValueError):
        thread_cap()


def test_run_paco_validates_arguments():
    inst = random_tiny_instance(np.random.default_rng(0))
    with pytest.raises(ValueError):
        run_paco(inst, 0, small_params(), seed=1)
    with pytest.raises(ValueError):
        run_paco(inst, 2, small_params(), seed=1, mode="sideways")


def test_pooled_single_colony_matches_run_colony():
    inst = random_tiny_instance(np.random.default_rng(1))
    seq = np.random.SeedSequence(77)
    pool = run_paco(inst, 1, small_params(), seed=seq, iterations=8)
    stream = split_sequences(np.random.SeedSequence(77), 1)[0]
    solo = run_colony(inst, small_params(), generator_from(stream), iterations=8)
    assert pool.permutations[0] == solo.permutation
    assert pool.values[0] == solo.value
    assert pool.global_best_value == solo.value
    assert pool.iterations == (8,)


def test_pooled_runs_are_deterministic(monkeypatch):
    inst = random_tiny_instance(np.random.default_rng(2))
    first = run_paco(inst, 3, small_params(), seed=5, iterations=6)
    second = run_paco(inst, 3, small_params(), seed=5, iterations=6)
    assert first.values == second.values
    assert first.permutations == second.permutations


def test_pooled_results_identical_across_worker_counts(monkeypatch):
    inst = random_tiny_instance(np.random.default_rng(3))
    monkeypatch.setenv("NPVMERGE_THREADS", "1")
    serial = run_paco(inst, 3, small_params(), seed=9, iterations=5)
    monkeypatch.setenv("NPVMERGE_THREADS", "4")
    parallel = run_paco(inst, 3, small_params(), seed=9, iterations=5)
    assert serial.values == parallel.values
    assert serial.permutations == parallel.permutations
    assert serial.global_best_value == parallel.global_best_value


def test_pooled_seed_touches_only_colony_zero():
    inst = random_tiny_instance(np.random.default_rng(4))
    warm = decode(topological_order(inst), inst)
    bare = run_paco(inst, 3, small_params(), seed=21, iterations=4)
    seeded = run_paco(inst, 3, small_params(), seed=21, iterations=4, seed_best=warm)
    assert seeded.values[1:] == bare.values[1:]
    assert seeded.permutations[1:] == bare.permutations[1:]
    assert seeded.values[0] >= npv(warm, inst) - 1e-12
    assert seeded.global_best_value >= npv(warm, inst) - 1e-12


def test_global_best_is_max_of_pool():
    inst = random_tiny_instance(np.random.default_rng(5))
    pool = run_paco(inst, 4, small_params(), seed=31, iterations=5)
    assert pool.global_best_value == max(pool.values)
    assert npv(pool.global_best, inst) == pytest.approx(
        pool.global_best_value, rel=1e-12
    )


def test_with_global_best_prefers_seed_and_low_index():
    inst = random_tiny_instance(np.random.default_rng(6))
    warm = decode(topological_order(inst), inst)
    scheds = (warm, warm, warm)
    perms = (topological_order(inst),) * 3
    tied = _with_global_best(inst, scheds, (2.0, 2.0, 1.0), perms, (1, 1, 1), None)
    assert tied.global_best is scheds[0]
    seed_value = npv(warm, inst)
    boosted = _with_global_best(
        inst, scheds, (seed_value - 5.0,) * 3, perms, (1, 1, 1), warm
    )
    assert boosted.global_best_value == pytest.approx(seed_value, rel=1e-12)


def test_standalone_rounds_propagate_best_to_all_colonies():
    inst = random_tiny_instance(np.random.default_rng(7))
    pool = run_paco(
        inst, 3, small_params(), seed=41, iterations=6, mode="standalone",
        sync_interval=2,
    )
    assert isinstance(pool, ColonyPool)
    # after the final exchange every colony holds the shared best
    assert len(set(pool.values)) == 1
    assert pool.values[0] == pool.global_best_value
    assert pool.iterations == (6, 6, 6)


def test_standalone_seed_sets_floor_for_everyone():
    inst = random_tiny_instance(np.random.default_rng(8))
    warm = decode(topological_order(inst), inst)
    floor = npv(warm, inst)
    pool = run_paco(
        inst, 3, small_params(), seed=43, iterations=2, mode="standalone",
        sync_interval=1, seed_best=warm,
    )
    assert all(v >= floor - 1e-12 for v in pool.values)
    assert pool.global_best_value >= floor - 1e-12


def test_standalone_deterministic_across_worker_counts(monkeypatch):
    inst = random_tiny_instance(np.random.default_rng(9))
    monkeypatch.setenv("NPVMERGE_THREADS", "1")
    serial = run_paco(inst, 2, small_params(), seed=51, iterations=4,
                      mode="standalone", sync_interval=2)
    monkeypatch.setenv("NPVMERGE_THREADS", "4")
    parallel = run_paco(inst, 2, small_params(), seed=51, iterations=4,
                        mode="standalone", sync_interval=2)
    assert serial.values == parallel.values
    assert serial.permutations == parallel.permutations


def test_colonies_explore_differently_on_contested_instances():
    inst = tight_instance(np.random.default_rng(10), 20)
    pool = run_paco(inst, 3, small_params(n_ants=4), seed=61, iterations=3)
    assert len(set(pool.permutations)) > 1

"""NPV evaluation, feasibility reports, encoding, and the list decoder."""

import math

import numpy as np
import pytest

from npvmerge.model import Instance, Task, validate_instance, weekly_discount_rate
from npvmerge.schedule import (
    DecodeError,
    Schedule,
    check_feasible,
    completion_times,
    decode,
    discount_table,
    encode_binary,
    npv,
    permutation_from_schedule,
    resource_profile,
    schedule_from_completions,
    validate_permutation,
)

from conftest import (
    make_instance,
    random_linear_extension,
    random_slack_instance,
    random_tiny_instance,
)
from oracles import brute_force_best, ref_npv_instance


def test_npv_single_task_closed_form():
    inst = Instance(
        "one", (Task(2, 1000.0, (0,)),), (1,), (), deadline=4, discount=math.log(2)
    )
    assert npv(Schedule((0,)), inst) == pytest.approx(250.0, rel=1e-12)


def test_npv_zero_tasks_is_zero():
    inst = Instance("none", (), (1,), (), deadline=3, discount=0.5)
    assert npv(Schedule(()), inst) == 0.0


def test_npv_two_task_weekly_rate_example():
    # starts (0, 9), unit durations: value is 100 e^{-a} - 100 e^{-10a}
    rate = weekly_discount_rate()
    inst = Instance(
        "two",
        (Task(1, 100.0, (0,)), Task(1, -100.0, (0,))),
        (1,),
        (),
        deadline=10,
        discount=rate,
    )
    expected = 100.0 * math.exp(-rate) - 100.0 * math.exp(-10.0 * rate)
    value = npv(Schedule((0, 9)), inst)
    assert value == pytest.approx(expected, rel=1e-12)
    assert value == pytest.approx(0.8404933243785706, rel=1e-12)


def test_npv_matches_scalar_reference_on_random_instances():
    for seed in range(30):
        rng = np.random.default_rng(1000 + seed)
        inst = random_tiny_instance(rng)
        starts = tuple(
            int(rng.integers(0, max(1, inst.deadline - d + 1)))
            for d in inst.durations()
        )
        sched = Schedule(starts)
        assert npv(sched, inst) == pytest.approx(
            ref_npv_instance(starts, inst), rel=1e-12
        )


def test_npv_defined_for_out_of_window_schedules():
    inst = make_instance(
        durations=(2, 3),
        cashflows=(100.0, -50.0),
        demands=((0,), (0,)),
        limits=(1,),
        deadline=6,
        discount=0.01,
    )
    late = Schedule((10, 20))
    expected = 100.0 * math.exp(-0.01 * 12) - 50.0 * math.exp(-0.01 * 23)
    assert npv(late, inst) == pytest.approx(expected, rel=1e-12)
    early = Schedule((-4, 0))
    expected2 = 100.0 * math.exp(-0.01 * -2) - 50.0 * math.exp(-0.01 * 3)
    assert npv(early, inst) == pytest.approx(expected2, rel=1e-12)


def test_discount_table_matches_math_exp():
    inst = make_instance(
        durations=(1,),
        cashflows=(1.0,),
        demands=((0,),),
        limits=(1,),
        deadline=9,
        discount=0.003,
    )
    table = discount_table(inst)
    assert len(table) == 10
    for t in range(10):
        assert table[t] == math.exp(-0.003 * t)


# ---------------------------------------------------------------------------
# Feasibility reports
# ---------------------------------------------------------------------------


def test_check_feasible_accepts_tight_chain():
    inst = make_instance(
        durations=(2, 1),
        cashflows=(1.0, 1.0),
        demands=((1,), (1,)),
        limits=(2,),
        precedence=((0, 1),),
        deadline=5,
    )
    report = check_feasible(Schedule((0, 2)), inst)
    assert report.ok
    assert report.violations == ()


def test_check_feasible_flags_precedence():
    inst = make_instance(
        durations=(2, 1),
        cashflows=(1.0, 1.0),
        demands=((1,), (1,)),
        limits=(2,),
        precedence=((0, 1),),
        deadline=5,
    )
    report = check_feasible(Schedule((0, 1)), inst)
    assert not report.ok
    assert ("precedence", (0, 1)) in [(v.kind, v.detail) for v in report.violations]


def test_check_feasible_flags_resource_overload():
    inst = make_instance(
        durations=(1, 1),
        cashflows=(1.0, 1.0),
        demands=((1,), (1,)),
        limits=(1,),
        deadline=10,
    )
    report = check_feasible(Schedule((3, 3)), inst)
    assert [(v.kind, v.detail) for v in report.violations] == [("resource", (0, 3))]


def test_check_feasible_flags_deadline_and_negative_start():
    inst = make_instance(
        durations=(1, 1),
        cashflows=(1.0, 1.0),
        demands=((1,), (1,)),
        limits=(1,),
        deadline=10,
    )
    for bad in (Schedule((0, 10)), Schedule((0, -1))):
        report = check_feasible(bad, inst)
        assert [v.kind for v in report.violations] == ["deadline"]
        assert report.violations[0].detail == (1,)


def test_check_feasible_rejects_wrong_length():
    inst = make_instance(
        durations=(1,), cashflows=(1.0,), demands=((1,),), limits=(1,), deadline=2
    )
    with pytest.raises(ValueError):
        check_feasible(Schedule((0, 0)), inst)


def test_resource_profile_counts_active_tasks():
    inst = make_instance(
        durations=(2, 2),
        cashflows=(1.0, 1.0),
        demands=((1, 0), (2, 1)),
        limits=(3, 1),
        deadline=5,
    )
    usage = resource_profile(Schedule((0, 1)), inst)
    assert usage.shape == (2, 5)
    assert usage[0].tolist() == [1, 3, 2, 0, 0]
    assert usage[1].tolist() == [0, 1, 1, 0, 0]


# ---------------------------------------------------------------------------
# Binary encoding
# ---------------------------------------------------------------------------


def test_encode_binary_rows():
    one = make_instance(
        durations=(1,), cashflows=(1.0,), demands=((0,),), limits=(1,), deadline=3
    )
    assert encode_binary(Schedule((0,)), one).tolist() == [[1, 1, 1]]
    two = make_instance(
        durations=(2,), cashflows=(1.0,), demands=((0,),), limits=(1,), deadline=5
    )
    assert encode_binary(Schedule((1,)), two).tolist() == [[0, 0, 1, 1, 1]]


def test_encode_binary_completion_at_five_over_eleven_columns():
    inst = make_instance(
        durations=(1,), cashflows=(1.0,), demands=((0,),), limits=(1,), deadline=11
    )
    row = encode_binary(Schedule((4,)), inst)[0]
    assert row.tolist() == [0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1]


def test_encode_binary_rejects_off_window_schedules():
    inst = make_instance(
        durations=(2,), cashflows=(1.0,), demands=((0,),), limits=(1,), deadline=4
    )
    with pytest.raises(ValueError):
        encode_binary(Schedule((3,)), inst)
    with pytest.raises(ValueError):
        encode_binary(Schedule((-1,)), inst)


def test_encode_binary_monotone_rows_and_round_trip():
    for seed in range(20):
        rng = np.random.default_rng(2000 + seed)
        inst = random_slack_instance(rng)
        perm = random_linear_extension(rng, inst)
        sched = decode(perm, inst)
        x = np.ascontiguousarray(encode_binary(sched, inst))
        assert x.shape == (inst.n, inst.deadline)
        assert (np.diff(x.astype(np.int8), axis=1) >= 0).all()
        assert (x[:, -1] == 1).all()
        for i, d in enumerate(inst.durations()):
            assert (x[i, : d - 1] == 0).all()
        completions = np.argmax(x, axis=1) + 1
        assert completions.tolist() == np.asarray(completion_times(sched, inst)).tolist()
        back = schedule_from_completions(completions.tolist(), inst)
        assert back == sched


# ---------------------------------------------------------------------------
# Decoder
# ---------------------------------------------------------------------------


def test_decode_places_positive_early_negative_late():
    inst = make_instance(
        durations=(1, 1),
        cashflows=(100.0, -100.0),
        demands=((1,), (1,)),
        limits=(1,),
        deadline=10,
        discount=weekly_discount_rate(),
    )
    assert decode((0, 1), inst).starts == (0, 9)
    assert decode((1, 0), inst).starts == (0, 9)


def test_decode_single_task_direction_follows_sign():
    pos = make_instance(
        durations=(2,), cashflows=(5.0,), demands=((1,),), limits=(1,), deadline=7
    )
    neg = make_instance(
        durations=(2,), cashflows=(-5.0,), demands=((1,),), limits=(1,), deadline=7
    )
    assert decode((0,), pos).starts == (0,)
    assert decode((0,), neg).starts == (5,)


def test_decode_chain_of_gains_runs_earliest():
    inst = make_instance(
        durations=(2, 3),
        cashflows=(10.0, 10.0),
        demands=((1,), (1,)),
        limits=(1,),
        precedence=((0, 1),),
        deadline=9,
    )
    assert decode((0, 1), inst).starts == (0, 2)


def test_decode_raises_when_nothing_fits():
    inst = make_instance(
        durations=(1, 1),
        cashflows=(1.0, 1.0),
        demands=((1,), (1,)),
        limits=(1,),
        deadline=1,
    )
    with pytest.raises(DecodeError):
        decode((0, 1), inst)


def test_decode_is_deterministic_and_feasible_on_random_instances():
    for seed in range(40):
        rng = np.random.default_rng(3000 + seed)
        inst = random_slack_instance(rng)
        validate_instance(inst, solve_ready=True)
        perm = random_linear_extension(rng, inst)
        first = decode(perm, inst)
        second = decode(perm, inst)
        assert first == second
        assert check_feasible(first, inst).ok


def test_decode_never_beats_exhaustive_optimum_on_tiny_instances():
    from itertools import permutations

    for seed in range(8):
        rng = np.random.default_rng(4000 + seed)
        inst = random_tiny_instance(rng, max_n=3, max_delta=8)
        best, _ = brute_force_best(inst)
        assert best is not None
        for perm in permutations(range(inst.n)):
            try:
                validate_permutation(perm, inst)
            except ValueError:
                continue
            value = npv(decode(perm, inst), inst)
            assert value <= best + 1e-9


# ---------------------------------------------------------------------------
# Permutation helpers
# ---------------------------------------------------------------------------


def test_validate_permutation_errors():
    inst = make_instance(
        durations=(1, 1),
        cashflows=(1.0, 1.0),
        demands=((1,), (1,)),
        limits=(2,),
        precedence=((0, 1),),
        deadline=4,
    )
    validate_permutation((0, 1), inst)
    with pytest.raises(ValueError):
        validate_permutation((1, 0), inst)  # successor before predecessor
    with pytest.raises(ValueError):
        validate_permutation((0,), inst)
    with pytest.raises(ValueError):
        validate_permutation((0, 0), inst)


def test_permutation_from_schedule_sorts_by_start_then_id():
    inst = make_instance(
        durations=(1, 1, 1),
        cashflows=(1.0, 1.0, 1.0),
        demands=((0,), (0,), (0,)),
        limits=(1,),
        deadline=9,
    )
    assert permutation_from_schedule(Schedule((3, 0, 3)), inst) == (1, 0, 2)


def test_schedule_from_completions_inverts_completion_times():
    inst = make_instance(
        durations=(2, 3),
        cashflows=(1.0, 1.0),
        demands=((0,), (0,)),
        limits=(1,),
        deadline=8,
    )
    sched = schedule_from_completions((5, 8), inst)
    assert sched.starts == (3, 5)
    assert np.asarray(completion_times(sched, inst)).tolist() == [5, 8]

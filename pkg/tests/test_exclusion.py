"""開始区間・完全回帰での除外・世代ループのテスト"""

import dataclasses
import math
from pathlib import Path

import pytest

from quadlab.dynamics.core import critical_orbit, critical_values
from quadlab.dynamics.partition import PartitionConfig
from quadlab.pipeline.exclusion import (
    RETIRE_BUDGET,
    RETIRE_RESOLUTION,
    IntervalTag,
    ParamInterval,
    advance_to_complete,
    basic_assumption_violation,
    calibrate_tau,
    decay_bound,
    exclude_at_complete,
    m_sequence,
    run,
    startup,
)
from quadlab.pipeline.run_config import RunConfig, StartupSpec, load_experiment_config
from quadlab.series.rates import RateSequence, log_star
from quadlab.utils.errors import BudgetExhausted, DomainError, RateNotDefined, StartupRejected

PERIOD_THREE_ROOT = 1.7548776662466927


class TestParamInterval:
    def test_rejects_empty(self) -> None:
        with pytest.raises(ValueError):
            ParamInterval(1.8, 1.8, 3, IntervalTag.N)

    def test_rejects_outside_parameter_range(self) -> None:
        with pytest.raises(DomainError):
            ParamInterval(1.9, 2.1, 3, IntervalTag.N)


class TestMSequence:
    def test_example(self) -> None:
        assert m_sequence(100, 1.0, 2).times == [100, 105, 110]

    def test_ratio_bound(self) -> None:
        sequence = m_sequence(100, 5.0, 50)
        assert sequence.ratio_bound_holds
        assert all(b > a for a, b in zip(sequence.times, sequence.times[1:]))

    @pytest.mark.parametrize("m0, kappa, K", [(100, 0.0, 2), (1, 1.0, 2), (100, 1.0, -1)])
    def test_rejects_bad_arguments(self, m0: int, kappa: float, K: int) -> None:
        with pytest.raises(ValueError):
            m_sequence(m0, kappa, K)


class TestDecayBound:
    def test_empty_product(self, rate: RateSequence) -> None:
        assert decay_bound([], rate, 0.5) == 1.0

    def test_single_factor(self, rate: RateSequence) -> None:
        # log*(100) = 3
        assert decay_bound([100], rate, 0.5) == pytest.approx(1.0 - 0.01 * 0.5**27, rel=1e-15)

    def test_matches_naive_product(self, rate: RateSequence) -> None:
        ms = list(range(2, 1002))
        naive = math.prod(1.0 - rate.value(m) * 0.5 ** (log_star(m) ** 3) for m in ms)
        assert decay_bound(ms, rate, 0.5) == pytest.approx(naive, rel=1e-12)

    def test_monotone_in_length_and_tau(self, rate: RateSequence) -> None:
        ms = list(range(2, 40))
        assert decay_bound(ms[:20], rate, 0.5) >= decay_bound(ms, rate, 0.5)
        assert decay_bound(ms, rate, 0.5) > decay_bound(ms, rate, 0.6)

    def test_rejects_tau_one(self, rate: RateSequence) -> None:
        with pytest.raises(ValueError):
            decay_bound([10], rate, 1.0)

    def test_nonpositive_factor(self, rate: RateSequence) -> None:
        # log*(1) = 0 なので因子は 1 − δ_1 = 0
        with pytest.raises(DomainError):
            decay_bound([1], rate, 0.5)

    def test_undefined_rate(self) -> None:
        with pytest.raises(RateNotDefined):
            decay_bound([2], RateSequence.from_spec("loglog"), 0.5)


class TestCalibrateTau:
    def test_no_factors(self, rate: RateSequence) -> None:
        assert calibrate_tau([], rate) is None

    def test_tight_factor(self, rate: RateSequence) -> None:
        tau = calibrate_tau([(1.0 - 1e-6, 100)], rate)
        assert tau is not None
        assert tau == pytest.approx(1e-4 ** (1.0 / 27.0), rel=1e-6)
        assert decay_bound([100], rate, tau) == pytest.approx(1.0 - 1e-6, rel=1e-12)

    def test_capped_below_one(self, rate: RateSequence) -> None:
        tau = calibrate_tau([(0.9, 100)], rate)
        assert tau is not None and tau < 1.0

    def test_no_loss_gives_zero(self, rate: RateSequence) -> None:
        assert calibrate_tau([(1.0, 100)], rate) == 0.0


class TestStartup:
    def test_expansion_time_at_two(self, small_run_config: RunConfig) -> None:
        # ∂ₐξ_j(2) = −(4^{j−1} − 1)/3 なので像の長さが S を超えるのは j ≈ 14
        result = startup(2.0, small_run_config)
        assert abs(result.m0 - 14) <= 1
        assert result.omega0.hi == 2.0
        assert result.omega0.m == result.m0
        assert result.omega0.tag is IntervalTag.START
        assert result.monotone
        assert not result.degenerate

    def test_shrinks_epsilon_for_late_start(self, small_run_config: RunConfig) -> None:
        conf = dataclasses.replace(small_run_config, m0=16)
        result = startup(2.0, conf)
        assert result.m0 >= 16
        assert result.epsilon < 1e-9
        assert not result.degenerate

    def test_degenerate_start_is_reported(self, small_run_config: RunConfig) -> None:
        conf = dataclasses.replace(small_run_config, m0=8)
        result = startup(2.0, conf, StartupSpec(epsilon=0.5, shrink=False))
        assert result.m0 == 2
        assert result.degenerate
        assert (result.omega0.lo, result.omega0.hi) == (1.5, 2.0)

    def test_rejects_critical_hit(self, small_run_config: RunConfig) -> None:
        with pytest.raises(StartupRejected):
            startup(1.0, small_run_config)


class TestAdvanceToComplete:
    def test_immediate_complete_return(self, small_run_config: RunConfig) -> None:
        omega = ParamInterval(1.74, 1.77, 2, IntervalTag.N)
        result = advance_to_complete(omega, small_run_config)
        assert result.complete_n == 3
        assert result.completed is not None
        assert (result.completed.lo, result.completed.hi) == (1.74, 1.77)
        assert result.events[-1].kind.value == "complete"
        assert not result.time_violation

    def test_budget_exhaustion_keeps_partial_result(self, small_run_config: RunConfig) -> None:
        conf = dataclasses.replace(small_run_config, max_steps=1)
        omega = ParamInterval(2.0 - 1e-9, 2.0, 14, IntervalTag.START)
        with pytest.raises(BudgetExhausted) as info:
            advance_to_complete(omega, conf)
        partial = info.value.result
        assert partial.retire_reason == RETIRE_BUDGET
        assert partial.retired is not None

    def test_unresolvable_interval_is_retired(self, small_run_config: RunConfig) -> None:
        omega = ParamInterval(2.0 - 1e-15, 2.0, 2, IntervalTag.N)
        result = advance_to_complete(omega, small_run_config)
        assert result.retire_reason == RETIRE_RESOLUTION
        assert result.completed is None


class TestExcludeAtComplete:
    def test_whole_interval_in_core(self, cfg: PartitionConfig, rate: RateSequence) -> None:
        omega = ParamInterval(1.74, 1.77, 2, IntervalTag.N)
        result = exclude_at_complete(omega, 3, rate, cfg)
        assert [(e.lo, e.hi) for e in result.excluded] == [(1.74, 1.77)]
        assert result.survivors == []

    def test_image_missing_core(self, cfg: PartitionConfig, rate: RateSequence) -> None:
        omega = ParamInterval(1.9, 1.95, 1, IntervalTag.N)
        result = exclude_at_complete(omega, 2, rate, cfg)
        assert result.excluded == []
        assert len(result.survivors) == 1
        assert result.survivors[0].tag is IntervalTag.T
        assert result.survivors[0].m == 2

    def test_partial_exclusion_tiles_interval(
        self, cfg: PartitionConfig, rate: RateSequence
    ) -> None:
        omega = ParamInterval(1.7, 1.8, 2, IntervalTag.N)
        result = exclude_at_complete(omega, 3, rate, cfg)
        assert len(result.excluded) == 1
        hole = result.excluded[0]
        assert hole.lo < PERIOD_THREE_ROOT < hole.hi
        total = sum(e.length for e in result.excluded) + sum(w.length for w in result.survivors)
        assert total == pytest.approx(0.1, rel=1e-12)
        core = rate.value(3) / 3.0
        for survivor in result.survivors:
            assert survivor.tag is IntervalTag.T
            assert survivor.m == 3
            values = critical_values([survivor.lo, survivor.midpoint, survivor.hi], 3)
            assert all(abs(v) >= core for v in values)


class TestBasicAssumption:
    def test_detects_near_return(self, rate: RateSequence) -> None:
        omega = ParamInterval(1.7, 1.8, 3, IntervalTag.N)
        assert basic_assumption_violation(omega, 2, rate) == 3

    def test_orbit_near_fixed_point_is_fine(self, rate: RateSequence) -> None:
        omega = ParamInterval(2.0 - 1e-6, 2.0, 8, IntervalTag.N)
        assert basic_assumption_violation(omega, 2, rate) is None


class TestRun:
    def test_zero_generations(self, small_run_config: RunConfig) -> None:
        conf = dataclasses.replace(small_run_config, max_generations=0)
        result = run(conf, 2.0)
        assert len(result.states) == 1
        assert result.states[0].measure == result.startup.omega0.length
        assert result.decay.rows == []

    @pytest.fixture
    def result(self, small_run_config: RunConfig):
        return run(small_run_config, 2.0)

    def test_measure_is_conserved(self, result) -> None:
        initial = result.states[0].measure
        for state in result.states:
            assert state.measure + state.excluded + state.retired == pytest.approx(
                initial, rel=1e-9
            )

    def test_measure_never_grows(self, result) -> None:
        measures = [state.measure for state in result.states]
        assert all(b <= a * (1.0 + 1e-12) for a, b in zip(measures, measures[1:]))

    def test_intervals_are_sorted_disjoint_and_nested(self, result) -> None:
        for previous, state in zip(result.states, result.states[1:]):
            intervals = state.intervals
            assert all(a.hi <= b.lo for a, b in zip(intervals, intervals[1:]))
            for w in intervals:
                assert any(p.lo <= w.lo and w.hi <= p.hi for p in previous.intervals)

    def test_survivors_keep_the_basic_assumption(self, result, rate: RateSequence) -> None:
        m0 = result.startup.m0
        for w in result.states[-1].intervals:
            for a in (w.lo, w.midpoint, w.hi):
                orbit = critical_orbit(a, w.m)
                for j in range(max(m0, 1), w.m + 1):
                    assert abs(orbit[j]) >= rate.value(j) / 3.0 - 1e-15

    def test_decay_rows_hold(self, result) -> None:
        assert len(result.decay.rows) == len(result.states) - 1
        for row in result.decay.rows:
            assert row.holds
            assert 0.0 < row.bound <= 1.0
        assert 0.0 <= result.decay.time_violation_fraction <= 1.0

    def test_threads_do_not_change_the_result(self, small_run_config: RunConfig, result) -> None:
        threaded = run(small_run_config, 2.0, workers=2)

        def signature(r):
            return [
                (s.measure, [(w.lo, w.hi, w.m) for w in s.intervals]) for s in r.states
            ]

        assert signature(threaded) == signature(result)


class TestFixtureRun:
    """configs/fixture.yaml の 10 世代を通した性質"""

    @pytest.fixture(scope="class")
    def result(self):
        path = Path(__file__).resolve().parent.parent / "configs" / "fixture.yaml"
        experiment = load_experiment_config(path)
        return run(experiment.run, experiment.a0, startup_spec=experiment.startup)

    def test_runs_ten_generations(self, result) -> None:
        assert [state.k for state in result.states] == list(range(11))

    def test_generations_are_nested(self, result) -> None:
        for previous, state in zip(result.states, result.states[1:]):
            intervals = state.intervals
            assert all(a.hi <= b.lo for a, b in zip(intervals, intervals[1:]))
            for w in intervals:
                assert any(p.lo <= w.lo and w.hi <= p.hi for p in previous.intervals)

    def test_lengths_are_conserved(self, result) -> None:
        initial = result.states[0].measure
        for state in result.states:
            assert state.measure + state.excluded + state.retired == pytest.approx(
                initial, rel=1e-9
            )
        retired = math.fsum(result.retired_by_reason.values())
        assert retired == pytest.approx(result.states[-1].retired, rel=1e-9, abs=1e-15)

    def test_basic_assumption_replays_on_survivors(self, result) -> None:
        rate = RateSequence.from_spec("power:1")
        for state in result.states[1:]:
            for w in state.intervals:
                assert basic_assumption_violation(w, result.startup.m0, rate) is None

    def test_measure_decays_under_calibrated_bound(self, result) -> None:
        measures = [state.measure for state in result.states]
        assert all(b <= a * (1.0 + 1e-12) for a, b in zip(measures, measures[1:]))
        for row in result.decay.rows:
            assert row.survival_ratio <= row.calibrated_bound * (1.0 + 1e-12)

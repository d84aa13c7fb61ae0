"""区間像のサンプリングと分割のテスト"""

import numpy as np
import pytest

from quadlab.dynamics.core import critical_values
from quadlab.dynamics.partition import PartitionConfig, large_scale, slice_length
from quadlab.pipeline.run_config import SamplingSpec
from quadlab.pipeline.sampling import ImageTracker, covered_length, local_resolution

# ξ_3(a) = 1 − a(1−a)² の根（周期 3 の超吸引パラメータ）
PERIOD_THREE_ROOT = 1.7548776662466927


@pytest.fixture
def spec() -> SamplingSpec:
    return SamplingSpec(base_points=5, max_points=65)


def test_local_resolution(cfg: PartitionConfig) -> None:
    outside = local_resolution(np.array([0.5]), np.array([0.6]), cfg)
    assert outside[0] == pytest.approx(large_scale(cfg))
    inside = local_resolution(np.array([0.01]), np.array([0.011]), cfg)
    assert inside[0] == pytest.approx(slice_length(4))
    at_zero = local_resolution(np.array([0.0]), np.array([0.001]), cfg)
    assert at_zero[0] == pytest.approx(slice_length(cfg.r_max))


class TestImageTracker:
    def test_rejects_empty_interval(self, cfg: PartitionConfig, spec: SamplingSpec) -> None:
        with pytest.raises(ValueError):
            ImageTracker(1.9, 1.9, 2, cfg, spec)

    def test_steps_match_direct_evaluation(self, cfg: PartitionConfig, spec: SamplingSpec) -> None:
        tracker = ImageTracker(1.9, 1.95, 3, cfg, spec)
        for _ in range(5):
            tracker.step()
            tracker.refine()
        assert tracker.n == 8
        assert np.array_equal(tracker.values, critical_values(tracker.params, 8))

    def test_refine_respects_budget(self, cfg: PartitionConfig, spec: SamplingSpec) -> None:
        tracker = ImageTracker(1.5, 2.0, 12, cfg, spec)
        added = tracker.refine()
        assert added > 0
        assert tracker.size <= spec.max_points
        assert np.all(np.diff(tracker.params) > 0.0)
        assert (tracker.lo, tracker.hi) == (1.5, 2.0)

    def test_refine_stops_when_resolved(self, cfg: PartitionConfig, spec: SamplingSpec) -> None:
        tracker = ImageTracker(1.99, 1.99 + 1e-9, 2, cfg, spec)
        assert tracker.refine() == 0

    def test_restrict_keeps_endpoints(self, cfg: PartitionConfig, spec: SamplingSpec) -> None:
        tracker = ImageTracker(1.5, 2.0, 4, cfg, spec)
        tracker.restrict(1.6, 1.8)
        assert (tracker.lo, tracker.hi) == (1.6, 1.8)
        assert np.array_equal(tracker.values, critical_values(tracker.params, 4))

    def test_pick_includes_endpoints(self, cfg: PartitionConfig, spec: SamplingSpec) -> None:
        tracker = ImageTracker(1.5, 2.0, 4, cfg, spec)
        picked = tracker.pick(3)
        assert picked[0] == 1.5 and picked[-1] == 2.0
        assert picked.size == 3


class TestSplit:
    def test_boundary_located_by_bisection(self, cfg: PartitionConfig, spec: SamplingSpec) -> None:
        tracker = ImageTracker(1.5, 2.0, 3, cfg, spec)
        runs = tracker.split(lambda x: x > 0.0)
        assert [run.key for run in runs] == [True, False]
        assert runs[0].lo == 1.5 and runs[-1].hi == 2.0
        assert runs[0].hi == runs[1].lo
        assert runs[0].hi == pytest.approx(PERIOD_THREE_ROOT, abs=1e-9)
        assert covered_length(runs) == pytest.approx(0.5, rel=1e-15)

    def test_absorbing_side_takes_the_straddle(
        self, cfg: PartitionConfig, spec: SamplingSpec
    ) -> None:
        tracker = ImageTracker(1.5, 2.0, 3, cfg, spec)
        runs = tracker.split(lambda x: x > 0.0, absorbing=lambda key: key is True)
        assert runs[0].hi == runs[1].params[0]
        assert runs[0].hi == pytest.approx(PERIOD_THREE_ROOT, abs=1e-9)

    def test_single_key_is_one_run(self, cfg: PartitionConfig, spec: SamplingSpec) -> None:
        tracker = ImageTracker(1.9, 2.0, 2, cfg, spec)
        runs = tracker.split(lambda x: "neg" if x < 0.0 else "pos")
        assert len(runs) == 1
        assert runs[0].key == "neg"
        assert runs[0].outermost == pytest.approx(1.0)

"""臨界窓の分割のテスト"""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadlab.dynamics.partition import (
    Interval,
    Location,
    PartitionConfig,
    PartitionIndex,
    depth_of,
    interval_of,
    large_scale,
    locate,
    mirror,
    slice_length,
    subinterval_of,
)
from quadlab.utils.errors import ConfigError, RNotInPartition


class TestPartitionConfig:
    def test_delta_and_depth_range(self, cfg: PartitionConfig) -> None:
        assert cfg.delta == math.exp(-3.0)
        assert cfg.r_min == 3

    @pytest.mark.parametrize("epsilon1", [1.0 / 9.0, 0.05, 0.0])
    def test_rejects_small_scale_factor(self, epsilon1: float) -> None:
        with pytest.raises(ConfigError) as excinfo:
            PartitionConfig(delta_exponent=3.0, epsilon1=epsilon1)
        assert excinfo.value.path == "epsilon1"

    @pytest.mark.parametrize("delta_exponent", [0.0, -1.0, math.inf])
    def test_rejects_bad_delta(self, delta_exponent: float) -> None:
        with pytest.raises(ConfigError):
            PartitionConfig(delta_exponent=delta_exponent, epsilon1=0.9)

    def test_rejects_r_max_below_window(self) -> None:
        with pytest.raises(ConfigError):
            PartitionConfig(delta_exponent=3.0, epsilon1=0.2, r_max=2)

    def test_large_scale(self, cfg: PartitionConfig) -> None:
        assert large_scale(cfg) == pytest.approx(0.2 * math.exp(-3.0), rel=1e-15)


class TestPartitionIndex:
    def test_rejects_zero_depth(self) -> None:
        with pytest.raises(RNotInPartition):
            PartitionIndex(0, 0)

    @pytest.mark.parametrize("l", [-1, 16])
    def test_rejects_slice_out_of_range(self, l: int) -> None:
        with pytest.raises(RNotInPartition):
            PartitionIndex(4, l)

    def test_mirror_is_involution(self) -> None:
        idx = PartitionIndex(7, 11)
        assert mirror(idx) == PartitionIndex(-7, 11)
        assert mirror(mirror(idx)) == idx
        assert idx.label == "7:11"
        assert mirror(idx).side == -1


class TestIntervals:
    def test_positive_depth(self, cfg: PartitionConfig) -> None:
        assert interval_of(4, cfg) == Interval(math.exp(-5), math.exp(-4))

    def test_negative_depth_is_mirror(self, cfg: PartitionConfig) -> None:
        assert interval_of(-4, cfg) == Interval(-math.exp(-4), -math.exp(-5))

    @pytest.mark.parametrize("r", [2, -2, 1, 61])
    def test_depth_outside_partition(self, r: int) -> None:
        with pytest.raises(RNotInPartition):
            interval_of(r, PartitionConfig(3.0, 0.2, r_max=60))

    def test_first_and_last_slices(self, cfg: PartitionConfig) -> None:
        first = subinterval_of(PartitionIndex(4, 0), cfg)
        last = subinterval_of(PartitionIndex(4, 15), cfg)
        width = (math.exp(-4) - math.exp(-5)) / 16
        assert first.lo == math.exp(-5)
        assert first.length == pytest.approx(width, rel=1e-12)
        assert last.hi == math.exp(-4)
        assert slice_length(4) == pytest.approx(width, rel=1e-15)

    @pytest.mark.parametrize("r", [3, 4, 10, 25, 60])
    def test_slices_tile_the_interval(self, cfg: PartitionConfig, r: int) -> None:
        whole = interval_of(r, cfg)
        slices = [subinterval_of(PartitionIndex(r, l), cfg) for l in range(r * r)]
        assert slices[0].lo == whole.lo
        assert slices[-1].hi == whole.hi
        for left, right in zip(slices, slices[1:]):
            assert left.hi == right.lo
        total = math.fsum(s.length for s in slices)
        assert total == pytest.approx(whole.length, rel=1e-12)


class TestLocate:
    def test_example_point(self, cfg: PartitionConfig) -> None:
        idx = locate(0.01, cfg)
        assert isinstance(idx, PartitionIndex)
        assert idx.r == 4
        # スライス境界の総当たりと一致する
        expected = next(
            l
            for l in range(16)
            if subinterval_of(PartitionIndex(4, l), cfg).lo
            < 0.01
            <= subinterval_of(PartitionIndex(4, l), cfg).hi
        )
        assert idx.l == expected

    def test_right_endpoint_belongs_to_its_own_depth(self, cfg: PartitionConfig) -> None:
        assert locate(math.exp(-5), cfg) == PartitionIndex(5, 24)

    def test_symmetry(self, cfg: PartitionConfig) -> None:
        idx = locate(0.01, cfg)
        assert isinstance(idx, PartitionIndex)
        assert locate(-0.01, cfg) == mirror(idx)

    def test_special_points(self, cfg: PartitionConfig) -> None:
        assert locate(0.0, cfg) is Location.CRITICAL_POINT
        assert locate(0.5, cfg) is Location.OUTSIDE
        assert locate(-0.9, cfg) is Location.OUTSIDE

    def test_points_deeper_than_r_max_are_clamped(self) -> None:
        cfg = PartitionConfig(3.0, 0.2, r_max=60)
        assert locate(math.exp(-80), cfg) == PartitionIndex(60, 0)
        assert locate(-math.exp(-80), cfg) == PartitionIndex(-60, 0)

    def test_sliver_above_first_depth_is_outside(self) -> None:
        cfg = PartitionConfig(3.5, 0.2)
        assert locate(math.exp(-3.8), cfg) is Location.OUTSIDE
        assert isinstance(locate(math.exp(-4.2), cfg), PartitionIndex)

    def test_inflated_window(self, cfg: PartitionConfig) -> None:
        x = 1.5 * cfg.delta
        assert locate(x, cfg) is Location.OUTSIDE
        idx = locate(x, cfg, inflation=3.0)
        assert isinstance(idx, PartitionIndex)
        assert idx.r == 2

    @pytest.mark.parametrize("r", range(3, 51))
    def test_slice_midpoints_round_trip(self, cfg: PartitionConfig, r: int) -> None:
        for l in range(r * r):
            idx = PartitionIndex(r, l)
            piece = subinterval_of(idx, cfg)
            assert locate(piece.midpoint, cfg) == idx
            assert locate(-piece.midpoint, cfg) == mirror(idx)
            assert locate(piece.hi, cfg) == idx


@given(st.floats(min_value=1e-250, max_value=math.exp(-3.0)))
@settings(max_examples=500, deadline=None)
def test_located_slice_contains_point(x: float) -> None:
    cfg = PartitionConfig(delta_exponent=3.0, epsilon1=0.2)
    idx = locate(x, cfg)
    assert isinstance(idx, PartitionIndex)
    assert idx.r == depth_of(x)
    piece = subinterval_of(idx, cfg)
    assert piece.lo < x <= piece.hi

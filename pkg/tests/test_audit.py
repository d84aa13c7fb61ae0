"""数値監査とフィクスチャ読み込みのテスト"""

import dataclasses
import math
from pathlib import Path
from typing import Any, Dict, List

import pytest

from quadlab.pipeline.audit import (
    AUDITS,
    AuditContext,
    AuditFixtures,
    _fit_and_hold,
    _within_budget,
    audit_bound_length,
    audit_return_time,
    load_fixtures,
    parse_fixtures,
    run_audits,
)
from quadlab.pipeline.run_config import AuditSettings
from quadlab.utils.errors import FixtureError

STABLE_CHECKS = ["bounded-distortion", "essential-budget", "bound-length", "phase-parameter"]


@pytest.fixture
def small_fixtures() -> AuditFixtures:
    return parse_fixtures(
        {
            "parameters": [2.0],
            "depths": [8, 9, 10, 11, 12, 13],
            "kappa2": [1.5, 2.0],
            "window_starts": [10, 12, 14, 16],
            "eta_samples": 17,
        }
    )


def test_load_repository_fixtures(fixtures_file: Path) -> None:
    fixtures = load_fixtures(fixtures_file)
    assert fixtures.parameters[0] == 2.0
    assert fixtures.depths[0] == 8 and len(fixtures.depths) == 18
    assert fixtures.partition.delta_exponent == 3.0
    assert fixtures.seed == 20240917


def test_settings_override_fit(fixtures_file: Path) -> None:
    settings = AuditSettings(fit_margin=2.0, holdout_tolerance=0.1)
    fixtures = load_fixtures(fixtures_file, settings)
    assert (fixtures.fit_margin, fixtures.holdout_tolerance) == (2.0, 0.1)


@pytest.mark.parametrize(
    "data",
    [
        ["parameters", "depths"],
        {"parameters": [2.0], "depths": [8], "bogus": 1},
        {"version": 2, "parameters": [2.0], "depths": [8]},
        {"parameters": [2.0]},
        {"parameters": [2.5], "depths": [8]},
        {"parameters": [2.0], "depths": [1]},
        {"parameters": [2.0], "depths": []},
        {"parameters": [2.0], "depths": [8], "max_nu": "many"},
        {"parameters": [2.0], "depths": [8], "start_time": 1},
        {"parameters": [2.0], "depths": [8], "rate": "geometric"},
    ],
)
def test_malformed_fixtures(data: Any) -> None:
    with pytest.raises(FixtureError):
        parse_fixtures(data)


def test_parameters_failing_screen_are_dropped() -> None:
    fixtures = parse_fixtures({"parameters": [1.0, 2.0], "depths": [8]})
    assert fixtures.parameters == [2.0]
    with pytest.raises(FixtureError):
        parse_fixtures({"parameters": [1.0], "depths": [8]})


def test_missing_and_broken_files(tmp_path: Path) -> None:
    with pytest.raises(FixtureError):
        load_fixtures(tmp_path / "missing.yaml")
    broken = tmp_path / "broken.yaml"
    broken.write_text("parameters: [2.0\n", encoding="utf-8")
    with pytest.raises(FixtureError):
        load_fixtures(broken)


class TestFitAndHold:
    def test_even_items_calibrate_odd_items_check(
        self, small_fixtures: AuditFixtures
    ) -> None:
        result = _fit_and_hold("demo", [1.0, 5.0, 2.0, 7.0], small_fixtures, statistical=False)
        assert result.constant == pytest.approx(2.5)
        assert (result.n_calibration, result.n_holdout) == (2, 2)
        assert result.violations == 2
        assert not result.passed

    def test_negative_top_is_loosened_upwards(self, small_fixtures: AuditFixtures) -> None:
        result = _fit_and_hold("demo", [-4.0, -3.5], small_fixtures, statistical=False)
        assert result.constant == pytest.approx(-3.0)
        assert result.passed

    def test_statistical_tolerance(self, small_fixtures: AuditFixtures) -> None:
        items = []
        for i in range(40):
            items += [1.0, 10.0 if i == 0 else 0.5]
        assert not _fit_and_hold("demo", items, small_fixtures, statistical=False).passed
        # 違反 1/40 は許容幅 5% に収まる
        assert _fit_and_hold("demo", items, small_fixtures, statistical=True).passed

    @pytest.mark.parametrize("items", [[], [1.0]])
    def test_missing_items_do_not_pass(
        self, small_fixtures: AuditFixtures, items: List[float]
    ) -> None:
        result = _fit_and_hold("demo", items, small_fixtures, statistical=True)
        assert not result.passed
        assert result.n_holdout == 0
        assert math.isnan(result.constant)

    def test_empty_budget_check_does_not_pass(self) -> None:
        result = _within_budget("demo", [], 1.0)
        assert not result.passed
        assert result.constant == 1.0


class TestRunAudits:
    def test_rejects_unknown_check(self, small_fixtures: AuditFixtures) -> None:
        with pytest.raises(ValueError):
            run_audits(small_fixtures, ["no-such-audit"])

    def test_registry_names(self) -> None:
        assert set(STABLE_CHECKS) <= set(AUDITS)
        assert len(AUDITS) == 10

    def test_stable_checks_pass(self, small_fixtures: AuditFixtures) -> None:
        results = run_audits(small_fixtures, STABLE_CHECKS)
        assert [result.name for result in results] == STABLE_CHECKS
        for result in results:
            assert result.passed, result
            assert result.violations == 0

    def test_essential_budget_counts_every_pair(self, small_fixtures: AuditFixtures) -> None:
        (result,) = run_audits(small_fixtures, ["essential-budget"])
        assert result.n_calibration + result.n_holdout == 2 * 6
        assert result.constant == 1.0


def test_fixture_keys_cover_dataclass_fields() -> None:
    data: Dict[str, Any] = {"parameters": [2.0], "depths": [8], "gamma_m": 0.25, "seed": 3}
    fixtures = parse_fixtures(data)
    assert fixtures.gamma_m == 0.25
    assert fixtures.seed == 3


class TestBoundLength:
    def _context(self, fixtures: AuditFixtures, periods: Dict[int, int]) -> AuditContext:
        ctx = AuditContext(fixtures)
        ctx.__dict__["bound_periods"] = {(2.0, r): p for r, p in periods.items()}
        return ctx

    def test_periods_near_r_pass(self, small_fixtures: AuditFixtures) -> None:
        ctx = self._context(small_fixtures, {8: 11, 9: 12, 10: 14, 11: 15})
        result = audit_bound_length(ctx)
        assert result.passed
        assert result.constant == pytest.approx(14 / 10 * 1.25)

    def test_short_period_fails_lower_side(self, small_fixtures: AuditFixtures) -> None:
        # p ≤ κ₁ r は満たすが r/κ₁ ≤ p を破る
        ctx = self._context(small_fixtures, {8: 11, 9: 12, 10: 14, 11: 1})
        result = audit_bound_length(ctx)
        assert not result.passed
        assert result.violations == 1


def test_return_time_requires_minimum_returns(small_fixtures: AuditFixtures) -> None:
    fixtures = dataclasses.replace(small_fixtures, min_returns=10_000)
    ctx = AuditContext(fixtures)
    ctx.__dict__["simulations"] = []
    result = audit_return_time(ctx)
    assert not result.passed
    assert "0/10000" in result.detail


def test_repository_fixtures_cover_several_parameters(fixtures_file: Path) -> None:
    fixtures = load_fixtures(fixtures_file)
    assert len(fixtures.parameters) >= 4
    assert all(1.95 <= a <= 2.0 for a in fixtures.parameters)
    assert fixtures.min_returns == 30

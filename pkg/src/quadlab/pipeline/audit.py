"""フィクスチャ上の数値監査モジュール

各監査は観測した比を項目として並べ、偶数番目で定数を当てはめ、
奇数番目（ホールドアウト）で当てはめた定数を検査する。
上界が明示されている監査は当てはめずにその上界で全項目を検査する。
"""

import dataclasses
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from quadlab.dynamics.core import ce_estimate, critical_deviation
from quadlab.dynamics.distortion import (
    BOUNDED_DISTORTION_BUDGET,
    bounded_distortion,
    phase_param_window,
    window_log_ratio,
)
from quadlab.dynamics.partition import (
    PartitionConfig,
    PartitionIndex,
    interval_of,
    subinterval_of,
)
from quadlab.dynamics.returns import (
    ReturnKind,
    bounded_period,
    eta_grid,
    essential_return_budget,
    free_period,
    inessential_runs,
    outside_expansion_check,
)
from quadlab.pipeline.exclusion import (
    AdvanceResult,
    IntervalTag,
    ParamInterval,
    advance_to_complete,
)
from quadlab.pipeline.run_config import AuditSettings, RunConfig, SamplingSpec
from quadlab.series.rates import RateSequence, log_star
from quadlab.utils.errors import (
    BudgetExhausted,
    ConfigError,
    DegenerateDerivative,
    FixtureError,
    NoReturnWithinBudget,
)
from quadlab.utils.logger import get_logger

logger = get_logger(__name__)

FIXTURE_VERSION = 1


@dataclass(frozen=True)
class AuditFixtures:
    """監査に使うパラメータ・深さ・定数の組"""

    parameters: List[float]
    depths: List[int]
    partition: PartitionConfig
    rate: RateSequence
    seed: int = 0
    kappa2: List[float] = field(default_factory=lambda: [1.5, 2.0, 3.0])
    window_starts: List[int] = field(default_factory=lambda: [10, 12, 14, 16, 18, 20])
    window_length: int = 16
    eta_samples: int = 33
    etas_per_depth: int = 4
    outside_samples: int = 64
    max_nu: int = 200
    max_steps: int = 2000
    start_time: int = 2
    simulation_steps: int = 120
    min_returns: int = 0
    gamma_m: float = 0.3
    fit_margin: float = 1.25
    holdout_tolerance: float = 0.05


@dataclass(frozen=True)
class AuditResult:
    """監査 1 件の結果"""

    name: str
    constant: float
    n_calibration: int
    n_holdout: int
    violations: int
    passed: bool
    detail: str = ""


def _fit_and_hold(
    name: str,
    items: Sequence[float],
    fixtures: AuditFixtures,
    statistical: bool,
    detail: str = "",
) -> AuditResult:
    calibration = list(items[0::2])
    holdout = list(items[1::2])
    if not calibration or not holdout:
        # 検証できる項目が無ければ合格にしない
        logger.warning(f"監査 {name} の項目が足りません: 較正 {len(calibration)} / 検証 {len(holdout)}")
        return AuditResult(
            name=name,
            constant=math.nan,
            n_calibration=len(calibration),
            n_holdout=len(holdout),
            violations=0,
            passed=False,
            detail=(detail + " 項目不足").strip(),
        )

    top = max(calibration)
    # 符号によらず上界を緩める
    constant = top + (fixtures.fit_margin - 1.0) * abs(top)
    violations = sum(1 for value in holdout if value > constant)
    tolerance = fixtures.holdout_tolerance if statistical else 0.0
    passed = violations <= tolerance * len(holdout)
    if not passed:
        logger.warning(f"監査 {name} がホールドアウトで失敗: 違反 {violations}/{len(holdout)}")
    return AuditResult(
        name=name,
        constant=constant,
        n_calibration=len(calibration),
        n_holdout=len(holdout),
        violations=violations,
        passed=passed,
        detail=detail,
    )


def _within_budget(
    name: str, items: Sequence[float], budget: float, detail: str = ""
) -> AuditResult:
    if not items:
        logger.warning(f"監査 {name} の項目がありません")
        return AuditResult(
            name=name,
            constant=budget,
            n_calibration=0,
            n_holdout=0,
            violations=0,
            passed=False,
            detail=(detail + " 項目不足").strip(),
        )
    violations = sum(1 for value in items if value > budget)
    if violations:
        logger.warning(f"監査 {name} で上界 {budget!r} を超える項目: {violations}/{len(items)}")
    return AuditResult(
        name=name,
        constant=budget,
        n_calibration=len(items[0::2]),
        n_holdout=len(items[1::2]),
        violations=violations,
        passed=violations == 0,
        detail=detail,
    )


class AuditContext:
    """監査間で共有する計算（束縛期間・区間シミュレーション）のキャッシュ"""

    def __init__(self, fixtures: AuditFixtures) -> None:
        self.fixtures = fixtures
        self.cfg = fixtures.partition

    def depth_items(self) -> List[Tuple[float, int]]:
        return [(a, r) for a in self.fixtures.parameters for r in self.fixtures.depths]

    @cached_property
    def bound_periods(self) -> Dict[Tuple[float, int], int]:
        periods = {}
        for a, r in self.depth_items():
            result = bounded_period(
                [a], 0, r, self.cfg, self.fixtures.max_nu, self.fixtures.eta_samples
            )
            periods[(a, r)] = result.p
        return periods

    def etas(self, r: int) -> np.ndarray:
        grid = eta_grid(r, self.fixtures.eta_samples)
        index = np.unique(
            np.round(np.linspace(0, grid.size - 1, self.fixtures.etas_per_depth)).astype(int)
        )
        return grid[index]

    @cached_property
    def simulations(self) -> List[Tuple[ParamInterval, AdvanceResult]]:
        """各 (a, r) について幅 e^{−r} の区間を完全回帰まで進める"""
        conf = RunConfig(
            partition=self.cfg,
            rate=self.fixtures.rate,
            max_steps=self.fixtures.simulation_steps,
            sampling=SamplingSpec(max_points=65),
        )
        runs = []
        for a, r in self.depth_items():
            lo = a - math.exp(-r)
            if lo < 1.0:
                continue
            omega = ParamInterval(lo=lo, hi=a, m=self.fixtures.start_time, tag=IntervalTag.START)
            try:
                result = advance_to_complete(omega, conf)
            except BudgetExhausted as e:
                result = e.result
            runs.append((omega, result))
        return runs


def audit_outside_expansion(ctx: AuditContext) -> AuditResult:
    """窓の外の軌道の膨張 |∂ₓFⁿ(x)| ≥ C_M e^{γ_M n}（窓に入る時刻 n で評価）"""
    fixtures = ctx.fixtures
    rng = np.random.default_rng(fixtures.seed)
    delta = ctx.cfg.delta
    items: List[float] = []
    skipped = 0
    for a in fixtures.parameters:
        magnitudes = rng.uniform(delta, 1.0, fixtures.outside_samples)
        signs = rng.choice([-1.0, 1.0], fixtures.outside_samples)
        for x in magnitudes * signs:
            try:
                n = free_period(a, float(x), ctx.cfg, fixtures.max_steps)
            except NoReturnWithinBudget:
                skipped += 1
                continue
            check = outside_expansion_check(a, float(x), n, ctx.cfg, 1.0, fixtures.gamma_m)
            sharp = check.sharp_rhs_log if check.sharp_rhs_log is not None else check.rhs_log
            items.append(math.exp(min(sharp - check.lhs_log, 700.0)))
    result = _fit_and_hold("outside-expansion", items, fixtures, statistical=True)
    c_m = 1.0 / result.constant if result.constant > 0.0 else math.inf
    return _with_detail(result, f"C_M={c_m:.4g}, γ_M={fixtures.gamma_m}, 打ち切り={skipped}")


def audit_phase_parameter(ctx: AuditContext) -> AuditResult:
    """相-パラメータ比の帯の幅 A（窓の開始を動かして測る）"""
    fixtures = ctx.fixtures
    items: List[float] = []
    for a in fixtures.parameters:
        for start in fixtures.window_starts:
            try:
                window = phase_param_window(a, range(start, start + fixtures.window_length))
            except DegenerateDerivative:
                items.append(math.inf)
                continue
            items.append(window.A)
    result = _fit_and_hold("phase-parameter", items, fixtures, statistical=False)
    return _with_detail(result, f"窓の長さ={fixtures.window_length}")


def audit_bounded_distortion(ctx: AuditContext) -> AuditResult:
    """束縛期間中の歪み |log 比| / log 2 ≤ 1"""
    items: List[float] = []
    for (a, r), p in ctx.bound_periods.items():
        for eta in ctx.etas(r):
            for j in range(1, p + 1):
                report = bounded_distortion(a, float(eta), j, bound_period=p)
                items.append(abs(report.log_ratio) / math.log(BOUNDED_DISTORTION_BUDGET))
    return _within_budget("bounded-distortion", items, 1.0, f"項目数={len(items)}")


def audit_bound_length(ctx: AuditContext) -> AuditResult:
    """束縛期間の長さの両側評価 r/κ₁ ≤ p ≤ κ₁ r（max(p/r, r/p) で κ₁ を当てはめる）"""
    items = [
        max(p / r, r / p) if p > 0 else math.inf for (a, r), p in ctx.bound_periods.items()
    ]
    return _fit_and_hold(
        "bound-length", items, ctx.fixtures, statistical=False, detail="max(p/r, r/p)"
    )


def audit_bound_growth(ctx: AuditContext) -> AuditResult:
    """束縛期間の後の像の長さ |F^{p+1}(J)| ≥ r^{−κ₂}|J|/|I_r| から κ₂ を測る"""
    items: List[float] = []
    for (a, r), p in ctx.bound_periods.items():
        piece = subinterval_of(PartitionIndex(r, r * r - 1), ctx.cfg)
        whole = interval_of(r, ctx.cfg)
        points = np.linspace(piece.lo, piece.hi, 17)
        _, deviation = critical_deviation(points, a, p + 1)
        length = float(deviation.max() - deviation.min())
        if length <= 0.0:
            items.append(math.inf)
            continue
        scale = length * whole.length / piece.length
        items.append(-math.log(scale) / math.log(r))
    result = _fit_and_hold("bound-growth", items, ctx.fixtures, statistical=False)
    return _with_detail(result, "κ₂")


def audit_free_length(ctx: AuditContext) -> AuditResult:
    """束縛期間の後の自由期間 L ≤ κ₃ r"""
    fixtures = ctx.fixtures
    items: List[float] = []
    skipped = 0
    for (a, r), p in ctx.bound_periods.items():
        for eta in ctx.etas(r):
            xi, deviation = critical_deviation(np.array([eta]), a, p + 1)
            z = float(xi[0] + deviation[0])
            if abs(z) < ctx.cfg.delta:
                items.append(0.0)
                continue
            try:
                items.append(free_period(a, z, ctx.cfg, fixtures.max_steps) / r)
            except NoReturnWithinBudget:
                skipped += 1
    result = _fit_and_hold("free-length", items, fixtures, statistical=True)
    return _with_detail(result, f"L/r, 打ち切り={skipped}")


def audit_inessential_length(ctx: AuditContext) -> AuditResult:
    """本質・完全回帰の間に続く非本質回帰の時間 o ≤ κ₄ r"""
    items: List[float] = []
    for _, result in ctx.simulations:
        for depth, duration in inessential_runs(result.events):
            items.append(duration / depth)
    return _fit_and_hold("inessential-length", items, ctx.fixtures, statistical=True, detail="o/r")


def audit_main_distortion(ctx: AuditContext) -> AuditResult:
    """完全回帰した区間の両端での主歪み（必要な log D₁ を測る）"""
    items: List[float] = []
    for omega, result in ctx.simulations:
        if result.completed is None or result.complete_n is None:
            continue
        completed = result.completed
        try:
            log_ratio = window_log_ratio(completed.lo, completed.hi, 0, result.complete_n - 1)
        except DegenerateDerivative:
            items.append(math.inf)
            continue
        items.append(abs(log_ratio) / max(1, log_star(omega.m)) ** 2)
    result = _fit_and_hold("main-distortion", items, ctx.fixtures, statistical=True)
    d1 = math.exp(result.constant) if math.isfinite(result.constant) else math.nan
    return _with_detail(result, f"D₁={d1:.4g}")


def audit_return_time(ctx: AuditContext) -> AuditResult:
    """完全回帰までの時間 n − m ≤ κ log m + 1（κ を当てはめる）"""
    items: List[float] = []
    for omega, result in ctx.simulations:
        if result.complete_n is None:
            continue
        items.append((result.complete_n - omega.m - 1) / math.log(omega.m))
    completes = sum(
        1
        for _, result in ctx.simulations
        for event in result.events
        if event.kind is ReturnKind.COMPLETE
    )
    result = _fit_and_hold("return-time", items, ctx.fixtures, statistical=True)
    minimum = ctx.fixtures.min_returns
    if completes < minimum:
        logger.warning(f"完全回帰が足りません: {completes} < {minimum}")
        result = dataclasses.replace(result, passed=False)
    return _with_detail(result, f"κ, 完全回帰={completes}/{minimum}")


def audit_essential_budget(ctx: AuditContext) -> AuditResult:
    """φ(r) = 2κ₂ log r の反復 φ^s(r) ≤ 12κ₂² と s ≤ log* r"""
    items: List[float] = []
    for kappa2 in ctx.fixtures.kappa2:
        for r in ctx.fixtures.depths:
            budget = essential_return_budget(float(r), kappa2)
            ratio = budget.phi_s / budget.bound
            if budget.s > log_star(r):
                ratio = math.inf
            items.append(ratio)
    return _within_budget("essential-budget", items, 1.0, "φ^s(r)/12κ₂²")


def _with_detail(result: AuditResult, detail: str) -> AuditResult:
    return AuditResult(
        name=result.name,
        constant=result.constant,
        n_calibration=result.n_calibration,
        n_holdout=result.n_holdout,
        violations=result.violations,
        passed=result.passed,
        detail=" ".join(part for part in (detail, result.detail) if part),
    )


AUDITS: Dict[str, Callable[[AuditContext], AuditResult]] = {
    "outside-expansion": audit_outside_expansion,
    "phase-parameter": audit_phase_parameter,
    "bounded-distortion": audit_bounded_distortion,
    "bound-length": audit_bound_length,
    "bound-growth": audit_bound_growth,
    "free-length": audit_free_length,
    "inessential-length": audit_inessential_length,
    "main-distortion": audit_main_distortion,
    "return-time": audit_return_time,
    "essential-budget": audit_essential_budget,
}


def run_audits(
    fixtures: AuditFixtures, checks: Optional[Sequence[str]] = None
) -> List[AuditResult]:
    """
    監査を実行

    Args:
        fixtures: フィクスチャ
        checks: 実行する監査名（省略時はすべて）

    Raises:
        ValueError: 未知の監査名が含まれる場合
    """
    names = list(checks) if checks else list(AUDITS)
    unknown = [name for name in names if name not in AUDITS]
    if unknown:
        raise ValueError(f"未知の監査です: {', '.join(unknown)}")

    ctx = AuditContext(fixtures)
    results = []
    for i, name in enumerate(names, start=1):
        logger.info(f"監査 {i}/{len(names)}: {name}")
        results.append(AUDITS[name](ctx))
    return results


# --- フィクスチャの読み込み -----------------------------------------------

_FIXTURE_KEYS = {
    "version",
    "seed",
    "parameters",
    "depths",
    "partition",
    "rate",
    "kappa2",
    "window_starts",
    "window_length",
    "eta_samples",
    "etas_per_depth",
    "outside_samples",
    "max_nu",
    "max_steps",
    "start_time",
    "simulation_steps",
    "min_returns",
    "gamma_m",
    "fit_margin",
    "holdout_tolerance",
}


def _int_list(data: Dict[str, Any], key: str, minimum: int) -> List[int]:
    raw = data[key]
    if not isinstance(raw, list) or not raw:
        raise FixtureError(f"{key}: 空でないリストで指定してください")
    values = [int(v) for v in raw]
    if min(values) < minimum:
        raise FixtureError(f"{key}: {minimum} 以上で指定してください: {min(values)}")
    return values


def parse_fixtures(data: Any, settings: Optional[AuditSettings] = None) -> AuditFixtures:
    """
    辞書からフィクスチャを作る

    CE スクリーニングを通らないパラメータは警告して除く。

    Raises:
        FixtureError: 形式が不正な場合
    """
    if not isinstance(data, dict):
        raise FixtureError("フィクスチャはマッピングで指定してください")
    unknown = sorted(set(map(str, data)) - _FIXTURE_KEYS)
    if unknown:
        raise FixtureError(f"未知のキーです: {', '.join(unknown)}")
    if data.get("version", FIXTURE_VERSION) != FIXTURE_VERSION:
        raise FixtureError(f"未対応のフィクスチャ版です: {data.get('version')}")
    for key in ("parameters", "depths"):
        if key not in data:
            raise FixtureError(f"{key} が必要です")

    try:
        parameters = [float(v) for v in data["parameters"]]
        depths = _int_list(data, "depths", 2)
        partition_data = data.get("partition") or {}
        partition = PartitionConfig(
            delta_exponent=float(partition_data.get("delta_exponent", 3.0)),
            epsilon1=float(partition_data.get("epsilon1", 0.2)),
            r_max=int(partition_data.get("r_max", 60)),
        )
        rate = RateSequence.from_spec(str(data.get("rate", "power:1")))
        defaults = AuditFixtures(parameters=[], depths=[], partition=partition, rate=rate)
        options: Dict[str, Any] = {}
        for key in (
            "seed",
            "window_length",
            "eta_samples",
            "etas_per_depth",
            "outside_samples",
            "max_nu",
            "max_steps",
            "start_time",
            "simulation_steps",
            "min_returns",
        ):
            if key in data:
                options[key] = int(data[key])
        for key in ("gamma_m", "fit_margin", "holdout_tolerance"):
            if key in data:
                options[key] = float(data[key])
        if "kappa2" in data:
            options["kappa2"] = [float(v) for v in data["kappa2"]]
        if "window_starts" in data:
            options["window_starts"] = _int_list(data, "window_starts", 1)
    except (TypeError, ValueError, ConfigError) as e:
        raise FixtureError(f"フィクスチャの値が不正です: {e}") from e

    if settings is not None:
        options["fit_margin"] = settings.fit_margin
        options["holdout_tolerance"] = settings.holdout_tolerance

    screened = []
    for a in parameters:
        if not 1.0 <= a <= 2.0:
            raise FixtureError(f"parameters: [1, 2] の外の値です: {a!r}")
        if ce_estimate(a, 60).gamma_hat > 0.0:
            screened.append(a)
        else:
            logger.warning(f"CE スクリーニングに通らないため除外: a={a!r}")
    if not screened:
        raise FixtureError("CE スクリーニングを通るパラメータがありません")
    if options.get("start_time", defaults.start_time) < 2:
        raise FixtureError("start_time は 2 以上で指定してください")

    return AuditFixtures(
        parameters=screened, depths=depths, partition=partition, rate=rate, **options
    )


def load_fixtures(path: Path, settings: Optional[AuditSettings] = None) -> AuditFixtures:
    """
    フィクスチャファイルを読み込む

    Raises:
        FixtureError: ファイルが無い・読めない・形式が不正な場合
    """
    path = Path(path)
    if not path.exists():
        raise FixtureError(f"フィクスチャが見つかりません: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as e:
        raise FixtureError(f"フィクスチャを読み込めません: {path} ({e})") from e
    fixtures = parse_fixtures(data, settings)
    logger.debug(f"フィクスチャを読み込みました: {path}")
    return fixtures

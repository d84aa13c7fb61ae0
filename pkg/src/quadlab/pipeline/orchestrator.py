"""除外シミュレーションの実行と成果物（CSV / JSON）の書き出しモジュール"""

import csv
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from quadlab import __version__
from quadlab.config import config
from quadlab.dynamics.returns import ReturnEvent, ReturnKind
from quadlab.pipeline.exclusion import RunResult, run
from quadlab.pipeline.run_config import ExperimentConfig
from quadlab.utils.logger import get_logger

logger = get_logger(__name__)

CSV_SCHEMA_VERSION = 1

GENERATION_COLUMNS = [
    "k",
    "measure",
    "excluded_len",
    "retired_len",
    "n_intervals",
    "max_m",
    *[kind.value for kind in ReturnKind],
    "decay_bound",
    "decay_bound_calibrated",
    "survival_ratio",
]

EVENT_COLUMNS = [
    "generation",
    "n",
    "kind",
    "omega_lo",
    "omega_hi",
    "image_lo",
    "image_hi",
    "depth",
    "bound_period",
    "target",
]


def format_value(value: Any) -> str:
    """CSV 用の文字列化（浮動小数点は最短の往復表現）"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _event_target(event: ReturnEvent) -> str:
    if event.host is not None:
        return "|".join(idx.label for idx in event.host)
    interval = event.essential_interval or event.escape_interval
    if interval is not None:
        return f"{interval.lo!r}..{interval.hi!r}"
    return ""


def _write_csv(path: Path, columns: List[str], rows: List[List[Any]]) -> None:
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(value) for value in row])


class ExclusionOrchestrator:
    """除外シミュレーション統括クラス"""

    def __init__(self, experiment: ExperimentConfig, config_path: Optional[Path] = None) -> None:
        self.experiment = experiment
        self.config_path = config_path
        self.output_dir: Optional[Path] = None
        self.result: Optional[RunResult] = None
        self.started_at: Optional[str] = None
        self.results: Dict[str, Optional[Path]] = {
            "generations": None,
            "events": None,
            "summary": None,
        }

    def run_experiment(
        self, output_dir: Optional[Path] = None, timestamp: Optional[str] = None
    ) -> Path:
        """
        シミュレーションを実行して成果物を書き出す

        Args:
            output_dir: 出力先（省略時は QUADLAB_OUTPUT_DIR/<timestamp>）
            timestamp: 出力ディレクトリ名に使うタイムスタンプ

        Returns:
            出力ディレクトリのパス

        Raises:
            OSError: 出力先に書き込めない場合
        """
        self.started_at = datetime.now().isoformat(timespec="seconds")
        self.output_dir = Path(output_dir) if output_dir else config.get_output_dir(timestamp)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"除外シミュレーション開始: a₀={self.experiment.a0!r}")

        try:
            self.simulate_step()
            self.write_generations_step()
            self.write_events_step()
            self.write_summary_step()

            self._print_summary()
            logger.info(f"除外シミュレーション完了: {self.output_dir}")
            return self.output_dir

        except Exception as e:
            logger.error(f"シミュレーション実行中にエラーが発生: {e}")
            raise

    def simulate_step(self) -> RunResult:
        """シミュレーションステップ"""
        logger.info("ステップ 1/4: 除外シミュレーション")
        self.result = run(
            self.experiment.run,
            self.experiment.a0,
            startup_spec=self.experiment.startup,
            workers=config.threads,
        )
        return self.result

    def _require_result(self) -> RunResult:
        if self.result is None or self.output_dir is None:
            raise RuntimeError("シミュレーションがまだ実行されていません")
        return self.result

    def _output_path(self, name: str) -> Path:
        if self.output_dir is None:
            raise RuntimeError("出力ディレクトリが準備されていません")
        return self.output_dir / name

    def write_generations_step(self) -> Path:
        """世代ごとの CSV 書き出しステップ"""
        logger.info("ステップ 2/4: generations.csv の書き出し")
        result = self._require_result()

        decay_rows = {row.k: row for row in result.decay.rows}
        rows: List[List[Any]] = []
        for state in result.states:
            base = state.row()
            decay = decay_rows.get(state.k)
            rows.append(
                [base[column] for column in GENERATION_COLUMNS[:-3]]
                + [
                    decay.bound if decay else 1.0,
                    decay.calibrated_bound if decay else 1.0,
                    decay.survival_ratio if decay else 1.0,
                ]
            )

        path = self._output_path("generations.csv")
        _write_csv(path, GENERATION_COLUMNS, rows)
        self.results["generations"] = path
        return path

    def write_events_step(self) -> Path:
        """回帰イベントの CSV 書き出しステップ"""
        logger.info("ステップ 3/4: events.csv の書き出し")
        result = self._require_result()

        rows = [
            [
                generation,
                event.n,
                event.kind.value,
                event.omega.lo if event.omega else None,
                event.omega.hi if event.omega else None,
                event.image.lo,
                event.image.hi,
                event.depth,
                event.bound_period,
                _event_target(event),
            ]
            for generation, event in result.events
        ]

        path = self._output_path("events.csv")
        _write_csv(path, EVENT_COLUMNS, rows)
        self.results["events"] = path
        return path

    def build_summary(self) -> Dict[str, Any]:
        """summary.json の内容（manifest・設定の写し・当てはめた定数・減衰の報告）"""
        result = self._require_result()
        start = result.startup
        decay = result.decay
        final = result.states[-1]
        return {
            "manifest": {
                "config_path": str(self.config_path) if self.config_path else None,
                "output_dir": str(self.output_dir),
                "seed": self.experiment.seed,
                "tool_version": __version__,
                "csv_schema": CSV_SCHEMA_VERSION,
                "threads": config.threads,
                "started_at": self.started_at,
                "finished_at": datetime.now().isoformat(timespec="seconds"),
            },
            "config": self.experiment.to_dict(),
            "startup": {
                "omega0": [start.omega0.lo, start.omega0.hi],
                "m0": start.m0,
                "epsilon": start.epsilon,
                "degenerate": start.degenerate,
                "monotone": start.monotone,
                "gamma_hat": start.ce.gamma_hat,
                "sigma_hat": start.pr.sigma_hat,
            },
            "fitted": {
                "tau_calibrated": decay.tau_calibrated,
                "interval_tau_min": decay.interval_tau_min,
                "time_violation_fraction": decay.time_violation_fraction,
            },
            "decay": [
                {
                    "k": row.k,
                    "m_k": row.m_k,
                    "measured_ratio": row.measured_ratio,
                    "survival_ratio": row.survival_ratio,
                    "bound": row.bound,
                    "calibrated_bound": row.calibrated_bound,
                    "holds": row.holds,
                }
                for row in decay.rows
            ],
            "totals": {
                "generations": final.k,
                "measure": final.measure,
                "excluded": final.excluded,
                "retired": final.retired,
                "retired_by_reason": result.retired_by_reason,
                "basic_assumption_exclusions": result.basic_assumption_exclusions,
                "complete_returns": decay.complete_returns,
                "advance_calls": decay.advance_calls,
            },
        }

    def write_summary_step(self) -> Path:
        """summary.json 書き出しステップ"""
        logger.info("ステップ 4/4: summary.json の書き出し")
        summary = self.build_summary()
        path = self._output_path("summary.json")
        path.write_text(json.dumps(summary, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        self.results["summary"] = path
        return path

    def _print_summary(self) -> None:
        """実行サマリーを出力"""
        result = self._require_result()
        final = result.states[-1]
        logger.info("=" * 50)
        logger.info("除外シミュレーション実行サマリー")
        logger.info("=" * 50)
        logger.info(f"開始区間: [{result.startup.omega0.lo!r}, {result.startup.omega0.hi!r}]")
        logger.info(f"m₀: {result.startup.m0}")
        logger.info(f"世代数: {final.k}")
        logger.info(f"最終測度: {final.measure!r}")
        logger.info(f"除外: {final.excluded!r} / 退役: {final.retired!r}")
        if result.decay.tau_calibrated is not None:
            logger.info(f"較正した τ: {result.decay.tau_calibrated!r}")
        logger.info("")
        logger.info("生成されたファイル:")
        for name, file_path in self.results.items():
            if file_path and file_path.exists():
                logger.info(f"  ✅ {name}: {file_path.name}")
            else:
                logger.info(f"  ❌ {name}: 生成されませんでした")
        logger.info("=" * 50)

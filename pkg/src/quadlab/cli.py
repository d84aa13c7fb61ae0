"""QuadLab CLI インターフェース"""

import csv
import io
import json
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Any, Iterator, List, Optional, Sequence, Tuple

import click
import numpy as np

from quadlab import __version__
from quadlab.config import config
from quadlab.dynamics.core import iterate_orbit
from quadlab.dynamics.partition import PartitionConfig, PartitionIndex, locate
from quadlab.pipeline.audit import AUDITS, load_fixtures, run_audits
from quadlab.pipeline.exclusion import m_sequence
from quadlab.pipeline.orchestrator import ExclusionOrchestrator, format_value
from quadlab.pipeline.run_config import load_experiment_config
from quadlab.series.rates import (
    RateSequence,
    SequenceFunction,
    condensation,
    is_admissible,
    log_star,
    summability_partial,
    summability_profile,
    summand_sequence,
)
from quadlab.utils.errors import (
    ConfigError,
    DomainError,
    FixtureError,
    RateNotDefined,
)
from quadlab.utils.logger import setup_logging

EXIT_AUDIT_FAILED = 1
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_IO = 4

ORBIT_COLUMNS = ["n", "x", "log_deriv", "deriv_sign", "location"]


def _fail(message: Any, code: int) -> None:
    click.echo(f"❌ {message}", err=True)
    click.get_current_context().exit(code)


@contextmanager
def _exit_codes() -> Iterator[None]:
    """例外を終了コードに対応付ける"""
    try:
        yield
    except click.exceptions.Exit:
        raise
    except click.ClickException:
        raise
    except (ConfigError, FixtureError) as e:
        _fail(e, EXIT_USAGE)
    except (DomainError, RateNotDefined) as e:
        _fail(e, EXIT_DOMAIN)
    except ValueError as e:
        _fail(e, EXIT_USAGE)
    except OSError as e:
        _fail(e, EXIT_IO)
    except Exception as e:
        click.echo(f"❌ エラーが発生しました: {e}", err=True)
        raise click.Abort()


def _rate_option(ctx: click.Context, param: click.Parameter, value: str) -> RateSequence:
    try:
        return RateSequence.from_spec(value)
    except ValueError as e:
        raise click.BadParameter(str(e)) from e


def _echo_rows(rows: Sequence[Tuple[str, Any]]) -> None:
    width = max(len(key) for key, _ in rows)
    for key, value in rows:
        click.echo(f"{key.ljust(width)}  {format_value(value)}")


@click.group()
@click.version_option(version=__version__)
@click.option("--verbose", "-v", is_flag=True, help="詳細ログを表示")
def main(verbose: bool) -> None:
    """QuadLab - 二次写像族の臨界軌道の再帰とパラメータ除外の数値実験"""
    try:
        log_level = "DEBUG" if verbose else config.log_level
    except ConfigError as e:
        _fail(e, EXIT_USAGE)
        return
    setup_logging(log_level)


@main.command()
@click.option("--a", "a", type=float, required=True, help="パラメータ a ∈ [1, 2]")
@click.option("--n", "n", type=click.IntRange(min=0), default=10, help="ステップ数")
@click.option(
    "--emit", type=click.Choice(["csv", "json"]), default="csv", help="出力形式"
)
@click.option("--delta-exponent", type=float, default=3.0, help="δ = e^{−Δ} の Δ")
def orbit(a: float, n: int, emit: str, delta_exponent: float) -> None:
    """臨界軌道 ξ_0..ξ_n と対数微分・分割上の位置を出力"""

    with _exit_codes():
        # 位置の判定には ε₁ を使わない
        cfg = PartitionConfig(
            delta_exponent=delta_exponent, epsilon1=max(1.0, 2.0 / delta_exponent**2)
        )
        rows: List[List[Any]] = []
        for state in iterate_orbit(a, n):
            where = locate(state.x, cfg)
            location = where.label if isinstance(where, PartitionIndex) else where.value
            rows.append([state.n, state.x, state.log_deriv_mag, state.deriv_sign, location])

        if emit == "json":
            records = [dict(zip(ORBIT_COLUMNS, row)) for row in rows]
            click.echo(json.dumps(records, ensure_ascii=False))
            return

        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(ORBIT_COLUMNS)
        for row in rows:
            writer.writerow([format_value(value) for value in row])
        click.echo(buffer.getvalue(), nl=False)


@main.command()
@click.argument("config_path", type=click.Path(path_type=Path))
@click.option(
    "--output-dir",
    type=click.Path(path_type=Path),
    default=None,
    help="出力先（省略時は QUADLAB_OUTPUT_DIR/<タイムスタンプ>）",
)
def exclude(config_path: Path, output_dir: Optional[Path]) -> None:
    """実行設定から除外シミュレーションを実行し、CSV / JSON を書き出す"""

    with _exit_codes():
        experiment = load_experiment_config(config_path)
        orchestrator = ExclusionOrchestrator(experiment, config_path=config_path)
        result_dir = orchestrator.run_experiment(output_dir=output_dir)

        result = orchestrator.result
        if result is not None and any(result.retired_by_reason.values()):
            retired = ", ".join(f"{k}={v}" for k, v in result.retired_by_reason.items() if v)
            click.echo(f"⚠️  退役した区間があります: {retired}")
        click.echo(f"✅ 除外シミュレーション完了: {result_dir}")


@main.group()
def rates() -> None:
    """回帰率 δ_n と級数の診断"""


@rates.command()
@click.option("--x", "x", type=float, required=True, help="引数")
def logstar(x: float) -> None:
    """反復対数 log* x"""

    with _exit_codes():
        click.echo(str(log_star(x)))


@rates.command()
@click.option("--rate", "rate", required=True, callback=_rate_option, help="δ_n の指定")
@click.option("--e-bar", type=float, default=None, help="宣言する ē")
@click.option("--n-adm", type=click.IntRange(min=1), default=None, help="宣言する N")
@click.option("--horizon", type=click.IntRange(min=2), default=10_000, help="検査の上限")
def admissible(
    rate: RateSequence, e_bar: Optional[float], n_adm: Optional[int], horizon: int
) -> None:
    """δ_n の許容性（正値・単調・多項式下界）を検査"""

    with _exit_codes():
        declared = replace(rate, e_bar=e_bar, n_adm=n_adm)
        result = is_admissible(declared, horizon)
        _echo_rows(
            [
                ("rate", declared.label),
                ("admissible", result.admissible),
                ("e_bar", result.e_bar),
                ("n_adm", result.n_adm),
                ("provisional", result.provisional),
                ("witness", result.witness),
                ("reason", result.reason),
            ]
        )


@rates.command()
@click.option("--rate", "rate", required=True, callback=_rate_option, help="δ_n の指定")
@click.option("--tau", type=float, required=True, help="τ ∈ (0, 1)")
@click.option("--N", "N", type=click.IntRange(min=2), required=True, help="部分和の上限")
@click.option("--profile", is_flag=True, help="チェックポイントごとの増分も表示")
def partialsum(rate: RateSequence, tau: float, N: int, profile: bool) -> None:
    """部分和 Σ δ_n τ^{(log* n)³} / ln n"""

    with _exit_codes():
        if not profile:
            click.echo(format_value(summability_partial(rate, tau, N)))
            return

        checkpoints = sorted({max(2, N // 1000), max(2, N // 100), max(2, N // 10), N})
        if len(checkpoints) < 2:
            raise click.BadParameter("--profile には N ≥ 3 が必要です")
        result = summability_profile(rate, tau, checkpoints)
        click.echo("N,partial,increment")
        for mark, partial, increment in result.points:
            click.echo(f"{mark},{format_value(partial)},{format_value(increment)}")
        click.echo(f"# {result.label} (しきい値 {format_value(result.threshold)})")


def _parse_a_sequence(spec: str) -> SequenceFunction:
    name, _, rest = spec.partition(":")
    if name == "inv_square":
        return lambda ns: 1.0 / np.asarray(ns, dtype=float) ** 2
    if name == "harmonic":
        return lambda ns: 1.0 / np.asarray(ns, dtype=float)
    if name == "const":
        return lambda ns: np.ones(np.shape(ns), dtype=float)
    if name == "summand":
        rate_spec, _, tau = rest.rpartition(":")
        if not rate_spec:
            raise click.BadParameter(f"summand:RATE:TAU の形で指定してください: {spec}")
        return summand_sequence(RateSequence.from_spec(rate_spec), float(tau))
    raise click.BadParameter(f"未知の数列です: {spec}")


def _parse_q_sequence(spec: str, K: int) -> List[int]:
    name, _, rest = spec.partition(":")
    if name == "pow2":
        return [2**k for k in range(K + 1)]
    if name == "linear":
        return [k + 1 for k in range(K + 1)]
    if name == "msequence":
        m0, _, kappa = rest.partition(":")
        if not kappa:
            raise click.BadParameter(f"msequence:M0:KAPPA の形で指定してください: {spec}")
        return m_sequence(int(m0), float(kappa), K).times
    raise click.BadParameter(f"未知の時刻列です: {spec}")


@rates.command()
@click.option("--a", "a_spec", required=True, help="数列 a_n の指定")
@click.option("--q", "q_spec", required=True, help="時刻列 q_k の指定")
@click.option("--K", "K", type=click.IntRange(min=1), required=True, help="項数")
def condense(a_spec: str, q_spec: str, K: int) -> None:
    """凝縮による両側評価"""

    with _exit_codes():
        result = condensation(_parse_a_sequence(a_spec), _parse_q_sequence(q_spec, K), K)
        _echo_rows(
            [
                ("direct", result.direct),
                ("condensed", result.condensed),
                ("lower", result.lower),
                ("alpha", result.alpha),
                ("sandwichHolds", result.sandwich_holds),
            ]
        )


@main.command()
@click.option(
    "--fixtures",
    "fixtures_path",
    type=click.Path(path_type=Path),
    default=None,
    help="フィクスチャ（省略時は QUADLAB_FIXTURES）",
)
@click.option(
    "--check",
    "checks",
    type=click.Choice(list(AUDITS)),
    multiple=True,
    help="実行する監査（複数指定可）",
)
@click.option(
    "--config",
    "config_path",
    type=click.Path(path_type=Path),
    default=None,
    help="audit セクションの当てはめ設定を使う実行設定",
)
def audit(
    fixtures_path: Optional[Path], checks: Tuple[str, ...], config_path: Optional[Path]
) -> None:
    """フィクスチャ上の数値監査を実行し、当てはめた定数と合否を表示"""

    with _exit_codes():
        settings = load_experiment_config(config_path).audit if config_path else None
        path = fixtures_path
        if path is None and settings is not None and settings.fixtures:
            path = Path(settings.fixtures)
        path = path or config.fixtures_path
        fixtures = load_fixtures(path, settings)
        results = run_audits(fixtures, checks or None)

        click.echo(f"🔍 監査: {path}")
        click.echo("=" * 50)
        for result in results:
            mark = "✅" if result.passed else "❌"
            click.echo(
                f"{mark} {result.name}: 定数={format_value(result.constant)} "
                f"較正={result.n_calibration} 検証={result.n_holdout} "
                f"違反={result.violations} {result.detail}".rstrip()
            )
        click.echo("=" * 50)

        failed = [result.name for result in results if not result.passed]
        if failed:
            _fail(f"監査に失敗しました: {', '.join(failed)}", EXIT_AUDIT_FAILED)
        click.echo(f"✅ すべての監査に合格しました ({len(results)} 件)")


@main.command()
def config_check() -> None:
    """設定を確認"""

    with _exit_codes():
        click.echo("🔧 QuadLab 設定確認")
        click.echo("=" * 30)

        if config.is_parallel:
            click.echo(f"✅ 並列処理: {config.threads} スレッド")
        else:
            click.echo("⚠️  並列処理: 無効（QUADLAB_THREADS 未設定または 1）")

        click.echo(f"📝 ログレベル: {config.log_level}")
        click.echo(f"📁 出力先: {config.output_base}")

        if config.fixtures_path.exists():
            click.echo(f"✅ フィクスチャ: {config.fixtures_path}")
        else:
            click.echo(f"❌ フィクスチャ: 見つかりません ({config.fixtures_path})")


if __name__ == "__main__":
    main()

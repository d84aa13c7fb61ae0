"""設定管理モジュール"""

import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from quadlab.utils.errors import ConfigError

ENV_KEYS = ("QUADLAB_THREADS", "QUADLAB_LOG_LEVEL", "QUADLAB_OUTPUT_DIR", "QUADLAB_FIXTURES")


class Config:
    """アプリケーション設定クラス"""

    def __init__(self) -> None:
        # 環境変数が設定されていない場合のみ.envファイルを読み込み
        if not any(os.getenv(key) for key in ENV_KEYS):
            env_path = Path(".env")
            if env_path.exists():
                load_dotenv(env_path)

        self.threads = self._parse_threads(os.getenv("QUADLAB_THREADS"))
        self.log_level = os.getenv("QUADLAB_LOG_LEVEL", "INFO").upper()
        self.output_base = Path(os.getenv("QUADLAB_OUTPUT_DIR", "outputs"))
        self.fixtures_path = Path(os.getenv("QUADLAB_FIXTURES", "fixtures/audit.yaml"))

    @staticmethod
    def _parse_threads(raw: Optional[str]) -> int:
        if raw is None or raw.strip() == "":
            return 1
        try:
            threads = int(raw)
        except ValueError as e:
            raise ConfigError(f"整数で指定してください: {raw!r}", path="QUADLAB_THREADS") from e
        if threads < 1:
            raise ConfigError(f"1 以上で指定してください: {threads}", path="QUADLAB_THREADS")
        return threads

    @property
    def is_parallel(self) -> bool:
        return self.threads > 1

    def get_output_dir(self, timestamp: Optional[str] = None) -> Path:
        """出力ディレクトリのパスを取得"""
        if timestamp is None:
            from datetime import datetime

            timestamp = datetime.now().strftime("%y%m%d_%H%M")

        base_dir = self.output_base / timestamp

        # ディレクトリ衝突の回避
        counter = 1
        original_dir = base_dir
        while base_dir.exists():
            base_dir = Path(f"{original_dir}_{counter}")
            counter += 1

        return base_dir


class ConfigProxy:
    """設定プロキシクラス（遅延初期化）"""

    def __init__(self) -> None:
        self._config: Optional[Config] = None

    def _get_config(self) -> Config:
        """設定インスタンスを取得（遅延初期化）"""
        if self._config is None:
            self._config = Config()
        return self._config

    def reset(self) -> None:
        """環境変数を読み直す（テスト用）"""
        self._config = None

    def __getattr__(self, name: str) -> object:
        """属性アクセスを設定インスタンスに委譲"""
        return getattr(self._get_config(), name)


# グローバル設定インスタンス（遅延初期化）
config = ConfigProxy()

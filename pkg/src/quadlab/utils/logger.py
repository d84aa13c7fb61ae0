"""ログ機能モジュール"""

import logging
import sys
from typing import Optional

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def get_logger(name: str, level: Optional[str] = None) -> logging.Logger:
    """
    ロガーを取得

    Args:
        name: ロガー名
        level: ログレベル（DEBUG, INFO, WARNING, ERROR, CRITICAL）

    Returns:
        設定済みのロガー
    """
    logger = logging.getLogger(name)

    # 既に設定済みの場合はそのまま返す
    if logger.handlers:
        return logger

    if level is None:
        level = "INFO"

    logger.setLevel(getattr(logging, level.upper()))

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(getattr(logging, level.upper()))
    console_handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT))
    logger.addHandler(console_handler)

    # 親ロガーへの伝播を防ぐ
    logger.propagate = False

    return logger


def setup_logging(level: str = "INFO") -> None:
    """
    アプリケーション全体のログ設定

    quadlab 配下の既存ロガーにも同じレベルを反映する。

    Args:
        level: ログレベル
    """
    numeric_level = getattr(logging, level.upper())
    logging.basicConfig(
        level=numeric_level,
        format=LOG_FORMAT,
        datefmt=DATE_FORMAT,
        handlers=[logging.StreamHandler(sys.stdout)],
    )

    for name, existing in logging.Logger.manager.loggerDict.items():
        if name.startswith("quadlab") and isinstance(existing, logging.Logger):
            existing.setLevel(numeric_level)
            for handler in existing.handlers:
                handler.setLevel(numeric_level)

    # 外部ライブラリのログレベルを調整
    logging.getLogger("numpy").setLevel(logging.WARNING)
    logging.getLogger("scipy").setLevel(logging.WARNING)
    logging.getLogger("hypothesis").setLevel(logging.WARNING)

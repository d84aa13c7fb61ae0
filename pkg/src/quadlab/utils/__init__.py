"""ユーティリティモジュール"""

from .errors import QuadLabError
from .logger import get_logger, setup_logging

__all__ = ["QuadLabError", "get_logger", "setup_logging"]

"""回帰率の数列と級数の診断モジュール"""

from .rates import RateSequence, condensation, is_admissible, log_star, summability_partial

__all__ = [
    "RateSequence",
    "condensation",
    "is_admissible",
    "log_star",
    "summability_partial",
]

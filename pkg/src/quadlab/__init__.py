"""QuadLab - 二次族 1 − ax² の再帰条件とパラメータ除外を数値的に調べる実験環境"""

__version__ = "0.1.0"
__author__ = "QuadLab Team"
__email__ = "team@quadlab.dev"

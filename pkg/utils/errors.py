"""
例外クラス定義
数値計算・フロー・設定読み込みで共通に使用する
"""


class GaussFlowError(Exception):
    """すべての例外の基底クラス"""


class InvalidInput(GaussFlowError, ValueError):
    """入力値が不正（非有限値、非対称行列など）"""


class GridTooSmall(GaussFlowError):
    """格子点数がステンシル幅より小さい"""


class NotSpaceLike(GaussFlowError):
    """誘導計量が正定値でない（空間的条件の破綻）"""


class DegenerateFrame(GaussFlowError):
    """法フレームのGram-Schmidtでピボットが小さすぎる"""


class InfeasibleRadius(GaussFlowError):
    """球半径が √2π/12 以上のため ε を選べない"""


class CflCollapse(GaussFlowError):
    """CFL条件による時間刻みが潰れた"""


class InvalidTime(GaussFlowError):
    """時刻が基準時刻 t₀ 以上"""


class NonFiniteState(GaussFlowError):
    """状態にNaN/Infが含まれる"""


class ConfigError(GaussFlowError):
    """設定ファイルの形式・値エラー"""

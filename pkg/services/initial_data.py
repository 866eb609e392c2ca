"""
初期データの生成
平面・正弦波・帯域制限ランダム・局所バンプ・円の各ジェネレータ
"""
import logging
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import bisect

from services.grassmann import distance, jordan_angles
from services.surface import GraphState, ParametricState, grid_coordinates, graph_to_parametric
from utils.errors import InvalidInput, NotSpaceLike
from utils.numerics import Signature, gradient

logger = logging.getLogger(__name__)

GENERATORS = ("flat", "sine", "band-limited-random", "bump", "circle")
MAX_MODES = 3
BISECTION_MAXITER = 200


def measured_radius(state: GraphState, order: int = 2) -> float:
    """グラフ状態の初期ガウス半径 sup ρ（差分勾配で評価）"""
    df = np.swapaxes(gradient(state.values, state.stencil(order)) + state.slope.T, -1, -2)
    return float(np.max(distance(jordan_angles(df, state.sig))))


def flat_state(sig: Signature, sizes: Sequence[int], periods: Sequence[float],
               slope: Optional[np.ndarray] = None, offset: Optional[Sequence[float]] = None) -> GraphState:
    """平面 f = Kx + c"""
    values = np.zeros(tuple(sizes) + (sig.n,))
    if offset is not None:
        values = values + np.asarray(offset, dtype=float)
    return GraphState(sig, sizes, periods, values, slope)


def sine_state(sig: Signature, sizes: Sequence[int], periods: Sequence[float], amplitude: float) -> GraphState:
    """f^α = a·sin(2π x_i / L_i + απ/3)、i = α mod m"""
    x = grid_coordinates(sizes, periods)
    values = np.zeros(tuple(sizes) + (sig.n,))
    for a in range(sig.n):
        i = a % sig.m
        values[..., a] = amplitude * np.sin(2.0 * np.pi * x[..., i] / periods[i] + a * np.pi / 3.0)
    return GraphState(sig, sizes, periods, values)


def _random_modes(sig: Signature, sizes, periods, rng: np.random.Generator) -> np.ndarray:
    """各軸3モード以下のランダムFourier和（振幅は |k|² で減衰）"""
    x = grid_coordinates(sizes, periods)
    phase_units = 2.0 * np.pi * x / np.asarray(periods)
    modes = np.stack(np.meshgrid(*[np.arange(-MAX_MODES, MAX_MODES + 1)] * sig.m, indexing='ij'), axis=-1)
    modes = modes.reshape(-1, sig.m)
    modes = modes[np.any(modes != 0, axis=1)]
    values = np.zeros(tuple(sizes) + (sig.n,))
    for a in range(sig.n):
        for k in modes:
            scale = 1.0 / (1.0 + float(k @ k))
            arg = phase_units @ k
            values[..., a] += scale * (rng.normal() * np.cos(arg) + rng.normal() * np.sin(arg))
    return values


def _scale_to_radius(base: GraphState, target_radius: float) -> GraphState:
    """振幅を二分法で調整し sup ρ を目標半径に合わせる"""
    if target_radius <= 0.0:
        return base.evolved(np.zeros_like(base.values), base.t)

    def radius_at(s: float) -> float:
        try:
            return measured_radius(base.evolved(s * base.values, base.t))
        except NotSpaceLike:
            return np.inf

    unit = radius_at(1.0)
    if unit == 0.0:
        raise InvalidInput("ランダムモードがすべて0です")
    lo, hi = 0.0, 1.0
    while radius_at(hi) < target_radius:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise InvalidInput(f"目標ガウス半径 {target_radius} に到達できません")
    if radius_at(hi) == target_radius:
        return base.evolved(hi * base.values, base.t)
    scale = bisect(lambda s: radius_at(s) - target_radius, lo, hi, xtol=1e-15, maxiter=BISECTION_MAXITER)
    return base.evolved(scale * base.values, base.t)


def band_limited_random_state(sig: Signature, sizes: Sequence[int], periods: Sequence[float],
                              seed: int, target_radius: Optional[float] = None,
                              amplitude: Optional[float] = None) -> GraphState:
    """
    帯域制限ランダム初期データ

    Args:
        seed: 乱数シード
        target_radius: 初期ガウス半径の目標値（指定時は振幅を二分法で決める）
        amplitude: 目標半径がない場合の振幅倍率
    """
    rng = np.random.default_rng(seed)
    base = GraphState(sig, sizes, periods, _random_modes(sig, sizes, periods, rng))
    if target_radius is not None:
        state = _scale_to_radius(base, float(target_radius))
        logger.debug(f"ランダム初期データ: seed={seed}, sup ρ = {measured_radius(state):.6g}")
        return state
    return base.evolved((1.0 if amplitude is None else amplitude) * base.values, base.t)


def bump_state(sig: Signature, sizes: Sequence[int], periods: Sequence[float], amplitude: float,
               width: Optional[float] = None) -> GraphState:
    """セル中央の局所ガウスバンプ（最小像距離で周期化）"""
    x = grid_coordinates(sizes, periods)
    L = np.asarray(periods)
    w = float(width) if width is not None else float(np.min(L)) / 10.0
    offset = x - L / 2.0
    offset = offset - L * np.round(offset / L)
    r2 = np.sum(offset ** 2, axis=-1)
    profile = np.exp(-r2 / (2.0 * w * w))
    values = np.zeros(tuple(sizes) + (sig.n,))
    for a in range(sig.n):
        values[..., a] = amplitude * profile / (a + 1)
    return GraphState(sig, sizes, periods, values)


def circle_state(sig: Signature, size: int, radius: float) -> ParametricState:
    """m = 1 の半径 R の円（第1・第2座標平面内、パラメータ周期 2π）"""
    if sig.m != 1 or sig.is_pseudo:
        raise InvalidInput("円の初期データはユークリッドの m = 1 のみ対応しています")
    u = np.arange(size) * (2.0 * np.pi / size)
    positions = np.zeros((size, sig.dim))
    positions[:, 0] = radius * np.cos(u)
    positions[:, 1] = radius * np.sin(u)
    return ParametricState(sig, (size,), (2.0 * np.pi,), positions)


def make_initial_state(sig: Signature, sizes: Sequence[int], periods: Sequence[float], generator: str,
                       representation: str = "graph", amplitude: Optional[float] = None,
                       target_radius: Optional[float] = None, seed: int = 0,
                       slope: Optional[np.ndarray] = None, width: Optional[float] = None,
                       radius: Optional[float] = None):
    """
    設定からの初期状態の生成

    Returns:
        GraphState または ParametricState（representation に従う）
    """
    if generator not in GENERATORS:
        raise InvalidInput(f"未知のジェネレータです: {generator}")

    if generator == "circle":
        if representation != "parametric":
            raise InvalidInput("円はパラメトリック表現でのみ生成できます")
        return circle_state(sig, int(sizes[0]), 1.0 if radius is None else float(radius))

    if generator == "flat":
        state = flat_state(sig, sizes, periods, slope=slope)
    elif generator == "sine":
        state = sine_state(sig, sizes, periods, 0.1 if amplitude is None else amplitude)
    elif generator == "bump":
        state = bump_state(sig, sizes, periods, 0.5 if amplitude is None else amplitude, width)
    else:
        state = band_limited_random_state(sig, sizes, periods, seed, target_radius, amplitude)

    if representation == "parametric":
        return graph_to_parametric(state)
    return state

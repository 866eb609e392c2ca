"""
平均曲率流の時間積分
グラフ表現（非パラメトリック化 ∂_t f = g^{ij}∂_i∂_j f）とパラメトリック表現（∂_t F = H）、
CFL制御、リスケール変換を扱う
"""
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, List, Optional

import numpy as np

from services.grassmann import BallParams
from services.surface import GRAPH, build_metric, geometry_snapshot
from utils.errors import CflCollapse, InvalidInput, NonFiniteState, NotSpaceLike
from utils.numerics import hessian

logger = logging.getLogger(__name__)

STEPPERS = ("euler", "rk4")
REPRESENTATIONS = ("graph", "parametric")
DT_FLOOR = 1e-14
PROBE_CFL = 0.5


class Termination(str, Enum):
    """ランの終了理由"""
    REACHED_T_END = "reached-t-end"
    NAN = "nan"
    NOT_SPACE_LIKE = "not-space-like"
    CFL_COLLAPSE = "cfl-collapse"


@dataclass
class FlowConfig:
    """時間積分の設定"""
    representation: str = "graph"
    stepper: str = "euler"
    cfl_factor: float = 0.5
    t_end: float = 1.0
    monitor_every: int = 10
    rescaled: bool = False
    ball: Optional[BallParams] = None
    seed: int = 0
    order: int = 2

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise InvalidInput(f"未知の表現です: {self.representation}")
        if self.stepper not in STEPPERS:
            raise InvalidInput(f"未知の時間積分法です: {self.stepper}")
        if not 0.0 < self.cfl_factor <= 1.0:
            raise InvalidInput(f"cfl_factor は (0, 1] です: {self.cfl_factor}")
        if not self.t_end > 0.0:
            raise InvalidInput(f"t_end は正です: {self.t_end}")
        if self.monitor_every < 1:
            raise InvalidInput(f"monitor_every は1以上です: {self.monitor_every}")


@dataclass
class RunResult:
    """ランの結果"""
    final_state: object
    records: List = field(default_factory=list)
    termination: Termination = Termination.REACHED_T_END
    steps: int = 0
    message: str = ""


def graph_rhs(state, order: int = 2) -> np.ndarray:
    """
    ∂_t f^α = g^{ij} ∂_i∂_j f^α

    m = n = 1 では f_xx / (1 ± f_x²) に一致する
    """
    metric = build_metric(state, order)
    return np.einsum('...ij,...ija->...a', metric.inverse, hessian(state.values, state.stencil(order)))


def parametric_rhs(state, order: int = 2) -> np.ndarray:
    """∂_t F = H（各格子点の平均曲率ベクトル）"""
    return geometry_snapshot(state, order).curvature.mean_curvature


def velocity(state, order: int = 2) -> np.ndarray:
    if state.representation == GRAPH:
        return graph_rhs(state, order)
    return parametric_rhs(state, order)


def cfl_dt(state, cfl_factor: float = 0.5, order: int = 2) -> float:
    """
    dt = cfl · min h² / (2m · max λ_max(g^{ij}))

    Raises:
        CflCollapse: λ_max(g^{ij}) が発散し dt が潰れた
    """
    metric = build_metric(state, order)
    lam = 1.0 / float(np.min(metric.eigenvalues))
    h2 = min(state.stencil(order).spacings) ** 2
    dt = cfl_factor * h2 / (2.0 * state.sig.m * lam)
    if not np.isfinite(dt) or dt < DT_FLOOR:
        raise CflCollapse(f"時間刻みが潰れました: dt = {dt:.3g}, λ_max(g⁻¹) = {lam:.3g}")
    return dt


def _advance(state, values: np.ndarray, t: float):
    if not np.all(np.isfinite(values)):
        raise NonFiniteState(f"t = {t:.6g} で非有限値が発生しました")
    return state.evolved(values, t)


def step(state, dt: float, stepper: str = "euler", order: int = 2):
    """
    陽的Euler法または古典的RK4で1ステップ進める

    Raises:
        NonFiniteState: 更新後にNaN/Infが含まれる
    """
    y = state.values
    t = state.t
    if stepper == "euler":
        return _advance(state, y + dt * velocity(state, order), t + dt)
    if stepper != "rk4":
        raise InvalidInput(f"未知の時間積分法です: {stepper}")

    k1 = velocity(state, order)
    k2 = velocity(_advance(state, y + 0.5 * dt * k1, t + 0.5 * dt), order)
    k3 = velocity(_advance(state, y + 0.5 * dt * k2, t + 0.5 * dt), order)
    k4 = velocity(_advance(state, y + dt * k3, t + dt), order)
    return _advance(state, y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), t + dt)


def rescale(state):
    """
    F̃ = F / √(2t+1)、t̃ = log(2t+1)

    グラフ表現では座標（周期）と値の両方を縮める。パラメトリック表現では位置と周期格子を縮める
    """
    if state.t < 0.0:
        raise InvalidInput(f"リスケールには t ≥ 0 が必要です: {state.t}")
    s = math.sqrt(2.0 * state.t + 1.0)
    t_tilde = math.log(2.0 * state.t + 1.0)
    if state.representation == GRAPH:
        periods = tuple(L / s for L in state.periods)
        return replace(state, periods=periods, values=state.values / s, t=t_tilde)
    return replace(state, positions_periodic=state.positions_periodic / s, lattice=state.lattice / s, t=t_tilde)


def flow_time_for(t_tilde: float) -> float:
    """t̃ = log(2t+1) の逆変換"""
    return 0.5 * math.expm1(t_tilde)


def integrate(state, duration: float, cfl_factor: float = PROBE_CFL, stepper: str = "rk4", order: int = 2):
    """CFL安定な等間隔サブステップで duration だけ進める"""
    if duration <= 0.0:
        return state
    dt_max = cfl_dt(state, cfl_factor, order)
    substeps = max(1, math.ceil(duration / dt_max))
    dt = duration / substeps
    for _ in range(substeps):
        state = step(state, dt, stepper, order)
    return state


def probe_states(state, dt_probe: float, count: int = 3, order: int = 2) -> list:
    """t, t+dt, ..., t+(count-1)dt の状態（RK4サブステップで積分）"""
    if dt_probe <= 0.0:
        raise InvalidInput(f"dt_probe は正です: {dt_probe}")
    states = [state]
    for _ in range(count - 1):
        states.append(integrate(states[-1], dt_probe, order=order))
    return states


def run(config: FlowConfig, initial, recorder: Optional[Callable] = None) -> RunResult:
    """
    t_end まで積分し monitor_every ステップごとに記録する

    Args:
        config: 時間積分の設定
        initial: 初期状態
        recorder: 状態から MonitorRecord を作る関数（省略時は既定のモニタ）

    Returns:
        RunResult（数値的破綻は例外ではなく終了理由として返す）
    """
    if recorder is None:
        from services.monitors import MonitorSuite
        recorder = MonitorSuite(initial.sig, ball=config.ball, rescaled=config.rescaled)

    state = initial
    result = RunResult(final_state=initial)
    logger.info(f"フロー開始: {config.representation}, {config.stepper}, t_end={config.t_end}")

    t_end = config.t_end
    tolerance = 1e-12 * max(1.0, t_end)
    try:
        result.records.append(recorder(state))
        while state.t < t_end - tolerance:
            dt = min(cfl_dt(state, config.cfl_factor, config.order), t_end - state.t)
            state = step(state, dt, config.stepper, config.order)
            result.steps += 1
            result.final_state = state
            if result.steps % config.monitor_every == 0:
                result.records.append(recorder(state))
                logger.debug(f"step {result.steps}: t = {state.t:.6g}, dt = {dt:.3g}")
        if result.records[-1].t < state.t:
            result.records.append(recorder(state))
    except NonFiniteState as e:
        result.termination = Termination.NAN
        result.message = str(e)
    except NotSpaceLike as e:
        result.termination = Termination.NOT_SPACE_LIKE
        result.message = str(e)
    except CflCollapse as e:
        result.termination = Termination.CFL_COLLAPSE
        result.message = str(e)

    if result.termination is Termination.REACHED_T_END:
        logger.info(f"フロー終了: t = {state.t:.6g}, {result.steps} ステップ")
    else:
        logger.warning(f"フロー中断 ({result.termination.value}): {result.message}")
    return result

"""
フローに沿って追跡するスカラー量とモノトニシティ判定
ガウス半径、重み付き曲率、高さ、法方向位置、Huisken密度、自己相似残差、
発展方程式の差分残差を計算する
"""
import logging
from dataclasses import dataclass, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erf

from services.flow import probe_states, rescale
from services.grassmann import SHORT_TIME_RADIUS, BallParams, GaussData, confinement_potential
from services.identities import commutator_norms
from services.surface import (
    GRAPH, GeometrySnapshot, covariant_derivative_norms, gauss_data, geometry_snapshot,
    graph_to_parametric, laplace_beltrami, normal_part, shape_operators, tension_field,
)
from utils.errors import InfeasibleRadius, InvalidInput, InvalidTime
from utils.numerics import Signature, sym_inverse_sqrt

logger = logging.getLogger(__name__)

RESIDUAL_ORDER = 4


@dataclass
class MonitorRecord:
    """ある時刻の全モニタ値。未計算の値は None（CSVでは空欄）"""
    t: float
    sup_B2: Optional[float] = None
    sup_H2: Optional[float] = None
    gauss_radius_sup: Optional[float] = None
    height_sup: Optional[float] = None
    weighted_sup: Optional[float] = None
    decay_monitor: Optional[float] = None
    normal_position_sup: Optional[float] = None
    huisken_density: Optional[float] = None
    self_similar_residual: Optional[float] = None
    res_g: Optional[float] = None
    res_gamma: Optional[float] = None
    res_B2: Optional[float] = None
    huisken_truncation: Optional[float] = None
    pseudo_decay_sup: Optional[float] = None
    res_volume: Optional[float] = None
    res_H2: Optional[float] = None
    t_rescaled: Optional[float] = None
    enb_residual: Optional[float] = None


COLUMNS = [f.name for f in fields(MonitorRecord)]


@dataclass(frozen=True)
class Slack:
    """
    モノトニシティ判定の許容幅

    reference が "initial" なら初期値との比較、"previous" なら直前の記録との比較、
    "zero" なら各値が許容幅以下か（単調性ではなく上界の判定）
    """
    relative: float = 0.0
    absolute: float = 0.0
    reference: str = "previous"

    def allowance(self, value):
        return self.relative * abs(value) + self.absolute


DEFAULT_SLACKS: Dict[str, Slack] = {
    "gauss_radius_sup": Slack(absolute=5e-3, reference="initial"),
    "weighted_sup": Slack(relative=1e-3),
    "decay_monitor": Slack(relative=1e-3),
    "sup_B2": Slack(relative=1e-6, absolute=1e-10),
    "height_sup": Slack(absolute=1e-6),
    "huisken_density": Slack(absolute=1e-4),
    "pseudo_decay_sup": Slack(relative=1e-3),
    "enb_residual": Slack(absolute=1e-2, reference="zero"),
}

CT_FIT_TOL = 1e-2
HUISKEN_TRUNCATION_WARN = 1e-2


def gauss_radius(gauss: GaussData, ball: Optional[BallParams] = None):
    """
    sup ρ と各点の h₁ = 1 + ε − cos(√2ρ)

    Returns:
        (ρ_max, h₁)。ball が重み付き領域でなければ h₁ は None
    """
    h1 = None
    if ball is not None and ball.weighted:
        h1 = confinement_potential(gauss.distance, ball.epsilon)
    return gauss.radius, h1


def weighted_monitor(snapshot: GeometrySnapshot, gauss: GaussData, ball: Optional[BallParams]) -> Tuple[float, float]:
    """
    sup(|B|² h₁^q) と sup(t|B|² h₁^q + h₁^q)

    Raises:
        InfeasibleRadius: 球半径が √2π/12 以上
    """
    if ball is None or not ball.weighted:
        radius = None if ball is None else ball.radius
        raise InfeasibleRadius(f"重み付きモニタには R₀ < √2π/12 が必要です: R₀ = {radius}")
    _, h1 = gauss_radius(gauss, ball)
    weight = h1 ** ball.q
    b2 = snapshot.curvature.norm_B2
    return float(np.max(b2 * weight)), float(np.max(snapshot.t * b2 * weight + weight))


def height_monitor(state) -> float:
    """sup |f|（パラメトリックでは sup sqrt(Σ_α ⟨F, ε_α⟩²)）"""
    heights = state.positions()[..., state.sig.m:]
    return float(np.max(np.sqrt(np.sum(heights ** 2, axis=-1))))


def normal_position_monitor(snapshot: GeometrySnapshot,
                            growth: Optional[Tuple[float, float]] = None) -> Tuple[float, Optional[bool]]:
    """
    sup Σ_α ⟨F, e_α⟩² と成長条件 Σ_α ⟨F, e_α⟩² ≤ C′(1 + |F|²)^{1−δ} の判定

    Args:
        snapshot: 幾何量
        growth: (C′, δ)。省略時は判定しない
    """
    sig = snapshot.sig
    f = snapshot.positions
    frame = snapshot.curvature.normal_frame
    coeffs = np.einsum('...d,...ad,d->...a', f, frame, sig.metric_diag)
    total = np.sum(coeffs ** 2, axis=-1)
    holds = None
    if growth is not None:
        c_prime, delta = growth
        holds = bool(np.all(total <= c_prime * (1.0 + np.abs(sig.inner(f, f))) ** (1.0 - delta)))
    return float(np.max(total)), holds


def huisken_density(snapshot: GeometrySnapshot, center: Sequence[float], t0: float,
                    exponent: Optional[float] = None) -> Tuple[float, float]:
    """
    後ろ向き熱核の積分 Θ = ∫ (4π(t₀−t))^{−k} exp(−|F−x₀|² / 4(t₀−t)) dμ

    周期セル上の中点則で評価し、セル外に落ちる核の質量を打ち切り誤差として返す

    Args:
        snapshot: 幾何量（ユークリッドのみ）
        center: x₀（m+n 成分）
        t0: 基準時刻
        exponent: k（既定 m/2）

    Returns:
        (Θ, 打ち切り誤差の上界)

    Raises:
        InvalidTime: t ≥ t₀
    """
    sig = snapshot.sig
    if sig.is_pseudo:
        raise InvalidInput("Huisken密度はユークリッドのみ対応しています")
    tau = t0 - snapshot.t
    if tau <= 0.0:
        raise InvalidTime(f"t = {snapshot.t} は t₀ = {t0} 以上です")
    x0 = np.asarray(center, dtype=float)
    if x0.shape != (sig.dim,):
        raise InvalidInput(f"中心の次元が不正です: {x0.shape}")
    k = sig.m / 2.0 if exponent is None else float(exponent)

    spacings = np.asarray(snapshot.spec.spacings)
    cell = float(np.prod(spacings))
    r2 = np.sum((snapshot.positions - x0) ** 2, axis=-1)
    kernel = (4.0 * np.pi * tau) ** (-k) * np.exp(-r2 / (4.0 * tau))
    theta = float(np.sum(kernel * snapshot.metric.sqrt_det) * cell)

    periods = spacings * np.asarray(snapshot.sizes)
    lower = -spacings / 2.0 - x0[:sig.m]
    upper = periods - spacings / 2.0 - x0[:sig.m]
    width = np.sqrt(4.0 * tau)
    mass = np.prod(0.5 * (erf(upper / width) - erf(lower / width)))
    return theta, float(1.0 - mass)


def self_similar_residual(snapshot: GeometrySnapshot) -> float:
    """sup |F̃⊥ − H̃|（外部計量の絶対値ノルム）"""
    sig = snapshot.sig
    gap = normal_part(snapshot.positions, snapshot.metric, sig) - snapshot.curvature.mean_curvature
    return float(np.max(np.sqrt(np.abs(sig.inner(gap, gap)))))


def pseudo_decay_monitor(snapshot: GeometrySnapshot, gauss: GaussData) -> float:
    """sup(2t||B||² + ρ²)（空間的な場合の c/t 評価の量）"""
    return float(np.max(2.0 * snapshot.t * snapshot.curvature.norm_B2 + gauss.distance ** 2))


def enb_residual(t_prev: float, b2_prev: float, t: float, b2: float, n: int) -> float:
    """
    d/dt sup||B||² ≤ −(2/n)(sup||B||²)² の離散残差

    (y₁ − y₀)/Δt + (2/n) y₀ y₁ を返す。1/y₁ − 1/y₀ ≥ (2/n)Δt と同値なので、
    比較方程式 y′ = −(2/n)y² の解では記録間隔によらず0になる。正の値が不等式の破れ

    Raises:
        InvalidTime: t ≤ t_prev
    """
    dt = t - t_prev
    if not dt > 0.0:
        raise InvalidTime(f"記録時刻が増加していません: {t_prev} → {t}")
    return float((b2 - b2_prev) / dt + (2.0 / n) * b2_prev * b2)


@dataclass(frozen=True)
class IdentityResiduals:
    """発展方程式の差分残差（中央の時刻で評価）"""
    res_g: float
    res_gamma: float
    res_B2: float
    res_volume: float
    res_H2: float


def _plane_chart(snapshot: GeometrySnapshot, base: GeometrySnapshot, tangent_frame: np.ndarray) -> np.ndarray:
    """
    snapshot の接平面を base の接平面上のグラフ Φ = b a⁻¹ として表す

    b_αk = ε_α ⟨X_k, e_α⟩、a_jk = ⟨X_k, ẽ_j⟩（ẽ は base の正規直交接フレーム）
    """
    eta = base.sig.metric_diag
    curv = base.curvature
    x = snapshot.metric.tangent
    b = curv.normal_signs[:, None] * np.einsum('...kd,...ad,d->...ak', x, curv.normal_frame, eta)
    a = np.einsum('...kd,...jd,d->...jk', x, tangent_frame, eta)
    # Φ a = b を解く
    return np.swapaxes(np.linalg.solve(np.swapaxes(a, -1, -2), np.swapaxes(b, -1, -2)), -1, -2)


def identity_residuals(state, dt_probe: float, order: int = RESIDUAL_ORDER) -> IdentityResiduals:
    """
    t, t+dt, t+2dt の3状態から中心差分で時間微分を取り、中央の時刻で各恒等式の残差を評価する

    誤差は O(dt² + h²)
    """
    if state.representation == GRAPH:
        state = graph_to_parametric(state)
    probes = probe_states(state, dt_probe, 3)
    before, mid, after = (geometry_snapshot(p, order) for p in probes)
    sig = mid.sig
    eta = sig.metric_diag
    s = sig.normal_sign
    two_dt = 2.0 * dt_probe
    curv = mid.curvature

    dg = (after.metric.metric - before.metric.metric) / two_dt
    h_dot_b = np.einsum('...d,...ijd,d->...ij', curv.mean_curvature, curv.sff, eta)
    res_g = float(np.max(np.abs(dg + 2.0 * h_dot_b)))

    dvol = (after.metric.sqrt_det - before.metric.sqrt_det) / two_dt
    h2_signed = sig.inner(curv.mean_curvature, curv.mean_curvature)
    res_volume = float(np.max(np.abs(dvol + h2_signed * mid.metric.sqrt_det)))

    tangent_frame = sym_inverse_sqrt(mid.metric.metric) @ mid.metric.tangent
    chart_rate = (_plane_chart(after, mid, tangent_frame) - _plane_chart(before, mid, tangent_frame)) / two_dt
    res_gamma = float(np.max(np.abs(chart_rate - tension_field(mid))))

    grad_b2, grad_h2 = covariant_derivative_norms(mid)
    shapes = shape_operators(mid)
    s2 = np.sum(curv.gram ** 2, axis=(-2, -1))
    commutators = commutator_norms(shapes)

    db2 = (after.curvature.norm_B2 - before.curvature.norm_B2) / two_dt
    heat_b2 = db2 - laplace_beltrami(curv.norm_B2, mid)
    res_B2 = float(np.max(np.abs(heat_b2 - (-2.0 * grad_b2 + 2.0 * s * (commutators + s2)))))

    dh2 = (after.curvature.norm_H2 - before.curvature.norm_H2) / two_dt
    heat_h2 = dh2 - laplace_beltrami(curv.norm_H2, mid)
    quad = np.einsum('...ab,...a,...b->...', curv.gram, curv.mean_components, curv.mean_components)
    res_H2 = float(np.max(np.abs(heat_h2 - (-2.0 * grad_h2 + 2.0 * s * quad))))

    return IdentityResiduals(res_g=res_g, res_gamma=res_gamma, res_B2=res_B2,
                             res_volume=res_volume, res_H2=res_H2)


@dataclass
class HuiskenSettings:
    """Huisken密度の中心 x₀、基準時刻 t₀、指数 k（None で m/2）"""
    center: Sequence[float]
    t0: float
    exponent: Optional[float] = None


class MonitorSuite:
    """状態から MonitorRecord を作るレコーダ"""

    ALL = ("sup_B2", "sup_H2", "gauss_radius", "height", "weighted", "normal_position",
           "huisken", "self_similar", "identity_residuals", "pseudo_decay", "enb")

    def __init__(self, sig: Signature, ball: Optional[BallParams] = None, rescaled: bool = False,
                 enabled: Optional[Sequence[str]] = None, huisken: Optional[HuiskenSettings] = None,
                 growth: Optional[Tuple[float, float]] = None, dt_probe: Optional[float] = None):
        """
        Args:
            sig: 外部空間の符号
            ball: ガウス球のパラメータ（重み付きモニタに使う）
            rescaled: リスケールしたフローの自己相似残差を記録する
            enabled: 有効なモニタ名（省略時は適用可能なものすべて）
            huisken: Huisken密度の設定
            growth: 法方向位置の成長条件 (C′, δ)
            dt_probe: 恒等式残差のプローブ間隔（省略時は残差を記録しない）
        """
        unknown = set(enabled or ()) - set(self.ALL)
        if unknown:
            raise InvalidInput(f"未知のモニタです: {sorted(unknown)}")
        explicit = set(enabled) if enabled is not None else None
        self.sig = sig
        self.ball = ball
        self.rescaled = rescaled
        self.huisken = huisken
        self.growth = growth
        self.dt_probe = dt_probe
        self.growth_violations = 0

        if explicit is not None and "weighted" in explicit and (ball is None or not ball.weighted):
            radius = None if ball is None else ball.radius
            raise InfeasibleRadius(f"重み付きモニタが指定されましたが R₀ = {radius} は √2π/12 以上です")
        if explicit is not None and "huisken" in explicit and (huisken is None or sig.is_pseudo):
            raise InvalidInput("Huisken密度にはユークリッド符号と x₀, t₀ の設定が必要です")

        self.enabled = set(self.ALL) if explicit is None else explicit
        if ball is None or not ball.weighted or sig.is_pseudo:
            self.enabled.discard("weighted")
        if huisken is None or sig.is_pseudo:
            self.enabled.discard("huisken")
        if not rescaled:
            self.enabled.discard("self_similar")
        if dt_probe is None:
            self.enabled.discard("identity_residuals")
        if not sig.is_pseudo:
            self.enabled.discard("pseudo_decay")
            self.enabled.discard("enb")
        self._last_b2: Optional[Tuple[float, float]] = None
        self._warned_huisken = False
        self._warned_truncation = False

    def __call__(self, state) -> MonitorRecord:
        snapshot = geometry_snapshot(state)
        reference = None if self.ball is None else self.ball.center
        gauss = gauss_data(snapshot, reference)
        record = MonitorRecord(t=state.t)
        on = self.enabled

        if "sup_B2" in on:
            record.sup_B2 = snapshot.sup_B2
        if "sup_H2" in on:
            record.sup_H2 = snapshot.sup_H2
        if "gauss_radius" in on:
            record.gauss_radius_sup = gauss.radius
        if "height" in on:
            record.height_sup = height_monitor(state)
        if "weighted" in on:
            record.weighted_sup, record.decay_monitor = weighted_monitor(snapshot, gauss, self.ball)
        if "normal_position" in on:
            record.normal_position_sup, holds = normal_position_monitor(snapshot, self.growth)
            if holds is False:
                self.growth_violations += 1
        if "huisken" in on:
            if state.t < self.huisken.t0:
                record.huisken_density, record.huisken_truncation = huisken_density(
                    snapshot, self.huisken.center, self.huisken.t0, self.huisken.exponent)
                if record.huisken_truncation > HUISKEN_TRUNCATION_WARN and not self._warned_truncation:
                    logger.warning(f"Huisken密度の打ち切り誤差が大きい: {record.huisken_truncation:.3g}"
                                   f"（周期セルに対して t₀ − t が大きすぎます）")
                    self._warned_truncation = True
            elif not self._warned_huisken:
                logger.warning(f"t ≥ t₀ = {self.huisken.t0} のため Huisken密度の記録を停止します")
                self._warned_huisken = True
        if "pseudo_decay" in on:
            record.pseudo_decay_sup = pseudo_decay_monitor(snapshot, gauss)
        if "enb" in on:
            b2 = snapshot.sup_B2
            if self._last_b2 is not None and state.t > self._last_b2[0]:
                record.enb_residual = enb_residual(*self._last_b2, state.t, b2, self.sig.n)
            # 時刻が戻ったら新しいランとして扱う
            self._last_b2 = (state.t, b2)
        if "self_similar" in on:
            scaled = rescale(state)
            record.self_similar_residual = self_similar_residual(geometry_snapshot(scaled))
            record.t_rescaled = scaled.t
        if "identity_residuals" in on:
            residuals = identity_residuals(state, self.dt_probe)
            record.res_g = residuals.res_g
            record.res_gamma = residuals.res_gamma
            record.res_B2 = residuals.res_B2
            record.res_volume = residuals.res_volume
            record.res_H2 = residuals.res_H2

        logger.debug(f"t = {record.t:.6g}: sup|B|² = {record.sup_B2}, ρ_max = {record.gauss_radius_sup}")
        return record

    def predicted(self, initial, initial_record: Optional[MonitorRecord] = None) -> List[str]:
        """
        このランで単調非増加が予言されるモニタ列

        Args:
            initial: 初期状態（定数勾配・周期格子の有無を見る）
            initial_record: 初期時刻の記録（ガウス半径の条件を見る）
        """
        sig = self.sig
        predicted = []
        radius0 = None if initial_record is None else initial_record.gauss_radius_sup
        if "gauss_radius" in self.enabled and (sig.is_pseudo or radius0 is None or radius0 < SHORT_TIME_RADIUS):
            predicted.append("gauss_radius_sup")
        if "weighted" in self.enabled:
            predicted.extend(["weighted_sup", "decay_monitor", "ct_fit"])
        if sig.is_pseudo and "sup_B2" in self.enabled:
            predicted.append("sup_B2")
        if "height" in self.enabled and _bounded_heights(initial):
            predicted.append("height_sup")
        if "huisken" in self.enabled:
            predicted.append("huisken_density")
        if "pseudo_decay" in self.enabled:
            predicted.append("pseudo_decay_sup")
        if "enb" in self.enabled:
            predicted.append("enb_residual")
        return predicted


def _bounded_heights(state) -> bool:
    """法座標が周期的（定数勾配・周期格子の法成分がない）"""
    if state.representation == GRAPH:
        return not np.any(state.slope)
    return not np.any(state.lattice[:, state.sig.m:])


@dataclass
class Verdict:
    """1つのモニタ列の単調性判定"""
    monitor: str
    predicted: bool
    holds: bool
    worst_excess: Optional[float] = None
    samples: int = 0


def _series(records: Sequence[MonitorRecord], name: str) -> np.ndarray:
    return np.array([getattr(r, name) for r in records if getattr(r, name) is not None], dtype=float)


def check_series(values: np.ndarray, slack: Slack) -> Tuple[bool, Optional[float]]:
    """
    非増加の判定（reference が "zero" なら上界の判定）

    Returns:
        (判定, 最大超過量)。超過量が正なら違反
    """
    if slack.reference == "zero":
        if values.size == 0:
            return True, None
        worst = float(np.max(values - slack.allowance(np.zeros_like(values))))
        return worst <= 0.0, worst
    if values.size < 2:
        return True, None
    if slack.reference == "initial":
        base = np.full(values.size - 1, values[0])
    else:
        base = values[:-1]
    allowance = slack.allowance(base)
    excess = values[1:] - base - allowance
    worst = float(np.max(excess))
    return worst <= 0.0, worst


@dataclass
class CtFit:
    """sup|B|² ≤ c/t の当てはめ"""
    c: Optional[float]
    decay0: Optional[float]
    bound: Optional[float]
    holds: bool = True


def ct_fit(records: Sequence[MonitorRecord], t_end: float) -> CtFit:
    """
    c = max_{t ≥ 0.1 t_end} t · sup|B|²

    上界は decay_monitor(0)·(1 + CT_FIT_TOL)
    """
    samples = [(r.t, r.sup_B2) for r in records if r.sup_B2 is not None and r.t >= 0.1 * t_end and r.t > 0.0]
    c = max((t * b for t, b in samples), default=None)
    decay0 = records[0].decay_monitor if records else None
    if decay0 is None:
        return CtFit(c=c, decay0=None, bound=None)
    bound = decay0 * (1.0 + CT_FIT_TOL)
    holds = c is None or c <= bound
    return CtFit(c=c, decay0=decay0, bound=bound, holds=holds)


def monotonicity_verdicts(records: Sequence[MonitorRecord], predicted: Sequence[str],
                          slacks: Optional[Dict[str, Slack]] = None) -> Dict[str, Verdict]:
    """
    各モニタ列の非増加判定（run と report で共通）

    Huisken密度の許容幅には記録された打ち切り誤差の最大値を加える
    """
    slacks = {**DEFAULT_SLACKS, **(slacks or {})}
    verdicts = {}
    for name, slack in slacks.items():
        values = _series(records, name)
        if values.size == 0:
            continue
        if name == "huisken_density":
            truncation = _series(records, "huisken_truncation")
            extra = float(np.max(truncation)) if truncation.size else 0.0
            slack = Slack(slack.relative, slack.absolute + extra, slack.reference)
        holds, worst = check_series(values, slack)
        verdicts[name] = Verdict(monitor=name, predicted=name in predicted, holds=holds,
                                 worst_excess=worst, samples=int(values.size))
    return verdicts


def violations(verdicts: Dict[str, Verdict]) -> List[str]:
    """予言されたのに破れたモニタ"""
    return [v.monitor for v in verdicts.values() if v.predicted and not v.holds]

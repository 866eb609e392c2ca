"""
Grassmann多様体上の幾何
Jordan角、基準平面からの測地距離、Plückerペアリング、ガウス球の定数（ε, q）を扱う
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from utils.errors import InfeasibleRadius, InvalidInput, NotSpaceLike
from utils.numerics import Signature, svd_small, sym_inverse_sqrt

# 重み付き評価が成り立つ半径の上限 √2π/12 と短時間存在の上限 √2π/4
CRITICAL_RADIUS = np.sqrt(2.0) * np.pi / 12.0
SHORT_TIME_RADIUS = np.sqrt(2.0) * np.pi / 4.0

SPACE_LIKE_GUARD = 1e-12
EPSILON_MARGIN = 1e-12
EPSILON_FLOOR = 1e-12
DECAY_TOLERANCE = 1e-10


class AngleKind(str, Enum):
    """Jordan角の種類"""
    CIRCULAR = "circular"
    HYPERBOLIC = "hyperbolic"


@dataclass(frozen=True)
class JordanAngles:
    """
    格子点ごとのJordan角

    angles は (..., m) の配列で、各点で降順に並ぶ
    """
    angles: np.ndarray
    kind: AngleKind = AngleKind.CIRCULAR

    @property
    def m(self) -> int:
        return self.angles.shape[-1]


@dataclass(frozen=True)
class GaussData:
    """ガウス写像のデータ（Jordan角、距離 ρ、ペアリング w、基準平面 P₀）"""
    angles: JordanAngles
    distance: np.ndarray
    pairing: np.ndarray
    reference: np.ndarray
    pairing_error: Optional[np.ndarray] = None

    @property
    def radius(self) -> float:
        """sup ρ"""
        return float(np.max(self.distance)) if self.distance.size else 0.0


def _angle_kind(sig: Signature) -> AngleKind:
    return AngleKind.HYPERBOLIC if sig.is_pseudo else AngleKind.CIRCULAR


def _pad_angles(sigma: np.ndarray, m: int) -> np.ndarray:
    k = sigma.shape[-1]
    if k == m:
        return sigma
    pad = np.zeros(sigma.shape[:-1] + (m - k,))
    return np.concatenate([sigma, pad], axis=-1)


def jordan_angles(df, sig: Signature) -> JordanAngles:
    """
    グラフの勾配 Df（n×m）から基準座標平面とのJordan角を求める

    ユークリッドでは θ = arctan σ(Df)、擬ユークリッドでは θ = artanh σ(Df)

    Args:
        df: (..., n, m) の勾配行列
        sig: 外部空間の符号

    Returns:
        JordanAngles（降順、長さ m）
    """
    df = np.asarray(df, dtype=float)
    if df.shape[-2:] != (sig.n, sig.m):
        raise InvalidInput(f"勾配行列の形が不正です: {df.shape[-2:]} != {(sig.n, sig.m)}")
    sigma = _pad_angles(svd_small(df).sigma, sig.m)

    if not sig.is_pseudo:
        return JordanAngles(np.arctan(sigma), AngleKind.CIRCULAR)

    worst = float(np.max(sigma)) if sigma.size else 0.0
    if worst >= 1.0 - SPACE_LIKE_GUARD:
        raise NotSpaceLike(f"空間的ではありません: max σ(Df) = {worst:.15g}")
    return JordanAngles(np.arctanh(sigma), AngleKind.HYPERBOLIC)


def jordan_angles_to_frame(tangent, reference, sig: Signature) -> JordanAngles:
    """
    任意の接フレーム（行ベクトル）と基準平面 P₀（正規直交行）のJordan角

    ユークリッドでは P₀ と P₀⊥ への射影の特異値から θ = atan2(sin, cos) を取る。
    擬ユークリッドでは座標平面 P₀ のみ対応し、P₀ 上のグラフ写像から求める

    Args:
        tangent: (..., m, m+n) 接空間を張る行（正規直交でなくてよい）
        reference: (m, m+n) 正規直交な基準フレーム
        sig: 外部空間の符号
    """
    x = np.asarray(tangent, dtype=float)
    p0 = np.asarray(reference, dtype=float)
    if x.shape[-2:] != (sig.m, sig.dim) or p0.shape != (sig.m, sig.dim):
        raise InvalidInput(f"フレームの形が不正です: {x.shape[-2:]}, {p0.shape}")

    if sig.is_pseudo:
        if not np.allclose(p0, np.eye(sig.m, sig.dim), atol=1e-14):
            raise InvalidInput("擬ユークリッドでは座標平面以外の基準フレームに対応していません")
        a = x[..., :, :sig.m]
        b = x[..., :, sig.m:]
        # X = A [I | Dfᵀ] より Dfᵀ = A⁻¹ B
        df_t = np.linalg.solve(a, b)
        return jordan_angles(np.swapaxes(df_t, -1, -2), sig)

    if not np.allclose(p0 @ p0.T, np.eye(sig.m), atol=1e-10):
        raise InvalidInput("基準フレームが正規直交ではありません")
    q = sym_inverse_sqrt(x @ np.swapaxes(x, -1, -2)) @ x
    cos_values = svd_small(q @ p0.T).sigma
    complement = np.eye(sig.dim) - p0.T @ p0
    sin_values = _pad_angles(svd_small(q @ complement).sigma, sig.m)
    # cos 降順に sin 昇順が対応する
    sin_values = np.sort(sin_values, axis=-1)
    angles = np.arctan2(sin_values, np.clip(cos_values, 0.0, 1.0))
    return JordanAngles(np.sort(angles, axis=-1)[..., ::-1], AngleKind.CIRCULAR)


def distance(ja: JordanAngles) -> np.ndarray:
    """基準平面からの測地距離 ρ = sqrt(Σθ²)"""
    return np.sqrt(np.sum(ja.angles ** 2, axis=-1))


def plucker_pairing(ja: JordanAngles) -> np.ndarray:
    """w = ⟨P, P₀⟩ = Πcosθ（円）または Πcoshθ（双曲）"""
    if ja.kind is AngleKind.HYPERBOLIC:
        return np.prod(np.cosh(ja.angles), axis=-1)
    return np.prod(np.cos(ja.angles), axis=-1)


def lower_volume_bound(ja: JordanAngles, radius: Optional[float] = None) -> np.ndarray:
    """
    空間的グラフの体積密度の下界 (Πcosh(λ_i R))⁻¹

    λ_i = θ_i / ρ は単位方向、R は球半径（省略時は各点の ρ）
    """
    rho = distance(ja)
    safe = np.where(rho > 0.0, rho, 1.0)
    directions = ja.angles / safe[..., None]
    r = rho if radius is None else np.full_like(rho, float(radius))
    return 1.0 / np.prod(np.cosh(directions * r[..., None]), axis=-1)


def w_floor(m: int) -> float:
    """w₀ = cos(√2π/12)^m"""
    if m < 1:
        raise InvalidInput(f"m は1以上です: {m}")
    return float(np.cos(CRITICAL_RADIUS) ** m)


def choose_epsilon(r0: float) -> float:
    """
    重み付き評価の2条件を同時に満たす最小の ε > 0 を返す

    条件1: (3/(2r₀) − r₀/(2(1−r₀²)))ε + 3/(2r₀) − 1/2 − r₀/(2(1+r₀)) ≤ 0
    条件2: 6/r₀ − r₀ − 5 − 5ε ≤ 0

    Raises:
        InfeasibleRadius: r₀ ≤ √3/2（条件1の係数が非負）
    """
    r0 = float(r0)
    if not np.isfinite(r0) or r0 <= np.sqrt(3.0) / 2.0:
        raise InfeasibleRadius(f"r₀ = {r0} は √3/2 以下です")
    if r0 > 1.0:
        raise InvalidInput(f"r₀ は1以下です: {r0}")

    b = 3.0 / (2.0 * r0) - 0.5 - r0 / (2.0 * (1.0 + r0))
    if r0 >= 1.0 or b <= 0.0:
        first = 0.0
    else:
        a = 3.0 / (2.0 * r0) - r0 / (2.0 * (1.0 - r0 * r0))
        first = -b / a
    second = max(0.0, (6.0 / r0 - r0 - 5.0) / 5.0)

    eps = max(first, second) * (1.0 + EPSILON_MARGIN)
    return eps if eps > 0.0 else EPSILON_FLOOR


def q_exponent(r0: float, eps: float) -> float:
    """q = 3((1+ε)/r₀ − 1)"""
    return 3.0 * ((1.0 + eps) / r0 - 1.0)


def confinement_potential(rho, eps: float) -> np.ndarray:
    """h₁ = 1 + ε − cos(√2ρ)"""
    return 1.0 + eps - np.cos(np.sqrt(2.0) * np.asarray(rho, dtype=float))


def log_gradient_bound(eps: float) -> float:
    """sup_θ sinθ / (1+ε−cosθ) = √(ε(ε+2)) / (ε(ε+2))"""
    e = eps * (eps + 2.0)
    return float(np.sqrt(e) / e)


def gradient_coefficient(r, r0: float, eps: float) -> np.ndarray:
    """(3/(2r₀) − r/(2(1−r²)))ε + 3/(2r₀) − 1/2 − r/(2(1+r))。r について非増加"""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide='ignore'):
        pole = np.where(r < 1.0, r / (2.0 * (1.0 - r * r)), np.inf)
    return (3.0 / (2.0 * r0) - pole) * eps + 3.0 / (2.0 * r0) - 0.5 - r / (2.0 * (1.0 + r))


def decay_polynomial(r, eps: float, q: float) -> np.ndarray:
    """A(r) = (1+ε−r)² − 2q(r+εr−1)"""
    r = np.asarray(r, dtype=float)
    return (1.0 + eps - r) ** 2 - 2.0 * q * (r + eps * r - 1.0)


@dataclass(frozen=True)
class BallParams:
    """
    ガウス像を含む測地球のパラメータ

    epsilon と q は R₀ < √2π/12 のときのみ設定される
    """
    radius: float
    r0: float
    epsilon: Optional[float] = None
    q: Optional[float] = None
    center: Optional[np.ndarray] = None

    @property
    def weighted(self) -> bool:
        return self.epsilon is not None

    @classmethod
    def for_radius(cls, radius: float, require_weighted: bool = False,
                   center: Optional[np.ndarray] = None) -> "BallParams":
        """
        半径 R₀ から r₀ = cos(√2R₀)、ε、q を計算する

        Args:
            radius: 球半径 R₀
            require_weighted: True なら R₀ ≥ √2π/12 で InfeasibleRadius
            center: 基準フレーム（省略時は座標平面）
        """
        radius = float(radius)
        if not np.isfinite(radius) or radius < 0.0:
            raise InvalidInput(f"球半径が不正です: {radius}")
        r0 = float(np.cos(np.sqrt(2.0) * radius))
        if radius >= CRITICAL_RADIUS:
            if require_weighted:
                raise InfeasibleRadius(
                    f"R₀ = {radius:.6g} は √2π/12 = {CRITICAL_RADIUS:.6g} 以上です"
                )
            return cls(radius=radius, r0=r0, center=center)
        eps = choose_epsilon(r0)
        q = q_exponent(r0, eps)
        # A(r₀) ≤ 0 が減衰モニタの非増加に必要
        if decay_polynomial(r0, eps, q) > DECAY_TOLERANCE:
            raise InfeasibleRadius(f"A(r₀) > 0 です: R₀ = {radius:.6g}, ε = {eps:.6g}")
        return cls(radius=radius, r0=r0, epsilon=eps, q=q, center=center)

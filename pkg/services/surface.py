"""
格子上の部分多様体の離散微分幾何
グラフ表現とパラメトリック表現の両方について、計量・Christoffel記号・第二基本形式・
平均曲率・法フレーム・ガウス写像データ・Laplace-Beltrami作用素を計算する
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from services.grassmann import (
    GaussData, distance, jordan_angles, jordan_angles_to_frame, plucker_pairing,
)
from utils.errors import DegenerateFrame, InvalidInput, NotSpaceLike
from utils.numerics import Signature, StencilSpec, gradient, hessian, periodic_derivative, sym_eigen, \
    sym_inverse_sqrt

logger = logging.getLogger(__name__)

FRAME_PIVOT_TOL = 1e-10
FRAME_SELECT_TOL = 1e-3

GRAPH = "graph"
PARAMETRIC = "parametric"


def _check_grid(sig: Signature, sizes: Sequence[int], periods: Sequence[float]):
    sizes = tuple(int(s) for s in sizes)
    periods = tuple(float(p) for p in periods)
    if len(sizes) != sig.m or len(periods) != sig.m:
        raise InvalidInput(f"格子の次元が m={sig.m} と一致しません: sizes={sizes}, periods={periods}")
    if any(s < 1 for s in sizes) or any(not np.isfinite(p) or p <= 0 for p in periods):
        raise InvalidInput(f"格子が不正です: sizes={sizes}, periods={periods}")
    return sizes, periods


def grid_coordinates(sizes: Sequence[int], periods: Sequence[float]) -> np.ndarray:
    """格子点の座標 u_i = k·h_i を (*sizes, m) で返す"""
    axes = [np.arange(n) * (L / n) for n, L in zip(sizes, periods)]
    return np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)


@dataclass
class GraphState:
    """
    グラフ (x, f(x)) で表した部分多様体

    f = Kx + φ(x)。values は周期部分 φ（形 (*sizes, n)）、slope は定数勾配 K（n×m）
    """
    sig: Signature
    sizes: tuple
    periods: tuple
    values: np.ndarray
    slope: Optional[np.ndarray] = None
    t: float = 0.0

    def __post_init__(self):
        self.sizes, self.periods = _check_grid(self.sig, self.sizes, self.periods)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.sizes + (self.sig.n,):
            raise InvalidInput(f"値の形が不正です: {self.values.shape} != {self.sizes + (self.sig.n,)}")
        if self.slope is None:
            self.slope = np.zeros((self.sig.n, self.sig.m))
        self.slope = np.asarray(self.slope, dtype=float)
        if self.slope.shape != (self.sig.n, self.sig.m):
            raise InvalidInput(f"勾配 K の形が不正です: {self.slope.shape}")
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.slope))):
            raise InvalidInput("グラフの値に非有限値が含まれています")

    representation = GRAPH

    def stencil(self, order: int = 2) -> StencilSpec:
        return StencilSpec.for_grid(self.sizes, self.periods, order)

    def coordinates(self) -> np.ndarray:
        return grid_coordinates(self.sizes, self.periods)

    def heights(self) -> np.ndarray:
        """f(x) = Kx + φ(x)"""
        return self.coordinates() @ self.slope.T + self.values

    def positions(self) -> np.ndarray:
        """外部空間での位置 F = (x, f(x))"""
        return np.concatenate([self.coordinates(), self.heights()], axis=-1)

    def evolved(self, values: np.ndarray, t: float) -> "GraphState":
        return replace(self, values=values, t=t)


@dataclass
class ParametricState:
    """
    はめ込み F で表した部分多様体

    F(u) = Σ (u_i / L_i)·lattice_i + P(u)。positions は周期部分 P（形 (*sizes, m+n)）
    """
    sig: Signature
    sizes: tuple
    periods: tuple
    positions_periodic: np.ndarray
    lattice: Optional[np.ndarray] = None
    t: float = 0.0

    def __post_init__(self):
        self.sizes, self.periods = _check_grid(self.sig, self.sizes, self.periods)
        self.positions_periodic = np.asarray(self.positions_periodic, dtype=float)
        if self.positions_periodic.shape != self.sizes + (self.sig.dim,):
            raise InvalidInput(f"位置の形が不正です: {self.positions_periodic.shape}")
        if self.lattice is None:
            self.lattice = np.zeros((self.sig.m, self.sig.dim))
        self.lattice = np.asarray(self.lattice, dtype=float)
        if self.lattice.shape != (self.sig.m, self.sig.dim):
            raise InvalidInput(f"周期格子ベクトルの形が不正です: {self.lattice.shape}")
        if not (np.all(np.isfinite(self.positions_periodic)) and np.all(np.isfinite(self.lattice))):
            raise InvalidInput("位置に非有限値が含まれています")

    representation = PARAMETRIC

    @property
    def values(self) -> np.ndarray:
        """時間発展する自由度（周期部分 P）"""
        return self.positions_periodic

    def stencil(self, order: int = 2) -> StencilSpec:
        return StencilSpec.for_grid(self.sizes, self.periods, order)

    def coordinates(self) -> np.ndarray:
        return grid_coordinates(self.sizes, self.periods)

    def positions(self) -> np.ndarray:
        u = self.coordinates() / np.asarray(self.periods)
        return u @ self.lattice + self.positions_periodic

    def evolved(self, values: np.ndarray, t: float) -> "ParametricState":
        return replace(self, positions_periodic=values, t=t)


def graph_to_parametric(state: GraphState) -> ParametricState:
    """同じはめ込みをパラメトリック表現に変換する"""
    sig = state.sig
    lattice = np.zeros((sig.m, sig.dim))
    for i, L in enumerate(state.periods):
        lattice[i, i] = L
        lattice[i, sig.m:] = L * state.slope[:, i]
    periodic = np.concatenate([np.zeros(state.sizes + (sig.m,)), state.values], axis=-1)
    return ParametricState(sig, state.sizes, state.periods, periodic, lattice, state.t)


def embedding_derivatives(state, spec: StencilSpec):
    """
    位置・接ベクトル・2階微分を返す

    Returns:
        (F, X, X2)。F は (*g, D)、X は (*g, m, D)、X2 は (*g, m, m, D)
    """
    sig = state.sig
    m = sig.m
    grid = state.sizes
    if state.representation == GRAPH:
        dphi = gradient(state.values, spec)
        tangent = np.zeros(grid + (m, sig.dim))
        tangent[..., :, :m] = np.eye(m)
        tangent[..., :, m:] = state.slope.T + dphi
        second = np.zeros(grid + (m, m, sig.dim))
        second[..., m:] = hessian(state.values, spec)
        return state.positions(), tangent, second

    tangent = gradient(state.positions_periodic, spec) + state.lattice / np.asarray(state.periods)[:, None]
    second = hessian(state.positions_periodic, spec)
    return state.positions(), tangent, second


@dataclass(frozen=True)
class Metric:
    """誘導計量 g_ij、逆計量 g^ij、体積密度 √g"""
    tangent: np.ndarray
    metric: np.ndarray
    inverse: np.ndarray
    sqrt_det: np.ndarray
    eigenvalues: np.ndarray


def metric_from_tangent(tangent: np.ndarray, sig: Signature) -> Metric:
    g = np.einsum('...id,...jd,d->...ij', tangent, tangent, sig.metric_diag)
    w, v = sym_eigen(g, vectors=True)
    lowest = float(np.min(w)) if w.size else 1.0
    if lowest <= 0.0:
        if sig.is_pseudo:
            raise NotSpaceLike(f"誘導計量が正定値ではありません: λ_min = {lowest:.6g}")
        raise DegenerateFrame(f"接ベクトルが退化しています: λ_min = {lowest:.6g}")
    inverse = (v / w[..., None, :]) @ np.swapaxes(v, -1, -2)
    return Metric(tangent, g, inverse, np.sqrt(np.prod(w, axis=-1)), w)


def build_metric(state, order: int = 2) -> Metric:
    """
    誘導計量を構築する

    ユークリッドのグラフでは g = I + DfᵀDf、擬ユークリッドでは g = I − DfᵀDf

    Raises:
        NotSpaceLike: 擬ユークリッドで計量が正定値でない
    """
    _, tangent, _ = embedding_derivatives(state, state.stencil(order))
    return metric_from_tangent(tangent, state.sig)


@dataclass(frozen=True)
class SecondFundamental:
    """第二基本形式と関連量"""
    christoffel: np.ndarray      # Γ^k_ij、(*g, k, i, j)
    sff: np.ndarray              # B_ij、(*g, m, m, D)
    mean_curvature: np.ndarray   # H、(*g, D)
    norm_B2: np.ndarray
    norm_H2: np.ndarray
    normal_frame: np.ndarray     # e_α、(*g, n, D)
    normal_signs: np.ndarray     # ε_α = ⟨e_α, e_α⟩
    components: np.ndarray       # h_αij、(*g, n, m, m)
    gram: np.ndarray             # S_αβ、(*g, n, n)
    mean_components: np.ndarray  # H_α、(*g, n)


def tangential_part(v: np.ndarray, metric: Metric, sig: Signature) -> np.ndarray:
    """v の接成分 ⟨v, X_k⟩ g^{kl} X_l。v は (*g, ..., D)"""
    x = metric.tangent
    extra = v.ndim - x.ndim + 1
    xs = x.reshape(x.shape[:-2] + (1,) * extra + x.shape[-2:])
    ginv = metric.inverse.reshape(metric.inverse.shape[:-2] + (1,) * extra + metric.inverse.shape[-2:])
    proj = np.einsum('...d,...kd,d->...k', v, xs, sig.metric_diag)
    coeff = np.einsum('...k,...kl->...l', proj, ginv)
    return np.einsum('...l,...ld->...d', coeff, xs)


def normal_part(v: np.ndarray, metric: Metric, sig: Signature) -> np.ndarray:
    """外部計量での法射影 v − ⟨v, X_k⟩ g^{kl} X_l"""
    return v - tangential_part(v, metric, sig)


def _frame_candidates(sig: Signature) -> list:
    """Gram-Schmidtに使う座標方向の順序（ε_{m+1..m+n} を先に、次に ε_{1..m}）"""
    return list(range(sig.m, sig.dim)) + list(range(sig.m))


def normal_frame(metric: Metric, sig: Signature):
    """
    座標方向を法射影し、符号付き内積でGram-Schmidtする

    各格子点で ε_{m+α} から順に試し、ピボットが小さい方向は飛ばして ε_1..ε_m で補う
    （グラフでは常に ε_{m+α} だけで足りる）

    Returns:
        (frame, signs)。frame は (*g, n, D)

    Raises:
        DegenerateFrame: n 本そろわない（ピボットが 1e-10 未満）
    """
    grid = metric.tangent.shape[:-2]
    eta = sig.metric_diag
    sign = sig.normal_sign
    frame = np.zeros(grid + (sig.n, sig.dim))
    count = np.zeros(grid, dtype=int)

    for threshold in (FRAME_SELECT_TOL, FRAME_PIVOT_TOL):
        for c in _frame_candidates(sig):
            open_nodes = count < sig.n
            if not np.any(open_nodes):
                break
            v = np.zeros(grid + (sig.dim,))
            v[..., c] = 1.0
            w = normal_part(v, metric, sig)
            for b in range(sig.n):
                e = frame[..., b, :]
                w = w - sign * np.sum(w * e * eta, axis=-1)[..., None] * e
            norm2 = np.sum(w * w * eta, axis=-1)
            pivot = np.sqrt(np.abs(norm2))
            accept = open_nodes & (pivot >= threshold) & (norm2 * sign > 0.0)
            unit = w / np.where(accept, pivot, 1.0)[..., None]
            for k in range(sig.n):
                slot = accept & (count == k)
                frame[..., k, :] = np.where(slot[..., None], unit, frame[..., k, :])
            count = count + accept

    if np.any(count < sig.n):
        raise DegenerateFrame(f"法フレームをそろえられません（ピボット < {FRAME_PIVOT_TOL:g}）")
    return frame, np.full(sig.n, sign)


def second_fundamental(state, metric: Metric, order: int = 2, second: Optional[np.ndarray] = None) -> SecondFundamental:
    """
    第二基本形式 B_ij = ∂_ij F − ⟨∂_ij F, ∂_k F⟩ g^{kl} ∂_l F と平均曲率 H = g^ij B_ij

    Args:
        state: GraphState または ParametricState
        metric: build_metric の結果
        order: 差分次数
        second: 計算済みの2階微分（省略時は state から計算）
    """
    sig = state.sig
    eta = sig.metric_diag
    if second is None:
        _, _, second = embedding_derivatives(state, state.stencil(order))
    x = metric.tangent
    ginv = metric.inverse

    projections = np.einsum('...ijd,...ld,d->...ijl', second, x, eta)
    christoffel = np.einsum('...kl,...ijl->...kij', ginv, projections)
    sff = second - np.einsum('...kij,...kd->...ijd', christoffel, x)
    mean = np.einsum('...ij,...ijd->...d', ginv, sff)

    inner_bb = np.einsum('...ijd,...kld,d->...ijkl', sff, sff, eta)
    norm_B2 = np.abs(np.einsum('...ik,...jl,...ijkl->...', ginv, ginv, inner_bb))
    norm_H2 = np.abs(sig.inner(mean, mean))

    frame, signs = normal_frame(metric, sig)
    components = signs[:, None, None] * np.einsum('...ijd,...ad,d->...aij', sff, frame, eta)
    gram = np.einsum('...ik,...jl,...aij,...bkl->...ab', ginv, ginv, components, components)
    mean_components = signs * np.einsum('...d,...ad,d->...a', mean, frame, eta)

    return SecondFundamental(
        christoffel=christoffel, sff=sff, mean_curvature=mean, norm_B2=norm_B2, norm_H2=norm_H2,
        normal_frame=frame, normal_signs=signs, components=components, gram=gram,
        mean_components=mean_components,
    )


@dataclass(frozen=True)
class GeometrySnapshot:
    """ある時刻の格子上の幾何量一式"""
    sig: Signature
    spec: StencilSpec
    representation: str
    t: float
    positions: np.ndarray
    second: np.ndarray
    metric: Metric
    curvature: SecondFundamental
    sizes: tuple = field(default_factory=tuple)

    @property
    def m(self) -> int:
        return self.sig.m

    @property
    def sup_B2(self) -> float:
        return float(np.max(self.curvature.norm_B2))

    @property
    def sup_H2(self) -> float:
        return float(np.max(self.curvature.norm_H2))


def geometry_snapshot(state, order: int = 2) -> GeometrySnapshot:
    """状態から幾何量をまとめて計算する"""
    spec = state.stencil(order)
    positions, tangent, second = embedding_derivatives(state, spec)
    metric = metric_from_tangent(tangent, state.sig)
    curvature = second_fundamental(state, metric, order, second=second)
    return GeometrySnapshot(
        sig=state.sig, spec=spec, representation=state.representation, t=state.t,
        positions=positions, second=second, metric=metric, curvature=curvature, sizes=state.sizes,
    )


def gauss_data(snapshot: GeometrySnapshot, reference: Optional[np.ndarray] = None) -> GaussData:
    """
    各格子点の接平面と基準平面 P₀ のJordan角・距離・ペアリング

    グラフ表現では |w − g^{−1/2}| も pairing_error として返す
    """
    sig = snapshot.sig
    coordinate_frame = np.eye(sig.m, sig.dim)
    p0 = coordinate_frame if reference is None else np.asarray(reference, dtype=float)
    x = snapshot.metric.tangent
    is_coordinate = np.allclose(p0, coordinate_frame, atol=1e-14)

    if snapshot.representation == GRAPH and is_coordinate:
        df = np.swapaxes(x[..., :, sig.m:], -1, -2)
        angles = jordan_angles(df, sig)
    else:
        angles = jordan_angles_to_frame(x, p0, sig)

    pairing = plucker_pairing(angles)
    error = None
    if snapshot.representation == GRAPH and is_coordinate:
        error = np.abs(pairing - 1.0 / snapshot.metric.sqrt_det)
    return GaussData(angles=angles, distance=distance(angles), pairing=pairing, reference=p0,
                     pairing_error=error)


def laplace_beltrami(values: np.ndarray, snapshot: GeometrySnapshot) -> np.ndarray:
    """発散形式 (1/√g) ∂_i(√g g^{ij} ∂_j u) による Δ_M u"""
    u = np.asarray(values, dtype=float)
    spec = snapshot.spec
    m = snapshot.m
    du = np.stack([periodic_derivative(u, j, 1, spec) for j in range(m)], axis=-1)
    flux = snapshot.metric.sqrt_det[..., None] * np.einsum('...ij,...j->...i', snapshot.metric.inverse, du)
    divergence = sum(periodic_derivative(flux[..., i], i, 1, spec) for i in range(m))
    return divergence / snapshot.metric.sqrt_det


def _axis_derivatives(values: np.ndarray, snapshot: GeometrySnapshot) -> np.ndarray:
    """格子軸ごとの1階微分を、格子軸の直後に微分方向の軸を入れて返す"""
    return gradient(values, snapshot.spec)


def tension_field(snapshot: GeometrySnapshot) -> np.ndarray:
    """
    ガウス写像の張力場 τ(γ) の成分

    τ_αi = ε_α (g^{−1/2})_{ik} ⟨∂_k H, e_α⟩（正規直交接フレームでの ∇_i H の法成分）

    Returns:
        (*g, n, m) の配列
    """
    sig = snapshot.sig
    curv = snapshot.curvature
    dH = _axis_derivatives(curv.mean_curvature, snapshot)
    raw = np.einsum('...kd,...ad,d->...ak', dH, curv.normal_frame, sig.metric_diag)
    raw = curv.normal_signs[:, None] * raw
    inv_sqrt = sym_inverse_sqrt(snapshot.metric.metric)
    return np.einsum('...ak,...ki->...ai', raw, inv_sqrt)


def shape_operators(snapshot: GeometrySnapshot) -> np.ndarray:
    """正規直交接フレームでの形作用素 A_α = g^{−1/2} h_α g^{−1/2}、(*g, n, m, m)"""
    inv_sqrt = sym_inverse_sqrt(snapshot.metric.metric)
    return np.einsum('...ik,...akl,...lj->...aij', inv_sqrt, snapshot.curvature.components, inv_sqrt)


def covariant_derivative_norms(snapshot: GeometrySnapshot):
    """
    ||∇B||² と ||∇⊥H||²

    (∇_k B)_ij = (∂_k B_ij)^N − Γ^l_ki B_lj − Γ^l_kj B_il
    """
    sig = snapshot.sig
    eta = sig.metric_diag
    metric = snapshot.metric
    curv = snapshot.curvature
    ginv = metric.inverse
    gamma = curv.christoffel
    b = curv.sff

    dB = _axis_derivatives(b, snapshot)                      # (*g, k, i, j, D)
    dB_normal = normal_part(dB, metric, sig)
    nabla_b = (dB_normal
               - np.einsum('...lki,...ljd->...kijd', gamma, b)
               - np.einsum('...lkj,...ild->...kijd', gamma, b))
    pairs = np.einsum('...kijd,...abcd,d->...kijabc', nabla_b, nabla_b, eta)
    norm_grad_B2 = np.abs(np.einsum('...ka,...ib,...jc,...kijabc->...', ginv, ginv, ginv, pairs))

    dH = normal_part(_axis_derivatives(curv.mean_curvature, snapshot), metric, sig)
    norm_grad_H2 = np.abs(np.einsum('...kl,...kd,...ld,d->...', ginv, dH, dH, eta))
    return norm_grad_B2, norm_grad_H2


def scalar_fields(snapshot: GeometrySnapshot, gauss: Optional[GaussData] = None) -> dict:
    """出力用のスカラー場"""
    fields = {
        'norm_B2': snapshot.curvature.norm_B2,
        'norm_H2': snapshot.curvature.norm_H2,
        'sqrt_det_g': snapshot.metric.sqrt_det,
    }
    if gauss is not None:
        fields['gauss_distance'] = gauss.distance
        fields['pairing'] = gauss.pairing
    return fields

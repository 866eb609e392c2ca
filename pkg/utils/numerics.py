"""
小行列の線形代数と周期差分ステンシル
格子点ごとの小さな行列（計量、勾配、形作用素など）をバッチでまとめて処理する
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from utils.errors import GridTooSmall, InvalidInput

MAX_SMALL_DIM = 16
JACOBI_TOL = 1e-15
MAX_SWEEPS = 60


class SignatureKind(str, Enum):
    """外部空間の計量の種類"""
    EUCLIDEAN = "euclidean"
    PSEUDO = "pseudo"


@dataclass(frozen=True)
class Signature:
    """外部空間 ℝ^{m+n}（または ℝ^{m+n}_n）の次元と計量符号"""
    m: int
    n: int
    kind: SignatureKind = SignatureKind.EUCLIDEAN

    def __post_init__(self):
        if isinstance(self.kind, str) and not isinstance(self.kind, SignatureKind):
            object.__setattr__(self, 'kind', SignatureKind(self.kind))
        if self.m < 1 or self.n < 1:
            raise InvalidInput(f"次元が不正です: m={self.m}, n={self.n}")

    @property
    def dim(self) -> int:
        return self.m + self.n

    @property
    def is_pseudo(self) -> bool:
        return self.kind is SignatureKind.PSEUDO

    @property
    def normal_sign(self) -> float:
        """法方向の内積の符号（ユークリッド +1、擬ユークリッド -1）"""
        return -1.0 if self.is_pseudo else 1.0

    @property
    def metric_diag(self) -> np.ndarray:
        """外部計量 diag(+1×m, ±1×n)"""
        return np.concatenate([np.ones(self.m), np.full(self.n, self.normal_sign)])

    def inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """
        最後の軸について外部計量での内積を取る

        Args:
            u: (..., m+n) の配列
            v: (..., m+n) の配列

        Returns:
            (...) の配列
        """
        return np.sum(u * v * self.metric_diag, axis=-1)


@dataclass(frozen=True)
class StencilSpec:
    """中心差分の精度と各軸の格子間隔"""
    order: int = 2
    spacings: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.order not in (2, 4):
            raise InvalidInput(f"ステンシル次数は2または4です: {self.order}")
        object.__setattr__(self, 'spacings', tuple(float(h) for h in self.spacings))
        if any(not np.isfinite(h) or h <= 0 for h in self.spacings):
            raise InvalidInput(f"格子間隔が不正です: {self.spacings}")

    @property
    def width(self) -> int:
        return 3 if self.order == 2 else 5

    def with_order(self, order: int) -> "StencilSpec":
        return StencilSpec(order=order, spacings=self.spacings)

    @classmethod
    def for_grid(cls, sizes: Sequence[int], periods: Sequence[float], order: int = 2) -> "StencilSpec":
        """周期 L_i、格子数 N_i から h_i = L_i / N_i を作る"""
        return cls(order=order, spacings=tuple(L / N for L, N in zip(periods, sizes)))


class SvdResult(NamedTuple):
    sigma: np.ndarray
    u: np.ndarray
    v: np.ndarray


def _as_small_batch(matrix, name: str) -> np.ndarray:
    a = np.array(matrix, dtype=float)
    if a.ndim < 2:
        raise InvalidInput(f"{name}: 行列（2次元以上の配列）が必要です")
    if a.shape[-1] > MAX_SMALL_DIM or a.shape[-2] > MAX_SMALL_DIM:
        raise InvalidInput(f"{name}: 行列サイズが大きすぎます {a.shape[-2:]}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name}: 非有限値が含まれています")
    return a


def _rotate_columns(a: np.ndarray, p: int, q: int, c: np.ndarray, s: np.ndarray) -> None:
    ap = a[..., :, p].copy()
    aq = a[..., :, q]
    a[..., :, p] = c[..., None] * ap - s[..., None] * aq
    a[..., :, q] = s[..., None] * ap + c[..., None] * aq


def _rotate_rows(a: np.ndarray, p: int, q: int, c: np.ndarray, s: np.ndarray) -> None:
    ap = a[..., p, :].copy()
    aq = a[..., q, :]
    a[..., p, :] = c[..., None] * ap - s[..., None] * aq
    a[..., q, :] = s[..., None] * ap + c[..., None] * aq


def _jacobi_rotation(app, aqq, apq, active):
    """a_pq を消す回転 (c, s)。非アクティブな要素は恒等回転"""
    safe = np.where(active, apq, 1.0)
    with np.errstate(over='ignore', invalid='ignore'):
        theta = (aqq - app) / (2.0 * safe)
        sign = np.where(theta >= 0.0, 1.0, -1.0)
        t = sign / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
    t = np.where(np.isfinite(t), t, 0.0)
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = c * t
    return np.where(active, c, 1.0), np.where(active, s, 0.0)


def _complete_orthonormal(u: np.ndarray, missing: np.ndarray) -> np.ndarray:
    """特異値が0の列を、既存の列と直交する単位ベクトルで補完する"""
    rows = u.shape[-2]
    eye = np.eye(rows)
    for j in range(u.shape[-1]):
        mask = missing[..., j]
        if not np.any(mask):
            continue
        q = u[..., :, :j]
        residual = np.broadcast_to(eye, u.shape[:-2] + (rows, rows)).copy()
        for _ in range(2):
            residual = residual - q @ (np.swapaxes(q, -1, -2) @ residual)
        norms = np.linalg.norm(residual, axis=-2)
        pick = np.argmax(norms, axis=-1)
        vec = np.take_along_axis(residual, pick[..., None, None], axis=-1)[..., 0]
        vec = vec / np.take_along_axis(norms, pick[..., None], axis=-1)
        u[..., :, j] = np.where(mask[..., None], vec, u[..., :, j])
    return u


def svd_small(matrix) -> SvdResult:
    """
    片側Jacobi法による特異値分解（バッチ対応）

    Args:
        matrix: (..., r, c) の配列、r, c ≤ 16

    Returns:
        SvdResult(sigma, u, v)。sigma は降順 (..., k)、u は (..., r, k)、v は (..., c, k)、
        k = min(r, c)。M = u @ diag(sigma) @ v.T
    """
    a = _as_small_batch(matrix, "svd_small")
    transposed = a.shape[-2] < a.shape[-1]
    if transposed:
        a = np.swapaxes(a, -1, -2)
    cols = a.shape[-1]
    batch = a.shape[:-2]

    u = a.copy()
    v = np.broadcast_to(np.eye(cols), batch + (cols, cols)).copy()

    for _ in range(MAX_SWEEPS):
        rotated = False
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                up = u[..., :, p]
                uq = u[..., :, q]
                alpha = np.sum(up * up, axis=-1)
                beta = np.sum(uq * uq, axis=-1)
                gamma = np.sum(up * uq, axis=-1)
                active = np.abs(gamma) > JACOBI_TOL * np.sqrt(alpha * beta)
                if not np.any(active):
                    continue
                rotated = True
                c, s = _jacobi_rotation(alpha, beta, gamma, active)
                _rotate_columns(u, p, q, c, s)
                _rotate_columns(v, p, q, c, s)
        if not rotated:
            break

    sigma = np.sqrt(np.sum(u * u, axis=-2))
    order = np.argsort(-sigma, axis=-1, kind='stable')
    sigma = np.take_along_axis(sigma, order, axis=-1)
    u = np.take_along_axis(u, order[..., None, :], axis=-1)
    v = np.take_along_axis(v, order[..., None, :], axis=-1)

    top = np.max(sigma, axis=-1, keepdims=True) if cols else sigma
    missing = sigma <= 1e-14 * np.maximum(top, np.finfo(float).tiny)
    u = u / np.where(missing, 1.0, sigma)[..., None, :]
    if np.any(missing):
        sigma = np.where(missing, 0.0, sigma)
        u = _complete_orthonormal(u, missing)

    if transposed:
        u, v = v, u
    return SvdResult(sigma, u, v)


def sym_eigen(matrix, vectors: bool = False):
    """
    対称行列の固有値（昇順）をJacobi回転で求める（バッチ対応）

    Args:
        matrix: (..., k, k) の対称行列
        vectors: True なら固有ベクトル（列）も返す

    Returns:
        固有値 (..., k)、vectors=True なら (固有値, 固有ベクトル)
    """
    a = _as_small_batch(matrix, "sym_eigen")
    k = a.shape[-1]
    if a.shape[-2] != k:
        raise InvalidInput(f"sym_eigen: 正方行列が必要です {a.shape[-2:]}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - np.swapaxes(a, -1, -2)), initial=0.0) > 1e-12 * scale:
        raise InvalidInput("sym_eigen: 行列が対称ではありません")
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    v = np.broadcast_to(np.eye(k), a.shape).copy()

    for _ in range(MAX_SWEEPS):
        rotated = False
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = a[..., p, q]
                diag_scale = np.abs(a[..., p, p]) + np.abs(a[..., q, q])
                active = np.abs(apq) > JACOBI_TOL * np.maximum(diag_scale, 1e-300)
                if not np.any(active):
                    continue
                rotated = True
                c, s = _jacobi_rotation(a[..., p, p], a[..., q, q], apq, active)
                _rotate_columns(a, p, q, c, s)
                _rotate_rows(a, p, q, c, s)
                _rotate_columns(v, p, q, c, s)
        if not rotated:
            break

    w = np.diagonal(a, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1, kind='stable')
    w = np.take_along_axis(w, order, axis=-1)
    if not vectors:
        return w
    return w, np.take_along_axis(v, order[..., None, :], axis=-1)


def sym_inverse_sqrt(matrix) -> np.ndarray:
    """正定値対称行列の逆平方根 S^{-1/2}（直交化した接フレームに使う）"""
    w, v = sym_eigen(matrix, vectors=True)
    if np.any(w <= 0.0):
        raise InvalidInput("sym_inverse_sqrt: 正定値ではありません")
    return (v * (1.0 / np.sqrt(w))[..., None, :]) @ np.swapaxes(v, -1, -2)


def periodic_derivative(field_values, axis: int, derivative: int, spec: StencilSpec) -> np.ndarray:
    """
    周期境界での中心差分

    Args:
        field_values: 格子軸を先頭に持つ配列（後ろに成分軸があってもよい）
        axis: 微分する格子軸
        derivative: 1 または 2
        spec: ステンシル設定

    Returns:
        同じ形の配列
    """
    f = np.asarray(field_values, dtype=float)
    if derivative not in (1, 2):
        raise InvalidInput(f"微分階数は1または2です: {derivative}")
    if f.shape[axis] < spec.width:
        raise GridTooSmall(f"軸{axis}の格子数 {f.shape[axis]} < ステンシル幅 {spec.width}")
    h = spec.spacings[axis]

    def shifted(k: int) -> np.ndarray:
        return np.roll(f, -k, axis=axis)

    if spec.order == 2:
        if derivative == 1:
            return (shifted(1) - shifted(-1)) / (2.0 * h)
        return (shifted(1) - 2.0 * f + shifted(-1)) / (h * h)

    if derivative == 1:
        return (-shifted(2) + 8.0 * shifted(1) - 8.0 * shifted(-1) + shifted(-2)) / (12.0 * h)
    return (-shifted(2) + 16.0 * shifted(1) - 30.0 * f + 16.0 * shifted(-1) - shifted(-2)) / (12.0 * h * h)


def mixed_derivative(field_values, axis_a: int, axis_b: int, spec: StencilSpec) -> np.ndarray:
    """∂_a∂_b。a = b なら2階ステンシル、それ以外は1階差分の合成"""
    if axis_a == axis_b:
        return periodic_derivative(field_values, axis_a, 2, spec)
    first = periodic_derivative(field_values, axis_a, 1, spec)
    return periodic_derivative(first, axis_b, 1, spec)


def gradient(field_values, spec: StencilSpec) -> np.ndarray:
    """
    全格子軸の1階微分を並べる

    Returns:
        (*grid, ..., m) ではなく (*grid, m, ...) の形。成分軸の前に微分方向を挿入する
    """
    f = np.asarray(field_values, dtype=float)
    m = len(spec.spacings)
    parts = [periodic_derivative(f, i, 1, spec) for i in range(m)]
    return np.stack(parts, axis=m)


def hessian(field_values, spec: StencilSpec) -> np.ndarray:
    """2階微分 (*grid, m, m, ...)"""
    f = np.asarray(field_values, dtype=float)
    m = len(spec.spacings)
    rows = []
    for i in range(m):
        row = []
        for j in range(m):
            if j < i:
                row.append(rows[j][i])
            else:
                row.append(mixed_derivative(f, i, j, spec))
        rows.append(row)
    return np.stack([np.stack(row, axis=m) for row in rows], axis=m)

"""
各点の代数的恒等式・不等式のランダム検証
形作用素 A_α（対称 m×m 行列 n 個）のサンプルに対して、トレース不等式、交換子評価、
Cauchy不等式、法曲率 |R⊥|² の2通りの表示を確認する
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import InvalidInput

logger = logging.getLogger(__name__)

SUITE_TOL = 1e-10
SHARP_TOL = 1e-12
DEFAULT_SHAPES = ((2, 2), (2, 3), (3, 2), (3, 3))
ENTRY_RANGE = 2.0


@dataclass(frozen=True)
class SffSample:
    """
    第二基本形式のサンプル

    matrices は (..., n, m, m) の対称行列
    """
    matrices: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrices, dtype=float)
        if a.ndim < 3 or a.shape[-1] != a.shape[-2]:
            raise InvalidInput(f"形作用素の形が不正です: {a.shape}")
        if not np.allclose(a, np.swapaxes(a, -1, -2), atol=0.0, rtol=0.0):
            raise InvalidInput("形作用素が対称ではありません")
        object.__setattr__(self, 'matrices', a)

    @property
    def n(self) -> int:
        return self.matrices.shape[-3]

    @property
    def m(self) -> int:
        return self.matrices.shape[-1]

    @property
    def gram(self) -> np.ndarray:
        """S_αβ = tr(A_α A_β)"""
        return np.einsum('...aij,...bij->...ab', self.matrices, self.matrices)

    @property
    def norm2(self) -> np.ndarray:
        """|B|² = Σ S_αα"""
        return np.einsum('...aa->...', self.gram)

    @property
    def mean(self) -> np.ndarray:
        """H_α = tr(A_α)"""
        return np.einsum('...aii->...a', self.matrices)

    def scaled(self, s: float) -> "SffSample":
        return SffSample(s * self.matrices)


def random_samples(rng: np.random.Generator, count: int, m: int, n: int,
                   bound: float = ENTRY_RANGE) -> SffSample:
    """成分が [−bound, bound] の一様乱数の対称行列サンプル"""
    raw = rng.uniform(-bound, bound, size=(count, n, m, m))
    upper = np.triu(raw)
    return SffSample(upper + np.swapaxes(np.triu(raw, 1), -1, -2))


def commutator_norms(matrices: np.ndarray) -> np.ndarray:
    """順序対 α ≠ β についての Σ ‖[A_α, A_β]‖²_F"""
    a = np.asarray(matrices, dtype=float)
    products = np.einsum('...aij,...bjk->...abik', a, a)
    commutators = products - np.swapaxes(products, -4, -3)
    return np.einsum('...abik,...abik->...', commutators, commutators)


def sharp_sample() -> SffSample:
    """交換子評価の等号例 A₁ = diag(1, −1)、A₂ = antidiag(1, 1)"""
    return SffSample(np.array([[[1.0, 0.0], [0.0, -1.0]], [[0.0, 1.0], [1.0, 0.0]]]))


def check_trace_inequality(sample: SffSample) -> np.ndarray:
    """margin = Σ S²_αβ − (1/n)(Σ S_αα)²（非負）"""
    s = sample.gram
    return np.sum(s * s, axis=(-2, -1)) - sample.norm2 ** 2 / sample.n


@dataclass(frozen=True)
class CommutatorBound:
    """交換子評価の左辺と2つの上界"""
    lhs: np.ndarray
    general: np.ndarray
    refined: Optional[np.ndarray]


def check_commutator_bound(sample: SffSample) -> CommutatorBound:
    """
    lhs = Σ_{α≠β} ‖[A_α, A_β]‖² + Σ S²_αβ

    一般の上界 (2 − 1/n)|B|⁴、n ≥ 2 での改良上界 (3/2)|B|⁴
    """
    s = sample.gram
    lhs = commutator_norms(sample.matrices) + np.sum(s * s, axis=(-2, -1))
    b4 = sample.norm2 ** 2
    refined = 1.5 * b4 if sample.n >= 2 else None
    return CommutatorBound(lhs=lhs, general=(2.0 - 1.0 / sample.n) * b4, refined=refined)


@dataclass(frozen=True)
class CauchyMargin:
    """Cauchy不等式の余裕。gated は因子 m、printed は因子 n"""
    gated: np.ndarray
    printed: np.ndarray


def check_H_cauchy(sample: SffSample, mean: Optional[np.ndarray] = None) -> CauchyMargin:
    """
    (Σ H_α²)² ≤ m · S_αβ H_α H_β

    S_αβ H_α H_β = ‖Σ H_α A_α‖² と tr(Σ H_α A_α) = Σ H_α² から m 成分のCauchy不等式で従う。
    因子 n の形は n ≥ m のときのみ成り立つため参考値として返す

    Args:
        sample: 形作用素のサンプル
        mean: H_α（省略時は tr(A_α)）
    """
    h = sample.mean if mean is None else np.asarray(mean, dtype=float)
    quad = np.einsum('...ab,...a,...b->...', sample.gram, h, h)
    h4 = np.sum(h * h, axis=-1) ** 2
    return CauchyMargin(gated=sample.m * quad - h4, printed=sample.n * quad - h4)


def rperp_index_expression(sample: SffSample) -> np.ndarray:
    """
    添字表示 2⟨B_il,B_jk⟩⟨B_jl,B_ik⟩ − 2⟨B_il,B_ik⟩⟨B_jk,B_jl⟩

    ⟨B_ij, B_kl⟩ = Σ_α (A_α)_ij (A_α)_kl（ユークリッド）
    """
    a = sample.matrices
    inner = np.einsum('...aij,...akl->...ijkl', a, a)
    first = np.einsum('...iljk,...jlik->...', inner, inner)
    second = np.einsum('...ilik,...jkjl->...', inner, inner)
    return 2.0 * first - 2.0 * second


def check_rperp_expansion(sample: SffSample) -> np.ndarray:
    """|添字表示 + Σ_{α≠β} ‖[A_α, A_β]‖²|（2つの閉じた形が同じ量を表す）"""
    return np.abs(rperp_index_expression(sample) + commutator_norms(sample.matrices))


@dataclass
class CheckResult:
    """1つの検査のサマリ"""
    name: str
    passed: bool = True
    samples: int = 0
    violations: int = 0
    worst_margin: float = np.inf
    errors: List[str] = field(default_factory=list)

    def absorb(self, margins: np.ndarray, scale: np.ndarray, tol: float, label: str) -> None:
        """margin ≥ −tol·scale を要求してサンプルを集計する"""
        relative = margins / np.maximum(scale, np.finfo(float).tiny)
        bad = margins < -tol * scale
        self.samples += margins.size
        self.violations += int(np.count_nonzero(bad))
        if margins.size:
            self.worst_margin = min(self.worst_margin, float(np.min(relative)))
        if np.any(bad):
            self.passed = False
            self.errors.append(f"{label}: {int(np.count_nonzero(bad))} 件の違反")


def run_identity_suite(samples: int = 10_000, seed: int = 0,
                       shapes: Iterable[Tuple[int, int]] = DEFAULT_SHAPES) -> List[CheckResult]:
    """
    4つの検査をランダムサンプルで実行する

    Args:
        samples: 形 (m, n) ごとのサンプル数
        seed: 乱数シード
        shapes: (m, n) の組

    Returns:
        CheckResult のリスト（trace, commutator, cauchy, rperp の順）
    """
    rng = np.random.default_rng(seed)
    results = {name: CheckResult(name) for name in ("trace_inequality", "commutator_bound",
                                                    "H_cauchy", "rperp_expansion")}

    for m, n in shapes:
        label = f"m={m}, n={n}"
        sample = random_samples(rng, samples, m, n)
        b4 = sample.norm2 ** 2
        scale = np.maximum(b4, 1.0)

        results["trace_inequality"].absorb(check_trace_inequality(sample), scale, SUITE_TOL, label)

        bound = check_commutator_bound(sample)
        results["commutator_bound"].absorb(bound.general - bound.lhs, scale, SUITE_TOL, label)
        if bound.refined is not None:
            results["commutator_bound"].absorb(bound.refined - bound.lhs, scale, SUITE_TOL, label + " (3/2)")

        cauchy = check_H_cauchy(sample)
        results["H_cauchy"].absorb(cauchy.gated, scale, SUITE_TOL, label)
        if m > n and np.any(cauchy.printed < -SUITE_TOL * scale):
            logger.info(f"因子 n の形は {label} で成り立ちません（因子 m で判定）")

        residual = check_rperp_expansion(sample)
        results["rperp_expansion"].absorb(-residual, scale, SUITE_TOL, label)

    sharp = check_commutator_bound(sharp_sample())
    sharp_ok = abs(float(sharp.lhs) - 24.0) <= SHARP_TOL and abs(float(sharp.refined) - 24.0) <= SHARP_TOL
    if not sharp_ok:
        results["commutator_bound"].passed = False
        results["commutator_bound"].errors.append(f"等号例: lhs = {float(sharp.lhs)}")

    for result in results.values():
        logger.debug(f"{result.name}: {result.samples} サンプル, 違反 {result.violations}")
    return list(results.values())


def scale_consistency(sample: SffSample, s: float) -> Sequence[float]:
    """全 A_α を s 倍したときの各余裕の比（s⁴ になる）"""
    base = sample
    scaled = sample.scaled(s)
    pairs = [
        (check_trace_inequality(base), check_trace_inequality(scaled)),
        (check_commutator_bound(base).lhs, check_commutator_bound(scaled).lhs),
        (check_H_cauchy(base).gated, check_H_cauchy(scaled).gated),
    ]
    return [float(np.max(np.abs(b2 - s ** 4 * b1))) for b1, b2 in pairs]

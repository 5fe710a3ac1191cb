#!/usr/bin/env python3
"""
正则化样本协方差 (RSCM) - 因子形式的合并协方差与其闭式逆

    Sigma~ = alpha * S + (1 - alpha) * eta * I,   S = (1/n) Xc Xc^T,   eta = tr(S) / p

所有计算都基于 Xc 的瘦SVD (U, d, V)，热路径上从不构造 p x p 矩阵：
- SVD 由 n x n 的 Gram 矩阵 Xc^T Xc 的特征分解得到，代价 O(p n^2) + O(n^3)
- 逆矩阵以算子形式作用于 p x k 矩阵，代价 O(p m k)
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import linalg

from crda_errors import DataError, NumericError
from data_model import CenteredData
from project_config import get_config

SCALED_TARGET = "scaled"
IDENTITY_TARGET = "identity"

# Gram 矩阵特征值的噪声水平约为 n * eps * lambda_max，低于该量级的分量视为零
EIGEN_NOISE_FACTOR = 100.0


@dataclass(frozen=True)
class SvdFactors:
    """Xc = U diag(d) V^T 的瘦SVD，d 严格为正且非增"""

    U: np.ndarray
    d: np.ndarray
    V: np.ndarray
    n: int
    p: int

    @property
    def m(self) -> int:
        return self.d.shape[0]


@dataclass(frozen=True)
class RegularizedCovariance:
    """以低秩修正的内外两项表示 Sigma~ 及其逆

    inner = (alpha/n * d^2 + (1-alpha) * scale)^-1 - outer
    outer = ((1-alpha) * scale)^-1
    其中 scale = eta（缩放单位阵目标）或 1（未缩放单位阵目标）
    """

    factors: SvdFactors
    alpha: float
    eta: float
    inner: np.ndarray
    outer: float
    target: str = SCALED_TARGET

    @property
    def scale(self) -> float:
        return self.eta if self.target == SCALED_TARGET else 1.0

    @property
    def p(self) -> int:
        return self.factors.p


def _as_matrix(centered: Union[CenteredData, np.ndarray]) -> np.ndarray:
    if isinstance(centered, CenteredData):
        return centered.Xc
    return np.asarray(centered, dtype=np.float64)


def thin_svd_via_gram(centered: Union[CenteredData, np.ndarray], rank_tol: Optional[float] = None) -> SvdFactors:
    """通过 n x n Gram 矩阵计算 Xc 的瘦SVD

    保留特征值 > max(rank_tol^2, EIGEN_NOISE_FACTOR * n * eps) * lambda_max，
    d_i = sqrt(lambda_i)，V 为对应特征向量，U = Xc V D^-1。
    """
    Xc = _as_matrix(centered)
    if Xc.ndim != 2 or Xc.shape[0] < 1 or Xc.shape[1] < 1:
        raise DataError(f"中心化矩阵形状不合法: {Xc.shape}")
    if not np.all(np.isfinite(Xc)):
        raise NumericError("中心化矩阵含有非有限值，无法分解")

    rank_tol = float(rank_tol if rank_tol is not None else get_config().get("numerics.rank_tol", 1e-10))
    if rank_tol <= 0:
        raise DataError(f"rank_tol 必须为正数，实际: {rank_tol}")

    p, n = Xc.shape
    gram = Xc.T @ Xc
    try:
        eigvals, eigvecs = linalg.eigh(gram)
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericError(f"Gram 矩阵特征分解失败: {e}") from e
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]

    lambda_max = eigvals[0]
    if not lambda_max > 0:
        raise NumericError("中心化数据全为零（秩为 0），无法构造协方差")

    cutoff = max(rank_tol ** 2, EIGEN_NOISE_FACTOR * n * np.finfo(np.float64).eps) * lambda_max
    keep = eigvals > cutoff
    d = np.sqrt(eigvals[keep])
    V = np.ascontiguousarray(eigvecs[:, keep])
    U = (Xc @ V) / d
    return SvdFactors(U=U, d=d, V=V, n=n, p=p)


def eta(factors: SvdFactors) -> float:
    """eta = tr(S)/p = sum(d^2) / (n p)"""
    if factors.m == 0:
        raise NumericError("秩为 0 的因子无法计算 eta")
    return float(np.sum(factors.d ** 2) / (factors.n * factors.p))


def build_rscm(factors: SvdFactors, alpha: float, target: str = SCALED_TARGET) -> RegularizedCovariance:
    """预计算逆的内外两项，不构造 Sigma~ 本身"""
    alpha = float(alpha)
    if not 0.0 <= alpha < 1.0:
        raise DataError(f"alpha 必须在 [0, 1) 内，实际: {alpha}")
    if target not in (SCALED_TARGET, IDENTITY_TARGET):
        raise DataError(f"未知的收缩目标: {target}")

    eta_value = eta(factors)
    scale = eta_value if target == SCALED_TARGET else 1.0
    outer = 1.0 / ((1.0 - alpha) * scale)
    inner = 1.0 / (alpha / factors.n * factors.d ** 2 + (1.0 - alpha) * scale) - outer
    return RegularizedCovariance(factors=factors, alpha=alpha, eta=eta_value,
                                 inner=inner, outer=outer, target=target)


def inverse_apply(rc: RegularizedCovariance, M: np.ndarray) -> np.ndarray:
    """返回 Sigma~^-1 M = U diag(inner) (U^T M) + outer * M"""
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] != rc.p:
        raise DataError(f"矩阵行数 {M.shape[0]} 与特征数 p={rc.p} 不一致")
    U = rc.factors.U
    coeff = U.T @ M
    if M.ndim == 1:
        return U @ (rc.inner * coeff) + rc.outer * M
    return U @ (rc.inner[:, None] * coeff) + rc.outer * M


def forward_apply(rc: RegularizedCovariance, M: np.ndarray) -> np.ndarray:
    """返回 Sigma~ M = alpha/n U D^2 U^T M + (1-alpha) scale M"""
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] != rc.p:
        raise DataError(f"矩阵行数 {M.shape[0]} 与特征数 p={rc.p} 不一致")
    f = rc.factors
    weights = rc.alpha / f.n * f.d ** 2
    coeff = f.U.T @ M
    coeff = weights * coeff if M.ndim == 1 else weights[:, None] * coeff
    return f.U @ coeff + (1.0 - rc.alpha) * rc.scale * M


def estimate_alpha_lw(centered: Union[CenteredData, np.ndarray], factors: Optional[SvdFactors] = None) -> float:
    """Ledoit-Wolf 型收缩权重（向 eta*I 收缩），截断到 [0, 1-1e-6]

    alpha = 1 - min(1, b^2/d^2)
    d^2 = ||S - eta I||_F^2
    b^2 = min(d^2, (1/n^2) sum_i ||x_i x_i^T - S||_F^2)

    所有 Frobenius 项都由 Gram 矩阵恒等式得到：
    ||S||_F^2 = ||Xc^T Xc||_F^2 / n^2，||x_i||^2 = (Xc^T Xc)_ii，
    sum_i ||x_i x_i^T - S||_F^2 = sum_i ||x_i||^4 - n ||S||_F^2
    """
    Xc = _as_matrix(centered)
    p, n = Xc.shape
    if n < 2:
        raise DataError(f"估计 alpha 至少需要 2 个样本，实际 n={n}")
    ceiling = float(get_config().get("numerics.alpha_ceiling", 1.0 - 1e-6))

    if factors is not None:
        d2 = factors.d ** 2
        sq_norms = (factors.V ** 2) @ d2
        gram_fro2 = float(np.sum(d2 ** 2))
    else:
        gram = Xc.T @ Xc
        sq_norms = np.diag(gram).copy()
        gram_fro2 = float(np.sum(gram ** 2))

    trace_s = float(np.sum(sq_norms)) / n
    eta_value = trace_s / p
    if not eta_value > 0:
        raise NumericError("中心化数据全为零（秩为 0），无法估计 alpha")

    s_fro2 = gram_fro2 / n ** 2
    dist2 = max(s_fro2 - p * eta_value ** 2, 0.0)
    if dist2 == 0.0:
        return ceiling

    spread2 = float(np.sum(sq_norms ** 2)) / n ** 2 - s_fro2 / n
    b2 = min(dist2, max(spread2, 0.0))
    return float(np.clip(1.0 - b2 / dist2, 0.0, ceiling))

#!/usr/bin/env python3
"""
CRDA 分类器 - 系数矩阵、行范数硬阈值、软阈值基线与判别规则

判别函数（向量形式）:
    d(x) = x^T B - 1/2 diag(M^T B) + ln(pi)
CRDA:  B = H_K(Sigma~^-1 M, q)   保留 l_q 行范数最大的 K 行
SCRDA: B = S_delta(Sigma~^-1 M)   逐元素软阈值
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from crda_errors import DataError
from data_model import ClassMeans, LabeledDataset, center_by_class, class_means
from rscm import (IDENTITY_TARGET, SCALED_TARGET, RegularizedCovariance, SvdFactors,
                  build_rscm, inverse_apply, thin_svd_via_gram)

MODEL_FORMAT = "crda-model/1"
SOFT_Q = "none"

PriorSpec = Union[None, str, Sequence[float], np.ndarray]


def normalize_q(q) -> str:
    """把 1 / 2 / inf 的各种写法统一为 '1' / '2' / 'inf'"""
    text = str(q).strip().lower()
    if text in ("1", "1.0", "l1"):
        return "1"
    if text in ("2", "2.0", "l2"):
        return "2"
    if text in ("inf", "infinity", "∞", "linf", "max"):
        return "inf"
    raise DataError(f"q 必须是 1、2 或 inf，实际: {q}")


_NORM_ORDERS = {"1": 1, "2": 2, "inf": np.inf}


def _support_of(B: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.any(B != 0, axis=1))


@dataclass(frozen=True)
class CoefficientMatrix:
    """p x G 系数矩阵及其行支撑集"""

    B: np.ndarray
    q: str
    sparsity_param: Union[int, float]
    support: np.ndarray = field(init=False)

    def __post_init__(self):
        B = np.ascontiguousarray(self.B, dtype=np.float64)
        B.setflags(write=False)
        support = _support_of(B)
        support.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "support", support)

    @property
    def is_soft(self) -> bool:
        return self.q == SOFT_Q


@dataclass(frozen=True)
class TrainedModel:
    """训练好的判别模型；means 在从文件加载时为 None"""

    coef: CoefficientMatrix
    log_priors: np.ndarray
    diag_term: np.ndarray
    hyper: Dict[str, Any]
    label_names: Tuple[str, ...]
    feature_names: Optional[Tuple[str, ...]] = None
    means: Optional[ClassMeans] = None

    @property
    def p(self) -> int:
        return self.coef.B.shape[0]

    @property
    def G(self) -> int:
        return self.coef.B.shape[1]


def coefficient_matrix(rc: RegularizedCovariance, means: ClassMeans) -> np.ndarray:
    """阈值化之前的 T = Sigma~^-1 M"""
    if means.p != rc.p:
        raise DataError(f"类均值特征数 {means.p} 与协方差维度 {rc.p} 不一致")
    return inverse_apply(rc, means.M)


def row_norms(B: np.ndarray, q) -> np.ndarray:
    """每一行的 l_q 范数"""
    return np.linalg.norm(np.asarray(B, dtype=np.float64), ord=_NORM_ORDERS[normalize_q(q)], axis=1)


def rank_rows(B: np.ndarray, q) -> np.ndarray:
    """按行范数降序排列的行索引，范数相同时小索引在前"""
    return np.argsort(-row_norms(B, q), kind="stable")


def hard_threshold(B: np.ndarray, K: int, q) -> CoefficientMatrix:
    """H_K(B, q)：原样保留范数最大的 K 行，其余行置零"""
    B = np.asarray(B, dtype=np.float64)
    p = B.shape[0]
    if int(K) != K or not 1 <= K <= p:
        raise DataError(f"K 必须是 [1, {p}] 内的整数，实际: {K}")
    K = int(K)
    keep = rank_rows(B, q)[:K]
    out = np.zeros_like(B)
    out[keep] = B[keep]
    return CoefficientMatrix(B=out, q=normalize_q(q), sparsity_param=K)


def soft_threshold(T: np.ndarray, delta: float) -> CoefficientMatrix:
    """S_delta(T) = sign(t) * max(|t| - delta, 0)，逐元素"""
    delta = float(delta)
    if not delta >= 0:
        raise DataError(f"delta 必须非负，实际: {delta}")
    T = np.asarray(T, dtype=np.float64)
    B = np.sign(T) * np.maximum(np.abs(T) - delta, 0.0)
    return CoefficientMatrix(B=B, q=SOFT_Q, sparsity_param=delta)


def resolve_priors(priors: PriorSpec, means: ClassMeans) -> np.ndarray:
    """先验：None 为样本比例，'equal' 为等概率，或显式向量"""
    if priors is None:
        return np.asarray(means.proportions, dtype=np.float64)
    if isinstance(priors, str):
        if priors != "equal":
            raise DataError(f"未知的先验设置: {priors}")
        return np.full(means.G, 1.0 / means.G)
    priors = np.asarray(priors, dtype=np.float64)
    if priors.shape != (means.G,):
        raise DataError(f"先验长度 {priors.shape} 与类别数 {means.G} 不一致")
    if np.any(priors <= 0):
        raise DataError("先验概率必须全部为正")
    if abs(priors.sum() - 1.0) > 1e-9:
        raise DataError(f"先验概率之和必须为 1，实际: {priors.sum()}")
    return priors


def _assemble(coef: CoefficientMatrix, means: ClassMeans, priors: PriorSpec,
              hyper: Dict[str, Any], ds: LabeledDataset) -> TrainedModel:
    log_priors = np.log(resolve_priors(priors, means))
    diag_term = 0.5 * np.sum(means.M * coef.B, axis=0)
    return TrainedModel(coef=coef, log_priors=log_priors, diag_term=diag_term, hyper=hyper,
                        label_names=ds.label_names, feature_names=ds.feature_names, means=means)


def fit_factors(ds: LabeledDataset, rank_tol: Optional[float] = None) -> Tuple[ClassMeans, SvdFactors]:
    """class_means -> center_by_class -> thin_svd_via_gram"""
    means = class_means(ds)
    factors = thin_svd_via_gram(center_by_class(ds, means), rank_tol)
    return means, factors


def train(ds: LabeledDataset, alpha: float, K: int, q, priors: PriorSpec = None,
          rank_tol: Optional[float] = None,
          fitted: Optional[Tuple[ClassMeans, SvdFactors]] = None) -> TrainedModel:
    """训练 CRDA 模型：硬阈值系数矩阵"""
    means, factors = fitted if fitted is not None else fit_factors(ds, rank_tol)
    rc = build_rscm(factors, alpha, SCALED_TARGET)
    coef = hard_threshold(coefficient_matrix(rc, means), K, q)
    hyper = {"method": "crda", "alpha": float(alpha), "K": int(K), "q": normalize_q(q), "target": SCALED_TARGET}
    return _assemble(coef, means, priors, hyper, ds)


def train_soft(ds: LabeledDataset, alpha: float, delta: float, priors: PriorSpec = None,
               target: str = IDENTITY_TARGET, rank_tol: Optional[float] = None,
               fitted: Optional[Tuple[ClassMeans, SvdFactors]] = None) -> TrainedModel:
    """训练软阈值 (SCRDA 风格) 基线模型"""
    means, factors = fitted if fitted is not None else fit_factors(ds, rank_tol)
    rc = build_rscm(factors, alpha, target)
    coef = soft_threshold(coefficient_matrix(rc, means), delta)
    hyper = {"method": "scrda", "alpha": float(alpha), "delta": float(delta), "q": SOFT_Q, "target": target}
    return _assemble(coef, means, priors, hyper, ds)


def _check_features(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.p:
        raise DataError(f"测试数据特征数 {X.shape[1]} 与模型特征数 {model.p} 不一致")
    return X


def discriminants(model: TrainedModel, X: np.ndarray, support_only: bool = True) -> np.ndarray:
    """k x G 判别值矩阵；默认只使用支撑集中的行"""
    X = _check_features(model, X)
    if support_only:
        support = model.coef.support
        scores = X[:, support] @ model.coef.B[support]
    else:
        scores = X @ model.coef.B
    return scores - model.diag_term + model.log_priors


def predict_groups(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """返回 1..G 的类别编号，并列时取最小编号"""
    return np.argmax(discriminants(model, X), axis=1) + 1


def predict(model: TrainedModel, X: np.ndarray) -> List[str]:
    """返回原始命名的预测标签"""
    return [model.label_names[g - 1] for g in predict_groups(model, X)]


def selected_features(model: TrainedModel) -> List[int]:
    """被选中特征的行索引（从 0 开始，升序）"""
    return [int(i) for i in model.coef.support]


def selected_feature_names(model: TrainedModel) -> List[str]:
    """被选中特征的名称；没有特征名时用 1 起始的编号"""
    if model.feature_names is None:
        return [str(i + 1) for i in selected_features(model)]
    return [model.feature_names[i] for i in selected_features(model)]


def save_model(model: TrainedModel, path) -> Path:
    """把模型写成自描述的JSON；浮点数使用最短往返表示，重新加载无损"""
    support = model.coef.support
    payload = {
        "format": MODEL_FORMAT,
        "p": model.p,
        "G": model.G,
        "q": model.coef.q,
        "sparsity_param": model.coef.sparsity_param,
        "hyper": model.hyper,
        "label_names": list(model.label_names),
        "feature_names": list(model.feature_names) if model.feature_names is not None else None,
        "support": support.tolist(),
        "rows": model.coef.B[support].tolist(),
        "diag_term": model.diag_term.tolist(),
        "log_priors": model.log_priors.tolist(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, ensure_ascii=False, indent=2)
    return path


def load_model(path) -> TrainedModel:
    """读取 save_model 写出的模型文件"""
    path = Path(path)
    if not path.exists():
        raise DataError(f"找不到模型文件: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"模型文件不是合法的JSON {path}: {e}") from e

    if payload.get("format") != MODEL_FORMAT:
        raise DataError(f"不支持的模型格式: {payload.get('format')}")

    B = np.zeros((int(payload["p"]), int(payload["G"])))
    support = np.asarray(payload["support"], dtype=np.int64)
    if support.size:
        B[support] = np.asarray(payload["rows"], dtype=np.float64)
    coef = CoefficientMatrix(B=B, q=payload["q"], sparsity_param=payload["sparsity_param"])
    feature_names = payload.get("feature_names")
    return TrainedModel(coef=coef,
                        log_priors=np.asarray(payload["log_priors"], dtype=np.float64),
                        diag_term=np.asarray(payload["diag_term"], dtype=np.float64),
                        hyper=dict(payload["hyper"]),
                        label_names=tuple(payload["label_names"]),
                        feature_names=tuple(feature_names) if feature_names is not None else None)

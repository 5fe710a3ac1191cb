#!/usr/bin/env python3
"""
模型选择 - (alpha, K) 网格上的 Q 折交叉验证与 eps_thr / 最少特征数 选择规则

选择规则：
    eps_thr = max(0.15 * n_floor, eps_cv)，eps_cv 为网格上的最小 CV 错误数（各折错误数之和），
    n_floor 默认为每折的评分样本数 n / Q（selection.eps_floor_basis = fold），
    设为 total 时为全部评分样本数 n
    在 CV 错误数 <= eps_thr 的参数对中选择 NFS 最小的一对，
    NFS 相同时依次按 (错误数更小, K 更小, alpha 更小) 决定

对固定的 (折, alpha)，所有 K 值一次评估完成：行按范数排好序后，
H_K 的支撑集随 K 嵌套增长，判别值可按排名逐段累加。
"""

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml
from sklearn.model_selection import StratifiedKFold

from crda_classifier import (PriorSpec, coefficient_matrix, fit_factors, normalize_q, predict_groups,
                             rank_rows, resolve_priors, soft_threshold, train)
from crda_errors import DataError
from data_model import ClassMeans, LabeledDataset, center_by_class
from project_config import get_config
from rscm import IDENTITY_TARGET, SCALED_TARGET, SvdFactors, build_rscm, estimate_alpha_lw
from task_pool import run_jobs

HOLDOUT_TRAIN_ID = -1


@dataclass(frozen=True)
class Grid:
    """候选参数网格：alphas 在 [0,1)，ks 为严格递增的正整数"""

    alphas: np.ndarray
    ks: np.ndarray

    def __post_init__(self):
        alphas = np.unique(np.asarray(self.alphas, dtype=np.float64))
        ks = np.asarray(self.ks)
        if alphas.size == 0 or ks.size == 0:
            raise DataError("alpha 网格和 K 网格都不能为空")
        if np.any(alphas < 0) or np.any(alphas >= 1):
            raise DataError(f"alpha 网格必须落在 [0, 1) 内: {alphas}")
        if not np.all(np.equal(np.mod(ks, 1), 0)):
            raise DataError(f"K 网格必须是整数: {ks}")
        ks = np.unique(ks.astype(np.int64))
        if ks[0] < 1:
            raise DataError(f"K 网格必须 >= 1: {ks}")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "ks", ks)

    def check_against(self, p: int):
        if self.ks[-1] > p:
            raise DataError(f"K 网格最大值 {self.ks[-1]} 超过特征数 p={p}")


@dataclass(frozen=True)
class FoldPlan:
    """每个样本的折编号；HOLDOUT_TRAIN_ID 表示只参与训练、从不被评分"""

    fold_ids: np.ndarray
    seed: Optional[int] = None

    @property
    def folds(self) -> List[int]:
        return [int(f) for f in np.unique(self.fold_ids) if f >= 0]

    @property
    def Q(self) -> int:
        return len(self.folds)

    @property
    def n_scored(self) -> int:
        return int(np.sum(self.fold_ids >= 0))

    @property
    def is_holdout(self) -> bool:
        return bool(np.any(self.fold_ids == HOLDOUT_TRAIN_ID))

    def floor_count(self, basis: Optional[str] = None) -> float:
        """eps_thr 下限所乘的样本数：fold 为平均每折评分样本数，total 为全部评分样本数"""
        basis = basis or get_config().get("selection.eps_floor_basis", "fold")
        if basis == "total":
            return float(self.n_scored)
        if basis == "fold":
            return self.n_scored / self.Q
        raise DataError(f"未知的 eps_floor_basis: {basis}，可选: fold, total")

    def split(self, fold: int) -> Tuple[np.ndarray, np.ndarray]:
        """返回 (训练索引, 评分索引)"""
        return np.flatnonzero(self.fold_ids != fold), np.flatnonzero(self.fold_ids == fold)

    def deploy_indices(self) -> np.ndarray:
        """用于训练最终模型（以及统计 NFS）的样本"""
        if self.is_holdout:
            return np.flatnonzero(self.fold_ids == HOLDOUT_TRAIN_ID)
        return np.arange(self.fold_ids.shape[0])


@dataclass
class CvReport:
    """网格搜索结果：errors / nfs / axis_grid 均为 I x J 矩阵

    axis_grid[i, j] 是第 i 个 alpha 下第 j 个稀疏参数（K 或 delta）的取值；
    K 网格与 alpha 无关，delta 网格随 alpha 变化。
    """

    alphas: np.ndarray
    axis_grid: np.ndarray
    errors: np.ndarray
    nfs: np.ndarray
    eps_cv: int
    eps_thr: float
    selected_index: Tuple[int, int]
    q: str
    folds: int
    seed: Optional[int]
    n_scored: int
    n_floor: float
    strategy: str = "grid"
    axis_name: str = "K"
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def ks(self) -> np.ndarray:
        return self.axis_grid[0].astype(np.int64)

    @property
    def selected(self) -> Tuple[float, float]:
        value = self.axis_grid[self.selected_index]
        return float(self.alphas[self.selected_index[0]]), (int(value) if self.axis_name == "K" else float(value))

    @property
    def selected_error(self) -> int:
        return int(self.errors[self.selected_index])

    @property
    def selected_nfs(self) -> int:
        return int(self.nfs[self.selected_index])

    def to_frame(self) -> pd.DataFrame:
        """长格式：alpha, K(或delta), error, nfs"""
        J = self.errors.shape[1]
        axis = self.axis_grid.ravel()
        return pd.DataFrame({
            "alpha": np.repeat(self.alphas, J),
            self.axis_name: axis.astype(np.int64) if self.axis_name == "K" else axis,
            "error": self.errors.ravel(),
            "nfs": self.nfs.ravel(),
        })

    def summary(self) -> Dict[str, object]:
        alpha, sparsity = self.selected
        return {
            "strategy": self.strategy,
            "q": self.q,
            "folds": self.folds,
            "seed": self.seed,
            "n_scored": self.n_scored,
            "n_floor": float(self.n_floor),
            "selected_alpha": alpha,
            f"selected_{self.axis_name}": sparsity,
            "selected_error": self.selected_error,
            "selected_nfs": self.selected_nfs,
            "eps_cv": int(self.eps_cv),
            "eps_thr": float(self.eps_thr),
            **{k: float(v) for k, v in self.extras.items()},
        }

    def write(self, out_dir, stem: str = "cv") -> Tuple[Path, Path]:
        """写出网格CSV（带 # 摘要头）与 YAML 摘要"""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = self.summary()
        grid_path = out_dir / f"{stem}_grid.csv"
        with open(grid_path, 'w', encoding='utf-8', newline='') as f:
            for key, value in summary.items():
                f.write(f"# {key}: {value}\n")
            self.to_frame().to_csv(f, index=False)
        summary_path = out_dir / f"{stem}_summary.yaml"
        with open(summary_path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(summary, f, sort_keys=False, allow_unicode=True)
        return grid_path, summary_path


def make_folds(n: int, labels: np.ndarray, Q: int, seed: int) -> FoldPlan:
    """分层 Q 折：每个类别的样本尽量均匀地分散到各折，给定种子结果确定"""
    labels = np.asarray(labels)
    if labels.shape[0] != n:
        raise DataError(f"标签长度 {labels.shape[0]} 与 n={n} 不一致")
    if Q < 2:
        raise DataError(f"折数 Q 必须 >= 2，实际: {Q}")
    if Q > n:
        raise DataError(f"折数 Q={Q} 大于样本数 n={n}")

    _, counts = np.unique(labels, return_counts=True)
    if counts.max() < Q:
        return FoldPlan(fold_ids=_round_robin_folds(labels, int(Q), int(seed)), seed=int(seed))

    splitter = StratifiedKFold(n_splits=int(Q), shuffle=True, random_state=int(seed))
    fold_ids = np.full(n, HOLDOUT_TRAIN_ID, dtype=np.int64)
    with warnings.catch_warnings():
        # 小类别少于 Q 个样本时 sklearn 会给出警告，此时部分折不含该类别
        warnings.simplefilter("ignore", UserWarning)
        try:
            for fold, (_, test_idx) in enumerate(splitter.split(np.zeros((n, 1)), labels)):
                fold_ids[test_idx] = fold
        except ValueError as e:
            raise DataError(f"无法构造 {Q} 折分层划分: {e}") from e
    return FoldPlan(fold_ids=fold_ids, seed=int(seed))


def _round_robin_folds(labels: np.ndarray, Q: int, seed: int) -> np.ndarray:
    """所有类别都少于 Q 个样本时：按类别依次轮转分配到打乱后的折顺序上"""
    rng = np.random.default_rng(seed)
    fold_order = rng.permutation(Q)
    fold_ids = np.empty(labels.shape[0], dtype=np.int64)
    position = 0
    for group in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == group))
        fold_ids[members] = fold_order[(position + np.arange(members.size)) % Q]
        position += members.size
    return fold_ids


def holdout_folds(n_train: int, n_validation: int) -> FoldPlan:
    """留出验证：数据按 (训练集, 验证集) 顺序拼接，验证集构成唯一的评分折"""
    if n_train < 1 or n_validation < 1:
        raise DataError("训练集和验证集都不能为空")
    fold_ids = np.concatenate([np.full(n_train, HOLDOUT_TRAIN_ID), np.zeros(n_validation)]).astype(np.int64)
    return FoldPlan(fold_ids=fold_ids)


def default_grids(p: int, alpha_count: Optional[int] = None, k_count: Optional[int] = None) -> Grid:
    """alpha_i = i/I (i=0..I-1)，K 为 [1,p] 上均匀取整后去重的网格"""
    if p < 1:
        raise DataError(f"p 必须 >= 1，实际: {p}")
    config = get_config()
    alpha_count = int(alpha_count or config.get("selection.alpha_grid_size", 25))
    k_count = int(k_count or config.get("selection.k_grid_size", 100))
    alphas = np.arange(alpha_count) / alpha_count
    ks = np.unique(np.rint(np.linspace(1, p, k_count)).astype(np.int64))
    return Grid(alphas=alphas, ks=ks)


def apply_selection_rule(errors: np.ndarray, nfs: np.ndarray, n_floor: float,
                         alphas: Sequence[float], axis_values: Sequence[float],
                         larger_axis_first: bool = False,
                         eps_floor_fraction: Optional[float] = None) -> Tuple[int, float, Tuple[int, int]]:
    """返回 (eps_cv, eps_thr, (i, j))

    eps_thr = max(floor * n_floor, eps_cv)；可接受的参数对中 NFS 最小者胜出，
    平局依次比较 错误数、稀疏轴取值（K 取小，delta 取大）、alpha 取小。
    """
    errors = np.asarray(errors)
    nfs = np.asarray(nfs)
    if eps_floor_fraction is None:
        eps_floor_fraction = float(get_config().get("selection.eps_floor_fraction", 0.15))
    eps_cv = int(errors.min())
    eps_thr = max(eps_floor_fraction * n_floor, float(eps_cv))

    alphas = np.asarray(alphas, dtype=np.float64)
    axis_values = np.asarray(axis_values, dtype=np.float64)
    rows, cols = np.nonzero(errors <= eps_thr)
    axis_key = -axis_values[cols] if larger_axis_first else axis_values[cols]
    # np.lexsort 以最后一个键为主键
    order = np.lexsort((alphas[rows], axis_key, errors[rows, cols], nfs[rows, cols]))
    best = order[0]
    return eps_cv, eps_thr, (int(rows[best]), int(cols[best]))


def cv_error(ds: LabeledDataset, alpha: float, K: int, q, folds: FoldPlan,
             priors: PriorSpec = None) -> int:
    """逐折训练、在留出样本上计数误分类，返回总错误数"""
    total = 0
    for fold in folds.folds:
        train_idx, test_idx = folds.split(fold)
        subset = _fold_subset(ds, train_idx, fold)
        model = train(subset, alpha, K, q, priors)
        total += int(np.sum(predict_groups(model, ds.X[test_idx]) != ds.labels[test_idx]))
    return total


def _fold_subset(ds: LabeledDataset, train_idx: np.ndarray, fold: int) -> LabeledDataset:
    try:
        return ds.take(train_idx)
    except DataError as e:
        raise DataError(f"第 {fold + 1} 折的训练集缺少类别: {e}") from e


@dataclass(frozen=True)
class FoldFit:
    """一折的训练结果缓存，与 alpha / q 无关"""

    fold: int
    means: ClassMeans
    factors: SvdFactors
    X_test: np.ndarray
    y_test: np.ndarray
    log_priors: np.ndarray


class FoldCache:
    """按折缓存类均值与 SVD 因子，供网格搜索、轻量搜索和软阈值搜索共享"""

    def __init__(self, ds: LabeledDataset, folds: FoldPlan, priors: PriorSpec = None,
                 max_concurrent: Optional[int] = None):
        self.ds = ds
        self.plan = folds
        self.priors = priors
        self.max_concurrent = max_concurrent if max_concurrent is not None else get_config().get_worker_count()

        jobs = [lambda fold=fold: self._fit_fold(fold) for fold in folds.folds]
        self.fold_fits: List[FoldFit] = run_jobs(jobs, self.max_concurrent)

        self.deploy = ds.take(folds.deploy_indices())
        self.deploy_means, self.deploy_factors = fit_factors(self.deploy)
        self._full_t: Dict[Tuple[float, str], np.ndarray] = {}

    def _fit_fold(self, fold: int) -> FoldFit:
        train_idx, test_idx = self.plan.split(fold)
        subset = _fold_subset(self.ds, train_idx, fold)
        means, factors = fit_factors(subset)
        return FoldFit(fold=fold, means=means, factors=factors,
                       X_test=self.ds.X[test_idx], y_test=self.ds.labels[test_idx],
                       log_priors=np.log(resolve_priors(self.priors, means)))

    def full_t(self, alpha: float, target: str = SCALED_TARGET) -> np.ndarray:
        """部署数据上的 T = Sigma~^-1 M"""
        key = (float(alpha), target)
        if key not in self._full_t:
            rc = build_rscm(self.deploy_factors, alpha, target)
            self._full_t[key] = coefficient_matrix(rc, self.deploy_means)
        return self._full_t[key]

    def lw_alpha(self) -> float:
        """部署数据上的闭式 alpha"""
        centered = center_by_class(self.deploy, self.deploy_means)
        return estimate_alpha_lw(centered, self.deploy_factors)


def _path_errors(fit: FoldFit, alpha: float, ks: np.ndarray, q: str) -> np.ndarray:
    """一折、一个 alpha 下所有 K 的错误数"""
    T = coefficient_matrix(build_rscm(fit.factors, alpha), fit.means)
    order = rank_rows(T, q)
    scores = np.zeros((fit.X_test.shape[0], T.shape[1]))
    half_diag = np.zeros(T.shape[1])
    errors = np.zeros(ks.shape[0], dtype=np.int64)

    start = 0
    for j, K in enumerate(ks):
        rows = order[start:K]
        scores += fit.X_test[:, rows] @ T[rows]
        half_diag += 0.5 * np.sum(fit.means.M[rows] * T[rows], axis=0)
        start = K
        predicted = np.argmax(scores - half_diag + fit.log_priors, axis=1) + 1
        errors[j] = np.sum(predicted != fit.y_test)
    return errors


def _soft_errors(fit: FoldFit, alpha: float, deltas: np.ndarray, target: str) -> np.ndarray:
    """一折、一个 alpha 下所有 delta 的错误数"""
    T = coefficient_matrix(build_rscm(fit.factors, alpha, target), fit.means)
    errors = np.zeros(deltas.shape[0], dtype=np.int64)
    for j, delta in enumerate(deltas):
        B = soft_threshold(T, delta).B
        scores = fit.X_test @ B - 0.5 * np.sum(fit.means.M * B, axis=0) + fit.log_priors
        errors[j] = np.sum(np.argmax(scores, axis=1) + 1 != fit.y_test)
    return errors


def _prepare(ds: LabeledDataset, Q: Optional[int], seed: Optional[int], folds: Optional[FoldPlan],
             priors: PriorSpec, cache: Optional[FoldCache], max_concurrent: Optional[int]) -> FoldCache:
    if cache is not None:
        return cache
    config = get_config()
    if folds is None:
        Q = int(Q if Q is not None else config.get("selection.folds", 5))
        seed = int(seed if seed is not None else config.get("selection.seed", 0))
        folds = make_folds(ds.n, ds.labels, Q, seed)
    return FoldCache(ds, folds, priors, max_concurrent)


def _search_hard(cache: FoldCache, grid: Grid, q: str, strategy: str,
                 extras: Optional[Dict[str, float]] = None) -> CvReport:
    grid.check_against(cache.ds.p)
    jobs = [lambda fit=fit: np.vstack([_path_errors(fit, a, grid.ks, q) for a in grid.alphas])
            for fit in cache.fold_fits]
    errors = np.sum(run_jobs(jobs, cache.max_concurrent), axis=0)

    nonzero_rows = np.array([np.count_nonzero(np.any(cache.full_t(a) != 0, axis=1)) for a in grid.alphas])
    nfs = np.minimum(grid.ks[None, :], nonzero_rows[:, None])

    n_floor = cache.plan.floor_count()
    eps_cv, eps_thr, index = apply_selection_rule(errors, nfs, n_floor, grid.alphas, grid.ks)
    axis_grid = np.tile(grid.ks.astype(np.float64), (grid.alphas.shape[0], 1))
    return CvReport(alphas=grid.alphas, axis_grid=axis_grid, errors=errors, nfs=nfs,
                    eps_cv=eps_cv, eps_thr=eps_thr, selected_index=index, q=q,
                    folds=cache.plan.Q, seed=cache.plan.seed, n_scored=cache.plan.n_scored, n_floor=n_floor,
                    strategy=strategy, axis_name="K", extras=extras or {})


def grid_search(ds: LabeledDataset, grid: Optional[Grid] = None, Q: Optional[int] = None, q="inf",
                seed: Optional[int] = None, folds: Optional[FoldPlan] = None, priors: PriorSpec = None,
                cache: Optional[FoldCache] = None, max_concurrent: Optional[int] = None) -> CvReport:
    """(alpha, K) 二维网格上的交叉验证搜索"""
    cache = _prepare(ds, Q, seed, folds, priors, cache, max_concurrent)
    grid = grid or default_grids(ds.p)
    return _search_hard(cache, grid, normalize_q(q), "grid")


def light_search(ds: LabeledDataset, ks: Optional[Sequence[int]] = None, Q: Optional[int] = None, q="inf",
                 seed: Optional[int] = None, folds: Optional[FoldPlan] = None, priors: PriorSpec = None,
                 cache: Optional[FoldCache] = None, max_concurrent: Optional[int] = None) -> CvReport:
    """轻量策略：alpha 取闭式估计，仅对 K 做交叉验证"""
    cache = _prepare(ds, Q, seed, folds, priors, cache, max_concurrent)
    alpha_hat = cache.lw_alpha()
    ks = default_grids(ds.p).ks if ks is None else ks
    grid = Grid(alphas=[alpha_hat], ks=ks)
    return _search_hard(cache, grid, normalize_q(q), "light", {"alpha_lw": alpha_hat})


def soft_grid_search(ds: LabeledDataset, alphas: Optional[Sequence[float]] = None, Q: Optional[int] = None,
                     seed: Optional[int] = None, folds: Optional[FoldPlan] = None, priors: PriorSpec = None,
                     cache: Optional[FoldCache] = None, delta_grid_size: Optional[int] = None,
                     target: str = IDENTITY_TARGET, max_concurrent: Optional[int] = None) -> CvReport:
    """软阈值基线的 (alpha, delta) 网格搜索

    每个 alpha 的 delta 网格为 [0, max|t_ij|] 上的均匀网格，t_ij 来自部署数据上的 T。
    """
    cache = _prepare(ds, Q, seed, folds, priors, cache, max_concurrent)
    alphas = default_grids(ds.p).alphas if alphas is None else np.unique(np.asarray(alphas, dtype=np.float64))
    delta_grid_size = int(delta_grid_size or get_config().get("selection.delta_grid_size", 25))

    # 每行对应一个 alpha 的 delta 网格
    delta_rows = np.vstack([np.linspace(0.0, np.max(np.abs(cache.full_t(a, target))), delta_grid_size)
                            for a in alphas])
    jobs = [lambda fit=fit: np.vstack([_soft_errors(fit, a, delta_rows[i], target) for i, a in enumerate(alphas)])
            for fit in cache.fold_fits]
    errors = np.sum(run_jobs(jobs, cache.max_concurrent), axis=0)

    nfs = np.array([[soft_threshold(cache.full_t(a, target), delta).support.size for delta in delta_rows[i]]
                    for i, a in enumerate(alphas)])

    # 选择规则按网格位置比较 delta：位置越靠后 delta 越大
    positions = np.arange(delta_grid_size)
    n_floor = cache.plan.floor_count()
    eps_cv, eps_thr, index = apply_selection_rule(errors, nfs, n_floor, alphas, positions,
                                                  larger_axis_first=True)
    return CvReport(alphas=alphas, axis_grid=delta_rows, errors=errors, nfs=nfs,
                    eps_cv=eps_cv, eps_thr=eps_thr, selected_index=index, q="none",
                    folds=cache.plan.Q, seed=cache.plan.seed, n_scored=cache.plan.n_scored, n_floor=n_floor,
                    strategy="soft", axis_name="delta")

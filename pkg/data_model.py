#!/usr/bin/env python3
"""
数据模型 - 带标签数据集、类均值、按类中心化以及CSV读写

内部约定：
- 标签按首次出现顺序重映射为 1..G，原始标签字符串保留在 label_names 中
- 中心化矩阵按 特征 x 样本 (p x n) 存放，与 S = (1/n) Xc Xc^T 一致
- 缺失值直接拒绝，不做插补
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from crda_errors import DataError
from project_config import get_config


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class LabeledDataset:
    """训练/测试数据集：X 为 n x p，labels 取值 1..G"""

    X: np.ndarray
    labels: np.ndarray
    label_names: Tuple[str, ...]
    feature_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        labels = np.asarray(self.labels)

        if X.ndim != 2:
            raise DataError(f"特征矩阵必须是二维的，实际维度: {X.ndim}")
        n, p = X.shape
        if p < 1:
            raise DataError("特征数 p 必须 >= 1")
        if labels.ndim != 1 or labels.shape[0] != n:
            raise DataError(f"标签长度 {labels.shape[0] if labels.ndim == 1 else labels.shape} 与样本数 {n} 不一致")
        if not np.all(np.isfinite(X)):
            raise DataError("特征矩阵含有非有限值 (NaN/Inf)")

        G = len(self.label_names)
        if G < 1:
            raise DataError("至少需要一个类别")
        if labels.size and (not np.issubdtype(labels.dtype, np.integer) or labels.min() < 1 or labels.max() > G):
            raise DataError(f"标签必须是 1..{G} 的整数")

        counts = np.bincount(labels.astype(np.int64), minlength=G + 1)[1:]
        empty = [self.label_names[g] for g in range(G) if counts[g] == 0]
        if empty:
            raise DataError(f"以下类别没有样本: {', '.join(empty)}")
        if n < G:
            raise DataError(f"样本数 n={n} 小于类别数 G={G}")
        if self.feature_names is not None and len(self.feature_names) != p:
            raise DataError(f"特征名数量 {len(self.feature_names)} 与特征数 {p} 不一致")

        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "labels", _readonly(labels.astype(np.int64)))
        object.__setattr__(self, "label_names", tuple(str(name) for name in self.label_names))
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(str(name) for name in self.feature_names))

    @classmethod
    def from_raw_labels(cls, X: np.ndarray, raw_labels: Sequence,
                        feature_names: Optional[Sequence[str]] = None) -> "LabeledDataset":
        """按首次出现顺序把任意标签映射为 1..G"""
        codes, uniques = pd.factorize(pd.Series(list(raw_labels), dtype=str), sort=False)
        return cls(X=X, labels=codes + 1, label_names=tuple(uniques),
                   feature_names=tuple(feature_names) if feature_names is not None else None)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def G(self) -> int:
        return len(self.label_names)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.G + 1)[1:]

    def take(self, indices: np.ndarray) -> "LabeledDataset":
        """按行索引取子集，保留类别映射"""
        indices = np.asarray(indices)
        return LabeledDataset(X=self.X[indices], labels=self.labels[indices],
                              label_names=self.label_names, feature_names=self.feature_names)

    def named_labels(self, labels: Optional[np.ndarray] = None) -> List[str]:
        """把 1..G 的标签翻译回原始名称"""
        labels = self.labels if labels is None else np.asarray(labels)
        return [self.label_names[g - 1] for g in labels]


@dataclass(frozen=True)
class ClassMeans:
    """类均值矩阵 M (p x G)、各类样本数与比例"""

    M: np.ndarray
    counts: np.ndarray
    proportions: np.ndarray = field(init=False)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "M", _readonly(np.asarray(self.M, dtype=np.float64)))
        object.__setattr__(self, "counts", _readonly(counts))
        object.__setattr__(self, "proportions", _readonly(counts / counts.sum()))

    @property
    def p(self) -> int:
        return self.M.shape[0]

    @property
    def G(self) -> int:
        return self.M.shape[1]


@dataclass(frozen=True)
class CenteredData:
    """按类中心化后的数据 Xc (p x n)，列为中心化后的观测"""

    Xc: np.ndarray
    source: LabeledDataset

    def __post_init__(self):
        object.__setattr__(self, "Xc", _readonly(np.asarray(self.Xc, dtype=np.float64)))

    @property
    def p(self) -> int:
        return self.Xc.shape[0]

    @property
    def n(self) -> int:
        return self.Xc.shape[1]


def class_means(ds: LabeledDataset) -> ClassMeans:
    """计算各类样本均值 mu_g"""
    onehot = np.zeros((ds.n, ds.G))
    onehot[np.arange(ds.n), ds.labels - 1] = 1.0
    counts = ds.counts
    M = (ds.X.T @ onehot) / counts
    return ClassMeans(M=M, counts=counts)


def center_by_class(ds: LabeledDataset, means: ClassMeans) -> CenteredData:
    """第 i 列为 x_i - mu_{c(i)}"""
    if means.p != ds.p or means.G != ds.G:
        raise DataError(f"类均值维度 {means.M.shape} 与数据集 (p={ds.p}, G={ds.G}) 不匹配")
    if not np.array_equal(means.counts, ds.counts):
        raise DataError("类均值不是由该数据集计算得到的（各类样本数不一致）")
    Xc = (ds.X - means.M.T[ds.labels - 1]).T
    return CenteredData(Xc=Xc, source=ds)


def decenter(centered: CenteredData, means: ClassMeans) -> np.ndarray:
    """中心化的逆操作，返回 n x p 的原始矩阵"""
    ds = centered.source
    return centered.Xc.T + means.M.T[ds.labels - 1]


def _blank_cells(raw: pd.DataFrame) -> np.ndarray:
    """缺失的单元格：短行被补出的字段读入为空字符串"""
    return raw.isna().to_numpy() | (np.char.strip(raw.to_numpy(dtype=str)) == "")


def _parse_numeric_block(raw: pd.DataFrame, row_offset: int = 0) -> np.ndarray:
    """把字符串表转为浮点矩阵；出错时给出行列位置"""
    missing = _blank_cells(raw)
    if missing.any():
        row, col = np.argwhere(missing)[0]
        raise DataError(f"第 {row + 1 + row_offset} 行列 '{raw.columns[col]}' 缺失（字段数量不足或单元格为空）")

    try:
        values = raw.to_numpy(dtype=str).astype(np.float64)
    except ValueError:
        for col in raw.columns:
            parsed = pd.to_numeric(raw[col], errors="coerce")
            bad = np.flatnonzero(parsed.isna().to_numpy())
            if bad.size:
                row = bad[0]
                raise DataError(f"无法解析的数值 '{raw[col].iloc[row]}'，位置: 第 {row + 1 + row_offset} 行, 列 '{col}'")
        raise

    if not np.all(np.isfinite(values)):
        row, col = np.argwhere(~np.isfinite(values))[0]
        raise DataError(f"非有限数值 '{raw.iat[row, col]}'，位置: 第 {row + 1 + row_offset} 行, 列 '{raw.columns[col]}'")
    return values


def _read_raw_csv(path: Path, encoding: str) -> pd.DataFrame:
    if not path.exists():
        raise DataError(f"找不到文件: {path}")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding=encoding)
    except pd.errors.ParserError as e:
        raise DataError(f"CSV 行长度不一致 {path}: {e}") from e
    except pd.errors.EmptyDataError as e:
        raise DataError(f"CSV 文件为空或缺少表头: {path}") from e


def load_csv(path, label_column: Optional[str] = None, transpose: bool = False,
             labels_path=None, encoding: Optional[str] = None) -> LabeledDataset:
    """读取CSV数据集

    transpose=False: 每行一个样本，label_column 指定标签列
    transpose=True:  每行一个特征（首列为特征名，表头为样本名），标签来自 labels_path 的单列文件
    """
    config = get_config()
    label_column = label_column or config.get("data.label_column", "class")
    encoding = encoding or config.get("data.encoding", "utf-8")
    path = Path(path)
    raw = _read_raw_csv(path, encoding)

    if not transpose:
        if label_column not in raw.columns:
            raise DataError(f"找不到标签列 '{label_column}'，现有列: {list(raw.columns)[:10]}")
        feature_cols = [c for c in raw.columns if c != label_column]
        if not feature_cols:
            raise DataError("除标签列外没有特征列")
        blank_labels = _blank_cells(raw[[label_column]]).ravel()
        if blank_labels.any():
            row = int(np.flatnonzero(blank_labels)[0])
            raise DataError(f"第 {row + 1} 行缺少标签（字段数量不足或标签为空）")
        X = _parse_numeric_block(raw[feature_cols])
        return LabeledDataset.from_raw_labels(X, raw[label_column].tolist(), feature_cols)

    if labels_path is None:
        raise DataError("转置模式需要单独的标签文件 (labels_path)")
    feature_names = raw.iloc[:, 0].tolist()
    matrix = _parse_numeric_block(raw.iloc[:, 1:])
    raw_labels = load_labels_csv(labels_path, encoding)
    if len(raw_labels) != matrix.shape[1]:
        raise DataError(f"标签文件行数 {len(raw_labels)} 与样本数 {matrix.shape[1]} 不一致")
    return LabeledDataset.from_raw_labels(matrix.T, raw_labels, feature_names)


def load_features(path, label_column: Optional[str] = None,
                  encoding: Optional[str] = None) -> Tuple[np.ndarray, List[str], Optional[List[str]]]:
    """读取待预测的样本为行CSV；标签列可有可无

    返回 (X, 特征名, 原始标签或 None)
    """
    config = get_config()
    label_column = label_column or config.get("data.label_column", "class")
    raw = _read_raw_csv(Path(path), encoding or config.get("data.encoding", "utf-8"))
    feature_cols = [c for c in raw.columns if c != label_column]
    if not feature_cols:
        raise DataError(f"没有特征列: {path}")
    labels = raw[label_column].tolist() if label_column in raw.columns else None
    return _parse_numeric_block(raw[feature_cols]), feature_cols, labels


def save_csv(ds: LabeledDataset, path, label_column: Optional[str] = None):
    """写出样本为行的CSV，标签列放在最后，浮点数使用最短往返表示"""
    label_column = label_column or get_config().get("data.label_column", "class")
    names = ds.feature_names or tuple(f"x{i + 1}" for i in range(ds.p))
    frame = pd.DataFrame(ds.X, columns=list(names))
    frame[label_column] = ds.named_labels()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding=get_config().get("data.encoding", "utf-8"))


def load_labels_csv(path, encoding: Optional[str] = None) -> List[str]:
    """读取单列标签文件（带表头），返回第一列的字符串标签"""
    encoding = encoding or get_config().get("data.encoding", "utf-8")
    label_raw = _read_raw_csv(Path(path), encoding)
    if label_raw.shape[1] < 1:
        raise DataError(f"标签文件没有列: {path}")
    labels = label_raw.iloc[:, 0]
    if (labels == "").any():
        row = int(np.flatnonzero((labels == "").to_numpy())[0])
        raise DataError(f"标签文件第 {row + 1} 行为空: {path}")
    return labels.tolist()


def save_labels_csv(labels: Sequence[str], path, label_column: Optional[str] = None):
    """写出单列标签文件（转置模式使用）"""
    label_column = label_column or get_config().get("data.label_column", "class")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({label_column: list(labels)}).to_csv(path, index=False,
                                                      encoding=get_config().get("data.encoding", "utf-8"))


def concat_datasets(first: LabeledDataset, second: LabeledDataset) -> LabeledDataset:
    """拼接两个类别映射相同的数据集（验证集 + 训练集）"""
    if first.label_names != second.label_names or first.p != second.p:
        raise DataError("两个数据集的类别映射或特征数不一致，无法拼接")
    return LabeledDataset(X=np.vstack([first.X, second.X]),
                          labels=np.concatenate([first.labels, second.labels]),
                          label_names=first.label_names, feature_names=first.feature_names)

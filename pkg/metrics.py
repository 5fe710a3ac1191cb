#!/usr/bin/env python3
"""
评估指标 - 测试误差 (TE)、选中特征数 (NFS)、检出率 (DR) 与误报率 (FP)

DR = 100 * |selected ∩ truth| / |truth|
FP = 100 * |selected \\ truth| / |selected|，selected 为空时 FP = 0
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import zero_one_loss
from tabulate import tabulate

from crda_classifier import TrainedModel, predict, selected_features
from crda_errors import DataError
from data_model import LabeledDataset

METRIC_COLUMNS = ("TE", "NFS", "DR", "FP")


@dataclass(frozen=True)
class EvalResult:
    te_count: int
    te_rate: float
    nfs: int
    n_test: int
    dr_percent: Optional[float] = None
    fp_percent: Optional[float] = None

    def as_row(self) -> Dict[str, Optional[float]]:
        """按表格列名输出"""
        return {"TE": self.te_count, "NFS": self.nfs, "DR": self.dr_percent, "FP": self.fp_percent}


def test_error(pred: Sequence, truth: Sequence) -> Tuple[int, float]:
    """误分类个数与比例"""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise DataError(f"预测长度 {pred.shape[0]} 与真实标签长度 {truth.shape[0]} 不一致")
    if truth.size == 0:
        raise DataError("测试集为空，无法计算测试误差")
    count = int(zero_one_loss(truth, pred, normalize=False))
    return count, count / truth.size


def nfs(model: TrainedModel) -> int:
    return int(model.coef.support.size)


def dr_fp(selected: Iterable[int], truth: Iterable[int]) -> Tuple[float, float]:
    """检出率与误报率（百分比）"""
    selected = {int(i) for i in selected}
    truth = {int(i) for i in truth}
    if not truth:
        raise DataError("真实差异特征集合为空，无法计算 DR/FP")
    hits = len(selected & truth)
    dr = 100.0 * hits / len(truth)
    fp = 100.0 * (len(selected) - hits) / len(selected) if selected else 0.0
    return dr, fp


def evaluate(model: TrainedModel, test: LabeledDataset, truth: Optional[Sequence[int]] = None) -> EvalResult:
    """在测试集上评估模型；按原始标签名比较，truth 给出时附带 DR/FP"""
    count, rate = test_error(predict(model, test.X), test.named_labels())
    dr = fp = None
    if truth is not None:
        dr, fp = dr_fp(selected_features(model), truth)
    return EvalResult(te_count=count, te_rate=rate, nfs=nfs(model), n_test=test.n,
                      dr_percent=dr, fp_percent=fp)


def summarize_trials(records: List[Dict[str, object]], method_order: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """按方法汇总多次试验：每个指标给出均值与标准差（样本标准差，单次试验记为 0）

    records 中每条为 {"method", "trial", "TE", "NFS", "DR", "FP"}；DR/FP 全缺失时省略这两列。
    """
    if not records:
        raise DataError("没有可汇总的试验结果")
    frame = pd.DataFrame.from_records(records)
    metrics = [m for m in METRIC_COLUMNS if m in frame.columns and frame[m].notna().any()]
    frame[metrics] = frame[metrics].astype(np.float64)

    grouped = frame.groupby("method", sort=False)[metrics]
    means = grouped.mean()
    stds = grouped.std(ddof=1).fillna(0.0)
    summary = pd.DataFrame(index=means.index)
    for metric in metrics:
        summary[metric] = means[metric]
        summary[f"{metric}_sd"] = stds[metric]
    summary.insert(0, "trials", grouped.size())

    if method_order is not None:
        summary = summary.reindex([m for m in method_order if m in summary.index])
    summary.index.name = "method"
    return summary


def format_markdown(summary: pd.DataFrame, floatfmt: str = ".1f") -> str:
    """Markdown 表格：TE / NFS / DR / FP 列显示为 均值 (标准差)"""
    metrics = [m for m in METRIC_COLUMNS if m in summary.columns]
    rows = []
    for method, row in summary.iterrows():
        cells = [method, int(row["trials"])]
        cells += [f"{row[m]:{floatfmt}} ({row[f'{m}_sd']:{floatfmt}})" for m in metrics]
        rows.append(cells)
    return tabulate(rows, headers=["method", "trials", *metrics], tablefmt="github")


def write_tables(summary: pd.DataFrame, out_dir, stem: str = "results",
                 formats: Sequence[str] = ("csv", "markdown")) -> List[Path]:
    """写出汇总表；同样的输入总是得到字节相同的文件"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = out_dir / f"{stem}.csv"
        summary.to_csv(path, float_format="%.6f", lineterminator="\n")
        written.append(path)
    if "markdown" in formats:
        path = out_dir / f"{stem}.md"
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(format_markdown(summary) + "\n")
        written.append(path)
    return written


def trial_record(method: str, trial: int, result: EvalResult) -> Dict[str, object]:
    """一条试验记录，供逐次落盘与汇总使用"""
    record: Dict[str, object] = {"method": method, "trial": int(trial)}
    record.update(result.as_row())
    record["n_test"] = result.n_test
    return record

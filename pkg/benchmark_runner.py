#!/usr/bin/env python3
"""
蒙特卡洛基准测试 - 生成数据 → 模型选择 → 训练 → 评估，逐次试验落盘，可断点续跑

每次试验比较以下方法（先验一律取等概率，真实数据模式取样本比例）：
  CRDA-l{q}     (alpha, K) 网格交叉验证
  CRDA-l{q}-lw  alpha 取闭式估计，仅对 K 交叉验证
  SCRDA-soft    软阈值基线，(alpha, delta) 网格交叉验证
"""

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from crda_classifier import normalize_q, train, train_soft
from crda_errors import DataError, UsageError
from data_model import LabeledDataset, concat_datasets, load_csv
from metrics import evaluate, summarize_trials, trial_record, write_tables
from model_selection import FoldCache, grid_search, holdout_folds, light_search, make_folds, soft_grid_search
from project_config import get_config
from simgen import describe, generate, setup_spec, trial_seeds
from task_pool import run_jobs

SOFT_METHOD = "SCRDA-soft"
DEFAULT_TRIALS = {"I": 25, "II": 25, "III": 10, "data": 10}
DATA_TEST_FRACTION = 0.25


def method_names(q_list: Sequence[str]) -> List[str]:
    """表格中的方法行顺序"""
    names = []
    for q in q_list:
        names += [f"CRDA-l{q}", f"CRDA-l{q}-lw"]
    return names + [SOFT_METHOD]


@dataclass
class BenchSettings:
    """bench 子命令的完整参数；setup 与 data_path 二选一"""

    setup: Optional[str] = None
    data_path: Optional[str] = None
    trials: Optional[int] = None
    folds: Optional[int] = None
    seed: int = 0
    scale: float = 1.0
    q_list: List[str] = field(default_factory=lambda: ["1", "2", "inf"])
    tuning: str = "cv"
    workers: Optional[int] = None
    out_dir: str = "runs/bench"
    multinomial: bool = False
    label_column: Optional[str] = None

    def resolve(self) -> "BenchSettings":
        """填入默认值并检查组合是否合法"""
        if (self.setup is None) == (self.data_path is None):
            raise UsageError("bench 需要且只能指定 --setup 或 --data 之一")
        if self.setup is not None:
            self.setup = str(self.setup).upper()
        if self.tuning not in ("cv", "holdout"):
            raise UsageError(f"未知的调参方式: {self.tuning}，可选: cv, holdout")
        if self.tuning == "holdout" and self.setup not in ("I", "II"):
            raise UsageError("holdout 调参只适用于带验证集的设置 I / II")
        key = self.setup if self.setup is not None else "data"
        self.trials = int(self.trials if self.trials is not None else DEFAULT_TRIALS.get(key, 10))
        if self.trials < 1:
            raise UsageError(f"试验次数必须 >= 1，实际: {self.trials}")
        if self.folds is None:
            self.folds = 10 if self.setup == "III" else int(get_config().get("selection.folds", 5))
        try:
            self.q_list = [normalize_q(q) for q in self.q_list]
        except DataError as e:
            raise UsageError(str(e)) from e
        if not self.q_list:
            raise UsageError("--q-list 不能为空")
        if self.workers is None:
            self.workers = get_config().get_worker_count()
        return self

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


class BenchmarkRunner:
    """按试验调度的基准测试执行器"""

    def __init__(self, settings: BenchSettings):
        self.settings = settings.resolve()
        self.output_dir = Path(self.settings.out_dir)
        self.trials_dir = self.output_dir / "trials"
        self.trials_dir.mkdir(parents=True, exist_ok=True)
        self.methods = method_names(self.settings.q_list)
        self.seeds = trial_seeds(self.settings.seed, self.settings.trials)

        # 试验之间并行时，单次试验内部的折按顺序计算
        self.inner_workers = 1 if self.settings.trials > 1 else self.settings.workers
        self.spec = setup_spec(self.settings.setup, self.settings.scale) if self.settings.setup else None
        self.dataset: Optional[LabeledDataset] = None
        if self.settings.data_path is not None:
            self.dataset = load_csv(self.settings.data_path, label_column=self.settings.label_column)

    def _trial_file(self, idx: int) -> Path:
        return self.trials_dir / f"trial_{idx:03d}.json"

    def _load_finished(self, idx: int) -> Optional[List[Dict[str, object]]]:
        path = self._trial_file(idx)
        if not path.exists():
            return None
        try:
            with open(path, 'r', encoding='utf-8') as f:
                payload = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            print(f"[WARNING] 试验文件损坏，重新计算 {path.name}: {e}")
            return None
        if payload.get("seed") != self.seeds[idx] or payload.get("methods") != self.methods:
            print(f"[WARNING] {path.name} 与当前配置不一致，重新计算")
            return None
        return payload["records"]

    def _split_data(self, seed: int) -> Tuple[LabeledDataset, LabeledDataset]:
        ds = self.dataset
        train_idx, test_idx = train_test_split(np.arange(ds.n), test_size=DATA_TEST_FRACTION,
                                               stratify=ds.labels, random_state=seed)
        return ds.take(np.sort(train_idx)), ds.take(np.sort(test_idx))

    def _tuning_cache(self, seed: int) -> Tuple[FoldCache, LabeledDataset, Optional[np.ndarray], object]:
        """返回 (折缓存, 测试集, 真实特征集, 先验)"""
        s = self.settings
        if self.spec is None:
            train_ds, test_ds = self._split_data(seed)
            folds = make_folds(train_ds.n, train_ds.labels, s.folds, seed)
            return FoldCache(train_ds, folds, None, self.inner_workers), test_ds, None, None

        data = generate(self.spec, seed, s.multinomial)
        if s.tuning == "holdout":
            tune_ds = concat_datasets(data.train, data.validation)
            folds = holdout_folds(data.train.n, data.validation.n)
        else:
            tune_ds = data.train
            folds = make_folds(tune_ds.n, tune_ds.labels, s.folds, seed)
        cache = FoldCache(tune_ds, folds, "equal", self.inner_workers)
        return cache, data.test, data.truth, "equal"

    def run_trial(self, idx: int) -> List[Dict[str, object]]:
        """执行单次试验；已有结果时跳过"""
        total = self.settings.trials
        finished = self._load_finished(idx)
        if finished is not None:
            print(f"[SKIP] [{idx + 1}/{total}] 试验已完成，跳过")
            return finished

        seed = self.seeds[idx]
        print(f"[PROCESS] [{idx + 1}/{total}] 开始试验 (seed={seed})")
        start = time.time()
        cache, test_ds, truth, priors = self._tuning_cache(seed)
        fitted = (cache.deploy_means, cache.deploy_factors)

        records = []
        for q in self.settings.q_list:
            for name, search in ((f"CRDA-l{q}", grid_search), (f"CRDA-l{q}-lw", light_search)):
                report = search(cache.ds, q=q, cache=cache)
                alpha, K = report.selected
                model = train(cache.deploy, alpha, K, q, priors, fitted=fitted)
                records.append(trial_record(name, idx, evaluate(model, test_ds, truth)))

        report = soft_grid_search(cache.ds, cache=cache)
        alpha, delta = report.selected
        model = train_soft(cache.deploy, alpha, delta, priors, fitted=fitted)
        records.append(trial_record(SOFT_METHOD, idx, evaluate(model, test_ds, truth)))

        elapsed = time.time() - start
        with open(self._trial_file(idx), 'w', encoding='utf-8') as f:
            json.dump({"trial": idx, "seed": seed, "methods": self.methods, "records": records,
                       "elapsed_seconds": round(elapsed, 3)}, f, ensure_ascii=False, indent=2)
        print(f"[SUCCESS] [{idx + 1}/{total}] 试验完成，用时 {elapsed:.1f} 秒")
        return records

    def run_all(self) -> List[Path]:
        """执行全部试验并写出汇总表"""
        s = self.settings
        print("=" * 60)
        if self.spec is not None:
            info = describe(self.spec)
            print(f"基准测试: 设置 {info['setup']} (p={info['p']}, G={info['G']}, scale={s.scale})")
        else:
            print(f"基准测试: 数据文件 {s.data_path} (n={self.dataset.n}, p={self.dataset.p}, G={self.dataset.G})")
        print(f"试验次数: {s.trials}, 折数: {s.folds}, 调参: {s.tuning}, 并发: {s.workers}")
        print("=" * 60)

        jobs = [lambda idx=idx: self.run_trial(idx) for idx in range(s.trials)]
        per_trial = run_jobs(jobs, s.workers)
        records = [record for trial_records in per_trial for record in trial_records]
        if not records:
            raise DataError("没有产生任何试验结果")

        summary = summarize_trials(records, self.methods)
        formats = get_config().get("output.table_formats", ["csv", "markdown"])
        written = write_tables(summary, self.output_dir, "results", formats)

        trials_path = self.output_dir / "trials.csv"
        pd.DataFrame.from_records(records).to_csv(trials_path, index=False, float_format="%.6f", lineterminator="\n")
        written.append(trials_path)

        print(f"\n[STATS] 汇总 ({s.trials} 次试验平均):")
        for method, row in summary.iterrows():
            extra = ""
            if "DR" in summary.columns:
                extra = f", DR {row['DR']:.1f}, FP {row['FP']:.1f}"
            print(f"  {method:<14} TE {row['TE']:.1f}, NFS {row['NFS']:.1f}{extra}")
        print(f"[DONE] 结果保存在 {self.output_dir}")
        return written

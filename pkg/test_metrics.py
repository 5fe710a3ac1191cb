#!/usr/bin/env python3
"""
测试评估指标：TE、NFS、DR/FP 以及多次试验的汇总表
"""

import sys

import numpy as np
import pandas as pd
import pytest

import metrics
from crda_classifier import selected_features, train
from crda_errors import DataError
from data_model import LabeledDataset


def test_error_examples():
    truth = np.arange(10) % 3
    assert metrics.test_error(truth, truth) == (0, 0.0)
    assert metrics.test_error((truth + 1) % 3, truth) == (10, 1.0)

    truth = np.zeros(1000, dtype=int)
    pred = truth.copy()
    pred[:84] = 1
    count, rate = metrics.test_error(pred, truth)
    assert count == 84 and rate == pytest.approx(0.084)
    assert metrics.test_error(pred[::-1], truth[::-1]) == (count, rate)


def test_error_accepts_string_labels():
    assert metrics.test_error(["a", "b", "b"], ["a", "b", "c"]) == (1, pytest.approx(1 / 3))


def test_error_rejects_bad_lengths():
    with pytest.raises(DataError):
        metrics.test_error([1, 2], [1, 2, 3])
    with pytest.raises(DataError):
        metrics.test_error([], [])


def test_dr_fp_examples():
    truth = range(200)
    assert metrics.dr_fp(truth, truth) == (100.0, 0.0)
    assert metrics.dr_fp(range(300, 310), truth) == (0.0, 100.0)
    assert metrics.dr_fp([], truth) == (0.0, 0.0)
    with pytest.raises(DataError):
        metrics.dr_fp([1, 2], [])


@pytest.mark.parametrize("nfs_value, dr_table, fp_table", [(205, 90, 12), (240, 92, 23)])
def test_dr_fp_reproduces_reported_triples(nfs_value, dr_table, fp_table):
    truth = range(200)
    hits = dr_table * 200 // 100
    selected = list(range(hits)) + list(range(1000, 1000 + nfs_value - hits))
    dr, fp = metrics.dr_fp(selected, truth)
    assert dr == dr_table
    assert abs(fp - fp_table) <= 1.0
    # 计数分解：命中数 + 误报数 = 选中数
    assert dr * 200 / 100 + fp * nfs_value / 100 == pytest.approx(nfs_value)


def _toy_dataset(rng, n_per_group=20):
    centers = np.array([[4.0, 0.0, 0.0, 0.0], [-4.0, 0.0, 0.0, 0.0]])
    X = np.vstack([c + 0.3 * rng.standard_normal((n_per_group, 4)) for c in centers])
    return LabeledDataset.from_raw_labels(X, ["pos"] * n_per_group + ["neg"] * n_per_group,
                                          ["a", "b", "c", "d"])


def test_evaluate_and_nfs():
    rng = np.random.default_rng(0)
    train_ds = _toy_dataset(rng)
    model = train(train_ds, 0.5, 2, "2")
    assert metrics.nfs(model) == len(selected_features(model)) == 2

    result = metrics.evaluate(model, _toy_dataset(rng, 50), truth=[0])
    assert result.te_count == 0 and result.te_rate == 0.0 and result.n_test == 100
    assert result.dr_percent == 100.0 and result.fp_percent == 50.0
    assert metrics.evaluate(model, train_ds).dr_percent is None

    single = train(train_ds, 0.5, 1, "inf")
    assert metrics.nfs(single) == 1


def test_evaluate_compares_label_names():
    rng = np.random.default_rng(1)
    model = train(_toy_dataset(rng), 0.5, 1, "inf")
    flipped = _toy_dataset(rng)
    # 测试集里类别出现顺序相反，整数编码不同但名称一致
    order = np.r_[np.arange(20, 40), np.arange(20)]
    reordered = LabeledDataset.from_raw_labels(flipped.X[order], [flipped.named_labels()[i] for i in order])
    assert reordered.label_names == ("neg", "pos")
    assert metrics.evaluate(model, reordered).te_count == 0


def _records():
    rows = []
    for trial, (te, nfs_value) in enumerate([(80, 100), (90, 120), (100, 110)]):
        result = metrics.EvalResult(te_count=te, te_rate=te / 1000, nfs=nfs_value, n_test=1000,
                                    dr_percent=90.0 + trial, fp_percent=10.0)
        rows.append(metrics.trial_record("CRDA-linf", trial, result))
        rows.append(metrics.trial_record("SCRDA-soft", trial,
                                         metrics.EvalResult(te_count=200, te_rate=0.2, nfs=500, n_test=1000,
                                                            dr_percent=100.0, fp_percent=60.0)))
    return rows


def test_summarize_trials():
    summary = metrics.summarize_trials(_records(), method_order=["SCRDA-soft", "CRDA-linf"])
    assert summary.index.tolist() == ["SCRDA-soft", "CRDA-linf"]
    assert summary.loc["CRDA-linf", "trials"] == 3
    assert summary.loc["CRDA-linf", "TE"] == 90.0
    assert summary.loc["CRDA-linf", "TE_sd"] == pytest.approx(10.0)
    assert summary.loc["CRDA-linf", "DR"] == 91.0
    assert summary.loc["SCRDA-soft", "NFS_sd"] == 0.0
    assert list(summary.columns) == ["trials", "TE", "TE_sd", "NFS", "NFS_sd", "DR", "DR_sd", "FP", "FP_sd"]


def test_summarize_without_truth_and_single_trial():
    result = metrics.EvalResult(te_count=5, te_rate=0.1, nfs=3, n_test=50)
    summary = metrics.summarize_trials([metrics.trial_record("CRDA-l1", 0, result)])
    assert "DR" not in summary.columns and "FP" not in summary.columns
    assert summary.loc["CRDA-l1", "TE_sd"] == 0.0
    with pytest.raises(DataError):
        metrics.summarize_trials([])


def test_markdown_table():
    text = metrics.format_markdown(metrics.summarize_trials(_records()))
    lines = text.splitlines()
    assert lines[0].startswith("| method")
    assert "DR" in lines[0] and "FP" in lines[0]
    assert any("90.0 (10.0)" in line for line in lines)


def test_write_tables_is_byte_stable(tmp_path):
    summary = metrics.summarize_trials(_records())
    first = metrics.write_tables(summary, tmp_path / "a")
    second = metrics.write_tables(metrics.summarize_trials(_records()), tmp_path / "b")
    assert [p.name for p in first] == ["results.csv", "results.md"]
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()
    back = pd.read_csv(first[0], index_col="method")
    assert back.loc["CRDA-linf", "TE"] == pytest.approx(90.0)
    assert metrics.write_tables(summary, tmp_path / "c", formats=("csv",))[0].suffix == ".csv"


def main():
    """以脚本方式运行本文件的测试"""
    sys.exit(pytest.main([__file__, "-v"]))


if __name__ == "__main__":
    main()

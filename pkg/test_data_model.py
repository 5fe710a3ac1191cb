#!/usr/bin/env python3
"""
测试数据模型：CSV读取与错误定位、类均值、按类中心化、精确往返
"""

import sys

import numpy as np
import pytest

from crda_errors import DataError
from data_model import (LabeledDataset, center_by_class, class_means, concat_datasets, decenter, load_csv,
                        load_features, load_labels_csv, save_csv, save_labels_csv)


def write_text(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_small_csv(tmp_path):
    path = write_text(tmp_path / "d.csv", "f1,f2,class\n1,2,A\n3,4,A\n5,6,B\n")
    ds = load_csv(path)
    assert ds.G == 2
    assert ds.counts.tolist() == [2, 1]
    assert ds.label_names == ("A", "B")
    assert ds.feature_names == ("f1", "f2")
    np.testing.assert_array_equal(ds.X, [[1, 2], [3, 4], [5, 6]])


def test_labels_follow_first_appearance(tmp_path):
    path = write_text(tmp_path / "d.csv", "class,f1\nz,1\na,2\nz,3\nm,4\n")
    ds = load_csv(path)
    assert ds.label_names == ("z", "a", "m")
    assert ds.labels.tolist() == [1, 2, 1, 3]
    assert ds.named_labels() == ["z", "a", "z", "m"]


def test_non_numeric_cell_names_location(tmp_path):
    path = write_text(tmp_path / "d.csv", "f1,f2,class\n1,2,A\nNA,4,A\n5,6,B\n")
    with pytest.raises(DataError) as excinfo:
        load_csv(path)
    message = str(excinfo.value)
    assert "NA" in message and "f1" in message and "第 2 行" in message


def test_non_finite_cell_rejected(tmp_path):
    path = write_text(tmp_path / "d.csv", "f1,f2,class\n1,inf,A\n3,4,B\n")
    with pytest.raises(DataError, match="f2"):
        load_csv(path)


def test_transposed_file_matches_samples_as_rows(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.integers(-9, 10, size=(4, 3)).astype(np.float64)
    labels = ["A", "B", "A", "B"]

    rows = ["f1,f2,f3,class"] + [",".join([*(f"{v:g}" for v in X[i]), labels[i]]) for i in range(4)]
    by_rows = load_csv(write_text(tmp_path / "rows.csv", "\n".join(rows) + "\n"))

    cols = ["feature,s1,s2,s3,s4"] + [",".join([f"f{j + 1}", *(f"{v:g}" for v in X[:, j])]) for j in range(3)]
    matrix = write_text(tmp_path / "matrix.csv", "\n".join(cols) + "\n")
    save_labels_csv(labels, tmp_path / "labels.csv")
    by_cols = load_csv(matrix, transpose=True, labels_path=tmp_path / "labels.csv")

    np.testing.assert_array_equal(by_rows.X, by_cols.X)
    assert by_rows.labels.tolist() == by_cols.labels.tolist()
    assert by_rows.label_names == by_cols.label_names
    assert by_rows.feature_names == by_cols.feature_names


def test_transposed_label_count_mismatch(tmp_path):
    matrix = write_text(tmp_path / "m.csv", "feature,s1,s2\nf1,1,2\n")
    write_text(tmp_path / "l.csv", "class\nA\nB\nA\n")
    with pytest.raises(DataError):
        load_csv(matrix, transpose=True, labels_path=tmp_path / "l.csv")
    with pytest.raises(DataError):
        load_csv(matrix, transpose=True)


def test_load_errors(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "missing.csv")
    with pytest.raises(DataError, match="标签列"):
        load_csv(write_text(tmp_path / "nolabel.csv", "f1,f2\n1,2\n"))
    with pytest.raises(DataError):
        load_csv(write_text(tmp_path / "short.csv", "f1,f2,class\n1,2,A\n3,4\n"))
    with pytest.raises(DataError):
        load_csv(write_text(tmp_path / "long.csv", "f1,f2,class\n1,2,A\n3,4,B,9\n"))
    with pytest.raises(DataError):
        load_csv(write_text(tmp_path / "empty.csv", ""))


def test_short_rows_are_rejected(tmp_path):
    with pytest.raises(DataError, match="第 2 行"):
        load_csv(write_text(tmp_path / "no_label.csv", "f1,f2,class\n1,2,A\n3,4\n"))
    with pytest.raises(DataError, match="第 3 行"):
        load_csv(write_text(tmp_path / "one_field.csv", "class,f1,f2\nA,1,2\nB,3,4\nA,5\n"))
    with pytest.raises(DataError) as excinfo:
        load_csv(write_text(tmp_path / "blank.csv", "f1,f2,class\n1,2,A\n3,,B\n"))
    assert "f2" in str(excinfo.value) and "第 2 行" in str(excinfo.value)
    with pytest.raises(DataError, match="f2"):
        load_features(write_text(tmp_path / "short_features.csv", "f1,f2\n1,2\n3\n"))
    with pytest.raises(DataError, match="第 1 行"):
        load_csv(write_text(tmp_path / "matrix.csv", "feature,s1,s2\nf1,1\nf2,3,4\n"), transpose=True,
                 labels_path=write_text(tmp_path / "labels.csv", "class\nA\nB\n"))


def test_dataset_invariants():
    with pytest.raises(DataError, match="没有样本"):
        LabeledDataset(X=np.ones((2, 2)), labels=np.array([1, 2]), label_names=("A", "B", "C"))
    with pytest.raises(DataError):
        LabeledDataset(X=np.ones((3, 2)), labels=np.array([1, 2]), label_names=("A", "B"))
    with pytest.raises(DataError):
        LabeledDataset(X=np.ones((2, 0)), labels=np.array([1, 2]), label_names=("A", "B"))
    with pytest.raises(DataError):
        LabeledDataset(X=np.ones((2, 2)), labels=np.array([1, 2]), label_names=("A", "B"), feature_names=("x",))


def test_class_means_examples():
    ds = LabeledDataset.from_raw_labels(np.array([[1.0, 3.0], [3.0, 1.0], [7.0, 8.0], [0.0, 0.0]]),
                                        ["A", "A", "B", "C"])
    means = class_means(ds)
    np.testing.assert_array_equal(means.M[:, 0], [2.0, 2.0])
    np.testing.assert_array_equal(means.M[:, 1], [7.0, 8.0])
    assert means.counts.tolist() == [2, 1, 1]
    assert means.proportions.sum() == pytest.approx(1.0, abs=1e-12)

    balanced = LabeledDataset.from_raw_labels(np.arange(8.0).reshape(4, 2), ["A", "B", "A", "B"])
    np.testing.assert_array_equal(class_means(balanced).proportions, [0.5, 0.5])


def test_center_examples_and_idempotence():
    ds = LabeledDataset.from_raw_labels(np.array([[1.0, 3.0], [3.0, 1.0], [4.0, 4.0], [6.0, 4.0]]),
                                        ["A", "A", "B", "B"])
    centered = center_by_class(ds, class_means(ds))
    assert centered.Xc.shape == (2, 4)
    np.testing.assert_array_equal(centered.Xc[:, :2], [[-1.0, 1.0], [1.0, -1.0]])

    again = LabeledDataset(X=centered.Xc.T, labels=ds.labels, label_names=ds.label_names)
    np.testing.assert_array_equal(center_by_class(again, class_means(again)).Xc, centered.Xc)


def test_group_sums_vanish_and_decenter_is_exact():
    rng = np.random.default_rng(1)
    X = rng.integers(-50, 50, size=(28, 6)).astype(np.float64)
    ds = LabeledDataset(X=X, labels=np.repeat([1, 2, 3], [8, 4, 16]), label_names=("a", "b", "c"))
    means = class_means(ds)
    centered = center_by_class(ds, means)
    for g in range(1, 4):
        sums = centered.Xc[:, ds.labels == g].sum(axis=1)
        assert np.max(np.abs(sums)) <= 1e-9 * ds.counts[g - 1] * np.max(np.abs(X))
    np.testing.assert_array_equal(decenter(centered, means), X)


def test_center_rejects_foreign_means():
    a = LabeledDataset.from_raw_labels(np.ones((4, 2)), ["A", "A", "B", "B"])
    b = LabeledDataset.from_raw_labels(np.ones((4, 3)), ["A", "A", "B", "B"])
    with pytest.raises(DataError):
        center_by_class(a, class_means(b))
    c = LabeledDataset.from_raw_labels(np.ones((4, 2)), ["A", "B", "B", "B"])
    with pytest.raises(DataError):
        center_by_class(a, class_means(c))


def test_save_load_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(2)
    X = rng.standard_normal((20, 5)) * 10.0 ** rng.integers(-8, 8, size=(20, 5))
    ds = LabeledDataset.from_raw_labels(X, rng.choice(["u", "v", "w"], size=20).tolist(),
                                        [f"g{j}" for j in range(5)])
    save_csv(ds, tmp_path / "out" / "data.csv")
    back = load_csv(tmp_path / "out" / "data.csv")
    assert np.array_equal(back.X.view(np.uint64), ds.X.view(np.uint64))
    assert back.named_labels() == ds.named_labels()
    assert back.feature_names == ds.feature_names


def test_load_labels_csv(tmp_path):
    assert load_labels_csv(write_text(tmp_path / "l.csv", "class\nA\nB\n")) == ["A", "B"]
    with pytest.raises(DataError, match="第 2 行"):
        load_labels_csv(write_text(tmp_path / "bad.csv", "class,x\nA,1\n,2\n"))


def test_load_features_with_and_without_labels(tmp_path):
    X, names, labels = load_features(write_text(tmp_path / "a.csv", "f1,class,f2\n1,A,2\n3,B,4\n"))
    np.testing.assert_array_equal(X, [[1, 2], [3, 4]])
    assert names == ["f1", "f2"] and labels == ["A", "B"]

    X, names, labels = load_features(write_text(tmp_path / "b.csv", "f1,f2\n1.5,2\n"))
    assert X.shape == (1, 2) and labels is None


def test_concat_datasets():
    a = LabeledDataset.from_raw_labels(np.zeros((2, 2)), ["A", "B"])
    b = LabeledDataset.from_raw_labels(np.ones((3, 2)), ["A", "B", "B"])
    both = concat_datasets(a, b)
    assert both.n == 5 and both.counts.tolist() == [2, 3]
    with pytest.raises(DataError):
        concat_datasets(a, LabeledDataset.from_raw_labels(np.ones((2, 2)), ["B", "A"]))


def main():
    """以脚本方式运行本文件的测试"""
    sys.exit(pytest.main([__file__, "-v"]))


if __name__ == "__main__":
    main()

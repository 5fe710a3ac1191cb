#!/usr/bin/env python3
"""
测试仿真数据生成：均值结构、AR(1) 分块协方差、采样与三种设置的数据划分
"""

import sys

import numpy as np
import pytest

from crda_errors import DataError, NumericError
from simgen import (BlockDiagonalCovariance, ScaledIdentityCovariance, ar1_block, cov_setup3, describe, generate,
                    means_setup1, means_setup2, means_setup3, sample_mvn, setup_spec, trial_seeds)


def test_means_setup1():
    M = means_setup1()
    assert M.shape == (500, 4)
    # 下标按 1 开始书写，数组从 0 开始
    assert M[25, 1] == 0.7 and M[24, 1] == 0.0 and M[50, 1] == 0.0
    assert np.count_nonzero(M, axis=0).tolist() == [25, 25, 25, 25]
    supports = [set(np.flatnonzero(M[:, g])) for g in range(4)]
    assert all(supports[a].isdisjoint(supports[b]) for a in range(4) for b in range(a + 1, 4))
    assert set().union(*supports) == set(range(100))
    with pytest.raises(DataError):
        means_setup1(p=50, t=25)


def test_means_setup2():
    M = means_setup2()
    assert M[0, 3] == 1.0 and M[100, 3] == 0.0
    assert np.all(M[:, 0] == 0.0)
    assert M[49, 2] == 2.0 / 3.0
    assert np.count_nonzero(M[:, 1]) == 100


def test_means_setup3():
    M = means_setup3()
    assert M.shape == (10000, 3)
    assert M[199, 1] == 0.5 and M[200, 1] == 0.0
    assert np.all(M[:, 2] == -M[:, 1])
    assert np.all(M[:, 0] == 0.0)


def test_ar1_block():
    np.testing.assert_allclose(ar1_block(0.5, 3), [[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]])
    np.testing.assert_array_equal(ar1_block(0.0, 4), np.eye(4))
    big = ar1_block(0.9, 100)
    np.testing.assert_array_equal(big, big.T)
    assert np.linalg.eigvalsh(big).min() > 0
    for rho in (1.0, -1.0, 1.5):
        with pytest.raises(DataError):
            ar1_block(rho, 3)


def test_cov_setup3_structure():
    cov = cov_setup3(0.7)
    assert cov.p == 10000 and cov.n_blocks == 100
    assert cov.block(0)[0, 1] == pytest.approx(0.7)
    assert cov.block(1)[0, 1] == pytest.approx(-0.7)
    assert np.sum(cov.pattern == 0) == 50 and np.sum(cov.pattern == 1) == 50

    e = np.zeros(10000)
    e[100] = 1.0
    column = cov.apply(e)
    assert column[99] == 0.0
    assert column[100] == 1.0 and column[101] == pytest.approx(-0.7)


def test_cov_setup3_operator_matches_dense_at_reduced_scale():
    cov = cov_setup3(0.5, n_blocks=10, block_size=10)
    dense = cov.dense()
    assert dense.shape == (100, 100)
    assert dense[9, 10] == 0.0
    for i in range(100):
        e = np.zeros(100)
        e[i] = 1.0
        assert np.max(np.abs(cov.apply(e) - dense[:, i])) <= 1e-14
    np.testing.assert_allclose(cov.apply(np.eye(100)), dense, atol=1e-14)


def test_block_factors_reproduce_blocks():
    cov = cov_setup3(0.9, n_blocks=4, block_size=8)
    for k, factor in enumerate(cov.factors()):
        np.testing.assert_allclose(factor @ factor.T, cov.distinct_blocks[k], atol=1e-12)


def test_non_positive_definite_block_rejected():
    cov = BlockDiagonalCovariance([np.array([[1.0, 2.0], [2.0, 1.0]])], [0, 0])
    rng = np.random.default_rng(0)
    with pytest.raises(NumericError):
        sample_mvn(np.zeros(4), cov, 3, rng)
    with pytest.raises(DataError):
        BlockDiagonalCovariance([np.eye(2), np.eye(3)], [0, 1])


def test_sample_mvn_degenerate_and_identity():
    rng = np.random.default_rng(1)
    mean = np.arange(5.0)
    rows = sample_mvn(mean, ScaledIdentityCovariance(5, 0.0), 7, rng)
    assert np.all(rows == mean)

    draws = sample_mvn(np.zeros(5), ScaledIdentityCovariance(5), 10_000, rng)
    assert np.max(np.abs(np.cov(draws, rowvar=False) - np.eye(5))) < 0.1

    with pytest.raises(DataError):
        sample_mvn(np.zeros(4), ScaledIdentityCovariance(5), 2, rng)


def test_sample_mvn_is_deterministic():
    cov = cov_setup3(0.5, n_blocks=3, block_size=5)
    a = sample_mvn(np.zeros(15), cov, 20, np.random.default_rng(42))
    b = sample_mvn(np.zeros(15), cov, 20, np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_sample_means_within_gaussian_bounds():
    rng = np.random.default_rng(2)
    cov = cov_setup3(0.7, n_blocks=5, block_size=10)
    mean = np.linspace(-1, 1, 50)
    draws = sample_mvn(mean, cov, 10_000, rng)
    # 每个坐标的方差为 1
    assert np.max(np.abs(draws.mean(axis=0) - mean)) <= 4 * np.sqrt(1.0 / 10_000)
    np.testing.assert_allclose(np.cov(draws[:, :10], rowvar=False), cov.block(0), atol=0.06)


def test_setup_specs_full_size():
    for setup_id in ("I", "II"):
        spec = setup_spec(setup_id)
        assert (spec.p, spec.G, spec.n_validation, spec.n_train, spec.n_test) == (500, 4, 100, 100, 1000)
        assert spec.truth.tolist() == list(range(100))
    spec = setup_spec("iii")
    assert (spec.setup_id, spec.p, spec.G, spec.n_train, spec.n_test) == ("III", 10000, 3, 200, 1000)
    assert spec.n_validation == 0 and spec.truth.shape == (200,)
    assert describe(spec)["n_truth"] == 200
    with pytest.raises(DataError):
        setup_spec("IV")
    with pytest.raises(DataError):
        setup_spec("I", scale=0)


def test_setup_specs_reduced_scale():
    spec = setup_spec("I", 0.2)
    assert spec.p == 100 and spec.truth.shape == (20,)
    spec = setup_spec("III", 0.1)
    assert spec.p == 1000 and spec.truth.shape == (200,)


def test_generate_setup1_splits():
    data = generate(setup_spec("I", 0.1), trial_seed=3)
    assert data.validation.n == 100 and data.train.n == 100 and data.test.n == 1000
    assert data.validation.n + data.train.n + data.test.n == 1200
    assert data.train.counts.tolist() == [25, 25, 25, 25]
    assert data.test.counts.tolist() == [250] * 4
    assert data.train.label_names == ("1", "2", "3", "4")
    assert data.train.feature_names[0] == "x1"
    # 行已打乱
    assert not np.all(np.diff(data.train.labels) >= 0)


def test_generate_setup3_has_no_validation():
    data = generate(setup_spec("III", 0.02), trial_seed=4)
    assert data.validation is None
    assert data.train.p == 200 and data.train.G == 3
    assert data.train.counts.tolist() == [67, 67, 66]


def test_generate_is_reproducible_and_seed_sensitive():
    spec = setup_spec("II", 0.05)
    a = generate(spec, 10)
    b = generate(spec, 10)
    c = generate(spec, 11)
    assert np.array_equal(a.train.X, b.train.X) and np.array_equal(a.test.labels, b.test.labels)
    assert not np.array_equal(a.train.X, c.train.X)


def test_generate_multinomial_counts():
    data = generate(setup_spec("I", 0.05), 5, multinomial=True)
    assert data.test.counts.sum() == 1000
    assert data.test.counts.min() >= 1


def test_trial_seeds():
    seeds = trial_seeds(7, 5)
    assert seeds == trial_seeds(7, 5)
    assert len(set(seeds)) == 5
    assert trial_seeds(7, 3) == seeds[:3]
    assert all(0 <= s < 2 ** 32 for s in seeds)


def main():
    """以脚本方式运行本文件的测试"""
    sys.exit(pytest.main([__file__, "-v"]))


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""
模拟数据生成器 - 三种仿真设置的均值结构、分块 AR(1) 协方差与多元正态采样

设置 I / II:  p=500, G=4, 协方差为 I_p，划分 验证100 / 训练100 / 测试1000
设置 III:     p=10000, G=3, 每组协方差为 100 个 100x100 AR(1) 块的直和，
              块的相关系数在 +rho_g 与 -rho_g 之间交替，rho = (0.5, 0.7, 0.9)

scale 参数用于缩小规模：I/II 同比例缩小 p 与每组非零个数；III 只缩小块数。
"""

from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from crda_errors import DataError, NumericError
from data_model import LabeledDataset

SETUP_IDS = ("I", "II", "III")
SETUP3_RHOS = (0.5, 0.7, 0.9)
AR1_BLOCK_SIZE = 100


def means_setup1(p: int = 500, t: int = 25, G: int = 4) -> np.ndarray:
    """第 g 列在下标 t(g-1)+1 .. tg 上取 0.7，其余为 0"""
    if t * G > p:
        raise DataError(f"t*G={t * G} 超过 p={p}")
    M = np.zeros((p, G))
    for g in range(G):
        M[t * g:t * (g + 1), g] = 0.7
    return M


def means_setup2(p: int = 500, n_diff: int = 100, G: int = 4) -> np.ndarray:
    """第 g 列在前 n_diff 个下标上取 (g-1)/3"""
    M = np.zeros((p, G))
    for g in range(G):
        M[:n_diff, g] = g / 3.0
    return M


def means_setup3(p: int = 10000, n_diff: int = 200) -> np.ndarray:
    """m_1 = 0，m_2 前 n_diff 个为 1/2，m_3 = -m_2"""
    M = np.zeros((p, 3))
    M[:n_diff, 1] = 0.5
    M[:, 2] = -M[:, 1]
    return M


def ar1_block(rho: float, size: int) -> np.ndarray:
    """(i, j) 元素为 rho^|i-j| 的 AR(1) 相关矩阵"""
    if not -1.0 < rho < 1.0:
        raise DataError(f"AR(1) 相关系数必须满足 |rho| < 1，实际: {rho}")
    if size < 1:
        raise DataError(f"块大小必须 >= 1，实际: {size}")
    return linalg.toeplitz(float(rho) ** np.arange(size))


class ScaledIdentityCovariance:
    """c * I_p；c = 0 时为零协方差"""

    def __init__(self, p: int, scale: float = 1.0):
        if scale < 0:
            raise NumericError(f"协方差尺度不能为负: {scale}")
        self.p = int(p)
        self.scale = float(scale)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(v, dtype=np.float64)

    def dense(self) -> np.ndarray:
        return self.scale * np.eye(self.p)

    def transform(self, z: np.ndarray) -> np.ndarray:
        """把标准正态样本 (count x p) 变换为该协方差下的样本"""
        return np.sqrt(self.scale) * z


class BlockDiagonalCovariance:
    """若干相同大小方块的直和；pattern[b] 指出第 b 个块使用哪个不同的块矩阵"""

    def __init__(self, distinct_blocks: Sequence[np.ndarray], pattern: Sequence[int]):
        self.distinct_blocks = [np.asarray(b, dtype=np.float64) for b in distinct_blocks]
        self.pattern = np.asarray(pattern, dtype=np.int64)
        sizes = {b.shape for b in self.distinct_blocks}
        if len(sizes) != 1 or any(s[0] != s[1] for s in sizes):
            raise DataError("所有块必须是相同大小的方阵")
        self.block_size = self.distinct_blocks[0].shape[0]
        self.n_blocks = self.pattern.shape[0]
        self.p = self.block_size * self.n_blocks
        self._factors: Optional[List[np.ndarray]] = None

    def block(self, b: int) -> np.ndarray:
        return self.distinct_blocks[self.pattern[b]]

    def factors(self) -> List[np.ndarray]:
        """每个不同块的下三角 Cholesky 因子"""
        if self._factors is None:
            try:
                self._factors = [linalg.cholesky(b, lower=True) for b in self.distinct_blocks]
            except linalg.LinAlgError as e:
                raise NumericError(f"协方差块不是正定的: {e}") from e
        return self._factors

    def apply(self, v: np.ndarray) -> np.ndarray:
        """按块计算 Sigma v，v 可以是 p 或 p x k"""
        v = np.asarray(v, dtype=np.float64)
        out = np.empty_like(v)
        for b in range(self.n_blocks):
            rows = slice(b * self.block_size, (b + 1) * self.block_size)
            out[rows] = self.block(b) @ v[rows]
        return out

    def dense(self) -> np.ndarray:
        """稠密矩阵，仅用于小规模检查"""
        return linalg.block_diag(*[self.block(b) for b in range(self.n_blocks)])

    def transform(self, z: np.ndarray) -> np.ndarray:
        """z (count x p) 按块乘以 L^T"""
        count = z.shape[0]
        blocks = z.reshape(count, self.n_blocks, self.block_size)
        out = np.empty_like(blocks)
        for k, factor in enumerate(self.factors()):
            which = self.pattern == k
            out[:, which, :] = blocks[:, which, :] @ factor.T
        return out.reshape(count, self.p)


def cov_setup3(rho: float, n_blocks: int = 100, block_size: int = AR1_BLOCK_SIZE) -> BlockDiagonalCovariance:
    """Sigma^(rho) ⊕ Sigma^(-rho) ⊕ ... 共 n_blocks 块，交替符号"""
    if n_blocks < 1:
        raise DataError(f"块数必须 >= 1，实际: {n_blocks}")
    pattern = np.arange(n_blocks) % 2
    return BlockDiagonalCovariance([ar1_block(rho, block_size), ar1_block(-rho, block_size)], pattern)


def sample_mvn(mean: np.ndarray, cov, count: int, rng: np.random.Generator) -> np.ndarray:
    """count 个独立样本 mean + L z，z 为标准正态"""
    mean = np.asarray(mean, dtype=np.float64)
    if mean.shape[0] != cov.p:
        raise DataError(f"均值长度 {mean.shape[0]} 与协方差维度 {cov.p} 不一致")
    z = rng.standard_normal((int(count), cov.p))
    return mean + cov.transform(z)


@dataclass(frozen=True)
class SetupSpec:
    """一个仿真设置的完整描述；truth 为真实差异特征（从 0 开始的下标）"""

    setup_id: str
    p: int
    G: int
    n_validation: int
    n_train: int
    n_test: int
    means: np.ndarray
    covariances: Tuple
    truth: np.ndarray
    scale: float = 1.0


class SimulatedData(NamedTuple):
    train: LabeledDataset
    validation: Optional[LabeledDataset]
    test: LabeledDataset
    truth: np.ndarray


def setup_spec(setup_id: str, scale: float = 1.0) -> SetupSpec:
    """按编号构造仿真设置"""
    setup_id = str(setup_id).upper()
    if setup_id not in SETUP_IDS:
        raise DataError(f"未知的仿真设置: {setup_id}，可选: {', '.join(SETUP_IDS)}")
    if not scale > 0:
        raise DataError(f"scale 必须为正数，实际: {scale}")

    if setup_id in ("I", "II"):
        p = max(4, int(round(500 * scale)))
        t = max(1, int(round(25 * scale)))
        if setup_id == "I":
            means = means_setup1(p, t, 4)
        else:
            means = means_setup2(p, 4 * t, 4)
        covariances = tuple(ScaledIdentityCovariance(p) for _ in range(4))
        return SetupSpec(setup_id=setup_id, p=p, G=4, n_validation=100, n_train=100, n_test=1000,
                         means=means, covariances=covariances, truth=np.arange(4 * t), scale=scale)

    n_blocks = max(2, int(round(100 * scale)))
    p = n_blocks * AR1_BLOCK_SIZE
    n_diff = min(200, p)
    covariances = tuple(cov_setup3(rho, n_blocks) for rho in SETUP3_RHOS)
    return SetupSpec(setup_id="III", p=p, G=3, n_validation=0, n_train=200, n_test=1000,
                     means=means_setup3(p, n_diff), covariances=covariances,
                     truth=np.arange(n_diff), scale=scale)


def _group_counts(total: int, G: int, rng: np.random.Generator, multinomial: bool) -> np.ndarray:
    if multinomial:
        return rng.multinomial(total, np.full(G, 1.0 / G))
    counts = np.full(G, total // G)
    counts[:total % G] += 1
    return counts


def _draw_split(spec: SetupSpec, total: int, rng: np.random.Generator, multinomial: bool,
                feature_names: Tuple[str, ...]) -> LabeledDataset:
    counts = _group_counts(total, spec.G, rng, multinomial)
    blocks = [sample_mvn(spec.means[:, g], spec.covariances[g], counts[g], rng) for g in range(spec.G)]
    labels = np.repeat(np.arange(1, spec.G + 1), counts)
    order = rng.permutation(total)
    return LabeledDataset(X=np.vstack(blocks)[order], labels=labels[order],
                          label_names=tuple(str(g) for g in range(1, spec.G + 1)),
                          feature_names=feature_names)


def generate(spec: SetupSpec, trial_seed: int, multinomial: bool = False) -> SimulatedData:
    """生成一次试验的 训练 / 验证 / 测试 数据，单一随机流保证可复现"""
    rng = np.random.default_rng(int(trial_seed))
    feature_names = tuple(f"x{i + 1}" for i in range(spec.p))
    validation = None
    if spec.n_validation > 0:
        validation = _draw_split(spec, spec.n_validation, rng, multinomial, feature_names)
    train = _draw_split(spec, spec.n_train, rng, multinomial, feature_names)
    test = _draw_split(spec, spec.n_test, rng, multinomial, feature_names)
    return SimulatedData(train=train, validation=validation, test=test, truth=spec.truth)


def trial_seeds(master_seed: int, trials: int) -> List[int]:
    """由主种子派生每次试验的独立种子"""
    children = np.random.SeedSequence(int(master_seed)).spawn(int(trials))
    return [int(child.generate_state(1, dtype=np.uint32)[0]) for child in children]


def describe(spec: SetupSpec) -> Dict[str, object]:
    """设置的可序列化摘要"""
    return {
        "setup": spec.setup_id,
        "p": spec.p,
        "G": spec.G,
        "n_validation": spec.n_validation,
        "n_train": spec.n_train,
        "n_test": spec.n_test,
        "n_truth": int(spec.truth.shape[0]),
        "scale": spec.scale,
    }

import math
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from src.utils.exceptions import ValidationError

EULER_GAMMA = 0.5772156649


def c_factor(n: int) -> float:
    """n个样本的二叉搜索树平均失败查找路径长度，用于归一化隔离深度

    c(0)=c(1)=0，c(2)=1，n>=3 时用 2(ln(n-1)+γ) - 2(n-1)/n。
    """
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


def score_from_path_length(mean_path_length: float, subsample_size: int) -> float:
    """s = 2^(-E[h]/c(ψ))；c(ψ)=0(只有一个样本)时无从比较，返回0.5"""
    normalizer = c_factor(subsample_size)
    if normalizer == 0.0:
        return 0.5
    return 2.0 ** (-mean_path_length / normalizer)


@dataclass(frozen=True)
class ForestConfig:
    tree_count: int = 100
    subsample_size: int = 256
    seed: int = 42
    n_jobs: int = 1

    def __post_init__(self):
        if self.tree_count < 1:
            raise ValueError(f"tree_count 必须 >= 1: {self.tree_count}")
        if self.subsample_size < 1:
            raise ValueError(f"subsample_size 必须 >= 1: {self.subsample_size}")

    def effective_subsample(self, n: int) -> int:
        return min(self.subsample_size, n)

    @staticmethod
    def height_limit(subsample: int) -> int:
        return math.ceil(math.log2(subsample)) if subsample > 1 else 0

    @classmethod
    def from_config(cls, config: Dict[str, Any], seed: Optional[int] = None) -> 'ForestConfig':
        forest = config.get('forest', {})
        return cls(tree_count=int(forest.get('tree_count', 100)),
                   subsample_size=int(forest.get('subsample_size', 256)),
                   seed=int(forest.get('seed', 42) if seed is None else seed),
                   n_jobs=int(forest.get('n_jobs', 1)))


@dataclass
class IsolationNode:
    """内部节点有划分属性和划分值；外部节点只记录终止时的样本数"""
    size: int
    split_attribute: Optional[int] = None
    split_value: Optional[float] = None
    left: Optional['IsolationNode'] = None
    right: Optional['IsolationNode'] = None

    @property
    def is_external(self) -> bool:
        return self.split_attribute is None

    def to_dict(self) -> Dict[str, Any]:
        if self.is_external:
            return {'size': self.size}
        return {'size': self.size, 'attribute': self.split_attribute, 'value': self.split_value,
                'left': self.left.to_dict(), 'right': self.right.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'IsolationNode':
        if 'attribute' not in data:
            return cls(int(data['size']))
        return cls(int(data['size']), int(data['attribute']), float(data['value']),
                   cls.from_dict(data['left']), cls.from_dict(data['right']))


@dataclass
class IsolationTree:
    root: IsolationNode
    height_limit: int

    def depth(self) -> int:
        def walk(node: IsolationNode) -> int:
            return 0 if node.is_external else 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)


def _grow(data: np.ndarray, depth: int, height_limit: int, rng: np.random.Generator) -> IsolationNode:
    size = data.shape[0]
    if depth >= height_limit or size <= 1:
        return IsolationNode(size)

    low = data.min(axis=0)
    high = data.max(axis=0)
    # 取值范围为0的属性不参与划分
    candidates = np.flatnonzero(high > low)
    if candidates.size == 0:
        return IsolationNode(size)

    attribute = int(candidates[rng.integers(candidates.size)])
    span = high[attribute] - low[attribute]
    value = low[attribute] + rng.random() * span
    while value <= low[attribute]:
        value = low[attribute] + rng.random() * span

    mask = data[:, attribute] < value
    return IsolationNode(size, attribute, float(value),
                         _grow(data[mask], depth + 1, height_limit, rng),
                         _grow(data[~mask], depth + 1, height_limit, rng))


def tree_seed(master_seed: int, tree_index: int) -> np.random.SeedSequence:
    """第i棵树的随机源：SeedSequence(entropy=master_seed, spawn_key=(i,))"""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(tree_index,))


def build_tree(matrix: np.ndarray, subsample: int, seed_sequence: np.random.SeedSequence) -> IsolationTree:
    rng = np.random.default_rng(seed_sequence)
    rows = rng.choice(matrix.shape[0], size=subsample, replace=False)
    limit = ForestConfig.height_limit(subsample)
    return IsolationTree(_grow(matrix[np.sort(rows)], 0, limit, rng), limit)


def path_length(tree: IsolationTree, x: np.ndarray) -> float:
    """从根走到外部节点经过的边数，加上该外部节点样本数的 c 值"""
    node, depth = tree.root, 0
    while not node.is_external:
        node = node.left if x[node.split_attribute] < node.split_value else node.right
        depth += 1
    return depth + c_factor(node.size)


def _validate(matrix: Any) -> np.ndarray:
    data = np.asarray(matrix, dtype=float)
    if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
        raise ValidationError(f"输入必须是非空二维矩阵，实际形状 {data.shape}")
    if not np.isfinite(data).all():
        raise ValidationError("输入含非有限值(NaN/inf)")
    return data


@dataclass
class IsolationForest:
    """训练好的隔离森林，不可变，可在线程间共享"""
    trees: List[IsolationTree]
    subsample_size: int
    n_features: int
    config: ForestConfig = field(default_factory=ForestConfig)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'tree_count': len(self.trees),
            'subsample_size': self.subsample_size,
            'n_features': self.n_features,
            'seed': self.config.seed,
            'trees': [{'height_limit': tree.height_limit, 'root': tree.root.to_dict()} for tree in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'IsolationForest':
        trees = [IsolationTree(IsolationNode.from_dict(item['root']), int(item['height_limit']))
                 for item in data['trees']]
        config = ForestConfig(tree_count=len(trees), subsample_size=int(data['subsample_size']),
                              seed=int(data['seed']))
        return cls(trees, int(data['subsample_size']), int(data['n_features']), config)


def build_forest(matrix: Any, cfg: Optional[ForestConfig] = None) -> IsolationForest:
    """训练隔离森林

    每棵树在 min(ψ, n) 行的无放回均匀子样本上生长；随机源由主种子按树编号派生，
    因此并行建树与串行结果一致。

    Args:
        matrix: n x m 实数矩阵
        cfg: ForestConfig

    Returns:
        IsolationForest
    """
    cfg = cfg or ForestConfig()
    data = _validate(matrix)
    subsample = cfg.effective_subsample(data.shape[0])

    def grow(index: int) -> IsolationTree:
        return build_tree(data, subsample, tree_seed(cfg.seed, index))

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as executor:
            trees = list(executor.map(grow, range(cfg.tree_count)))
    else:
        trees = [grow(index) for index in range(cfg.tree_count)]
    return IsolationForest(trees, subsample, data.shape[1], cfg)


def mean_path_length(forest: IsolationForest, x: Any) -> float:
    point = np.asarray(x, dtype=float)
    if point.shape != (forest.n_features,):
        raise ValidationError(f"样本维度 {point.shape} 与森林的 {forest.n_features} 维不一致")
    return float(np.mean([path_length(tree, point) for tree in forest.trees]))


def anomaly_score(forest: IsolationForest, x: Any) -> float:
    """单个样本的异常分数，取值 (0, 1]"""
    return score_from_path_length(mean_path_length(forest, x), forest.subsample_size)


def score_all(forest: IsolationForest, matrix: Any) -> np.ndarray:
    """逐行打分，保持行序"""
    data = _validate(matrix)
    if data.shape[1] != forest.n_features:
        raise ValidationError(f"矩阵列数 {data.shape[1]} 与森林的 {forest.n_features} 维不一致")
    return np.array([anomaly_score(forest, row) for row in data])

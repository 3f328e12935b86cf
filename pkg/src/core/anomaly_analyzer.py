from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.core.iforest import ForestConfig, IsolationForest, build_forest, score_all
from src.features import GROUP_ORDER
from src.features.feature_matrix import FeatureMatrix
from src.graph.ego_subgraphs import MAX_ORDER, METRIC_NAMES
from src.utils.exceptions import ContractViolation
from src.utils.logger import get_logger

COMBINED = 'combined'
ORDER_RUNS = tuple(f"subgraph_o{order}" for order in range(1, MAX_ORDER + 1))
# 打分任务的固定顺序，序号参与种子派生
RUN_ORDER = GROUP_ORDER + (COMBINED,) + ORDER_RUNS
MAX_FLAGS = len(GROUP_ORDER)


@dataclass
class GroupScores:
    """一次打分任务的结果，每个用户一个分数"""
    group: str
    users: List[str]
    scores: np.ndarray
    informative: bool
    width: int = 0
    seed: int = 0
    forest: Optional[IsolationForest] = field(default=None, repr=False)

    @property
    def maximum(self) -> float:
        return float(self.scores.max()) if self.scores.size else 0.0


@dataclass
class FlagMatrix:
    """用户 x 有信息分组的0/1矩阵"""
    users: List[str]
    groups: List[str]
    flags: np.ndarray
    thresholds: Dict[str, float]

    def flag_counts(self) -> np.ndarray:
        if not self.groups:
            return np.zeros(len(self.users), dtype=int)
        return self.flags.sum(axis=1).astype(int)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.flags.reshape(len(self.users), len(self.groups)).astype(int),
                            columns=self.groups, index=pd.Index(self.users, name='user_id'))


@dataclass
class DependencyTable:
    """恰好有k个分组被标记的用户占比，k = 0..6"""
    percentages: List[float]
    counts: List[int]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'flagged_groups': list(range(len(self.counts))), 'users': self.counts,
                             'percentage': [round(value, 2) for value in self.percentages]})


def run_seed(master_seed: int, run_index: int) -> int:
    """第 run_index 个打分任务的种子，由主种子派生"""
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=(run_index,))
    return int(sequence.generate_state(1)[0])


def run_columns(matrix: FeatureMatrix, run: str) -> List[int]:
    """打分任务使用的列下标"""
    if run == COMBINED:
        return list(range(matrix.frame.shape[1]))
    if run in ORDER_RUNS:
        order = int(run[len('subgraph_o'):])
        start = matrix.group('subgraph').columns[0] + (order - 1) * len(METRIC_NAMES)
        return list(range(start, start + len(METRIC_NAMES)))
    return list(matrix.group(run).columns)


def is_informative(scores: np.ndarray, tolerance: float = 0.05) -> bool:
    """所有分数都落在 [0.5-tol, 0.5+tol] 内时视为无信息"""
    if scores.size == 0:
        return False
    return not bool(np.all(np.abs(scores - 0.5) <= tolerance))


def score_groups(matrix: FeatureMatrix, cfg: ForestConfig, tolerance: float = 0.05,
                 runs: Sequence[str] = RUN_ORDER) -> Dict[str, GroupScores]:
    """对六个参数组、50维合并以及1到5阶子图分别训练森林并打分

    Args:
        matrix: 特征矩阵
        cfg: 森林参数，cfg.seed 为主种子
        tolerance: 无信息判定的容差
        runs: 需要执行的任务，默认全部12个

    Returns:
        任务名 -> GroupScores
    """
    logger = get_logger()
    results: Dict[str, GroupScores] = {}
    data = matrix.values

    for run in runs:
        columns = run_columns(matrix, run)
        seed = run_seed(cfg.seed, RUN_ORDER.index(run))
        run_cfg = ForestConfig(cfg.tree_count, cfg.subsample_size, seed, cfg.n_jobs)
        subset = data[:, columns]
        forest = build_forest(subset, run_cfg)
        scores = score_all(forest, subset)
        informative = is_informative(scores, tolerance)
        results[run] = GroupScores(run, matrix.users, scores, informative, len(columns), seed, forest)
        logger.info(f"[{run}] {len(columns)} 维, 分数范围 {scores.min():.4f} ~ {scores.max():.4f}"
                    + ("" if informative else "，分数都接近0.5，视为无信息"))
    return results


def group_threshold(group_scores: GroupScores, margin: float = 0.1) -> float:
    """阈值 = 最大分数 - margin；对无信息分组调用属于契约错误"""
    if not group_scores.informative:
        raise ContractViolation(f"分组 {group_scores.group} 无信息，不能计算阈值")
    return group_scores.maximum - margin


def build_flag_matrix(all_scores: Dict[str, GroupScores], margin: float = 0.1,
                      groups: Sequence[str] = GROUP_ORDER) -> FlagMatrix:
    """只对有信息的参数组，按 分数 >= 阈值 打标记"""
    informative = [name for name in groups if name in all_scores and all_scores[name].informative]
    users = next((all_scores[name].users for name in groups if name in all_scores), [])
    thresholds = {name: group_threshold(all_scores[name], margin) for name in informative}

    flags = np.zeros((len(users), len(informative)), dtype=int)
    for column, name in enumerate(informative):
        flags[:, column] = (all_scores[name].scores >= thresholds[name]).astype(int)
    return FlagMatrix(list(users), informative, flags, thresholds)


def case1_dependency(fm: FlagMatrix, max_flags: int = MAX_FLAGS) -> DependencyTable:
    """Case I：统计每个用户被标记的分组数，给出 k=0..6 的用户占比"""
    counts = np.bincount(fm.flag_counts(), minlength=max_flags + 1)[:max_flags + 1]
    total = len(fm.users)
    if total == 0:
        percentages = [100.0] + [0.0] * max_flags
    else:
        percentages = [float(count) * 100.0 / total for count in counts]
    return DependencyTable(percentages, [int(count) for count in counts])


def case2_combinations(fm: FlagMatrix) -> pd.DataFrame:
    """Case II：有信息分组的每个非空组合，同时在组合内所有分组上被标记的用户占比"""
    records = []
    total = len(fm.users)
    for size in range(1, len(fm.groups) + 1):
        for subset in combinations(range(len(fm.groups)), size):
            hits = int(np.all(fm.flags[:, list(subset)] == 1, axis=1).sum()) if total else 0
            records.append({
                'groups': '+'.join(fm.groups[i] for i in subset),
                'size': size,
                'users': hits,
                'percentage': hits * 100.0 / total if total else 0.0,
            })
    return pd.DataFrame(records, columns=['groups', 'size', 'users', 'percentage'])


class AnomalyAnalyzer:
    """异常检测单元：打分、阈值、标记和依赖统计"""

    def __init__(self, config: Dict[str, Any]):
        """初始化

        Args:
            config: 配置字典，读取 [forest] 与 [analysis]
        """
        self.config = config
        self.logger = get_logger()
        analysis = config.get('analysis', {})
        self.margin = float(analysis.get('threshold_margin', 0.1))
        self.tolerance = float(analysis.get('uninformative_tolerance', 0.05))
        self.forest_config = ForestConfig.from_config(config)

    def analyze(self, matrix: FeatureMatrix) -> Dict[str, Any]:
        """执行全部打分并生成标记矩阵和依赖统计"""
        self.logger.info(f"开始异常打分: {len(matrix.users)} 个用户, 主种子 {self.forest_config.seed}")
        scores = score_groups(matrix, self.forest_config, self.tolerance)
        flags = build_flag_matrix(scores, self.margin)
        case1 = case1_dependency(flags)
        case2 = case2_combinations(flags)

        excluded = [name for name in GROUP_ORDER if not scores[name].informative]
        if excluded:
            self.logger.info(f"无信息分组已排除: {', '.join(excluded)}")
        self.logger.info("Case I: " + ", ".join(f"k={k}: {pct:.2f}%" for k, pct in enumerate(case1.percentages)))
        return {'scores': scores, 'flags': flags, 'case1': case1, 'case2': case2}

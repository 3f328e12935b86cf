import os
import copy
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from src.analysis.report_generator import rank_users
from src.core.anomaly_analyzer import COMBINED
from src.core.pipeline import Pipeline
from src.synth.corpus_generator import GeneratedCorpus, GroundTruth
from src.utils.logger import get_logger

TOP_K = 5


@dataclass
class PlantedUserResult:
    """单个植入用户的复现情况"""
    user_id: str
    scenarios: List[str]
    rank: int
    combined_score: float
    flagged_groups: List[str]

    @property
    def flagged(self) -> bool:
        return bool(self.flagged_groups)


@dataclass
class RecoveryStats:
    """一次运行对植入用户的复现统计"""
    seed: int
    user_count: int
    top_k: int
    planted: List[PlantedUserResult] = field(default_factory=list)
    flagged_fraction: float = 0.0

    @property
    def top_k_hits(self) -> int:
        return sum(1 for result in self.planted if result.rank <= self.top_k)

    @property
    def all_in_top_k(self) -> bool:
        return self.top_k_hits == len(self.planted)

    @property
    def all_flagged(self) -> bool:
        return all(result.flagged for result in self.planted)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{'user_id': r.user_id, 'scenarios': '+'.join(r.scenarios), 'rank': r.rank,
                              'combined_score': r.combined_score, 'flagged_groups': '+'.join(r.flagged_groups)}
                             for r in self.planted],
                            columns=['user_id', 'scenarios', 'rank', 'combined_score', 'flagged_groups'])


class RecoveryTask:
    """在已知真值的语料上跑完整流水线，检查植入用户是否被找出"""

    def __init__(self, config: Dict[str, Any], top_k: int = TOP_K):
        """初始化

        Args:
            config: 流水线配置，[input] data_dir 会被替换为语料目录
            top_k: 排名前 top_k 视为命中
        """
        self.config = copy.deepcopy(config)
        self.top_k = top_k
        self.logger = get_logger()

    def run(self, corpus_dir: str, truth: GroundTruth) -> RecoveryStats:
        self.config['input']['data_dir'] = corpus_dir
        cohort = Pipeline(self.config).run()[0]
        scores = cohort.analysis['scores']
        flags = cohort.analysis['flags']

        ranking = rank_users(scores)
        rank_of = {user: position + 1 for position, user in enumerate(ranking)}
        combined = scores[COMBINED]
        score_of = dict(zip(combined.users, combined.scores))
        flag_frame = flags.to_frame()

        scenarios: Dict[str, List[str]] = {}
        for user, scenario in truth.pairs:
            scenarios.setdefault(user, []).append(scenario)

        planted = []
        for user in truth.users:
            if user not in rank_of:
                self.logger.warning(f"植入用户 {user} 不在分析人群中")
                continue
            groups = [name for name in flags.groups if flag_frame.at[user, name]]
            planted.append(PlantedUserResult(user, sorted(scenarios[user]), rank_of[user],
                                             float(score_of[user]), groups))

        counts = flags.flag_counts()
        fraction = float((counts > 0).mean()) if len(counts) else 0.0
        stats = RecoveryStats(int(self.config['forest']['seed']), len(ranking), self.top_k, planted, fraction)

        for result in planted:
            self.logger.info(f"[{result.user_id}] 场景 {'+'.join(result.scenarios)}: 排名 {result.rank}, "
                             f"合并分数 {result.combined_score:.4f}, 标记分组 {result.flagged_groups or '无'}")
        self.logger.info(f"复现统计: 前{self.top_k}命中 {stats.top_k_hits}/{len(planted)}, "
                         f"至少一个分组被标记的用户占比 {fraction:.2%}")
        return stats


def verify_ground_truth_recovery(corpus: Union[str, GeneratedCorpus], truth: Optional[GroundTruth],
                                 config: Dict[str, Any], top_k: int = TOP_K) -> RecoveryStats:
    """复现统计的入口函数

    Args:
        corpus: 语料目录或 generate_corpus 的返回值
        truth: 真值；为 None 时读取语料目录下的 ground_truth.csv
        config: 流水线配置
        top_k: 命中的排名阈值

    Returns:
        RecoveryStats
    """
    corpus_dir = corpus.out_dir if isinstance(corpus, GeneratedCorpus) else corpus
    if truth is None:
        truth = corpus.ground_truth if isinstance(corpus, GeneratedCorpus) \
            else GroundTruth.read(os.path.join(corpus_dir, 'ground_truth.csv'))
    return RecoveryTask(config, top_k).run(corpus_dir, truth)

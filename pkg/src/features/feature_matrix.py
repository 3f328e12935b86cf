from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from src.features import GROUP_ORDER, create_all_feature_groups
from src.features.base_feature import BaseFeatureGroup, COUNT, SCORE, TIME, FeatureContext
from src.graph.interaction_graph import BipartiteGraph
from src.ingest.records import FileKind
from src.utils.exceptions import AssemblyError, SchemaError
from src.utils.logger import get_logger

FEATURE_COUNT = 50
GROUP_SIZES = {'graph': 1, 'subgraph': 25, 'logon_logoff': 8, 'removable_media': 10, 'web': 1, 'psychometric': 5}


@dataclass(frozen=True)
class FeatureGroup:
    """矩阵中一个参数组占用的列"""
    name: str
    columns: tuple

    @property
    def size(self) -> int:
        return len(self.columns)


@dataclass
class FeatureMatrix:
    """|用户| x 50 的特征矩阵，行按用户ID排序"""
    frame: pd.DataFrame
    groups: List[FeatureGroup]

    @property
    def users(self) -> List[str]:
        return list(self.frame.index)

    @property
    def values(self) -> np.ndarray:
        return self.frame.to_numpy(dtype=float)

    def group(self, name: str) -> FeatureGroup:
        for group in self.groups:
            if group.name == name:
                return group
        raise KeyError(name)

    def group_values(self, name: str) -> np.ndarray:
        return self.values[:, list(self.group(name).columns)]


def canonical_columns(groups: Optional[Sequence[BaseFeatureGroup]] = None) -> List[str]:
    """50个规范列名，按固定的分组顺序"""
    groups = groups or create_all_feature_groups()
    return [column for group in groups for column in group.columns]


def group_partition(groups: Sequence[BaseFeatureGroup]) -> List[FeatureGroup]:
    partition, start = [], 0
    for group in groups:
        partition.append(FeatureGroup(group.name, tuple(range(start, start + group.size))))
        start += group.size
    return partition


def assemble_matrix(users: Sequence[str], blocks: Mapping[str, Mapping[str, List[Optional[float]]]],
                    groups: Optional[Sequence[BaseFeatureGroup]] = None, impute_time: str = 'cohort_mean',
                    impute_psychometric: str = 'cohort_mean') -> FeatureMatrix:
    """把各分组的按用户特征块拼成矩阵，并填补缺失值

    Args:
        users: 人群用户
        blocks: 分组名 -> 用户 -> 特征块(None 表示缺失)
        groups: 特征组实例，决定列名与缺失值类型
        impute_time: cohort_mean 用有数据用户的均值；zero 填0
        impute_psychometric: cohort_mean 或 reject(缺失即报错)

    Returns:
        FeatureMatrix
    """
    groups = list(groups or create_all_feature_groups())
    if [group.name for group in groups] != list(GROUP_ORDER):
        raise AssemblyError(f"分组顺序错误: {[group.name for group in groups]}")

    columns = canonical_columns(groups)
    kinds = [kind for group in groups for kind in group.column_kinds]
    if len(columns) != FEATURE_COUNT:
        raise AssemblyError(f"特征列数应为 {FEATURE_COUNT}，实际为 {len(columns)}")

    users = sorted(users)
    rows = []
    for user in users:
        row: List[Optional[float]] = []
        for group in groups:
            block = blocks.get(group.name, {}).get(user, [None] * group.size)
            if len(block) != group.size:
                raise AssemblyError(f"用户 {user} 的 {group.name} 特征块长度为 {len(block)}，应为 {group.size}")
            row.extend(block)
        rows.append(row)

    data = np.array(rows, dtype=float).reshape(len(users), FEATURE_COUNT)
    missing = np.isnan(data)

    for index, kind in enumerate(kinds):
        column_missing = missing[:, index]
        if not column_missing.any():
            continue
        if kind == COUNT:
            fill = 0.0
        elif kind == TIME:
            observed = data[~column_missing, index]
            fill = float(observed.mean()) if impute_time == 'cohort_mean' and observed.size else 0.0
        elif kind == SCORE:
            if impute_psychometric == 'reject':
                absent = [users[i] for i in np.flatnonzero(column_missing)]
                raise SchemaError(f"以下用户缺少心理测评记录: {', '.join(absent[:10])}", 'psychometric')
            observed = data[~column_missing, index]
            fill = float(observed.mean()) if observed.size else 0.0
        else:
            raise AssemblyError(f"未知列类型: {kind}")
        data[column_missing, index] = fill

    if not np.isfinite(data).all():
        raise AssemblyError("特征矩阵含非有限值")

    frame = pd.DataFrame(data, columns=columns, index=pd.Index(users, name='user_id'))
    get_logger().info(f"特征矩阵拼装完成: {frame.shape[0]} x {frame.shape[1]}，"
                      f"填补缺失值 {int(missing.sum())} 个")
    return FeatureMatrix(frame, group_partition(groups))


class FeatureExtractor:
    """流式消费各类事件，最后为人群中每个用户拼出特征矩阵"""

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = config or {}
        self.groups = create_all_feature_groups(self.config)
        self._routes: Dict[FileKind, List[BaseFeatureGroup]] = {}
        for group in self.groups:
            for kind in group.source_kinds:
                self._routes.setdefault(kind, []).append(group)

    @property
    def source_kinds(self) -> List[FileKind]:
        return list(self._routes)

    def consume(self, file_kind: FileKind, records: Iterable[Any]) -> int:
        """把一类记录分发给需要它的特征组，返回条数"""
        targets = self._routes.get(FileKind(file_kind), [])
        count = 0
        for record in records:
            for group in targets:
                group.consume(record)
            count += 1
        return count

    def group(self, name: str) -> BaseFeatureGroup:
        for group in self.groups:
            if group.name == name:
                return group
        raise KeyError(name)

    def build(self, users: Sequence[str], graph: Optional[BipartiteGraph]) -> FeatureMatrix:
        context = FeatureContext(graph=graph)
        blocks = {group.name: {user: group.calculate(user, context) for user in users} for group in self.groups}
        features = self.config.get('features', {})
        strict = self.config.get('ingest', {}).get('strict', False)
        return assemble_matrix(users, blocks, self.groups,
                               impute_time=features.get('impute_time', 'cohort_mean'),
                               impute_psychometric='reject' if strict
                               else features.get('impute_psychometric', 'cohort_mean'))


def write_feature_matrix(matrix: FeatureMatrix, path: str) -> None:
    """导出为CSV，首列 user_id，其后50个规范列"""
    matrix.frame.to_csv(path, index=True, float_format='%.17g')


def read_feature_matrix(path: str) -> FeatureMatrix:
    """从CSV读回特征矩阵，列名必须与规范列完全一致"""
    frame = pd.read_csv(path, dtype={'user_id': str}, float_precision='round_trip')
    if 'user_id' not in frame.columns:
        raise SchemaError("特征矩阵缺少 user_id 列", 'features')
    frame = frame.set_index('user_id')
    groups = create_all_feature_groups()
    expected = canonical_columns(groups)
    if list(frame.columns) != expected:
        raise SchemaError("特征矩阵列名与规范列不一致", 'features')
    frame = frame.astype(float).sort_index()
    if not np.isfinite(frame.to_numpy()).all():
        raise SchemaError("特征矩阵含非有限值", 'features')
    return FeatureMatrix(frame, group_partition(groups))

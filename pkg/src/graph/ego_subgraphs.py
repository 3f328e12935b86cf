from dataclasses import dataclass, astuple
from typing import Dict, FrozenSet, Iterable, List, Optional

import networkx as nx
import numpy as np
import pandas as pd

from src.graph.interaction_graph import BipartiteGraph, USER, user_node
from src.utils.exceptions import UnknownVertexError, ValidationError

MAX_ORDER = 5
METRIC_NAMES = ('vertex_count', 'edge_count', 'density', 'weighted_diameter', 'peer_count')


def subgraph_column_names() -> List[str]:
    """25个子图特征列名，阶优先、指标次之: o1_vertex_count ... o5_peer_count"""
    return [f"o{order}_{metric}" for order in range(1, MAX_ORDER + 1) for metric in METRIC_NAMES]


@dataclass(frozen=True)
class EgoSubgraphMetrics:
    vertex_count: int
    edge_count: int
    density: float
    weighted_diameter: float
    peer_count: int

    def as_list(self) -> List[float]:
        return [float(value) for value in astuple(self)]


@dataclass
class EgoSubgraph:
    """以某用户为中心、半径为order跳的导出子图，边权沿用原图"""
    ego: str
    order: int
    graph: nx.Graph


def _check_order(order: int) -> None:
    if not isinstance(order, (int, np.integer)) or isinstance(order, bool) or not 1 <= order <= MAX_ORDER:
        raise ValueError(f"子图阶数必须在 [1, {MAX_ORDER}] 内: {order!r}")


def ego_subgraph(g: BipartiteGraph, user: str, order: int) -> EgoSubgraph:
    """提取用户的order阶自我子图，跳数按无权边计算

    Args:
        g: 二部图
        user: 中心用户
        order: 阶数，1到5

    Returns:
        EgoSubgraph
    """
    _check_order(order)
    if not g.has_user(user):
        raise UnknownVertexError(user)
    sub = nx.ego_graph(g.nx_graph, user_node(user), radius=order, center=True, undirected=True)
    return EgoSubgraph(user, order, sub)


class SubgraphMetricCalculator:
    """计算子图的五项指标

    加权直径按顶点集合缓存；高阶自我子图往往就是整个连通分量，
    同一分量里的用户可以共享结果。
    """

    def __init__(self, distance: str = 'direct', density: str = 'simple'):
        """初始化

        Args:
            distance: direct 边权直接当距离；inverse 用 1/权重
            density: simple 分母为 v(v-1)/2；bipartite 分母为 用户数*设备数
        """
        if distance not in ('direct', 'inverse'):
            raise ValueError(f"未知距离模式: {distance}")
        if density not in ('simple', 'bipartite'):
            raise ValueError(f"未知密度模式: {density}")
        self.distance = distance
        self.density_mode = density
        self._diameters: Dict[FrozenSet, float] = {}

    def metrics(self, sg: EgoSubgraph) -> EgoSubgraphMetrics:
        graph = sg.graph
        v = graph.number_of_nodes()
        e = graph.number_of_edges()
        users = sum(1 for node in graph.nodes if node[0] == USER)

        if v > 1 and not nx.is_connected(graph):
            raise ValidationError(f"用户 {sg.ego} 的 {sg.order} 阶子图不连通")

        return EgoSubgraphMetrics(
            vertex_count=v,
            edge_count=e,
            density=self._density(v, e, users),
            weighted_diameter=self.weighted_diameter(graph),
            peer_count=max(users - 1, 0),
        )

    def _density(self, v: int, e: int, users: int) -> float:
        if self.density_mode == 'bipartite':
            possible = users * (v - users)
        else:
            possible = v * (v - 1) / 2
        return e / possible if possible > 0 else 0.0

    def weighted_diameter(self, graph: nx.Graph) -> float:
        """所有可达顶点对的最短加权路径长度的最大值"""
        if graph.number_of_nodes() <= 1:
            return 0.0
        key = frozenset(graph.nodes)
        cached = self._diameters.get(key)
        if cached is not None:
            return cached

        if self.distance == 'inverse':
            graph = graph.copy()
            for _, _, data in graph.edges(data=True):
                data['distance'] = 1.0 / data['weight']
            attribute = 'distance'
        else:
            attribute = 'weight'

        lengths = nx.floyd_warshall_numpy(graph, weight=attribute)
        finite = lengths[np.isfinite(lengths)]
        diameter = float(finite.max()) if finite.size else 0.0
        self._diameters[key] = diameter
        return diameter

    def feature_block(self, g: BipartiteGraph, user: str) -> List[float]:
        """1到5阶的指标首尾相接，共25个值

        只做一次截断BFS，再按距离切出各阶顶点集，结果与逐阶调用 ego_subgraph 相同。
        """
        if not g.has_user(user):
            raise UnknownVertexError(user)
        distances = nx.single_source_shortest_path_length(g.nx_graph, user_node(user), cutoff=MAX_ORDER)
        block: List[float] = []
        for order in range(1, MAX_ORDER + 1):
            nodes = [node for node, hops in distances.items() if hops <= order]
            sub = EgoSubgraph(user, order, g.nx_graph.subgraph(nodes).copy())
            block.extend(self.metrics(sub).as_list())
        return block


def metrics(sg: EgoSubgraph, distance: str = 'direct', density: str = 'simple') -> EgoSubgraphMetrics:
    """计算单个子图的五项指标"""
    return SubgraphMetricCalculator(distance, density).metrics(sg)


def subgraph_feature_block(g: BipartiteGraph, user: str,
                           calculator: Optional[SubgraphMetricCalculator] = None) -> List[float]:
    """用户的25维子图特征块，位置 5j..5j+4 对应 j+1 阶"""
    return (calculator or SubgraphMetricCalculator()).feature_block(g, user)


def subgraph_block_frame(g: BipartiteGraph, users: Iterable[str],
                         calculator: Optional[SubgraphMetricCalculator] = None) -> pd.DataFrame:
    """每个用户一行、25个命名列的子图特征表"""
    calculator = calculator or SubgraphMetricCalculator()
    users = list(users)
    rows = [calculator.feature_block(g, user) for user in users]
    frame = pd.DataFrame(rows, columns=subgraph_column_names(), index=pd.Index(users, name='user_id'))
    return frame


def subgraph_histograms(frame: pd.DataFrame) -> pd.DataFrame:
    """各阶各指标的取值分布，列为 order, metric, value, users"""
    records = []
    for order in range(1, MAX_ORDER + 1):
        for metric in METRIC_NAMES:
            counts = frame[f"o{order}_{metric}"].round(6).value_counts().sort_index()
            for value, users in counts.items():
                records.append({'order': order, 'metric': metric, 'value': float(value), 'users': int(users)})
    return pd.DataFrame(records, columns=['order', 'metric', 'value', 'users'])

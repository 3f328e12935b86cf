from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import networkx as nx
import pandas as pd

from src.ingest.records import DeviceId, LogonActivity, LogonEvent, UserId
from src.utils.exceptions import UnknownVertexError
from src.utils.logger import get_logger

USER = 'user'
DEVICE = 'device'


def user_node(user: str) -> Tuple[str, str]:
    """用户顶点的键；用户和设备的命名空间靠类型标签区分"""
    return (USER, user)


def device_node(device: str) -> Tuple[str, str]:
    return (DEVICE, device)


class BipartiteGraph:
    """带权无向的用户-设备二部图，构建后冻结

    边权为该用户在该设备上的Logoff次数。
    """

    def __init__(self, graph: nx.Graph):
        self._graph = nx.freeze(graph)

    @property
    def nx_graph(self) -> nx.Graph:
        return self._graph

    @property
    def users(self) -> List[UserId]:
        return sorted(UserId(key) for kind, key in self._graph.nodes if kind == USER)

    @property
    def devices(self) -> List[DeviceId]:
        return sorted(DeviceId(key) for kind, key in self._graph.nodes if kind == DEVICE)

    @property
    def edges(self) -> List[Tuple[UserId, DeviceId, int]]:
        """(用户, 设备, 权重)，按用户、设备排序"""
        result = []
        for a, b, weight in self._graph.edges(data='weight'):
            user, device = (a, b) if a[0] == USER else (b, a)
            result.append((UserId(user[1]), DeviceId(device[1]), int(weight)))
        return sorted(result)

    def has_user(self, user: str) -> bool:
        return self._graph.has_node(user_node(user))

    def weight(self, user: str, device: str) -> int:
        data = self._graph.get_edge_data(user_node(user), device_node(device))
        return int(data['weight']) if data else 0

    def total_weight(self) -> int:
        return int(self._graph.size(weight='weight'))

    def number_of_edges(self) -> int:
        return self._graph.number_of_edges()

    def is_properly_colored(self) -> bool:
        """按顶点类型二着色，每条边两端颜色不同"""
        return all(a[0] != b[0] for a, b in self._graph.edges)

    def to_edge_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.edges, columns=['user', 'device', 'weight'])

    def write_edge_list(self, path: str) -> None:
        self.to_edge_frame().to_csv(path, index=False)


def build_graph(events: Iterable[LogonEvent], cohort: Optional[Iterable[str]] = None,
                keep_isolated: bool = True) -> BipartiteGraph:
    """由登录事件构建用户-设备二部图，只有Logoff事件映射为边

    Args:
        events: LogonEvent 流
        cohort: 分析人群；给出时这些用户即使没有事件也作为孤立顶点保留
        keep_isolated: 是否保留没有任何Logoff的用户顶点

    Returns:
        冻结的 BipartiteGraph
    """
    logger = get_logger()
    graph = nx.Graph()
    logoffs = 0

    for event in events:
        node = user_node(event.user)
        if not graph.has_node(node):
            graph.add_node(node, kind=USER)
        if event.activity != LogonActivity.LOGOFF:
            continue
        logoffs += 1
        device = device_node(event.pc)
        if graph.has_edge(node, device):
            graph[node][device]['weight'] += 1
        else:
            graph.add_node(device, kind=DEVICE)
            graph.add_edge(node, device, weight=1)

    if cohort is not None:
        for user in cohort:
            graph.add_node(user_node(user), kind=USER)

    if not keep_isolated:
        isolated = [node for node in graph.nodes if node[0] == USER and graph.degree(node) == 0]
        graph.remove_nodes_from(isolated)

    result = BipartiteGraph(graph)
    logger.info(f"二部图构建完成: 用户 {len(result.users)} 个, 设备 {len(result.devices)} 个, "
                f"边 {result.number_of_edges()} 条, Logoff事件 {logoffs} 条")
    return result


def user_degree(g: BipartiteGraph, user: str) -> int:
    """用户顶点的度，即该用户访问过的设备数"""
    if not g.has_user(user):
        raise UnknownVertexError(user)
    return g.nx_graph.degree(user_node(user))


@dataclass
class DegreeHistogram:
    """用户度分布，bin_edges 比 counts 多一个元素"""
    bin_edges: List[int]
    counts: List[int]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'bin_start': self.bin_edges[:-1], 'bin_end': self.bin_edges[1:],
                             'users': self.counts})


def degree_histogram(g: BipartiteGraph, bin_width: int = 1) -> DegreeHistogram:
    """按固定宽度分箱统计用户度，区间左闭右开"""
    if bin_width < 1:
        raise ValueError(f"bin_width 必须 >= 1: {bin_width}")

    degrees = [user_degree(g, user) for user in g.users]
    if not degrees:
        return DegreeHistogram([], [])

    bins = max(degrees) // bin_width + 1
    counts = [0] * bins
    for degree in degrees:
        counts[degree // bin_width] += 1
    return DegreeHistogram([i * bin_width for i in range(bins + 1)], counts)

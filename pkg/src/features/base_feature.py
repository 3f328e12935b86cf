from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Tuple

from src.graph.interaction_graph import BipartiteGraph
from src.ingest.records import FileKind

# 列的缺失值类型: time 用人群均值填补, count 填0, score 按心理测评策略处理
TIME = 'time'
COUNT = 'count'
SCORE = 'score'


@dataclass
class FeatureContext:
    """计算特征时共享的上下文"""
    graph: Optional[BipartiteGraph] = None


class BaseFeatureGroup(ABC):
    """特征分组基类，所有特征组都应继承此类

    事件型分组通过 consume 流式累计，最后由 calculate 按用户取值；
    返回 None 的位置表示该用户没有此类数据，交给矩阵拼装时填补。
    """

    # 该分组需要读取的文件类型
    source_kinds: Tuple[FileKind, ...] = ()

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        """初始化特征组

        Args:
            config: 完整配置字典
        """
        self.config = config or {}

    @property
    @abstractmethod
    def name(self) -> str:
        """分组名称"""

    @property
    @abstractmethod
    def columns(self) -> List[str]:
        """分组内的列名，顺序固定"""

    @property
    def column_kinds(self) -> List[str]:
        """每列的缺失值类型，默认全部为 time"""
        return [TIME] * len(self.columns)

    @property
    def size(self) -> int:
        return len(self.columns)

    def consume(self, record: Any) -> None:
        """累计一条记录，默认忽略"""

    @abstractmethod
    def calculate(self, user: str, context: FeatureContext) -> List[Optional[float]]:
        """计算单个用户的特征值"""

    def get_config_value(self, section: str, key: str, default_value: Any) -> Any:
        return self.config.get(section, {}).get(key, default_value)


def single_user_features(group: BaseFeatureGroup, records: Iterable[Any],
                         context: Optional[FeatureContext] = None) -> List[Optional[float]]:
    """对只属于一个用户的记录直接算出该分组的特征

    没有记录时返回全 None。
    """
    user = None
    for record in records:
        if user is None:
            user = record.user
        elif record.user != user:
            raise ValueError(f"记录属于多个用户: {user}, {record.user}")
        group.consume(record)
    if user is None:
        return [None] * group.size
    return group.calculate(user, context or FeatureContext())

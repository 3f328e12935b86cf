from typing import List, Optional

from src.features.base_feature import BaseFeatureGroup, COUNT, FeatureContext
from src.graph.interaction_graph import user_degree


class DegreeFeature(BaseFeatureGroup):
    """图参数：用户顶点的度"""

    @property
    def name(self) -> str:
        return "graph"

    @property
    def columns(self) -> List[str]:
        return ['degree']

    @property
    def column_kinds(self) -> List[str]:
        return [COUNT]

    def calculate(self, user: str, context: FeatureContext) -> List[Optional[float]]:
        if context.graph is None or not context.graph.has_user(user):
            return [None]
        return [float(user_degree(context.graph, user))]

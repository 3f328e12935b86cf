from typing import List, Optional

from src.features.base_feature import BaseFeatureGroup, COUNT, FeatureContext
from src.graph.ego_subgraphs import SubgraphMetricCalculator, subgraph_column_names


class SubgraphFeature(BaseFeatureGroup):
    """用户子图参数：1到5阶、每阶5项指标"""

    def __init__(self, config=None):
        super().__init__(config)
        self.calculator = SubgraphMetricCalculator(
            distance=self.get_config_value('graph', 'distance', 'direct'),
            density=self.get_config_value('graph', 'density', 'simple'))

    @property
    def name(self) -> str:
        return "subgraph"

    @property
    def columns(self) -> List[str]:
        return subgraph_column_names()

    @property
    def column_kinds(self) -> List[str]:
        return [COUNT] * len(self.columns)

    def calculate(self, user: str, context: FeatureContext) -> List[Optional[float]]:
        if context.graph is None or not context.graph.has_user(user):
            # 不在图中的用户按孤立顶点处理
            return [1.0, 0.0, 0.0, 0.0, 0.0] * 5
        return self.calculator.feature_block(context.graph, user)

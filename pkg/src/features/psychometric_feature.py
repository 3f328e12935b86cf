from typing import Dict, List, Optional

from src.features.base_feature import BaseFeatureGroup, SCORE, FeatureContext
from src.ingest.records import FileKind, PsychometricRecord


class PsychometricFeature(BaseFeatureGroup):
    """大五人格得分，按 O, C, E, A, N 顺序原样输出"""

    source_kinds = (FileKind.PSYCHOMETRIC,)

    def __init__(self, config=None):
        super().__init__(config)
        self._records: Dict[str, PsychometricRecord] = {}

    @property
    def name(self) -> str:
        return "psychometric"

    @property
    def columns(self) -> List[str]:
        return ['O', 'C', 'E', 'A', 'N']

    @property
    def column_kinds(self) -> List[str]:
        return [SCORE] * 5

    def consume(self, record: PsychometricRecord) -> None:
        self._records[record.user] = record

    def calculate(self, user: str, context: FeatureContext) -> List[Optional[float]]:
        record = self._records.get(user)
        return psychometric_features(record) if record else [None] * 5


def psychometric_features(record: PsychometricRecord) -> List[float]:
    return [float(score) for score in record.scores()]

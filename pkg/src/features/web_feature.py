from collections import defaultdict
from typing import Iterable, List, Optional

from src.features.base_feature import BaseFeatureGroup, COUNT, FeatureContext
from src.ingest.records import FileKind, HttpEvent


class UniqueUrlFeature(BaseFeatureGroup):
    """网页访问：访问过的不同URL个数(按原字符串精确比较)"""

    source_kinds = (FileKind.HTTP,)

    def __init__(self, config=None):
        super().__init__(config)
        self._urls = defaultdict(set)

    @property
    def name(self) -> str:
        return "web"

    @property
    def columns(self) -> List[str]:
        return ['unique_urls']

    @property
    def column_kinds(self) -> List[str]:
        return [COUNT]

    def consume(self, record: HttpEvent) -> None:
        self._urls[record.user].add(record.url)

    def calculate(self, user: str, context: FeatureContext) -> List[Optional[float]]:
        return [float(len(self._urls.get(user, ())))]

    def unique_counts(self) -> dict:
        return {user: len(urls) for user, urls in self._urls.items()}


def web_feature(http_events: Iterable[HttpEvent]) -> float:
    """单个用户的不同URL数，没有访问记录时为0"""
    return float(len({event.url for event in http_events}))

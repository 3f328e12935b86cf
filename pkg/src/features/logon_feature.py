from collections import defaultdict
from typing import Iterable, List, Optional

from src.features.base_feature import BaseFeatureGroup, FeatureContext, single_user_features
from src.features.time_summary import TimeAccumulator, minutes_of_day
from src.ingest.records import FileKind, LogonActivity, LogonEvent

STATS = ('min', 'max', 'mean', 'mode')


class LogonLogoffFeature(BaseFeatureGroup):
    """登录/登出时刻的最小值、最大值、均值和众数

    数据集中屏幕解锁也记为Logon，这里不加区分。
    """

    source_kinds = (FileKind.LOGON,)

    def __init__(self, config=None):
        super().__init__(config)
        self._logon = defaultdict(TimeAccumulator)
        self._logoff = defaultdict(TimeAccumulator)

    @property
    def name(self) -> str:
        return "logon_logoff"

    @property
    def columns(self) -> List[str]:
        return [f"logon_{stat}" for stat in STATS] + [f"logoff_{stat}" for stat in STATS]

    def consume(self, record: LogonEvent) -> None:
        target = self._logon if record.activity == LogonActivity.LOGON else self._logoff
        target[record.user].add(minutes_of_day(record.timestamp))

    def calculate(self, user: str, context: FeatureContext) -> List[Optional[float]]:
        values: List[Optional[float]] = []
        for accumulators in (self._logon, self._logoff):
            summary = accumulators[user].summary() if user in accumulators else None
            values.extend(summary.as_list() if summary else [None] * 4)
        return values


def logon_logoff_features(events: Iterable[LogonEvent]) -> List[Optional[float]]:
    """单个用户的8个登录/登出特征，缺失位置为None"""
    return single_user_features(LogonLogoffFeature(), events)

from collections import Counter, defaultdict
from itertools import chain
from typing import Iterable, List, Optional, Union

from src.features.base_feature import BaseFeatureGroup, COUNT, TIME, FeatureContext, single_user_features
from src.features.time_summary import TimeAccumulator, minutes_of_day
from src.ingest.records import DeviceActivity, DeviceEvent, FileEvent, FileKind

STATS = ('min', 'max', 'mean', 'mode')


class RemovableMediaFeature(BaseFeatureGroup):
    """移动存储：插入/拔出时刻统计，加每日拷贝文件数的最大值与众数"""

    source_kinds = (FileKind.DEVICE, FileKind.FILE)

    def __init__(self, config=None):
        super().__init__(config)
        self._insert = defaultdict(TimeAccumulator)
        self._remove = defaultdict(TimeAccumulator)
        self._daily_copies = defaultdict(Counter)

    @property
    def name(self) -> str:
        return "removable_media"

    @property
    def columns(self) -> List[str]:
        return ([f"insert_{stat}" for stat in STATS] + [f"remove_{stat}" for stat in STATS]
                + ['file_copy_daily_max', 'file_copy_daily_mode'])

    @property
    def column_kinds(self) -> List[str]:
        return [TIME] * 8 + [COUNT] * 2

    def consume(self, record: Union[DeviceEvent, FileEvent]) -> None:
        if isinstance(record, DeviceEvent):
            target = self._insert if record.activity == DeviceActivity.INSERT else self._remove
            target[record.user].add(minutes_of_day(record.timestamp))
        elif isinstance(record, FileEvent):
            self._daily_copies[record.user][record.timestamp.date()] += 1

    def calculate(self, user: str, context: FeatureContext) -> List[Optional[float]]:
        values: List[Optional[float]] = []
        for accumulators in (self._insert, self._remove):
            summary = accumulators[user].summary() if user in accumulators else None
            values.extend(summary.as_list() if summary else [None] * 4)
        values.extend(daily_copy_stats(self._daily_copies.get(user, Counter()).values()))
        return values


def daily_copy_stats(daily_counts: Iterable[int]) -> List[Optional[float]]:
    """每日拷贝数的最大值和众数，只统计有拷贝的日子；平票取较小值"""
    active = Counter(count for count in daily_counts if count > 0)
    if not active:
        return [None, None]
    top = max(active.values())
    mode = min(count for count, days in active.items() if days == top)
    return [float(max(active)), float(mode)]


def removable_media_features(device_events: Iterable[DeviceEvent],
                             file_events: Iterable[FileEvent]) -> List[Optional[float]]:
    """单个用户的10个移动存储特征，缺失位置为None"""
    return single_user_features(RemovableMediaFeature(), chain(device_events, file_events))

import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, List, Optional

MINUTES_PER_DAY = 1440


@dataclass(frozen=True)
class TimeSummary:
    """一组时刻(距午夜分钟数)的最小值、最大值、均值和众数"""
    min: float
    max: float
    mean: float
    mode: float

    def as_list(self) -> List[float]:
        return [self.min, self.max, self.mean, self.mode]


def minutes_of_day(timestamp: datetime) -> float:
    """去掉日期部分，返回 [0, 1440) 内的分钟数，秒折算为小数"""
    return timestamp.hour * 60 + timestamp.minute + timestamp.second / 60.0


@dataclass
class TimeAccumulator:
    """流式累计时刻统计，内存与事件数无关

    众数按整分钟(向下取整)计，平票取最早的分钟；结果不低于最小值。
    """
    count: int = 0
    total: float = 0.0
    low: float = math.inf
    high: float = -math.inf
    minutes: Counter = field(default_factory=Counter)

    def add(self, value: float) -> None:
        if not 0 <= value < MINUTES_PER_DAY:
            raise ValueError(f"时刻超出 [0, 1440): {value}")
        self.count += 1
        self.total += value
        self.low = min(self.low, value)
        self.high = max(self.high, value)
        self.minutes[int(value)] += 1

    def summary(self) -> Optional[TimeSummary]:
        if self.count == 0:
            return None
        top = max(self.minutes.values())
        mode = min(minute for minute, hits in self.minutes.items() if hits == top)
        # 浮点求和可能让均值略微越界
        mean = min(max(self.total / self.count, self.low), self.high)
        return TimeSummary(self.low, self.high, mean, max(float(mode), self.low))


def summarize_times(values: Iterable[float]) -> Optional[TimeSummary]:
    """汇总一组时刻；空输入返回None，由调用方走缺失值填补

    Args:
        values: 距午夜的分钟数

    Returns:
        TimeSummary 或 None
    """
    accumulator = TimeAccumulator()
    for value in values:
        accumulator.add(value)
    return accumulator.summary()

from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import NewType, Union

UserId = NewType('UserId', str)
DeviceId = NewType('DeviceId', str)


class FileKind(str, Enum):
    """可解析的输入文件类型"""
    LOGON = 'logon'
    DEVICE = 'device'
    FILE = 'file'
    HTTP = 'http'
    PSYCHOMETRIC = 'psychometric'
    ROSTER = 'roster'


class LogonActivity(str, Enum):
    LOGON = 'Logon'
    LOGOFF = 'Logoff'


class DeviceActivity(str, Enum):
    INSERT = 'Insert'
    REMOVE = 'Remove'


@dataclass(frozen=True)
class LogonEvent:
    timestamp: datetime
    user: UserId
    pc: DeviceId
    activity: LogonActivity


@dataclass(frozen=True)
class DeviceEvent:
    timestamp: datetime
    user: UserId
    pc: DeviceId
    activity: DeviceActivity


@dataclass(frozen=True)
class FileEvent:
    timestamp: datetime
    user: UserId
    pc: DeviceId
    filename: str
    content: str = ''


@dataclass(frozen=True)
class HttpEvent:
    timestamp: datetime
    user: UserId
    pc: DeviceId
    url: str
    content: str = ''


@dataclass(frozen=True)
class PsychometricRecord:
    """大五人格得分，顺序为 O, C, E, A, N"""
    user: UserId
    openness: float
    conscientiousness: float
    extroversion: float
    agreeableness: float
    neuroticism: float
    employee_name: str = ''

    def scores(self) -> tuple:
        return (self.openness, self.conscientiousness, self.extroversion,
                self.agreeableness, self.neuroticism)


@dataclass(frozen=True)
class RosterRecord:
    user: UserId
    functional_unit: str
    department: str
    role: str


EventRecord = Union[LogonEvent, DeviceEvent, FileEvent, HttpEvent]
AnyRecord = Union[LogonEvent, DeviceEvent, FileEvent, HttpEvent, PsychometricRecord, RosterRecord]


@dataclass
class IngestStats:
    """单个文件的解析计数

    accepted_by_user 只保存每个用户的计数，内存随用户数而非行数增长。
    """
    file_kind: str
    read: int = 0
    accepted: int = 0
    rejected: Counter = field(default_factory=Counter)
    accepted_by_user: Counter = field(default_factory=Counter)

    @property
    def rejected_total(self) -> int:
        return sum(self.rejected.values())

    def is_consistent(self) -> bool:
        return self.read == self.accepted + self.rejected_total

    def to_dict(self) -> dict:
        return {
            'file_kind': self.file_kind,
            'read': self.read,
            'accepted': self.accepted,
            'rejected': self.rejected_total,
            'reasons': dict(sorted(self.rejected.items())),
            'users': len(self.accepted_by_user),
        }

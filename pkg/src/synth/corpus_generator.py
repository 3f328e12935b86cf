import os
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from enum import Enum
from statistics import NormalDist
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.ingest.cert_parser import CertCsvWriter
from src.ingest.records import (DeviceActivity, DeviceEvent, DeviceId, FileEvent, FileKind, HttpEvent,
                                LogonActivity, LogonEvent, PsychometricRecord, RosterRecord, UserId)
from src.utils.logger import get_logger

FUNCTIONAL_UNIT = 'Research And Engineering'
START_DATE = date(2010, 1, 4)
USB_RATE = 0.2
# 人格分数对行为倾向的载荷
TRAIT_LOADING = 0.8
# 约35%的用户偶尔使用公共机器
SHARE_CUTOFF = 0.385

_DOMAINS = ('wikipedia.org', 'github.com', 'stackoverflow.com', 'python.org', 'ieee.org', 'nytimes.com',
            'bbc.co.uk', 'linkedin.com', 'amazon.com', 'weather.com', 'espn.com', 'reddit.com',
            'arxiv.org', 'microsoft.com', 'oracle.com', 'cnn.com')
_ROLES = ('ElectricalEngineer', 'MechanicalEngineer', 'SoftwareEngineer', 'ComputerProgrammer', 'Technician')


class ScenarioKind(str, Enum):
    AFTER_HOURS_LOGON = 'after_hours_logon'
    USB_MASS_COPY = 'usb_mass_copy'
    DEVICE_HOPPER = 'device_hopper'
    BROWSING_BURST = 'browsing_burst'


@dataclass(frozen=True)
class ScenarioSpec:
    """植入的异常行为

    intensity 放大该场景的特征强度，rate 为出现异常行为的工作日比例。
    """
    kind: ScenarioKind
    user: Optional[str] = None
    intensity: float = 1.0
    rate: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, 'kind', ScenarioKind(self.kind))
        if self.intensity <= 0:
            raise ValueError(f"intensity 必须为正: {self.intensity}")
        if not 0 < self.rate <= 1:
            raise ValueError(f"rate 必须在 (0, 1] 内: {self.rate}")


@dataclass
class GroundTruth:
    """植入用户及其场景"""
    pairs: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def users(self) -> List[str]:
        return sorted({user for user, _ in self.pairs})

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.pairs, columns=['user_id', 'scenario'])

    @classmethod
    def read(cls, path: str) -> 'GroundTruth':
        frame = pd.read_csv(path, dtype=str)
        return cls([(row.user_id, row.scenario) for row in frame.itertuples(index=False)])


@dataclass
class GeneratedCorpus:
    out_dir: str
    paths: Dict[str, str]
    ground_truth: GroundTruth
    users: List[str]
    department: str
    emitted: Counter = field(default_factory=Counter)


@dataclass
class _UserProfile:
    user: str
    pc: str
    logon_base: float
    logoff_base: float
    shared_pcs: List[str]
    uses_usb: bool
    url_pool: List[str]
    visits_per_day: float
    jitter: float = 10.0
    traits: np.ndarray = field(default_factory=lambda: np.zeros(5))
    scenarios: Dict[ScenarioKind, ScenarioSpec] = field(default_factory=dict)
    hop_pcs: List[str] = field(default_factory=list)


def _minutes_to_time(day: date, minutes: float) -> datetime:
    seconds = int(round(min(max(minutes, 0.0), 1439.0) * 60))
    return datetime(day.year, day.month, day.day) + timedelta(seconds=min(seconds, 86399))


def _user_ids(rng: np.random.Generator, n_users: int) -> List[str]:
    letters = np.array(list('ABCDEFGHIJKLMNOPQRSTUVWXYZ'))
    ids = set()
    while len(ids) < n_users:
        prefix = ''.join(rng.choice(letters, size=3))
        ids.add(f"{prefix}{int(rng.integers(0, 10000)):04d}")
    return sorted(ids)


class CorpusGenerator:
    """按CERT模式生成合成语料，并植入带真值的异常用户

    正常用户的行为由人格分数驱动：尽责性决定上下班时刻，开放性决定浏览范围，
    外向性决定是否使用公共机器，宜人性决定是否使用移动存储，神经质决定每天的作息波动。
    """

    def __init__(self, n_users: int, n_days: int, scenarios: Sequence[ScenarioSpec] = (), seed: int = 42,
                 department: str = 'Engineering', usb_rate: float = USB_RATE, timestamp_format: str = 'us'):
        """初始化

        Args:
            n_users: 用户数，至少2
            n_days: 日历天数，至少5
            scenarios: 植入场景；user 为空时按种子挑选用户
            seed: 随机种子
            department: 全部用户所属部门
            usb_rate: 正常用户中使用移动存储的比例
            timestamp_format: us / iso
        """
        if n_users < 2:
            raise ValueError(f"n_users 必须 >= 2: {n_users}")
        if n_days < 5:
            raise ValueError(f"n_days 必须 >= 5: {n_days}")
        self.n_users = n_users
        self.n_days = n_days
        self.seed = seed
        self.department = department
        self.usb_rate = usb_rate
        # 倾向分数高于该分位点的正常用户使用移动存储
        if 0 < usb_rate < 1:
            self.usb_cutoff = NormalDist().inv_cdf(1 - usb_rate)
        else:
            self.usb_cutoff = np.inf if usb_rate <= 0 else -np.inf
        self.timestamp_format = timestamp_format
        self.rng = np.random.default_rng(seed)
        self.logger = get_logger()

        self.users = _user_ids(self.rng, n_users)
        self.scenarios = self._resolve_targets(scenarios)
        self.shared_pcs = [f"PC-{9000 + i:04d}" for i in range(max(3, n_users // 10))]
        self.profiles = [self._profile(i, user) for i, user in enumerate(self.users)]

    def _resolve_targets(self, scenarios: Sequence[ScenarioSpec]) -> List[ScenarioSpec]:
        resolved = []
        taken = {spec.user for spec in scenarios if spec.user}
        free = [user for user in self.users if user not in taken]
        order = list(self.rng.permutation(len(free)))
        for spec in scenarios:
            if spec.user is None:
                if not order:
                    raise ValueError("植入场景数超过了可用用户数")
                spec = ScenarioSpec(spec.kind, free[order.pop(0)], spec.intensity, spec.rate)
            elif spec.user not in self.users:
                raise ValueError(f"场景目标用户不在人员表中: {spec.user}")
            resolved.append(spec)
        return resolved

    def _trait_driven(self, trait: float) -> float:
        """由人格z分数导出的单位方差行为倾向"""
        return TRAIT_LOADING * trait + float(np.sqrt(1 - TRAIT_LOADING ** 2)) * float(self.rng.normal())

    def _profile(self, index: int, user: str) -> _UserProfile:
        rng = self.rng
        planted = {spec.kind: spec for spec in self.scenarios if spec.user == user}
        # O, C, E, A, N
        traits = rng.normal(size=5)
        openness, conscientiousness, extroversion, agreeableness, neuroticism = traits

        shared = []
        if self._trait_driven(extroversion) > SHARE_CUTOFF:
            shared = [str(rng.choice(self.shared_pcs))]

        pool_size = max(20, int(round(80 + 8 * self._trait_driven(openness))))
        burst = planted.get(ScenarioKind.BROWSING_BURST)
        if burst:
            pool_size = int(pool_size * 6 * burst.intensity)
        url_pool = [f"http://{_DOMAINS[int(rng.integers(len(_DOMAINS)))]}/{user.lower()}/{i}"
                    for i in range(pool_size)]

        profile = _UserProfile(
            user=user,
            pc=f"PC-{index:04d}",
            logon_base=float(np.clip(525 - 20 * self._trait_driven(conscientiousness), 480, 570)),
            logoff_base=float(np.clip(1065 + 20 * self._trait_driven(conscientiousness), 1020, 1110)),
            shared_pcs=shared,
            uses_usb=self._trait_driven(agreeableness) > self.usb_cutoff or ScenarioKind.USB_MASS_COPY in planted,
            url_pool=url_pool,
            visits_per_day=float(rng.uniform(8, 20)) * (2.0 if burst else 1.0),
            jitter=10.0 * float(np.exp(0.25 * self._trait_driven(neuroticism))),
            traits=traits,
            scenarios=planted,
        )

        hopper = planted.get(ScenarioKind.DEVICE_HOPPER)
        if hopper:
            others = [f"PC-{i:04d}" for i in range(self.n_users) if i != index]
            count = min(len(others), int(round(15 * hopper.intensity)))
            profile.hop_pcs = list(rng.choice(others, size=count, replace=False)) + list(self.shared_pcs)
        return profile

    def _day_events(self, profile: _UserProfile, day: date) -> Dict[FileKind, List]:
        rng = self.rng
        events: Dict[FileKind, List] = {kind: [] for kind in (FileKind.LOGON, FileKind.DEVICE, FileKind.FILE,
                                                              FileKind.HTTP)}
        user = UserId(profile.user)

        def session(pc: str, start: float, end: float) -> None:
            events[FileKind.LOGON].append(LogonEvent(_minutes_to_time(day, start), user, DeviceId(pc),
                                                     LogonActivity.LOGON))
            events[FileKind.LOGON].append(LogonEvent(_minutes_to_time(day, end), user, DeviceId(pc),
                                                     LogonActivity.LOGOFF))

        start = profile.logon_base + rng.normal(0, profile.jitter)
        end = profile.logoff_base + rng.normal(0, profile.jitter)
        session(profile.pc, start, end)

        if profile.shared_pcs and rng.random() < 0.1:
            t = rng.uniform(720, 900)
            session(str(rng.choice(profile.shared_pcs)), t, t + rng.uniform(10, 60))

        after_hours = profile.scenarios.get(ScenarioKind.AFTER_HOURS_LOGON)
        if after_hours and rng.random() < after_hours.rate:
            t = rng.uniform(1320, 1380)
            session(profile.pc, t, min(t + rng.uniform(15, 55) * after_hours.intensity, 1439))

        hopper = profile.scenarios.get(ScenarioKind.DEVICE_HOPPER)
        if hopper and rng.random() < hopper.rate:
            for pc in rng.choice(profile.hop_pcs, size=min(3, len(profile.hop_pcs)), replace=False):
                t = rng.uniform(600, 960)
                session(str(pc), t, t + rng.uniform(5, 30))

        mass_copy = profile.scenarios.get(ScenarioKind.USB_MASS_COPY)
        if mass_copy and rng.random() < mass_copy.rate:
            self._usb_session(events, profile, day, rng.uniform(1140, 1290),
                              int(rng.poisson(40 * mass_copy.intensity)) + 20)
        elif profile.uses_usb and rng.random() < 0.15:
            self._usb_session(events, profile, day, rng.uniform(start + 30, max(start + 31, end - 90)),
                              int(rng.poisson(1.5)) + 1)

        for _ in range(int(rng.poisson(profile.visits_per_day))):
            t = rng.uniform(start, max(end, start + 1))
            url = profile.url_pool[int(rng.integers(len(profile.url_pool)))]
            events[FileKind.HTTP].append(HttpEvent(_minutes_to_time(day, t), user, DeviceId(profile.pc), url, ''))
        return events

    def _usb_session(self, events: Dict[FileKind, List], profile: _UserProfile, day: date, insert_at: float,
                     copies: int) -> None:
        rng = self.rng
        user, pc = UserId(profile.user), DeviceId(profile.pc)
        remove_at = min(insert_at + rng.uniform(5, 60), 1439)
        events[FileKind.DEVICE].append(DeviceEvent(_minutes_to_time(day, insert_at), user, pc,
                                                   DeviceActivity.INSERT))
        events[FileKind.DEVICE].append(DeviceEvent(_minutes_to_time(day, remove_at), user, pc,
                                                   DeviceActivity.REMOVE))
        for i in range(copies):
            t = rng.uniform(insert_at, remove_at)
            events[FileKind.FILE].append(FileEvent(_minutes_to_time(day, t), user, pc,
                                                   f"{profile.user}_{day:%Y%m%d}_{i}.doc", ''))

    def _psychometric(self, profile: _UserProfile, index: int) -> PsychometricRecord:
        scores = np.clip(np.round(30 + 7 * profile.traits), 10, 50)
        return PsychometricRecord(UserId(profile.user), *[float(v) for v in scores], employee_name=f"Employee {index}")

    def generate(self, out_dir: str) -> GeneratedCorpus:
        """写出 logon/device/file/http/psychometric/roster 六个CSV和 ground_truth.csv"""
        os.makedirs(out_dir, exist_ok=True)
        paths = {kind.value: os.path.join(out_dir, f"{kind.value}.csv") for kind in FileKind}
        emitted: Counter = Counter()

        with open(paths['roster'], 'w', encoding='utf-8', newline='') as f:
            writer = CertCsvWriter(FileKind.ROSTER, f)
            for user in self.users:
                writer.write(RosterRecord(UserId(user), FUNCTIONAL_UNIT, self.department,
                                          str(self.rng.choice(_ROLES))))
            emitted['roster'] = writer.count

        with open(paths['psychometric'], 'w', encoding='utf-8', newline='') as f:
            writer = CertCsvWriter(FileKind.PSYCHOMETRIC, f)
            for index, profile in enumerate(self.profiles):
                writer.write(self._psychometric(profile, index))
            emitted['psychometric'] = writer.count

        event_kinds = (FileKind.LOGON, FileKind.DEVICE, FileKind.FILE, FileKind.HTTP)
        handles = {kind: open(paths[kind.value], 'w', encoding='utf-8', newline='') for kind in event_kinds}
        try:
            writers = {kind: CertCsvWriter(kind, handles[kind], self.timestamp_format, id_prefix=kind.value[0].upper())
                       for kind in event_kinds}
            for offset in range(self.n_days):
                day = START_DATE + timedelta(days=offset)
                if day.weekday() >= 5:
                    continue
                batch: Dict[FileKind, List] = {kind: [] for kind in event_kinds}
                for profile in self.profiles:
                    if self.rng.random() < 0.05:
                        continue
                    for kind, records in self._day_events(profile, day).items():
                        batch[kind].extend(records)
                # 同一天内按时间排序，保证文件内时间单调不减
                for kind in event_kinds:
                    for record in sorted(batch[kind], key=lambda r: (r.timestamp, r.user)):
                        writers[kind].write(record)
            for kind in event_kinds:
                emitted[kind.value] = writers[kind].count
        finally:
            for handle in handles.values():
                handle.close()

        truth = GroundTruth([(spec.user, spec.kind.value) for spec in self.scenarios])
        truth_path = os.path.join(out_dir, 'ground_truth.csv')
        truth.to_frame().to_csv(truth_path, index=False)
        paths['ground_truth'] = truth_path

        self.logger.info(f"合成语料已生成: {out_dir}, 用户 {self.n_users} 个, {self.n_days} 天, "
                         f"植入 {len(truth.pairs)} 个场景, 记录数 {dict(emitted)}")
        return GeneratedCorpus(out_dir, paths, truth, list(self.users), self.department, emitted)


def generate_corpus(n_users: int, n_days: int, scenarios: Iterable[ScenarioSpec], seed: int, out_dir: str,
                    **kwargs) -> GeneratedCorpus:
    """生成合成语料的便捷函数"""
    return CorpusGenerator(n_users, n_days, list(scenarios), seed, **kwargs).generate(out_dir)


def parse_scenario(text: str) -> ScenarioSpec:
    """解析命令行场景参数 KIND[:USER[:INTENSITY]]"""
    parts = text.split(':')
    kind = ScenarioKind(parts[0])
    user = parts[1] if len(parts) > 1 and parts[1] else None
    intensity = float(parts[2]) if len(parts) > 2 else 1.0
    return ScenarioSpec(kind, user, intensity)

import csv
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from typing import (BinaryIO, Callable, Dict, Iterable, Iterator, List, Mapping, Optional, TextIO,
                    Tuple, Union)

import numpy as np
import pandas as pd
from pandas.errors import EmptyDataError, ParserError

from src.ingest.records import (DeviceActivity, DeviceEvent, DeviceId, FileEvent, FileKind, HttpEvent,
                                IngestStats, LogonActivity, LogonEvent, PsychometricRecord, RosterRecord,
                                UserId, AnyRecord)
from src.utils.exceptions import RowRejected, SchemaError
from src.utils.logger import get_logger

# 各文件的列顺序，多出的尾部列忽略
SCHEMAS: Dict[FileKind, List[str]] = {
    FileKind.LOGON: ['id', 'date', 'user', 'pc', 'activity'],
    FileKind.DEVICE: ['id', 'date', 'user', 'pc', 'activity'],
    FileKind.FILE: ['id', 'date', 'user', 'pc', 'filename', 'content'],
    FileKind.HTTP: ['id', 'date', 'user', 'pc', 'url', 'content'],
    FileKind.PSYCHOMETRIC: ['employee_name', 'user_id', 'o', 'c', 'e', 'a', 'n'],
    FileKind.ROSTER: ['user_id', 'functional_unit', 'department', 'role'],
}

# content 列可以缺省
OPTIONAL_TRAILING = {FileKind.FILE: 1, FileKind.HTTP: 1}

# CERT LDAP 导出的人员表，按列名取值
LDAP_REQUIRED = ('user_id', 'role', 'functional_unit', 'department')

US_FORMAT = '%m/%d/%Y %H:%M:%S'
ISO_FORMAT = '%Y-%m-%dT%H:%M:%S'
TIMESTAMP_FORMATS = {'us': US_FORMAT, 'iso': ISO_FORMAT}

CHUNK_SIZE = 50_000

_US_PATTERN = re.compile(r'^\d{2}/\d{2}/\d{4} \d{2}:\d{2}:\d{2}$')
_ISO_PATTERN = re.compile(r'^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}$')

_LOGON_TOKENS = {'logon': LogonActivity.LOGON, 'logoff': LogonActivity.LOGOFF}
_DEVICE_TOKENS = {
    'insert': DeviceActivity.INSERT,
    'remove': DeviceActivity.REMOVE,
    'connect': DeviceActivity.INSERT,
    'disconnect': DeviceActivity.REMOVE,
}


def detect_timestamp_format(text: str) -> Optional[str]:
    """根据样本判断时间格式，无法识别时返回None"""
    text = text.strip()
    if _US_PATTERN.match(text):
        return 'us'
    if _ISO_PATTERN.match(text):
        return 'iso'
    return None


def format_timestamp(value: datetime, timestamp_format: str = 'us') -> str:
    return value.strftime(US_FORMAT if timestamp_format == 'us' else ISO_FORMAT)


@dataclass
class FilterStats:
    """部门过滤计数"""
    kept: int = 0
    dropped: int = 0
    unknown_users: Counter = field(default_factory=Counter)

    @property
    def unknown_total(self) -> int:
        return sum(self.unknown_users.values())

    def to_dict(self) -> dict:
        return {
            'kept': self.kept,
            'dropped': self.dropped,
            'unknown_records': self.unknown_total,
            'unknown_users': len(self.unknown_users),
        }


class CertCsvParser:
    """CERT格式CSV的流式解析器

    用 pandas 分块读取，逐块校验并产出类型化记录，内存只随块大小增长。
    畸形行计数后跳过，strict 模式下第一条畸形行即抛出 SchemaError。
    """

    def __init__(self, file_kind: Union[FileKind, str], source: Union[BinaryIO, TextIO, str],
                 strict: bool = False, timestamp_format: str = 'auto', chunk_size: int = CHUNK_SIZE):
        """初始化解析器

        Args:
            file_kind: 文件类型
            source: 文件路径、二进制或文本流，首行必须是表头
            strict: 严格模式
            timestamp_format: auto / us / iso
            chunk_size: 每块读取的行数
        """
        self.file_kind = FileKind(file_kind)
        self.strict = strict
        if timestamp_format not in ('auto', 'us', 'iso'):
            raise ValueError(f"未知时间格式: {timestamp_format}")
        self.timestamp_format = timestamp_format
        self.stats = IngestStats(self.file_kind.value)
        self.logger = get_logger()

        self._columns: Dict[str, int] = {}
        self._seen_users: set = set()
        self._line = 1
        self._ts_format: Optional[str] = None if timestamp_format == 'auto' else timestamp_format

        try:
            # usecols 使多出的尾部列被忽略而不是报错，缺少的列补 NaN
            self._chunks = pd.read_csv(source, header=None, dtype=str, keep_default_na=False, na_values=[],
                                       usecols=lambda column: True, skip_blank_lines=True,
                                       encoding='utf-8', encoding_errors='replace', chunksize=chunk_size)
            first = next(self._chunks)
        except (EmptyDataError, StopIteration):
            raise SchemaError("缺少表头", self.file_kind.value)
        except ParserError as e:
            raise SchemaError(f"CSV格式错误: {e}", self.file_kind.value)

        self._read_header([str(value) for value in first.iloc[0].fillna('')])
        self._pending: Optional[pd.DataFrame] = first.iloc[1:]

    def _read_header(self, header: List[str]) -> None:
        names = [column.strip().lower() for column in header]
        expected = SCHEMAS[self.file_kind]

        if self.file_kind == FileKind.ROSTER and names[:len(expected)] != expected:
            if all(column in names for column in LDAP_REQUIRED):
                self._columns = {column: names.index(column) for column in LDAP_REQUIRED}
                self.logger.debug("检测到LDAP格式的人员表")
                return

        if names[:len(expected)] != expected:
            raise SchemaError(f"表头不匹配，期望以 {','.join(expected)} 开头，实际为 {','.join(header)}",
                              self.file_kind.value, 1)
        self._columns = {column: index for index, column in enumerate(expected)}

    def _iter_chunks(self) -> Iterator[pd.DataFrame]:
        if self._pending is not None:
            pending, self._pending = self._pending, None
            yield pending
        try:
            yield from self._chunks
        except ParserError as e:
            raise SchemaError(f"CSV格式错误: {e}", self.file_kind.value, self._line)

    def __iter__(self) -> Iterator[AnyRecord]:
        for chunk in self._iter_chunks():
            chunk = chunk[~_blank_rows(chunk)]
            if chunk.empty:
                continue
            reasons, fields = self._validate(chunk)
            for position, reason in enumerate(reasons):
                self._line += 1
                self.stats.read += 1
                try:
                    if reason is not None:
                        raise RowRejected(reason)
                    record = self._build(fields, position)
                except RowRejected as rejection:
                    self.stats.rejected[rejection.reason] += 1
                    if self.strict:
                        raise SchemaError(f"行被拒绝 ({rejection})", self.file_kind.value, self._line)
                    self.logger.debug(f"[{self.file_kind.value}:{self._line}] 跳过畸形行: {rejection}")
                    continue
                self.stats.accepted += 1
                self.stats.accepted_by_user[record.user] += 1
                yield record

        if self.stats.rejected_total:
            self.logger.warning(f"[{self.file_kind.value}] 共拒绝 {self.stats.rejected_total} 行: "
                                f"{dict(self.stats.rejected)}")

    def _validate(self, chunk: pd.DataFrame) -> Tuple[List[Optional[str]], Dict[str, list]]:
        """整块校验，返回每行的拒绝原因(按优先级取第一个)和转换后的列"""
        kind = self.file_kind
        reasons = pd.Series(None, index=chunk.index, dtype=object)

        def reject(mask: pd.Series, reason: str) -> None:
            reasons[mask & reasons.isna()] = reason

        def column(name: str) -> pd.Series:
            index = self._columns[name]
            if index not in chunk.columns:
                return pd.Series(np.nan, index=chunk.index, dtype=object)
            return chunk[index]

        required = [name for name in self._columns
                    if not (name == 'content' and kind in OPTIONAL_TRAILING)]
        reject(pd.concat([column(name).isna() for name in required], axis=1).any(axis=1), 'missing-field')
        reject(chunk.apply(lambda values: values.str.contains('\ufffd', regex=False, na=False)).any(axis=1),
               'bad-encoding')

        fields: Dict[str, list] = {}
        if kind in (FileKind.LOGON, FileKind.DEVICE, FileKind.FILE, FileKind.HTTP):
            stamps = self._timestamps(column('date').fillna('').str.strip())
            reject(stamps.isna(), 'bad-timestamp')
            fields['timestamp'] = stamps.to_numpy(dtype='datetime64[ns]').astype('datetime64[us]').astype(object)

        user = column('user_id' if kind in (FileKind.PSYCHOMETRIC, FileKind.ROSTER) else 'user')
        fields['user'] = self._required(user, 'empty-user', reject)

        if kind in (FileKind.LOGON, FileKind.DEVICE, FileKind.FILE, FileKind.HTTP):
            fields['pc'] = self._required(column('pc'), 'empty-pc', reject)

        if kind in (FileKind.LOGON, FileKind.DEVICE):
            tokens = _LOGON_TOKENS if kind == FileKind.LOGON else _DEVICE_TOKENS
            activity = column('activity').fillna('').str.strip().str.lower().map(tokens)
            reject(activity.isna(), 'bad-activity')
            fields['activity'] = activity.tolist()
        elif kind in (FileKind.FILE, FileKind.HTTP):
            target = 'filename' if kind == FileKind.FILE else 'url'
            fields[target] = self._required(column(target), f'empty-{target}', reject)
            fields['content'] = column('content').fillna('').tolist()
        elif kind == FileKind.PSYCHOMETRIC:
            scores = pd.concat([pd.to_numeric(column(name).fillna('').str.strip(), errors='coerce')
                                for name in ('o', 'c', 'e', 'a', 'n')], axis=1).astype(float)
            reject(~np.isfinite(scores).all(axis=1), 'bad-score')
            fields['scores'] = scores.values.tolist()
            fields['employee_name'] = column('employee_name').fillna('').str.strip().tolist()
        else:
            for name in ('functional_unit', 'department', 'role'):
                fields[name] = column(name).fillna('').str.strip().tolist()

        return reasons.tolist(), fields

    @staticmethod
    def _required(values: pd.Series, reason: str, reject: Callable[[pd.Series, str], None]) -> list:
        stripped = values.fillna('').str.strip()
        reject(stripped == '', reason)
        return stripped.tolist()

    def _timestamps(self, text: pd.Series) -> pd.Series:
        if self._ts_format is None:
            detected = text.map(detect_timestamp_format).dropna()
            if detected.empty:
                return pd.Series(pd.NaT, index=text.index, dtype='datetime64[ns]')
            self._ts_format = detected.iloc[0]
            self.logger.debug(f"[{self.file_kind.value}] 时间格式识别为 {self._ts_format}")
        return pd.to_datetime(text, format=TIMESTAMP_FORMATS[self._ts_format], errors='coerce')

    def _build(self, fields: Dict[str, list], position: int) -> AnyRecord:
        kind = self.file_kind
        user = UserId(fields['user'][position])
        if kind in (FileKind.LOGON, FileKind.DEVICE, FileKind.FILE, FileKind.HTTP):
            timestamp = fields['timestamp'][position]
            pc = DeviceId(fields['pc'][position])
            if kind == FileKind.LOGON:
                return LogonEvent(timestamp, user, pc, fields['activity'][position])
            if kind == FileKind.DEVICE:
                return DeviceEvent(timestamp, user, pc, fields['activity'][position])
            if kind == FileKind.FILE:
                return FileEvent(timestamp, user, pc, fields['filename'][position], fields['content'][position])
            return HttpEvent(timestamp, user, pc, fields['url'][position], fields['content'][position])

        # 人员表和心理测评表每个用户只允许一条
        if user in self._seen_users:
            raise RowRejected('duplicate-user', user)
        self._seen_users.add(user)
        if kind == FileKind.PSYCHOMETRIC:
            return PsychometricRecord(user, *fields['scores'][position],
                                      employee_name=fields['employee_name'][position])
        return RosterRecord(user, fields['functional_unit'][position], fields['department'][position],
                            fields['role'][position])


def _blank_rows(chunk: pd.DataFrame) -> pd.Series:
    """只有一个空白字段的行视为空行"""
    rest_missing = chunk.iloc[:, 1:].isna().all(axis=1)
    return rest_missing & (chunk.iloc[:, 0].fillna('').str.strip() == '')


def parse_events(file_kind: Union[FileKind, str], source: Union[BinaryIO, TextIO, str],
                 strict: bool = False, timestamp_format: str = 'auto') -> CertCsvParser:
    """解析一个CERT格式CSV流

    Args:
        file_kind: logon / device / file / http / psychometric / roster
        source: 带表头的CSV字节流
        strict: 严格模式，畸形行直接报错
        timestamp_format: auto / us / iso

    Returns:
        可迭代的解析器，迭代完成后 parser.stats 即为 IngestStats
    """
    return CertCsvParser(file_kind, source, strict=strict, timestamp_format=timestamp_format)


def iter_file(file_kind: Union[FileKind, str], path: str, strict: bool = False,
              timestamp_format: str = 'auto', stats_sink: Optional[Dict[str, IngestStats]] = None
              ) -> Iterator[AnyRecord]:
    """打开文件并流式产出记录，结束后把统计写入 stats_sink[file_kind]"""
    with open(path, 'rb') as source:
        parser = parse_events(file_kind, source, strict=strict, timestamp_format=timestamp_format)
        yield from parser
        if stats_sink is not None:
            stats_sink[parser.stats.file_kind] = parser.stats


def load_roster(path: str, strict: bool = False) -> Dict[UserId, RosterRecord]:
    """读取人员表，返回 user -> RosterRecord"""
    return {record.user: record for record in iter_file(FileKind.ROSTER, path, strict=strict)}


def filter_by_department(records: Iterable[AnyRecord], roster: Mapping[UserId, RosterRecord],
                         department: Optional[str], stats: Optional[FilterStats] = None
                         ) -> Iterator[AnyRecord]:
    """只保留属于指定部门的用户的记录，保持原有顺序

    Args:
        records: 任意类型记录流
        roster: 人员表
        department: 部门名；为空时不过滤
        stats: 可选的过滤计数，未知用户被丢弃并计数

    Returns:
        过滤后的记录流
    """
    stats = stats if stats is not None else FilterStats()
    for record in records:
        member = roster.get(record.user)
        if member is None:
            stats.unknown_users[record.user] += 1
            stats.dropped += 1
            continue
        if department and member.department != department:
            stats.dropped += 1
            continue
        stats.kept += 1
        yield record


def department_members(roster: Mapping[UserId, RosterRecord], department: Optional[str]) -> List[UserId]:
    """部门成员，按用户ID排序；department为空时返回全部用户"""
    return sorted(user for user, record in roster.items() if not department or record.department == department)


def corpus_summary(stats_by_kind: Mapping[str, IngestStats],
                   roster: Optional[Mapping[UserId, RosterRecord]] = None) -> pd.DataFrame:
    """按 (部门, 文件类型) 汇总已接受的记录数

    Args:
        stats_by_kind: 各文件的 IngestStats
        roster: 人员表；缺省时所有用户归入部门 "ALL"

    Returns:
        列为 functional_unit, department, file_kind, records 的长表
    """
    kinds = [kind.value for kind in FileKind if kind != FileKind.ROSTER]
    units: Dict[str, str] = {}
    counts: Dict[tuple, int] = {}

    def locate(user: str) -> Optional[str]:
        if roster is None:
            units.setdefault('ALL', '')
            return 'ALL'
        member = roster.get(user)
        if member is None:
            return None
        units.setdefault(member.department, member.functional_unit)
        return member.department

    if roster is not None:
        for member in roster.values():
            units.setdefault(member.department, member.functional_unit)

    for kind in kinds:
        stats = stats_by_kind.get(kind)
        if stats is None:
            continue
        for user, count in stats.accepted_by_user.items():
            department = locate(user)
            if department is not None:
                counts[(department, kind)] = counts.get((department, kind), 0) + count

    if not units:
        units['ALL'] = ''

    rows = [{'functional_unit': units[department], 'department': department, 'file_kind': kind,
             'records': counts.get((department, kind), 0)}
            for department in sorted(units) for kind in kinds]
    return pd.DataFrame(rows, columns=['functional_unit', 'department', 'file_kind', 'records'])


def summary_table(summary: pd.DataFrame, roster: Optional[Mapping[UserId, RosterRecord]] = None) -> pd.DataFrame:
    """把长表转成每部门一行的宽表，附用户数"""
    wide = summary.pivot_table(index=['functional_unit', 'department'], columns='file_kind',
                               values='records', aggfunc='sum', fill_value=0).reset_index()
    wide.columns.name = None
    if roster is not None:
        sizes = Counter(member.department for member in roster.values())
        wide.insert(2, 'users', wide['department'].map(lambda name: sizes.get(name, 0)))
    return wide


class CertCsvWriter:
    """按解析器同一模式逐条写出记录，首行写表头"""

    def __init__(self, file_kind: Union[FileKind, str], sink: TextIO, timestamp_format: str = 'us',
                 id_prefix: str = ''):
        """初始化

        Args:
            file_kind: 文件类型
            sink: 文本流，需以 newline='' 打开
            timestamp_format: us / iso
            id_prefix: 首列id的前缀
        """
        self.file_kind = FileKind(file_kind)
        self.timestamp_format = timestamp_format
        self.id_prefix = id_prefix
        self.count = 0
        self._writer = csv.writer(sink, lineterminator='\n')
        if self.file_kind == FileKind.PSYCHOMETRIC:
            self._writer.writerow(['employee_name', 'user_id', 'O', 'C', 'E', 'A', 'N'])
        else:
            self._writer.writerow(SCHEMAS[self.file_kind])

    def write(self, record: AnyRecord) -> None:
        kind = self.file_kind
        if kind == FileKind.PSYCHOMETRIC:
            row = [record.employee_name, record.user, *[_format_score(v) for v in record.scores()]]
        elif kind == FileKind.ROSTER:
            row = [record.user, record.functional_unit, record.department, record.role]
        else:
            row = [f"{{{self.id_prefix}{self.count:08d}}}",
                   format_timestamp(record.timestamp, self.timestamp_format), record.user, record.pc]
            if kind in (FileKind.LOGON, FileKind.DEVICE):
                row.append(record.activity.value)
            elif kind == FileKind.FILE:
                row.extend([record.filename, record.content])
            else:
                row.extend([record.url, record.content])
        self._writer.writerow(row)
        self.count += 1


def write_events(file_kind: Union[FileKind, str], records: Iterable[AnyRecord], sink: TextIO,
                 timestamp_format: str = 'us', id_prefix: str = '') -> int:
    """把类型化记录写回CSV，返回写出的行数"""
    writer = CertCsvWriter(file_kind, sink, timestamp_format, id_prefix)
    for record in records:
        writer.write(record)
    return writer.count


def _format_score(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))

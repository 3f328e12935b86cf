import os
import json
import sqlite3
from collections import Counter
from datetime import datetime
from typing import Dict, Iterable, Iterator, List, Optional

from src.ingest.records import (DeviceActivity, DeviceEvent, FileEvent, FileKind, HttpEvent, IngestStats,
                                LogonActivity, LogonEvent, PsychometricRecord, RosterRecord, UserId, DeviceId,
                                AnyRecord)

BATCH_SIZE = 5000

_EVENT_TABLES = {
    FileKind.LOGON: ('logon_events', ('ts', 'user', 'pc', 'activity')),
    FileKind.DEVICE: ('device_events', ('ts', 'user', 'pc', 'activity')),
    FileKind.FILE: ('file_events', ('ts', 'user', 'pc', 'filename', 'content')),
    FileKind.HTTP: ('http_events', ('ts', 'user', 'pc', 'url', 'content')),
}


class Database:
    """SQLite事件库，保存归一化后的记录和解析统计"""

    def __init__(self, db_path: str):
        """初始化数据库连接

        Args:
            db_path: SQLite数据库文件路径
        """
        self.db_path = db_path

        db_dir = os.path.dirname(db_path)
        if db_dir:
            os.makedirs(db_dir, exist_ok=True)

        self.conn = None
        self.connect()
        self.create_tables()

    def connect(self) -> None:
        """连接到SQLite数据库"""
        self.conn = sqlite3.connect(self.db_path)
        self.conn.row_factory = sqlite3.Row

    def close(self) -> None:
        """关闭数据库连接"""
        if self.conn:
            self.conn.close()
            self.conn = None

    def __enter__(self) -> 'Database':
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def create_tables(self) -> None:
        """创建必要的数据库表"""
        cursor = self.conn.cursor()

        for table, _ in (_EVENT_TABLES[FileKind.LOGON], _EVENT_TABLES[FileKind.DEVICE]):
            cursor.execute(f"""
            CREATE TABLE IF NOT EXISTS {table} (
                ts TEXT NOT NULL,
                user TEXT NOT NULL,
                pc TEXT NOT NULL,
                activity TEXT NOT NULL
            )
            """)

        cursor.execute("""
        CREATE TABLE IF NOT EXISTS file_events (
            ts TEXT NOT NULL,
            user TEXT NOT NULL,
            pc TEXT NOT NULL,
            filename TEXT NOT NULL,
            content TEXT
        )
        """)

        cursor.execute("""
        CREATE TABLE IF NOT EXISTS http_events (
            ts TEXT NOT NULL,
            user TEXT NOT NULL,
            pc TEXT NOT NULL,
            url TEXT NOT NULL,
            content TEXT
        )
        """)

        cursor.execute("""
        CREATE TABLE IF NOT EXISTS psychometrics (
            user TEXT PRIMARY KEY,
            employee_name TEXT,
            o REAL NOT NULL, c REAL NOT NULL, e REAL NOT NULL, a REAL NOT NULL, n REAL NOT NULL
        )
        """)

        cursor.execute("""
        CREATE TABLE IF NOT EXISTS roster (
            user TEXT PRIMARY KEY,
            functional_unit TEXT,
            department TEXT,
            role TEXT
        )
        """)

        # 解析统计，reasons/by_user 以JSON保存
        cursor.execute("""
        CREATE TABLE IF NOT EXISTS ingest_stats (
            file_kind TEXT PRIMARY KEY,
            read INTEGER NOT NULL,
            accepted INTEGER NOT NULL,
            reasons TEXT NOT NULL,
            by_user TEXT NOT NULL
        )
        """)

        # 导入来源指纹，用于判断存储是否过期
        cursor.execute("""
        CREATE TABLE IF NOT EXISTS store_meta (
            key TEXT PRIMARY KEY,
            value TEXT NOT NULL
        )
        """)

        for table, _ in _EVENT_TABLES.values():
            cursor.execute(f"CREATE INDEX IF NOT EXISTS idx_{table}_user ON {table} (user)")

        self.conn.commit()

    def clear(self) -> None:
        """清空全部表，重新导入前调用"""
        for table, _ in _EVENT_TABLES.values():
            self.conn.execute(f"DELETE FROM {table}")
        for table in ('psychometrics', 'roster', 'ingest_stats', 'store_meta'):
            self.conn.execute(f"DELETE FROM {table}")
        self.conn.commit()

    def store_records(self, file_kind: FileKind, records: Iterable[AnyRecord]) -> int:
        """分批写入记录，返回写入条数"""
        kind = FileKind(file_kind)
        batch: List[tuple] = []
        total = 0

        if kind == FileKind.PSYCHOMETRIC:
            sql = "INSERT OR REPLACE INTO psychometrics (user, employee_name, o, c, e, a, n) VALUES (?, ?, ?, ?, ?, ?, ?)"
            to_row = lambda r: (r.user, r.employee_name, *r.scores())
        elif kind == FileKind.ROSTER:
            sql = "INSERT OR REPLACE INTO roster (user, functional_unit, department, role) VALUES (?, ?, ?, ?)"
            to_row = lambda r: (r.user, r.functional_unit, r.department, r.role)
        else:
            table, columns = _EVENT_TABLES[kind]
            sql = f"INSERT INTO {table} ({', '.join(columns)}) VALUES ({', '.join('?' * len(columns))})"
            if kind in (FileKind.LOGON, FileKind.DEVICE):
                to_row = lambda r: (r.timestamp.isoformat(), r.user, r.pc, r.activity.value)
            elif kind == FileKind.FILE:
                to_row = lambda r: (r.timestamp.isoformat(), r.user, r.pc, r.filename, r.content)
            else:
                to_row = lambda r: (r.timestamp.isoformat(), r.user, r.pc, r.url, r.content)

        for record in records:
            batch.append(to_row(record))
            if len(batch) >= BATCH_SIZE:
                self.conn.executemany(sql, batch)
                total += len(batch)
                batch.clear()
        if batch:
            self.conn.executemany(sql, batch)
            total += len(batch)
        self.conn.commit()
        return total

    def store_stats(self, stats: IngestStats) -> None:
        self.conn.execute(
            "INSERT OR REPLACE INTO ingest_stats (file_kind, read, accepted, reasons, by_user) VALUES (?, ?, ?, ?, ?)",
            (stats.file_kind, stats.read, stats.accepted, json.dumps(dict(stats.rejected), sort_keys=True),
             json.dumps(dict(stats.accepted_by_user), sort_keys=True)))
        self.conn.commit()

    def get_ingest_stats(self) -> Dict[str, IngestStats]:
        stats = {}
        for row in self.conn.execute("SELECT * FROM ingest_stats ORDER BY file_kind"):
            stats[row['file_kind']] = IngestStats(row['file_kind'], row['read'], row['accepted'],
                                                  Counter(json.loads(row['reasons'])),
                                                  Counter(json.loads(row['by_user'])))
        return stats

    def has_events(self) -> bool:
        row = self.conn.execute("SELECT COUNT(*) AS n FROM ingest_stats").fetchone()
        return row['n'] > 0

    def iter_records(self, file_kind: FileKind) -> Iterator[AnyRecord]:
        """按插入顺序分批读出记录"""
        kind = FileKind(file_kind)

        if kind == FileKind.PSYCHOMETRIC:
            for row in self.conn.execute("SELECT * FROM psychometrics ORDER BY rowid"):
                yield PsychometricRecord(UserId(row['user']), row['o'], row['c'], row['e'], row['a'],
                                         row['n'], employee_name=row['employee_name'] or '')
            return
        if kind == FileKind.ROSTER:
            for row in self.conn.execute("SELECT * FROM roster ORDER BY rowid"):
                yield RosterRecord(UserId(row['user']), row['functional_unit'], row['department'], row['role'])
            return

        table, _ = _EVENT_TABLES[kind]
        cursor = self.conn.execute(f"SELECT * FROM {table} ORDER BY rowid")
        while True:
            rows = cursor.fetchmany(BATCH_SIZE)
            if not rows:
                break
            for row in rows:
                yield self._to_event(kind, row)

    def _to_event(self, kind: FileKind, row: sqlite3.Row) -> AnyRecord:
        timestamp = datetime.fromisoformat(row['ts'])
        user, pc = UserId(row['user']), DeviceId(row['pc'])
        if kind == FileKind.LOGON:
            return LogonEvent(timestamp, user, pc, LogonActivity(row['activity']))
        if kind == FileKind.DEVICE:
            return DeviceEvent(timestamp, user, pc, DeviceActivity(row['activity']))
        if kind == FileKind.FILE:
            return FileEvent(timestamp, user, pc, row['filename'], row['content'] or '')
        return HttpEvent(timestamp, user, pc, row['url'], row['content'] or '')

    def get_roster(self) -> Dict[UserId, RosterRecord]:
        return {record.user: record for record in self.iter_records(FileKind.ROSTER)}

    def set_meta(self, key: str, value: str) -> None:
        self.conn.execute("INSERT OR REPLACE INTO store_meta (key, value) VALUES (?, ?)", (key, value))
        self.conn.commit()

    def get_meta(self, key: str) -> Optional[str]:
        row = self.conn.execute("SELECT value FROM store_meta WHERE key = ?", (key,)).fetchone()
        return row['value'] if row else None

import os
import sys
import tempfile
import unittest
from collections import Counter
from datetime import datetime, timedelta

# 添加项目根目录到Python路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from src.ingest.records import (DeviceActivity, DeviceEvent, FileEvent, FileKind, HttpEvent, IngestStats,
                                LogonActivity, LogonEvent, PsychometricRecord, RosterRecord)
from src.utils import database
from src.utils.database import Database


class TestDatabase(unittest.TestCase):
    """测试事件存储的写入、读回和导入统计"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.db = Database(os.path.join(self.tmp.name, 'events.sqlite'))

    def tearDown(self):
        self.db.close()
        self.tmp.cleanup()

    def test_event_round_trip(self):
        """写入后按插入顺序读回，字段不变"""
        start = datetime(2010, 1, 4, 8, 30, 15)
        logons = [LogonEvent(start + timedelta(minutes=i), 'AAA0001' if i % 2 else 'BBB0002', f'PC-{i:04d}',
                             LogonActivity.LOGOFF if i % 3 else LogonActivity.LOGON) for i in range(12)]
        devices = [DeviceEvent(start, 'AAA0001', 'PC-0001', DeviceActivity.INSERT),
                   DeviceEvent(start + timedelta(hours=1), 'AAA0001', 'PC-0001', DeviceActivity.REMOVE)]
        files = [FileEvent(start, 'AAA0001', 'PC-0001', 'a.doc', 'text'), FileEvent(start, 'BBB0002', 'PC-2', 'b.pdf')]
        urls = [HttpEvent(start, 'BBB0002', 'PC-2', 'http://example.org/x', 'words')]

        for kind, records in ((FileKind.LOGON, logons), (FileKind.DEVICE, devices), (FileKind.FILE, files),
                              (FileKind.HTTP, urls)):
            self.assertEqual(self.db.store_records(kind, records), len(records))
            self.assertEqual(list(self.db.iter_records(kind)), records)

    def test_store_meta(self):
        self.assertIsNone(self.db.get_meta('source'))
        self.db.set_meta('source', '{"logon": "a"}')
        self.db.set_meta('source', '{"logon": "b"}')
        self.assertEqual(self.db.get_meta('source'), '{"logon": "b"}')
        self.db.clear()
        self.assertIsNone(self.db.get_meta('source'))

    def test_batched_insert(self):
        """超过一个批次的数据全部写入"""
        start = datetime(2010, 1, 4)
        count = database.BATCH_SIZE * 2 + 17
        events = (HttpEvent(start, f'U{i % 7}', 'PC-1', f'http://site/{i}') for i in range(count))
        self.assertEqual(self.db.store_records(FileKind.HTTP, events), count)
        self.assertEqual(sum(1 for _ in self.db.iter_records(FileKind.HTTP)), count)

    def test_roster_and_psychometrics(self):
        roster = [RosterRecord('A', 'R&D', 'Engineering', 'Engineer'), RosterRecord('B', 'Sales', 'Retail', 'Rep')]
        scores = [PsychometricRecord('A', 40, 35, 20, 30, 25, employee_name='Ann')]
        self.db.store_records(FileKind.ROSTER, roster)
        self.db.store_records(FileKind.PSYCHOMETRIC, scores)
        self.assertEqual(self.db.get_roster(), {r.user: r for r in roster})
        self.assertEqual(list(self.db.iter_records(FileKind.PSYCHOMETRIC)), scores)

    def test_ingest_stats(self):
        self.assertFalse(self.db.has_events())
        stats = IngestStats('logon', read=10, accepted=8, rejected=Counter({'bad-timestamp': 2}),
                            accepted_by_user=Counter({'A': 5, 'B': 3}))
        self.db.store_stats(stats)
        self.assertTrue(self.db.has_events())
        loaded = self.db.get_ingest_stats()['logon']
        self.assertEqual(loaded, stats)
        self.assertTrue(loaded.is_consistent())

    def test_clear(self):
        self.db.store_records(FileKind.ROSTER, [RosterRecord('A', 'R&D', 'Engineering', 'Engineer')])
        self.db.store_stats(IngestStats('roster', 1, 1))
        self.db.clear()
        self.assertEqual(self.db.get_roster(), {})
        self.assertFalse(self.db.has_events())


if __name__ == '__main__':
    unittest.main()

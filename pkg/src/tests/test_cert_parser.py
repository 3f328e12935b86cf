import io
import os
import sys
import tempfile
import time
import tracemalloc
import unittest
from collections import Counter
from datetime import datetime, timedelta

# 添加项目根目录到Python路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from src.ingest import (CertCsvWriter, DeviceActivity, DeviceEvent, FileEvent, FileKind, FilterStats, HttpEvent,
                        IngestStats, LogonActivity, LogonEvent, PsychometricRecord, RosterRecord, corpus_summary,
                        department_members, filter_by_department, iter_file, load_roster, parse_events, summary_table,
                        write_events)
from src.ingest.cert_parser import CertCsvParser, detect_timestamp_format
from src.utils.exceptions import SchemaError

SLOW = os.environ.get('INSIDER_GRAPH_SLOW_TESTS') == '1'


def _stream(text: str) -> io.BytesIO:
    return io.BytesIO(text.encode('utf-8'))


LOGON_CSV = """id,date,user,pc,activity
{A1},01/04/2010 08:12:00,AAA0001,PC-0001,Logon
{A2},01/04/2010 17:30:45,AAA0001,PC-0001,Logoff
{A3},01/04/2010 09:00:00,BBB0002,PC-0002,Logon
"""


class TestCertParser(unittest.TestCase):
    """测试CERT格式CSV的解析、拒绝计数和部门过滤"""

    def test_logon_rows(self):
        parser = parse_events('logon', _stream(LOGON_CSV))
        events = list(parser)
        self.assertEqual(len(events), 3)
        self.assertEqual(events[1], LogonEvent(datetime(2010, 1, 4, 17, 30, 45), 'AAA0001', 'PC-0001',
                                               LogonActivity.LOGOFF))
        self.assertEqual(parser.stats.read, 3)
        self.assertEqual(parser.stats.accepted, 3)
        self.assertEqual(parser.stats.accepted_by_user, Counter({'AAA0001': 2, 'BBB0002': 1}))

    def test_iso_timestamps(self):
        text = "id,date,user,pc,activity\n{1},2010-01-04T08:12:00,AAA0001,PC-1,Logon\n"
        event = next(iter(parse_events('logon', _stream(text))))
        self.assertEqual(event.timestamp, datetime(2010, 1, 4, 8, 12, 0))
        self.assertEqual(detect_timestamp_format('2010-01-04T08:12:00'), 'iso')
        self.assertEqual(detect_timestamp_format('01/04/2010 08:12:00'), 'us')
        self.assertIsNone(detect_timestamp_format('yesterday'))

    def test_malformed_rows_are_counted(self):
        """畸形行被跳过并按原因计数，read = accepted + rejected"""
        text = ("id,date,user,pc,activity\n"
                "{1},01/04/2010 08:12:00,AAA0001,PC-1,Logon\n"
                "{2},13/45/2010 08:12:00,AAA0001,PC-1,Logon\n"
                "{3},01/04/2010 08:12:00,AAA0001,PC-1,Reboot\n"
                "{4},01/04/2010 08:12:00,,PC-1,Logon\n"
                "{5},01/04/2010 08:12:00,AAA0001\n"
                "{6},01/04/2010 08:12:00,AAA0001,,Logoff\n")
        parser = parse_events('logon', _stream(text))
        events = list(parser)
        self.assertEqual(len(events), 1)
        self.assertEqual(parser.stats.rejected, Counter({'bad-timestamp': 1, 'bad-activity': 1, 'empty-user': 1,
                                                         'missing-field': 1, 'empty-pc': 1}))
        self.assertTrue(parser.stats.is_consistent())

    def test_strict_mode(self):
        text = "id,date,user,pc,activity\n{1},not a date,AAA0001,PC-1,Logon\n"
        with self.assertRaises(SchemaError) as ctx:
            list(parse_events('logon', _stream(text), strict=True))
        self.assertEqual(ctx.exception.line, 2)

    def test_bad_header(self):
        with self.assertRaises(SchemaError):
            parse_events('logon', _stream("when,who,where\n"))
        with self.assertRaises(SchemaError):
            parse_events('http', _stream(""))

    def test_invalid_utf8_row(self):
        """无法解码的字节只拒绝所在行"""
        raw = (b"id,date,user,pc,url,content\n"
               b"{1},01/04/2010 10:00:00,A,PC-1,http://a.org/x,ok\n"
               b"{2},01/04/2010 10:01:00,A,PC-1,http://b.org/\xff\xfe,bad\n"
               b"{3},01/04/2010 10:02:00,B,PC-2,http://c.org/z,ok\n")
        parser = parse_events('http', io.BytesIO(raw))
        events = list(parser)
        self.assertEqual([e.url for e in events], ['http://a.org/x', 'http://c.org/z'])
        self.assertEqual(parser.stats.rejected, Counter({'bad-encoding': 1}))
        self.assertTrue(parser.stats.is_consistent())

        with self.assertRaises(SchemaError) as ctx:
            list(parse_events('http', io.BytesIO(raw), strict=True))
        self.assertEqual(ctx.exception.line, 3)

    def test_non_finite_scores(self):
        text = ("employee_name,user_id,O,C,E,A,N\nAnn,AAA0001,nan,35,20,30,25\n"
                "Bob,BBB0002,40,inf,20,30,25\nCid,CCC0003,40,35,-inf,30,25\nDee,DDD0004,40,35,20,30,\n"
                "Eve,EEE0005,40.5,35,20,30,25\n")
        parser = parse_events('psychometric', _stream(text))
        records = list(parser)
        self.assertEqual([r.user for r in records], ['EEE0005'])
        self.assertEqual(records[0].openness, 40.5)
        self.assertEqual(parser.stats.rejected, Counter({'bad-score': 4}))

    def test_extra_trailing_columns(self):
        text = ("id,date,user,pc,activity\n{1},01/04/2010 08:12:00,A,PC-1,Logon,extra,more\n"
                "{2},01/04/2010 08:13:00,A,PC-1,Logoff\n")
        parser = parse_events('logon', _stream(text))
        self.assertEqual(len(list(parser)), 2)
        self.assertEqual(parser.stats.rejected_total, 0)

    def test_small_chunks(self):
        """分块边界不影响结果与行号"""
        text = "id,date,user,pc,activity\n" + "".join(
            f"{{{i}}},01/04/2010 08:{i:02d}:00,U{i % 3},PC-{i},Logon\n" for i in range(7)) + \
            "{7},bad,U1,PC-7,Logon\n"
        whole = list(parse_events('logon', _stream(text)))
        parser = CertCsvParser('logon', _stream(text), chunk_size=2)
        self.assertEqual(list(parser), whole)
        self.assertEqual((parser.stats.read, parser.stats.accepted), (8, 7))
        with self.assertRaises(SchemaError) as ctx:
            list(CertCsvParser('logon', _stream(text), strict=True, chunk_size=3))
        self.assertEqual(ctx.exception.line, 9)

    def test_device_tokens(self):
        text = ("id,date,user,pc,activity\n{1},01/04/2010 10:00:00,A,PC-1,Connect\n"
                "{2},01/04/2010 10:30:00,A,PC-1,Disconnect\n")
        events = list(parse_events('device', _stream(text)))
        self.assertEqual([e.activity for e in events], [DeviceActivity.INSERT, DeviceActivity.REMOVE])

    def test_optional_content_and_quoted_fields(self):
        text = ('id,date,user,pc,url,content\n'
                '{1},01/04/2010 10:00:00,A,PC-1,http://a.org/x\n'
                '{2},01/04/2010 10:01:00,A,PC-1,http://b.org/y,"words, with commas"\n')
        events = list(parse_events('http', _stream(text)))
        self.assertEqual([e.content for e in events], ['', 'words, with commas'])

    def test_psychometric_and_duplicates(self):
        text = ("employee_name,user_id,O,C,E,A,N\nAnn,AAA0001,40,35,20,30,25\n"
                "Ann again,AAA0001,1,2,3,4,5\nBob,BBB0002,x,1,1,1,1\n")
        parser = parse_events('psychometric', _stream(text))
        records = list(parser)
        self.assertEqual(len(records), 1)
        self.assertEqual(records[0].scores(), (40.0, 35.0, 20.0, 30.0, 25.0))
        self.assertEqual(parser.stats.rejected, Counter({'duplicate-user': 1, 'bad-score': 1}))

    def test_ldap_roster(self):
        """LDAP导出格式的人员表按表头识别"""
        text = ("employee_name,user_id,email,role,business_unit,functional_unit,department,team,supervisor\n"
                "Ann,AAA0001,ann@x.com,Engineer,1,R&D,Engineering,T1,Bob\n")
        records = list(parse_events('roster', _stream(text)))
        self.assertEqual(records, [RosterRecord('AAA0001', 'R&D', 'Engineering', 'Engineer')])

    def test_department_filter(self):
        roster = {'A': RosterRecord('A', 'R&D', 'Engineering', 'x'), 'B': RosterRecord('B', 'Sales', 'Retail', 'y')}
        events = list(parse_events('logon', _stream(
            "id,date,user,pc,activity\n{1},01/04/2010 08:00:00,A,PC-1,Logon\n"
            "{2},01/04/2010 08:00:00,B,PC-2,Logon\n{3},01/04/2010 08:00:00,Z,PC-3,Logon\n"
            "{4},01/04/2010 18:00:00,A,PC-1,Logoff\n")))
        stats = FilterStats()
        kept = list(filter_by_department(events, roster, 'Engineering', stats))
        self.assertEqual([e.user for e in kept], ['A', 'A'])
        self.assertEqual((stats.kept, stats.dropped, stats.unknown_total), (2, 2, 1))
        self.assertEqual(len(list(filter_by_department(events, roster, ''))), 3)
        self.assertEqual(list(filter_by_department(events, roster, 'Nowhere')), [])
        self.assertEqual(department_members(roster, 'Retail'), ['B'])
        self.assertEqual(department_members(roster, ''), ['A', 'B'])

    def test_corpus_summary(self):
        roster = {'A': RosterRecord('A', 'R&D', 'Engineering', 'x'), 'B': RosterRecord('B', 'Sales', 'Retail', 'y')}
        stats = {'logon': IngestStats('logon', 4, 4, accepted_by_user=Counter({'A': 3, 'B': 1})),
                 'http': IngestStats('http', 2, 2, accepted_by_user=Counter({'A': 2}))}
        summary = corpus_summary(stats, roster)
        row = summary[(summary.department == 'Engineering') & (summary.file_kind == 'logon')]
        self.assertEqual(int(row.records.iloc[0]), 3)
        wide = summary_table(summary, roster)
        self.assertEqual(list(wide.department), ['Engineering', 'Retail'])
        self.assertEqual(int(wide.set_index('department').at['Retail', 'users']), 1)

        unlabeled = corpus_summary(stats)
        self.assertEqual(set(unlabeled.department), {'ALL'})
        self.assertEqual(int(unlabeled[unlabeled.file_kind == 'logon'].records.iloc[0]), 4)
        self.assertEqual(set(corpus_summary({}).department), {'ALL'})

    def test_writer_round_trip(self):
        """写出的CSV重新解析后记录不变"""
        events = list(parse_events('logon', _stream(LOGON_CSV)))
        for fmt in ('us', 'iso'):
            sink = io.StringIO()
            self.assertEqual(write_events('logon', events, sink, timestamp_format=fmt, id_prefix='L'), 3)
            again = list(parse_events('logon', io.StringIO(sink.getvalue())))
            self.assertEqual(again, events)

    def test_round_trip_all_kinds(self):
        """每种文件写出后重新解析，记录逐字段一致"""
        stamp = datetime(2010, 3, 5, 23, 59, 1)
        samples = {
            'device': [DeviceEvent(stamp, 'A', 'PC-1', DeviceActivity.INSERT),
                       DeviceEvent(stamp + timedelta(minutes=5), 'A', 'PC-1', DeviceActivity.REMOVE)],
            'file': [FileEvent(stamp, 'A', 'PC-1', 'R:\\a\\b.doc', 'quoted, "text"'),
                     FileEvent(stamp, 'B', 'PC-2', 'C:\\x.exe', '')],
            'http': [HttpEvent(stamp, 'A', 'PC-1', 'http://a.org/q?x=1,2', 'word word'),
                     HttpEvent(stamp, 'B', 'PC-2', 'http://b.org/', '')],
            'psychometric': [PsychometricRecord('A', 40.0, 35.0, 20.0, 30.0, 25.0, employee_name='Ann Lee'),
                             PsychometricRecord('B', 12.5, 0.0, 50.0, 1.0, 49.75, employee_name='Bo')],
            'roster': [RosterRecord('A', 'R&D', 'Engineering', 'Engineer'),
                       RosterRecord('B', 'Sales', 'Retail, East', 'Manager')],
        }
        for kind, records in samples.items():
            for fmt in ('us', 'iso'):
                with self.subTest(kind=kind, fmt=fmt):
                    sink = io.StringIO()
                    write_events(kind, records, sink, timestamp_format=fmt)
                    parser = parse_events(kind, _stream(sink.getvalue()))
                    self.assertEqual(list(parser), records)
                    self.assertEqual(parser.stats.rejected_total, 0)

    def test_iter_file_and_roster(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'roster.csv')
            with open(path, 'w', encoding='utf-8', newline='') as f:
                writer = CertCsvWriter(FileKind.ROSTER, f)
                writer.write(RosterRecord('A', 'R&D', 'Engineering', 'x'))
            self.assertEqual(list(load_roster(path)), ['A'])

            sink = {}
            logon = os.path.join(tmp, 'logon.csv')
            with open(logon, 'w', encoding='utf-8') as f:
                f.write(LOGON_CSV)
            self.assertEqual(len(list(iter_file('logon', logon, stats_sink=sink))), 3)
            self.assertEqual(sink['logon'].accepted, 3)


@unittest.skipUnless(SLOW, '设置 INSIDER_GRAPH_SLOW_TESTS=1 运行大文件流式解析测试')
class TestStreaming(unittest.TestCase):
    """HTTP文件的流式解析：100万行限时完成，行数增加10倍内存峰值不超过1.5倍"""

    ROWS = 1_000_000
    USERS = [f'U{i:03d}' for i in range(50)]

    def write_http(self, path: str, rows: int) -> None:
        start = datetime(2010, 1, 4)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            f.write('id,date,user,pc,url,content\n')
            for i in range(rows):
                stamp = (start + timedelta(seconds=i)).strftime('%m/%d/%Y %H:%M:%S')
                f.write(f'{{H{i}}},{stamp},{self.USERS[i % 50]},PC-{i % 50},http://site{i % 997}.com/{i},\n')

    def peak_memory(self, path: str) -> int:
        tracemalloc.start()
        try:
            for _ in iter_file('http', path):
                pass
            return tracemalloc.get_traced_memory()[1]
        finally:
            tracemalloc.stop()

    def test_million_rows(self):
        with tempfile.TemporaryDirectory() as tmp:
            small, large = os.path.join(tmp, 'small.csv'), os.path.join(tmp, 'large.csv')
            self.write_http(small, self.ROWS // 10)
            self.write_http(large, self.ROWS)

            sink = {}
            started = time.perf_counter()
            count = sum(1 for _ in iter_file('http', large, stats_sink=sink))
            elapsed = time.perf_counter() - started

            small_peak = self.peak_memory(small)
            large_peak = self.peak_memory(large)

        self.assertEqual(count, self.ROWS)
        self.assertEqual(sink['http'].accepted, self.ROWS)
        self.assertEqual(len(sink['http'].accepted_by_user), 50)
        self.assertLess(elapsed, 30)
        self.assertLessEqual(large_peak, 1.5 * small_peak)


if __name__ == '__main__':
    unittest.main()

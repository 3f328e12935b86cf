import os
import sys
import tempfile
import unittest

import pandas as pd

# 添加项目根目录到Python路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from src.features.time_summary import minutes_of_day
from src.ingest import FileKind, LogonActivity, corpus_summary, iter_file, load_roster
from src.synth import CorpusGenerator, GroundTruth, ScenarioKind, ScenarioSpec, generate_corpus, parse_scenario


class TestCorpusGenerator(unittest.TestCase):
    """测试合成语料的格式、真值和植入效果"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out_dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def test_no_scenarios(self):
        corpus = generate_corpus(12, 7, [], seed=1, out_dir=self.out_dir)
        self.assertEqual(corpus.ground_truth.pairs, [])
        truth = GroundTruth.read(corpus.paths['ground_truth'])
        self.assertEqual(truth.pairs, [])
        self.assertEqual(len(corpus.users), 12)

    def test_files_parse_cleanly(self):
        """生成的文件全部能被解析器接受，且文件内时间单调不减"""
        corpus = generate_corpus(15, 10, [ScenarioSpec(ScenarioKind.USB_MASS_COPY)], seed=3, out_dir=self.out_dir)
        stats = {}
        for kind in FileKind:
            previous = None
            for record in iter_file(kind, corpus.paths[kind.value], strict=True, stats_sink=stats):
                timestamp = getattr(record, 'timestamp', None)
                if timestamp is not None:
                    if previous is not None:
                        self.assertLessEqual(previous, timestamp)
                    previous = timestamp
            self.assertEqual(stats[kind.value].rejected_total, 0)
            self.assertEqual(stats[kind.value].accepted, corpus.emitted[kind.value])

        summary = corpus_summary(stats, load_roster(corpus.paths['roster']))
        self.assertEqual(list(summary.department.unique()), [corpus.department])
        for kind in ('logon', 'device', 'file', 'http', 'psychometric'):
            records = int(summary[summary.file_kind == kind].records.sum())
            self.assertEqual(records, corpus.emitted[kind])

    def test_iso_timestamps(self):
        corpus = generate_corpus(5, 5, [], seed=2, out_dir=self.out_dir, timestamp_format='iso')
        with open(corpus.paths['logon'], encoding='utf-8') as f:
            f.readline()
            self.assertIn('T', f.readline().split(',')[1])
        self.assertGreater(len(list(iter_file('logon', corpus.paths['logon'], strict=True))), 0)

    def test_same_seed_same_corpus(self):
        first = generate_corpus(8, 7, [ScenarioSpec(ScenarioKind.DEVICE_HOPPER)], seed=5,
                                out_dir=os.path.join(self.out_dir, 'a'))
        second = generate_corpus(8, 7, [ScenarioSpec(ScenarioKind.DEVICE_HOPPER)], seed=5,
                                 out_dir=os.path.join(self.out_dir, 'b'))
        self.assertEqual(first.ground_truth.pairs, second.ground_truth.pairs)
        for kind in FileKind:
            with open(first.paths[kind.value], 'rb') as a, open(second.paths[kind.value], 'rb') as b:
                self.assertEqual(a.read(), b.read(), kind.value)

    def test_after_hours_user(self):
        """夜间登录场景的用户最晚登录时刻不早于22:00"""
        corpus = generate_corpus(10, 20, [ScenarioSpec(ScenarioKind.AFTER_HOURS_LOGON, rate=1.0)], seed=7,
                                 out_dir=self.out_dir)
        planted = corpus.ground_truth.users[0]
        latest = {}
        for event in iter_file('logon', corpus.paths['logon']):
            if event.activity == LogonActivity.LOGON:
                latest[event.user] = max(latest.get(event.user, 0.0), minutes_of_day(event.timestamp))
        self.assertGreaterEqual(latest[planted], 1320)
        normal = [value for user, value in latest.items() if user != planted]
        self.assertTrue(all(value < 1320 for value in normal))

    def test_usb_mass_copy_user_copies_most(self):
        corpus = generate_corpus(20, 15, [ScenarioSpec(ScenarioKind.USB_MASS_COPY, intensity=2.0)], seed=11,
                                 out_dir=self.out_dir)
        planted = corpus.ground_truth.users[0]
        copies = {}
        for event in iter_file('file', corpus.paths['file']):
            copies[event.user] = copies.get(event.user, 0) + 1
        self.assertEqual(max(copies, key=copies.get), planted)

    def test_usb_rate(self):
        generator = CorpusGenerator(400, 5, seed=13)
        fraction = sum(profile.uses_usb for profile in generator.profiles) / 400
        self.assertGreater(fraction, 0.12)
        self.assertLess(fraction, 0.28)

    def test_traits_drive_behavior(self):
        """尽责性越高上班越早，开放性越高访问的URL越多"""
        corpus = generate_corpus(60, 60, [], seed=17, out_dir=self.out_dir)
        psychometric = pd.read_csv(corpus.paths['psychometric']).set_index('user_id')

        first_logon = {}
        for event in iter_file('logon', corpus.paths['logon']):
            if event.activity == LogonActivity.LOGON:
                key = (event.user, event.timestamp.date())
                first_logon[key] = min(first_logon.get(key, 1440.0), minutes_of_day(event.timestamp))
        arrival = pd.Series(first_logon).groupby(level=0).mean()
        urls = pd.Series({user: len(pd.unique(frame.url)) for user, frame in
                          pd.read_csv(corpus.paths['http']).groupby('user')})

        self.assertLess(arrival.corr(psychometric.C.reindex(arrival.index)), -0.5)
        self.assertGreater(urls.corr(psychometric.O.reindex(urls.index)), 0.5)

    def test_named_target_and_errors(self):
        generator = CorpusGenerator(6, 5, seed=1)
        target = generator.users[2]
        corpus = generate_corpus(6, 5, [ScenarioSpec(ScenarioKind.BROWSING_BURST, user=target)], seed=1,
                                 out_dir=self.out_dir)
        self.assertEqual(corpus.ground_truth.pairs, [(target, 'browsing_burst')])

        with self.assertRaises(ValueError):
            CorpusGenerator(6, 5, [ScenarioSpec(ScenarioKind.BROWSING_BURST, user='NOBODY')], seed=1)
        with self.assertRaises(ValueError):
            CorpusGenerator(2, 5, [ScenarioSpec(ScenarioKind.BROWSING_BURST)] * 3, seed=1)
        with self.assertRaises(ValueError):
            CorpusGenerator(1, 5)
        with self.assertRaises(ValueError):
            CorpusGenerator(5, 3)

    def test_parse_scenario(self):
        self.assertEqual(parse_scenario('after_hours_logon'), ScenarioSpec(ScenarioKind.AFTER_HOURS_LOGON))
        self.assertEqual(parse_scenario('usb_mass_copy:ABC0001:2.5'),
                         ScenarioSpec(ScenarioKind.USB_MASS_COPY, 'ABC0001', 2.5))
        with self.assertRaises(ValueError):
            parse_scenario('teleport')
        with self.assertRaises(ValueError):
            parse_scenario('usb_mass_copy::-1')


if __name__ == '__main__':
    unittest.main()

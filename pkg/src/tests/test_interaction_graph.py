import os
import sys
import tempfile
import unittest
from datetime import datetime, timedelta

import pandas as pd
from hypothesis import given, settings, strategies as st

# 添加项目根目录到Python路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from src.graph import build_graph, degree_histogram, user_degree
from src.ingest.records import LogonActivity, LogonEvent
from src.utils.exceptions import UnknownVertexError

T0 = datetime(2010, 1, 4, 8, 0, 0)


def _logoff(user: str, pc: str, minute: int = 0) -> LogonEvent:
    return LogonEvent(T0 + timedelta(minutes=minute), user, pc, LogonActivity.LOGOFF)


def _logon(user: str, pc: str, minute: int = 0) -> LogonEvent:
    return LogonEvent(T0 + timedelta(minutes=minute), user, pc, LogonActivity.LOGON)


class TestInteractionGraph(unittest.TestCase):
    """测试用户-设备二部图的构建、度和度分布"""

    def test_logoff_counts_are_weights(self):
        events = [_logon('A', 'PC1'), _logoff('A', 'PC1', 1), _logoff('A', 'PC1', 2), _logoff('A', 'PC2', 3),
                  _logoff('B', 'PC2', 4)]
        g = build_graph(events)
        self.assertEqual(g.edges, [('A', 'PC1', 2), ('A', 'PC2', 1), ('B', 'PC2', 1)])
        self.assertEqual(g.weight('A', 'PC1'), 2)
        self.assertEqual(g.weight('B', 'PC1'), 0)
        self.assertEqual(g.total_weight(), 4)
        self.assertEqual(user_degree(g, 'A'), 2)
        self.assertTrue(g.is_properly_colored())

    def test_logon_only_user_is_isolated(self):
        """只有Logon的用户是孤立顶点，度为0"""
        g = build_graph([_logon('A', 'PC1'), _logoff('B', 'PC1')])
        self.assertEqual(g.users, ['A', 'B'])
        self.assertEqual(user_degree(g, 'A'), 0)
        self.assertEqual(g.devices, ['PC1'])

        pruned = build_graph([_logon('A', 'PC1'), _logoff('B', 'PC1')], keep_isolated=False)
        self.assertEqual(pruned.users, ['B'])

    def test_cohort_users_without_events(self):
        g = build_graph([_logoff('A', 'PC1')], cohort=['A', 'C'])
        self.assertEqual(g.users, ['A', 'C'])
        self.assertEqual(user_degree(g, 'C'), 0)

    def test_user_and_device_with_same_name(self):
        """用户和设备同名时是两个不同顶点"""
        g = build_graph([_logoff('X1', 'X1')])
        self.assertEqual(g.users, ['X1'])
        self.assertEqual(g.devices, ['X1'])
        self.assertEqual(g.number_of_edges(), 1)

    def test_unknown_user(self):
        g = build_graph([_logoff('A', 'PC1')])
        with self.assertRaises(UnknownVertexError):
            user_degree(g, 'PC1')
        with self.assertRaises(KeyError):
            user_degree(g, 'nobody')

    def test_empty_graph(self):
        g = build_graph([])
        self.assertEqual(g.users, [])
        hist = degree_histogram(g)
        self.assertEqual((hist.bin_edges, hist.counts), ([], []))

    def test_degree_histogram(self):
        events = [_logoff('A', 'PC1'), _logoff('A', 'PC2'), _logoff('A', 'PC3'), _logoff('B', 'PC1'),
                  _logon('C', 'PC1')]
        g = build_graph(events)
        hist = degree_histogram(g)
        self.assertEqual(hist.bin_edges, [0, 1, 2, 3, 4])
        self.assertEqual(hist.counts, [1, 1, 0, 1])
        wide = degree_histogram(g, bin_width=2)
        self.assertEqual(wide.counts, [2, 1])
        with self.assertRaises(ValueError):
            degree_histogram(g, bin_width=0)

    def test_edge_list_export(self):
        g = build_graph([_logoff('A', 'PC1'), _logoff('A', 'PC1'), _logoff('B', 'PC9')])
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'edges.csv')
            g.write_edge_list(path)
            frame = pd.read_csv(path, dtype={'user': str, 'device': str})
        self.assertEqual(frame.to_dict(orient='records'), [{'user': 'A', 'device': 'PC1', 'weight': 2},
                                                           {'user': 'B', 'device': 'PC9', 'weight': 1}])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(['A', 'B', 'C', 'D']), st.sampled_from(['P1', 'P2', 'P3']),
                              st.booleans()), max_size=40))
    def test_weight_sum_equals_logoff_count(self, rows):
        """边权之和等于Logoff事件数，度之和等于边数，直方图计数之和等于用户数"""
        events = [(_logoff if is_logoff else _logon)(user, pc, i) for i, (user, pc, is_logoff) in enumerate(rows)]
        g = build_graph(events)
        logoffs = sum(1 for _, _, is_logoff in rows if is_logoff)
        self.assertEqual(g.total_weight(), logoffs)
        self.assertEqual(sum(user_degree(g, u) for u in g.users), g.number_of_edges())
        self.assertEqual(sum(degree_histogram(g).counts), len(g.users))
        self.assertTrue(g.is_properly_colored())


if __name__ == '__main__':
    unittest.main()

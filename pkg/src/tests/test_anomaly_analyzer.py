import os
import sys
import unittest

import numpy as np
import pandas as pd
from hypothesis import given, settings, strategies as st

# 添加项目根目录到Python路径
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from src.core.anomaly_analyzer import (COMBINED, ORDER_RUNS, RUN_ORDER, AnomalyAnalyzer, FlagMatrix, GroupScores,
                                       build_flag_matrix, case1_dependency, case2_combinations, group_threshold,
                                       is_informative, run_columns, run_seed, score_groups)
from src.core.iforest import ForestConfig
from src.features import GROUP_ORDER, create_all_feature_groups
from src.features.feature_matrix import FeatureMatrix, canonical_columns, group_partition
from src.utils.exceptions import ContractViolation


def _matrix(n_users: int = 40, seed: int = 0, outlier: bool = True) -> FeatureMatrix:
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(n_users, 50))
    # 心理测评列取常数
    data[:, 45:] = 30.0
    if outlier:
        data[0, :45] += 12.0
    users = [f"U{i:03d}" for i in range(n_users)]
    frame = pd.DataFrame(data, columns=canonical_columns(), index=pd.Index(users, name='user_id'))
    return FeatureMatrix(frame, group_partition(create_all_feature_groups()))


def _scores(group: str, values, informative: bool = True) -> GroupScores:
    values = np.asarray(values, dtype=float)
    return GroupScores(group, [f"U{i}" for i in range(len(values))], values, informative)


class TestScoring(unittest.TestCase):
    """测试打分任务、种子派生和无信息判定"""

    def test_run_columns(self):
        matrix = _matrix()
        self.assertEqual(run_columns(matrix, 'graph'), [0])
        self.assertEqual(run_columns(matrix, 'subgraph'), list(range(1, 26)))
        self.assertEqual(run_columns(matrix, 'subgraph_o1'), [1, 2, 3, 4, 5])
        self.assertEqual(run_columns(matrix, 'subgraph_o5'), list(range(21, 26)))
        self.assertEqual(run_columns(matrix, 'psychometric'), list(range(45, 50)))
        self.assertEqual(run_columns(matrix, COMBINED), list(range(50)))

    def test_run_order(self):
        self.assertEqual(len(RUN_ORDER), 12)
        self.assertEqual(RUN_ORDER[:6], GROUP_ORDER)
        self.assertEqual(RUN_ORDER[6], COMBINED)
        self.assertEqual(RUN_ORDER[7:], ORDER_RUNS)

    def test_run_seeds_are_distinct_and_stable(self):
        seeds = [run_seed(42, i) for i in range(len(RUN_ORDER))]
        self.assertEqual(len(set(seeds)), len(seeds))
        self.assertEqual(seeds, [run_seed(42, i) for i in range(len(RUN_ORDER))])
        self.assertNotEqual(run_seed(42, 0), run_seed(43, 0))

    def test_is_informative(self):
        self.assertFalse(is_informative(np.full(10, 0.5)))
        self.assertFalse(is_informative(np.array([0.47, 0.52, 0.54])))
        self.assertTrue(is_informative(np.array([0.4, 0.5, 0.8])))
        self.assertFalse(is_informative(np.array([])))

    def test_score_groups(self):
        matrix = _matrix()
        scores = score_groups(matrix, ForestConfig(tree_count=30, subsample_size=32, seed=1))
        self.assertEqual(list(scores), list(RUN_ORDER))
        self.assertFalse(scores['psychometric'].informative)
        self.assertTrue(scores[COMBINED].informative)
        self.assertEqual(int(np.argmax(scores[COMBINED].scores)), 0)
        self.assertEqual(scores['subgraph'].width, 25)
        self.assertEqual(scores['subgraph_o3'].width, 5)
        for result in scores.values():
            self.assertEqual(result.users, matrix.users)
            self.assertTrue(np.all((result.scores > 0) & (result.scores <= 1)))

    def test_score_groups_is_deterministic(self):
        matrix = _matrix(seed=4)
        cfg = ForestConfig(tree_count=20, subsample_size=16, seed=9)
        first = score_groups(matrix, cfg)
        second = score_groups(matrix, cfg)
        for run in RUN_ORDER:
            np.testing.assert_array_equal(first[run].scores, second[run].scores)


class TestFlagsAndDependency(unittest.TestCase):
    """测试阈值、标记矩阵和依赖统计"""

    def test_threshold(self):
        self.assertAlmostEqual(group_threshold(_scores('web', [0.3, 0.9, 0.85, 0.79])), 0.8)
        with self.assertRaises(ContractViolation):
            group_threshold(_scores('web', [0.5, 0.5], informative=False))

    def test_flag_matrix(self):
        all_scores = {
            'graph': _scores('graph', [0.9, 0.85, 0.3, 0.2]),
            'subgraph': _scores('subgraph', [0.4, 0.9, 0.3, 0.2]),
            'web': _scores('web', [0.5, 0.5, 0.5, 0.5], informative=False),
        }
        fm = build_flag_matrix(all_scores, margin=0.1)
        self.assertEqual(fm.groups, ['graph', 'subgraph'])
        self.assertEqual(fm.flags.tolist(), [[1, 0], [1, 1], [0, 0], [0, 0]])
        self.assertEqual(fm.flag_counts().tolist(), [1, 2, 0, 0])
        self.assertEqual(list(fm.to_frame().columns), ['graph', 'subgraph'])

    def test_flag_at_exact_threshold(self):
        """分数等于阈值时也被标记"""
        fm = build_flag_matrix({'graph': _scores('graph', [1.0, 0.75, 0.5])}, margin=0.25)
        self.assertEqual(fm.flags[:, 0].tolist(), [1, 1, 0])

    def test_maximum_always_flagged(self):
        fm = build_flag_matrix({'web': _scores('web', [0.2, 0.3, 0.95, 0.6])})
        self.assertEqual(fm.flags[2, 0], 1)

    def test_case1(self):
        fm = FlagMatrix(['a', 'b', 'c', 'd'], ['graph', 'web'], np.array([[0, 0], [1, 0], [1, 1], [0, 0]]), {})
        table = case1_dependency(fm)
        self.assertEqual(table.counts, [2, 1, 1, 0, 0, 0, 0])
        self.assertEqual(table.percentages, [50.0, 25.0, 25.0, 0.0, 0.0, 0.0, 0.0])
        self.assertEqual(len(table.to_frame()), 7)

    def test_case1_empty(self):
        table = case1_dependency(FlagMatrix([], [], np.zeros((0, 0), dtype=int), {}))
        self.assertEqual(table.percentages[0], 100.0)
        self.assertEqual(sum(table.percentages), 100.0)

    def test_case1_no_informative_groups(self):
        fm = build_flag_matrix({'web': _scores('web', [0.5, 0.5, 0.5], informative=False)})
        self.assertEqual(fm.groups, [])
        self.assertEqual(case1_dependency(fm).percentages[0], 100.0)
        self.assertTrue(case2_combinations(fm).empty)

    def test_case2(self):
        fm = FlagMatrix(['a', 'b', 'c', 'd'], ['graph', 'subgraph', 'web'],
                        np.array([[1, 1, 0], [1, 1, 1], [0, 0, 1], [0, 0, 0]]), {})
        frame = case2_combinations(fm).set_index('groups')
        self.assertEqual(len(frame), 7)
        self.assertEqual(frame.at['graph+subgraph', 'users'], 2)
        self.assertEqual(frame.at['graph+subgraph+web', 'users'], 1)
        self.assertEqual(frame.at['web', 'percentage'], 50.0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=0, max_value=30), st.integers(min_value=0, max_value=6), st.data())
    def test_case1_sums_to_100(self, n_users, n_groups, data):
        bits = data.draw(st.lists(st.integers(0, 1), min_size=n_users * n_groups, max_size=n_users * n_groups))
        flags = np.array(bits, dtype=int).reshape(n_users, n_groups)
        fm = FlagMatrix([f"u{i}" for i in range(n_users)], list(GROUP_ORDER[:n_groups]), flags, {})
        table = case1_dependency(fm)
        self.assertAlmostEqual(sum(table.percentages), 100.0, delta=0.01)
        self.assertEqual(sum(table.counts), n_users)
        self.assertEqual(len(case2_combinations(fm)), 2 ** n_groups - 1)

    def test_analyzer(self):
        config = {'forest': {'tree_count': 30, 'subsample_size': 32, 'seed': 3, 'n_jobs': 1},
                  'analysis': {'threshold_margin': 0.1, 'uninformative_tolerance': 0.05}}
        result = AnomalyAnalyzer(config).analyze(_matrix())
        self.assertEqual(set(result), {'scores', 'flags', 'case1', 'case2'})
        self.assertNotIn('psychometric', result['flags'].groups)
        self.assertGreaterEqual(result['flags'].flag_counts()[0], 1)
        self.assertAlmostEqual(sum(result['case1'].percentages), 100.0, delta=0.01)


if __name__ == '__main__':
    unittest.main()

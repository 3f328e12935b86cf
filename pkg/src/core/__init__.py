from src.core.iforest import (EULER_GAMMA, ForestConfig, IsolationForest, IsolationNode, IsolationTree,
                              anomaly_score, build_forest, c_factor, mean_path_length, score_all)
from src.core.anomaly_analyzer import (AnomalyAnalyzer, DependencyTable, FlagMatrix, GroupScores,
                                       build_flag_matrix, case1_dependency, case2_combinations, group_threshold,
                                       score_groups)

# -*- coding: utf-8 -*-

"""
内部威胁检测流水线包

此文件重导出所有主要模块，以简化导入语句
"""

# 从utils模块导出
from src.utils.config_loader import ConfigLoader, load_config
from src.utils.database import Database
from src.utils.logger import get_logger, setup_logger

# 从core模块导出
from src.core.iforest import ForestConfig, build_forest, anomaly_score, score_all
from src.core.anomaly_analyzer import AnomalyAnalyzer
from src.core.pipeline import Pipeline, run_pipeline

# 从features模块导出
from src.features import load_feature_groups

# 从synth和tasks模块导出
from src.synth.corpus_generator import generate_corpus
from src.tasks.recovery_task import verify_ground_truth_recovery

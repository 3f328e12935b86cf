from typing import Dict, Type, Any, List, Optional
import importlib
import inspect
from pathlib import Path

from src.features.base_feature import BaseFeatureGroup

# 特征组在矩阵中的固定顺序，宽度依次为 1, 25, 8, 10, 1, 5
GROUP_ORDER = ('graph', 'subgraph', 'logon_logoff', 'removable_media', 'web', 'psychometric')

# 特征组注册表
_FEATURE_GROUPS: Dict[str, Type[BaseFeatureGroup]] = {}

_SKIP_MODULES = {'__init__', 'base_feature', 'time_summary', 'feature_matrix'}


def register_feature_group(group_class: Type[BaseFeatureGroup]) -> Type[BaseFeatureGroup]:
    """注册特征组类

    Args:
        group_class: 要注册的特征组类

    Returns:
        注册的特征组类
    """
    _FEATURE_GROUPS[group_class({}).name] = group_class
    return group_class


def get_feature_group_class(name: str) -> Optional[Type[BaseFeatureGroup]]:
    return _FEATURE_GROUPS.get(name)


def get_all_feature_groups() -> Dict[str, Type[BaseFeatureGroup]]:
    return _FEATURE_GROUPS.copy()


def create_feature_group(name: str, config: Optional[Dict[str, Any]] = None) -> BaseFeatureGroup:
    """创建特征组实例

    Args:
        name: 分组名称
        config: 配置字典

    Returns:
        特征组实例
    """
    group_class = get_feature_group_class(name)
    if group_class is None:
        raise ValueError(f"未找到特征组: {name}")
    return group_class(config)


def create_all_feature_groups(config: Optional[Dict[str, Any]] = None) -> List[BaseFeatureGroup]:
    """按固定顺序创建全部六个特征组"""
    return [create_feature_group(name, config) for name in GROUP_ORDER]


def load_feature_groups() -> None:
    """加载本目录下的所有特征组模块"""
    current_dir = Path(__file__).parent

    for file_path in sorted(current_dir.glob("*.py")):
        if file_path.stem in _SKIP_MODULES:
            continue

        module_name = f"src.features.{file_path.stem}"
        module = importlib.import_module(module_name)
        for _, obj in inspect.getmembers(module):
            if (inspect.isclass(obj) and issubclass(obj, BaseFeatureGroup)
                    and obj is not BaseFeatureGroup and not inspect.isabstract(obj)):
                register_feature_group(obj)


# 自动加载所有特征组
load_feature_groups()

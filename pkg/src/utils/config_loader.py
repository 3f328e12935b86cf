import os
import copy
import json
import hashlib
import configparser
from typing import Dict, Any, List, Optional

from dotenv import load_dotenv

from src.utils.exceptions import ConfigError

ENV_PREFIX = 'INSIDER_GRAPH_'

# 内置默认值，同时也决定了每个配置项的类型
DEFAULT_CONFIG: Dict[str, Dict[str, Any]] = {
    'input': {
        'data_dir': 'data',
        'logon': 'logon.csv',
        'device': 'device.csv',
        'file': 'file.csv',
        'http': 'http.csv',
        'psychometric': 'psychometric.csv',
        'roster': 'roster.csv',
    },
    'cohort': {
        'department': '',
        'keep_isolated_users': True,
    },
    'ingest': {
        'strict': False,
        'timestamp_format': 'auto',
    },
    'graph': {
        'distance': 'direct',
        'density': 'simple',
        'histogram_bin_width': 1,
    },
    'features': {
        'impute_time': 'cohort_mean',
        'impute_psychometric': 'cohort_mean',
    },
    'forest': {
        'tree_count': 100,
        'subsample_size': 256,
        'seed': 42,
        'n_jobs': 1,
    },
    'analysis': {
        'threshold_margin': 0.1,
        'uninformative_tolerance': 0.05,
        'histogram_bin_width': 0.05,
    },
    'output': {
        'out_dir': 'output',
        'store_path': '',
        'export_forests': False,
    },
    'logging': {
        'log_path': 'logs/insider_graph.log',
        'log_level': 'INFO',
    },
}

# 取值受限的配置项
CHOICES = {
    ('ingest', 'timestamp_format'): ('auto', 'us', 'iso'),
    ('graph', 'distance'): ('direct', 'inverse'),
    ('graph', 'density'): ('simple', 'bipartite'),
    ('features', 'impute_time'): ('cohort_mean', 'zero'),
    ('features', 'impute_psychometric'): ('cohort_mean', 'reject'),
}


def _coerce(value: Any, template: Any, section: str, key: str) -> Any:
    """按默认值的类型转换配置值"""
    if isinstance(value, bool) and isinstance(template, bool):
        return value
    text = str(value).strip()
    try:
        if isinstance(template, bool):
            lowered = text.lower()
            if lowered in ('1', 'true', 'yes', 'on'):
                return True
            if lowered in ('0', 'false', 'no', 'off'):
                return False
            raise ValueError(text)
        if isinstance(template, int):
            return int(text)
        if isinstance(template, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"配置项 [{section}] {key} 取值非法: {value!r}")
    return text


class ConfigLoader:
    """配置加载器，合并默认值、INI/JSON配置文件、环境变量和命令行覆盖"""

    def __init__(self, config_path: Optional[str] = None, env_file: Optional[str] = None):
        """初始化配置加载器

        Args:
            config_path: 配置文件路径(.ini或.json)，None表示只用默认值
            env_file: .env文件路径，None时在当前目录查找
        """
        self.config_path = config_path
        self.env_file = env_file
        self.config: Dict[str, Dict[str, Any]] = copy.deepcopy(DEFAULT_CONFIG)

    def load_all_configs(self, overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> Dict[str, Dict[str, Any]]:
        """按优先级加载全部配置

        优先级: 命令行覆盖 > 环境变量 > 配置文件 > 默认值

        Args:
            overrides: 命令行给出的覆盖项，形如 {'forest': {'seed': 7}}

        Returns:
            合并后的配置字典
        """
        if self.config_path:
            self.load_file(self.config_path)
        self.load_environment()
        if overrides:
            self.apply_overrides(overrides)
        self.validate()
        return self.config

    def load_file(self, config_path: str) -> None:
        """读取INI或JSON配置文件"""
        if not os.path.exists(config_path):
            raise ConfigError(f"配置文件不存在: {config_path}")

        if config_path.lower().endswith('.json'):
            with open(config_path, 'r', encoding='utf-8') as f:
                try:
                    raw = json.load(f)
                except json.JSONDecodeError as e:
                    raise ConfigError(f"JSON配置文件解析失败: {config_path}: {e}")
            if not isinstance(raw, dict):
                raise ConfigError(f"JSON配置文件顶层必须是对象: {config_path}")
            # manifest.json 内嵌了完整配置，可直接用于重跑
            if 'config' in raw and 'config_hash' in raw:
                raw = raw['config']
            self.apply_overrides(raw)
            return

        parser = configparser.ConfigParser()
        parser.read(config_path, encoding='utf-8')
        self.apply_overrides({section: dict(parser[section]) for section in parser.sections()})

    def load_environment(self) -> None:
        """读取 INSIDER_GRAPH_<SECTION>_<KEY> 形式的环境变量"""
        load_dotenv(self.env_file, override=False)
        for section, options in self.config.items():
            for key in options:
                env_name = f"{ENV_PREFIX}{section}_{key}".upper()
                if env_name in os.environ:
                    self.config[section][key] = _coerce(os.environ[env_name], DEFAULT_CONFIG[section][key],
                                                        section, key)

    def apply_overrides(self, overrides: Dict[str, Dict[str, Any]]) -> None:
        """逐项覆盖配置，未知的节或键直接报错"""
        for section, options in overrides.items():
            if section not in DEFAULT_CONFIG:
                raise ConfigError(f"未知配置节: [{section}]")
            if not isinstance(options, dict):
                raise ConfigError(f"配置节 [{section}] 必须是键值对")
            for key, value in options.items():
                if value is None:
                    continue
                if key not in DEFAULT_CONFIG[section]:
                    raise ConfigError(f"未知配置项: [{section}] {key}")
                self.config[section][key] = _coerce(value, DEFAULT_CONFIG[section][key], section, key)

    def validate(self) -> None:
        """检查取值范围"""
        for (section, key), allowed in CHOICES.items():
            if self.config[section][key] not in allowed:
                raise ConfigError(f"配置项 [{section}] {key} 必须是 {allowed} 之一，当前为 {self.config[section][key]!r}")
        forest = self.config['forest']
        if forest['tree_count'] < 1:
            raise ConfigError("[forest] tree_count 必须 >= 1")
        if forest['subsample_size'] < 1:
            raise ConfigError("[forest] subsample_size 必须 >= 1")
        if forest['n_jobs'] < 1:
            raise ConfigError("[forest] n_jobs 必须 >= 1")
        if forest['seed'] < 0:
            raise ConfigError("[forest] seed 必须 >= 0")
        if self.config['graph']['histogram_bin_width'] < 1:
            raise ConfigError("[graph] histogram_bin_width 必须 >= 1")
        if not 0 < self.config['analysis']['histogram_bin_width'] <= 1:
            raise ConfigError("[analysis] histogram_bin_width 必须在 (0, 1] 内")

    def get_config(self) -> Dict[str, Dict[str, Any]]:
        return self.config


def input_paths(config: Dict[str, Dict[str, Any]]) -> Dict[str, str]:
    """根据 [input] 节拼出各类输入文件的完整路径"""
    section = config['input']
    data_dir = section['data_dir']
    return {kind: os.path.join(data_dir, section[kind])
            for kind in ('logon', 'device', 'file', 'http', 'psychometric', 'roster')}


def departments(config: Dict[str, Dict[str, Any]]) -> List[str]:
    """解析部门配置，逗号分隔；空字符串表示不按部门过滤"""
    raw = config['cohort']['department']
    return [name.strip() for name in raw.split(',') if name.strip()]


def config_hash(config: Dict[str, Dict[str, Any]]) -> str:
    """计算配置的SHA-256摘要(按键排序的规范JSON)"""
    canonical = json.dumps(config, sort_keys=True, separators=(',', ':'), ensure_ascii=False)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def load_config(config_path: Optional[str] = None,
                overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> Dict[str, Dict[str, Any]]:
    """便捷函数：加载配置并返回配置字典

    Args:
        config_path: 配置文件路径，None时使用 src/config/pipeline_config.ini(若存在)
        overrides: 命令行覆盖项

    Returns:
        合并后的配置字典
    """
    if config_path is None:
        base_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        default_path = os.path.join(base_dir, 'config', 'pipeline_config.ini')
        config_path = default_path if os.path.exists(default_path) else None

    return ConfigLoader(config_path).load_all_configs(overrides)

# -*- coding: utf-8 -*-

"""
工具模块包

重导出配置加载、事件存储、日志和异常类型
"""

from src.utils.config_loader import ConfigLoader, load_config
from src.utils.database import Database
from src.utils.exceptions import (AssemblyError, ConfigError, ContractViolation, InsiderGraphError,
                                  RowRejected, SchemaError, StageError, UnknownVertexError, ValidationError)
from src.utils.logger import get_logger, setup_logger

import os
import logging
from logging.handlers import RotatingFileHandler
from typing import Optional

LOGGER_NAME = 'insider_graph'


class Logger:
    """日志工具类，整个流水线共用一个日志记录器"""

    _instance = None

    def __new__(cls, *args, **kwargs):
        """单例模式，确保只有一个Logger实例"""
        if cls._instance is None:
            cls._instance = super(Logger, cls).__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self, log_path: Optional[str] = None, log_level: str = 'INFO'):
        """初始化日志工具

        Args:
            log_path: 日志文件路径，为None时只输出到控制台
            log_level: 日志级别，默认为INFO
        """
        if self._initialized:
            return

        self._initialized = True
        self.log_path = log_path
        self.log_level = self._get_log_level(log_level)

        self.logger = logging.getLogger(LOGGER_NAME)
        self.logger.setLevel(self.log_level)
        self.logger.propagate = False

        if self.logger.handlers:
            self.logger.handlers.clear()

        console_handler = logging.StreamHandler()
        console_handler.setLevel(self.log_level)
        console_handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))
        self.logger.addHandler(console_handler)

        if log_path:
            log_dir = os.path.dirname(log_path)
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
            file_handler = RotatingFileHandler(
                log_path, maxBytes=10*1024*1024, backupCount=5, encoding='utf-8')
            file_handler.setLevel(self.log_level)
            file_handler.setFormatter(logging.Formatter(
                '%(asctime)s - %(levelname)s - %(filename)s:%(lineno)d - %(message)s'))
            self.logger.addHandler(file_handler)

    def _get_log_level(self, level_str: str) -> int:
        """将字符串日志级别转换为logging模块的级别常量"""
        levels = {
            'DEBUG': logging.DEBUG,
            'INFO': logging.INFO,
            'WARNING': logging.WARNING,
            'ERROR': logging.ERROR,
            'CRITICAL': logging.CRITICAL
        }
        return levels.get(str(level_str).upper(), logging.INFO)

    def get_logger(self) -> logging.Logger:
        return self.logger

    @classmethod
    def reset(cls) -> None:
        """关闭已有处理器并丢弃单例，下次调用时按新参数重建"""
        if cls._instance is not None:
            for handler in list(cls._instance.logger.handlers):
                handler.close()
                cls._instance.logger.removeHandler(handler)
        cls._instance = None


def get_logger(log_path: Optional[str] = None, log_level: Optional[str] = None) -> logging.Logger:
    """获取已配置的日志记录器

    尚未配置时退化为仅控制台输出，便于库代码和测试直接调用。

    Args:
        log_path: 日志文件路径，如果为None则使用已配置的路径
        log_level: 日志级别，如果为None则使用已配置的级别

    Returns:
        配置好的日志记录器
    """
    if Logger._instance is None:
        return Logger(log_path, log_level or 'INFO').get_logger()
    return Logger._instance.get_logger()


def setup_logger(log_path: Optional[str] = None, log_level: str = 'INFO') -> logging.Logger:
    """按配置(重新)设置日志记录器

    Args:
        log_path: 日志文件路径，如果为None则使用默认路径 src/logs/insider_graph.log
        log_level: 日志级别，默认为INFO

    Returns:
        配置好的日志记录器
    """
    if log_path is None:
        base_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        log_path = os.path.join(base_dir, 'logs', 'insider_graph.log')

    Logger.reset()
    return Logger(log_path, log_level).get_logger()

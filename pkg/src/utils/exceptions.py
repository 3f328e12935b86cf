from typing import Optional


class InsiderGraphError(Exception):
    """本项目所有可预期错误的基类"""


class SchemaError(InsiderGraphError):
    """CSV表头缺失/未知，或严格模式下的行级错误"""

    def __init__(self, message: str, file_kind: Optional[str] = None, line: Optional[int] = None):
        self.file_kind = file_kind
        self.line = line
        location = ""
        if file_kind:
            location = f"[{file_kind}" + (f":{line}" if line is not None else "") + "] "
        super().__init__(f"{location}{message}")


class RowRejected(InsiderGraphError):
    """单行记录被拒绝，reason为原因代码"""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)


class UnknownVertexError(InsiderGraphError, KeyError):
    """图中不存在的用户顶点"""

    def __str__(self) -> str:
        return f"未知用户顶点: {self.args[0] if self.args else ''}"


class ValidationError(InsiderGraphError):
    """输入矩阵含非有限值或维度不匹配"""


class AssemblyError(InsiderGraphError):
    """特征矩阵拼装时维度不一致"""


class ContractViolation(InsiderGraphError):
    """调用前置条件不满足，例如对无信息分组求阈值"""


class ConfigError(InsiderGraphError):
    """配置文件缺失或取值非法"""


class StageError(InsiderGraphError):
    """流水线某一阶段失败，带阶段名"""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"阶段 {stage} 失败: {cause}")

"""
异常定义模块
功能：整个系统共用的异常类型
"""


class ShapeError(ValueError):
    """张量或栅格的维度不匹配"""


class ContractError(RuntimeError):
    """调用前置条件不满足（如非标量反向传播、跟踪器未初始化）"""


class ConfigError(ValueError):
    """配置文件格式错误或包含未知键"""


class FormatError(ValueError):
    """二进制文件的魔数或版本不正确"""


class StartupError(RuntimeError):
    """命令行启动条件不满足（缺少检查点、数据目录为空等）"""

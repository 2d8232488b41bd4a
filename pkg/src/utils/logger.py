"""日志工具模块"""
import logging
from pathlib import Path
from typing import Any, Optional

import structlog
from rich.console import Console
from rich.logging import RichHandler

from ..core.config import config


def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> structlog.BoundLogger:
    """设置结构化日志

    Args:
        level: 日志级别, 为空时取配置
        log_file: 日志文件路径, 为空时取配置

    Returns:
        根日志器
    """
    level_name = (level or config.logging.level).upper()
    log_path = Path(log_file or config.logging.file)
    log_path.parent.mkdir(parents=True, exist_ok=True)

    # 配置标准logging
    logging.basicConfig(
        level=getattr(logging, level_name),
        format="%(message)s",
        handlers=[
            RichHandler(console=Console(stderr=True), show_time=False),
            logging.FileHandler(log_path, encoding="utf-8"),
        ],
    )

    # 配置structlog
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.StackInfoRenderer(),
            structlog.dev.set_exc_info,
            structlog.processors.TimeStamper(fmt="ISO"),
            structlog.dev.ConsoleRenderer() if config.app.debug else structlog.processors.JSONRenderer(),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(getattr(logging, level_name)),
        logger_factory=structlog.WriteLoggerFactory(),
        cache_logger_on_first_use=True,
    )

    return structlog.get_logger()


# 全局日志实例
logger = setup_logging()


def get_logger(name: str = None) -> structlog.BoundLogger:
    """获取结构化日志器"""
    if name:
        return structlog.get_logger(name)
    return logger


def bind_run_context(**values: Any) -> None:
    """把当前ε运行的上下文绑定到后续所有日志"""
    structlog.contextvars.bind_contextvars(**values)


def clear_run_context() -> None:
    """清除运行上下文"""
    structlog.contextvars.clear_contextvars()

"""
日誌工具模組
提供統一的日誌記錄功能，支援終端機、檔案與回呼三種輸出目標
"""

import logging
import os
import inspect
from datetime import datetime
from typing import Callable, Optional


class RollMatchLogger:
    """Roll Match 專用日誌記錄器"""

    def __init__(self):
        self.logger = None
        self.console_handler = None
        self.file_handler = None
        self.callback: Optional[Callable[[str], None]] = None
        self._setup_logger()

    def _setup_logger(self):
        """設定終端機 logger（stderr）"""
        self.logger = logging.getLogger('roll_match')
        self.logger.setLevel(logging.DEBUG)
        if not self.logger.handlers:
            self.console_handler = logging.StreamHandler()
            self.console_handler.setLevel(logging.INFO)
            self.console_handler.setFormatter(logging.Formatter(
                fmt='[%(asctime)s] %(levelname)s - %(message)s',
                datefmt='%H:%M:%S'
            ))
            self.logger.addHandler(self.console_handler)

    def set_console_level(self, level: int):
        """調整終端機輸出等級"""
        if self.console_handler:
            self.console_handler.setLevel(level)

    def enable_file_log(self, log_dir: str = 'logs') -> str:
        """開啟檔案日誌，按啟動時間命名檔案"""
        if self.file_handler:
            return self.file_handler.baseFilename
        os.makedirs(log_dir, exist_ok=True)
        startup_time = datetime.now().strftime('%Y%m%d_%H%M%S')
        log_file = os.path.join(log_dir, f"roll_match_{startup_time}.log")
        self.file_handler = logging.FileHandler(log_file, encoding='utf-8')
        self.file_handler.setLevel(logging.DEBUG)
        self.file_handler.setFormatter(logging.Formatter(
            fmt='[%(asctime)s] %(levelname)s - %(message)s',
            datefmt='%H:%M:%S'
        ))
        self.logger.addHandler(self.file_handler)
        return log_file

    def set_callback(self, callback: Optional[Callable[[str], None]]):
        """設定回呼函數（用於 WARNING/ERROR）"""
        self.callback = callback

    def _get_caller_info(self):
        """獲取調用者資訊"""
        frame = inspect.currentframe()
        try:
            # 往上找三層：當前方法 -> 等級方法 -> log_xxx 函數 -> 實際調用位置
            caller_frame = frame.f_back.f_back.f_back
            filename = os.path.basename(caller_frame.f_code.co_filename)
            return f"{filename}:{caller_frame.f_lineno}"
        except AttributeError:
            return "unknown:0"
        finally:
            del frame

    def info(self, message: str):
        self.logger.info(f"{self._get_caller_info()} - {message}")

    def warning(self, message: str):
        self.logger.warning(f"{self._get_caller_info()} - {message}")
        if self.callback:
            self.callback(f"WARNING {message}")

    def error(self, message: str):
        self.logger.error(f"{self._get_caller_info()} - {message}")
        if self.callback:
            self.callback(f"ERROR {message}")

    def debug(self, message: str):
        self.logger.debug(f"{self._get_caller_info()} - {message}")


# 全域 logger 實例
logger = RollMatchLogger()


def set_log_callback(callback):
    """設定日誌回呼函數"""
    logger.set_callback(callback)


def set_verbose(verbose: bool):
    """切換終端機是否輸出 DEBUG"""
    logger.set_console_level(logging.DEBUG if verbose else logging.INFO)


def enable_file_log(log_dir: str = 'logs') -> str:
    """開啟檔案日誌"""
    return logger.enable_file_log(log_dir)


def log_info(message: str):
    """記錄資訊訊息"""
    logger.info(message)


def log_warning(message: str):
    """記錄警告訊息"""
    logger.warning(message)


def log_error(message: str):
    """記錄錯誤訊息"""
    logger.error(message)


def log_debug(message: str):
    """記錄除錯訊息"""
    logger.debug(message)

"""
配對設計變體設定管理器
"""

import json
import importlib
from typing import Dict, List, Type, Optional
from pathlib import Path

from ..exceptions import ConfigError
from ..utils.logger import log_error

# 專案根目錄下的 variants_config.json
DEFAULT_VARIANTS_FILE = Path(__file__).resolve().parents[3] / "variants_config.json"


class VariantConfig:
    """配對變體設定類別"""

    def __init__(self, config_data: dict):
        self.name = config_data['name']
        self.cli_name = config_data.get('cli_name', self.name)
        self.class_name = config_data['class_name']
        self.module = config_data['module']
        self.enabled = config_data.get('enabled', True)


class VariantConfigManager:
    """配對變體設定管理器"""

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = Path(config_file) if config_file else DEFAULT_VARIANTS_FILE
        self._variants: Dict[str, VariantConfig] = {}
        self._matcher_classes: Dict[str, Type] = {}
        self._load_config()

    def _load_config(self):
        """載入變體設定"""
        if not self.config_file.exists():
            raise ConfigError(f"Variant config file not found: {self.config_file}")

        with open(self.config_file, 'r', encoding='utf-8') as f:
            config_data = json.load(f)

        for variant_data in config_data['supported_variants']:
            variant_config = VariantConfig(variant_data)
            self._variants[variant_config.name] = variant_config

            # 動態載入配對類別
            if variant_config.enabled:
                self._load_matcher_class(variant_config)

    def _load_matcher_class(self, config: VariantConfig):
        """動態載入配對類別"""
        try:
            module = importlib.import_module(config.module)
            self._matcher_classes[config.name] = getattr(module, config.class_name)
        except (ImportError, AttributeError) as e:
            log_error(f"無法載入配對變體 {config.name}: {e}")

    def get_enabled_variants(self) -> List[str]:
        """獲取啟用的變體名稱列表"""
        return [name for name, config in self._variants.items() if config.enabled]

    def get_cli_names(self) -> Dict[str, str]:
        """cli 名稱 -> 變體名稱"""
        return {config.cli_name: name for name, config in self._variants.items() if config.enabled}

    def get_matcher_class(self, name: str) -> Optional[Type]:
        """獲取指定變體的類別"""
        return self._matcher_classes.get(name)

    def resolve_name(self, name: str) -> str:
        """接受變體名稱或 cli 名稱"""
        if name in self._variants and self._variants[name].enabled:
            return name
        cli_names = self.get_cli_names()
        if name in cli_names:
            return cli_names[name]
        raise ConfigError(f"unknown matching variant: {name} (choose from {sorted(cli_names)})")

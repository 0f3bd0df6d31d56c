from typing import List, Optional

from ..config.variants_config import VariantConfigManager
from ..panel.dataset import PanelDataset
from ..utils.logger import log_debug
from .base import MatchedDesign, MatcherFactory
from .distance import DistanceSpec


class MatchingManager:
    """統一配對管理器"""

    def __init__(self, config_file: Optional[str] = None):
        self.config_manager = VariantConfigManager(config_file)

        # 動態註冊所有支援的變體
        self._register_matchers()

    def _register_matchers(self):
        """動態註冊配對類別"""
        for name in self.config_manager.get_enabled_variants():
            matcher_class = self.config_manager.get_matcher_class(name)
            if matcher_class:
                MatcherFactory.register(name, matcher_class)

    def cli_choices(self) -> List[str]:
        return sorted(self.config_manager.get_cli_names())

    def build_design(
        self,
        dataset: PanelDataset,
        spec: DistanceSpec,
        C: Optional[int] = None,
        variant: str = 'instance_replacement',
        allow_drop: bool = False,
        workers: int = 1
    ) -> MatchedDesign:
        """依變體名稱建立配對設計"""
        name = self.config_manager.resolve_name(variant)
        C = C or dataset.config.C
        log_debug(f"build_design 開始: variant={name}, C={C}")
        matcher = MatcherFactory.create(name, allow_drop=allow_drop, workers=workers)
        design = matcher.match(dataset, spec, C)
        log_debug(f"{name}: {design.n_treated} 個配對組, 總距離 {design.total_distance:.6g}")
        return design

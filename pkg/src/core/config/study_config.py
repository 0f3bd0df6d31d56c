"""
研究設定管理器
從 JSON 設定檔讀取 L、C、共變數、距離與 bootstrap 參數
"""

import json
from dataclasses import dataclass, asdict, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from ..exceptions import ConfigError


@dataclass(frozen=True)
class StudyConfig:
    """研究設定

    L: 落後期數；C: 每個處理組配對的控制組數；
    pseudo_times: 控制組可用的候選比較時點（None 表示全部）
    """
    L: int = 1
    C: int = 1
    covariate_names: Tuple[str, ...] = ()
    pseudo_times: Optional[Tuple[int, ...]] = None
    pseudo_times_per_control: Optional[int] = None
    did: bool = False

    def __post_init__(self):
        if not isinstance(self.L, int) or self.L < 1:
            raise ConfigError(f"L must be a positive integer, got {self.L!r}")
        if not isinstance(self.C, int) or self.C < 1:
            raise ConfigError(f"C must be a positive integer, got {self.C!r}")
        if len(set(self.covariate_names)) != len(self.covariate_names):
            raise ConfigError("covariate names must be unique")
        if self.pseudo_times is not None:
            bad = [t for t in self.pseudo_times if t < self.L]
            if bad:
                raise ConfigError(f"pseudo_times must all be >= L={self.L}, got {bad}")
        if self.pseudo_times_per_control is not None and self.pseudo_times_per_control < 1:
            raise ConfigError("pseudo_times_per_control must be >= 1")

    @property
    def burn_in(self) -> int:
        """燒入期長度：L-1，差異中之差異估計需要 L"""
        return self.L if self.did else self.L - 1

    @property
    def k(self) -> int:
        return len(self.covariate_names)

    def with_overrides(self, **changes) -> 'StudyConfig':
        """回傳覆寫部分欄位後的新設定（None 值忽略）"""
        changes = {key: value for key, value in changes.items() if value is not None}
        return replace(self, **changes) if changes else self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['covariate_names'] = list(self.covariate_names)
        data['pseudo_times'] = list(self.pseudo_times) if self.pseudo_times is not None else None
        return data


class StudyConfigManager:
    """研究設定管理器"""

    SECTIONS = ('study', 'distance', 'bootstrap', 'falsify')

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = Path(config_file) if config_file else None
        self._raw: Dict[str, Dict[str, Any]] = {section: {} for section in self.SECTIONS}
        if self.config_file is not None:
            self._load_config()

    def _load_config(self):
        """載入設定檔"""
        if not self.config_file.exists():
            raise ConfigError(f"Study config file not found: {self.config_file}")

        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                config_data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Study config file is not valid JSON: {e}")

        if not isinstance(config_data, dict):
            raise ConfigError("Study config must be a JSON object")
        unknown = set(config_data) - set(self.SECTIONS)
        if unknown:
            raise ConfigError(f"Unknown config sections: {sorted(unknown)}")
        for section in self.SECTIONS:
            self._raw[section] = dict(config_data.get(section) or {})

    def section(self, name: str) -> Dict[str, Any]:
        return dict(self._raw.get(name, {}))

    def get_study_config(self) -> StudyConfig:
        """建立 StudyConfig"""
        study = self._raw['study']
        pseudo_times = study.get('pseudo_times')
        try:
            return StudyConfig(
                L=int(study.get('L', 1)),
                C=int(study.get('C', 1)),
                covariate_names=tuple(study.get('covariates', [])),
                pseudo_times=tuple(int(t) for t in pseudo_times) if pseudo_times is not None else None,
                pseudo_times_per_control=study.get('pseudo_times_per_control'),
                did=bool(study.get('did', False))
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid study section: {e}")

    def get_distance_spec(self):
        """建立 DistanceSpec"""
        from ..matching.distance import DistanceSpec
        return DistanceSpec.from_dict(self._raw['distance'])

    def get_bootstrap_options(self) -> Dict[str, Any]:
        return {
            'B': int(self._raw['bootstrap'].get('B', 1000)),
            'alpha': float(self._raw['bootstrap'].get('alpha', 0.05)),
            'method': self._raw['bootstrap'].get('method', 'nonparametric'),
        }

    def get_falsify_options(self) -> Dict[str, Any]:
        caliper = self._raw['falsify'].get('caliper')
        return {
            'B': int(self._raw['falsify'].get('B', 1000)),
            'split_fraction': float(self._raw['falsify'].get('split_fraction', 0.5)),
            'caliper': float(caliper) if caliper is not None else None,
        }

    def resolved(self) -> Dict[str, Any]:
        """回傳解析後的完整設定（寫入 manifest 用）"""
        return {
            'study': self.get_study_config().to_dict(),
            'distance': self.get_distance_spec().to_dict(),
            'bootstrap': self.get_bootstrap_options(),
            'falsify': self.get_falsify_options(),
        }

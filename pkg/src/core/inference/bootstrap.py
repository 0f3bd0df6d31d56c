"""
軌跡層級的區塊 bootstrap
重抽 N 條軌跡的貢獻 Δ̂_i，分母固定為原始 N1，以百分位數建構信賴區間
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from ..estimate.estimators import EstimateResult
from ..exceptions import ConfigError, ValidationError
from ..utils.logger import log_debug
from ..utils.parallel import run_in_workers


class InferenceMethod(str, Enum):
    BLOCK_BOOTSTRAP = 'block_bootstrap'
    WLS = 'wls'
    WLS_NAIVE = 'wls_naive'
    WLS_CLUSTER = 'wls_cluster'


@dataclass(frozen=True)
class BootstrapSpec:
    B: int = 1000
    alpha: float = 0.05
    seed: int = 0
    method: str = 'nonparametric'

    def __post_init__(self):
        if self.B < 100:
            raise ConfigError(f"bootstrap B must be >= 100, got {self.B}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed}")


@dataclass(frozen=True, eq=False)
class InferenceResult:
    estimate: float
    ci_lower: float
    ci_upper: float
    std_error: float
    method: InferenceMethod
    alpha: float
    B: Optional[int] = None
    replicates: Optional[np.ndarray] = None

    @property
    def ci_length(self) -> float:
        return self.ci_upper - self.ci_lower

    def covers(self, value: float) -> bool:
        return self.ci_lower <= value <= self.ci_upper

    def to_dict(self) -> Dict[str, Any]:
        return {
            'method': self.method.value,
            'estimate': self.estimate,
            'ci_lower': self.ci_lower,
            'ci_upper': self.ci_upper,
            'std_error': self.std_error,
            'alpha': self.alpha,
            'B': self.B,
        }

    def write_replicates_csv(self, path) -> Path:
        if self.replicates is None:
            raise ValidationError("no bootstrap replicates to write")
        path = Path(path)
        frame = pd.DataFrame({'replicate': np.arange(len(self.replicates)), 'estimate': self.replicates})
        frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
        return path


class BaseResampler(ABC):
    """重抽樣基底類別：回傳一次 bootstrap 複本的 Σ w_i Δ̂_i"""

    @abstractmethod
    def replicate_sum(self, contributions: np.ndarray, rng: np.random.Generator) -> float:
        pass


class NonparametricResampler(BaseResampler):
    """放回抽取 N 條軌跡"""

    def replicate_sum(self, contributions: np.ndarray, rng: np.random.Generator) -> float:
        n = contributions.size
        index = rng.integers(0, n, size=n)
        return float(contributions[index].sum())


class BayesianResampler(BaseResampler):
    """Dirichlet(1, ..., 1) 權重乘上 N（期望權重為 1）"""

    def replicate_sum(self, contributions: np.ndarray, rng: np.random.Generator) -> float:
        n = contributions.size
        weights = rng.dirichlet(np.ones(n)) * n
        return float(weights @ contributions)


class ResamplerFactory:
    """重抽樣方法工廠類別"""

    _resamplers = {
        'nonparametric': NonparametricResampler,
        'bayesian': BayesianResampler,
    }

    @classmethod
    def register(cls, name: str, resampler_class):
        cls._resamplers[name.lower()] = resampler_class

    @classmethod
    def create(cls, name: str) -> BaseResampler:
        resampler_class = cls._resamplers.get(name.lower())
        if not resampler_class:
            raise ConfigError(f"unsupported bootstrap method: {name}")
        return resampler_class()


def _replicates(contributions: np.ndarray, n_treated: int, spec: BootstrapSpec,
                indices: List[int]) -> List[float]:
    resampler = ResamplerFactory.create(spec.method)
    # 每個複本使用 (seed, b) 衍生的獨立亂數流，與切塊方式無關
    return [
        resampler.replicate_sum(contributions, np.random.default_rng([spec.seed, b])) / n_treated
        for b in indices
    ]


def block_bootstrap(result: EstimateResult, spec: BootstrapSpec, workers: int = 1) -> InferenceResult:
    """區塊 bootstrap 百分位數信賴區間"""
    contributions = result.contribution_array()
    if contributions.size < 2:
        raise ValidationError(f"degenerate bootstrap: need N >= 2 trajectories, got {contributions.size}")
    if result.n_treated < 1:
        raise ValidationError("no treated instances in the estimate")
    ResamplerFactory.create(spec.method)

    n_chunks = max(1, min(workers, spec.B))
    chunks = [list(range(i, spec.B, n_chunks)) for i in range(n_chunks)]
    chunk_results = run_in_workers(
        lambda indices: _replicates(contributions, result.n_treated, spec, indices),
        chunks,
        workers=workers
    )
    replicates = np.empty(spec.B)
    for indices, values in zip(chunks, chunk_results):
        replicates[indices] = values

    lower, upper = np.percentile(replicates, [100 * spec.alpha / 2, 100 * (1 - spec.alpha / 2)])
    inference = InferenceResult(
        estimate=result.estimate,
        ci_lower=float(lower),
        ci_upper=float(upper),
        std_error=float(replicates.std(ddof=1)),
        method=InferenceMethod.BLOCK_BOOTSTRAP,
        alpha=spec.alpha,
        B=spec.B,
        replicates=replicates
    )
    log_debug(f"block_bootstrap: B={spec.B}, method={spec.method}, N={contributions.size}, N1={result.n_treated}")
    log_debug(f"bootstrap CI: [{inference.ci_lower:.4f}, {inference.ci_upper:.4f}], SE={inference.std_error:.4f}")
    return inference

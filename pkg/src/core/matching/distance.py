"""
共變數歷史距離
支援 Mahalanobis、歐氏與標準化歐氏距離，以及 caliper 設定
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from ..exceptions import ConfigError, DimensionMismatchError, SingularScalingError
from ..utils.logger import log_debug, log_warning


class Metric(str, Enum):
    MAHALANOBIS = 'mahalanobis'
    EUCLIDEAN = 'euclidean'
    SCALED_EUCLIDEAN = 'scaled-euclidean'


class CovariancePool(str, Enum):
    CONTROLS = 'controls'   # 所有可用控制組觀測點
    ALL = 'all'             # 控制組加處理組


@dataclass(frozen=True)
class DistanceSpec:
    """距離設定"""
    metric: Metric = Metric.MAHALANOBIS
    caliper: Optional[float] = None
    covariance_pool: CovariancePool = CovariancePool.CONTROLS
    ridge_fallback: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'metric', Metric(self.metric))
        object.__setattr__(self, 'covariance_pool', CovariancePool(self.covariance_pool))
        if self.caliper is not None and not self.caliper > 0:
            raise ConfigError(f"caliper must be > 0, got {self.caliper}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DistanceSpec':
        try:
            caliper = data.get('caliper')
            return cls(
                metric=Metric(data.get('metric', Metric.MAHALANOBIS.value)),
                caliper=float(caliper) if caliper is not None else None,
                covariance_pool=CovariancePool(data.get('covariance_pool', CovariancePool.CONTROLS.value)),
                ridge_fallback=bool(data.get('ridge_fallback', True))
            )
        except ValueError as e:
            raise ConfigError(f"Invalid distance section: {e}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'metric': self.metric.value,
            'caliper': self.caliper,
            'covariance_pool': self.covariance_pool.value,
            'ridge_fallback': self.ridge_fallback,
        }


def _ridge(diagonal_sum: float, dim: int) -> float:
    eps = 1e-8 * diagonal_sum / dim
    return eps if eps > 0 else 1e-8


def fit_scaling(histories: Sequence[np.ndarray], spec: DistanceSpec) -> np.ndarray:
    """由歷史向量估計尺度矩陣 S（kL x kL）"""
    X = np.asarray(histories, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DimensionMismatchError("fit_scaling needs at least 2 histories")
    dim = X.shape[1]

    if spec.metric is Metric.EUCLIDEAN:
        return np.eye(dim)

    if spec.metric is Metric.SCALED_EUCLIDEAN:
        variances = X.var(axis=0, ddof=1)
        if np.any(variances <= 0):
            if not spec.ridge_fallback:
                raise SingularScalingError("singular scaling: zero-variance covariate")
            eps = _ridge(float(variances.sum()), dim)
            log_warning(f"零變異共變數, 加入 ridge eps={eps:.3g}")
            variances = variances + eps
        return np.diag(1.0 / variances)

    cov = np.atleast_2d(np.cov(X, rowvar=False))
    if np.linalg.matrix_rank(cov) < dim:
        if not spec.ridge_fallback:
            raise SingularScalingError("singular scaling: covariance matrix is not invertible")
        eps = _ridge(float(np.trace(cov)), dim)
        log_warning(f"共變異數矩陣奇異, 加入 ridge eps={eps:.3g}")
        cov = cov + eps * np.eye(dim)
    scaling = np.linalg.inv(cov)
    log_debug(f"fit_scaling: metric={spec.metric.value}, n={X.shape[0]}, dim={dim}")
    # 對稱化以消除數值誤差
    return (scaling + scaling.T) / 2.0


def distance(a: np.ndarray, b: np.ndarray, scaling: np.ndarray) -> float:
    """sqrt((a-b)' S (a-b))"""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.size} vs {b.size}")
    S = np.atleast_2d(np.asarray(scaling, dtype=float))
    if S.shape != (a.size, a.size):
        raise DimensionMismatchError(f"scaling is {S.shape}, vectors have length {a.size}")
    diff = a - b
    return float(np.sqrt(max(float(diff @ S @ diff), 0.0)))


def pairwise_distances(A: np.ndarray, B: np.ndarray, scaling: np.ndarray) -> np.ndarray:
    """A 的每列對 B 的每列的距離矩陣"""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatchError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if A.shape[0] == 0 or B.shape[0] == 0:
        return np.zeros((A.shape[0], B.shape[0]))
    # 二次式在 a≈b 時可能因捨入略小於 0，cdist 會回傳 nan
    return np.nan_to_num(cdist(A, B, metric='mahalanobis', VI=np.atleast_2d(scaling)), nan=0.0)

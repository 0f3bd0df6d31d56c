"""
控制組條件平均 μ0 的結果模型
預設為對 kL 期落後共變數（含截距）的最小平方法
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from ..exceptions import DegenerateDesignError, DimensionMismatchError, TooFewControlsError
from ..panel.dataset import PanelDataset, eligible_controls
from ..utils.logger import log_debug, log_warning


class BaseOutcomeModel(ABC):
    """結果模型基底類別"""

    L: int

    @abstractmethod
    def predict(self, histories: np.ndarray) -> np.ndarray:
        """histories: (n, kL) -> μ̂0，長度 n"""
        pass


@dataclass(frozen=True, eq=False)
class OutcomeModel(BaseOutcomeModel):
    """線性結果模型；被剔除的欄位係數為 0"""
    intercept: float
    coefficients: np.ndarray
    kept_columns: Tuple[int, ...]
    L: int
    n_used: int
    residual_variance: float

    def predict(self, histories: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(histories, dtype=float))
        if X.shape[1] != self.coefficients.size:
            raise DimensionMismatchError(
                f"outcome model expects {self.coefficients.size} history columns, got {X.shape[1]}"
            )
        return self.intercept + X @ self.coefficients

    @property
    def dropped_columns(self) -> Tuple[int, ...]:
        return tuple(c for c in range(self.coefficients.size) if c not in self.kept_columns)


@dataclass(frozen=True)
class ConstantOutcomeModel(BaseOutcomeModel):
    """μ̂0 ≡ value；value = 0 時偏誤校正估計量退化為配對平均差"""
    value: float = 0.0
    L: int = 1

    def predict(self, histories: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(histories, dtype=float))
        return np.full(X.shape[0], float(self.value))


@dataclass(frozen=True)
class CallableOutcomeModel(BaseOutcomeModel):
    """以已知函數作為 μ̂0（模擬資料的真實 μ0）"""
    func: Callable[[np.ndarray], np.ndarray]
    L: int = 1

    def predict(self, histories: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(histories, dtype=float))
        return np.asarray(self.func(X), dtype=float).reshape(X.shape[0])


def _independent_columns(X: np.ndarray) -> Tuple[int, ...]:
    """由左至右保留能提升 [1, X_kept] 秩的欄位"""
    kept = []
    basis = np.ones((X.shape[0], 1))
    rank = 1
    for c in range(X.shape[1]):
        candidate = np.column_stack([basis, X[:, c]])
        new_rank = np.linalg.matrix_rank(candidate)
        if new_rank > rank:
            kept.append(c)
            basis = candidate
            rank = new_rank
    return tuple(kept)


def fit_outcome_model(X: np.ndarray, y: np.ndarray, L: int = 1) -> OutcomeModel:
    """Y 對落後歷史（含截距）做最小平方法"""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    n, p = X.shape
    if n != y.size:
        raise DimensionMismatchError(f"{n} histories but {y.size} outcomes")
    if n < p + 2:
        raise TooFewControlsError(f"too few control instances to fit the outcome model: {n} < kL + 2 = {p + 2}")

    kept = _independent_columns(X)
    if not kept:
        raise DegenerateDesignError("outcome model design is degenerate: every history column is constant")
    if len(kept) < p:
        dropped = [c for c in range(p) if c not in kept]
        log_warning(f"結果模型秩不足, 剔除欄位 {dropped}")

    design = np.column_stack([np.ones(n), X[:, kept]])
    beta, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    residuals = y - design @ beta
    dof = n - design.shape[1]
    coefficients = np.zeros(p)
    coefficients[list(kept)] = beta[1:]
    model = OutcomeModel(
        intercept=float(beta[0]),
        coefficients=coefficients,
        kept_columns=kept,
        L=L,
        n_used=n,
        residual_variance=float(residuals @ residuals / dof) if dof > 0 else 0.0
    )
    log_debug(f"fit_outcome_model: n={n}, 保留 {len(kept)}/{p} 欄, 殘差變異 {model.residual_variance:.4g}")
    return model


def fit_mu0(dataset: PanelDataset, L: Optional[int] = None) -> OutcomeModel:
    """只用可用的控制組觀測點擬合 μ̂0"""
    L = L or dataset.config.L
    refs = eligible_controls(dataset, L=L)
    return fit_outcome_model(dataset.history_matrix(refs, L=L), dataset.outcomes(refs), L=L)

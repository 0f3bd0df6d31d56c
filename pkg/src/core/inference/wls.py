"""
加權最小平方法 ATT 與三種變異數
- naive：σ̂²(X'WX)^-1，σ̂² = e'We/(n-p)，即一般 WLS 軟體假設 Var(Y) = σ²W^-1
- corrected：權重只是重複次數時，Var(Y) = σ²I，
  V = σ̂² A X'W²X A，A = (X'WX)^-1，σ̂² = e'e / (n - 2p + tr(A X'X A X'W²X))
- cluster：以軌跡為群集的 CR1 三明治估計
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats

from ..exceptions import ConfigError, DegenerateDesignError, ValidationError
from ..matching.base import MatchedDesign, compute_weights
from ..panel.dataset import PanelDataset
from ..utils.logger import log_debug
from .bootstrap import InferenceMethod, InferenceResult

VARIANCE_METHODS = {
    'naive': InferenceMethod.WLS_NAIVE,
    'corrected': InferenceMethod.WLS,
    'cluster': InferenceMethod.WLS_CLUSTER,
}


@dataclass(frozen=True, eq=False)
class WlsFit:
    """WLS 擬合結果"""
    beta: np.ndarray
    X: np.ndarray
    weights: np.ndarray
    residuals: np.ndarray
    bread: np.ndarray                   # (X'WX)^-1

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def sigma2_naive(self) -> float:
        e = self.residuals
        return float(e @ (self.weights * e) / (self.n - self.p))

    def corrected_trace(self) -> float:
        """E[e'e] / σ²，當 Var(Y) = σ²I"""
        XtX = self.X.T @ self.X
        XtW2X = self.X.T @ (self.weights[:, None] ** 2 * self.X)
        A = self.bread
        return float(self.n - 2 * self.p + np.trace(A @ XtX @ A @ XtW2X))

    def sigma2_corrected(self) -> float:
        trace = self.corrected_trace()
        if trace <= 0:
            raise DegenerateDesignError(f"WLS: corrected residual degrees of freedom {trace:.4g} <= 0")
        e = self.residuals
        return float(e @ e / trace)

    def cov_naive(self) -> np.ndarray:
        return self.sigma2_naive() * self.bread

    def cov_corrected(self) -> np.ndarray:
        A = self.bread
        XtW2X = self.X.T @ (self.weights[:, None] ** 2 * self.X)
        out = self.sigma2_corrected() * A @ XtW2X @ A
        return (out + out.T) / 2

    def cov_cluster(self, clusters: Sequence) -> np.ndarray:
        """CR1：G/(G-1) * (n-1)/(n-p)"""
        clusters = np.asarray(clusters)
        scores = self.X * (self.weights * self.residuals)[:, None]
        cluster_scores = pd.DataFrame(scores).groupby(clusters, sort=True).sum().to_numpy()
        G = cluster_scores.shape[0]
        if G < 2:
            raise ValidationError("cluster variance needs at least 2 clusters")
        meat = cluster_scores.T @ cluster_scores
        scale = G / (G - 1) * (self.n - 1) / (self.n - self.p)
        out = scale * self.bread @ meat @ self.bread
        return (out + out.T) / 2


def fit_wls(X: np.ndarray, y: np.ndarray, weights: np.ndarray) -> WlsFit:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if not weights.sum() > 0:
        raise DegenerateDesignError("WLS: total weight is zero")
    n, p = X.shape
    if n <= p:
        raise DegenerateDesignError(f"WLS: {n} rows for {p} parameters")
    XtWX = X.T @ (weights[:, None] * X)
    if np.linalg.matrix_rank(XtWX) < p:
        raise DegenerateDesignError("WLS design is rank deficient")
    bread = np.linalg.inv(XtWX)
    beta = bread @ (X.T @ (weights * y))
    return WlsFit(beta=beta, X=X, weights=weights, residuals=y - X @ beta, bread=bread)


def wls_att(
    dataset: PanelDataset,
    design: MatchedDesign,
    variance: str = 'corrected',
    alpha: float = 0.05
) -> InferenceResult:
    """Y 對 [1, D, 落後共變數] 做 WLS；處理組權重 1，控制組權重 K_M/C"""
    if variance not in VARIANCE_METHODS:
        raise ConfigError(f"unknown WLS variance: {variance} (choose from {sorted(VARIANCE_METHODS)})")
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    if design.n_treated < 1:
        raise ValidationError("no treated instances to estimate")

    treated_refs = [ms.treated for ms in design.matched_sets]
    matched = compute_weights(design)
    control_refs = [ref for ref in matched.k if matched.get(ref) > 0]
    refs = treated_refs + control_refs
    weights = np.concatenate([
        np.ones(len(treated_refs)),
        np.array([matched.get(ref) for ref in control_refs], dtype=float) / design.C
    ])
    d = np.concatenate([np.ones(len(treated_refs)), np.zeros(len(control_refs))])
    X = np.column_stack([np.ones(len(refs)), d, dataset.history_matrix(refs)])
    fit = fit_wls(X, dataset.outcomes(refs), weights)

    if variance == 'naive':
        cov = fit.cov_naive()
        df = fit.n - fit.p
    elif variance == 'corrected':
        cov = fit.cov_corrected()
        df = fit.n - fit.p
    else:
        clusters = [ref.trajectory_id for ref in refs]
        cov = fit.cov_cluster(clusters)
        df = len(set(clusters)) - 1

    estimate = float(fit.beta[1])
    std_error = float(np.sqrt(max(cov[1, 1], 0.0)))
    q = float(stats.t.ppf(1 - alpha / 2, df))
    log_debug(f"wls_att[{variance}]: n={fit.n}, p={fit.p}, estimate={estimate:.6g}, se={std_error:.4g}")
    return InferenceResult(
        estimate=estimate,
        ci_lower=estimate - q * std_error,
        ci_upper=estimate + q * std_error,
        std_error=std_error,
        method=VARIANCE_METHODS[variance],
        alpha=alpha
    )

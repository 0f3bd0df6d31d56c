"""
ATT 估計量
每個估計量都以軌跡貢獻 Δ̂_i 表示，估計值 = Σ Δ̂_i / N1，供區塊 bootstrap 使用
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

from ..exceptions import InsufficientHistoryError, ValidationError
from ..matching.base import MatchedDesign, compute_weights
from ..panel.dataset import InstanceRef, PanelDataset
from ..utils.logger import log_debug
from .outcome_model import BaseOutcomeModel, ConstantOutcomeModel


class EstimatorKind(str, Enum):
    DIFF_MEANS = 'diff_means'
    BIAS_CORRECTED = 'bias_corrected'
    DID = 'did'


@dataclass(frozen=True)
class EstimateResult:
    """估計結果與每條軌跡的貢獻"""
    kind: EstimatorKind
    estimate: float
    contributions: Dict[str, float]     # 已配對的處理組 + 所有控制組軌跡
    n_treated: int
    C: int

    @property
    def n_trajectories(self) -> int:
        return len(self.contributions)

    def contribution_array(self) -> np.ndarray:
        """依 trajectory_id 排序"""
        return np.array([self.contributions[tid] for tid in sorted(self.contributions)], dtype=float)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind.value,
            'estimate': self.estimate,
            'n_treated': self.n_treated,
            'n_trajectories': self.n_trajectories,
            'C': self.C,
            'contributions': [
                {'id': tid, 'contribution': self.contributions[tid]} for tid in sorted(self.contributions)
            ],
        }


def _residuals(dataset: PanelDataset, refs: List[InstanceRef], model: BaseOutcomeModel) -> np.ndarray:
    """Y - μ̂0(X)，X 為各觀測點自己的 L 期歷史"""
    if not refs:
        return np.zeros(0)
    return dataset.outcomes(refs) - model.predict(dataset.history_matrix(refs, L=model.L))


def _previous(dataset: PanelDataset, refs: List[InstanceRef], L: int) -> List[InstanceRef]:
    """前一期觀測點；需要長度 L 的燒入期"""
    previous = []
    for ref in refs:
        prior = InstanceRef(ref.trajectory_id, ref.time - 1)
        traj = dataset.trajectory(ref.trajectory_id)
        if traj.instance_at(prior.time) is None or not traj.has_history(prior.time, L):
            raise InsufficientHistoryError(
                ref.trajectory_id, ref.time,
                f"difference-in-differences needs t-1 with a full history, i.e. a burn-in of length L={L}"
            )
        previous.append(prior)
    return previous


def _assemble(
    kind: EstimatorKind,
    dataset: PanelDataset,
    design: MatchedDesign,
    treated_terms: np.ndarray,
    control_refs: List[InstanceRef],
    control_terms: np.ndarray,
    k_over_c: np.ndarray
) -> EstimateResult:
    if design.n_treated < 1:
        raise ValidationError("no treated instances to estimate")
    pieces: Dict[str, List[float]] = {traj.id: [] for traj in dataset.trajectories if not traj.d}
    for ms, term in zip(design.matched_sets, treated_terms):
        pieces[ms.treated.trajectory_id] = [float(term)]
    for ref, weight, term in zip(control_refs, k_over_c, control_terms):
        if ref.trajectory_id not in pieces:
            raise ValidationError(f"matched control {ref} is not a control trajectory")
        pieces[ref.trajectory_id].append(-float(weight * term))

    contributions = {tid: math.fsum(values) for tid, values in sorted(pieces.items())}
    estimate = math.fsum(contributions.values()) / design.n_treated
    log_debug(f"{kind.value}: estimate={estimate:.6g}, N1={design.n_treated}, N={len(contributions)}")
    return EstimateResult(kind=kind, estimate=estimate, contributions=contributions,
                          n_treated=design.n_treated, C=design.C)


def _weighted_controls(design: MatchedDesign):
    weights = compute_weights(design)
    refs = list(weights.k)
    k_over_c = np.array([weights.get(ref) for ref in refs], dtype=float) / design.C
    return refs, k_over_c


def att_bias_corrected(dataset: PanelDataset, design: MatchedDesign,
                       model: Optional[BaseOutcomeModel] = None) -> EstimateResult:
    """偏誤校正 ATT

    處理組軌跡貢獻 Y - μ̂0(X)；控制組軌跡貢獻 -Σ_t K_M(i,t)/C (Y_it - μ̂0(X_it))
    """
    kind = EstimatorKind.BIAS_CORRECTED
    if model is None:
        model = ConstantOutcomeModel(L=dataset.config.L)
        kind = EstimatorKind.DIFF_MEANS
    treated_refs = [ms.treated for ms in design.matched_sets]
    control_refs, k_over_c = _weighted_controls(design)
    return _assemble(
        kind, dataset, design,
        _residuals(dataset, treated_refs, model),
        control_refs, _residuals(dataset, control_refs, model), k_over_c
    )


def att_diff_means(dataset: PanelDataset, design: MatchedDesign) -> EstimateResult:
    """配對平均差：(1/N1) Σ [Y_treated - (1/C) Σ Y_matched]"""
    return att_bias_corrected(dataset, design, None)


def att_did(dataset: PanelDataset, design: MatchedDesign,
            model: Optional[BaseOutcomeModel] = None) -> EstimateResult:
    """差異中之差異 ATT：以 t 與 t-1 兩期各自殘差化後的變化量相減"""
    if model is None:
        model = ConstantOutcomeModel(L=dataset.config.L)
    L = model.L
    treated_refs = [ms.treated for ms in design.matched_sets]
    control_refs, k_over_c = _weighted_controls(design)
    treated_prev = _previous(dataset, treated_refs, L)
    control_prev = _previous(dataset, control_refs, L)

    treated_terms = _residuals(dataset, treated_refs, model) - _residuals(dataset, treated_prev, model)
    control_terms = _residuals(dataset, control_refs, model) - _residuals(dataset, control_prev, model)
    return _assemble(EstimatorKind.DID, dataset, design, treated_terms, control_refs, control_terms, k_over_c)

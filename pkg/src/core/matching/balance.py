"""
配對前後的共變數平衡表
標準化差異 = (處理組平均 - 控制組平均) / 處理組標準差
"""

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np
import pandas as pd

from ..panel.dataset import PanelDataset, eligible_controls
from ..utils.logger import log_warning
from .base import MatchedDesign, compute_weights


@dataclass(frozen=True)
class BalanceRow:
    covariate: str
    treated_mean: float
    control_mean_raw: float
    control_mean_matched: float
    std_diff_raw: float
    std_diff_matched: float
    degenerate_scale: bool = False


def _std_diff(treated_mean: float, control_mean: float, scale: float) -> float:
    if scale <= 0:
        return 0.0
    return float((treated_mean - control_mean) / scale)


def balance_table(dataset: PanelDataset, design: MatchedDesign) -> List[BalanceRow]:
    """每個落後共變數一列：原始控制組為所有可用控制觀測點，配對後以 K_M/C 加權"""
    treated_refs = [ms.treated for ms in design.matched_sets]
    treated_X = dataset.history_matrix(treated_refs)
    raw_X = dataset.history_matrix(eligible_controls(dataset))

    weights = compute_weights(design)
    matched_refs = list(weights.k)
    matched_X = dataset.history_matrix(matched_refs)
    k_over_c = np.array([weights.get(ref) for ref in matched_refs], dtype=float) / design.C

    treated_mean = treated_X.mean(axis=0)
    # 權重總和為 N1
    matched_mean = k_over_c @ matched_X / k_over_c.sum()
    raw_mean = raw_X.mean(axis=0)
    scale = treated_X.std(axis=0, ddof=1) if len(treated_refs) > 1 else np.zeros(treated_X.shape[1])

    rows = []
    for c, name in enumerate(dataset.history_names()):
        degenerate = not scale[c] > 0
        if degenerate:
            log_warning(f"balance: 共變數 {name} 處理組標準差為 0 (degenerate scale), 標準化差異記為 0")
        rows.append(BalanceRow(
            covariate=name,
            treated_mean=float(treated_mean[c]),
            control_mean_raw=float(raw_mean[c]),
            control_mean_matched=float(matched_mean[c]),
            std_diff_raw=_std_diff(treated_mean[c], raw_mean[c], scale[c]),
            std_diff_matched=_std_diff(treated_mean[c], matched_mean[c], scale[c]),
            degenerate_scale=degenerate
        ))
    return rows


def balance_frame(rows: Sequence[BalanceRow]) -> pd.DataFrame:
    return pd.DataFrame([asdict(row) for row in rows], columns=list(BalanceRow.__dataclass_fields__))


def write_balance_csv(rows: Sequence[BalanceRow], path) -> Path:
    path = Path(path)
    balance_frame(rows).to_csv(path, index=False, float_format='%.10g', lineterminator='\n')
    return path

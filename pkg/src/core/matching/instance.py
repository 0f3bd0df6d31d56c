"""
GroupMatch（觀測點可重複使用）
每個處理組觀測點獨立挑選最近的 C 個控制觀測點，同一配對組內軌跡不可重複
"""

from typing import List

import numpy as np

from ..panel.dataset import PanelDataset
from ..utils.parallel import run_in_workers
from .base import BaseMatcher, MatchedDesign, MatchProblem, Variant
from .distance import DistanceSpec


def nearest_distinct(problem: MatchProblem, row: int, C: int) -> List[int]:
    """依距離由近到遠挑選，跳過組內已使用的軌跡；平手時字典序較小者優先"""
    # 控制欄位已按 (trajectory_id, time) 排序，穩定排序即保留平手順序
    order = np.argsort(problem.distances[row], kind='stable')
    used_groups = set()
    chosen = []
    for j in order:
        if not problem.admissible[row, j]:
            continue
        g = int(problem.group[j])
        if g in used_groups:
            continue
        used_groups.add(g)
        chosen.append(int(j))
        if len(chosen) == C:
            break
    return chosen


class InstanceReplacementMatcher(BaseMatcher):
    """觀測點可重複使用的 GroupMatch"""

    variant = Variant.INSTANCE_REPLACEMENT

    def _solve(self, problem: MatchProblem, rows: List[int], C: int) -> List[List[int]]:
        # 各處理組互不影響，依 worker 數切塊平行計算
        n_chunks = max(1, min(self.workers, len(rows)))
        chunks = [rows[i::n_chunks] for i in range(n_chunks)]
        chunk_results = run_in_workers(
            lambda chunk: [nearest_distinct(problem, row, C) for row in chunk],
            chunks,
            workers=self.workers
        )
        by_row = {}
        for chunk, selections in zip(chunks, chunk_results):
            by_row.update(zip(chunk, selections))
        return [by_row[row] for row in rows]


def match_instance_replacement(dataset: PanelDataset, spec: DistanceSpec, C: int,
                               allow_drop: bool = False, workers: int = 1) -> MatchedDesign:
    """GroupMatch with instance replacement"""
    return InstanceReplacementMatcher(allow_drop=allow_drop, workers=workers).match(dataset, spec, C)

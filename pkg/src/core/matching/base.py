import math
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from typing_extensions import Self

from ..exceptions import InfeasibleDesignError, ValidationError
from ..panel.dataset import InstanceRef, PanelDataset, eligible_controls
from ..utils.logger import log_debug, log_warning
from .distance import CovariancePool, DistanceSpec, fit_scaling, pairwise_distances

# 最小成本流的整數化倍率
COST_SCALE = 10 ** 6


class Variant(str, Enum):
    WITHOUT_REPLACEMENT = 'without_replacement'
    TRAJECTORY_REPLACEMENT = 'trajectory_replacement'
    INSTANCE_REPLACEMENT = 'instance_replacement'


@dataclass(frozen=True)
class MatchedSet:
    """一個處理組觀測點及其 C 個控制組觀測點"""
    treated: InstanceRef
    controls: Tuple[InstanceRef, ...]
    distances: Tuple[float, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'treated': {'id': self.treated.trajectory_id, 'time': self.treated.time},
            'controls': [
                {'id': ref.trajectory_id, 'time': ref.time, 'distance': d}
                for ref, d in zip(self.controls, self.distances)
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        return cls(
            treated=InstanceRef(str(data['treated']['id']), int(data['treated']['time'])),
            controls=tuple(InstanceRef(str(c['id']), int(c['time'])) for c in data['controls']),
            distances=tuple(float(c['distance']) for c in data['controls'])
        )


@dataclass(frozen=True)
class MatchWeights:
    """K_M(i, t)：每個控制組觀測點被使用的次數"""
    k: Dict[InstanceRef, int]

    @property
    def total(self) -> int:
        return sum(self.k.values())

    def get(self, ref: InstanceRef) -> int:
        return self.k.get(ref, 0)

    def to_rows(self) -> List[Dict[str, Any]]:
        return [{'id': ref.trajectory_id, 'time': ref.time, 'k': self.k[ref]} for ref in sorted(self.k)]


@dataclass(frozen=True)
class MatchedDesign:
    """配對設計"""
    matched_sets: Tuple[MatchedSet, ...]
    variant: Variant
    C: int
    total_distance: float
    total_cost: int = 0                         # 整數化後的總成本
    dropped: Tuple[InstanceRef, ...] = ()
    dataset_hash: Optional[str] = None

    @property
    def n_treated(self) -> int:
        return len(self.matched_sets)

    def validate(self):
        """檢查設計不變量"""
        seen_trajectories = set()
        seen_instances = set()
        for ms in self.matched_sets:
            if len(ms.controls) != self.C:
                raise ValidationError(f"matched set for {ms.treated} has {len(ms.controls)} controls, expected {self.C}")
            trajectories = [ref.trajectory_id for ref in ms.controls]
            if len(set(trajectories)) != len(trajectories):
                raise ValidationError(f"matched set for {ms.treated} reuses a control trajectory")
            if self.variant is Variant.WITHOUT_REPLACEMENT:
                if seen_trajectories.intersection(trajectories):
                    raise ValidationError("control trajectory used in more than one matched set")
                seen_trajectories.update(trajectories)
            elif self.variant is Variant.TRAJECTORY_REPLACEMENT:
                if seen_instances.intersection(ms.controls):
                    raise ValidationError("control instance used in more than one matched set")
                seen_instances.update(ms.controls)

    def to_dict(self) -> Dict[str, Any]:
        weights = compute_weights(self)
        return {
            'variant': self.variant.value,
            'C': self.C,
            'n_treated': self.n_treated,
            'total_distance': self.total_distance,
            'total_cost': self.total_cost,
            'cost_scale': COST_SCALE,
            'dataset_hash': self.dataset_hash,
            'dropped': [{'id': ref.trajectory_id, 'time': ref.time} for ref in self.dropped],
            'matched_sets': [ms.to_dict() for ms in self.matched_sets],
            'weights': weights.to_rows(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        design = cls(
            matched_sets=tuple(MatchedSet.from_dict(ms) for ms in data['matched_sets']),
            variant=Variant(data['variant']),
            C=int(data['C']),
            total_distance=float(data['total_distance']),
            total_cost=int(data.get('total_cost', 0)),
            dropped=tuple(InstanceRef(str(d['id']), int(d['time'])) for d in data.get('dropped', [])),
            dataset_hash=data.get('dataset_hash')
        )
        design.validate()
        return design


def compute_weights(design: MatchedDesign) -> MatchWeights:
    """計算每個控制組觀測點的配對權重 K_M"""
    counts = Counter(ref for ms in design.matched_sets for ref in ms.controls)
    return MatchWeights(k=dict(sorted(counts.items())))


@dataclass(frozen=True, eq=False)
class MatchProblem:
    """配對問題：處理組 x 控制組距離矩陣與可用性遮罩

    控制組欄位依 (trajectory_id, time) 排序，作為平手時的優先順序
    """
    treated: Tuple[InstanceRef, ...]
    controls: Tuple[InstanceRef, ...]
    distances: np.ndarray
    admissible: np.ndarray
    group: np.ndarray = field(repr=False)        # 每個控制欄位所屬軌跡的編號

    @classmethod
    def from_arrays(
        cls,
        treated: Sequence[InstanceRef],
        controls: Sequence[InstanceRef],
        distances: np.ndarray,
        caliper: Optional[float] = None
    ) -> Self:
        order = sorted(range(len(controls)), key=lambda j: controls[j])
        controls = tuple(controls[j] for j in order)
        distances = np.asarray(distances, dtype=float)[:, order] if len(order) else np.zeros((len(treated), 0))
        admissible = np.ones_like(distances, dtype=bool) if caliper is None else distances <= caliper
        trajectory_ids = sorted({ref.trajectory_id for ref in controls})
        index = {tid: g for g, tid in enumerate(trajectory_ids)}
        group = np.array([index[ref.trajectory_id] for ref in controls], dtype=int)
        return cls(tuple(treated), controls, distances, admissible, group)

    @classmethod
    def from_dataset(cls, dataset: PanelDataset, spec: DistanceSpec) -> Self:
        """由資料集建立配對問題（尺度矩陣依 spec.covariance_pool 估計）"""
        treated = dataset.treated_refs()
        if not treated:
            raise ValidationError("no treated instances to match")
        controls = eligible_controls(dataset)
        if not controls:
            raise InfeasibleDesignError("infeasible design: no eligible control instances")
        treated_X = dataset.history_matrix(treated)
        control_X = dataset.history_matrix(controls)
        pool = control_X if spec.covariance_pool is CovariancePool.CONTROLS else np.vstack([control_X, treated_X])
        scaling = fit_scaling(pool, spec)
        distances = pairwise_distances(treated_X, control_X, scaling)
        log_debug(f"MatchProblem: {len(treated)} 個處理組, {len(controls)} 個控制組觀測點")
        return cls.from_arrays(treated, controls, distances, spec.caliper)

    @property
    def n_groups(self) -> int:
        return int(self.group.max()) + 1 if self.group.size else 0

    def admissible_groups(self, row: int) -> int:
        """第 row 個處理組可用的相異控制軌跡數"""
        return len(set(self.group[self.admissible[row]].tolist()))

    def integer_costs(self) -> np.ndarray:
        return np.rint(self.distances * COST_SCALE).astype(np.int64)


class BaseMatcher(ABC):
    """配對演算法基底類別"""

    variant: Variant

    def __init__(self, allow_drop: bool = False, workers: int = 1):
        self.allow_drop = allow_drop
        self.workers = workers

    def match(self, dataset: PanelDataset, spec: DistanceSpec, C: int) -> MatchedDesign:
        """由資料集建立配對設計"""
        problem = MatchProblem.from_dataset(dataset, spec)
        return self.match_problem(problem, C)

    def match_problem(self, problem: MatchProblem, C: int) -> MatchedDesign:
        if C < 1:
            raise ValidationError(f"C must be >= 1, got {C}")
        rows, dropped = self._screen(problem, C)
        if not rows:
            raise InfeasibleDesignError("infeasible design: every treated instance was dropped")
        selections = self._solve(problem, rows, C)
        return self._assemble(problem, rows, selections, dropped, C)

    def _screen(self, problem: MatchProblem, C: int) -> Tuple[List[int], Tuple[InstanceRef, ...]]:
        """剔除可用相異軌跡不足 C 條的處理組（allow_drop），否則拋出"""
        rows = []
        dropped = []
        for row, ref in enumerate(problem.treated):
            if problem.admissible_groups(row) >= C:
                rows.append(row)
                continue
            if not self.allow_drop:
                raise InfeasibleDesignError(f"infeasible: treated {ref.trajectory_id}", treated=ref)
            dropped.append(ref)
        if dropped:
            log_warning(f"剔除 {len(dropped)} 個無法配對的處理組觀測點, N1 降為 {len(rows)}")
        return rows, tuple(dropped)

    @abstractmethod
    def _solve(self, problem: MatchProblem, rows: List[int], C: int) -> List[List[int]]:
        """回傳每個 row 選中的控制欄位索引（依距離、再依字典序排序）"""
        pass

    def _assemble(
        self,
        problem: MatchProblem,
        rows: List[int],
        selections: List[List[int]],
        dropped: Tuple[InstanceRef, ...],
        C: int
    ) -> MatchedDesign:
        costs = problem.integer_costs()
        matched_sets = []
        chosen_distances = []
        total_cost = 0
        for row, columns in zip(rows, selections):
            columns = sorted(columns, key=lambda j: (problem.distances[row, j], problem.controls[j]))
            dists = tuple(float(problem.distances[row, j]) for j in columns)
            matched_sets.append(MatchedSet(
                treated=problem.treated[row],
                controls=tuple(problem.controls[j] for j in columns),
                distances=dists
            ))
            chosen_distances.extend(dists)
            total_cost += int(sum(costs[row, j] for j in columns))
        design = MatchedDesign(
            matched_sets=tuple(matched_sets),
            variant=self.variant,
            C=C,
            total_distance=math.fsum(chosen_distances),
            total_cost=total_cost,
            dropped=dropped
        )
        design.validate()
        return design


class MatcherFactory:
    """配對演算法工廠類別"""

    _matchers = {}

    @classmethod
    def register(cls, name: str, matcher_class):
        """註冊配對演算法類別"""
        cls._matchers[name.lower()] = matcher_class

    @classmethod
    def create(cls, name: str, allow_drop: bool = False, workers: int = 1) -> BaseMatcher:
        """創建配對演算法實例"""
        matcher_class = cls._matchers.get(name.lower())
        if not matcher_class:
            raise ValidationError(f"unsupported matching variant: {name}")
        return matcher_class(allow_drop=allow_drop, workers=workers)

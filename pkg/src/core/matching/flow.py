"""
以最小成本流求解的 GroupMatch 設計
- trajectory_replacement：每個控制觀測點最多使用一次
- without_replacement：每條控制軌跡最多出現在一個配對組

距離乘上 COST_SCALE 後四捨五入為整數成本
"""

from typing import Dict, List, Tuple

import numpy as np
from ortools.graph.python import min_cost_flow

from ..exceptions import InfeasibleDesignError
from ..panel.dataset import PanelDataset
from ..utils.logger import log_debug
from .base import BaseMatcher, MatchedDesign, MatchProblem, Variant
from .distance import DistanceSpec


def _solve_network(
    n_nodes: int,
    tails: np.ndarray,
    heads: np.ndarray,
    capacities: np.ndarray,
    costs: np.ndarray,
    source: int,
    sink: int,
    supply: int
) -> np.ndarray:
    """求解並回傳每條弧的流量"""
    smcf = min_cost_flow.SimpleMinCostFlow()
    arcs = smcf.add_arcs_with_capacity_and_unit_cost(
        tails.astype(np.int32), heads.astype(np.int32),
        capacities.astype(np.int64), costs.astype(np.int64)
    )
    smcf.set_node_supply(source, supply)
    smcf.set_node_supply(sink, -supply)

    status = smcf.solve()
    if status != smcf.OPTIMAL:
        raise InfeasibleDesignError(f"infeasible design: min-cost-flow status {status}")
    log_debug(f"min-cost-flow: {n_nodes} 個節點, {len(tails)} 條弧, 最佳成本 {smcf.optimal_cost()}")
    return np.asarray(smcf.flows(arcs))


def _group_slices(problem: MatchProblem) -> List[Tuple[int, int]]:
    """控制欄位依軌跡連續排列，回傳每條軌跡的 [start, end)"""
    boundaries = np.flatnonzero(np.diff(problem.group)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(problem.group)]])
    return list(zip(starts.tolist(), ends.tolist()))


class TrajectoryReplacementMatcher(BaseMatcher):
    """軌跡可重複、觀測點不可重複的 GroupMatch"""

    variant = Variant.TRAJECTORY_REPLACEMENT

    def _solve(self, problem: MatchProblem, rows: List[int], C: int) -> List[List[int]]:
        # 節點：source | 處理組 | (處理組, 軌跡) | 控制觀測點 | sink
        costs = problem.integer_costs()
        n_rows = len(rows)
        n_controls = len(problem.controls)
        source = 0
        treated_node = {row: 1 + r for r, row in enumerate(rows)}

        pair_nodes: Dict[Tuple[int, int], int] = {}
        next_node = 1 + n_rows
        pair_tails, pair_heads = [], []
        link_tails, link_heads, link_costs, link_meta = [], [], [], []
        for row in rows:
            columns = np.flatnonzero(problem.admissible[row])
            for j in columns.tolist():
                key = (row, int(problem.group[j]))
                if key not in pair_nodes:
                    pair_nodes[key] = next_node
                    pair_tails.append(treated_node[row])
                    pair_heads.append(next_node)
                    next_node += 1
                link_tails.append(pair_nodes[key])
                link_meta.append((row, j))
                link_heads.append(j)
                link_costs.append(costs[row, j])

        control_offset = next_node
        sink = control_offset + n_controls
        link_heads = [control_offset + j for j in link_heads]

        tails = np.concatenate([
            np.full(n_rows, source), pair_tails, link_tails, control_offset + np.arange(n_controls)
        ])
        heads = np.concatenate([
            [treated_node[row] for row in rows], pair_heads, link_heads, np.full(n_controls, sink)
        ])
        capacities = np.concatenate([
            np.full(n_rows, C), np.ones(len(pair_tails)), np.ones(len(link_tails)), np.ones(n_controls)
        ])
        arc_costs = np.concatenate([
            np.zeros(n_rows), np.zeros(len(pair_tails)), link_costs, np.zeros(n_controls)
        ])

        flows = _solve_network(sink + 1, tails, heads, capacities, arc_costs, source, sink, C * n_rows)
        link_start = n_rows + len(pair_tails)
        link_flows = flows[link_start:link_start + len(link_tails)]

        selections = {row: [] for row in rows}
        for (row, j), flow in zip(link_meta, link_flows):
            if flow > 0:
                selections[row].append(j)
        return [selections[row] for row in rows]


class WithoutReplacementMatcher(BaseMatcher):
    """控制軌跡最多使用一次的 GroupMatch"""

    variant = Variant.WITHOUT_REPLACEMENT

    def _solve(self, problem: MatchProblem, rows: List[int], C: int) -> List[List[int]]:
        n_groups = problem.n_groups
        if C * len(rows) > n_groups:
            raise InfeasibleDesignError(
                f"infeasible design: C*N1={C * len(rows)} exceeds {n_groups} control trajectories"
            )

        # 每條軌跡只會用一次，故 (處理組, 軌跡) 的成本即該軌跡內最近觀測點的成本
        costs = problem.integer_costs()
        sub_costs = costs[rows]
        sub_admissible = problem.admissible[rows]
        big = np.iinfo(np.int64).max
        best_cost = np.full((len(rows), n_groups), big, dtype=np.int64)
        best_column = np.full((len(rows), n_groups), -1, dtype=np.int64)
        for g, (start, end) in enumerate(_group_slices(problem)):
            block = np.where(sub_admissible[:, start:end], sub_costs[:, start:end], big)
            local = np.argmin(block, axis=1)
            best_cost[:, g] = block[np.arange(len(rows)), local]
            best_column[:, g] = np.where(best_cost[:, g] < big, start + local, -1)

        # 節點：source | 處理組 | 控制軌跡 | sink
        r_index, g_index = np.nonzero(best_column >= 0)
        n_rows = len(rows)
        source = 0
        sink = 1 + n_rows + n_groups
        tails = np.concatenate([np.full(n_rows, source), 1 + r_index, 1 + n_rows + np.arange(n_groups)])
        heads = np.concatenate([1 + np.arange(n_rows), 1 + n_rows + g_index, np.full(n_groups, sink)])
        capacities = np.concatenate([np.full(n_rows, C), np.ones(len(r_index)), np.ones(n_groups)])
        arc_costs = np.concatenate([np.zeros(n_rows), best_cost[r_index, g_index], np.zeros(n_groups)])

        flows = _solve_network(sink + 1, tails, heads, capacities, arc_costs, source, sink, C * n_rows)
        middle = flows[n_rows:n_rows + len(r_index)]

        selections = [[] for _ in rows]
        for r, g, flow in zip(r_index.tolist(), g_index.tolist(), middle.tolist()):
            if flow > 0:
                selections[r].append(int(best_column[r, g]))
        return selections


def match_trajectory_replacement(dataset: PanelDataset, spec: DistanceSpec, C: int,
                                 allow_drop: bool = False) -> MatchedDesign:
    """GroupMatch with trajectory replacement"""
    return TrajectoryReplacementMatcher(allow_drop=allow_drop).match(dataset, spec, C)


def match_without_replacement(dataset: PanelDataset, spec: DistanceSpec, C: int,
                              allow_drop: bool = False) -> MatchedDesign:
    """GroupMatch without replacement"""
    return WithoutReplacementMatcher(allow_drop=allow_drop).match(dataset, spec, C)

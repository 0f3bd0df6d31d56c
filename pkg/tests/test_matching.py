import itertools

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from src.core.exceptions import InfeasibleDesignError, ValidationError
from src.core.matching.base import MatchedDesign, MatchProblem, Variant, compute_weights
from src.core.matching.distance import DistanceSpec
from src.core.matching.flow import (
    TrajectoryReplacementMatcher, WithoutReplacementMatcher,
    match_trajectory_replacement, match_without_replacement
)
from src.core.matching.instance import InstanceReplacementMatcher, match_instance_replacement
from src.core.matching.manager import MatchingManager
from src.core.panel.dataset import InstanceRef

C1A, C1B = InstanceRef('C1', 1), InstanceRef('C1', 2)
C2A, C2B = InstanceRef('C2', 1), InstanceRef('C2', 2)
T1, T2 = InstanceRef('T1', 2), InstanceRef('T2', 3)


def _controls_by_set(design):
    return {ms.treated: ms.controls for ms in design.matched_sets}


# ---- 玩具面板 ----

def test_toy_instance_replacement_shares_instance(toy_dataset):
    design = match_instance_replacement(toy_dataset, DistanceSpec(), C=1)
    assert _controls_by_set(design) == {T1: (C1A,), T2: (C1A,)}
    weights = compute_weights(design)
    assert weights.get(C1A) == 2
    assert weights.get(C1B) == 0
    assert weights.total == 2


def test_toy_instance_replacement_c2_uses_two_trajectories(toy_dataset):
    design = match_instance_replacement(toy_dataset, DistanceSpec(), C=2)
    for controls in _controls_by_set(design).values():
        assert sorted(ref.trajectory_id for ref in controls) == ['C1', 'C2']
    assert _controls_by_set(design)[T1][0] == C1A
    assert compute_weights(design).total == 4


def test_toy_trajectory_replacement(toy_dataset):
    design = match_trajectory_replacement(toy_dataset, DistanceSpec(), C=1)
    assert _controls_by_set(design) == {T1: (C1A,), T2: (C1B,)}


def test_toy_without_replacement(toy_dataset):
    design = match_without_replacement(toy_dataset, DistanceSpec(), C=1)
    controls = _controls_by_set(design)
    assert controls[T1] == (C1A,)
    assert controls[T2][0].trajectory_id == 'C2'


def test_without_replacement_counting_infeasibility(toy_dataset):
    with pytest.raises(InfeasibleDesignError, match='infeasible design'):
        match_without_replacement(toy_dataset, DistanceSpec(), C=2)


def test_instance_replacement_infeasible_treated(toy_dataset):
    with pytest.raises(InfeasibleDesignError, match='infeasible: treated T1'):
        match_instance_replacement(toy_dataset, DistanceSpec(), C=3)


def test_caliper_counts_as_infeasibility(toy_dataset):
    # Mahalanobis 距離下 T1 與 C1a 約 0.035，T2 與 C1a 約 0.07
    with pytest.raises(InfeasibleDesignError):
        match_instance_replacement(toy_dataset, DistanceSpec(caliper=0.05), C=1)
    design = match_instance_replacement(toy_dataset, DistanceSpec(caliper=0.05), C=1, allow_drop=True)
    assert design.n_treated == 1
    assert design.dropped == (T2,)
    assert compute_weights(design).total == 1


def test_c_must_be_positive(toy_dataset):
    with pytest.raises(ValidationError):
        match_instance_replacement(toy_dataset, DistanceSpec(), C=0)


def test_no_treated_instances(make_panel):
    dataset = make_panel([['a', 1, 0, 1.0, 0.0], ['a', 2, 0, 2.0, 1.0]])
    with pytest.raises(ValidationError, match='no treated instances'):
        match_instance_replacement(dataset, DistanceSpec(), C=1)


def test_design_dict_round_trip(toy_dataset):
    design = match_trajectory_replacement(toy_dataset, DistanceSpec(), C=1)
    data = design.to_dict()
    assert data['weights'] == [
        {'id': 'C1', 'time': 1, 'k': 1}, {'id': 'C1', 'time': 2, 'k': 1}
    ]
    assert MatchedDesign.from_dict(data) == design


def test_from_dict_rejects_invalid_design(toy_dataset):
    data = match_instance_replacement(toy_dataset, DistanceSpec(), C=1).to_dict()
    data['variant'] = Variant.TRAJECTORY_REPLACEMENT.value
    with pytest.raises(ValidationError, match='more than one matched set'):
        MatchedDesign.from_dict(data)


def test_manager_resolves_cli_names(toy_dataset):
    manager = MatchingManager()
    assert manager.cli_choices() == ['instance', 'trajectory', 'without']
    design = manager.build_design(toy_dataset, DistanceSpec(), C=1, variant='trajectory')
    assert design.variant is Variant.TRAJECTORY_REPLACEMENT
    with pytest.raises(ValidationError):
        manager.build_design(toy_dataset, DistanceSpec(), C=1, variant='full')


def test_trajectory_replacement_unique_perfect_assignment():
    # 2 處理組、2 條各 1 個觀測點的控制軌跡
    treated = [InstanceRef('t1', 1), InstanceRef('t2', 1)]
    controls = [InstanceRef('a', 1), InstanceRef('b', 1)]
    D = np.array([[1.0, 2.0], [1.5, 4.0]])
    design = TrajectoryReplacementMatcher().match_problem(MatchProblem.from_arrays(treated, controls, D), 1)
    # 1+4=5 對 2+1.5=3.5
    assert _controls_by_set(design) == {treated[0]: (controls[1],), treated[1]: (controls[0],)}
    assert design.total_distance == pytest.approx(3.5)


def test_equal_distances_total_is_tie_free():
    treated = [InstanceRef('t1', 1), InstanceRef('t2', 1)]
    controls = [InstanceRef(g, t) for g in 'abc' for t in (1, 2)]
    problem = MatchProblem.from_arrays(treated, controls, np.ones((2, 6)))
    for matcher in (InstanceReplacementMatcher(), TrajectoryReplacementMatcher(), WithoutReplacementMatcher()):
        assert matcher.match_problem(problem, 1).total_distance == 2.0


# ---- exhaustive oracles ----

def _random_problem(rng, n_treated, n_groups, max_instances, k=2):
    treated = [InstanceRef(f"t{i}", 1) for i in range(n_treated)]
    controls = []
    for g in range(n_groups):
        for t in range(1, int(rng.integers(1, max_instances + 1)) + 1):
            controls.append(InstanceRef(f"c{g}", t))
    A = rng.normal(size=(n_treated, k))
    B = rng.normal(size=(len(controls), k))
    D = np.sqrt(((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2))
    return MatchProblem.from_arrays(treated, controls, D)


def _candidate_sets(problem, row, C):
    columns = np.flatnonzero(problem.admissible[row])
    return [combo for combo in itertools.combinations(columns.tolist(), C)
            if len({int(problem.group[j]) for j in combo}) == C]


def _brute_force(problem, C, variant):
    """所有合法設計的最小整數成本；不可行時回傳 None"""
    costs = problem.integer_costs()
    options = [_candidate_sets(problem, row, C) for row in range(len(problem.treated))]
    best = None
    for choice in itertools.product(*options):
        used = [j for combo in choice for j in combo]
        if variant is Variant.TRAJECTORY_REPLACEMENT and len(set(used)) != len(used):
            continue
        if variant is Variant.WITHOUT_REPLACEMENT:
            groups = [int(problem.group[j]) for j in used]
            if len(set(groups)) != len(groups):
                continue
        total = int(sum(costs[row, j] for row, combo in enumerate(choice) for j in combo))
        best = total if best is None else min(best, total)
    return best


def _seeds(fast, total, offset=0):
    """前 fast 個種子每次都跑，其餘標記為 slow"""
    return [offset + s if s < fast else pytest.param(offset + s, marks=pytest.mark.slow) for s in range(total)]


MATCHERS = {
    Variant.INSTANCE_REPLACEMENT: InstanceReplacementMatcher,
    Variant.TRAJECTORY_REPLACEMENT: TrajectoryReplacementMatcher,
    Variant.WITHOUT_REPLACEMENT: WithoutReplacementMatcher,
}


@pytest.mark.parametrize('seed', _seeds(40, 200))
def test_flow_and_greedy_equal_exhaustive_optimum(seed):
    rng = np.random.default_rng(seed)
    n_treated = int(rng.integers(1, 4))
    C = int(rng.integers(1, 3))
    problem = _random_problem(rng, n_treated, n_groups=int(rng.integers(2, 5)), max_instances=3)
    for variant, matcher_class in MATCHERS.items():
        expected = _brute_force(problem, C, variant)
        if expected is None:
            with pytest.raises(InfeasibleDesignError):
                matcher_class().match_problem(problem, C)
            continue
        design = matcher_class().match_problem(problem, C)
        assert design.total_cost == expected
        assert compute_weights(design).total == C * n_treated


@pytest.mark.parametrize('seed', _seeds(3, 40, offset=500))
def test_one_to_one_designs_equal_exhaustive_optimum(seed):
    # 最多 6 個處理組、8 個控制觀測點
    rng = np.random.default_rng(seed)
    n_treated = int(rng.integers(4, 7))
    n_groups = int(rng.integers(4, 9))
    problem = _random_problem(rng, n_treated, n_groups=n_groups, max_instances=max(1, 8 // n_groups))
    assert len(problem.controls) <= 8
    for variant, matcher_class in MATCHERS.items():
        expected = _brute_force(problem, 1, variant)
        if expected is None:
            with pytest.raises(InfeasibleDesignError):
                matcher_class().match_problem(problem, 1)
            continue
        assert matcher_class().match_problem(problem, 1).total_cost == expected


def test_instance_replacement_matches_per_treated_enumeration():
    rng = np.random.default_rng(11)
    # 5 處理組、20 個控制觀測點
    treated = [InstanceRef(f"t{i}", 1) for i in range(5)]
    controls = [InstanceRef(f"c{g}", t) for g in range(5) for t in range(1, 5)]
    D = rng.uniform(size=(5, 20))
    problem = MatchProblem.from_arrays(treated, controls, D)
    C = 3
    design = InstanceReplacementMatcher().match_problem(problem, C)
    costs = problem.integer_costs()
    for row, ms in enumerate(design.matched_sets):
        best = min(sum(costs[row, j] for j in combo) for combo in _candidate_sets(problem, row, C))
        chosen = [problem.controls.index(ref) for ref in ms.controls]
        assert sum(costs[row, j] for j in chosen) == best


def test_without_replacement_equals_hungarian_oracle():
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(2, 7))
        treated = [InstanceRef(f"t{i}", 1) for i in range(n)]
        controls = [InstanceRef(f"c{j}", 1) for j in range(n)]
        D = rng.uniform(size=(n, n))
        problem = MatchProblem.from_arrays(treated, controls, D)
        design = WithoutReplacementMatcher().match_problem(problem, 1)
        costs = problem.integer_costs()
        rows, cols = linear_sum_assignment(costs)
        assert design.total_cost == int(costs[rows, cols].sum())


@pytest.mark.parametrize('seed', _seeds(30, 500, offset=1000))
def test_fixed_timepoint_matches_are_never_closer(seed):
    rng = np.random.default_rng(seed)
    problem = _random_problem(rng, n_treated=3, n_groups=4, max_instances=3)
    C = int(rng.integers(1, 4))
    design = InstanceReplacementMatcher().match_problem(problem, C)
    slices = {}
    for j, g in enumerate(problem.group.tolist()):
        slices.setdefault(g, []).append(j)
    # 每條控制軌跡只保留一個指定時點的所有組合
    for designated in itertools.product(*slices.values()):
        for row, ms in enumerate(design.matched_sets):
            fixed = np.sort(problem.distances[row, list(designated)])[:C]
            assert np.all(np.asarray(ms.distances) <= fixed + 1e-12)


@pytest.mark.parametrize('seed', range(30))
def test_total_distance_orders_across_variants(seed):
    rng = np.random.default_rng(2000 + seed)
    problem = _random_problem(rng, n_treated=int(rng.integers(1, 4)), n_groups=5, max_instances=3)
    C = 1
    totals = [MATCHERS[v]().match_problem(problem, C).total_cost for v in (
        Variant.INSTANCE_REPLACEMENT, Variant.TRAJECTORY_REPLACEMENT, Variant.WITHOUT_REPLACEMENT)]
    assert totals[0] <= totals[1] <= totals[2]


def test_instance_replacement_independent_of_treated_order():
    rng = np.random.default_rng(7)
    problem = _random_problem(rng, n_treated=6, n_groups=5, max_instances=4)
    order = rng.permutation(6)
    shuffled = MatchProblem.from_arrays(
        [problem.treated[i] for i in order], problem.controls, problem.distances[order]
    )
    a = _controls_by_set(InstanceReplacementMatcher().match_problem(problem, 2))
    b = _controls_by_set(InstanceReplacementMatcher().match_problem(shuffled, 2))
    assert a == b


def test_instance_replacement_same_design_with_workers(random_panel):
    dataset = random_panel(5, n_treated=12, n_control=8)
    serial = match_instance_replacement(dataset, DistanceSpec(), C=2, workers=1)
    threaded = match_instance_replacement(dataset, DistanceSpec(), C=2, workers=4)
    assert serial == threaded


def test_tie_break_prefers_lexicographic_reference():
    treated = [InstanceRef('t', 1)]
    controls = [InstanceRef('b', 1), InstanceRef('a', 2), InstanceRef('a', 1)]
    problem = MatchProblem.from_arrays(treated, controls, np.array([[1.0, 1.0, 1.0]]))
    design = InstanceReplacementMatcher().match_problem(problem, 2)
    assert design.matched_sets[0].controls == (InstanceRef('a', 1), InstanceRef('b', 1))

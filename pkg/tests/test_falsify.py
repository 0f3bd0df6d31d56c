import numpy as np
import pytest
from scipy import stats

from src.core.exceptions import ConfigError, InsufficientPairsError, ValidationError
from src.core.falsify.timepoint_test import FalsifySpec, scan_timepoints, timepoint_test
from src.core.simlab.scenarios import Scenario, ScenarioSpec, generate_scenario


@pytest.fixture
def null_panel():
    dataset, _ = generate_scenario(ScenarioSpec(scenario=Scenario.TIME_DRIFT, n_control=200, seed=3))
    return dataset


def test_spec_validation():
    with pytest.raises(ConfigError):
        FalsifySpec(t0=1, t1=1)
    with pytest.raises(ConfigError):
        FalsifySpec(t0=1, t1=2, B=0)
    with pytest.raises(ConfigError):
        FalsifySpec(t0=1, t1=2, split_fraction=1.0)


def test_timepoints_must_cover_lags(null_panel):
    with pytest.raises(ConfigError):
        timepoint_test(null_panel, FalsifySpec(t0=0, t1=2))


def test_p_value_range_and_pairs(null_panel):
    result = timepoint_test(null_panel, FalsifySpec(t0=1, t1=2, B=199, seed=1))
    assert 1 / 200 <= result.p_value <= 1.0
    assert result.n_pairs == 100
    assert result.reference_time == 2
    treated_ids = {a.trajectory_id for a, _ in result.pairs}
    control_ids = {b.trajectory_id for _, b in result.pairs}
    assert not treated_ids & control_ids
    assert all(a.time == 2 and b.time == 1 for a, b in result.pairs)


def test_deterministic_given_seed_and_workers(null_panel):
    spec = FalsifySpec(t0=1, t1=2, B=300, seed=9)
    a = timepoint_test(null_panel, spec, workers=1)
    b = timepoint_test(null_panel, spec, workers=3)
    assert a.to_dict() == b.to_dict()
    assert np.array_equal(a.draws, b.draws)


def test_sign_flip_distribution_is_symmetric(null_panel):
    result = timepoint_test(null_panel, FalsifySpec(t0=1, t1=2, B=5000, seed=2))
    assert abs(stats.skew(result.draws)) < 0.1
    assert abs(np.mean(result.draws)) < 3 * np.std(result.draws) / np.sqrt(5000)


def test_strong_trend_is_detected():
    dataset, _ = generate_scenario(ScenarioSpec(scenario=Scenario.TIME_DRIFT, n_control=400, gamma=1.0, seed=5))
    result = timepoint_test(dataset, FalsifySpec(t0=1, t1=2, B=999, seed=0))
    assert result.p_value == pytest.approx(1 / 1000)
    assert result.statistic > 0


def test_linear_history_shift_leaves_p_value_unchanged(make_panel, null_panel):
    rows = []
    for traj in null_panel.trajectories:
        for inst in traj.instances:
            x = np.asarray(inst.covariates)
            rows.append([inst.trajectory_id, inst.time, inst.z, inst.outcome + 2.0 * x[0] - x[2] + 1.0, *x.tolist()])
    shifted = make_panel(rows, covariates=null_panel.config.covariate_names, L=1, C=1)
    spec = FalsifySpec(t0=1, t1=2, B=500, seed=4)
    a = timepoint_test(null_panel, spec)
    b = timepoint_test(shifted, spec)
    assert b.p_value == a.p_value
    assert b.statistic == pytest.approx(a.statistic, abs=1e-9)


def test_smaller_timepoint_becomes_reference(make_panel):
    rng = np.random.default_rng(0)
    rows = []
    for i in range(40):
        times = (1, 2) if i < 15 else (1,)
        for t in times:
            x = rng.normal(size=2)
            rows.append([f"c{i:02d}", t, 0, float(x.sum() + rng.normal()), *x.tolist()])
    dataset = make_panel(rows, covariates=('x1', 'x2'), L=1, C=1)
    result = timepoint_test(dataset, FalsifySpec(t0=2, t1=1, B=99, seed=0))
    assert result.reference_time == 2
    assert all(a.time == 2 and b.time == 1 for a, b in result.pairs)


def test_caliper_leaving_no_pairs(null_panel):
    with pytest.raises(InsufficientPairsError, match='caliper leaves zero pairs'):
        timepoint_test(null_panel, FalsifySpec(t0=1, t1=2, B=10, caliper=1e-9))


def test_caliper_discards_far_pairs(null_panel):
    loose = timepoint_test(null_panel, FalsifySpec(t0=1, t1=2, B=10, seed=1))
    tight = timepoint_test(null_panel, FalsifySpec(t0=1, t1=2, B=10, seed=1, caliper=1.5))
    assert tight.n_pairs < loose.n_pairs


def test_missing_timepoint(null_panel):
    with pytest.raises(ValidationError):
        timepoint_test(null_panel, FalsifySpec(t0=1, t1=5, B=10))


def test_scan_reports_each_consecutive_pair(make_panel):
    rng = np.random.default_rng(1)
    rows = []
    for i in range(60):
        for t in (1, 2, 3):
            x = rng.normal(size=2)
            rows.append([f"c{i:02d}", t, 0, float(x.sum() + rng.normal()), *x.tolist()])
    dataset = make_panel(rows, covariates=('x1', 'x2'), L=1, C=1)
    results = scan_timepoints(dataset, [3, 1, 2], FalsifySpec(t0=1, t1=2, B=99, seed=0))
    assert [(r.t0, r.t1) for r in results] == [(1, 2), (2, 3)]
    assert all(0 < r.p_value <= 1 for r in results)

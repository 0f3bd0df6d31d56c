"""
大規模重現測試，預設不執行：pytest -m slow
"""

import math

import numpy as np
import pytest

from src.cli.main import main
from src.core.estimate.estimators import att_bias_corrected, att_diff_means
from src.core.estimate.outcome_model import fit_mu0
from src.core.matching.base import compute_weights
from src.core.matching.distance import DistanceSpec
from src.core.matching.manager import MatchingManager
from src.core.simlab.experiments import run_coverage_experiment, run_falsification_experiment
from src.core.simlab.scenarios import Scenario, ScenarioSpec

pytestmark = pytest.mark.slow

WORKERS = 8

# 情境 -> {方法: (覆蓋率, 容許誤差, 平均 CI 長度)}
COVERAGE_TARGETS = {
    Scenario.LINEAR: {
        'wls': (0.932, 0.025, 0.25), 'wls_cluster': (0.948, 0.025, 0.27), 'bootstrap': (0.948, 0.020, 0.27),
    },
    Scenario.LINEAR_CORRELATED: {
        'wls': (0.894, 0.025, 0.25), 'wls_cluster': (None, None, 0.27), 'bootstrap': (0.945, 0.020, 0.30),
    },
    Scenario.NONLINEAR_CORRELATED: {
        'wls': (0.834, 0.030, 0.26), 'wls_cluster': (None, None, 0.28), 'bootstrap': (0.898, 0.030, 0.31),
    },
}


@pytest.mark.parametrize('scenario', list(COVERAGE_TARGETS))
def test_coverage_and_interval_length(scenario):
    report = run_coverage_experiment(ScenarioSpec(scenario=scenario, seed=2024), reps=1000, B=500,
                                     workers=WORKERS)
    assert report.n_failed == 0
    summaries = {m.method: m for m in report.methods}
    for method, (coverage, tolerance, length) in COVERAGE_TARGETS[scenario].items():
        summary = summaries[method]
        if coverage is not None:
            assert abs(summary.coverage - coverage) <= tolerance, (method, summary.coverage)
        assert abs(summary.mean_ci_length - length) <= 0.03, (method, summary.mean_ci_length)


def test_falsification_power():
    report = run_falsification_experiment(gammas=(0.0, 0.1, 0.25), reps=1000, B=1000, seed=2024,
                                          workers=WORKERS)
    rates = {r.gamma: r.rejection_rate for r in report.rejections}
    assert abs(rates[0.0] - 0.049) <= 0.02
    assert abs(rates[0.1] - 0.327) <= 0.04
    assert abs(rates[0.25] - 0.981) <= 0.015


def _exact_copy_panel(make_panel, rng):
    """每個處理組觀測點的共變數都複製自某個控制組觀測點"""
    n_control, n_times = int(rng.integers(5, 9)), int(rng.integers(1, 4))
    rows, pool = [], []
    for i in range(n_control):
        for t in range(1, n_times + 1):
            x = rng.normal(size=2).round(3)
            pool.append(x)
            rows.append([f"c{i}", t, 0, float(rng.normal()), *x.tolist()])
    for i in range(int(rng.integers(1, 6))):
        x = pool[int(rng.integers(len(pool)))]
        rows.append([f"t{i}", int(rng.integers(1, n_times + 1)), 1, float(rng.normal() + 1), *x.tolist()])
    return make_panel(rows, ('x1', 'x2'), L=1, C=1)


def test_fuzzed_estimator_identities(make_panel, random_panel):
    manager = MatchingManager()
    for case in range(1000):
        rng = np.random.default_rng([77, case])
        C = int(rng.integers(1, 3))
        dataset = random_panel(int(rng.integers(1 << 30)), n_treated=int(rng.integers(1, 7)),
                               n_control=int(rng.integers(5, 9)), C=C)
        design = manager.build_design(dataset, DistanceSpec())
        assert compute_weights(design).total == C * design.n_treated
        model = fit_mu0(dataset)
        result = att_bias_corrected(dataset, design, model)
        assert abs(math.fsum(result.contributions.values()) / result.n_treated - result.estimate) <= 1e-12

        exact = _exact_copy_panel(make_panel, rng)
        exact_design = manager.build_design(exact, DistanceSpec(metric='euclidean'), C=1)
        assert exact_design.total_distance == 0.0
        adjusted = att_bias_corrected(exact, exact_design, fit_mu0(exact))
        assert adjusted.estimate == pytest.approx(att_diff_means(exact, exact_design).estimate, abs=1e-12)


def _run_twice(tmp_path, argv):
    outputs = []
    for threads in ('1', str(WORKERS)):
        out = tmp_path / f"threads{threads}"
        assert main(['--seed', '11', '--threads', threads, '--out', str(out), *argv]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    return outputs


def test_simulate_is_identical_across_worker_counts(tmp_path):
    first, second = _run_twice(tmp_path, ['simulate', '--reps', '20', '--B', '200',
                                          '--methods', 'wls', 'wls_naive', 'wls_cluster', 'bootstrap'])
    assert first == second


def test_falsification_experiment_is_identical_across_worker_counts(tmp_path):
    first, second = _run_twice(tmp_path, ['simulate', '--experiment', 'falsification', '--reps', '20',
                                          '--B', '200', '--n-control', '300'])
    assert first == second

"""
蒙地卡羅實驗
- 覆蓋率實驗：每次複本生成資料、1:C 配對、偏誤校正估計，再比較各推論方法的覆蓋率與 CI 長度
- 證偽實驗：每個 γ 下時點檢定 P 值 < α 的比例
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Sequence, Tuple

import numpy as np
import pandas as pd

from ..estimate.estimators import att_bias_corrected
from ..estimate.outcome_model import CallableOutcomeModel, fit_mu0
from ..exceptions import ConfigError, RollMatchError
from ..falsify.timepoint_test import FalsifySpec, timepoint_test
from ..inference.bootstrap import BootstrapSpec, InferenceResult, block_bootstrap
from ..inference.wls import wls_att
from ..matching.distance import DistanceSpec
from ..matching.manager import MatchingManager
from ..utils.logger import log_info, log_warning
from ..utils.parallel import run_in_workers
from .scenarios import Scenario, ScenarioSpec, generate_scenario

COVERAGE_METHODS = ('wls', 'wls_cluster', 'bootstrap')
ALL_METHODS = ('wls', 'wls_naive', 'wls_cluster', 'bootstrap')
OUTCOME_MODELS = ('ols', 'oracle')


@dataclass(frozen=True)
class MethodSummary:
    method: str
    coverage: float
    coverage_mc_se: float
    mean_ci_length: float
    ci_length_mc_se: float
    mean_estimate: float
    n: int


@dataclass(frozen=True)
class RejectionSummary:
    gamma: float
    rejection_rate: float
    mc_se: float
    n: int


@dataclass(frozen=True)
class ExperimentReport:
    """實驗報告；每個比例都附上蒙地卡羅標準誤"""
    experiment: str
    scenario: str
    reps: int
    n_failed: int
    settings: Dict[str, Any] = field(default_factory=dict)
    methods: Tuple[MethodSummary, ...] = ()
    rejections: Tuple[RejectionSummary, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'experiment': self.experiment,
            'scenario': self.scenario,
            'reps': self.reps,
            'n_failed': self.n_failed,
            'settings': self.settings,
        }
        if self.methods:
            data['coverage'] = {m.method: asdict(m) for m in self.methods}
        if self.rejections:
            data['rejection'] = [asdict(r) for r in self.rejections]
        return data

    def to_frame(self) -> pd.DataFrame:
        if self.methods:
            return pd.DataFrame([asdict(m) for m in self.methods]).set_index('method')
        return pd.DataFrame([asdict(r) for r in self.rejections]).set_index('gamma')

    def render_table(self) -> str:
        """純文字表格"""
        title = f"{self.experiment} | scenario={self.scenario} | reps={self.reps} | failed={self.n_failed}"
        return f"{title}\n{self.to_frame().to_string(float_format=lambda v: f'{v:.4f}')}\n"


def _proportion_se(p: float, n: int) -> float:
    return float(np.sqrt(p * (1 - p) / n)) if n > 0 else float('nan')


def _derived_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def _check_reps(reps: int):
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")
    if reps < 100:
        log_warning(f"reps={reps} < 100, 蒙地卡羅誤差偏大")


def _coverage_replicate(
    spec: ScenarioSpec,
    rep: int,
    methods: Sequence[str],
    B: int,
    alpha: float,
    variant: str,
    outcome_model: str,
    manager: MatchingManager
) -> Dict[str, InferenceResult]:
    rng = np.random.default_rng([spec.seed, rep])
    dataset, truth = generate_scenario(spec, rng=rng)
    design = manager.build_design(dataset, DistanceSpec(), variant=variant)
    if outcome_model == 'oracle':
        model = CallableOutcomeModel(truth.mu0, L=dataset.config.L)
    else:
        model = fit_mu0(dataset)
    estimate = att_bias_corrected(dataset, design, model)

    results = {}
    for method in methods:
        if method == 'bootstrap':
            bootstrap_spec = BootstrapSpec(B=B, alpha=alpha, seed=_derived_seed(spec.seed, rep))
            results[method] = block_bootstrap(estimate, bootstrap_spec)
        else:
            variance = {'wls': 'corrected', 'wls_naive': 'naive', 'wls_cluster': 'cluster'}[method]
            results[method] = wls_att(dataset, design, variance=variance, alpha=alpha)
    return results


def run_coverage_experiment(
    spec: ScenarioSpec,
    reps: int = 1000,
    methods: Sequence[str] = COVERAGE_METHODS,
    B: int = 500,
    variant: str = 'instance_replacement',
    outcome_model: str = 'ols',
    alpha: float = 0.05,
    workers: int = 1
) -> ExperimentReport:
    """覆蓋率與平均 CI 長度"""
    _check_reps(reps)
    if spec.scenario is Scenario.TIME_DRIFT:
        raise ConfigError("coverage experiments need a scenario with treated units")
    unknown = [m for m in methods if m not in ALL_METHODS]
    if unknown:
        raise ConfigError(f"unknown inference methods: {unknown} (choose from {list(ALL_METHODS)})")
    if outcome_model not in OUTCOME_MODELS:
        raise ConfigError(f"unknown outcome model: {outcome_model} (choose from {list(OUTCOME_MODELS)})")

    manager = MatchingManager()
    outcomes = run_in_workers(
        lambda rep: _coverage_replicate(spec, rep, methods, B, alpha, variant, outcome_model, manager),
        range(reps),
        workers=workers,
        return_exceptions=True
    )
    succeeded = []
    n_failed = 0
    for rep, outcome in enumerate(outcomes):
        if isinstance(outcome, RollMatchError):
            n_failed += 1
            log_warning(f"複本 {rep} 失敗: {outcome}")
        elif isinstance(outcome, BaseException):
            raise outcome
        else:
            succeeded.append(outcome)

    summaries = []
    for method in methods:
        covers = np.array([r[method].covers(spec.delta) for r in succeeded], dtype=float)
        lengths = np.array([r[method].ci_length for r in succeeded], dtype=float)
        estimates = np.array([r[method].estimate for r in succeeded], dtype=float)
        n = len(succeeded)
        coverage = float(covers.mean()) if n else float('nan')
        summaries.append(MethodSummary(
            method=method,
            coverage=coverage,
            coverage_mc_se=_proportion_se(coverage, n),
            mean_ci_length=float(lengths.mean()) if n else float('nan'),
            ci_length_mc_se=float(lengths.std(ddof=1) / np.sqrt(n)) if n > 1 else float('nan'),
            mean_estimate=float(estimates.mean()) if n else float('nan'),
            n=n
        ))

    report = ExperimentReport(
        experiment='coverage',
        scenario=spec.scenario.value,
        reps=reps,
        n_failed=n_failed,
        settings={
            'n_treated': spec.n_treated, 'n_control': spec.n_control, 'delta': spec.delta,
            'seed': spec.seed, 'B': B, 'alpha': alpha, 'variant': variant,
            'outcome_model': outcome_model, 'C': spec.study_config().C, 'L': spec.study_config().L,
            'metric': 'mahalanobis',
        },
        methods=tuple(summaries)
    )
    log_info(f"coverage 實驗完成: {len(succeeded)}/{reps} 個複本成功")
    return report


def _falsification_replicate(spec: ScenarioSpec, gamma_index: int, rep: int, B: int) -> float:
    rng = np.random.default_rng([spec.seed, gamma_index, rep])
    dataset, _ = generate_scenario(spec, rng=rng)
    test = FalsifySpec(t0=1, t1=2, B=B, seed=_derived_seed(spec.seed, gamma_index, rep))
    return timepoint_test(dataset, test).p_value


def run_falsification_experiment(
    gammas: Sequence[float] = (0.0, 0.1, 0.25),
    reps: int = 1000,
    B: int = 1000,
    seed: int = 0,
    n_control: int = 1000,
    alpha: float = 0.05,
    workers: int = 1
) -> ExperimentReport:
    """各 γ 下的拒絕比例"""
    _check_reps(reps)
    rows = []
    n_failed = 0
    for g, gamma in enumerate(gammas):
        spec = ScenarioSpec(scenario=Scenario.TIME_DRIFT, n_control=n_control, gamma=float(gamma), seed=seed)
        outcomes = run_in_workers(
            lambda rep: _falsification_replicate(spec, g, rep, B),
            range(reps),
            workers=workers,
            return_exceptions=True
        )
        p_values = []
        for rep, outcome in enumerate(outcomes):
            if isinstance(outcome, RollMatchError):
                n_failed += 1
                log_warning(f"γ={gamma} 複本 {rep} 失敗: {outcome}")
            elif isinstance(outcome, BaseException):
                raise outcome
            else:
                p_values.append(outcome)
        n = len(p_values)
        rate = float(np.mean(np.asarray(p_values) < alpha)) if n else float('nan')
        rows.append(RejectionSummary(gamma=float(gamma), rejection_rate=rate, mc_se=_proportion_se(rate, n), n=n))
        log_info(f"γ={gamma}: 拒絕比例 {rate:.3f} ({n} 個複本)")

    return ExperimentReport(
        experiment='falsification',
        scenario=Scenario.TIME_DRIFT.value,
        reps=reps,
        n_failed=n_failed,
        settings={'gammas': [float(g) for g in gammas], 'B': B, 'seed': seed,
                  'n_control': n_control, 'alpha': alpha},
        rejections=tuple(rows)
    )

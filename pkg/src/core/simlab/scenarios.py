"""
模擬資料生成
- linear / linear_correlated / nonlinear_correlated：400 處理、600 控制，8 個共變數
- time_drift：只有控制組、兩個時點，用於時點證偽檢定
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from ..config.study_config import StudyConfig
from ..exceptions import ConfigError
from ..panel.dataset import Instance, PanelDataset, Trajectory
from ..utils.logger import log_debug

A_L = np.log(1.25)
A_M = np.log(2.0)
A_H = np.log(4.0)
A_VH = np.log(10.0)

MAIN_COVARIATES = tuple(f"x{j}" for j in range(1, 9))
DRIFT_COVARIATES = tuple(f"x{j}" for j in range(1, 5))
CONTROL_TIMES = (1, 2, 3)


class Scenario(str, Enum):
    LINEAR = 'linear'
    LINEAR_CORRELATED = 'linear_correlated'
    NONLINEAR_CORRELATED = 'nonlinear_correlated'
    TIME_DRIFT = 'time_drift'

    @property
    def correlated(self) -> bool:
        return self in (Scenario.LINEAR_CORRELATED, Scenario.NONLINEAR_CORRELATED)


@dataclass(frozen=True)
class ScenarioSpec:
    """模擬設定；n_treated / n_control 為 None 時採各情境預設值"""
    scenario: Scenario = Scenario.LINEAR
    n_treated: Optional[int] = None
    n_control: Optional[int] = None
    gamma: float = 0.0                   # time_drift 第二時點的時間趨勢
    delta: float = 0.25
    seed: int = 0
    error_correlation: float = 0.8
    step_sd: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, 'scenario', Scenario(self.scenario))
        if self.n_treated is None:
            object.__setattr__(self, 'n_treated', 0 if self.scenario is Scenario.TIME_DRIFT else 400)
        if self.n_control is None:
            object.__setattr__(self, 'n_control', 1000 if self.scenario is Scenario.TIME_DRIFT else 600)
        if self.n_treated < 0 or self.n_control < 1:
            raise ConfigError(f"invalid sample sizes: n_treated={self.n_treated}, n_control={self.n_control}")
        if self.scenario is Scenario.TIME_DRIFT and self.n_treated:
            raise ConfigError("time_drift scenario has control units only")
        if not -1 < self.error_correlation < 1:
            raise ConfigError("error_correlation must be in (-1, 1)")

    def study_config(self) -> StudyConfig:
        if self.scenario is Scenario.TIME_DRIFT:
            return StudyConfig(L=1, C=1, covariate_names=DRIFT_COVARIATES)
        return StudyConfig(L=1, C=2, covariate_names=MAIN_COVARIATES)


@dataclass(frozen=True, eq=False)
class ScenarioTruth:
    """模擬真值：μ0 與處理組的兩個潛在結果"""
    delta: float
    mu0: Callable[[np.ndarray], np.ndarray]
    y0: Dict[str, float] = field(default_factory=dict)
    y1: Dict[str, float] = field(default_factory=dict)

    @property
    def sample_att(self) -> float:
        """有限樣本 ATT = mean(Y1 - Y0)"""
        if not self.y1:
            return float('nan')
        return float(np.mean([self.y1[tid] - self.y0[tid] for tid in sorted(self.y1)]))


def main_mu0(X: np.ndarray) -> np.ndarray:
    """x1..x8 -> 線性 μ0"""
    X = np.atleast_2d(X)
    return (A_L * X[:, 0:4].sum(axis=1) + A_VH * X[:, 4]
            + A_M * (X[:, 5] + X[:, 7]) + A_H * X[:, 6])


def nonlinear_mu0(X: np.ndarray) -> np.ndarray:
    """x2 改為平方項"""
    X = np.atleast_2d(X)
    return main_mu0(X) + A_L * (X[:, 1] ** 2 - X[:, 1])


def drift_mu0(X: np.ndarray) -> np.ndarray:
    """log(4)(x1 + x4) + log(10)(x3 + x4)，x4 在兩項都出現"""
    X = np.atleast_2d(X)
    return A_H * (X[:, 0] + X[:, 3]) + A_VH * (X[:, 2] + X[:, 3])


def _ids(prefix: str, n: int) -> list:
    width = max(4, len(str(n)))
    return [f"{prefix}{i + 1:0{width}d}" for i in range(n)]


def _errors(spec: ScenarioSpec, rng: np.random.Generator, n: int, periods: int) -> np.ndarray:
    if not spec.scenario.correlated or periods == 1:
        return rng.standard_normal((n, periods))
    cov = np.full((periods, periods), spec.error_correlation)
    np.fill_diagonal(cov, 1.0)
    return rng.multivariate_normal(np.zeros(periods), cov, size=n, method='cholesky')


def _main_scenario(spec: ScenarioSpec, rng: np.random.Generator) -> Tuple[PanelDataset, ScenarioTruth]:
    mu0 = nonlinear_mu0 if spec.scenario is Scenario.NONLINEAR_CORRELATED else main_mu0
    trajectories = []
    y0, y1 = {}, {}

    # 處理組：單一觀測點，進入時點均勻取自 {1, 2, 3}
    n1 = spec.n_treated
    Xt = rng.standard_normal((n1, 8))
    Xt[:, 1] += 0.25
    Xt[:, 5] += 0.5
    entry = rng.choice(np.array(CONTROL_TIMES), size=n1)
    eps_t = rng.standard_normal(n1)
    for i, tid in enumerate(_ids('t', n1)):
        untreated = float(mu0(Xt[i])[0] + eps_t[i])
        y0[tid] = untreated
        y1[tid] = untreated + spec.delta
        instance = Instance(tid, int(entry[i]), tuple(Xt[i].tolist()), y1[tid], z=1)
        trajectories.append(Trajectory(tid, (instance,)))

    # 控制組：x1..x4 不隨時間改變，x5..x8 為隨機漫步
    n0 = spec.n_control
    periods = len(CONTROL_TIMES)
    fixed = rng.standard_normal((n0, 4))
    start = rng.standard_normal((n0, 4))
    steps = rng.normal(0.0, spec.step_sd, size=(n0, periods - 1, 4))
    walk = np.concatenate([start[:, None, :], start[:, None, :] + np.cumsum(steps, axis=1)], axis=1)
    eps_c = _errors(spec, rng, n0, periods)
    for i, cid in enumerate(_ids('c', n0)):
        instances = []
        for p, t in enumerate(CONTROL_TIMES):
            x = np.concatenate([fixed[i], walk[i, p]])
            instances.append(Instance(cid, t, tuple(x.tolist()), float(mu0(x)[0] + eps_c[i, p]), z=0))
        trajectories.append(Trajectory(cid, tuple(instances)))

    truth = ScenarioTruth(delta=spec.delta, mu0=mu0, y0=y0, y1=y1)
    return PanelDataset(tuple(trajectories), spec.study_config()), truth


def _time_drift(spec: ScenarioSpec, rng: np.random.Generator) -> Tuple[PanelDataset, ScenarioTruth]:
    n0 = spec.n_control
    x12 = rng.standard_normal((n0, 2, 2))                # (unit, time, covariate)
    x34_t0 = rng.standard_normal((n0, 2))
    x34_t1 = x34_t0 + rng.normal(0.0, spec.step_sd, size=(n0, 2))
    eps = rng.standard_normal((n0, 2))
    trajectories = []
    for i, cid in enumerate(_ids('c', n0)):
        instances = []
        for p, x34 in enumerate((x34_t0[i], x34_t1[i])):
            x = np.concatenate([x12[i, p], x34])
            y = float(drift_mu0(x)[0] + spec.gamma * p + eps[i, p])
            instances.append(Instance(cid, p + 1, tuple(x.tolist()), y, z=0))
        trajectories.append(Trajectory(cid, tuple(instances)))
    truth = ScenarioTruth(delta=0.0, mu0=drift_mu0)
    return PanelDataset(tuple(trajectories), spec.study_config()), truth


def generate_scenario(spec: ScenarioSpec,
                      rng: Optional[np.random.Generator] = None) -> Tuple[PanelDataset, ScenarioTruth]:
    """產生模擬資料集與真值紀錄；未提供 rng 時以 spec.seed 建立"""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    if spec.scenario is Scenario.TIME_DRIFT:
        dataset, truth = _time_drift(spec, rng)
    else:
        dataset, truth = _main_scenario(spec, rng)
    log_debug(f"generate_scenario[{spec.scenario.value}]: N1={dataset.n_treated}, N0={dataset.n_control}")
    return dataset, truth

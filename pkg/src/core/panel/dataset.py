"""
滾動納入面板資料模組
資料模型、CSV 讀寫與驗證，並提供落後共變數歷史與可用控制組時點
"""

from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..config.study_config import StudyConfig
from ..exceptions import ConfigError, InsufficientHistoryError, PanelValidationError
from ..utils.logger import log_debug, log_info


class InstanceRef(NamedTuple):
    """(trajectory_id, time) 參照，排序即為平手時的字典序"""
    trajectory_id: str
    time: int


@dataclass(frozen=True)
class Instance:
    """單一觀測點 (i, t)"""
    trajectory_id: str
    time: int
    covariates: Tuple[float, ...]
    outcome: float
    z: int = 0               # 自進入處理起算的期數（含當期），未處理為 0

    @property
    def ref(self) -> InstanceRef:
        return InstanceRef(self.trajectory_id, self.time)


@dataclass(frozen=True)
class Trajectory:
    """單一受試者的完整重複觀測"""
    id: str
    instances: Tuple[Instance, ...]

    def __post_init__(self):
        if not self.instances:
            raise PanelValidationError(f"trajectory {self.id} has no instances")
        times = [inst.time for inst in self.instances]
        for prev, cur in zip(times, times[1:]):
            if cur <= prev:
                raise PanelValidationError(
                    f"trajectory {self.id}: times must be strictly increasing ({prev} then {cur})"
                )
        self._validate_z()

    def _validate_z(self):
        """z 必須是 0...0 接著 1, 2, 3...（或全為 0），且 z = t - T_i + 1，跳過的時點也計入"""
        entry = None
        for inst in self.instances:
            if inst.z < 0:
                raise PanelValidationError(f"trajectory {self.id}: z must be non-negative (t={inst.time})")
            if entry is None:
                if inst.z == 0:
                    continue
                if inst.z != 1:
                    raise PanelValidationError(
                        f"trajectory {self.id}: z must increment by 1 (got z={inst.z} at t={inst.time}, expected 1)"
                    )
                entry = inst.time
                continue
            expected = inst.time - entry + 1
            if inst.z != expected:
                raise PanelValidationError(
                    f"trajectory {self.id}: z must increment by 1 per timepoint since entry "
                    f"(got z={inst.z} at t={inst.time}, expected {expected})"
                )

    @cached_property
    def treatment_time(self) -> Optional[int]:
        """T_i：z = 1 的時點，從未處理為 None"""
        for inst in self.instances:
            if inst.z == 1:
                return inst.time
        return None

    @property
    def d(self) -> int:
        return int(self.treatment_time is not None)

    @property
    def times(self) -> Tuple[int, ...]:
        return tuple(inst.time for inst in self.instances)

    @cached_property
    def _by_time(self) -> Dict[int, Instance]:
        return {inst.time: inst for inst in self.instances}

    def instance_at(self, t: int) -> Optional[Instance]:
        return self._by_time.get(t)

    def has_history(self, t: int, L: int) -> bool:
        """t-L+1 ... t 是否都有觀測"""
        if t < L:
            return False
        return all(s in self._by_time for s in range(t - L + 1, t + 1))


@dataclass(frozen=True)
class PanelDataset:
    """面板資料集，載入後不可變"""
    trajectories: Tuple[Trajectory, ...]
    config: StudyConfig

    def __post_init__(self):
        ordered = tuple(sorted(self.trajectories, key=lambda traj: traj.id))
        object.__setattr__(self, 'trajectories', ordered)

        counts = Counter(traj.id for traj in ordered)
        duplicated = sorted(tid for tid, n in counts.items() if n > 1)
        if duplicated:
            raise PanelValidationError(f"duplicate trajectory ids: {duplicated}")

        k = self.config.k
        L = self.config.L
        for traj in ordered:
            for inst in traj.instances:
                if len(inst.covariates) != k:
                    raise PanelValidationError(
                        f"trajectory {traj.id} t={inst.time}: expected {k} covariates, got {len(inst.covariates)}"
                    )
            if traj.d:
                if traj.treatment_time <= self.config.burn_in:
                    raise PanelValidationError(
                        f"treated unit {traj.id} enters at T_i={traj.treatment_time} inside the burn-in "
                        f"(T_i must be > {self.config.burn_in} for L={L})"
                    )
                if not traj.has_history(traj.treatment_time, L):
                    raise PanelValidationError(
                        f"treated unit {traj.id} lacks {L} observed timepoints at and before T_i={traj.treatment_time}"
                    )
                if self.config.did and not traj.has_history(traj.treatment_time - 1, L):
                    raise PanelValidationError(
                        f"treated unit {traj.id} lacks {L} observed timepoints before T_i={traj.treatment_time} "
                        f"(difference-in-differences needs the t-1 history, a burn-in of length L={L})"
                    )

    @cached_property
    def _by_id(self) -> Dict[str, Trajectory]:
        return {traj.id: traj for traj in self.trajectories}

    @property
    def n_treated(self) -> int:
        return sum(traj.d for traj in self.trajectories)

    @property
    def n_control(self) -> int:
        return len(self.trajectories) - self.n_treated

    @property
    def n_instances(self) -> int:
        return sum(len(traj.instances) for traj in self.trajectories)

    def trajectory(self, trajectory_id: str) -> Trajectory:
        try:
            return self._by_id[trajectory_id]
        except KeyError:
            raise PanelValidationError(f"unknown trajectory id: {trajectory_id}")

    def instance(self, ref: InstanceRef) -> Instance:
        inst = self.trajectory(ref.trajectory_id).instance_at(ref.time)
        if inst is None:
            raise PanelValidationError(f"no instance at {ref}")
        return inst

    def treated_refs(self) -> List[InstanceRef]:
        """處理組在 T_i 的觀測點（依 id 排序）"""
        return [InstanceRef(traj.id, traj.treatment_time) for traj in self.trajectories if traj.d]

    def history_matrix(self, refs: Sequence[InstanceRef], L: Optional[int] = None) -> np.ndarray:
        """多個觀測點的落後歷史，shape (len(refs), k*L)"""
        L = L or self.config.L
        if not refs:
            return np.empty((0, self.config.k * L))
        return np.vstack([lagged_history(self, ref.trajectory_id, ref.time, L=L) for ref in refs])

    def outcomes(self, refs: Sequence[InstanceRef]) -> np.ndarray:
        return np.array([self.instance(ref).outcome for ref in refs], dtype=float)

    def history_names(self, L: Optional[int] = None) -> List[str]:
        """歷史向量各欄名稱（最舊在前）"""
        L = L or self.config.L
        names = []
        for lag in range(L - 1, -1, -1):
            suffix = f"_lag{lag}" if lag else ""
            names.extend(f"{name}{suffix}" for name in self.config.covariate_names)
        return names

    @classmethod
    def pool(cls, datasets: Iterable['PanelDataset']) -> 'PanelDataset':
        """合併多個期間的資料集（例如多個球季），id 不可重複"""
        datasets = list(datasets)
        if not datasets:
            raise PanelValidationError("no datasets to pool")
        config = datasets[0].config
        if any(ds.config != config for ds in datasets[1:]):
            raise ConfigError("pooled datasets must share the same study config")
        trajectories = [traj for ds in datasets for traj in ds.trajectories]
        log_debug(f"pool: 合併 {len(datasets)} 個資料集, 共 {len(trajectories)} 條軌跡")
        return cls(tuple(trajectories), config)


def _integer_column(frame: pd.DataFrame, column: str) -> pd.Series:
    values = pd.to_numeric(frame[column], errors='coerce')
    if values.isna().any():
        raise PanelValidationError(f"column {column} must be integer-valued (non-numeric or missing values)")
    if not np.all(np.equal(np.mod(values.to_numpy(dtype=float), 1), 0)):
        raise PanelValidationError(f"column {column} must be integer-valued")
    return values.astype(np.int64)


def _numeric_column(frame: pd.DataFrame, column: str) -> pd.Series:
    values = pd.to_numeric(frame[column], errors='coerce')
    if values.isna().any():
        raise PanelValidationError(f"column {column} has missing or non-numeric values")
    return values.astype(float)


def load_panel(path, config: StudyConfig) -> PanelDataset:
    """讀取長格式 CSV：id,time,z,outcome,<共變數...>"""
    path = Path(path)
    if not config.covariate_names:
        raise ConfigError("no covariates configured")
    if not path.exists():
        raise PanelValidationError(f"file not found: {path}")

    try:
        frame = pd.read_csv(path, dtype={'id': str}, encoding='utf-8', float_precision='round_trip')
    except pd.errors.EmptyDataError:
        raise PanelValidationError("no rows")
    if frame.empty:
        raise PanelValidationError("no rows")

    required = ['id', 'time', 'z', 'outcome', *config.covariate_names]
    for column in required:
        if column not in frame.columns:
            raise PanelValidationError(f"missing column: {column}")

    if frame['id'].isna().any():
        raise PanelValidationError("column id has missing values")
    frame = frame.assign(
        time=_integer_column(frame, 'time'),
        z=_integer_column(frame, 'z'),
        outcome=_numeric_column(frame, 'outcome'),
        **{name: _numeric_column(frame, name) for name in config.covariate_names}
    )

    duplicated = frame.duplicated(subset=['id', 'time'], keep=False)
    if duplicated.any():
        first = frame.loc[duplicated].iloc[0]
        raise PanelValidationError(f"duplicate (id, time): ({first['id']}, {first['time']})")

    frame = frame.sort_values(['id', 'time'], kind='mergesort')
    covariate_block = frame[list(config.covariate_names)].to_numpy(dtype=float)
    trajectories = []
    start = 0
    ids = frame['id'].to_numpy()
    times = frame['time'].to_numpy()
    zs = frame['z'].to_numpy()
    outcomes = frame['outcome'].to_numpy()
    for trajectory_id, group in frame.groupby('id', sort=True):
        n_rows = len(group)
        rows = range(start, start + n_rows)
        instances = tuple(
            Instance(
                trajectory_id=str(ids[r]),
                time=int(times[r]),
                covariates=tuple(float(v) for v in covariate_block[r]),
                outcome=float(outcomes[r]),
                z=int(zs[r])
            )
            for r in rows
        )
        trajectories.append(Trajectory(id=str(trajectory_id), instances=instances))
        start += n_rows

    dataset = PanelDataset(tuple(trajectories), config)
    log_info(f"載入 {path.name}: {len(frame)} 列, N1={dataset.n_treated}, N0={dataset.n_control}")
    return dataset


def save_panel(dataset: PanelDataset, path) -> None:
    """將資料集寫回長格式 CSV"""
    names = list(dataset.config.covariate_names)
    records = [
        {'id': inst.trajectory_id, 'time': inst.time, 'z': inst.z, 'outcome': inst.outcome,
         **dict(zip(names, inst.covariates))}
        for traj in dataset.trajectories for inst in traj.instances
    ]
    frame = pd.DataFrame.from_records(records, columns=['id', 'time', 'z', 'outcome', *names])
    frame.to_csv(path, index=False, encoding='utf-8')


def lagged_history(dataset: PanelDataset, trajectory_id: str, t: int, L: Optional[int] = None) -> np.ndarray:
    """t-L+1, ..., t 的共變數依序串接（最舊在前），長度 k*L"""
    L = L or dataset.config.L
    if t < L:
        raise InsufficientHistoryError(trajectory_id, t, f"t < L={L}")
    traj = dataset.trajectory(trajectory_id)
    rows = []
    for s in range(t - L + 1, t + 1):
        inst = traj.instance_at(s)
        if inst is None:
            raise InsufficientHistoryError(trajectory_id, t, f"missing timepoint {s}")
        rows.append(inst.covariates)
    return np.asarray(rows, dtype=float).reshape(-1)


def _evenly_spaced(times: Sequence[int], count: int) -> List[int]:
    if count >= len(times):
        return list(times)
    positions = np.unique(np.round(np.linspace(0, len(times) - 1, count)).astype(int))
    return [times[p] for p in positions]


def eligible_controls(dataset: PanelDataset, L: Optional[int] = None) -> List[InstanceRef]:
    """所有可作為控制組的 (i, t)：D_i = 0、t >= L 且 L 期歷史完整

    差異中之差異設定下另需 t-1 的 L 期歷史（t >= L+1）
    """
    L = L or dataset.config.L
    did = dataset.config.did
    allowed = set(dataset.config.pseudo_times) if dataset.config.pseudo_times is not None else None
    per_control = dataset.config.pseudo_times_per_control
    refs = []
    for traj in dataset.trajectories:
        if traj.d:
            continue
        times = [t for t in traj.times
                 if traj.has_history(t, L) and (not did or traj.has_history(t - 1, L))
                 and (allowed is None or t in allowed)]
        if per_control is not None:
            times = _evenly_spaced(times, per_control)
        refs.extend(InstanceRef(traj.id, t) for t in times)
    return refs

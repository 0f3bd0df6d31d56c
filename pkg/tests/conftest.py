import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# 與 main.py 相同：把專案根目錄加入路徑
ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT))

from src.core.config.study_config import StudyConfig  # noqa: E402
from src.core.panel.dataset import load_panel  # noqa: E402

TOY_CSV = ROOT / 'docs' / 'examples' / 'toy_panel.csv'
TOY_CONFIG = ROOT / 'docs' / 'examples' / 'toy_config.json'


@pytest.fixture
def toy_csv():
    return TOY_CSV


@pytest.fixture
def toy_config_file():
    return TOY_CONFIG


@pytest.fixture
def toy_dataset():
    """treated T1(t=2, x=0.1), T2(t=3, x=0.2); controls C1(x=0, 1), C2(x=5, 6)"""
    return load_panel(TOY_CSV, StudyConfig(L=1, C=1, covariate_names=('x',)))


@pytest.fixture
def write_panel(tmp_path):
    """把 (id, time, z, outcome, 共變數...) 列寫成 CSV 並回傳路徑"""
    def _write(rows, covariates=('x',), name='panel.csv'):
        frame = pd.DataFrame(rows, columns=['id', 'time', 'z', 'outcome', *covariates])
        path = tmp_path / name
        frame.to_csv(path, index=False)
        return path
    return _write


@pytest.fixture
def make_panel(write_panel):
    """由列資料直接建立 PanelDataset"""
    def _make(rows, covariates=('x',), **config):
        path = write_panel(rows, covariates)
        return load_panel(path, StudyConfig(covariate_names=tuple(covariates), **config))
    return _make


@pytest.fixture
def random_panel(make_panel):
    """隨機面板：n_treated 條單一觀測的處理組，n_control 條 n_times 期的控制組"""
    def _make(seed, n_treated=5, n_control=6, n_times=3, k=2, L=1, C=1, shift=0.0):
        rng = np.random.default_rng(seed)
        covariates = tuple(f"x{j + 1}" for j in range(k))
        rows = []
        for i in range(n_control):
            for t in range(1, n_times + 1):
                x = rng.normal(size=k)
                rows.append([f"c{i:03d}", t, 0, float(x.sum() + rng.normal()), *x.tolist()])
        for i in range(n_treated):
            entry = int(rng.integers(L, n_times + 1))
            for t in range(entry - L + 1, entry + 1):
                x = rng.normal(size=k) + shift
                z = 1 if t == entry else 0
                rows.append([f"t{i:03d}", t, z, float(x.sum() + rng.normal() + 0.5 * z), *x.tolist()])
        return make_panel(rows, covariates, L=L, C=C)
    return _make

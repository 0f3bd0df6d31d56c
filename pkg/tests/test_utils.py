import logging
import threading

import pytest

from src.core.utils import logger as logger_module
from src.core.utils.logger import enable_file_log, log_info, log_warning, set_log_callback
from src.core.utils.parallel import run_in_workers


def test_results_keep_input_order():
    def slow_square(x):
        threading.Event().wait(0.001 * (5 - x % 5))
        return x * x

    assert run_in_workers(slow_square, range(20), workers=4) == [x * x for x in range(20)]
    assert run_in_workers(slow_square, range(20), workers=1) == [x * x for x in range(20)]


def test_exceptions_raise_or_collect():
    def fail_on_three(x):
        if x == 3:
            raise ValueError('three')
        return x

    with pytest.raises(ValueError):
        run_in_workers(fail_on_three, range(5), workers=2)
    for workers in (1, 2):
        results = run_in_workers(fail_on_three, range(5), workers=workers, return_exceptions=True)
        assert isinstance(results[3], ValueError)
        assert [r for i, r in enumerate(results) if i != 3] == [0, 1, 2, 4]


def test_callback_receives_warnings_only():
    received = []
    set_log_callback(received.append)
    try:
        log_info('quiet')
        log_warning('degenerate scale for x')
    finally:
        set_log_callback(None)
    assert received == ['WARNING degenerate scale for x']


def test_caller_location_prefix(caplog):
    with caplog.at_level(logging.INFO, logger='roll_match'):
        log_info('hello')
    assert 'test_utils.py:' in caplog.records[-1].getMessage()


def test_file_log(tmp_path, monkeypatch):
    fresh = logger_module.RollMatchLogger()
    monkeypatch.setattr(logger_module, 'logger', fresh)
    try:
        path = enable_file_log(str(tmp_path))
        assert enable_file_log(str(tmp_path / 'other')) == path
        log_warning('written')
        fresh.file_handler.flush()
        with open(path, encoding='utf-8') as f:
            assert 'written' in f.read()
    finally:
        fresh.logger.removeHandler(fresh.file_handler)
        fresh.file_handler.close()

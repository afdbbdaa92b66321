"""Suite-wide defaults.

Most tests run on the numpy kernel path so the suite does not pay the JIT
warm-up per process; backend parity gets its own dedicated tests.
"""

import os

import pytest

os.environ.setdefault("VCPAY_ACCEL", "numpy")


@pytest.fixture
def numpy_backend(monkeypatch):
    monkeypatch.setenv("VCPAY_ACCEL", "numpy")


@pytest.fixture
def numba_backend(monkeypatch):
    monkeypatch.setenv("VCPAY_ACCEL", "numba")

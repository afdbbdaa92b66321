"""Benchmark the numba kernels against the numpy fallbacks.

Compares the two implementations of each hot kernel on identical inputs,
checks they agree bit for bit, and prints median wall times. JIT
compilation happens during warmup so it never pollutes the numbers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import accel, kernels


@dataclass
class BenchRow:
    kernel: str
    numpy_seconds: float
    numba_seconds: float | None
    matched: bool

    @property
    def speedup(self) -> float | None:
        if self.numba_seconds is None or self.numba_seconds == 0:
            return None
        return self.numpy_seconds / self.numba_seconds


def _median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def run_benchmark(size: int = 1024, repeats: int = 5, seed: int = 7) -> list[BenchRow]:
    rng = np.random.default_rng(seed)
    secret = rng.integers(0, 2, size=(size, size), dtype=np.uint8)
    coins = rng.integers(0, 2, size=(size, size), dtype=np.uint8)
    gray = rng.integers(0, 256, size=(size, size), dtype=np.uint8)

    numba_ok = accel._try_import()
    rows: list[BenchRow] = []

    cases = [
        (
            "share-split",
            lambda impl: _run_split(impl, secret, coins),
        ),
        (
            "stack-or",
            lambda impl: _run_or(impl, secret, coins),
        ),
        (
            "block-weights",
            lambda impl: _run_weights(impl, secret, coins),
        ),
        (
            "error-diffusion",
            lambda impl: _run_diffusion(impl, gray),
        ),
    ]

    for name, runner in cases:
        baseline = runner("numpy")  # warmup + reference
        numpy_time = _median_time(lambda: runner("numpy"), repeats)
        numba_time = None
        matched = True
        if numba_ok:
            candidate = runner("numba")  # warmup pays the JIT compile
            matched = all(
                np.array_equal(a, b) for a, b in zip(_as_tuple(baseline), _as_tuple(candidate))
            )
            numba_time = _median_time(lambda: runner("numba"), repeats)
        rows.append(BenchRow(name, numpy_time, numba_time, matched))
    return rows


def _as_tuple(value):
    return value if isinstance(value, tuple) else (value,)


def _pick(dispatcher, impl: str):
    if impl == "numba":
        return accel.jit_compile(dispatcher.py_fn)
    return dispatcher.numpy_fn


def _run_split(impl: str, secret, coins):
    share1 = np.empty((secret.shape[0], 2 * secret.shape[1]), dtype=np.uint8)
    share2 = np.empty_like(share1)
    _pick(kernels._split, impl)(secret, coins, share1, share2)
    return share1, share2


def _run_or(impl: str, secret, coins):
    acc = secret.copy()
    _pick(kernels._or_inplace, impl)(acc, coins)
    return acc


def _run_weights(impl: str, secret, coins):
    share1, _ = _run_split("numpy", secret, coins)
    weights = np.empty(secret.shape, dtype=np.uint8)
    _pick(kernels._weights, impl)(share1, weights)
    return weights


def _run_diffusion(impl: str, gray):
    work = gray.astype(np.float64)
    out = np.empty(gray.shape, dtype=np.uint8)
    _pick(kernels._diffuse, impl)(work, out)
    return out


def format_report(rows: list[BenchRow], size: int) -> str:
    lines = [
        f"kernel benchmark, {size}x{size} input",
        f"{'kernel':<16} {'numpy':>12} {'numba':>12} {'speedup':>9}  match",
    ]
    for row in rows:
        numba = f"{row.numba_seconds * 1e3:.2f} ms" if row.numba_seconds else "n/a"
        speed = f"{row.speedup:.1f}x" if row.speedup else "-"
        lines.append(
            f"{row.kernel:<16} {row.numpy_seconds * 1e3:>9.2f} ms {numba:>12} "
            f"{speed:>9}  {'yes' if row.matched else 'NO'}"
        )
    return "\n".join(lines)

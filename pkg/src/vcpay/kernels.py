"""Hot per-pixel kernels: share splitting, stacking, error diffusion.

Each kernel exists twice — a plain loop that numba compiles, and a numpy
fallback — and is exported through an `accel.dispatch` wrapper. The two
paths are exact-equal by construction: share/stack kernels are pure integer
selection, and both error-diffusion paths execute the same float64
operations in the same order.
"""

from __future__ import annotations

import numpy as np

from . import accel


# --- (2,2) share splitting ------------------------------------------------
#
# Subpixel pair for share 1 depends only on the coin: [1,0] for coin 0,
# [0,1] for coin 1. Share 2 repeats share 1 for a white secret pixel and
# complements it for a black one. This reproduces the classic two-of-two
# table: white rows stack to Hamming weight 1, black rows to weight 2.


def _split_loop(secret, coins, share1, share2):
    height, width = secret.shape
    for y in range(height):
        for x in range(width):
            coin = coins[y, x]
            left = 1 - coin
            right = coin
            share1[y, 2 * x] = left
            share1[y, 2 * x + 1] = right
            if secret[y, x] == 0:
                share2[y, 2 * x] = left
                share2[y, 2 * x + 1] = right
            else:
                share2[y, 2 * x] = right
                share2[y, 2 * x + 1] = left


def _split_numpy(secret, coins, share1, share2):
    share1[:, 0::2] = 1 - coins
    share1[:, 1::2] = coins
    share2[:, 0::2] = np.where(secret == 0, 1 - coins, coins)
    share2[:, 1::2] = np.where(secret == 0, coins, 1 - coins)


_split = accel.dispatch(_split_loop, _split_numpy)


def split_pixels(secret: np.ndarray, coins: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Expand a {0,1} secret (h, w) into two (h, 2w) share grids."""
    height, width = secret.shape
    share1 = np.empty((height, 2 * width), dtype=np.uint8)
    share2 = np.empty((height, 2 * width), dtype=np.uint8)
    _split(secret, coins, share1, share2)
    return share1, share2


# --- stacking -------------------------------------------------------------


def _or_loop(acc, other):
    height, width = acc.shape
    for y in range(height):
        for x in range(width):
            acc[y, x] |= other[y, x]


def _or_numpy(acc, other):
    np.bitwise_or(acc, other, out=acc)


_or_inplace = accel.dispatch(_or_loop, _or_numpy)


def or_stack(grids: list[np.ndarray]) -> np.ndarray:
    """Pixelwise OR of equally shaped {0,1} grids."""
    acc = grids[0].astype(np.uint8, copy=True)
    for other in grids[1:]:
        _or_inplace(acc, other)
    return acc


def _weights_loop(stacked, weights):
    height, width = weights.shape
    for y in range(height):
        for x in range(width):
            weights[y, x] = stacked[y, 2 * x] + stacked[y, 2 * x + 1]


def _weights_numpy(stacked, weights):
    height, width = weights.shape
    weights[:] = stacked.reshape(height, width, 2).sum(axis=2, dtype=np.uint8)


_weights = accel.dispatch(_weights_loop, _weights_numpy)


def block_weights(stacked: np.ndarray) -> np.ndarray:
    """Per-secret-pixel Hamming weight of an (h, 2w) stacked grid."""
    height, expanded = stacked.shape
    weights = np.empty((height, expanded // 2), dtype=np.uint8)
    _weights(stacked, weights)
    return weights


# --- Floyd-Steinberg error diffusion ---------------------------------------
#
# Serpentine scan: even rows run left to right, odd rows right to left with
# the kernel mirrored. Quantizes to {0, 255} at 127.5 and drops error that
# would leave the image. Identical float64 arithmetic on both backends.


def _diffuse_loop(work, out):
    height, width = work.shape
    for y in range(height):
        reverse = y % 2 == 1
        for step in range(width):
            x = width - 1 - step if reverse else step
            ahead = -1 if reverse else 1
            old = work[y, x]
            new = 255.0 if old >= 127.5 else 0.0
            out[y, x] = 0 if new > 0.0 else 1
            err = old - new
            if 0 <= x + ahead < width:
                work[y, x + ahead] += err * (7.0 / 16.0)
            if y + 1 < height:
                if 0 <= x - ahead < width:
                    work[y + 1, x - ahead] += err * (3.0 / 16.0)
                work[y + 1, x] += err * (5.0 / 16.0)
                if 0 <= x + ahead < width:
                    work[y + 1, x + ahead] += err * (1.0 / 16.0)


_diffuse = accel.dispatch(_diffuse_loop)


def floyd_steinberg(samples: np.ndarray) -> np.ndarray:
    """Dither 8-bit luminance (h, w) to a {0,1} grid, 1 meaning black."""
    work = samples.astype(np.float64, copy=True)
    out = np.empty(samples.shape, dtype=np.uint8)
    _diffuse(work, out)
    return out

"""Two-of-two visual cryptography: split a binary image into a pair of
random-looking shares whose pixelwise OR reveals the secret.

Each secret pixel becomes a horizontal pair of subpixels in both shares
(pixel expansion 2). A fair coin per pixel picks one of two candidate
subpixel patterns; for a white pixel the shares receive identical patterns
(stacked Hamming weight 1), for a black pixel complementary ones (weight 2).
Either share alone is a uniformly random pattern sequence regardless of the
secret, so a single share leaks nothing.

All values are immutable after construction and safe to share between
threads. Coins come from a seedable SHAKE-256 stream, one per pixel in
row-major order, so share generation is reproducible from (secret, seed).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels, netpbm
from .errors import (
    DimensionMismatchError,
    ImageTooLargeError,
    TamperDetectedError,
    ValidationError,
)

WHITE = 0
BLACK = 1

#: Hard bound on secret dimensions; keeps bank-side reconstruction memory sane.
MAX_SECRET_SIDE = 4096

_COIN_DOMAIN = b"vcpay/coin-stream/v1:"


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.uint8)
    out.setflags(write=False)
    return out


def _require_binary(arr: np.ndarray, what: str) -> None:
    if arr.ndim != 2:
        raise ValidationError(f"{what} must be 2D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{what} must be at least 1x1")
    if arr.max(initial=0) > 1:
        raise ValidationError(f"{what} pixels must be 0 (white) or 1 (black)")


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Rectangular grid of black (1) / white (0) pixels."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        _require_binary(arr, "binary image")
        object.__setattr__(self, "pixels", _freeze(arr))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, BinaryImage) and np.array_equal(self.pixels, other.pixels)

    def __hash__(self) -> int:
        return hash((self.width, self.height, self.pixels.tobytes()))

    def black_ratio(self) -> float:
        return float(self.pixels.mean())

    def to_pbm(self) -> bytes:
        return netpbm.write_pbm(self.pixels)

    @classmethod
    def from_pbm(cls, data: bytes) -> "BinaryImage":
        return cls(netpbm.read_pbm(data))


@dataclass(frozen=True, eq=False)
class Share:
    """One participant's half of a split secret.

    Width is ``expansion`` times the secret width. Honestly generated shares
    carry exactly one black subpixel per block; the constructor deliberately
    does not enforce that, so shares corrupted in transit remain
    representable and detectable downstream.
    """

    pixels: np.ndarray
    expansion: int = 2
    layout: str = "horizontal-pair"

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        _require_binary(arr, "share")
        if self.expansion != 2 or self.layout != "horizontal-pair":
            raise ValidationError("only the expansion-2 horizontal-pair layout is built")
        if arr.shape[1] % self.expansion != 0:
            raise ValidationError(
                f"share width {arr.shape[1]} not divisible by expansion {self.expansion}"
            )
        object.__setattr__(self, "pixels", _freeze(arr))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def secret_width(self) -> int:
        return self.width // self.expansion

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Share)
            and self.expansion == other.expansion
            and np.array_equal(self.pixels, other.pixels)
        )

    def __hash__(self) -> int:
        return hash((self.expansion, self.pixels.tobytes()))

    def is_well_formed(self) -> bool:
        """True when every subpixel block holds exactly one black subpixel."""
        return bool((kernels.block_weights(self.pixels) == 1).all())

    def to_pbm(self) -> bytes:
        return netpbm.write_pbm(self.pixels)

    @classmethod
    def from_pbm(cls, data: bytes) -> "Share":
        return cls(netpbm.read_pbm(data))


@dataclass(frozen=True, eq=False)
class StackedImage:
    """OR of stacked shares plus the per-block Hamming weights."""

    pixels: np.ndarray
    block_weights: np.ndarray
    expansion: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "pixels", _freeze(self.pixels))
        weights = np.ascontiguousarray(self.block_weights, dtype=np.uint8)
        weights.setflags(write=False)
        object.__setattr__(self, "block_weights", weights)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, StackedImage) and np.array_equal(self.pixels, other.pixels)

    def weight_histogram(self) -> dict[int, int]:
        values, counts = np.unique(self.block_weights, return_counts=True)
        hist = {0: 0, 1: 0, 2: 0}
        hist.update(dict(zip(values.tolist(), counts.tolist())))
        return hist

    def to_pbm(self) -> bytes:
        return netpbm.write_pbm(self.pixels)


@dataclass(frozen=True)
class DistributionTables:
    """Candidate subpixel row pairs for the two-of-two scheme.

    ``white_rows[coin]`` / ``black_rows[coin]`` give the (share1, share2)
    subpixel vectors chosen by a fair coin. White candidates are identical
    across shares, black candidates complementary, and the two candidates of
    each color are column permutations of each other.
    """

    participants: int = 2
    expansion: int = 2
    threshold: int = 2
    white_rows: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...] = (
        ((1, 0), (1, 0)),
        ((0, 1), (0, 1)),
    )
    black_rows: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...] = (
        ((1, 0), (0, 1)),
        ((0, 1), (1, 0)),
    )

    def __post_init__(self) -> None:
        for share1, share2 in self.white_rows:
            if share1 != share2:
                raise ValidationError("white candidates must be identical across shares")
        for share1, share2 in self.black_rows:
            if tuple(1 - v for v in share1) != share2:
                raise ValidationError("black candidates must be complementary")
        for rows in (self.white_rows, self.black_rows):
            if sorted(rows[0][0]) != sorted(rows[1][0]):
                raise ValidationError("candidates must be column permutations")


TABLES = DistributionTables()


def coin_bits(seed: int | str | bytes, count: int) -> np.ndarray:
    """Deterministic fair coins from a SHAKE-256 stream over the seed."""
    if count < 0:
        raise ValidationError("coin count must be non-negative")
    if isinstance(seed, bytes):
        material = seed
    else:
        material = str(seed).encode("utf-8")
    digest = hashlib.shake_256(_COIN_DOMAIN + material).digest((count + 7) // 8)
    bits = np.unpackbits(np.frombuffer(digest, dtype=np.uint8))
    return bits[:count]


def encode_pixel(
    pixel: int, coin: int, tables: DistributionTables = TABLES
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Subpixel vectors for one secret pixel given one fair coin."""
    rows = tables.white_rows if pixel == WHITE else tables.black_rows
    share1, share2 = rows[int(coin) & 1]
    return share1, share2


def shares_from_coins(secret: BinaryImage, coins: np.ndarray) -> tuple[Share, Share]:
    """Split with an explicit coin grid; exposed for exhaustive testing."""
    _check_size(secret)
    coin_arr = np.ascontiguousarray(coins, dtype=np.uint8).reshape(
        secret.height, secret.width
    )
    share1, share2 = kernels.split_pixels(secret.pixels, coin_arr)
    return Share(share1), Share(share2)


def generate_shares(secret: BinaryImage, seed: int | str | bytes) -> tuple[Share, Share]:
    """Split `secret` into two shares, one coin per pixel in row-major order."""
    _check_size(secret)
    coins = coin_bits(seed, secret.width * secret.height)
    return shares_from_coins(secret, coins)


def stack(shares: Sequence[Share] | Iterable[Share]) -> StackedImage:
    """Pixelwise OR of the shares; order does not matter."""
    items = list(shares)
    if len(items) < 2:
        raise ValidationError("stacking needs at least two shares")
    first = items[0]
    for other in items[1:]:
        if (other.height, other.width) != (first.height, first.width):
            raise DimensionMismatchError(
                f"share dimensions differ: {first.width}x{first.height} "
                f"vs {other.width}x{other.height}"
            )
        if other.expansion != first.expansion:
            raise DimensionMismatchError("shares have different pixel expansions")
    stacked = kernels.or_stack([share.pixels for share in items])
    return StackedImage(stacked, kernels.block_weights(stacked), first.expansion)


def decode(stacked: StackedImage) -> BinaryImage:
    """Contrast rule: block weight 2 is black, 1 is white, 0 is tampering."""
    if stacked.expansion != 2:
        raise ValidationError("decoding is defined for expansion 2 only")
    weights = stacked.block_weights
    if (weights == 0).any():
        zeros = int((weights == 0).sum())
        raise TamperDetectedError(
            f"{zeros} stacked block(s) carry no black subpixel; "
            "honest shares always produce weight 1 or 2"
        )
    return BinaryImage((weights == 2).astype(np.uint8))


def verify_share(share: Share, label: str = "share") -> None:
    """Raise if any subpixel block breaks the one-black-per-block property.

    Stacking alone cannot expose every bit flip: clearing a share's black
    subpixel is masked wherever the other share is black at the same spot.
    The per-share check closes that gap, so reconstruction refuses any share
    altered by even a single subpixel."""
    weights = kernels.block_weights(share.pixels)
    bad = int((weights != 1).sum())
    if bad:
        raise TamperDetectedError(
            f"{label} violates the one-black-subpixel-per-block property "
            f"in {bad} block(s)"
        )


def reconstruct(shares: Sequence[Share]) -> BinaryImage:
    """Validate every share, stack, decode: the full bank-side pipeline."""
    items = list(shares)
    for index, share in enumerate(items, start=1):
        verify_share(share, label=f"share {index}")
    return decode(stack(items))


def _check_size(secret: BinaryImage) -> None:
    if secret.width > MAX_SECRET_SIDE or secret.height > MAX_SECRET_SIDE:
        raise ImageTooLargeError(
            f"secret {secret.width}x{secret.height} exceeds "
            f"{MAX_SECRET_SIDE}x{MAX_SECRET_SIDE}"
        )

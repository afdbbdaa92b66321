"""Front-of-camera image pipeline: grayscale-to-binary conversion, the
machine-unreadable price overlay, and the share-generation capture window.

The overlay renders the agreed amount as distorted bitmap text. A rogue
client would have to defeat glyph rotation jitter, a sinusoidal baseline and
salt-and-pepper noise to rewrite the price automatically before the shares
are computed; the capture window bounds how long such an attempt may take.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from . import font5x7, kernels, netpbm
from .errors import ClockSkewError, ValidationError
from .vc import BinaryImage

DEFAULT_CAPTURE_WINDOW_SECONDS = 60

# Fixed distortion envelope for the price overlay.
MAX_ROTATION_DEGREES = 15.0
SINE_AMPLITUDE_PX = 3.0
NOISE_FRACTION = 0.02


@dataclass(frozen=True, eq=False)
class GrayscaleImage:
    """8-bit luminance grid."""

    samples: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.samples, dtype=np.uint8)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError("grayscale image must be a non-empty 2D grid")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    def to_pgm(self) -> bytes:
        return netpbm.write_pgm(self.samples)

    @classmethod
    def from_pgm(cls, data: bytes) -> "GrayscaleImage":
        return cls(netpbm.read_pgm(data))


@dataclass(frozen=True)
class ErrorDiffusion:
    """Floyd-Steinberg with a serpentine scan; keeps faces recognizable."""


@dataclass(frozen=True)
class FixedThreshold:
    """Hard cut: sample < level becomes black."""

    level: int = 128


def binarize(img: GrayscaleImage, method: ErrorDiffusion | FixedThreshold) -> BinaryImage:
    """Convert luminance to black and white, preserving dimensions."""
    if isinstance(method, FixedThreshold):
        return BinaryImage((img.samples < method.level).astype(np.uint8))
    if isinstance(method, ErrorDiffusion):
        return BinaryImage(kernels.floyd_steinberg(img.samples))
    raise ValidationError(f"unknown binarization method {method!r}")


class Corner(str, enum.Enum):
    TOP_LEFT = "top-left"
    TOP_RIGHT = "top-right"
    BOTTOM_LEFT = "bottom-left"
    BOTTOM_RIGHT = "bottom-right"


class CaptureWindow(str, enum.Enum):
    WITHIN_WINDOW = "WithinWindow"
    EXPIRED = "Expired"


@dataclass(frozen=True)
class PriceCaptcha:
    """Distorted rendering of the agreed price, shown on the buyer's device."""

    amount: int
    currency: str
    rendered_image: BinaryImage
    issued_at: datetime
    nonce: str
    valid_for_seconds: int = DEFAULT_CAPTURE_WINDOW_SECONDS

    def __post_init__(self) -> None:
        if self.valid_for_seconds <= 0:
            raise ValidationError("capture window must be positive")

    def expires_at(self) -> datetime:
        return self.issued_at + timedelta(seconds=self.valid_for_seconds)


def _rotate_nearest(glyph: np.ndarray, radians: float) -> np.ndarray:
    """Rotate a small glyph bitmap around its center, nearest-neighbor."""
    height, width = glyph.shape
    diag = int(math.ceil(math.hypot(height, width))) + 2
    out = np.zeros((diag, diag), dtype=np.uint8)
    cy, cx = (diag - 1) / 2.0, (diag - 1) / 2.0
    gy, gx = (height - 1) / 2.0, (width - 1) / 2.0
    cos_t, sin_t = math.cos(radians), math.sin(radians)
    ys, xs = np.mgrid[0:diag, 0:diag]
    # inverse mapping: output pixel -> source pixel
    sx = cos_t * (xs - cx) + sin_t * (ys - cy) + gx
    sy = -sin_t * (xs - cx) + cos_t * (ys - cy) + gy
    sxr = np.rint(sx).astype(np.int64)
    syr = np.rint(sy).astype(np.int64)
    inside = (sxr >= 0) & (sxr < width) & (syr >= 0) & (syr < height)
    out[inside] = glyph[syr[inside], sxr[inside]]
    return out


def format_price(amount: int, currency: str) -> str:
    return f"{amount} {currency.upper()}"


def render_price_captcha(
    amount: int,
    currency: str,
    seed: int | str | bytes,
    *,
    scale: int = 3,
    valid_for_seconds: int = DEFAULT_CAPTURE_WINDOW_SECONDS,
    issued_at: datetime | None = None,
) -> PriceCaptcha:
    """Render the price as distorted binary text, deterministic per seed."""
    if amount <= 0:
        raise ValidationError(f"price amount must be positive, got {amount}")
    text = format_price(amount, currency)
    material = f"{amount}|{currency.upper()}|{seed}".encode("utf-8")
    digest = hashlib.shake_256(b"vcpay/captcha/v1:" + material).digest(24)
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    nonce = digest[8:].hex()

    glyphs = [font5x7.glyph(c) for c in text]
    # rotated glyphs land on square tiles big enough for any angle
    tile_side = (
        int(math.ceil(math.hypot(font5x7.GLYPH_HEIGHT, font5x7.GLYPH_WIDTH) * scale)) + 2
    )
    advance = (font5x7.GLYPH_WIDTH + 2) * scale
    margin = 4
    sine_pad = int(SINE_AMPLITUDE_PX)
    width = margin * 2 + (len(glyphs) - 1) * advance + tile_side
    height = margin * 2 + tile_side + 2 * sine_pad
    canvas = np.zeros((height, width), dtype=np.uint8)

    phase = float(rng.uniform(0.0, 2.0 * math.pi))
    wavelength = advance * 2.5
    x_pos = margin
    for glyph in glyphs:
        scaled = np.kron(glyph, np.ones((scale, scale), dtype=np.uint8))
        angle = math.radians(float(rng.uniform(-MAX_ROTATION_DEGREES, MAX_ROTATION_DEGREES)))
        tile = _rotate_nearest(scaled, angle)
        center_x = x_pos + tile.shape[1] // 2
        y_off = int(round(SINE_AMPLITUDE_PX * math.sin(2.0 * math.pi * center_x / wavelength + phase)))
        y_pos = margin + sine_pad + y_off
        region = canvas[y_pos : y_pos + tile.shape[0], x_pos : x_pos + tile.shape[1]]
        np.bitwise_or(region, tile[: region.shape[0], : region.shape[1]], out=region)
        x_pos += advance

    flips = int(round(NOISE_FRACTION * canvas.size))
    flat = rng.choice(canvas.size, size=flips, replace=False)
    canvas.flat[flat] ^= 1

    return PriceCaptcha(
        amount=amount,
        currency=currency.upper(),
        rendered_image=BinaryImage(canvas),
        issued_at=issued_at if issued_at is not None else datetime.now(timezone.utc),
        nonce=nonce,
        valid_for_seconds=valid_for_seconds,
    )


def compose_selfie(selfie: BinaryImage, captcha: PriceCaptcha, anchor: Corner) -> BinaryImage:
    """Overwrite the selfie corner region with the rendered price."""
    overlay = captcha.rendered_image
    if overlay.width > selfie.width or overlay.height > selfie.height:
        raise ValidationError(
            f"price overlay {overlay.width}x{overlay.height} does not fit "
            f"selfie {selfie.width}x{selfie.height}"
        )
    out = selfie.pixels.copy()
    if anchor in (Corner.TOP_LEFT, Corner.BOTTOM_LEFT):
        x0 = 0
    else:
        x0 = selfie.width - overlay.width
    if anchor in (Corner.TOP_LEFT, Corner.TOP_RIGHT):
        y0 = 0
    else:
        y0 = selfie.height - overlay.height
    out[y0 : y0 + overlay.height, x0 : x0 + overlay.width] = overlay.pixels
    return BinaryImage(out)


def check_window(
    issued_at: datetime, generated_at: datetime, valid_for_seconds: int
) -> CaptureWindow:
    """Window check on raw timestamps; boundary inclusive."""
    delta = (generated_at - issued_at).total_seconds()
    if delta < 0:
        raise ClockSkewError(
            f"share generated {-delta:.3f}s before its price overlay was issued"
        )
    return CaptureWindow.WITHIN_WINDOW if delta <= valid_for_seconds else CaptureWindow.EXPIRED


def check_capture_window(captcha: PriceCaptcha, share_generated_at: datetime) -> CaptureWindow:
    return check_window(captcha.issued_at, share_generated_at, captcha.valid_for_seconds)

"""Raw inputs to non-negative spectral vectors.

Images become decimated 2-D energy spectra; per-frame coefficient series
become concatenated periodograms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import read_matrix
from .exceptions import InputError, PreprocessingError

__all__ = [
    "GrayImage",
    "SpectrumVector",
    "FrameSeries",
    "tile_image",
    "image_to_spectrum",
    "periodogram",
    "integrate_frames",
    "load_image",
    "load_frame_series",
]

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class GrayImage:
    pixels: np.ndarray
    source: Optional[str] = None
    tile: Optional[int] = None

    def __post_init__(self):
        p = np.array(self.pixels, dtype=np.float64, copy=True)
        if p.ndim != 2 or p.shape[0] < 2 or p.shape[1] < 2:
            raise PreprocessingError(f"an image needs at least 2x2 pixels, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise PreprocessingError("pixels must be finite")
        if p.min() < 0.0 or p.max() > 1.0:
            raise PreprocessingError("pixels must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    @property
    def shape(self):
        return self.pixels.shape


@dataclass(frozen=True)
class SpectrumVector:
    values: np.ndarray
    grid: int


@dataclass(frozen=True)
class FrameSeries:
    """``c`` coefficient trajectories over ``L`` frames."""

    coeffs: np.ndarray
    frame_rate_hz: float = 400.0 / 3.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.float64, copy=True)
        if c.ndim == 1:
            c = c[None, :]
        if c.ndim != 2 or c.shape[1] < 2:
            raise PreprocessingError(f"a frame series needs at least 2 frames, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise PreprocessingError("frame series must be finite")
        if not self.frame_rate_hz > 0:
            raise PreprocessingError("frame_rate_hz must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)


def tile_image(image: GrayImage, rows: int, cols: int) -> list:
    """Split into ``rows * cols`` equal tiles, row-major."""
    h, w = image.shape
    if rows < 1 or cols < 1 or h % rows or w % cols:
        raise PreprocessingError(f"a {h}x{w} image cannot be tiled {rows}x{cols}")
    th, tw = h // rows, w // cols
    return [
        GrayImage(image.pixels[r * th:(r + 1) * th, c * tw:(c + 1) * tw], image.source, r * cols + c)
        for r in range(rows)
        for c in range(cols)
    ]


def image_to_spectrum(image: GrayImage, rho: int) -> SpectrumVector:
    """Decimated energy spectrum of a square image, vectorized row-major.

    The mean is removed, the energy ``|F|^2`` of the 2-D DFT is centered on
    the zero frequency and averaged over non-overlapping
    ``(side/rho) x (side/rho)`` blocks.
    """
    h, w = image.shape
    if h != w:
        raise PreprocessingError(f"image must be square, got {h}x{w}")
    if rho < 1 or h % rho:
        raise PreprocessingError(f"side {h} is not divisible by rho = {rho}")
    p = image.pixels - image.pixels.mean()
    if np.ptp(image.pixels) == 0.0:
        # the rounded mean would leave a tiny residual
        p = np.zeros_like(p)
    energy = np.fft.fftshift(np.abs(np.fft.fft2(p)) ** 2)
    b = h // rho
    blocks = energy.reshape(rho, b, rho, b).mean(axis=(1, 3))
    return SpectrumVector(blocks.ravel(), rho)


def periodogram(series) -> np.ndarray:
    """``P[k] = |sum_t s[t] exp(-2 pi i k t / L)|^2 / L`` for ``k = 0..L/2``."""
    s = np.asarray(series, dtype=np.float64)
    if s.ndim != 1:
        raise PreprocessingError("periodogram takes a 1-D series")
    n = s.size
    if n < 2 or n % 2:
        raise PreprocessingError(f"series length must be even and >= 2, got {n}")
    return np.abs(np.fft.rfft(s)) ** 2 / n


def integrate_frames(series: FrameSeries, window_len: int) -> np.ndarray:
    """Periodograms of the last ``window_len`` frames of each coefficient,
    concatenated in coefficient order."""
    c, n = series.coeffs.shape
    if window_len > n:
        raise PreprocessingError(f"window of {window_len} frames exceeds the series length {n}")
    return np.concatenate([periodogram(row[n - window_len:]) for row in series.coeffs])


def load_image(path) -> GrayImage:
    """PGM/PPM through Pillow, or a CSV matrix of pixels in [0, 1].

    Color pixmaps are converted with luma weights 0.299/0.587/0.114.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return GrayImage(read_matrix(path), str(path))
    if suffix not in (".pgm", ".ppm", ".pnm"):
        raise InputError(f"{path}: unsupported image format {suffix!r} (use PGM, PPM or CSV)")
    from PIL import Image

    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            a = np.asarray(im, dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise InputError(f"{path}: cannot decode image: {exc}") from exc
    if mode in ("I", "I;16", "I;16B"):
        top = 65535.0 if a.max() > 255 else 255.0
        a = a / top
    else:
        a = a / 255.0
    if a.ndim == 3:
        a = a[..., :3] @ _LUMA
    return GrayImage(a, str(path))


def load_frame_series(path) -> FrameSeries:
    """CSV with one coefficient trajectory per row; ``<path>.json`` may give
    ``frame_rate_hz``."""
    coeffs = read_matrix(path)
    side = Path(str(path) + ".json")
    rate = 400.0 / 3.0
    meta = {}
    if side.exists():
        try:
            meta = json.loads(side.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{side}: {exc}") from None
        rate = float(meta.get("frame_rate_hz", rate))
    return FrameSeries(coeffs, rate, meta)

"""Body-motion signals: SSIM between consecutive arm segments and its first difference."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import cv2
import numpy as np

from .preprocess import ArmSegmentSeries, Hand

K1, K2 = 0.01, 0.03
DYNAMIC_RANGE = 255.0
C1 = (K1 * DYNAMIC_RANGE) ** 2
C2 = (K2 * DYNAMIC_RANGE) ** 2
WINDOW = 11
SIGMA = 1.5


def _gaussian_taps(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


_TAPS = _gaussian_taps()
_PAD = WINDOW // 2


def _filter_valid(img: np.ndarray) -> np.ndarray:
    out = cv2.sepFilter2D(img, cv2.CV_64F, _TAPS, _TAPS, borderType=cv2.BORDER_REFLECT)
    return out[_PAD:-_PAD, _PAD:-_PAD]


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.size == 0 or b.size == 0:
        raise ValueError("ssim of an empty image")
    if a.shape != b.shape:
        raise ValueError(f"ssim dimension mismatch: {a.shape} vs {b.shape}")


def _global_ssim(x: np.ndarray, y: np.ndarray) -> float:
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(), y.var()
    cov = ((x - mx) * (y - my)).mean()
    return float(((2 * mx * my + C1) * (2 * cov + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2)))


def _ssim_map(mx, my, xx, yy, xy) -> np.ndarray:
    vx = xx - mx * mx
    vy = yy - my * my
    cov = xy - mx * my
    num = (2 * mx * my + C1) * (2 * cov + C2)
    den = (mx * mx + my * my + C1) * (vx + vy + C2)
    return num / den


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM of two gray images (11x11 Gaussian window, sigma 1.5, L=255).

    Images smaller than the window fall back to one global-statistics SSIM.
    """
    _check_pair(a, b)
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.ndim == 3:
        return float(np.mean([ssim(x[..., c], y[..., c]) for c in range(x.shape[2])]))
    if x.shape[0] < WINDOW or x.shape[1] < WINDOW:
        return _global_ssim(x, y)
    m = _ssim_map(_filter_valid(x), _filter_valid(y), _filter_valid(x * x),
                  _filter_valid(y * y), _filter_valid(x * y))
    return float(m.mean())


@dataclass(frozen=True)
class SsimSeries:
    hand: Hand
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class DssimSeries:
    hand: Hand
    values: np.ndarray
    mean: float = field(init=False)
    std: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "mean", float(np.mean(self.values)) if len(self.values) else 0.0)
        object.__setattr__(self, "std", float(np.std(self.values)) if len(self.values) else 0.0)

    def __len__(self) -> int:
        return len(self.values)

    def zscores(self) -> np.ndarray:
        if self.std == 0:
            return np.zeros_like(self.values)
        return (self.values - self.mean) / self.std


def ssim_values(segments: Sequence[np.ndarray]) -> np.ndarray:
    """SSIM of each consecutive pair; per-segment moments are filtered once."""
    if len(segments) < 2:
        raise ValueError("need at least 2 segments for an SSIM series")
    shape = segments[0].shape
    for s in segments:
        if s.shape != shape:
            raise ValueError(f"segment size mismatch: {s.shape} vs {shape}")
    if shape[0] < WINDOW or shape[1] < WINDOW:
        return np.array([ssim(segments[i], segments[i + 1]) for i in range(len(segments) - 1)])
    out = np.empty(len(segments) - 1)
    prev = None
    for i, seg in enumerate(segments):
        x = np.asarray(seg, dtype=np.float64)
        cur = (x, _filter_valid(x), _filter_valid(x * x))
        if prev is not None:
            xy = _filter_valid(prev[0] * x)
            out[i - 1] = _ssim_map(prev[1], cur[1], prev[2], cur[2], xy).mean()
        prev = cur
    return out


def ssim_series(series: ArmSegmentSeries) -> SsimSeries:
    return SsimSeries(series.hand, ssim_values(series.segments))


def dssim_series(s: SsimSeries) -> DssimSeries:
    if len(s.values) < 2:
        raise ValueError("need an SSIM series of length >= 2")
    v = np.asarray(s.values, dtype=np.float64)
    return DssimSeries(s.hand, v[:-1] - v[1:])


def dump_csv(values: Sequence[float]) -> str:
    return "index,value\n" + "".join(f"{i},{v:.10f}\n" for i, v in enumerate(values, start=1))

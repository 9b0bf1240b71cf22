"""Per-hand keystroke detection from the dSSIM series."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .motion import DssimSeries
from .preprocess import Hand

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DetectionParams:
    phi_a: float = 1.5
    phi_b: float = 3.0
    phi_c: float = 1.5
    minima_window_s: float = 0.05

    def __post_init__(self):
        if not 0 < self.phi_a < self.phi_b:
            raise ValueError("need 0 < phi_a < phi_b")
        if not self.phi_c > 0:
            raise ValueError("phi_c must be positive")
        if not self.minima_window_s > 0:
            raise ValueError("minima_window_s must be positive")

    def window(self, fps: float) -> int:
        """Number of series elements searched for the trailing minimum."""
        return max(1, math.ceil(self.minima_window_s * fps - 1e-9))


@dataclass(frozen=True, order=True)
class KeystrokeEvent:
    frame_index: int
    hand: Hand
    peak_value: float = 0.0  # z-score of the dSSIM maximum

    def __post_init__(self):
        if self.frame_index < 1:
            raise ValueError("frame index must be >= 1")


def _plateau_end(v: np.ndarray, i: int) -> int:
    j = i + 1
    while j < len(v) and v[j] == v[i]:
        j += 1
    return j


def is_local_max(v: np.ndarray, i: int) -> bool:
    """Strict local maximum; on a plateau only its first index counts."""
    if i <= 0 or i >= len(v) - 1 or not v[i - 1] < v[i]:
        return False
    j = _plateau_end(v, i)
    return j < len(v) and v[j] < v[i]


def is_local_min(v: np.ndarray, i: int) -> bool:
    if i <= 0 or i >= len(v) - 1 or not v[i - 1] > v[i]:
        return False
    j = _plateau_end(v, i)
    return j < len(v) and v[j] > v[i]


def detect_keystrokes(d: DssimSeries, fps: float, params: DetectionParams = DetectionParams(),
                      first_frame: int = 1) -> list[KeystrokeEvent]:
    """Frames where a dSSIM peak inside (phi_a, phi_b) is followed by a deep minimum.

    ``d.values[i]`` (0-based) compares the segment pairs ending at frames
    ``first_frame + i + 1`` and ``first_frame + i + 2``; a peak there marks a
    keystroke at frame ``first_frame + i + 2``.
    """
    if len(d.values) == 0:
        raise ValueError("empty dSSIM series")
    if not fps > 0:
        raise ValueError("fps must be positive")
    if d.std == 0:
        log.warning("no motion variance in %s-hand series", d.hand.value)
        return []
    v = np.asarray(d.values)
    z = (v - d.mean) / d.std
    w = params.window(fps)
    events = []
    for i in range(1, len(v) - 1):
        if not (params.phi_a < z[i] < params.phi_b):
            continue
        if not is_local_max(v, i):
            continue
        deepest = None
        for j in range(i + 1, min(i + w, len(v) - 1) + 1):
            if is_local_min(v, j) and (deepest is None or z[j] < deepest):
                deepest = z[j]
        if deepest is None or deepest > -params.phi_c:
            continue
        events.append(KeystrokeEvent(first_frame + i + 2, d.hand, float(z[i])))
    return events


def format_report(events: Iterable[KeystrokeEvent]) -> str:
    return "".join(f"{e.hand.value} {e.frame_index} {e.peak_value:.6f}\n" for e in sorted(events))

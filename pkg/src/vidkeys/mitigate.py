"""Keystroke-triggered frame manipulations: box blur, pixelation and frame skipping."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .frames import Frame, FrameSequence
from .motion import ssim

BLUR, PIXELATE, SKIP = "blur", "pixelate", "skip"
KINDS = (BLUR, PIXELATE, SKIP)


def _to_float(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float64)


def _back(values: np.ndarray, like: np.ndarray) -> np.ndarray:
    if like.dtype == np.uint8:
        return np.clip(np.rint(values), 0, 255).astype(np.uint8)
    return values.astype(like.dtype)


def blur_kernel_side(z: float, shape: tuple[int, ...]) -> int:
    return max(1, int(round(z * min(shape[0], shape[1]))))


def _box_sum_axis(x: np.ndarray, k: int, axis: int) -> np.ndarray:
    """Sum over a length-k window with edge clamping; the window starts k//2 before each pixel."""
    before = k // 2
    after = k - 1 - before
    pad = [(0, 0)] * x.ndim
    pad[axis] = (before + 1, after)
    c = np.cumsum(np.pad(x, pad, mode="edge"), axis=axis)
    n = x.shape[axis]
    hi = np.take(c, np.arange(k, k + n), axis=axis)
    lo = np.take(c, np.arange(0, n), axis=axis)
    return hi - lo


def box_blur(frame: np.ndarray, z: float) -> np.ndarray:
    """Mean over a k x k neighbourhood, k = round(z * shorter side), borders clamped."""
    if not z > 0:
        raise ValueError("blur strength must be positive")
    k = blur_kernel_side(z, frame.shape)
    if k == 1:
        return frame.copy()
    x = _to_float(frame)
    s = _box_sum_axis(_box_sum_axis(x, k, 0), k, 1)
    return _back(s / (k * k), frame)


def tile_size(z: float, shape: tuple[int, ...]) -> tuple[int, int]:
    return max(1, int(round(z * shape[0]))), max(1, int(round(z * shape[1])))


def pixelate(frame: np.ndarray, z: float) -> np.ndarray:
    """Replace every tile by its mean; tiles at the bottom and right edges may be smaller."""
    if not z > 0:
        raise ValueError("pixelation strength must be positive")
    th, tw = tile_size(z, frame.shape)
    rows, cols = frame.shape[:2]
    r0 = np.arange(0, rows, th)
    c0 = np.arange(0, cols, tw)
    x = _to_float(frame)
    sums = np.add.reduceat(np.add.reduceat(x, r0, axis=0), c0, axis=1)
    hs = np.diff(np.append(r0, rows))
    ws = np.diff(np.append(c0, cols))
    area = np.outer(hs, ws)
    if x.ndim == 3:
        area = area[..., None]
    means = _back(sums / area, frame)
    return np.repeat(np.repeat(means, hs, axis=0), ws, axis=1)


def drop_windows(keystrokes: Iterable[int], f: int, first: int, last: int) -> list[tuple[int, int]]:
    """Merged inclusive [t-f, t+f] windows, clipped to [first, last]."""
    spans = sorted((max(first, t - f), min(last, t + f)) for t in keystrokes)
    merged: list[list[int]] = []
    for a, b in spans:
        if a > b:
            continue
        if merged and a <= merged[-1][1] + 1:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged]


def _check_keylog(seq: FrameSequence, keylog: Sequence[int]) -> list[int]:
    lo, hi = seq.frames[0].index, seq.frames[-1].index
    out = []
    for t in keylog:
        t = int(t)
        if not lo <= t <= hi:
            raise ValueError(f"keystroke index {t} out of range [{lo}, {hi}]")
        out.append(t)
    return sorted(out)


@dataclass(frozen=True)
class SkipResult:
    sequence: FrameSequence
    dropped: tuple[int, ...]  # original indices
    kept: tuple[int, ...]  # original index of each output frame, in order


def frame_skip(seq: FrameSequence, keylog: Sequence[int], f: int) -> SkipResult:
    """Drop [t-f, t+f] around every keystroke and renumber the survivors from 1."""
    if f < 1:
        raise ValueError("f must be >= 1")
    keys = _check_keylog(seq, keylog) if len(seq) else []
    windows = drop_windows(keys, f, seq.frames[0].index, seq.frames[-1].index) if keys else []
    gone = set()
    for a, b in windows:
        gone.update(range(a, b + 1))
    kept_frames = [fr for fr in seq.frames if fr.index not in gone]
    if not kept_frames:
        raise ValueError("frame skipping dropped every frame")
    out = FrameSequence(tuple(Frame(fr.pixels, i) for i, fr in enumerate(kept_frames, start=1)), seq.fps)
    return SkipResult(out, tuple(sorted(gone)), tuple(fr.index for fr in kept_frames))


@dataclass(frozen=True)
class MitigationConfig:
    kind: str
    z: float = 0.0  # blur / pixelate strength, a fraction of the frame size
    f: int = 0  # frames skipped on each side of a keystroke
    buffer_frames: int = 2
    post_frames: int = 4  # counts the keystroke frame itself

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown mitigation {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.kind == SKIP:
            if self.f < 1:
                raise ValueError("frame skipping needs f >= 1")
        elif not 0 < self.z < 1:
            raise ValueError("z must lie in (0, 1)")
        if self.buffer_frames < 0 or self.post_frames < 1:
            raise ValueError("buffer_frames >= 0 and post_frames >= 1 required")

    @classmethod
    def blur(cls, z: float = 0.20) -> "MitigationConfig":
        return cls(BLUR, z=z)

    @classmethod
    def pixelate(cls, z: float = 0.07) -> "MitigationConfig":
        return cls(PIXELATE, z=z)

    @classmethod
    def skip(cls, f: int = 5) -> "MitigationConfig":
        return cls(SKIP, f=f, buffer_frames=f, post_frames=f)

    @property
    def strength(self) -> float:
        return self.f if self.kind == SKIP else self.z

    def touched(self, keylog: Iterable[int], first: int, last: int) -> list[int]:
        """Frame indices a blur/pixelate pass modifies (windows merged)."""
        out = set()
        for t in keylog:
            out.update(range(max(first, t - self.buffer_frames), min(last, t + self.post_frames - 1) + 1))
        return sorted(out)


@dataclass(frozen=True)
class MitigationReport:
    effectiveness: float  # drop in word recovery, percentage points; nan without ground truth
    efficiency_ms: float  # filter time per touched frame
    quality: float  # mean SSIM of touched frames against the originals
    touched_frames: int = 0

    def format(self) -> str:
        return f"{self.effectiveness:.4f} {self.efficiency_ms:.4f} {self.quality:.6f}\n"

    def with_effectiveness(self, value: float) -> "MitigationReport":
        return MitigationReport(value, self.efficiency_ms, self.quality, self.touched_frames)


@dataclass(frozen=True)
class MitigationResult:
    sequence: FrameSequence
    report: MitigationReport
    kept: tuple[int, ...]  # original index of each output frame
    dropped: tuple[int, ...] = field(default=())


def apply_mitigation(seq: FrameSequence, keylog: Sequence[int], config: MitigationConfig,
                     measure_quality: bool = True) -> MitigationResult:
    keys = _check_keylog(seq, keylog) if len(seq) else []
    if config.kind == SKIP:
        if not keys:
            return MitigationResult(seq, MitigationReport(math.nan, 0.0, 1.0), tuple(fr.index for fr in seq))
        t0 = time.perf_counter()
        res = frame_skip(seq, keys, config.f)
        ms = (time.perf_counter() - t0) * 1000
        n = len(res.dropped)
        report = MitigationReport(math.nan, ms / n if n else 0.0, 1.0, n)
        return MitigationResult(res.sequence, report, res.kept, res.dropped)

    op = box_blur if config.kind == BLUR else pixelate
    touched = set(config.touched(keys, seq.frames[0].index, seq.frames[-1].index))
    out = []
    elapsed = 0.0
    scores = []
    for fr in seq.frames:
        if fr.index not in touched:
            out.append(fr)
            continue
        t0 = time.perf_counter()
        px = op(fr.pixels, config.z)
        elapsed += time.perf_counter() - t0
        if measure_quality:
            scores.append(ssim(fr.pixels, px))
        out.append(Frame(px, fr.index))
    n = len(touched)
    quality = float(np.mean(scores)) if scores else (1.0 if not n or not measure_quality else math.nan)
    report = MitigationReport(math.nan, elapsed * 1000 / n if n else 0.0, quality, n)
    return MitigationResult(FrameSequence(tuple(out), seq.fps), report, tuple(fr.index for fr in seq))


def format_drop_log(dropped: Iterable[int]) -> str:
    return "".join(f"{i}\n" for i in dropped)

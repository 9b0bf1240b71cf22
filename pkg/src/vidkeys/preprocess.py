"""Background removal, face-box acquisition and arm segmentation.

Masks are boolean ``(rows, cols)`` arrays, True on the body. Coordinates are
0-based with half-open ranges: a face box with origin ``(j, k)`` (row, column)
and size ``a`` x ``b`` (width x height) covers rows ``j:j+b`` and columns
``k:k+a``.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import cv2
import numpy as np

from .frames import Frame, gray_array, load_manifest

DEFAULT_DIFF_THRESHOLD = 25


class Hand(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"

    @property
    def short(self) -> str:
        return "L" if self is Hand.LEFT else "R"

    @classmethod
    def parse(cls, text: str) -> "Hand":
        t = text.strip().lower()
        if t in ("l", "left"):
            return cls.LEFT
        if t in ("r", "right"):
            return cls.RIGHT
        raise ValueError(f"unknown hand {text!r}")


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class FaceBox:
    j: int  # top row
    k: int  # left column
    a: int  # width
    b: int  # height

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError(f"face box must have positive size, got {self.a}x{self.b}")

    def shifted(self, drow: int, dcol: int) -> "FaceBox":
        return FaceBox(self.j + drow, self.k + dcol, self.a, self.b)

    def check_inside(self, rows: int, cols: int) -> None:
        if self.j < 0 or self.k < 0 or self.j + self.b > rows or self.k + self.a > cols:
            raise SegmentationError(f"face box {self} does not fit a {cols}x{rows} frame")


@dataclass(frozen=True)
class ArmSegmentSeries:
    """Per-hand crops of every frame, all of one size.

    ``origins[i]`` is the (row, col) of segment i's top-left pixel in its frame.
    """

    hand: Hand
    segments: tuple[np.ndarray, ...]
    faceboxes: tuple[FaceBox, ...]
    origins: tuple[tuple[int, int], ...]
    frame_indices: tuple[int, ...]
    _pos: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.segments)
        if not (len(self.faceboxes) == len(self.origins) == len(self.frame_indices) == n):
            raise ValueError("series fields must have one entry per segment")
        object.__setattr__(self, "_pos", {f: i for i, f in enumerate(self.frame_indices)})

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def shape(self) -> tuple[int, int]:
        return self.segments[0].shape

    def position(self, frame_index: int) -> int:
        """List position of the segment cut from ``frame_index``."""
        try:
            return self._pos[frame_index]
        except KeyError:
            raise KeyError(f"no {self.hand.value} segment for frame {frame_index}") from None


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(f"dimension mismatch between frame and {what}: {a.shape[:2]} vs {b.shape[:2]}")


def remove_background(gray: np.ndarray, mask: np.ndarray) -> np.ndarray:
    _check_same_shape(gray, mask, "mask")
    out = np.where(mask, gray, 0)
    return out.astype(gray.dtype, copy=False)


def largest_component(mask: np.ndarray) -> np.ndarray:
    if not mask.any():
        return np.zeros(mask.shape, dtype=bool)
    n, labels, stats, _ = cv2.connectedComponentsWithStats(mask.astype(np.uint8), connectivity=4)
    if n <= 2:
        return mask.astype(bool)
    best = 1 + int(np.argmax(stats[1:, cv2.CC_STAT_AREA]))
    return labels == best


def differencing_mask(gray: np.ndarray, background_ref: np.ndarray,
                      threshold: float = DEFAULT_DIFF_THRESHOLD) -> np.ndarray:
    """Foreground where the frame departs from an empty-scene reference."""
    _check_same_shape(gray, background_ref, "background reference")
    if not 0 < threshold < 255:
        raise ValueError("threshold must lie in (0, 255)")
    diff = np.abs(gray.astype(np.int16) - background_ref.astype(np.int16))
    return largest_component(diff > threshold)


def segment_arms(gray: np.ndarray, box: FaceBox) -> tuple[np.ndarray, np.ndarray]:
    """Cut (left_arm, right_arm) segments below and beside the face box.

    The subject's left arm shows on the frame's right side.
    """
    rows, cols = gray.shape[:2]
    box.check_inside(rows, cols)
    top = box.j + box.b
    if top >= rows:
        raise SegmentationError("degenerate left/right segment: face box touches the bottom edge")
    if box.k + box.a >= cols:
        raise SegmentationError("degenerate left segment: face box touches the right edge")
    if box.k <= 0:
        raise SegmentationError("degenerate right segment: face box touches the left edge")
    return gray[top:, box.k + box.a:], gray[top:, :box.k]


def build_series(frames: Sequence[np.ndarray], boxes: Sequence[FaceBox],
                 frame_indices: Sequence[int] | None = None) -> tuple[ArmSegmentSeries, ArmSegmentSeries]:
    """Segment every frame with its own box and crop each hand's series to a common size.

    Crops keep the corner adjacent to the face box (top-left for the left arm,
    top-right for the right arm).
    """
    if len(frames) != len(boxes):
        raise ValueError("need one face box per frame")
    if frame_indices is None:
        frame_indices = range(1, len(frames) + 1)
    pieces = [segment_arms(f, b) for f, b in zip(frames, boxes)]
    h = min(p[0].shape[0] for p in pieces)
    wl = min(p[0].shape[1] for p in pieces)
    wr = min(p[1].shape[1] for p in pieces)
    left, right, lo, ro = [], [], [], []
    for (ls, rs), b in zip(pieces, boxes):
        top = b.j + b.b
        left.append(np.ascontiguousarray(ls[:h, :wl]))
        lo.append((top, b.k + b.a))
        right.append(np.ascontiguousarray(rs[:h, rs.shape[1] - wr:]))
        ro.append((top, b.k - wr))
    idx = tuple(int(i) for i in frame_indices)
    return (ArmSegmentSeries(Hand.LEFT, tuple(left), tuple(boxes), tuple(lo), idx),
            ArmSegmentSeries(Hand.RIGHT, tuple(right), tuple(boxes), tuple(ro), idx))


# -- providers ---------------------------------------------------------------

class MaskProvider(Protocol):
    def mask(self, frame: Frame) -> np.ndarray: ...


class FaceboxProvider(Protocol):
    def facebox(self, frame: Frame) -> FaceBox: ...


class SidecarMasks:
    """Per-frame mask rasters (0 background, 255 body) listed in a manifest."""

    def __init__(self, manifest: str | os.PathLike):
        seq = load_manifest(manifest)
        self._masks = {f.index: gray_array(f.pixels) > 127 for f in seq.frames}

    def mask(self, frame: Frame) -> np.ndarray:
        try:
            return self._masks[frame.index]
        except KeyError:
            raise KeyError(f"no sidecar mask for frame {frame.index}") from None


class ArrayMasks:
    """Masks held in memory, keyed by frame index."""

    def __init__(self, masks: Sequence[np.ndarray] | dict[int, np.ndarray]):
        if not isinstance(masks, dict):
            masks = {i: m for i, m in enumerate(masks, start=1)}
        self._masks = masks

    def mask(self, frame: Frame) -> np.ndarray:
        return self._masks[frame.index]


class DifferencingMasks:
    def __init__(self, background_ref: np.ndarray, threshold: float = DEFAULT_DIFF_THRESHOLD):
        self.background_ref = gray_array(background_ref)
        self.threshold = threshold

    def mask(self, frame: Frame) -> np.ndarray:
        return differencing_mask(gray_array(frame.pixels), self.background_ref, self.threshold)


class StaticFacebox:
    def __init__(self, box: FaceBox):
        self.box = box

    def facebox(self, frame: Frame) -> FaceBox:
        return self.box


class SidecarFaceboxes:
    """Text lines ``frame_index j k a b``, or a single ``* j k a b`` for a static box."""

    def __init__(self, path: str | os.PathLike | None = None, *, boxes: dict[int, FaceBox] | None = None,
                 static: FaceBox | None = None):
        self.boxes: dict[int, FaceBox] = dict(boxes or {})
        self.static = static
        if path is not None:
            self._read(Path(path))
        if not self.boxes and self.static is None:
            raise ValueError("facebox sidecar holds no boxes")

    def _read(self, path: Path) -> None:
        if not path.is_file():
            raise FileNotFoundError(f"facebox file not found: {path}")
        for n, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ValueError(f"{path}:{n}: expected 'frame_index j k a b'")
            box = FaceBox(*(int(p) for p in parts[1:]))
            if parts[0] == "*":
                self.static = box
            else:
                self.boxes[int(parts[0])] = box

    def facebox(self, frame: Frame) -> FaceBox:
        box = self.boxes.get(frame.index, self.static)
        if box is None:
            raise KeyError(f"no face box for frame {frame.index}")
        return box


def write_faceboxes(path: str | os.PathLike, boxes: Sequence[FaceBox]) -> None:
    lines = [f"{i} {b.j} {b.k} {b.a} {b.b}" for i, b in enumerate(boxes, start=1)]
    Path(path).write_text("\n".join(lines) + "\n")

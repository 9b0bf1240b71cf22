"""Corrected arm displacement between consecutive same-hand keystrokes.

Pixel lists are ``(row, col)`` integer arrays. Flow vectors come back in
raster convention (x right, y down); displacement vectors are reported with y
pointing up so the direction tables apply as written.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import cv2
import numpy as np

from .infer import ALL_DIRECTIONS
from .preprocess import ArmSegmentSeries, Hand

log = logging.getLogger(__name__)

CANNY_LOW = 50
CANNY_HIGH = 150
LK_WINDOW = 15
LK_LEVELS = 3
EPSILON = 0.5
BACKGROUND_GRID = 16
FB_THRESHOLD = 1.0  # px, forward-backward consistency


class ContourError(ValueError):
    pass


class FlowError(ValueError):
    pass


@dataclass(frozen=True)
class FlowParams:
    canny_low: float = CANNY_LOW
    canny_high: float = CANNY_HIGH
    window: int = LK_WINDOW
    levels: int = LK_LEVELS
    epsilon: float = EPSILON
    background_grid: int = BACKGROUND_GRID
    fb_threshold: float | None = FB_THRESHOLD


@dataclass(frozen=True)
class ContourSet:
    outer: np.ndarray
    shoulder: np.ndarray
    arm: np.ndarray
    p_alpha: tuple[int, int]
    p_beta: tuple[int, int]
    p_gamma: tuple[int, int]
    flags: tuple[str, ...] = ()


def outer_contour(segment: np.ndarray, hand: Hand, low: float = CANNY_LOW,
                  high: float = CANNY_HIGH) -> np.ndarray:
    """Outermost edge pixel of each row: rightmost for the left arm, leftmost for the right."""
    edges = cv2.Canny(np.ascontiguousarray(segment, dtype=np.uint8), low, high,
                      apertureSize=3, L2gradient=True) > 0
    rows = np.flatnonzero(edges.any(axis=1))
    if rows.size == 0:
        raise ContourError("empty contour")
    sub = edges[rows]
    if hand is Hand.LEFT:
        cols = sub.shape[1] - 1 - np.argmax(sub[:, ::-1], axis=1)
    else:
        cols = np.argmax(sub, axis=1)
    return np.column_stack([rows, cols]).astype(np.int64)


def split_contour(oc: np.ndarray, hand: Hand, shape: tuple[int, int]) -> ContourSet:
    """Split the outer contour at the 45 degree projection from the pixel nearest the neck.

    The neck corner is the segment's top corner next to the face: top-left for
    the left arm, top-right for the right arm.
    """
    oc = np.asarray(oc, dtype=np.int64)
    if len(oc) == 0:
        raise ContourError("empty contour")
    if len(oc) == 1:
        p = tuple(int(v) for v in oc[0])
        return ContourSet(oc, oc, oc, p, p, p, ("degenerate",))
    corner = np.array([0, 0 if hand is Hand.LEFT else shape[1] - 1])
    ia = int(np.argmin(((oc - corner) ** 2).sum(axis=1)))
    ra, ca = oc[ia]
    flags = []
    ib = None
    for i in range(ia + 1, len(oc)):
        r, c = oc[i]
        reach = (c - ca) if hand is Hand.LEFT else (ca - c)
        if reach <= r - ra:
            ib = i
            break
    if ib is None:
        ib = len(oc) // 2
        flags.append("ray_missed")
    ig = int(np.argmax(((oc - oc[ia]) ** 2).sum(axis=1)))
    as_pt = lambda i: (int(oc[i][0]), int(oc[i][1]))  # noqa: E731
    return ContourSet(oc, oc[:ib + 1], oc[ib:], as_pt(ia), as_pt(ib), as_pt(ig), tuple(flags))


def _lk(src: np.ndarray, dst: np.ndarray, pts: np.ndarray, window: int, levels: int):
    nxt, status, _ = cv2.calcOpticalFlowPyrLK(
        src, dst, pts, None, winSize=(window, window), maxLevel=levels - 1,
        criteria=(cv2.TERM_CRITERIA_EPS | cv2.TERM_CRITERIA_COUNT, 30, 0.01),
        minEigThreshold=1e-4)
    return nxt, status.reshape(-1).astype(bool)


def sparse_flow(pixels: np.ndarray, src: np.ndarray, dst: np.ndarray, window: int = LK_WINDOW,
                levels: int = LK_LEVELS, fb_threshold: float | None = FB_THRESHOLD
                ) -> tuple[np.ndarray, np.ndarray]:
    """Pyramidal Lucas-Kanade flow at ``pixels`` (row, col).

    Returns (kept_pixels, vectors) with vectors as (dx, dy) in raster
    convention. Points failing the solvability test are dropped, and so are
    points whose backward track misses the start by more than ``fb_threshold``.
    """
    if src.shape != dst.shape:
        raise ValueError(f"flow dimension mismatch: {src.shape} vs {dst.shape}")
    pixels = np.asarray(pixels).reshape(-1, 2)
    if len(pixels) == 0:
        raise ValueError("no pixels to track")
    a = np.ascontiguousarray(src, dtype=np.uint8)
    b = np.ascontiguousarray(dst, dtype=np.uint8)
    pts = pixels[:, ::-1].astype(np.float32).reshape(-1, 1, 2)
    nxt, ok = _lk(a, b, pts, window, levels)
    if fb_threshold is not None and ok.any():
        back, ok_back = _lk(b, a, nxt, window, levels)
        miss = np.hypot(*(back - pts).reshape(-1, 2).T)
        ok &= ok_back & (miss <= fb_threshold)
    if not ok.any():
        raise FlowError("untrackable contour")
    vec = (nxt - pts).reshape(-1, 2)[ok].astype(np.float64)
    return pixels[ok], vec


def classify_direction(dx: float, dy: float, hand: Hand, epsilon: float = EPSILON) -> frozenset[str]:
    """Intercardinal class of an up-positive displacement; near-zero components match both signs.

    Returns a one-element set, or several directions when ambiguous.
    """
    xs = {1, -1} if abs(dx) < epsilon else {1 if dx > 0 else -1}
    ys = {1, -1} if abs(dy) < epsilon else {1 if dy > 0 else -1}
    out = set()
    for sx in xs:
        for sy in ys:
            ns = "N" if sy > 0 else "S"
            if hand is Hand.LEFT:
                ew = "W" if sx > 0 else "E"
            else:
                ew = "E" if sx > 0 else "W"
            out.add(ns + ew)
    return frozenset(out)


def direction_label(direction: frozenset[str]) -> str:
    if len(direction) == 1:
        return next(iter(direction))
    return "Ambiguous{" + ",".join(sorted(direction)) + "}"


@dataclass(frozen=True)
class DisplacementVector:
    """om = oa - os - ob, all (x, y) with y up.

    ``os`` is the shoulder's motion net of the background motion, i.e. the
    posture change, so a rigid camera shift cancels out of om.
    """

    hand: Hand
    start_frame: int
    end_frame: int
    oa: tuple[float, float]
    os: tuple[float, float]
    ob: tuple[float, float]
    direction: frozenset[str] = ALL_DIRECTIONS
    flags: tuple[str, ...] = field(default=())

    @property
    def dx(self) -> float:
        return self.oa[0] - self.os[0] - self.ob[0]

    @property
    def dy(self) -> float:
        return self.oa[1] - self.os[1] - self.ob[1]

    @property
    def magnitude(self) -> float:
        return float(np.hypot(self.dx, self.dy))

    def format(self) -> str:
        return (f"{self.hand.value} {self.start_frame} {self.end_frame} "
                f"{self.dx:.3f} {self.dy:.3f} {direction_label(self.direction)}")


@dataclass
class FlowContext:
    """Everything displacement measurement needs, keyed by frame index.

    ``removed`` holds background-removed gray frames, ``raw`` the untouched
    gray frames, ``masks`` the body masks.
    """

    removed: Mapping[int, np.ndarray]
    raw: Mapping[int, np.ndarray]
    masks: Mapping[int, np.ndarray]
    series: Mapping[Hand, ArmSegmentSeries]
    params: FlowParams = field(default_factory=FlowParams)
    _contours: dict = field(default_factory=dict, repr=False)

    def contour(self, hand: Hand, frame_index: int) -> ContourSet:
        key = (hand, frame_index)
        if key not in self._contours:
            s = self.series[hand]
            seg = s.segments[s.position(frame_index)]
            oc = outer_contour(seg, hand, self.params.canny_low, self.params.canny_high)
            self._contours[key] = split_contour(oc, hand, seg.shape)
        return self._contours[key]

    def origin(self, hand: Hand, frame_index: int) -> tuple[int, int]:
        s = self.series[hand]
        return s.origins[s.position(frame_index)]


def background_points(mask_a: np.ndarray, mask_b: np.ndarray, grid: int = BACKGROUND_GRID) -> np.ndarray:
    """Uniform grid x grid sample of pixels that are background in both frames."""
    rows, cols = mask_a.shape
    rr = ((np.arange(grid) + 0.5) * rows / grid).astype(int)
    cc = ((np.arange(grid) + 0.5) * cols / grid).astype(int)
    g = np.array([(r, c) for r in rr for c in cc])
    keep = ~mask_a[g[:, 0], g[:, 1]] & ~mask_b[g[:, 0], g[:, 1]]
    return g[keep]


def _mean_up(vec: np.ndarray) -> tuple[float, float]:
    m = vec.mean(axis=0)
    return float(m[0]), float(-m[1])


def displacement_between(k1, k2, ctx: FlowContext) -> DisplacementVector:
    """Corrected arm displacement between two keystroke events of one hand."""
    if k1.hand is not k2.hand:
        raise ValueError("keystrokes belong to different hands")
    return arm_displacement(k1.hand, k1.frame_index, k2.frame_index, ctx)


def arm_displacement(hand: Hand, f1: int, f2: int, ctx: FlowContext) -> DisplacementVector:
    p = ctx.params
    cs = ctx.contour(hand, f1)
    r0, c0 = ctx.origin(hand, f1)
    offset = np.array([r0, c0])
    a_img, b_img = ctx.removed[f1], ctx.removed[f2]
    flags = list(cs.flags)

    _, va = sparse_flow(cs.arm + offset, a_img, b_img, p.window, p.levels, p.fb_threshold)
    oa = _mean_up(va)

    pts = background_points(ctx.masks[f1], ctx.masks[f2], p.background_grid)
    try:
        if len(pts) == 0:
            raise FlowError("no background pixels")
        _, vb = sparse_flow(pts, ctx.raw[f1], ctx.raw[f2], p.window, p.levels, p.fb_threshold)
        ob = _mean_up(vb)
    except FlowError:
        ob = (0.0, 0.0)
        flags.append("background_untracked")

    try:
        _, vs = sparse_flow(cs.shoulder + offset, a_img, b_img, p.window, p.levels, p.fb_threshold)
        sx, sy = _mean_up(vs)
        os_ = (sx - ob[0], sy - ob[1])
    except FlowError:
        os_ = (0.0, 0.0)
        flags.append("shoulder_untracked")

    dx = oa[0] - os_[0] - ob[0]
    dy = oa[1] - os_[1] - ob[1]
    return DisplacementVector(hand, f1, f2, oa, os_, ob,
                              classify_direction(dx, dy, hand, p.epsilon), tuple(flags))


def gap_vectors(events: Sequence, ctx: FlowContext) -> list[DisplacementVector]:
    """Displacement for every consecutive same-hand pair in ``events``.

    Gaps whose arm contour cannot be tracked are skipped (left unconstrained).
    """
    out = []
    for h in Hand:
        frames = sorted(e.frame_index for e in events if e.hand is h)
        for a, b in zip(frames, frames[1:]):
            try:
                out.append(arm_displacement(h, a, b, ctx))
            except (ContourError, FlowError) as exc:
                log.info("no displacement for %s %d->%d: %s", h.value, a, b, exc)
    out.sort(key=lambda v: (v.start_frame, v.hand.value))
    return out

"""Synthetic typing videos with exact ground truth.

A flat 2-D upper body (head disc, torso, shoulder caps and two textured arms)
is rendered over a low-contrast background. Every keystroke moves the typing
arm's far end to the key's image position in a one-frame strike from a
hovering pose, then holds still for a few frames. Slower repositioning moves
always last at least ``MOVE_MIN`` frames so their dSSIM signature never looks
like a strike.

Key-to-image mapping follows the direction tables used by the classifier:
moving north raises the arm in the image, and image +x is west for the left
arm and east for the right arm.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from .frames import (Frame, FrameSequence, gray_array, load_manifest, parse_manifest, read_raster,
                     write_manifest, write_raster)
from .infer import KeyboardLayout, default_layout, extended_layout
from .preprocess import FaceBox, Hand, SidecarFaceboxes, write_faceboxes

STYLES = {"hunt-peck": 1.3, "hybrid": 1.0, "touch": 0.75}
MOUSE_REACH, SCROLL, IDLE = "mouse-reach", "one-hand-scroll", "idle"
DISTRACTOR_KINDS = (MOUSE_REACH, SCROLL, IDLE)

DWELL = 3  # still frames after a strike
MOVE_MIN = 4
MOVE_MAX = 7
SAME_HAND_GAP = DWELL + MOVE_MIN + 2  # hover reached by t-2, strike at t
CROSS_HAND_GAP = 3
HOME = {Hand.LEFT: (2.9, 1.5), Hand.RIGHT: (7.4, 1.5)}  # key units (x, row)


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Distractor:
    kind: str
    start_s: float
    duration_s: float
    hand: Hand = Hand.RIGHT

    def __post_init__(self):
        if self.kind not in DISTRACTOR_KINDS:
            raise ScenarioError(f"unknown distractor {self.kind!r}")
        if self.start_s < 0 or not self.duration_s > 0:
            raise ScenarioError("distractor needs start >= 0 and a positive duration")

    def format(self) -> str:
        return f"{self.kind}@{self.start_s:g}+{self.duration_s:g}:{self.hand.value}"

    @classmethod
    def parse(cls, text: str) -> "Distractor":
        try:
            kind, rest = text.strip().split("@")
            hand = Hand.RIGHT
            if ":" in rest:
                rest, h = rest.split(":")
                hand = Hand.parse(h)
            start, dur = rest.split("+")
            return cls(kind, float(start), float(dur), hand)
        except ValueError as exc:
            raise ScenarioError(f"bad distractor {text!r}: expected kind@start+duration[:hand]") from exc


@dataclass(frozen=True)
class SynthScenario:
    words: tuple[str, ...] = ()
    rate: float = 4.0  # keystrokes per second
    typing_style: str = "hybrid"
    camera_jitter: float = 0.0  # px standard deviation per frame
    posture_drift: float = 0.0  # px per second
    distractors: tuple[Distractor, ...] = ()
    seed: int = 0
    fps: float = 30.0
    width: int = 480
    height: int = 360
    layout: str = "letters"  # "letters", "extended" or a layout file
    lead_in_s: float = 1.0
    tail_s: float = 1.0
    word_gap_s: tuple[float, float] = (1.25, 1.6)
    fidget: float = 1.0  # chance of each optional idle move
    color: bool = True

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(w.lower() for w in self.words))
        object.__setattr__(self, "distractors", tuple(sorted(self.distractors, key=lambda d: d.start_s)))
        object.__setattr__(self, "word_gap_s", tuple(float(x) for x in self.word_gap_s))
        if not 1 < self.rate < 10:
            raise ScenarioError("rate must lie strictly between 1 and 10 keystrokes/s")
        if self.typing_style not in STYLES:
            raise ScenarioError(f"typing_style must be one of {', '.join(STYLES)}")
        if self.camera_jitter < 0 or self.posture_drift < 0:
            raise ScenarioError("jitter and drift must be non-negative")
        if not self.fps > 0:
            raise ScenarioError("fps must be positive")
        if self.width < 160 or self.height < 120:
            raise ScenarioError("frames must be at least 160x120")
        lo, hi = self.word_gap_s
        if not 0 < lo <= hi:
            raise ScenarioError("word_gap_s must be an increasing positive pair")
        if not 0 <= self.fidget <= 1:
            raise ScenarioError("fidget must lie in [0, 1]")
        lay = self.keyboard()
        for w in self.words:
            if not w:
                raise ScenarioError("empty word")
            for c in w:
                if c not in lay:
                    raise ScenarioError(f"unreachable key {c!r} in word {w!r}")

    def keyboard(self) -> KeyboardLayout:
        if self.layout == "letters":
            return default_layout()
        if self.layout == "extended":
            return extended_layout()
        return KeyboardLayout.from_file(self.layout)

    # -- key=value text form ----------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "words":
                lines.append(f"words={','.join(v)}")
            elif f.name == "distractors":
                lines.extend(f"distractor={d.format()}" for d in v)
            elif f.name == "word_gap_s":
                lines.append(f"word_gap_s={v[0]:g},{v[1]:g}")
            elif isinstance(v, bool):
                lines.append(f"{f.name}={'true' if v else 'false'}")
            else:
                lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SynthScenario":
        kw: dict = {}
        dis = []
        types = {f.name: f.type for f in fields(cls)}
        for n, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ScenarioError(f"line {n}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "distractor":
                dis.append(Distractor.parse(value))
            elif key == "words":
                kw["words"] = tuple(w for w in value.replace(" ", ",").split(",") if w)
            elif key == "word_gap_s":
                kw["word_gap_s"] = tuple(float(x) for x in value.split(","))
            elif key not in types:
                raise ScenarioError(f"line {n}: unknown key {key!r}")
            elif key in ("seed", "width", "height"):
                kw[key] = int(value)
            elif key == "color":
                kw[key] = value.lower() in ("1", "true", "yes")
            elif key in ("typing_style", "layout"):
                kw[key] = value
            else:
                kw[key] = float(value)
        return cls(distractors=tuple(dis), **kw)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "SynthScenario":
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"scenario file not found: {p}")
        return cls.from_text(p.read_text())


# -- ground truth -------------------------------------------------------------

@dataclass(frozen=True)
class TruthKeystroke:
    frame: int
    key: str
    hand: Hand
    word: int  # index into GroundTruth.words
    point: tuple[float, float]  # press point in key units (x, row)


@dataclass(frozen=True)
class TruthWord:
    text: str
    keystrokes: tuple[TruthKeystroke, ...]

    @property
    def span(self) -> tuple[int, int]:
        return self.keystrokes[0].frame, self.keystrokes[-1].frame


@dataclass(frozen=True)
class DistractorSpan:
    kind: str
    hand: Hand
    start: int
    end: int
    strikes: tuple[int, ...]  # frames of strike-like motions inside the span


@dataclass
class GroundTruth:
    keylog: list[TruthKeystroke]
    words: list[TruthWord]
    distractors: list[DistractorSpan]
    masks: list[np.ndarray]
    faceboxes: list[FaceBox]
    shoulder_rows: dict[Hand, list[tuple[int, int]]]
    arm_rows: dict[Hand, list[tuple[int, int]]]
    background: np.ndarray
    fps: float

    @property
    def typing_spans(self) -> list[tuple[int, int]]:
        return [w.span for w in self.words]

    def keystroke_frames(self) -> list[int]:
        return [k.frame for k in self.keylog]


@dataclass
class SynthClip:
    frames: FrameSequence
    truth: GroundTruth
    scenario: SynthScenario


# -- motion planning ----------------------------------------------------------

@dataclass
class _Strike:
    t: int
    target: np.ndarray  # image offset from home
    truth: TruthKeystroke | None = None


@dataclass
class _Goto:
    t: int  # frame the pose is reached
    target: np.ndarray
    duration: int


class _Geometry:
    """Figure layout in pixels for one frame size."""

    def __init__(self, width: int, height: int, style: float):
        s = height / 360.0
        self.s = s
        self.cx = width / 2.0
        self.head = (self.cx, 64 * s, 34 * s)
        self.kx = 3.0 * s * style  # px per key width
        self.ky = 4.0 * s * style  # px per row
        self.lift = 6.0 * s
        self.min_speed = 2.5 * s
        self.arm_width = 38 * s
        self.arm_tuck = 12 * s  # visible arm starts this far above the joint, under the shoulder cap
        self.texture_pad = 40 * s  # texture slack for sliding along the arm
        self.fidget_radius = 9 * s
        self.joint = {}
        self.home = {}
        self.deltoid = {}
        for h, side in ((Hand.LEFT, 1), (Hand.RIGHT, -1)):
            self.joint[h] = np.array([self.cx + side * 92 * s, 148 * s])
            self.home[h] = np.array([self.cx + side * 104 * s, 320 * s])
            self.deltoid[h] = (self.cx + side * 90 * s, 142 * s, 25 * s, 38 * s)

    def facebox(self, offset=(0.0, 0.0)) -> FaceBox:
        x, y, r = self.head
        j = int(round(y - r + offset[1]))
        k = int(round(x - r + offset[0]))
        d = int(round(2 * r))
        return FaceBox(j, k, d, d)

    def key_offset(self, hand: Hand, point: tuple[float, float]) -> np.ndarray:
        hx, hy = HOME[hand]
        sx = -1.0 if hand is Hand.LEFT else 1.0
        return np.array([sx * self.kx * (point[0] - hx), self.ky * (point[1] - hy)])

    def mouse_offset(self, hand: Hand) -> np.ndarray:
        sx = -1.0 if hand is Hand.LEFT else 1.0
        return np.array([sx * 34 * self.s, 12 * self.s])

    def scroll_offset(self, hand: Hand) -> np.ndarray:
        return self.key_offset(hand, (HOME[hand][0] + (-2.5 if hand is Hand.LEFT else 3.0), 2.6))


def _press_point(layout: KeyboardLayout, key: str, rng: np.random.Generator) -> tuple[float, float]:
    k = layout[key]
    w = k.x1 - k.x0
    return (float(rng.uniform(k.x0 + 0.15 * w, k.x1 - 0.15 * w)), float(k.row + rng.uniform(0.3, 0.7)))


class _Track:
    """Per-frame far-end offsets of one arm (image px from its home pose)."""

    def __init__(self, n: int, geo: _Geometry, rng: np.random.Generator, quiet: np.ndarray, fidget: float):
        self.pos = np.zeros((n, 2))
        self.n = n
        self.geo = geo
        self.rng = rng
        self.quiet = quiet
        self.fidget = fidget
        self.cur = np.zeros(2)
        self.tf = 0  # pose fixed up to and including this frame

    def _hold(self, until: int) -> None:
        until = min(until, self.n - 1)
        if until > self.tf:
            self.pos[self.tf + 1:until + 1] = self.cur
            self.tf = until

    def _move(self, target: np.ndarray, steps: int) -> None:
        """Constant-speed move; short hops detour through a waypoint to keep the speed up.

        The waypoint is reached exactly on a frame so no step straddles the turn.
        """
        a, b = self.cur, np.asarray(target, dtype=float)
        v = self.geo.min_speed
        direct = float(np.hypot(*(b - a)))
        if direct >= v * steps:
            legs = [(a, b, steps)]
        else:
            n1 = steps // 2
            n2 = steps - n1
            half = direct / 2
            reach = math.sqrt(max((v * max(n1, n2)) ** 2 - half ** 2, 0.0))
            if direct > 1e-9:
                d = (b - a) / direct
                perp = np.array([-d[1], d[0]])
            else:
                ang = self.rng.uniform(0, 2 * math.pi)
                perp = np.array([math.cos(ang), math.sin(ang)])
            way = (a + b) / 2 + perp * reach * (1 if self.rng.random() < 0.5 else -1)
            legs = [(a, way, n1), (way, b, n2)]
        for p, q, k in legs:
            for i in range(1, k + 1):
                self.pos[self.tf + i] = p + (q - p) * (i / k)
            self.tf += k
        self.cur = b.copy()

    def _fidget(self, deadline: int) -> None:
        """Optional idle moves between now and ``deadline``, leaving room for the approach."""
        while True:
            spare = deadline - self.tf
            if spare < 2 * MOVE_MIN + 3 or self.rng.random() >= self.fidget:
                return
            if self.quiet[self.tf:deadline + 1].any():
                return
            steps = int(self.rng.integers(MOVE_MIN, min(MOVE_MAX, spare - MOVE_MIN - 3) + 1))
            ang = self.rng.uniform(0, 2 * math.pi)
            r = self.geo.fidget_radius * math.sqrt(self.rng.uniform(0.3, 1.0))
            self._move(np.array([math.cos(ang), math.sin(ang)]) * r, steps)
            pause = int(self.rng.integers(3, 9))
            self._hold(min(self.tf + pause, deadline))

    def _approach(self, target: np.ndarray, arrive: int) -> None:
        if float(np.hypot(*(target - self.cur))) < 1e-9:
            self._hold(arrive)
            return
        avail = arrive - self.tf
        if avail < MOVE_MIN:
            raise ScenarioError("motion schedule too tight")
        steps = int(self.rng.integers(MOVE_MIN, min(MOVE_MAX, avail) + 1))
        self._hold(arrive - steps)
        self._move(target, steps)

    def strike(self, s: _Strike) -> None:
        hover = s.target + np.array([0.0, -self.geo.lift])
        self._fidget(s.t - 2 - MOVE_MAX)
        self._approach(hover, s.t - 2)
        self._hold(s.t - 1)
        self.pos[s.t] = s.target
        self.cur = s.target.copy()
        self.tf = s.t
        self._hold(s.t + DWELL)

    def goto(self, g: _Goto) -> None:
        self._fidget(g.t - g.duration - 1)
        self._hold(g.t - g.duration)
        self._move(g.target, g.duration)

    def finish(self) -> None:
        self._hold(self.n - 1)


def _plan(sc: SynthScenario, geo: _Geometry, rng: np.random.Generator):
    fps = sc.fps
    lay = sc.keyboard()
    base = fps / sc.rate
    t = int(round(sc.lead_in_s * fps))
    actions: dict[Hand, list] = {Hand.LEFT: [], Hand.RIGHT: []}
    last = {Hand.LEFT: -10 ** 6, Hand.RIGHT: -10 ** 6}
    free = {Hand.LEFT: 0, Hand.RIGHT: 0}
    quiet_spans = [(0, t)]
    busy = t
    words: list[TruthWord] = []
    spans: list[DistractorSpan] = []
    pending = list(sc.distractors)

    def gap() -> int:
        return int(round(rng.uniform(*sc.word_gap_s) * fps))

    def distract(d: Distractor, start: int) -> int:
        nonlocal busy
        h = d.hand
        start = max(start, free[h] + 2 * MOVE_MIN, last[h] + DWELL + 2 * MOVE_MIN)
        end = start + int(round(d.duration_s * fps))
        strikes = []
        if d.kind == IDLE:
            quiet_spans.append((start - MOVE_MAX - 2, end))
        elif d.kind == MOUSE_REACH:
            reach = 10
            mouse = geo.mouse_offset(h)
            actions[h].append(_Goto(start + reach, mouse, reach))
            tt = start + reach + int(rng.integers(12, 24))
            while tt < end - reach - DWELL - 2:
                target = mouse + rng.normal(0, 2 * geo.s, 2)
                actions[h].append(_Strike(tt, target))
                strikes.append(tt)
                tt += int(rng.integers(int(0.9 * fps), int(1.6 * fps)))
            end = max(end, (strikes[-1] if strikes else start + reach) + DWELL + reach + 1)
            actions[h].append(_Goto(end, np.zeros(2), reach))
            quiet_spans.append((start, end))
        else:
            pos = geo.scroll_offset(h)
            tt = start + MOVE_MAX + 3
            while tt < end:
                actions[h].append(_Strike(tt, pos + rng.normal(0, 0.5 * geo.s, 2)))
                strikes.append(tt)
                tt += int(rng.integers(SAME_HAND_GAP, SAME_HAND_GAP + 3))
            end = (strikes[-1] if strikes else start) + DWELL + 1
            quiet_spans.append((start, end))
        spans.append(DistractorSpan(d.kind, h, start + 1, end + 1, tuple(s + 1 for s in strikes)))
        if strikes:
            last[h] = strikes[-1]
        free[h] = end
        other = Hand.RIGHT if h is Hand.LEFT else Hand.LEFT
        free[other] = max(free[other], end)
        busy = max(busy, end)
        return end

    for wi, word in enumerate(sc.words):
        while pending and t >= pending[0].start_s * fps:
            t = distract(pending.pop(0), t) + gap()
        strokes = []
        prev = None
        for ch in word:
            h = lay.hand_of(ch)
            if prev is None:
                tk = t
            else:
                tk = prev + max(CROSS_HAND_GAP, int(round(base * rng.uniform(0.7, 1.3))))
            tk = max(tk, last[h] + SAME_HAND_GAP, free[h] + MOVE_MAX + 3)
            if prev is not None:
                tk = max(tk, prev + CROSS_HAND_GAP)
            pt = _press_point(lay, ch, rng)
            truth = TruthKeystroke(tk + 1, ch, h, wi, pt)
            actions[h].append(_Strike(tk, geo.key_offset(h, pt), truth))
            strokes.append(truth)
            last[h] = tk
            prev = tk
        words.append(TruthWord(word, tuple(strokes)))
        busy = max(busy, prev)
        t = prev + gap()
    while pending:
        t = distract(pending.pop(0), t) + gap()
    n = busy + DWELL + int(round(sc.tail_s * fps)) + 1
    quiet_spans.append((busy + DWELL, n))
    return actions, words, spans, quiet_spans, n


# -- rendering ----------------------------------------------------------------

def _smooth_noise(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    n = rng.standard_normal(shape).astype(np.float32)
    if sigma > 0:
        n = cv2.GaussianBlur(n, (0, 0), sigma)
    sd = float(n.std())
    return n / sd if sd > 0 else n


def _texture(rng, shape, base: float, fine: float, medium: float, s: float) -> np.ndarray:
    t = base + fine * _smooth_noise(rng, shape, 0.7 * s) + medium * _smooth_noise(rng, shape, 3.0 * s)
    return np.clip(t, 0, 255).astype(np.float32)


def _aa(shape, draw, ss: int = 4) -> np.ndarray:
    """Anti-aliased coverage of a shape drawn by ``draw(canvas, scale)`` at ``ss`` times resolution."""
    big = np.zeros((shape[0] * ss, shape[1] * ss), np.uint8)
    draw(big, ss)
    return cv2.resize(big.astype(np.float32) / 255.0, (shape[1], shape[0]), interpolation=cv2.INTER_AREA)


def _poly(points, shift: float):
    def draw(img, ss):
        pts = np.round((np.asarray(points) + shift) * ss).astype(np.int32)
        cv2.fillPoly(img, [pts], 255)
    return draw


def _ellipse(cx, cy, rx, ry, shift: float):
    def draw(img, ss):
        cv2.ellipse(img, (int(round((cx + shift) * ss)), int(round((cy + shift) * ss))),
                    (int(round(rx * ss)), int(round(ry * ss))), 0, 0, 360, 255, -1)
    return draw


class _Renderer:
    def __init__(self, sc: SynthScenario, geo: _Geometry, rng: np.random.Generator, margin: int | None = None):
        self.sc = sc
        self.geo = geo
        s = geo.s
        W, H = sc.width, sc.height
        if margin is None:
            margin = int(math.ceil(4 * sc.camera_jitter)) + 2 if sc.camera_jitter > 0 else 0
        self.margin = margin
        m = self.margin
        self.world = (H + 2 * m, W + 2 * m)
        self.background = _texture(rng, self.world, 96.0, 3.0, 5.0, 1.5 * s)

        cx = geo.cx
        hx, hy, r = geo.head
        torso = [(cx - 64 * s, 112 * s), (cx + 64 * s, 112 * s), (cx + 84 * s, 130 * s),
                 (cx + 88 * s, H + 4), (cx - 88 * s, H + 4), (cx - 84 * s, 130 * s)]
        neck = [(cx - 13 * s, 80 * s), (cx + 13 * s, 80 * s), (cx + 13 * s, 120 * s), (cx - 13 * s, 120 * s)]
        shape = self.world
        a_torso = np.maximum(_aa(shape, _poly(torso, m)), _aa(shape, _poly(neck, m)))
        a_head = _aa(shape, _ellipse(hx, hy, r, r, m))
        shirt = _texture(rng, shape, 196.0, 12.0, 12.0, s)
        skin = _texture(rng, shape, 214.0, 3.0, 4.0, s)
        a_body = np.maximum(a_torso, a_head)
        self.body_alpha = a_body
        self.body_pm = (shirt * a_torso * (1 - a_head) + skin * a_head).astype(np.float32)
        self.delt_alpha = np.zeros(shape, np.float32)
        for h in Hand:
            dx, dy, rx, ry = geo.deltoid[h]
            self.delt_alpha = np.maximum(self.delt_alpha, _aa(shape, _ellipse(dx, dy, rx, ry, m)))
        self.delt_pm = (shirt * self.delt_alpha).astype(np.float32)

        L = int(1.8 * H)
        wa = int(round(geo.arm_width))
        self.arm_len = L
        self.arm_w = wa
        self.pad = int(round(geo.texture_pad))
        self.sprites = {}
        self.arm_alpha = np.ones((wa, L), np.float32)
        for h in Hand:
            self.sprites[h] = _texture(rng, (wa, L + 2 * self.pad), 200.0, 22.0, 16.0, s)
        self.rest_len = {h: float(np.hypot(*(geo.home[h] - geo.joint[h]))) for h in Hand}

    def _arm(self, hand: Hand, offset: np.ndarray, body: np.ndarray):
        g = self.geo
        m = self.margin
        joint = g.joint[hand] + body + m
        end = g.home[hand] + offset + body + m
        d = end - joint
        length = float(np.hypot(*d))
        u = d / length
        p = np.array([-u[1], u[0]])
        slide = length - self.rest_len[hand]
        size = (self.world[1], self.world[0])

        def warp(img, start):
            o = joint + start * u - p * (self.arm_w / 2)
            M = np.array([[u[0], p[0], o[0]], [u[1], p[1], o[1]]], dtype=np.float64)
            return cv2.warpAffine(img, M, size, flags=cv2.INTER_LINEAR,
                                  borderMode=cv2.BORDER_CONSTANT, borderValue=0)

        # the silhouette pivots at the joint; the texture also slides along the arm
        alpha = warp(self.arm_alpha, -g.arm_tuck)
        tex = warp(self.sprites[hand], slide - g.arm_tuck - self.pad)
        return tex * alpha, alpha

    def _shifted(self, img: np.ndarray, body: np.ndarray) -> np.ndarray:
        if not body.any():
            return img
        M = np.array([[1, 0, body[0]], [0, 1, body[1]]], dtype=np.float64)
        return cv2.warpAffine(img, M, (img.shape[1], img.shape[0]), flags=cv2.INTER_LINEAR,
                              borderMode=cv2.BORDER_CONSTANT, borderValue=0)

    def frame(self, offsets: dict[Hand, np.ndarray], body: np.ndarray, cam: tuple[int, int]):
        ba = self._shifted(self.body_alpha, body)
        img = self.background * (1 - ba) + self._shifted(self.body_pm, body)
        cover = ba.copy()
        for h in Hand:
            pm, a = self._arm(h, offsets[h], body)
            img = img * (1 - a) + pm
            cover = np.maximum(cover, a)
        da = self._shifted(self.delt_alpha, body)
        img = img * (1 - da) + self._shifted(self.delt_pm, body)
        cover = np.maximum(cover, da)
        m = self.margin
        r0, c0 = m + cam[1], m + cam[0]
        H, W = self.sc.height, self.sc.width
        img = img[r0:r0 + H, c0:c0 + W]
        mask = cover[r0:r0 + H, c0:c0 + W] > 0.5
        return np.clip(np.rint(img), 0, 255).astype(np.uint8), mask

    def empty_scene(self) -> np.ndarray:
        m = self.margin
        H, W = self.sc.height, self.sc.width
        return np.clip(np.rint(self.background[m:m + H, m:m + W]), 0, 255).astype(np.uint8)


class Figure:
    """Direct access to the renderer: pose the arms, shift the body or the camera.

    Offsets are image pixels; an arm offset moves that arm's far end from its
    rest pose, ``body`` moves the whole figure over the background and
    ``camera`` moves the view (so everything shifts the opposite way).
    """

    def __init__(self, width: int = 480, height: int = 360, seed: int = 0, margin: int = 16):
        self.scenario = SynthScenario(width=width, height=height, seed=seed, color=False)
        self.geo = _Geometry(width, height, 1.0)
        self._r = _Renderer(self.scenario, self.geo, np.random.default_rng([seed, 4]), margin)

    def key_offset(self, hand: Hand, point: tuple[float, float]) -> np.ndarray:
        return self.geo.key_offset(hand, point)

    def render(self, left=(0.0, 0.0), right=(0.0, 0.0), body=(0.0, 0.0), camera=(0, 0)):
        """(gray frame, body mask, face box)."""
        cam = (int(camera[0]), int(camera[1]))
        if max(abs(c) for c in cam) >= self._r.margin:
            raise ValueError("camera shift exceeds the render margin")
        b = np.asarray(body, dtype=float)
        img, mask = self._r.frame({Hand.LEFT: np.asarray(left, float), Hand.RIGHT: np.asarray(right, float)},
                                  b, cam)
        return img, mask, self.geo.facebox(b - np.asarray(cam))

    def empty_scene(self, camera=(0, 0)) -> np.ndarray:
        m = self._r.margin
        H, W = self.scenario.height, self.scenario.width
        r0, c0 = m + int(camera[1]), m + int(camera[0])
        return np.clip(np.rint(self._r.background[r0:r0 + H, c0:c0 + W]), 0, 255).astype(np.uint8)


TINT = np.array([1.0, 0.97, 0.92], dtype=np.float32)


def _colorize(gray: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(gray[..., None].astype(np.float32) * TINT), 0, 255).astype(np.uint8)


def _body_offsets(sc: SynthScenario, n: int, geo: _Geometry) -> np.ndarray:
    if sc.posture_drift <= 0:
        return np.zeros((n, 2))
    amp = 12 * geo.s
    t = np.arange(n) / sc.fps
    period = 4 * amp / sc.posture_drift
    phase = (t % period) / period
    tri = np.where(phase < 0.5, 4 * phase - 1, 3 - 4 * phase) * amp  # ramps at drift px/s
    return np.column_stack([tri, 0.35 * tri])


def generate(sc: SynthScenario) -> SynthClip:
    """Render the scenario. Frame indices start at 1."""
    rng = np.random.default_rng(sc.seed)
    geo = _Geometry(sc.width, sc.height, STYLES[sc.typing_style])
    actions, words, spans, quiet_spans, n = _plan(sc, geo, np.random.default_rng([sc.seed, 1]))
    quiet = np.zeros(n + 1, bool)
    for a, b in quiet_spans:
        quiet[max(0, a):max(0, min(n, b) + 1)] = True
    tracks = {}
    for i, h in enumerate(Hand):
        tr = _Track(n, geo, np.random.default_rng([sc.seed, 2 + i]), quiet, sc.fidget)
        for act in actions[h]:
            (tr.strike if isinstance(act, _Strike) else tr.goto)(act)
        tr.finish()
        tracks[h] = tr.pos

    renderer = _Renderer(sc, geo, np.random.default_rng([sc.seed, 4]))
    body = _body_offsets(sc, n, geo)
    cam_rng = np.random.default_rng([sc.seed, 5])
    lim = max(renderer.margin - 1, 0)
    if sc.camera_jitter > 0:
        cams = np.clip(np.rint(cam_rng.normal(0, sc.camera_jitter, (n, 2))), -lim, lim).astype(int)
    else:
        cams = np.zeros((n, 2), int)

    frames, masks, boxes = [], [], []
    shoulder_rows = {h: [] for h in Hand}
    arm_rows = {h: [] for h in Hand}
    for f in range(n):
        img, mask = renderer.frame({h: tracks[h][f] for h in Hand}, body[f], tuple(cams[f]))
        frames.append(Frame(_colorize(img) if sc.color else img, f + 1))
        masks.append(mask)
        shift = body[f] - cams[f]
        boxes.append(geo.facebox(shift))
        for h in Hand:
            _, dy, _, ry = geo.deltoid[h]
            top = int(round(dy - ry + shift[1]))
            bottom = int(round(dy + ry + shift[1]))
            shoulder_rows[h].append((top, bottom))
            arm_rows[h].append((bottom, sc.height))
    keylog = sorted((k for w in words for k in w.keystrokes), key=lambda k: (k.frame, k.hand.value))
    truth = GroundTruth(keylog, words, spans, masks, boxes, shoulder_rows, arm_rows,
                        renderer.empty_scene() if not sc.color else _colorize(renderer.empty_scene()), sc.fps)
    return SynthClip(FrameSequence(tuple(frames), sc.fps), truth, sc)


def random_words(dictionary_words: Sequence[str], count: int, seed: int, min_len: int = 2,
                 max_len: int = 9) -> tuple[str, ...]:
    """Sample ``count`` distinct words of a usable length, reproducibly."""
    pool = [w for w in dictionary_words if min_len <= len(w) <= max_len]
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(pool), size=count, replace=False)
    return tuple(pool[i] for i in idx)


# -- files --------------------------------------------------------------------

def write_clip(clip: SynthClip, out_dir: str | os.PathLike) -> Path:
    """Write frames, masks, face boxes and ground truth; returns the frame manifest path."""
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    seq = clip.frames
    names, mnames = [], []
    for fr, mask in zip(seq, clip.truth.masks):
        name = f"frames/{fr.index:06d}.png"
        write_raster(out / name, fr.pixels)
        names.append(name)
        mname = f"masks/{fr.index:06d}.png"
        write_raster(out / mname, mask.astype(np.uint8) * 255)
        mnames.append(mname)
    size = (seq.width, seq.height)
    manifest = out / "manifest.txt"
    write_manifest(manifest, names, seq.fps, size)
    write_manifest(out / "masks.txt", mnames, seq.fps, size)
    write_faceboxes(out / "faceboxes.txt", clip.truth.faceboxes)
    write_raster(out / "background.png", clip.truth.background)
    (out / "scenario.txt").write_text(clip.scenario.to_text())
    write_truth(clip.truth, out)
    return manifest


def write_truth(truth: GroundTruth, out: Path) -> None:
    (out / "keylog.txt").write_text("".join(f"{k.frame} {k.key} {k.hand.value}\n" for k in truth.keylog))
    (out / "words.txt").write_text("".join(
        f"{w.span[0]} {w.span[1]} {w.text}\n" for w in truth.words))
    (out / "distractors.txt").write_text("".join(
        f"{d.start} {d.end} {d.kind} {d.hand.value}\n" for d in truth.distractors))
    rows = []
    for i in range(len(truth.faceboxes)):
        parts = [str(i + 1)]
        for h in Hand:
            parts += [str(v) for v in (*truth.shoulder_rows[h][i], *truth.arm_rows[h][i])]
        rows.append(" ".join(parts))
    (out / "rows.txt").write_text("# frame left_shoulder0 left_shoulder1 left_arm0 left_arm1 "
                                  "right_shoulder0 right_shoulder1 right_arm0 right_arm1\n" + "\n".join(rows) + "\n")


def read_keylog(path: str | os.PathLike) -> list[tuple[int, str, Hand]]:
    """Lines ``frame key hand``; a bare frame number is also accepted (key and hand unknown)."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"keylog not found: {p}")
    out = []
    for n, line in enumerate(p.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            frame = int(parts[0])
        except ValueError:
            raise ValueError(f"{p}:{n}: frame index expected") from None
        key = parts[1] if len(parts) > 1 else ""
        hand = Hand.parse(parts[2]) if len(parts) > 2 else None
        out.append((frame, key, hand))
    return out


def read_words(path: str | os.PathLike) -> list[tuple[int, int, str]]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            a, b, w = line.split()
            out.append((int(a), int(b), w))
    return out


def with_words(sc: SynthScenario, words: Sequence[str]) -> SynthScenario:
    return replace(sc, words=tuple(words))


def load_truth(directory: str | os.PathLike) -> GroundTruth:
    """Read back the ground truth written by :func:`write_clip`."""
    d = Path(directory)
    masks = [gray_array(f.pixels) > 127 for f in load_manifest(d / "masks.txt")]
    seq_fps = parse_manifest(d / "manifest.txt")[0]
    faces = SidecarFaceboxes(d / "faceboxes.txt")
    boxes = [faces.boxes.get(i, faces.static) for i in range(1, len(masks) + 1)]
    log = read_keylog(d / "keylog.txt")
    nan = (math.nan, math.nan)
    words = []
    for wi, (a, b, text) in enumerate(read_words(d / "words.txt")):
        ks = tuple(TruthKeystroke(f, k, h, wi, nan) for f, k, h in log if a <= f <= b)
        words.append(TruthWord(text, ks))
    keylog = [k for w in words for k in w.keystrokes]
    spans = []
    if (d / "distractors.txt").is_file():
        for line in (d / "distractors.txt").read_text().splitlines():
            if line.strip():
                a, b, kind, hand = line.split()
                spans.append(DistractorSpan(kind, Hand.parse(hand), int(a), int(b), ()))
    bg = d / "background.png"
    background = read_raster(bg) if bg.is_file() else np.zeros(masks[0].shape, np.uint8)
    return GroundTruth(keylog, words, spans, masks, boxes, {h: [] for h in Hand}, {h: [] for h in Hand},
                       background, seq_fps)

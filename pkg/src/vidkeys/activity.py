"""Typing-activity detection: four filters that separate typing from look-alike motion.

Filters run in a fixed order (maximum speed, location, minimum speed,
exclusive hand). Each one sees only the events that survived the filters
before it, and every sliding window is anchored at an event.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

from .detect import KeystrokeEvent
from .displacement import ContourError, FlowContext, FlowError, arm_displacement
from .preprocess import Hand

log = logging.getLogger(__name__)

RAW = "raw"
ACCEPTED = "accepted"
MAX_SPEED = "max-speed"
LOCATION = "location"
MIN_SPEED = "min-speed"
EXCLUSIVE = "exclusive-hand"
FILTER_ORDER = (MAX_SPEED, LOCATION, MIN_SPEED, EXCLUSIVE)
NO_REFERENCE = "no reference window found"

REFERENCE_HEIGHT = 1080


def filtered_by(name: str) -> str:
    return f"filtered-by:{name}"


@dataclass(frozen=True)
class ActivityParams:
    max_rate: float = 10
    min_rate: float = 1
    ref_window_s: float = 2.0
    ref_min_total: int = 4
    ref_min_per_hand: int = 2
    exclusive_window_s: float = 10.0
    exclusive_run: int = 10
    location_threshold: float = 40.0  # pixels at 1080 rows

    def __post_init__(self):
        for name in ("max_rate", "min_rate", "ref_window_s", "ref_min_total", "ref_min_per_hand",
                     "exclusive_window_s", "exclusive_run", "location_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.min_rate < self.max_rate:
            raise ValueError("min_rate must be below max_rate")

    def threshold_px(self, frame_height: int) -> float:
        return self.location_threshold * frame_height / REFERENCE_HEIGHT


def _frames(seconds: float, fps: float) -> float:
    return seconds * fps


@dataclass(frozen=True)
class KeystrokeTimeline:
    """Both hands' events in chronological order with one stage label each."""

    events: tuple[KeystrokeEvent, ...]
    labels: tuple[str, ...]
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if len(self.events) != len(self.labels):
            raise ValueError("one label per event")

    @classmethod
    def from_events(cls, events: Iterable[KeystrokeEvent]) -> "KeystrokeTimeline":
        ev = tuple(sorted(events, key=lambda e: (e.frame_index, e.hand.value)))
        return cls(ev, (RAW,) * len(ev))

    def __len__(self) -> int:
        return len(self.events)

    def live(self) -> list[int]:
        """Positions of events no filter has removed yet."""
        return [i for i, lab in enumerate(self.labels) if lab in (RAW, ACCEPTED)]

    def accepted(self) -> list[KeystrokeEvent]:
        return [e for e, lab in zip(self.events, self.labels) if lab == ACCEPTED]

    def label_of(self, event: KeystrokeEvent) -> str:
        return self.labels[self.events.index(event)]

    def mark(self, positions: Iterable[int], label: str) -> "KeystrokeTimeline":
        labels = list(self.labels)
        for i in positions:
            labels[i] = label
        return replace(self, labels=tuple(labels))

    def finalize(self) -> "KeystrokeTimeline":
        return replace(self, labels=tuple(ACCEPTED if lab == RAW else lab for lab in self.labels))

    def format(self) -> str:
        return "".join(f"{e.hand.value} {e.frame_index} {lab}\n" for e, lab in zip(self.events, self.labels))


def _windows(frames: Sequence[int], span: float) -> list[tuple[int, int]]:
    """(start, stop) positions of the window [frames[i], frames[i] + span) for every i."""
    out = []
    stop = 0
    for i, f in enumerate(frames):
        stop = max(stop, i)
        while stop < len(frames) and frames[stop] < f + span:
            stop += 1
        out.append((i, stop))
    return out


def max_speed_filter(tl: KeystrokeTimeline, fps: float, params: ActivityParams = ActivityParams()
                     ) -> KeystrokeTimeline:
    """Drop every event of a hand that reaches ``max_rate`` events inside one second."""
    live = tl.live()
    hit = set()
    for h in Hand:
        pos = [i for i in live if tl.events[i].hand is h]
        frames = [tl.events[i].frame_index for i in pos]
        for a, b in _windows(frames, _frames(1.0, fps)):
            if b - a >= params.max_rate:
                hit.update(pos[a:b])
    return tl.mark(sorted(hit), filtered_by(MAX_SPEED))


def reference_set(tl: KeystrokeTimeline, fps: float, params: ActivityParams = ActivityParams()) -> list[int]:
    """Positions of live events inside a window dense enough with both hands to count as typing."""
    live = tl.live()
    frames = [tl.events[i].frame_index for i in live]
    ref = set()
    for a, b in _windows(frames, _frames(params.ref_window_s, fps)):
        members = live[a:b]
        if len(members) < params.ref_min_total:
            continue
        counts = {h: sum(1 for i in members if tl.events[i].hand is h) for h in Hand}
        if all(c >= params.ref_min_per_hand for c in counts.values()):
            ref.update(members)
    return sorted(ref)


Distance = Callable[[Hand, int, int], float]


def flow_distance(ctx: FlowContext) -> Distance:
    """Magnitude of the corrected arm displacement between two frames."""
    def dist(hand: Hand, f_from: int, f_to: int) -> float:
        try:
            return arm_displacement(hand, f_from, f_to, ctx).magnitude
        except (ContourError, FlowError) as exc:
            log.info("location filter: %s %d->%d untrackable (%s)", hand.value, f_from, f_to, exc)
            return math.inf
    return dist


def location_filter(tl: KeystrokeTimeline, distance: Distance, fps: float, frame_height: int,
                    params: ActivityParams = ActivityParams()) -> KeystrokeTimeline:
    """Drop events whose arm sits far from its pose at the nearest reference keystroke.

    Untrackable arms count as far away.
    """
    ref = reference_set(tl, fps, params)
    if not ref:
        if tl.live():
            log.warning("location filter skipped: %s", NO_REFERENCE)
        return replace(tl, flags=tl.flags + (NO_REFERENCE,))
    limit = params.threshold_px(frame_height)
    ref_set = set(ref)
    hit = []
    for i in tl.live():
        if i in ref_set:
            continue
        e = tl.events[i]
        same = [tl.events[r].frame_index for r in ref if tl.events[r].hand is e.hand]
        if not same:
            hit.append(i)
            continue
        nearest = min(same, key=lambda f: (abs(f - e.frame_index), f))
        if distance(e.hand, e.frame_index, nearest) > limit:
            hit.append(i)
    return tl.mark(hit, filtered_by(LOCATION))


def min_speed_filter(tl: KeystrokeTimeline, fps: float, params: ActivityParams = ActivityParams()
                     ) -> KeystrokeTimeline:
    """Drop events that no one-second window shows at a combined rate above ``min_rate``."""
    live = tl.live()
    frames = [tl.events[i].frame_index for i in live]
    busy = set()
    for a, b in _windows(frames, _frames(1.0, fps)):
        if b - a > params.min_rate:
            busy.update(range(a, b))
    return tl.mark([live[n] for n in range(len(live)) if n not in busy], filtered_by(MIN_SPEED))


def exclusive_hand_filter(tl: KeystrokeTimeline, fps: float, params: ActivityParams = ActivityParams()
                          ) -> KeystrokeTimeline:
    """Drop runs of ``exclusive_run`` or more consecutive same-hand events within the window."""
    live = tl.live()
    span = _frames(params.exclusive_window_s, fps)
    n = params.exclusive_run
    hit = set()
    start = 0
    while start < len(live):
        stop = start + 1
        hand = tl.events[live[start]].hand
        while stop < len(live) and tl.events[live[stop]].hand is hand:
            stop += 1
        run = live[start:stop]
        for a in range(0, len(run) - n + 1):
            if tl.events[run[a + n - 1]].frame_index - tl.events[run[a]].frame_index < span:
                hit.update(run[a:a + n])
        start = stop
    return tl.mark(sorted(hit), filtered_by(EXCLUSIVE))


def detect_typing(events: Iterable[KeystrokeEvent] | KeystrokeTimeline, distance: Distance | None,
                  fps: float, frame_height: int, params: ActivityParams = ActivityParams()
                  ) -> KeystrokeTimeline:
    """Run the four filters in order; survivors are labeled accepted.

    ``distance`` may be None to skip the location filter (flagged).
    """
    if not fps > 0:
        raise ValueError("fps must be positive")
    tl = events if isinstance(events, KeystrokeTimeline) else KeystrokeTimeline.from_events(events)
    tl = max_speed_filter(tl, fps, params)
    if distance is None:
        tl = replace(tl, flags=tl.flags + ("location filter disabled",))
    else:
        tl = location_filter(tl, distance, fps, frame_height, params)
    tl = min_speed_filter(tl, fps, params)
    tl = exclusive_hand_filter(tl, fps, params)
    return tl.finalize()

"""End-to-end attack: frames to keystrokes, typing activity, word bursts and candidates."""
from __future__ import annotations

from collections import OrderedDict
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .activity import ActivityParams, KeystrokeTimeline, detect_typing, flow_distance
from .detect import DetectionParams, KeystrokeEvent, detect_keystrokes
from .displacement import DisplacementVector, FlowContext, FlowParams, gap_vectors
from .frames import Frame, FrameSequence, gray_array
from .infer import CandidateList, KeyboardLayout, Observation, RankedDictionary, default_layout, predict
from .motion import DssimSeries, dssim_series, ssim_series
from .preprocess import (ArmSegmentSeries, FaceboxProvider, Hand, MaskProvider, build_series,
                         remove_background)


class _LazyFrames(Mapping):
    """Frame-index keyed images computed on demand, with a small LRU cache."""

    def __init__(self, keys: Sequence[int], make: Callable[[int], np.ndarray], size: int = 64):
        self._keys = tuple(keys)
        self._known = set(self._keys)
        self._make = make
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self._size = size

    def __getitem__(self, key: int) -> np.ndarray:
        if key not in self._known:
            raise KeyError(f"no frame {key}")
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        img = self._make(key)
        self._cache[key] = img
        if len(self._cache) > self._size:
            self._cache.popitem(last=False)
        return img

    def __iter__(self) -> Iterator[int]:
        return iter(self._keys)

    def __len__(self) -> int:
        return len(self._keys)


@dataclass(frozen=True)
class PipelineConfig:
    detection: DetectionParams = DetectionParams()
    activity: ActivityParams = ActivityParams()
    flow: FlowParams = FlowParams()
    use_activity: bool = True
    burst_gap_s: float = 1.0
    top_k: int | None = 200

    def __post_init__(self):
        if not self.burst_gap_s > 0:
            raise ValueError("burst_gap_s must be positive")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass
class Analysis:
    fps: float
    height: int
    series: dict[Hand, ArmSegmentSeries]
    dssim: dict[Hand, DssimSeries]
    events: list[KeystrokeEvent]
    timeline: KeystrokeTimeline
    context: FlowContext

    def typing_events(self) -> list[KeystrokeEvent]:
        return self.timeline.accepted()


@dataclass(frozen=True)
class Burst:
    events: tuple[KeystrokeEvent, ...]
    vectors: tuple[DisplacementVector, ...]
    observation: Observation
    candidates: CandidateList = field(default_factory=lambda: CandidateList(()))

    @property
    def start(self) -> int:
        return self.events[0].frame_index

    @property
    def end(self) -> int:
        return self.events[-1].frame_index


def analyze(seq: FrameSequence, masks: MaskProvider, faces: FaceboxProvider,
            config: PipelineConfig = PipelineConfig()) -> Analysis:
    """Segment, detect keystrokes per hand and label typing activity."""
    if len(seq) < 4:
        raise ValueError("need at least 4 frames")
    by_index: dict[int, Frame] = {f.index: f for f in seq}
    indices = [f.index for f in seq]

    def mask(i: int) -> np.ndarray:
        m = np.asarray(masks.mask(by_index[i]), dtype=bool)
        if m.shape != (seq.height, seq.width):
            raise ValueError(f"dimension mismatch between frame {i} and its mask")
        return m

    raw = _LazyFrames(indices, lambda i: gray_array(by_index[i].pixels))
    mask_map = _LazyFrames(indices, mask)
    removed = _LazyFrames(indices, lambda i: remove_background(raw[i], mask_map[i]))

    boxes = [faces.facebox(f) for f in seq]
    left, right = build_series([removed[i] for i in indices], boxes, indices)
    series = {Hand.LEFT: left, Hand.RIGHT: right}
    dssim = {h: dssim_series(ssim_series(s)) for h, s in series.items()}

    # series element i pairs frames at positions (i, i+1) and (i+1, i+2)
    events = []
    for h in Hand:
        for e in detect_keystrokes(dssim[h], seq.fps, config.detection, first_frame=1):
            events.append(KeystrokeEvent(indices[e.frame_index - 1], h, e.peak_value))
    events.sort(key=lambda e: (e.frame_index, e.hand.value))

    ctx = FlowContext(removed, raw, mask_map, series, config.flow)
    if config.use_activity:
        timeline = detect_typing(events, flow_distance(ctx), seq.fps, seq.height, config.activity)
    else:
        timeline = KeystrokeTimeline.from_events(events).finalize()
    return Analysis(seq.fps, seq.height, series, dssim, events, timeline, ctx)


def split_bursts(events: Sequence[KeystrokeEvent], fps: float, gap_s: float = 1.0) -> list[list[KeystrokeEvent]]:
    """Group chronologically ordered events; a pause longer than ``gap_s`` starts a new group."""
    ordered = sorted(events, key=lambda e: (e.frame_index, e.hand.value))
    out: list[list[KeystrokeEvent]] = []
    for e in ordered:
        if out and e.frame_index - out[-1][-1].frame_index <= gap_s * fps:
            out[-1].append(e)
        else:
            out.append([e])
    return out


def infer_words(analysis: Analysis, dictionary: RankedDictionary, layout: KeyboardLayout | None = None,
                config: PipelineConfig = PipelineConfig()) -> list[Burst]:
    """Candidate words for every burst of accepted keystrokes."""
    layout = layout or default_layout()
    bursts = []
    for group in split_bursts(analysis.typing_events(), analysis.fps, config.burst_gap_s):
        vectors = gap_vectors(group, analysis.context)
        obs = Observation.from_events(group, vectors)
        cands = predict(obs, dictionary, layout, config.top_k)
        bursts.append(Burst(tuple(group), tuple(vectors), obs, cands))
    return bursts


def format_bursts(bursts: Sequence[Burst]) -> str:
    """Lines ``burst start end rank word``; a burst without candidates gets rank 0 and word ``-``."""
    lines = []
    for n, b in enumerate(bursts, start=1):
        if len(b.candidates) == 0:
            lines.append(f"{n} {b.start} {b.end} 0 -")
        for r, w in enumerate(b.candidates.candidates, start=1):
            lines.append(f"{n} {b.start} {b.end} {r} {w}")
    return "".join(line + "\n" for line in lines)


def format_vectors(bursts: Sequence[Burst]) -> str:
    return "".join(v.format() + "\n" for b in bursts for v in b.vectors)

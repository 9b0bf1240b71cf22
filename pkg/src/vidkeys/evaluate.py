"""Precision, recall and top-k recovery against synthetic ground truth."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .activity import KeystrokeTimeline
from .infer import CandidateList, RankedDictionary
from .preprocess import Hand

DEFAULT_KS = (1, 5, 10, 25, 50, 100, 200)
NO_DETECTIONS = "no detections"


@dataclass(frozen=True)
class Score:
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    flags: tuple[str, ...] = ()

    def csv_row(self) -> str:
        return f"{self.precision:.6f},{self.recall:.6f},{self.tp},{self.fp},{self.fn},{';'.join(self.flags)}"


def match(events: Sequence[tuple[int, Hand]], truth: Sequence[tuple[int, Hand]],
          tolerance: int = 2) -> list[tuple[int, int]]:
    """Greedy nearest same-hand matching; returns (event_pos, truth_pos) pairs.

    Closest pairs are taken first; ties go to the earlier event, then the
    earlier truth keystroke.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    pairs = []
    for i, (fe, he) in enumerate(events):
        for j, (ft, ht) in enumerate(truth):
            if he is ht and abs(fe - ft) <= tolerance:
                pairs.append((abs(fe - ft), fe, ft, i, j))
    pairs.sort()
    used_e, used_t, out = set(), set(), []
    for _, _, _, i, j in pairs:
        if i in used_e or j in used_t:
            continue
        used_e.add(i)
        used_t.add(j)
        out.append((i, j))
    return sorted(out)


def _as_pairs(items: Iterable) -> list[tuple[int, Hand]]:
    out = []
    for x in items:
        if hasattr(x, "frame_index"):
            out.append((x.frame_index, x.hand))
        elif hasattr(x, "frame"):
            out.append((x.frame, x.hand))
        else:
            out.append((int(x[0]), x[1]))
    return out


def evaluate_detection(events: Iterable, truth: Iterable, tolerance: int = 2) -> Score:
    ev = _as_pairs(events)
    tr = _as_pairs(truth)
    m = match(ev, tr, tolerance)
    tp = len(m)
    fp = len(ev) - tp
    fn = len(tr) - tp
    if not ev:
        return Score(1.0, 0.0 if tr else 1.0, 0, 0, fn, (NO_DETECTIONS,))
    return Score(tp / len(ev), tp / len(tr) if tr else 1.0, tp, fp, fn)


def evaluate_activity(timeline: KeystrokeTimeline | Sequence, spans: Sequence[tuple[int, int]],
                      truth: Iterable, tolerance: int = 2) -> Score:
    """Accepted events inside a typing span (widened by ``tolerance``) are true positives.

    Recall counts truth keystrokes matched by an accepted event.
    """
    accepted = timeline.accepted() if isinstance(timeline, KeystrokeTimeline) else list(timeline)
    ev = _as_pairs(accepted)
    tr = _as_pairs(truth)
    inside = sum(1 for f, _ in ev if any(a - tolerance <= f <= b + tolerance for a, b in spans))
    recall = len(match(ev, tr, tolerance)) / len(tr) if tr else 1.0
    if not ev:
        return Score(1.0, recall, 0, 0, len(tr), (NO_DETECTIONS,))
    return Score(inside / len(ev), recall, inside, len(ev) - inside, len(tr) - len(match(ev, tr, tolerance)))


def evaluate_recovery(predictions: Sequence[CandidateList | None], truth_words: Sequence[str],
                      ks: Sequence[int] = DEFAULT_KS) -> dict[int, float]:
    """recovery(k): share of words whose truth is among the first k candidates."""
    if len(predictions) != len(truth_words):
        raise ValueError("need one prediction per truth word")
    if any(k < 1 for k in ks):
        raise ValueError("k must be >= 1")
    out = {}
    for k in sorted(set(ks)):
        if not truth_words:
            out[k] = math.nan
            continue
        hits = sum(1 for p, w in zip(predictions, truth_words) if p is not None and w in p.top_k(k))
        out[k] = hits / len(truth_words)
    return out


def assign_bursts(bursts: Sequence, spans: Sequence[tuple[int, int]], tolerance: int = 2,
                  frame_map: Sequence[int] | None = None) -> list[int | None]:
    """For each truth span, the position of the burst overlapping it most (None if none does).

    ``frame_map`` translates renumbered frames (e.g. after frame skipping)
    back to original indices: original = frame_map[new - 1].
    """
    def orig(f: int) -> int:
        return frame_map[f - 1] if frame_map is not None else f

    out = []
    for a, b in spans:
        best, best_len = None, 0
        for i, burst in enumerate(bursts):
            s, e = orig(burst.start), orig(burst.end)
            ov = min(e, b + tolerance) - max(s, a - tolerance) + 1
            if ov > best_len:
                best, best_len = i, ov
        out.append(best)
    return out


@dataclass
class EvalReport:
    detection: Score | None = None
    activity: Score | None = None
    recovery: dict[str, dict[int, float]] = field(default_factory=dict)
    mitigation: list[tuple[str, float, float, float]] = field(default_factory=list)  # kind, strength, before, after
    clips: int = 1

    def format(self) -> str:
        parts = [f"[run]\nclips\n{self.clips}\n"]
        head = "precision,recall,tp,fp,fn,flags\n"
        if self.detection is not None:
            parts.append("[detection]\n" + head + self.detection.csv_row() + "\n")
        if self.activity is not None:
            parts.append("[activity]\n" + head + self.activity.csv_row() + "\n")
        if self.recovery:
            rows = "".join(f"{name},{k},{v:.6f}\n" for name, curve in self.recovery.items()
                           for k, v in sorted(curve.items()))
            parts.append("[recovery]\ndictionary,k,recovery\n" + rows)
        if self.mitigation:
            rows = "".join(f"{kind},{s:g},{a:.6f},{b:.6f}\n" for kind, s, a, b in self.mitigation)
            parts.append("[mitigation]\nkind,strength,recovery_before,recovery_after\n" + rows)
        return "\n".join(parts)


def pool_scores(scores: Sequence[Score]) -> Score:
    """Micro-average several scores."""
    tp = sum(s.tp for s in scores)
    fp = sum(s.fp for s in scores)
    fn = sum(s.fn for s in scores)
    flags = tuple(sorted({f for s in scores for f in s.flags}))
    p = tp / (tp + fp) if tp + fp else 1.0
    r = tp / (tp + fn) if tp + fn else 1.0
    return Score(p, r, tp, fp, fn, flags)


def mean_curves(curves: Sequence[Mapping[int, float]]) -> dict[int, float]:
    if not curves:
        return {}
    ks = sorted(curves[0])
    return {k: sum(c[k] for c in curves) / len(curves) for k in ks}


@dataclass
class ClipResult:
    detection: Score
    activity: Score
    recovery: dict[str, dict[int, float]]
    bursts: list
    truth_words: list[str]
    assignment: list[int | None]


def evaluate_clip(frames, truth, dictionaries: Mapping[str, RankedDictionary], layout=None,
                  config=None, ks: Sequence[int] = DEFAULT_KS, frame_map: Sequence[int] | None = None,
                  tolerance: int = 2) -> ClipResult:
    """Run the full attack on a synthetic clip and score it against its ground truth.

    ``frames`` may be a mitigated version of the clip; ``frame_map`` then maps
    its frame numbers back to the original ones (frames dropped by skipping
    simply have no entry).
    """
    from .pipeline import PipelineConfig, analyze, infer_words
    from .preprocess import ArrayMasks, SidecarFaceboxes

    config = config or PipelineConfig()
    fmap = list(frame_map) if frame_map is not None else [f.index for f in frames]
    masks = ArrayMasks({new.index: truth.masks[old - 1] for new, old in zip(frames, fmap)})
    faces = SidecarFaceboxes(boxes={new.index: truth.faceboxes[old - 1] for new, old in zip(frames, fmap)})
    analysis = analyze(frames, masks, faces, config)

    def back(events):
        return [(fmap[e.frame_index - 1], e.hand) for e in events]

    detection = evaluate_detection(back(analysis.events), truth.keylog, tolerance)
    activity = evaluate_activity(back(analysis.typing_events()), truth.typing_spans, truth.keylog, tolerance)
    words = [w.text for w in truth.words]
    recovery = {}
    bursts = []
    assignment: list[int | None] = []
    for name, dictionary in dictionaries.items():
        bursts = infer_words(analysis, dictionary, layout, config)
        assignment = assign_bursts(bursts, truth.typing_spans, tolerance, fmap)
        preds = [bursts[i].candidates if i is not None else None for i in assignment]
        recovery[name] = evaluate_recovery(preds, words, ks)
    return ClipResult(detection, activity, recovery, bursts, words, assignment)

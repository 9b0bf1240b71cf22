"""Keyboard model, template inter-keystroke directions and dictionary-ranked prediction."""
from __future__ import annotations

import os
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .preprocess import Hand

ALL_DIRECTIONS = frozenset({"NE", "NW", "SE", "SW"})
OPPOSITE = {"NE": "SW", "SW": "NE", "NW": "SE", "SE": "NW"}


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class Key:
    label: str
    hand: Hand
    row: int  # 0 = top letter row, larger = nearer the user
    x0: float
    x1: float

    def overlaps(self, other: "Key") -> bool:
        return min(self.x1, other.x1) - max(self.x0, other.x0) > 0

    @property
    def center(self) -> float:
        return (self.x0 + self.x1) / 2


class KeyboardLayout:
    def __init__(self, keys: Iterable[Key]):
        self.keys: dict[str, Key] = {}
        for k in keys:
            if k.label in self.keys:
                raise LayoutError(f"duplicate key {k.label!r}")
            if not k.x1 > k.x0:
                raise LayoutError(f"key {k.label!r} has an empty interval")
            self.keys[k.label] = k
        by_row = defaultdict(list)
        for k in self.keys.values():
            by_row[k.row].append(k)
        for row_keys in by_row.values():
            row_keys.sort(key=lambda k: k.x0)
            for a, b in zip(row_keys, row_keys[1:]):
                if b.x0 < a.x1:
                    raise LayoutError(f"keys {a.label!r} and {b.label!r} overlap within a row")

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "KeyboardLayout":
        return cls.parse(Path(path).read_text())

    @classmethod
    def parse(cls, text: str) -> "KeyboardLayout":
        keys = []
        for n, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise LayoutError(f"line {n}: expected 'label hand row x0 x1'")
            label, hand, row, x0, x1 = parts
            keys.append(Key(label, Hand.parse(hand), int(row), float(x0), float(x1)))
        if not keys:
            raise LayoutError("layout holds no keys")
        return cls(keys)

    def __contains__(self, label: str) -> bool:
        return label in self.keys

    def __getitem__(self, label: str) -> Key:
        try:
            return self.keys[label]
        except KeyError:
            raise LayoutError(f"label {label!r} is not on the keyboard") from None

    def hand_of(self, label: str) -> Hand:
        return self[label].hand

    def labels(self, hand: Hand | None = None) -> list[str]:
        return [k.label for k in self.keys.values() if hand is None or k.hand is hand]

    def hand_pattern(self, text: str) -> str:
        return "".join(self[c].hand.short for c in text)


def _bundled(name: str) -> str:
    return resources.files("vidkeys").joinpath("data", name).read_text()


@lru_cache(maxsize=None)
def default_layout() -> KeyboardLayout:
    return KeyboardLayout.parse(_bundled("layout_letters.txt"))


@lru_cache(maxsize=None)
def extended_layout() -> KeyboardLayout:
    return KeyboardLayout.parse(_bundled("layout_extended.txt"))


def template_directions(layout: KeyboardLayout, key_i: str, key_j: str) -> frozenset[str]:
    """Directions a hand may travel going from ``key_i`` to ``key_j``.

    North points away from the typist (towards lower row numbers).
    """
    a, b = layout[key_i], layout[key_j]
    if a.hand is not b.hand:
        raise LayoutError(f"no template across hands ({key_i!r} -> {key_j!r})")
    if a.label == b.label:
        return ALL_DIRECTIONS
    if a.row == b.row:
        return frozenset({"NE", "SE"}) if b.x0 > a.x0 else frozenset({"NW", "SW"})
    vert = "N" if b.row < a.row else "S"
    if b.overlaps(a):
        return frozenset({vert + "E", vert + "W"})
    return frozenset({vert + ("E" if b.x0 >= a.x1 else "W")})


def template_table(layout: KeyboardLayout) -> dict[tuple[str, str], frozenset[str]]:
    out = {}
    for hand in Hand:
        labels = layout.labels(hand)
        for i in labels:
            for j in labels:
                out[i, j] = template_directions(layout, i, j)
    return out


# -- dictionaries ------------------------------------------------------------

class RankedDictionary:
    """Words in descending frequency; rank 1 is the most frequent."""

    def __init__(self, words: Iterable[str], name: str = ""):
        seen = set()
        ordered = []
        for w in words:
            w = w.strip().lower()
            if not w:
                continue
            if w in seen:
                raise ValueError(f"duplicate dictionary word {w!r}")
            seen.add(w)
            ordered.append(w)
        if not ordered:
            raise ValueError("empty dictionary")
        self.words: tuple[str, ...] = tuple(ordered)
        self.name = name
        self._rank = {w: i + 1 for i, w in enumerate(ordered)}
        self._by_pattern: dict[int, dict[str, list[str]]] = {}

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "RankedDictionary":
        return cls(Path(path).read_text().splitlines(), name=Path(path).name)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._rank

    def rank(self, word: str) -> int:
        return self._rank[word]

    def restricted_to(self, layout: KeyboardLayout) -> "RankedDictionary":
        return RankedDictionary([w for w in self.words if all(c in layout for c in w)], self.name)

    def by_pattern(self, layout: KeyboardLayout) -> dict[str, list[str]]:
        """Words grouped by hand pattern (e.g. ``'LLRL'``), rank order kept; untypeable words skipped."""
        cached = self._by_pattern.get(id(layout))
        if cached is None:
            cached = defaultdict(list)
            for w in self.words:
                if all(c in layout for c in w):
                    cached[layout.hand_pattern(w)].append(w)
            cached = dict(cached)
            self._by_pattern[id(layout)] = cached
        return cached


@lru_cache(maxsize=None)
def bundled_dictionary(size: str = "4k") -> RankedDictionary:
    if size not in ("4k", "65k"):
        raise ValueError("bundled dictionaries: '4k' or '65k'")
    return RankedDictionary(_bundled(f"words_{size}.txt").splitlines(), name=f"words_{size}")


@dataclass(frozen=True)
class CandidateList:
    candidates: tuple[str, ...]
    ranks: tuple[int, ...] = ()

    def top_k(self, k: int) -> tuple[str, ...]:
        if k < 0:
            raise ValueError("k must be non-negative")
        return self.candidates[:k]

    def __len__(self) -> int:
        return len(self.candidates)

    def __contains__(self, word: str) -> bool:
        return word in self.candidates

    def position(self, word: str) -> int | None:
        """1-based position of ``word`` among the candidates."""
        try:
            return self.candidates.index(word) + 1
        except ValueError:
            return None

    def format(self) -> str:
        return "".join(f"{r} {w}\n" for r, w in zip(range(1, len(self) + 1), self.candidates))


# -- observations and matching ----------------------------------------------

@dataclass(frozen=True)
class Observation:
    """What the video yields for one typed string.

    ``hands`` is the chronological hand of every keystroke; ``directions[h]``
    holds one direction set per consecutive pair of that hand's keystrokes.
    """

    hands: tuple[Hand, ...]
    directions: Mapping[Hand, tuple[frozenset[str], ...]] = field(default_factory=dict)

    def __post_init__(self):
        dirs = {}
        for h in Hand:
            n = sum(1 for x in self.hands if x is h)
            got = tuple(self.directions.get(h, ()))
            if not got:
                got = (ALL_DIRECTIONS,) * max(0, n - 1)
            if len(got) != max(0, n - 1):
                raise ValueError(f"{h.value} hand: {n} keystrokes need {max(0, n - 1)} directions, got {len(got)}")
            dirs[h] = tuple(frozenset(d) if d else ALL_DIRECTIONS for d in got)
        object.__setattr__(self, "hands", tuple(self.hands))
        object.__setattr__(self, "directions", dirs)

    def __len__(self) -> int:
        return len(self.hands)

    @property
    def pattern(self) -> str:
        return "".join(h.short for h in self.hands)

    @classmethod
    def from_events(cls, events: Sequence, vectors: Iterable = ()) -> "Observation":
        """Build from keystroke events and per-gap displacement vectors.

        Events need ``hand`` and ``frame_index``; vectors need ``hand``,
        ``start_frame``, ``end_frame`` and ``direction``. Gaps without a vector
        are left unconstrained.
        """
        events = sorted(events, key=lambda e: (e.frame_index, e.hand.value))
        lookup = {(v.hand, v.start_frame, v.end_frame): v.direction for v in vectors}
        dirs = {}
        for h in Hand:
            frames = [e.frame_index for e in events if e.hand is h]
            dirs[h] = tuple(lookup.get((h, a, b), ALL_DIRECTIONS) for a, b in zip(frames, frames[1:]))
        return cls(tuple(e.hand for e in events), dirs)


def observe(left: Sequence, right: Sequence, vectors: Iterable = ()) -> Observation:
    return Observation.from_events([*left, *right], vectors)


def _directions_ok(word: str, obs: Observation, layout: KeyboardLayout) -> bool:
    for h in Hand:
        letters = [c for c in word if layout[c].hand is h]
        for (a, b), seen in zip(zip(letters, letters[1:]), obs.directions[h]):
            if not seen & template_directions(layout, a, b):
                return False
    return True


def match_word(word: str, obs: Observation, layout: KeyboardLayout | None = None) -> bool:
    """Word agrees with the keystroke count, hand order and every same-hand direction."""
    layout = layout or default_layout()
    word = word.lower()
    if len(word) != len(obs) or not all(c in layout for c in word):
        return False
    if layout.hand_pattern(word) != obs.pattern:
        return False
    return _directions_ok(word, obs, layout)


def predict(obs: Observation, dictionary: RankedDictionary, layout: KeyboardLayout | None = None,
            k: int | None = None) -> CandidateList:
    """All dictionary words consistent with ``obs``, most frequent first."""
    layout = layout or default_layout()
    pool = dictionary.by_pattern(layout).get(obs.pattern, [])
    hits = [w for w in pool if _directions_ok(w, obs, layout)]
    if k is not None:
        hits = hits[:k]
    return CandidateList(tuple(hits), tuple(dictionary.rank(w) for w in hits))


def find_known_string(target: str, events: Sequence, vectors: Iterable,
                      layout: KeyboardLayout | None = None) -> list[tuple[int, int]]:
    """Frame ranges of every run of consecutive events that could have typed ``target``."""
    layout = layout or extended_layout()
    target = target.lower()
    for c in target:
        if c not in layout:
            raise LayoutError(f"target contains {c!r}, which is not on the keyboard")
    events = sorted(events, key=lambda e: (e.frame_index, e.hand.value))
    vectors = list(vectors)
    n = len(target)
    if n == 0 or len(events) < n:
        return []
    want = layout.hand_pattern(target)
    found = []
    for s in range(len(events) - n + 1):
        window = events[s:s + n]
        if "".join(e.hand.short for e in window) != want:
            continue
        if match_word(target, Observation.from_events(window, vectors), layout):
            found.append((window[0].frame_index, window[-1].frame_index))
    return found

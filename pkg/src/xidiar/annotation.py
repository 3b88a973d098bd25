"""Timed speaker labelings and interval helpers.

A :class:`TimedLabeling` is the single currency for SAD input, system
hypotheses and references. Times are float seconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .errors import ConfigError

# boundaries closer than this are treated as touching
TIME_EPS = 1e-9


class Turn(NamedTuple):
    onset: float
    duration: float
    label: str

    @property
    def end(self) -> float:
        return self.onset + self.duration


def merge_intervals(intervals: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Union of half-open intervals, returned sorted and non-overlapping.

    Adjacent intervals ([0, 5) and [5, 7)) are merged.
    """
    out: list[list[float]] = []
    for start, end in sorted(intervals):
        if end - start <= 0:
            continue
        if out and start <= out[-1][1] + TIME_EPS:
            out[-1][1] = max(out[-1][1], end)
        else:
            out.append([start, end])
    return [(s, e) for s, e in out]


def intersect_intervals(a: list[tuple[float, float]], b: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Intersection of two sorted, disjoint interval lists."""
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if hi - lo > TIME_EPS:
            out.append((lo, hi))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out


def total_duration(intervals: Iterable[tuple[float, float]]) -> float:
    return math.fsum(e - s for s, e in intervals)


@dataclass
class TimedLabeling:
    uri: str
    turns: list[Turn] = field(default_factory=list)

    def __post_init__(self):
        turns = []
        for t in self.turns:
            t = Turn(float(t[0]), float(t[1]), str(t[2]))
            if not (math.isfinite(t.onset) and math.isfinite(t.duration)):
                raise ConfigError(f"non-finite turn {t} in {self.uri}")
            if t.onset < 0:
                raise ConfigError(f"negative onset in turn {t} of {self.uri}")
            if t.duration <= 0:
                raise ConfigError(f"non-positive duration in turn {t} of {self.uri}")
            turns.append(t)
        self.turns = sorted(turns, key=lambda t: (t.onset, t.duration, t.label))

    def __len__(self):
        return len(self.turns)

    def __iter__(self):
        return iter(self.turns)

    @classmethod
    def from_intervals(cls, uri, intervals, label="speech"):
        return cls(uri, [Turn(s, e - s, label) for s, e in intervals if e - s > 0])

    @property
    def labels(self) -> list[str]:
        return sorted({t.label for t in self.turns})

    def intervals(self, label: str | None = None) -> list[tuple[float, float]]:
        """Merged timeline of one label, or of all turns when ``label`` is None."""
        return merge_intervals(
            (t.onset, t.end) for t in self.turns if label is None or t.label == label
        )

    def speech(self) -> list[tuple[float, float]]:
        """Speech timeline, ignoring turns labeled as non-speech."""
        return merge_intervals(
            (t.onset, t.end) for t in self.turns if not is_nonspeech_label(t.label)
        )

    def relabel(self, mapping: dict[str, str]) -> "TimedLabeling":
        return TimedLabeling(self.uri, [Turn(t.onset, t.duration, mapping.get(t.label, t.label)) for t in self.turns])

    def crop(self, intervals: list[tuple[float, float]]) -> "TimedLabeling":
        """Restrict every turn to the given sorted disjoint intervals."""
        out = []
        for t in self.turns:
            for s, e in intersect_intervals([(t.onset, t.end)], intervals):
                out.append(Turn(s, e - s, t.label))
        return TimedLabeling(self.uri, out)

    @property
    def extent(self) -> tuple[float, float]:
        if not self.turns:
            return (0.0, 0.0)
        return (min(t.onset for t in self.turns), max(t.end for t in self.turns))


_NONSPEECH = {"non-speech", "nonspeech", "non_speech", "sil", "silence", "nsp", "ns", "noise"}


def is_nonspeech_label(label: str) -> bool:
    return label.strip().lower() in _NONSPEECH


def turns_from_frame_labels(uri, regions, frame_labels, names, frame_shift, offset=0.0):
    """Convert per-frame label indices into turns that tile ``regions`` exactly.

    Time ``t`` belongs to frame ``floor((t - offset) / frame_shift)`` clipped to
    the valid range. Consecutive equal labels inside one region merge.
    """
    n = len(frame_labels)
    turns = []
    for start, end in regions:
        if n == 0:
            break
        i0 = min(max(int(math.floor((start - offset) / frame_shift)), 0), n - 1)
        i1 = min(max(int(math.ceil((end - offset) / frame_shift)) - 1, 0), n - 1)
        cur_start = start
        cur = frame_labels[i0]
        for i in range(i0 + 1, i1 + 1):
            if frame_labels[i] != cur:
                b = offset + i * frame_shift
                if b > cur_start:
                    turns.append(Turn(cur_start, b - cur_start, names[cur]))
                    cur_start = b
                cur = frame_labels[i]
        if end > cur_start:
            turns.append(Turn(cur_start, end - cur_start, names[cur]))
    return TimedLabeling(uri, turns)

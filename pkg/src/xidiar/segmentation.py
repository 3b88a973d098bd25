"""Speech-region splitting, change-point cutting and uniform subsegmentation."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .annotation import TIME_EPS, TimedLabeling
from .errors import ConfigError, DiarizationWarning
from .features import FeatureMatrix

# default geometries: (max_len, overlap, min_len)
SD_GEOMETRY = (2.0, 1.0, 0.5)
KALDI_GEOMETRY = (1.5, 0.75, 0.5)
MIN_SEGMENT_DURATION = 0.5
NMS_RADIUS = 0.25


class Segment(NamedTuple):
    onset: float
    duration: float
    parent: int

    @property
    def end(self) -> float:
        return self.onset + self.duration


@dataclass
class SegmentList:
    uri: str
    segments: list[Segment] = field(default_factory=list)
    short_leftovers: list[tuple[float, float]] = field(default_factory=list)

    def __len__(self):
        return len(self.segments)

    def spans(self) -> np.ndarray:
        """(n, 2) array of [onset, end]."""
        if not self.segments:
            return np.zeros((0, 2))
        return np.array([[s.onset, s.end] for s in self.segments])

    def regions(self) -> dict[int, tuple[float, float]]:
        """Extent covered by each parent region (segments and leftovers included)."""
        out: dict[int, tuple[float, float]] = {}
        for s in self.segments:
            lo, hi = out.get(s.parent, (s.onset, s.end))
            out[s.parent] = (min(lo, s.onset), max(hi, s.end))
        return out


@dataclass(frozen=True)
class ChangeScoreTrack:
    scores: np.ndarray
    step: float
    offset: float = 0.0

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).ravel()
        if self.step <= 0:
            raise ConfigError(f"score step must be positive, got {self.step}")
        if scores.size and (np.any(scores < 0) or np.any(scores > 1) or not np.all(np.isfinite(scores))):
            raise ConfigError("change scores must lie in [0, 1]")
        object.__setattr__(self, "scores", scores)

    def __len__(self):
        return len(self.scores)

    def times(self) -> np.ndarray:
        return self.offset + self.step * np.arange(len(self.scores))


def speech_regions(sad: TimedLabeling) -> SegmentList:
    """One segment per maximal speech region of the SAD labeling."""
    regions = sad.speech()
    segs = [Segment(s, e - s, i) for i, (s, e) in enumerate(regions)]
    return SegmentList(sad.uri, segs)


def pick_peaks(scores: np.ndarray, threshold: float, radius_steps: float) -> list[int]:
    """Local maxima strictly above ``threshold`` with non-maximum suppression.

    Stronger peaks win; equal peaks resolve to the earlier index.
    """
    n = len(scores)
    cand = []
    for i in range(n):
        s = scores[i]
        if s <= threshold:
            continue
        if i > 0 and scores[i - 1] > s:
            continue
        if i < n - 1 and scores[i + 1] > s:
            continue
        cand.append(i)
    cand.sort(key=lambda i: (-scores[i], i))
    kept: list[int] = []
    for i in cand:
        if all(abs(i - j) > radius_steps for j in kept):
            kept.append(i)
    return sorted(kept)


def cut_at_changes(
    regions: SegmentList,
    scores: ChangeScoreTrack,
    threshold: float = 0.5,
    min_duration: float = MIN_SEGMENT_DURATION,
    nms_radius: float = NMS_RADIUS,
) -> SegmentList:
    """Split regions at change-score peaks; pieces shorter than ``min_duration`` become leftovers."""
    if not 0 <= threshold <= 1:
        raise ConfigError(f"change threshold must lie in [0, 1], got {threshold}")
    if min_duration <= 0:
        raise ConfigError(f"min_duration must be positive, got {min_duration}")

    times = scores.times()
    peaks = pick_peaks(scores.scores, threshold, nms_radius / scores.step) if len(scores) else []
    peak_times = times[peaks] if peaks else np.zeros(0)
    t_lo = times[0] - scores.step if len(times) else math.inf
    t_hi = times[-1] + scores.step if len(times) else -math.inf

    out = SegmentList(regions.uri, short_leftovers=list(regions.short_leftovers))
    for seg in regions.segments:
        if seg.end <= t_lo or seg.onset >= t_hi:
            warnings.warn(
                f"{regions.uri}: change scores do not cover region [{seg.onset:.3f}, {seg.end:.3f}); left uncut",
                DiarizationWarning,
                stacklevel=2,
            )
            cuts = []
        else:
            cuts = [float(t) for t in peak_times if seg.onset + TIME_EPS < t < seg.end - TIME_EPS]
        bounds = [seg.onset, *cuts, seg.end]
        for a, b in zip(bounds[:-1], bounds[1:]):
            if b - a >= min_duration - TIME_EPS:
                out.segments.append(Segment(a, b - a, seg.parent))
            else:
                out.short_leftovers.append((a, b - a))
    return out


def fallback_change_scores(features: FeatureMatrix, window: float = 1.0, scale: float = 1.0) -> ChangeScoreTrack:
    """Change scores from the symmetric KL divergence of adjacent diagonal-Gaussian windows.

    The score at frame boundary ``t`` compares frames ``[t-w, t)`` and
    ``[t, t+w)``. The per-dimension divergence ``d`` is mapped to
    ``d / (d + scale)`` so scores lie in [0, 1). The first score sits at the
    boundary time of frame ``w``.
    """
    w = max(int(round(window / features.frame_shift)), 2)
    x = features.frames
    n = x.shape[0]
    if n < 2 * w:
        return ChangeScoreTrack(np.zeros(0), features.frame_shift, 0.0)

    csum = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x, axis=0)])
    csq = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x * x, axis=0)])
    t = np.arange(w, n - w + 1)
    mu_l = (csum[t] - csum[t - w]) / w
    mu_r = (csum[t + w] - csum[t]) / w
    var_l = (csq[t] - csq[t - w]) / w - mu_l**2
    var_r = (csq[t + w] - csq[t]) / w - mu_r**2

    # floor relative to the conversation's own spread; constant dims give 0
    spread = x.var(axis=0)
    floor = np.maximum(spread * 1e-3, 1e-8)
    var_l = np.maximum(var_l, floor)
    var_r = np.maximum(var_r, floor)
    diff2 = (mu_l - mu_r) ** 2
    div = 0.5 * (var_l / var_r + var_r / var_l - 2.0 + diff2 * (1.0 / var_l + 1.0 / var_r))
    # small-sample bias of the statistic under a stationary input
    bias = 2.0 / w
    d = np.maximum(div - bias, 0.0).mean(axis=1)
    scores = d / (d + scale)
    return ChangeScoreTrack(scores, features.frame_shift, w * features.frame_shift)


def validate_geometry(max_len: float, overlap: float, min_len: float):
    if not (max_len > 0 and 0 <= overlap < max_len and 0 < min_len <= max_len):
        raise ConfigError(
            f"invalid subsegment geometry max_len={max_len}, overlap={overlap}, min_len={min_len}"
        )


def uniform_subsegment(segments: SegmentList, max_len: float, overlap: float, min_len: float) -> SegmentList:
    """Split long segments into ``max_len`` windows that advance by ``max_len - overlap``.

    The last window ends at the segment end. If the remaining tail would be
    shorter than ``min_len`` it is replaced by a full-length window shifted
    left to end at the segment end.
    """
    validate_geometry(max_len, overlap, min_len)
    hop = max_len - overlap
    out = SegmentList(segments.uri, short_leftovers=list(segments.short_leftovers))
    for seg in segments.segments:
        if seg.duration <= max_len + TIME_EPS:
            out.segments.append(seg)
            continue
        end = seg.end
        i = 0
        while True:
            start = seg.onset + i * hop
            if start + max_len < end - TIME_EPS:
                out.segments.append(Segment(start, max_len, seg.parent))
                i += 1
                continue
            if end - start >= min_len - TIME_EPS:
                out.segments.append(Segment(start, end - start, seg.parent))
            else:
                out.segments.append(Segment(end - max_len, max_len, seg.parent))
            break
    return out


def segment_conversation(
    sad: TimedLabeling,
    scores: ChangeScoreTrack | None,
    threshold: float = 0.5,
    min_duration: float = MIN_SEGMENT_DURATION,
    geometry: tuple[float, float, float] = SD_GEOMETRY,
) -> SegmentList:
    """Region split, change cutting and subsegmentation in one call."""
    regions = speech_regions(sad)
    if scores is not None:
        cut = cut_at_changes(regions, scores, threshold, min_duration)
    else:
        cut = _min_duration_only(regions, min_duration)
    return uniform_subsegment(cut, *geometry)


def kaldi_segments(sad: TimedLabeling, geometry: tuple[float, float, float] = KALDI_GEOMETRY) -> SegmentList:
    """Uniform subsegments of SAD regions without change-point cutting."""
    regions = _min_duration_only(speech_regions(sad), geometry[2])
    return uniform_subsegment(regions, *geometry)


def _min_duration_only(regions: SegmentList, min_duration: float) -> SegmentList:
    out = SegmentList(regions.uri, short_leftovers=list(regions.short_leftovers))
    for seg in regions.segments:
        if seg.duration >= min_duration - TIME_EPS:
            out.segments.append(seg)
        else:
            out.short_leftovers.append((seg.onset, seg.duration))
    return out

"""DER, JER, coverage and purity with exact interval arithmetic.

Scoring uses no collar and includes overlapped speech: each reference
speaker active in a region counts separately in the denominator.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .annotation import TimedLabeling, intersect_intervals, merge_intervals, total_duration
from .errors import ScoringError, DiarizationWarning


@dataclass
class FileScore:
    uri: str
    total: float  # reference speaker time, with overlap multiplicity
    miss_time: float
    falarm_time: float
    spkerr_time: float
    jer: float
    mapping: dict[str, str] = field(default_factory=dict)
    coverage: float | None = None
    purity: float | None = None

    def _pct(self, x):
        return 100.0 * x / self.total

    @property
    def miss(self) -> float:
        return self._pct(self.miss_time)

    @property
    def falarm(self) -> float:
        return self._pct(self.falarm_time)

    @property
    def spkerr(self) -> float:
        return self._pct(self.spkerr_time)

    @property
    def der(self) -> float:
        return self._pct(self.miss_time + self.falarm_time + self.spkerr_time)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(der=self.der, miss=self.miss, falarm=self.falarm, spkerr=self.spkerr)
        return d


@dataclass
class ScoreReport:
    files: list[FileScore]

    @property
    def pooled(self) -> dict:
        """Time-weighted totals over all files."""
        total = math.fsum(f.total for f in self.files)
        miss = math.fsum(f.miss_time for f in self.files)
        fa = math.fsum(f.falarm_time for f in self.files)
        err = math.fsum(f.spkerr_time for f in self.files)
        return {
            "der": 100.0 * (miss + fa + err) / total,
            "miss": 100.0 * miss / total,
            "falarm": 100.0 * fa / total,
            "spkerr": 100.0 * err / total,
            "jer": float(np.mean([f.jer for f in self.files])),
            "total": total,
        }

    @property
    def file_average(self) -> dict:
        """Unweighted mean of per-file percentages."""
        keys = ("der", "miss", "falarm", "spkerr", "jer")
        return {k: float(np.mean([getattr(f, k) for f in self.files])) for k in keys}

    def to_dict(self) -> dict:
        return {
            "files": [f.as_dict() for f in self.files],
            "pooled": self.pooled,
            "file_average": self.file_average,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        head = f"{'uri':<24}{'DER':>8}{'MISS':>8}{'FA':>8}{'SPKERR':>8}{'JER':>8}{'COV':>7}{'PUR':>7}"
        lines = [head, "-" * len(head)]

        def opt(x):
            return f"{x:7.3f}" if x is not None else f"{'-':>7}"

        for f in self.files:
            lines.append(
                f"{f.uri:<24}{f.der:8.2f}{f.miss:8.2f}{f.falarm:8.2f}{f.spkerr:8.2f}{f.jer:8.2f}"
                f"{opt(f.coverage)}{opt(f.purity)}"
            )
        lines.append("-" * len(head))
        for name, agg in (("*** pooled ***", self.pooled), ("*** file mean ***", self.file_average)):
            lines.append(
                f"{name:<24}{agg['der']:8.2f}{agg['miss']:8.2f}{agg['falarm']:8.2f}{agg['spkerr']:8.2f}{agg['jer']:8.2f}"
            )
        return "\n".join(lines) + "\n"


def elementary_segments(ref: TimedLabeling, hyp: TimedLabeling):
    """Sweep all boundaries; yield (duration, ref speakers, hyp speakers) per piece with activity."""
    events = []
    for side, lab in ((0, ref), (1, hyp)):
        for t in lab.turns:
            events.append((t.onset, 1, side, t.label))
            events.append((t.end, -1, side, t.label))
    events.sort(key=lambda e: e[0])
    active = ({}, {})
    out = []
    prev = None
    i = 0
    while i < len(events):
        t = events[i][0]
        if prev is not None and t > prev:
            r = frozenset(k for k, v in active[0].items() if v > 0)
            h = frozenset(k for k, v in active[1].items() if v > 0)
            if r or h:
                out.append((t - prev, r, h))
        while i < len(events) and events[i][0] == t:
            _, delta, side, label = events[i]
            active[side][label] = active[side].get(label, 0) + delta
            i += 1
        prev = t
    return out


def _restrict(lab: TimedLabeling, uem):
    if uem is None:
        return lab
    return lab.crop(merge_intervals(uem))


def optimal_mapping(ref: TimedLabeling, hyp: TimedLabeling, pieces=None) -> tuple[dict[str, str], dict]:
    """One-to-one reference-to-hypothesis mapping maximizing total overlap time."""
    pieces = elementary_segments(ref, hyp) if pieces is None else pieces
    rs, hs = ref.labels, hyp.labels
    overlap = np.zeros((len(rs), len(hs)))
    ri = {s: i for i, s in enumerate(rs)}
    hi = {s: i for i, s in enumerate(hs)}
    for d, r, h in pieces:
        for a in r:
            for b in h:
                overlap[ri[a], hi[b]] += d
    mapping = {}
    if overlap.size:
        rows, cols = linear_sum_assignment(overlap, maximize=True)
        for a, b in zip(rows, cols):
            if overlap[a, b] > 0:
                mapping[rs[a]] = hs[b]
    cells = {(rs[a], hs[b]): overlap[a, b] for a in range(len(rs)) for b in range(len(hs))}
    return mapping, cells


def der(ref: TimedLabeling, hyp: TimedLabeling, uem=None) -> FileScore:
    """Score one file. ``uem`` is an optional list of (onset, end) scoring regions."""
    if ref.uri != hyp.uri and hyp.turns:
        raise ScoringError(f"uri mismatch: reference {ref.uri!r} vs hypothesis {hyp.uri!r}")
    ref = _restrict(ref, uem)
    hyp = _restrict(hyp, uem)
    pieces = elementary_segments(ref, hyp)
    total = math.fsum(d * len(r) for d, r, _ in pieces)
    if total <= 0:
        raise ScoringError(f"{ref.uri}: no reference speech; DER undefined")
    mapping, cells = optimal_mapping(ref, hyp, pieces)
    miss = fa = err = 0.0
    for d, r, h in pieces:
        nr, nh = len(r), len(h)
        correct = sum(1 for a in r if mapping.get(a) in h)
        miss += d * max(nr - nh, 0)
        fa += d * max(nh - nr, 0)
        err += d * (min(nr, nh) - correct)
    return FileScore(ref.uri, total, miss, fa, err, _jer(ref, hyp, mapping, cells), mapping)


def _jer(ref, hyp, mapping, cells) -> float:
    speakers = ref.labels
    if not speakers:
        raise ScoringError(f"{ref.uri}: no reference speakers; JER undefined")
    rdur = {s: total_duration(ref.intervals(s)) for s in speakers}
    hdur = {s: total_duration(hyp.intervals(s)) for s in hyp.labels}
    errs = []
    for s in speakers:
        h = mapping.get(s)
        if h is None:
            errs.append(1.0)
            continue
        inter = cells[(s, h)]
        union = rdur[s] + hdur[h] - inter
        # piecewise sums can overshoot the union by an ulp
        errs.append(min(max(1.0 - inter / union, 0.0), 1.0))
    return 100.0 * float(np.mean(errs))


def jer(ref: TimedLabeling, hyp: TimedLabeling, uem=None) -> float:
    return der(ref, hyp, uem).jer


def coverage_purity(ref: TimedLabeling, segments) -> tuple[float, float]:
    """Segmentation coverage and purity against reference speaker turns.

    ``segments`` is any iterable of (onset, duration, ...) tuples, e.g. a
    ``SegmentList.segments`` or ``TimedLabeling.turns``.
    """
    segs = [(float(s[0]), float(s[0]) + float(s[1])) for s in segments]
    if not segs:
        warnings.warn("no segments: coverage 0, purity 1 by convention", DiarizationWarning, stacklevel=2)
        return 0.0, 1.0
    speakers = {s: ref.intervals(s) for s in ref.labels}
    if not speakers:
        raise ScoringError("reference has no speaker turns")

    pur_num = 0.0
    for a, b in segs:
        pur_num += max(total_duration(intersect_intervals([(a, b)], iv)) for iv in speakers.values())
    purity = pur_num / math.fsum(b - a for a, b in segs)

    cov_num = cov_den = 0.0
    for iv in speakers.values():
        for a, b in iv:
            cov_num += max(max(0.0, min(b, e) - max(a, s)) for s, e in segs)
            cov_den += b - a
    return cov_num / cov_den, purity


def score_files(refs: dict[str, TimedLabeling], hyps: dict[str, TimedLabeling], uems: dict | None = None) -> ScoreReport:
    files = []
    for uri in sorted(refs):
        hyp = hyps.get(uri, TimedLabeling(uri, []))
        files.append(der(refs[uri], hyp, (uems or {}).get(uri)))
    if not files:
        raise ScoringError("no reference files to score")
    return ScoreReport(files)

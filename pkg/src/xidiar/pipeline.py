"""End-to-end runs: the SD engine, the Kaldi-style engine and late combination."""
from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Protocol

import numpy as np

from .annotation import TimedLabeling, Turn, intersect_intervals
from .clustering import ahc, cosine_distance_matrix, k_medoids
from .domain import (
    SINGLE_SPEAKER,
    UNKNOWN,
    ClusteringMethod,
    DomainDecision,
    DomainProfile,
    Engine,
    MlpModel,
    ProfileRegistry,
    classify_domain,
    default_registry,
    profile_for,
)
from .embeddings import (
    EmbeddingSet,
    WhitenModel,
    WhitenStrategy,
    apply_pca,
    apply_whiten,
    fit_conversation_pca,
    fit_whiten,
    fuse_xi,
)
from .errors import AlignmentError, ConfigError, DiarizationError, DiarizationWarning
from .features import FeatureMatrix
from .plda import PldaModel, fit_plda, plda_distance_matrix
from .resegmentation import resegment
from .segmentation import (
    KALDI_GEOMETRY,
    MIN_SEGMENT_DURATION,
    SD_GEOMETRY,
    ChangeScoreTrack,
    SegmentList,
    fallback_change_scores,
    kaldi_segments,
    segment_conversation,
)

log = logging.getLogger(__name__)

# domains routed to the Kaldi-style engine by late combination
KALDI_DOMAINS = frozenset({UNKNOWN, "SEEDLingS", "VAST"})


class EmbeddingSource(Protocol):
    def embed(self, segments: SegmentList, engine: str) -> tuple[EmbeddingSet, EmbeddingSet]:
        """Return (i-vectors, x-vectors) aligned with ``segments``."""


@dataclass
class Conversation:
    uri: str
    sad: TimedLabeling
    embedder: EmbeddingSource
    features: FeatureMatrix | None = None
    change_scores: ChangeScoreTrack | None = None
    domain_vector: np.ndarray | None = None
    reference: TimedLabeling | None = None


@dataclass
class Models:
    whiten_sd: WhitenModel
    whiten_kaldi: WhitenModel
    plda_sd: PldaModel | None = None
    plda_kaldi: PldaModel | None = None
    stage1: MlpModel | None = None
    stage2: MlpModel | None = None
    registry: ProfileRegistry = field(default_factory=default_registry)


def build_models(
    dev_ivecs: EmbeddingSet,
    dev_xvecs: EmbeddingSet,
    dev_labels=None,
    stage1: MlpModel | None = None,
    stage2: MlpModel | None = None,
    registry: ProfileRegistry | None = None,
    plda_iter: int = 10,
) -> Models:
    """Fit both whitening transforms (and PLDA models when dev labels exist) on dev xi-vectors."""
    dev = fuse_xi(dev_ivecs, dev_xvecs)
    whiten_sd = fit_whiten(dev, WhitenStrategy.GLOBAL_MEAN)
    whiten_kaldi = fit_whiten(dev, WhitenStrategy.BLOCK_CONCAT)
    plda_sd = plda_kaldi = None
    if dev_labels is not None:
        plda_sd = fit_plda(apply_whiten(dev, whiten_sd).vectors, dev_labels, n_iter=plda_iter)
        plda_kaldi = fit_plda(apply_whiten(dev, whiten_kaldi).vectors, dev_labels, n_iter=plda_iter)
    return Models(whiten_sd, whiten_kaldi, plda_sd, plda_kaldi, stage1, stage2, registry or default_registry())


@dataclass(frozen=True)
class RunConfig:
    corpus_dir: str | None = None
    models_dir: str | None = None
    output_dir: str | None = None
    profiles: str | None = None
    engine: str = "combine"  # combine | sd | kaldi
    profile: str | None = None  # domain override, skips the classifier
    ahc_threshold: float | None = None  # overrides the profile's AHC threshold
    kaldi_threshold: float = 0.0  # on -PLDA LLR
    sd_geometry: tuple[float, float, float] = SD_GEOMETRY
    kaldi_geometry: tuple[float, float, float] = KALDI_GEOMETRY
    min_duration: float = MIN_SEGMENT_DURATION
    scd_window: float = 1.0
    engine_table: dict | None = None  # label -> "SD" | "KALDI"
    seed: int = 0
    workers: int = 1
    uris: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.engine not in ("combine", "sd", "kaldi"):
            raise ConfigError(f"engine must be combine, sd or kaldi, got {self.engine!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        object.__setattr__(self, "sd_geometry", tuple(float(x) for x in self.sd_geometry))
        object.__setattr__(self, "kaldi_geometry", tuple(float(x) for x in self.kaldi_geometry))
        if self.uris is not None:
            object.__setattr__(self, "uris", tuple(self.uris))
        if self.engine_table is not None:
            for k, v in self.engine_table.items():
                Engine(v)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(obj)

    def validate_paths(self):
        for name in ("corpus_dir", "models_dir", "profiles"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{name} {p} does not exist")


@dataclass
class EngineResult:
    uri: str
    engine: Engine
    hypothesis: TimedLabeling
    diagnostics: dict = field(default_factory=dict)


def _speaker_names(k: int) -> list[str]:
    return [f"spk{c:02d}" for c in range(k)]


def labels_to_turns(segments: SegmentList, labels, names: list[str]) -> TimedLabeling:
    """Resolve overlapping labeled windows into turns.

    Where windows overlap, each instant goes to the covering window whose
    center is nearest (earlier window on ties). Adjacent equal labels merge.
    """
    segs = segments.segments
    edges = sorted({x for s in segs for x in (s.onset, s.end)}
                   | {0.5 * (a.onset + a.end + b.onset + b.end) / 2 for a in segs for b in segs
                      if a.parent == b.parent and a.onset < b.end and b.onset < a.end and a is not b})
    pieces: list[list] = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        cover = [i for i, s in enumerate(segs) if s.onset <= mid < s.end]
        if not cover:
            continue
        best = min(cover, key=lambda i: (abs(segs[i].onset + 0.5 * segs[i].duration - mid), segs[i].onset, i))
        lab = names[int(labels[best])]
        if pieces and pieces[-1][2] == lab and abs(pieces[-1][1] - lo) < 1e-9:
            pieces[-1][1] = hi
        else:
            pieces.append([lo, hi, lab])
    return TimedLabeling(segments.uri, [Turn(s, e - s, lab) for s, e, lab in pieces])


def fill_uncovered(hyp: TimedLabeling, sad: TimedLabeling) -> TimedLabeling:
    """Give every uncovered piece of SAD speech the label of the nearest hypothesis turn."""
    speech = sad.speech()
    covered = hyp.intervals()
    gaps = []
    for s, e in speech:
        cursor = s
        for cs, ce in intersect_intervals([(s, e)], covered):
            if cs > cursor:
                gaps.append((cursor, cs))
            cursor = max(cursor, ce)
        if e > cursor:
            gaps.append((cursor, e))
    if not gaps:
        return hyp
    if not hyp.turns:
        return TimedLabeling(sad.uri, [Turn(s, e - s, _speaker_names(1)[0]) for s, e in gaps])
    extra = []
    for s, e in gaps:
        def dist(t):
            return max(t.onset - e, s - t.end, 0.0)

        nearest = min(hyp.turns, key=lambda t: (dist(t), t.onset))
        extra.append(Turn(s, e - s, nearest.label))
    return TimedLabeling(hyp.uri, list(hyp.turns) + extra)


def single_speaker_result(conv: Conversation, engine: Engine, reason: str) -> EngineResult:
    hyp = TimedLabeling.from_intervals(conv.uri, conv.sad.speech(), label=_speaker_names(1)[0])
    return EngineResult(conv.uri, engine, hyp, {"clusters": 1 if hyp.turns else 0, "route": reason})


def _embed(conv: Conversation, segs: SegmentList, engine: str) -> EmbeddingSet:
    ivecs, xvecs = conv.embedder.embed(segs, engine)
    xi = fuse_xi(ivecs, xvecs)
    if len(xi) != len(segs):
        raise AlignmentError(f"{conv.uri}: {len(xi)} embeddings for {len(segs)} {engine} subsegments", stage="embeddings")
    return xi


def run_sd(conv: Conversation, models: Models, profile: DomainProfile, config: RunConfig | None = None) -> EngineResult:
    """Segmentation, xi-vectors, per-profile clustering, GMM resegmentation."""
    config = config or RunConfig()
    if profile.clustering is ClusteringMethod.NONE:
        return single_speaker_result(conv, Engine.SD, "single-speaker")

    scores = conv.change_scores
    if scores is None and conv.features is not None:
        scores = fallback_change_scores(conv.features, config.scd_window)
    try:
        segs = segment_conversation(conv.sad, scores, profile.change_threshold, config.min_duration, config.sd_geometry)
    except DiarizationError as exc:
        exc.stage = exc.stage or "segmentation"
        raise
    diag = {"profile": profile.name, "subsegments": len(segs), "leftovers": len(segs.short_leftovers)}
    if len(segs) == 0:
        res = single_speaker_result(conv, Engine.SD, "no-segments")
        res.diagnostics.update(diag)
        return res

    xi = apply_whiten(_embed(conv, segs, "sd"), models.whiten_sd)
    if profile.clustering is ClusteringMethod.AHC:
        if profile.pca_dim is not None:
            xi = apply_pca(xi, fit_conversation_pca(xi, profile.pca_dim))
        threshold = config.ahc_threshold if config.ahc_threshold is not None else profile.ahc_threshold
        assign = ahc(cosine_distance_matrix(xi.vectors), threshold, profile.k_min, profile.k_max)
        diag["threshold"] = threshold
    else:
        if models.plda_sd is None:
            raise ConfigError("k-medoids profiles need a PLDA model", stage="clustering")
        k = profile.k
        if k > len(xi):
            warnings.warn(f"{conv.uri}: k={k} > {len(xi)} subsegments; clamped", DiarizationWarning, stacklevel=2)
            k = len(xi)
        assign = k_medoids(plda_distance_matrix(models.plda_sd, xi.vectors), k)
    diag["clusters"] = assign.k

    hyp = labels_to_turns(segs, assign.labels, _speaker_names(assign.k))
    if conv.features is not None:
        hyp = resegment(conv.features, hyp, conv.sad, seed=config.seed)
        diag["resegmented"] = True
    else:
        hyp = fill_uncovered(hyp, conv.sad)
        diag["resegmented"] = False
    return EngineResult(conv.uri, Engine.SD, hyp, diag)


def run_kaldi_style(conv: Conversation, models: Models, config: RunConfig | None = None) -> EngineResult:
    """Uniform subsegments, block-wise whitening, PLDA-scored AHC with one global threshold."""
    config = config or RunConfig()
    segs = kaldi_segments(conv.sad, config.kaldi_geometry)
    diag = {"subsegments": len(segs), "threshold": config.kaldi_threshold}
    if len(segs) == 0:
        if not conv.sad.speech():
            return EngineResult(conv.uri, Engine.KALDI, TimedLabeling(conv.uri, []), {**diag, "clusters": 0})
        res = single_speaker_result(conv, Engine.KALDI, "no-segments")
        res.diagnostics.update(diag)
        return res
    if models.plda_kaldi is None:
        raise ConfigError("the Kaldi-style engine needs a PLDA model", stage="clustering")
    xi = apply_whiten(_embed(conv, segs, "kaldi"), models.whiten_kaldi)
    dist = plda_distance_matrix(models.plda_kaldi, xi.vectors, shift=False)
    assign = ahc(dist, config.kaldi_threshold, 1, len(xi))
    diag["clusters"] = assign.k
    hyp = labels_to_turns(segs, assign.labels, _speaker_names(assign.k))
    return EngineResult(conv.uri, Engine.KALDI, fill_uncovered(hyp, conv.sad), diag)


def choose_engine(label: str, registry: ProfileRegistry | None = None, table: dict | None = None) -> Engine:
    if table and label in table:
        return Engine(table[label])
    if registry is not None:
        try:
            return profile_for(label, registry).engine
        except ConfigError:
            pass
    return Engine.KALDI if label in KALDI_DOMAINS else Engine.SD


def combine(decision: DomainDecision, sd: EngineResult | None, kaldi: EngineResult | None,
            registry: ProfileRegistry | None = None, table: dict | None = None) -> EngineResult:
    """Late combination: pick one engine's whole hypothesis per conversation."""
    engine = choose_engine(decision.label, registry, table)
    chosen = kaldi if engine is Engine.KALDI else sd
    if chosen is None:
        raise ConfigError(f"combination chose {engine.value} but that result is missing", stage="combine")
    return EngineResult(chosen.uri, chosen.engine, chosen.hypothesis, {**chosen.diagnostics, "domain": decision.label})


def conversation_vector(conv: Conversation, models: Models, config: RunConfig) -> tuple[np.ndarray, bool]:
    """The classifier input: ingested vector, else mean whitened xi-vector (flagged as fallback)."""
    if conv.domain_vector is not None:
        return np.asarray(conv.domain_vector, dtype=np.float64).ravel(), False
    segs = kaldi_segments(conv.sad, config.kaldi_geometry)
    xi = apply_whiten(_embed(conv, segs, "kaldi"), models.whiten_sd)
    return xi.vectors.mean(axis=0), True


def decide_domain(conv: Conversation, models: Models, config: RunConfig) -> tuple[DomainDecision, str]:
    if config.profile is not None:
        return DomainDecision(math.nan, None, config.profile), "override"
    if models.stage1 is None or models.stage2 is None:
        return DomainDecision(math.nan, None, UNKNOWN), "no-classifier"
    x, fallback = conversation_vector(conv, models, config)
    return classify_domain(models.stage1, models.stage2, x), "fallback-vector" if fallback else "classifier"


@dataclass
class ConversationResult:
    uri: str
    decision: DomainDecision
    domain_source: str
    final: EngineResult
    sd: EngineResult | None = None
    kaldi: EngineResult | None = None

    def summary(self) -> dict:
        d = self.decision
        return {
            "domain": d.label,
            "domain_source": self.domain_source,
            "stage1_prob": None if math.isnan(d.stage1_prob) else d.stage1_prob,
            "stage2_posteriors": d.stage2_posteriors,
            "engine": self.final.engine.value,
            "sd": self.sd.diagnostics if self.sd else None,
            "kaldi": self.kaldi.diagnostics if self.kaldi else None,
            "turns": len(self.final.hypothesis),
        }


def run_conversation(conv: Conversation, models: Models, config: RunConfig) -> ConversationResult:
    decision, source = decide_domain(conv, models, config)
    profile = profile_for(decision.label, models.registry)
    sd = kaldi = None
    if config.engine in ("combine", "sd"):
        sd = run_sd(conv, models, profile, config)
    if config.engine in ("combine", "kaldi"):
        # single-speaker conversations never need the Kaldi-style run
        if decision.label == SINGLE_SPEAKER:
            kaldi = single_speaker_result(conv, Engine.KALDI, "single-speaker")
        else:
            kaldi = run_kaldi_style(conv, models, config)
    if config.engine == "combine":
        final = combine(decision, sd, kaldi, models.registry, config.engine_table)
    else:
        final = sd or kaldi
    _check_within_sad(final.hypothesis, conv.sad)
    return ConversationResult(conv.uri, decision, source, final, sd, kaldi)


def _check_within_sad(hyp: TimedLabeling, sad: TimedLabeling):
    speech = sad.speech()
    for t in hyp.turns:
        inside = sum(e - s for s, e in intersect_intervals([(t.onset, t.end)], speech))
        if t.duration - inside > 1e-6:
            raise DiarizationError(f"{hyp.uri}: turn {t} leaves SAD speech", stage="pipeline")


def _run_one(args):
    conv, models, config = args
    return run_conversation(conv, models, config)


def run_corpus(conversations: list[Conversation], models: Models, config: RunConfig) -> list[ConversationResult]:
    """Process conversations (in a worker pool when ``config.workers > 1``), results sorted by uri."""
    convs = sorted(conversations, key=lambda c: c.uri)
    jobs = [(c, models, config) for c in convs]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    return results


def write_outputs(results: list[ConversationResult], output_dir, references: dict | None = None, uems: dict | None = None):
    """Single writer for the whole output tree; contents depend only on the results."""
    from .formats import format_rttm, parse_rttm
    from .scoring import score_files

    out = Path(output_dir)
    for sub in ("rttm", "sd", "kaldi"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    summary = {}
    for r in sorted(results, key=lambda r: r.uri):
        (out / "rttm" / f"{r.uri}.rttm").write_text(format_rttm(r.final.hypothesis))
        if r.sd is not None:
            (out / "sd" / f"{r.uri}.rttm").write_text(format_rttm(r.sd.hypothesis))
        if r.kaldi is not None:
            (out / "kaldi" / f"{r.uri}.rttm").write_text(format_rttm(r.kaldi.hypothesis))
        summary[r.uri] = r.summary()
    all_text = "".join(format_rttm(r.final.hypothesis) for r in sorted(results, key=lambda r: r.uri))
    (out / "all.rttm").write_text(all_text)
    (out / "diagnostics.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if references:
        # score what was written, so rescoring all.rttm reproduces the numbers
        written = parse_rttm(all_text)
        hyps = {r.uri: written.get(r.uri, TimedLabeling(r.uri, [])) for r in results}
        refs = {u: references[u] for u in hyps if u in references}
        if refs:
            report = score_files(refs, hyps, uems)
            (out / "scores.txt").write_text(report.to_table())
            (out / "scores.json").write_text(report.to_json())
    return out

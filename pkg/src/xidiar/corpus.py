"""On-disk corpora and model directories.

Corpus directory, per conversation ``<uri>``::

    <uri>.sad.rttm | <uri>.sad.lab      speech activity (required)
    <uri>.feats | <uri>.wav             frame features or audio (optional)
    <uri>.scd                           change-score track (optional)
    <uri>.<engine>.ivec / .xvec         embeddings per subsegment, engine in {sd, kaldi}
    <uri>.<engine>.segments             subsegment spans the embeddings belong to
    <uri>.domain                        conversation vector for the domain classifier
    <uri>.ref.rttm                      reference, enables scoring
    <uri>.uem                           scoring regions

Models directory::

    dev.ivec, dev.xvec, dev.labels      labeled development embeddings
    stage1.mlp, stage2.mlp              domain classifier weights (optional)
    profiles.json                       profile registry (optional)
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .annotation import TimedLabeling
from .domain import DEV_DOMAINS, Activation, Layer, MlpModel, ProfileRegistry, default_registry
from .embeddings import EmbeddingKind, EmbeddingSet
from .errors import AlignmentError, ConfigError
from .features import FeatureKind, FeatureMatrix, LfccConfig, apply_cmn, extract_lfcc, read_wav
from .formats import (
    format_rttm,
    format_segments,
    format_uem,
    parse_segments,
    read_matrix,
    read_mlp,
    read_rttm,
    read_sad,
    read_track,
    read_uem,
    write_matrix,
    write_mlp,
    write_track,
)
from .pipeline import Conversation, Models, RunConfig, build_models
from .segmentation import SegmentList, fallback_change_scores, kaldi_segments, segment_conversation
from .synth import generate_conversation, synthetic_dev_set

SPAN_TOL = 1e-3  # spans are stored with millisecond care; compare loosely


class FileEmbeddings:
    """Embeddings precomputed per engine and stored next to the conversation."""

    def __init__(self, directory, uri: str):
        self.directory = Path(directory)
        self.uri = uri

    def embed(self, segments: SegmentList, engine: str) -> tuple[EmbeddingSet, EmbeddingSet]:
        base = self.directory / f"{self.uri}.{engine}"
        paths = [Path(f"{base}.ivec"), Path(f"{base}.xvec")]
        for p in paths:
            if not p.exists():
                raise ConfigError(f"missing embedding file {p}", stage="embeddings")
        spans = segments.spans()
        seg_path = Path(f"{base}.segments")
        if seg_path.exists():
            stored = parse_segments(seg_path.read_text(), self.uri).spans()
            if stored.shape != spans.shape:
                raise AlignmentError(
                    f"{seg_path}: {len(stored)} stored subsegments, pipeline produced {len(spans)}", stage="embeddings"
                )
            bad = np.nonzero(np.any(np.abs(stored - spans) > SPAN_TOL, axis=1))[0]
            if bad.size:
                i = int(bad[0])
                raise AlignmentError(
                    f"{seg_path}: subsegment {i} is {stored[i].tolist()}, pipeline produced {spans[i].tolist()}",
                    index=i,
                    stage="embeddings",
                )
        out = []
        for kind, p in zip(("IVEC", "XVEC"), paths):
            m = read_matrix(p)
            if len(m) != len(spans):
                raise AlignmentError(f"{p}: {len(m)} rows for {len(spans)} subsegments", stage="embeddings")
            out.append(EmbeddingSet(self.uri, EmbeddingKind(kind), m, spans))
        return out[0], out[1]


def list_uris(corpus_dir) -> list[str]:
    d = Path(corpus_dir)
    uris = {p.name[: -len(".sad.rttm")] for p in d.glob("*.sad.rttm")}
    uris |= {p.name[: -len(".sad.lab")] for p in d.glob("*.sad.lab")}
    return sorted(uris)


def _first(d: Path, uri: str, *suffixes) -> Path | None:
    for s in suffixes:
        p = d / f"{uri}{s}"
        if p.exists():
            return p
    return None


def load_conversation(corpus_dir, uri: str) -> Conversation:
    d = Path(corpus_dir)
    sad_path = _first(d, uri, ".sad.rttm", ".sad.lab")
    if sad_path is None:
        raise ConfigError(f"{uri}: no SAD file in {d}")
    sad = read_sad(sad_path, uri)

    features = None
    if (p := _first(d, uri, ".feats")) is not None:
        features = FeatureMatrix(read_matrix(p), kind=FeatureKind.LFCC_CMN)
    elif (p := _first(d, uri, ".wav")) is not None:
        features = apply_cmn(extract_lfcc(read_wav(p), LfccConfig()))

    scores = read_track(p) if (p := _first(d, uri, ".scd")) is not None else None
    domain_vector = read_matrix(p).ravel() if (p := _first(d, uri, ".domain")) is not None else None
    reference = None
    if (p := _first(d, uri, ".ref.rttm")) is not None:
        reference = read_rttm(p).get(uri, TimedLabeling(uri, []))
    return Conversation(uri, sad, FileEmbeddings(d, uri), features, scores, domain_vector, reference)


def load_corpus(corpus_dir, uris=None) -> list[Conversation]:
    uris = list_uris(corpus_dir) if uris is None else list(uris)
    if not uris:
        raise ConfigError(f"no conversations (*.sad.rttm / *.sad.lab) in {corpus_dir}")
    return [load_conversation(corpus_dir, u) for u in uris]


def load_uems(corpus_dir, uris) -> dict:
    out = {}
    for u in uris:
        p = Path(corpus_dir) / f"{u}.uem"
        if p.exists():
            out.update({k: v for k, v in read_uem(p).items() if k == u})
    return out


def load_models(models_dir, profiles=None) -> Models:
    d = Path(models_dir)
    for name in ("dev.ivec", "dev.xvec"):
        if not (d / name).exists():
            raise ConfigError(f"models directory {d} lacks {name}")
    n = None
    sets = []
    for kind in ("IVEC", "XVEC"):
        m = read_matrix(d / f"dev.{kind.lower()}")
        n = len(m) if n is None else n
        if len(m) != n:
            raise AlignmentError(f"dev.ivec and dev.xvec disagree on row count ({n} vs {len(m)})")
        spans = np.column_stack([np.arange(n, dtype=float), np.arange(n, dtype=float) + 1.0])
        sets.append(EmbeddingSet("dev", EmbeddingKind(kind), m, spans))
    labels = None
    if (d / "dev.labels").exists():
        labels = np.array((d / "dev.labels").read_text().split())
        if len(labels) != n:
            raise AlignmentError(f"dev.labels has {len(labels)} entries for {n} dev embeddings")
    stage1 = read_mlp(d / "stage1.mlp") if (d / "stage1.mlp").exists() else None
    stage2 = read_mlp(d / "stage2.mlp") if (d / "stage2.mlp").exists() else None
    if profiles is not None:
        registry = ProfileRegistry.load(profiles)
    elif (d / "profiles.json").exists():
        registry = ProfileRegistry.load(d / "profiles.json")
    else:
        registry = default_registry()
    return build_models(sets[0], sets[1], labels, stage1, stage2, registry)


def routing_classifiers(input_dim: int, domain: str, seed: int = 0) -> tuple[MlpModel, MlpModel]:
    """Small fixture classifiers that send every conversation to ``domain``.

    Random hidden layers with output biases dominating, so the decision
    does not depend on the input but the full forward pass still runs.
    """
    if domain not in DEV_DOMAINS:
        raise ConfigError(f"routing domain must be one of {DEV_DOMAINS}")
    rng = np.random.default_rng([seed, 3])
    hidden = 16
    w1 = rng.normal(0, 1 / np.sqrt(input_dim), size=(hidden, input_dim))
    s1 = MlpModel(
        (
            Layer(w1, np.zeros(hidden), Activation.TANH),
            Layer(rng.normal(0, 0.01, size=(1, hidden)), np.array([-6.0]), Activation.SIGMOID),
        ),
        {"positive_class": "single"},
    )
    bias = np.zeros(len(DEV_DOMAINS))
    bias[DEV_DOMAINS.index(domain)] = 8.0
    s2 = MlpModel(
        (
            Layer(w1, np.zeros(hidden), Activation.TANH),
            Layer(rng.normal(0, 0.01, size=(len(DEV_DOMAINS), hidden)), bias, Activation.SOFTMAX),
        ),
        {"classes": list(DEV_DOMAINS)},
    )
    return s1, s2


def write_synthetic_corpus(
    out_dir,
    n_conversations: int = 2,
    n_speakers: int = 3,
    duration: float = 300.0,
    separation: float = 6.0,
    seed: int = 0,
    domain: str = "SLX",
    config: RunConfig | None = None,
) -> tuple[Path, Path]:
    """Write ``corpus/`` and ``models/`` under ``out_dir``; returns both paths.

    Embeddings are stored for exactly the subsegments the pipeline will
    produce under ``config`` (default thresholds and geometries).
    """
    config = config or RunConfig()
    out = Path(out_dir)
    cdir, mdir = out / "corpus", out / "models"
    cdir.mkdir(parents=True, exist_ok=True)
    mdir.mkdir(parents=True, exist_ok=True)

    registry = default_registry()
    change_threshold = registry.get(domain).change_threshold
    for i in range(n_conversations):
        uri = f"synth{i:03d}"
        conv = generate_conversation(uri, n_speakers, duration, separation, seed=seed * 1000 + i, corpus_seed=seed)
        (cdir / f"{uri}.sad.rttm").write_text(format_rttm(conv.sad))
        (cdir / f"{uri}.ref.rttm").write_text(format_rttm(conv.reference))
        (cdir / f"{uri}.uem").write_text(format_uem({uri: [(0.0, duration)]}))
        write_matrix(cdir / f"{uri}.feats", conv.features.frames)
        track = fallback_change_scores(conv.features, config.scd_window)
        write_track(cdir / f"{uri}.scd", track)
        geoms = {
            "sd": segment_conversation(conv.sad, track, change_threshold, config.min_duration, config.sd_geometry),
            "kaldi": kaldi_segments(conv.sad, config.kaldi_geometry),
        }
        for engine, segs in geoms.items():
            iv, xv = conv.embed(segs, engine)
            (cdir / f"{uri}.{engine}.segments").write_text(format_segments(segs))
            write_matrix(cdir / f"{uri}.{engine}.ivec", iv.vectors)
            write_matrix(cdir / f"{uri}.{engine}.xvec", xv.vectors)

    iv, xv, labels = synthetic_dev_set(corpus_seed=seed, separation=separation)
    write_matrix(mdir / "dev.ivec", iv.vectors)
    write_matrix(mdir / "dev.xvec", xv.vectors)
    (mdir / "dev.labels").write_text("".join(f"spk{l:04d}\n" for l in labels))
    s1, s2 = routing_classifiers(iv.dim + xv.dim, domain, seed)
    write_mlp(mdir / "stage1.mlp", s1)
    write_mlp(mdir / "stage2.mlp", s2)
    registry.save(mdir / "profiles.json")
    return cdir, mdir


def run_directory(config: RunConfig):
    """Load models and corpus named by ``config``, run everything, write the output tree."""
    from .pipeline import run_corpus, write_outputs

    if config.corpus_dir is None or config.models_dir is None or config.output_dir is None:
        raise ConfigError("corpus_dir, models_dir and output_dir are all required")
    config.validate_paths()
    models = load_models(config.models_dir, config.profiles)
    conversations = load_corpus(config.corpus_dir, config.uris)
    results = run_corpus(conversations, models, config)
    refs = {c.uri: c.reference for c in conversations if c.reference is not None}
    uems = load_uems(config.corpus_dir, [c.uri for c in conversations])
    write_outputs(results, config.output_dir, refs, uems)
    return results

"""Synthetic conversations with known ground truth.

Speakers are Gaussians. Frame features and i-/x-vectors of a span are drawn
around the time-weighted mix of the speakers active in that span, so the
whole pipeline can be checked against a generated reference.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .annotation import TimedLabeling, Turn
from .embeddings import EmbeddingKind, EmbeddingSet
from .features import FeatureKind, FeatureMatrix, num_frames
from .segmentation import SegmentList

SPEAKER_SUBSPACE = 16


@dataclass(frozen=True)
class EmbeddingSpace:
    """Corpus-wide geometry of one embedding block (shared by dev and test data)."""

    dim: int
    offset: np.ndarray
    basis: np.ndarray  # (dim, SPEAKER_SUBSPACE) orthonormal columns


def corpus_spaces(corpus_seed: int, ivec_dim: int = 128, xvec_dim: int = 128) -> dict[str, EmbeddingSpace]:
    rng = np.random.default_rng([corpus_seed, 7])
    out = {}
    for kind, dim in (("IVEC", ivec_dim), ("XVEC", xvec_dim)):
        r = min(SPEAKER_SUBSPACE, dim)
        basis, _ = np.linalg.qr(rng.normal(size=(dim, r)))
        out[kind] = EmbeddingSpace(dim, rng.normal(0.0, 3.0, size=dim), basis)
    return out


def _span_seed(seed: int, kind: str, onset: float, duration: float) -> list[int]:
    return [seed, zlib.crc32(kind.encode()), int(round(onset * 1000)), int(round(duration * 1000))]


@dataclass
class SyntheticConversation:
    uri: str
    reference: TimedLabeling
    sad: TimedLabeling
    features: FeatureMatrix
    speaker_means: dict[str, dict[str, np.ndarray]]  # kind -> speaker -> mean
    seed: int
    noise: float = 1.0

    def _vector(self, kind: str, onset: float, end: float) -> np.ndarray:
        means = self.speaker_means[kind]
        weights = {}
        for t in self.reference.turns:
            ov = min(end, t.end) - max(onset, t.onset)
            if ov > 0:
                weights[t.label] = weights.get(t.label, 0.0) + ov
        dim = len(next(iter(means.values())))
        total = sum(weights.values())
        center = np.zeros(dim)
        if total > 0:
            for spk in sorted(weights):
                center += weights[spk] / total * means[spk]
        else:
            center = np.mean(list(means.values()), axis=0)
        rng = np.random.default_rng(_span_seed(self.seed, kind, onset, end - onset))
        return center + rng.normal(0.0, self.noise, size=dim)

    def embed(self, segments: SegmentList, engine: str = "sd") -> tuple[EmbeddingSet, EmbeddingSet]:
        spans = segments.spans()
        out = []
        for kind in ("IVEC", "XVEC"):
            vecs = np.array([self._vector(kind, a, b) for a, b in spans]) if len(spans) else np.zeros((0, 0))
            out.append(EmbeddingSet(self.uri, EmbeddingKind(kind), vecs, spans))
        return out[0], out[1]


def generate_conversation(
    uri: str = "synth",
    n_speakers: int = 3,
    duration: float = 300.0,
    separation: float = 6.0,
    seed: int = 0,
    corpus_seed: int = 0,
    feat_dim: int = 20,
    ivec_dim: int = 128,
    xvec_dim: int = 128,
    frame_shift: float = 0.010,
    frame_length: float = 0.025,
) -> SyntheticConversation:
    """A scripted conversation whose speakers sit ``separation`` noise-sigmas apart.

    Turns last 1.5 to 8 s; half of the speaker changes are direct, the rest
    are separated by 0.2 to 1.5 s of silence.
    """
    if n_speakers < 1:
        raise ValueError("need at least one speaker")
    rng = np.random.default_rng([seed, 1])
    names = [f"S{i}" for i in range(n_speakers)]

    turns = []
    t = float(rng.uniform(0.2, 1.0))
    spk = int(rng.integers(n_speakers))
    while True:
        dur = float(rng.uniform(1.5, 8.0))
        if t + dur > duration:
            break
        turns.append(Turn(round(t, 3), round(dur, 3), names[spk]))
        t = round(t + dur, 3)
        if rng.random() < 0.5:
            t += float(rng.uniform(0.2, 1.5))
        if n_speakers > 1:
            spk = (spk + int(rng.integers(1, n_speakers))) % n_speakers
    reference = TimedLabeling(uri, turns)
    sad = TimedLabeling.from_intervals(uri, reference.speech())

    # embeddings: speaker means on orthogonal directions of the corpus speaker subspace
    spaces = corpus_spaces(corpus_seed, ivec_dim, xvec_dim)
    scale = separation / np.sqrt(2.0)
    speaker_means = {}
    for kind, space in spaces.items():
        r = space.basis.shape[1]
        rot, _ = np.linalg.qr(rng.normal(size=(r, r)))
        dirs = space.basis @ rot
        speaker_means[kind] = {
            name: space.offset + scale * dirs[:, i % r] for i, name in enumerate(names)
        }

    # frames: per-speaker mean on orthogonal axes, silence at the origin
    n = num_frames(int(round(duration * 16000)), 16000, frame_length, frame_shift)
    frot, _ = np.linalg.qr(rng.normal(size=(feat_dim, feat_dim)))
    feat_means = {name: scale * frot[:, i % feat_dim] for i, name in enumerate(names)}
    centers = np.arange(n) * frame_shift + frame_length / 2
    mean_track = np.zeros((n, feat_dim))
    for turn in reference.turns:
        sel = (centers >= turn.onset) & (centers < turn.end)
        mean_track[sel] = feat_means[turn.label]
    frames = mean_track + rng.normal(size=(n, feat_dim))
    frames -= frames.mean(axis=0)
    features = FeatureMatrix(frames, frame_shift, frame_length, FeatureKind.LFCC_CMN)

    return SyntheticConversation(uri, reference, sad, features, speaker_means, seed)


def synthetic_dev_set(
    corpus_seed: int = 0,
    n_speakers: int = 300,
    per_speaker: int = 8,
    separation: float = 6.0,
    ivec_dim: int = 128,
    xvec_dim: int = 128,
) -> tuple[EmbeddingSet, EmbeddingSet, np.ndarray]:
    """Labeled development i-/x-vectors from the same corpus geometry.

    Returns (ivecs, xvecs, labels). Speaker means are Gaussian in the speaker
    subspace with the same expected pairwise distance as the test speakers.
    """
    spaces = corpus_spaces(corpus_seed, ivec_dim, xvec_dim)
    rng = np.random.default_rng([corpus_seed, 2])
    labels = np.repeat(np.arange(n_speakers), per_speaker)
    spans = np.column_stack([np.arange(len(labels), dtype=float), np.arange(len(labels), dtype=float) + 1.0])
    sets = {}
    for kind, space in spaces.items():
        r = space.basis.shape[1]
        z = rng.normal(0.0, separation / np.sqrt(2.0 * r), size=(n_speakers, r))
        means = space.offset + z @ space.basis.T
        vecs = means[labels] + rng.normal(size=(len(labels), space.dim))
        sets[kind] = EmbeddingSet("dev", EmbeddingKind(kind), vecs, spans)
    return sets["IVEC"], sets["XVEC"], labels

"""Xi-vector fusion, whitening and conversation-dependent PCA."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, DimensionError, EmptyInputError, ConfigError, DiarizationWarning

# extractor latent dimensions (metadata only; extractors are not trained here)
IVECTOR_DIM = 128
XVECTOR_DIM = 128


class EmbeddingKind(str, enum.Enum):
    IVEC = "IVEC"
    XVEC = "XVEC"
    XI = "XI"


class WhitenStrategy(str, enum.Enum):
    GLOBAL_MEAN = "GLOBAL_MEAN"
    BLOCK_CONCAT = "BLOCK_CONCAT"


@dataclass
class EmbeddingSet:
    uri: str
    kind: EmbeddingKind
    vectors: np.ndarray
    spans: np.ndarray
    # xi-vectors remember how they were assembled: [(kind, dim), ...]
    blocks: tuple = ()
    declared_dim: int | None = None

    def __post_init__(self):
        self.kind = EmbeddingKind(self.kind)
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim == 1:
            v = v.reshape(0, 0) if v.size == 0 else v.reshape(1, -1)
        s = np.asarray(self.spans, dtype=np.float64).reshape(-1, 2)
        if len(v) != len(s):
            raise AlignmentError(f"{self.uri}: {len(v)} vectors but {len(s)} spans")
        if v.size and not np.all(np.isfinite(v)):
            bad = int(np.argwhere(~np.isfinite(v))[0, 0])
            raise DimensionError(f"{self.uri}: non-finite embedding at row {bad}")
        if self.declared_dim is not None and len(v) and v.shape[1] != self.declared_dim:
            raise DimensionError(
                f"{self.uri}: {self.kind.value} dim {v.shape[1]} != declared extractor dim {self.declared_dim}"
            )
        self.vectors = v
        self.spans = s
        if not self.blocks and len(v):
            self.blocks = ((self.kind.value, v.shape[1]),)

    def __len__(self):
        return len(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1] if self.vectors.ndim == 2 and len(self.vectors) else sum(d for _, d in self.blocks)

    def with_vectors(self, vectors, blocks=None) -> "EmbeddingSet":
        vectors = np.asarray(vectors, dtype=np.float64)
        if blocks is None:
            blocks = self.blocks if vectors.shape[1:] == self.vectors.shape[1:] else ()
        return EmbeddingSet(self.uri, self.kind, vectors, self.spans, blocks)


def fuse_xi(ivecs: EmbeddingSet, xvecs: EmbeddingSet) -> EmbeddingSet:
    """Concatenate x-vector then i-vector for every aligned segment."""
    if ivecs.uri != xvecs.uri:
        raise AlignmentError(f"uri mismatch: {ivecs.uri!r} vs {xvecs.uri!r}")
    if len(ivecs) != len(xvecs):
        raise AlignmentError(
            f"{ivecs.uri}: {len(ivecs)} i-vectors vs {len(xvecs)} x-vectors",
            index=min(len(ivecs), len(xvecs)),
        )
    if len(ivecs) == 0:
        return EmbeddingSet(ivecs.uri, EmbeddingKind.XI, np.zeros((0, 0)), np.zeros((0, 2)))
    mismatch = np.flatnonzero(np.any(np.abs(ivecs.spans - xvecs.spans) > 1e-6, axis=1))
    if mismatch.size:
        j = int(mismatch[0])
        raise AlignmentError(
            f"{ivecs.uri}: span mismatch at index {j}: {ivecs.spans[j].tolist()} vs {xvecs.spans[j].tolist()}",
            index=j,
        )
    vectors = np.hstack([xvecs.vectors, ivecs.vectors])
    blocks = (("XVEC", xvecs.dim), ("IVEC", ivecs.dim))
    return EmbeddingSet(ivecs.uri, EmbeddingKind.XI, vectors, xvecs.spans.copy(), blocks)


def split_xi(xi: EmbeddingSet) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`fuse_xi`: return (x-vectors, i-vectors)."""
    dx = dict(xi.blocks)["XVEC"]
    return xi.vectors[:, :dx], xi.vectors[:, dx:]


@dataclass(frozen=True)
class BlockTransform:
    start: int
    stop: int
    mean: np.ndarray
    projection: np.ndarray  # (out_dim, stop - start)


@dataclass(frozen=True)
class WhitenModel:
    strategy: WhitenStrategy
    mean: np.ndarray
    blocks: tuple[BlockTransform, ...] = field(default_factory=tuple)

    @property
    def dim(self) -> int:
        return len(self.mean)


def block_pca_projection(x: np.ndarray, out_dim: int | None = None, scale: bool = True, floor: float = 1e-10) -> np.ndarray:
    """PCA rotation of centered data, rows sorted by decreasing variance.

    With ``scale`` the rows are divided by the square root of their variance,
    so the projected data has unit variance per retained direction.
    """
    evals, evecs = _sorted_eigh(np.cov(x, rowvar=False, bias=True).reshape(x.shape[1], x.shape[1]))
    k = x.shape[1] if out_dim is None else min(out_dim, x.shape[1])
    proj = evecs[:, :k].T
    if scale:
        proj = proj / np.sqrt(np.maximum(evals[:k], floor))[:, None]
    return proj


def fit_whiten(
    dev: EmbeddingSet,
    strategy: WhitenStrategy | str = WhitenStrategy.GLOBAL_MEAN,
    projections: list[np.ndarray] | None = None,
    block_out_dims: list[int | None] | None = None,
) -> WhitenModel:
    """Estimate a whitening transform on development embeddings.

    ``GLOBAL_MEAN`` only subtracts the dev mean. ``BLOCK_CONCAT`` treats every
    block of the xi-vector (x then i) independently: its own mean and its own
    projection, either supplied in ``projections`` or fitted as scaled PCA.
    """
    strategy = WhitenStrategy(strategy)
    if len(dev) == 0:
        raise EmptyInputError("cannot fit whitening on an empty development set")
    mean = dev.vectors.mean(axis=0)
    if strategy is WhitenStrategy.GLOBAL_MEAN:
        return WhitenModel(strategy, mean)

    blocks = []
    start = 0
    for b, (_, width) in enumerate(dev.blocks):
        stop = start + width
        sub = dev.vectors[:, start:stop]
        mu = sub.mean(axis=0)
        if projections is not None:
            proj = np.asarray(projections[b], dtype=np.float64)
            if proj.ndim != 2 or proj.shape[1] != width:
                raise DimensionError(f"projection for block {b} must have {width} columns, got {proj.shape}")
        else:
            out_dim = block_out_dims[b] if block_out_dims else None
            proj = block_pca_projection(sub - mu, out_dim)
        blocks.append(BlockTransform(start, stop, mu, proj))
        start = stop
    if start != dev.dim:
        raise DimensionError(f"blocks cover {start} of {dev.dim} dims")
    return WhitenModel(strategy, mean, tuple(blocks))


def apply_whiten(emb: EmbeddingSet, model: WhitenModel) -> EmbeddingSet:
    if len(emb) == 0:
        return emb
    if emb.dim != model.dim:
        raise DimensionError(f"{emb.uri}: embedding dim {emb.dim} != whitening dim {model.dim}")
    if model.strategy is WhitenStrategy.GLOBAL_MEAN:
        return emb.with_vectors(emb.vectors - model.mean)
    parts = [(emb.vectors[:, b.start : b.stop] - b.mean) @ b.projection.T for b in model.blocks]
    blocks = tuple((name, b.projection.shape[0]) for (name, _), b in zip(emb.blocks, model.blocks))
    return emb.with_vectors(np.hstack(parts), blocks)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, dim), orthonormal rows
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]


def _sorted_eigh(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs by decreasing eigenvalue, each vector's first nonzero entry made non-negative."""
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")
    evals, evecs = evals[order], evecs[:, order]
    for j in range(evecs.shape[1]):
        nz = np.flatnonzero(np.abs(evecs[:, j]) > 1e-12)
        if nz.size and evecs[nz[0], j] < 0:
            evecs[:, j] = -evecs[:, j]
    return evals, evecs


def fit_conversation_pca(emb: EmbeddingSet, k: int) -> PcaModel:
    """PCA on the conversation's own embeddings, centered on the conversation mean."""
    n = len(emb)
    if n == 0:
        raise EmptyInputError(f"{emb.uri}: no embeddings for PCA")
    if k < 1:
        raise ConfigError(f"PCA dimension must be positive, got {k}")
    if n < k:
        k_new = max(n - 1, 1)
        warnings.warn(f"{emb.uri}: {n} embeddings < PCA dim {k}; using {k_new}", DiarizationWarning, stacklevel=2)
        k = k_new
    if k > emb.dim:
        warnings.warn(f"{emb.uri}: PCA dim {k} > embedding dim {emb.dim}; clamped", DiarizationWarning, stacklevel=2)
        k = emb.dim
    mean = emb.vectors.mean(axis=0)
    centered = emb.vectors - mean
    cov = centered.T @ centered / n
    evals, evecs = _sorted_eigh(cov)
    return PcaModel(mean, evecs[:, :k].T.copy(), np.maximum(evals[:k], 0.0))


def apply_pca(emb: EmbeddingSet, model: PcaModel) -> EmbeddingSet:
    if len(emb) == 0:
        return emb
    if emb.dim != len(model.mean):
        raise DimensionError(f"{emb.uri}: embedding dim {emb.dim} != PCA dim {len(model.mean)}")
    return emb.with_vectors((emb.vectors - model.mean) @ model.components.T, blocks=(("PCA", model.k),))

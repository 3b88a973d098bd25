"""Frame-level resegmentation with per-speaker diagonal GMMs."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .annotation import TimedLabeling, turns_from_frame_labels, intersect_intervals
from .errors import ConfigError, DiarizationWarning
from .features import FeatureMatrix

VAR_FLOOR = 1e-6
LL_FLOOR = -1e9
MAX_COMPONENTS = 64
SMOOTH_WINDOW = 0.075
SMOOTH_SHIFT = 0.050


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    ll_history: tuple[float, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(f"GMM weights sum to {w.sum()}, not 1")
        if np.any(np.asarray(self.variances) < VAR_FLOOR * (1 - 1e-12)):
            raise ConfigError("GMM variance below floor")

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def component_log_likelihood(self, x: np.ndarray) -> np.ndarray:
        """(n, c) array of log w_c + log N(x | mean_c, diag(var_c))."""
        x = np.asarray(x, dtype=np.float64)
        inv = 1.0 / self.variances
        const = -0.5 * (x.shape[1] * math.log(2 * math.pi) + np.log(self.variances).sum(axis=1))
        quad = (x**2) @ inv.T - 2.0 * x @ (self.means * inv).T + np.sum(self.means**2 * inv, axis=1)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logw + const - 0.5 * quad

    def log_likelihood(self, x: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_log_likelihood(x), axis=1)


def component_count(n_frames: int, frame_shift: float = 0.01) -> int:
    """1 component per 100 frames (of 10 ms), rounded down to a power of two, capped at 64."""
    if n_frames < 1:
        raise ConfigError("component_count needs at least one frame")
    units = n_frames * frame_shift / 0.01 / 100.0
    if units < 2:
        return 1
    return int(min(2 ** math.floor(math.log2(units)), MAX_COMPONENTS))


def _kmeanspp(x: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[int(rng.integers(n))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, c):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def fit_gmm(frames: np.ndarray, c: int, seed: int = 0, max_iter: int = 50, tol: float = 1e-4) -> GmmModel:
    """Diagonal-covariance GMM by EM from k-means++ seeding.

    ``ll_history`` is the mean per-frame log-likelihood before the first
    E-step's parameters are updated and after each M-step.
    """
    x = np.asarray(frames, dtype=np.float64)
    n, dim = x.shape
    if n == 0:
        raise ConfigError("cannot fit a GMM on zero frames")
    if n < c:
        warnings.warn(f"{n} frames < {c} components; reducing", DiarizationWarning, stacklevel=2)
        c = n
    rng = np.random.default_rng(seed)
    global_var = np.maximum(x.var(axis=0), VAR_FLOOR)

    centers = _kmeanspp(x, c, rng) if c > 1 else x.mean(axis=0, keepdims=True)
    if c > 1:
        sq = (x**2).sum(axis=1)[:, None] - 2.0 * x @ centers.T + (centers**2).sum(axis=1)[None, :]
        hard = np.argmin(sq, axis=1)
    else:
        hard = np.zeros(n, dtype=np.int64)
    resp = np.zeros((n, c))
    resp[np.arange(n), hard] = 1.0
    model = _m_step(x, resp, global_var, None)

    comp = model.component_log_likelihood(x)
    norm = logsumexp(comp, axis=1, keepdims=True)
    history = [float(norm.mean())]
    for _ in range(max_iter):
        resp = np.exp(comp - norm)
        model = _m_step(x, resp, global_var, model)
        comp = model.component_log_likelihood(x)
        norm = logsumexp(comp, axis=1, keepdims=True)
        history.append(float(norm.mean()))
        if history[-1] - history[-2] < tol:
            break
    return GmmModel(model.weights, model.means, model.variances, tuple(history))


def _m_step(x, resp, global_var, prev):
    n = len(x)
    nk = resp.sum(axis=0)
    weights = nk / n
    safe = np.where(nk > 0, nk, 1.0)[:, None]
    means = resp.T @ x / safe
    # second moments about the data mean limit cancellation in E[x^2] - mean^2
    shift = x.mean(axis=0)
    xc = x - shift
    mc = means - shift
    variances = np.maximum(resp.T @ (xc * xc) / safe - mc * mc, VAR_FLOOR)
    dead = nk <= 1e-12
    if np.any(dead):
        # a component with no mass does not affect the likelihood; keep it finite
        means[dead] = prev.means[dead] if prev is not None else x.mean(axis=0)
        variances[dead] = prev.variances[dead] if prev is not None else global_var
    weights = weights / weights.sum()
    return GmmModel(weights, means, variances)


@dataclass(frozen=True)
class LikelihoodTracks:
    values: np.ndarray  # (speakers, frames)
    frame_shift: float
    speakers: tuple[str, ...]
    offset: float = 0.0  # start time of frame 0's cell

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ConfigError("likelihood tracks must be a (speakers, frames) matrix")
        if len(self.speakers) != v.shape[0]:
            raise ConfigError(f"{len(self.speakers)} speaker names for {v.shape[0]} tracks")
        object.__setattr__(self, "values", np.maximum(np.nan_to_num(v, nan=LL_FLOOR, neginf=LL_FLOOR), LL_FLOOR))

    @property
    def num_frames(self) -> int:
        return self.values.shape[1]


def smooth_tracks(tracks: LikelihoodTracks, window: float = SMOOTH_WINDOW, shift: float = SMOOTH_SHIFT) -> LikelihoodTracks:
    """Gaussian-window smoothing evaluated at anchors every ``shift`` seconds.

    Each anchor averages the frames within ``window / 2`` of it with Gaussian
    weights (sigma = window / 4). Frame values are then linearly interpolated
    between the two neighbouring anchors.
    """
    fs = tracks.frame_shift
    if window <= fs:
        raise ConfigError(f"smoothing window {window} must exceed the frame shift {fs}")
    if shift <= 0:
        raise ConfigError("anchor shift must be positive")
    t = tracks.num_frames
    if t * fs < window:
        warnings.warn("track shorter than one smoothing window; unchanged", DiarizationWarning, stacklevel=2)
        return tracks

    frame_t = np.arange(t) * fs
    n_anchor = int(math.floor((t - 1) * fs / shift + 1e-9)) + 1
    anchor_t = np.arange(n_anchor) * shift
    if anchor_t[-1] < frame_t[-1] - 1e-9:
        anchor_t = np.append(anchor_t, frame_t[-1])
    half = int(math.floor(window / 2 / fs + 1e-9))
    sigma = window / 4
    smoothed = np.empty((tracks.values.shape[0], len(anchor_t)))
    for a, at in enumerate(anchor_t):
        center = int(round(at / fs))
        lo, hi = max(center - half, 0), min(center + half, t - 1)
        idx = np.arange(lo, hi + 1)
        w = np.exp(-0.5 * ((frame_t[idx] - at) / sigma) ** 2)
        smoothed[:, a] = tracks.values[:, idx] @ w / w.sum()

    out = np.vstack([np.interp(frame_t, anchor_t, row) for row in smoothed])
    return LikelihoodTracks(out, fs, tracks.speakers, tracks.offset)


def reassign_frames(tracks: LikelihoodTracks, sad: TimedLabeling, fallback: TimedLabeling | None = None) -> TimedLabeling:
    """Label every SAD speech frame with its most likely speaker (ties go to the lower index)."""
    regions = sad.speech()
    if tracks.num_frames == 0 or len(tracks.speakers) == 0:
        return fallback if fallback is not None else TimedLabeling(sad.uri, [])
    best = np.argmax(tracks.values, axis=0)
    return turns_from_frame_labels(sad.uri, regions, best, tracks.speakers, tracks.frame_shift, tracks.offset)


def add_overlap_second(tracks: LikelihoodTracks, overlap_regions: TimedLabeling, primary: TimedLabeling) -> TimedLabeling:
    """Add the second most likely speaker inside known overlap regions."""
    regions = overlap_regions.intervals()
    if not regions:
        return primary
    if len(tracks.speakers) < 2:
        warnings.warn("fewer than two speakers; no second speaker added", DiarizationWarning, stacklevel=2)
        return primary
    order = np.argsort(-tracks.values, axis=0, kind="stable")
    second = order[1]
    extra = turns_from_frame_labels(primary.uri, regions, second, tracks.speakers, tracks.frame_shift, tracks.offset)
    return TimedLabeling(primary.uri, list(primary.turns) + list(extra.turns))


def frames_in(features: FeatureMatrix, intervals: list[tuple[float, float]]) -> np.ndarray:
    """Indices of frames whose center lies inside any interval."""
    centers = features.frame_centers()
    mask = np.zeros(len(centers), dtype=bool)
    for s, e in intervals:
        mask |= (centers >= s) & (centers < e)
    return np.flatnonzero(mask)


def resegment(
    features: FeatureMatrix,
    hypothesis: TimedLabeling,
    sad: TimedLabeling,
    seed: int = 0,
    window: float = SMOOTH_WINDOW,
    shift: float = SMOOTH_SHIFT,
    overlap_regions: TimedLabeling | None = None,
) -> TimedLabeling:
    """GMM per hypothesis speaker, smoothed likelihoods, frame-wise relabeling of all SAD speech."""
    speakers = []
    models = []
    speech = sad.speech()
    for label in hypothesis.labels:
        idx = frames_in(features, intersect_intervals(hypothesis.intervals(label), speech))
        if len(idx) == 0:
            continue
        c = component_count(len(idx), features.frame_shift)
        speakers.append(label)
        models.append(fit_gmm(features.frames[idx], c, seed=seed))
    if not models:
        return hypothesis
    values = np.vstack([m.log_likelihood(features.frames) for m in models])
    tracks = LikelihoodTracks(values, features.frame_shift, tuple(speakers), features.cell_offset)
    tracks = smooth_tracks(tracks, window, shift)
    out = reassign_frames(tracks, sad, fallback=hypothesis)
    if overlap_regions is not None:
        out = add_overlap_second(tracks, overlap_regions, out)
    return out

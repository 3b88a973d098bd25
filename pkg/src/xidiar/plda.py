"""Two-covariance PLDA: pairwise log-likelihood ratios and EM training.

Speaker variable ``y ~ N(mu, B)``; an observation is ``x = y + e`` with
``e ~ N(0, W)``. The between-class covariance ``B`` is full rank in the
feature space (no subspace reduction).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .clustering import DistanceMatrix, Metric
from .errors import ConfigError, DimensionError, NumericalError

MAX_CONDITION = 1e12
LOG_2PI = float(np.log(2 * np.pi))


def _sym(a):
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class PldaModel:
    mu: np.ndarray
    between_cov: np.ndarray
    within_cov: np.ndarray
    ll_history: tuple[float, ...] = ()

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        d = len(mu)
        b = np.asarray(self.between_cov, dtype=np.float64).reshape(d, d)
        w = np.asarray(self.within_cov, dtype=np.float64).reshape(d, d)
        for name, m in (("between", b), ("within", w)):
            if np.max(np.abs(m - m.T), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(m), initial=0.0)):
                raise DimensionError(f"{name}-class covariance is not symmetric")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "between_cov", _sym(b))
        object.__setattr__(self, "within_cov", _sym(w))

    @property
    def dim(self) -> int:
        return len(self.mu)

    @cached_property
    def _scoring(self):
        w = self.within_cov
        cond = np.linalg.cond(w)
        evals = np.linalg.eigvalsh(w)
        if not np.isfinite(cond) or cond > MAX_CONDITION or evals[0] <= 0:
            raise NumericalError(f"within-class covariance is singular or not PD (condition number {cond:.3e})")
        t = self.between_cov + w
        t_inv = np.linalg.inv(t)
        s = _sym(t - self.between_cov @ t_inv @ self.between_cov)
        a = np.linalg.inv(s)
        q = _sym(t_inv - a)
        p = _sym(t_inv @ self.between_cov @ a)
        const = 0.5 * np.linalg.slogdet(t)[1] - 0.5 * np.linalg.slogdet(s)[1]
        return q, p, float(const)

    def score(self, u, v) -> float:
        return plda_score(self, u, v)

    def score_matrix(self, x: np.ndarray) -> np.ndarray:
        q, p, const = self._scoring
        xc = np.asarray(x, dtype=np.float64) - self.mu
        quad = np.einsum("ij,jk,ik->i", xc, q, xc)
        cross = xc @ p @ xc.T
        return 0.5 * (quad[:, None] + quad[None, :]) + 0.5 * (cross + cross.T) + const

    def to_json(self) -> str:
        return json.dumps(
            {
                "mu": self.mu.tolist(),
                "between_cov": self.between_cov.tolist(),
                "within_cov": self.within_cov.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PldaModel":
        obj = json.loads(text)
        return cls(np.array(obj["mu"]), np.array(obj["between_cov"]), np.array(obj["within_cov"]))


def plda_score(model: PldaModel, u, v) -> float:
    """log p(u, v | same speaker) - log p(u, v | different speakers)."""
    q, p, const = model._scoring
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if u.shape != model.mu.shape or v.shape != model.mu.shape:
        raise DimensionError(f"vectors of shape {u.shape}, {v.shape} do not match PLDA dim {model.dim}")
    uc = u - model.mu
    vc = v - model.mu
    # each sum is evaluated symmetrically so swapping u and v is bit-exact
    quad = uc @ q @ uc + vc @ q @ vc
    cross = uc @ (p @ vc) + vc @ (p @ uc)
    return float(0.5 * quad + 0.5 * cross + const)


def plda_distance_matrix(model: PldaModel, x: np.ndarray, shift: bool = True) -> DistanceMatrix:
    """Negated LLR matrix. With ``shift`` the off-diagonal minimum becomes 0 and the diagonal is 0."""
    s = model.score_matrix(x)
    d = -s
    n = len(d)
    if shift and n > 1:
        off = d[~np.eye(n, dtype=bool)]
        d = d - off.min()
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(_sym(d), Metric.NEG_PLDA)


def _group(x, labels):
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()), key=str)
    idx = [np.flatnonzero(labels == c) for c in classes]
    counts = np.array([len(i) for i in idx])
    means = np.array([x[i].mean(axis=0) for i in idx])
    within = np.zeros((x.shape[1], x.shape[1]))
    for i, m in zip(idx, means):
        dev = x[i] - m
        within += dev.T @ dev
    return counts, means, within


def plda_log_likelihood(model: PldaModel, x: np.ndarray, labels) -> float:
    """Total marginal log-likelihood of labeled data under the model."""
    x = np.asarray(x, dtype=np.float64)
    counts, means, scatter = _group(x, labels)
    return _loglik(model.mu, model.between_cov, model.within_cov, counts, means, scatter)


def _loglik(mu, b, w, counts, means, scatter):
    d = len(mu)
    _, logdet_w = np.linalg.slogdet(w)
    w_inv = np.linalg.inv(w)
    total = -0.5 * float(np.sum(w_inv * scatter))
    for n in np.unique(counts):
        sel = counts == n
        c = _sym(b + w / n)
        _, logdet_c = np.linalg.slogdet(c)
        diff = means[sel] - mu
        maha = np.einsum("ij,ij->i", diff, np.linalg.solve(c, diff.T).T)
        k = int(sel.sum())
        total += -0.5 * (k * (d * LOG_2PI + logdet_c) + maha.sum())
        total += k * (-(n - 1) * d / 2 * LOG_2PI - (n - 1) / 2 * logdet_w - d / 2 * np.log(n))
    return float(total)


def fit_plda(x: np.ndarray, labels, n_iter: int = 20, tol: float = 0.0, floor: float = 1e-9) -> PldaModel:
    """EM estimate of (mu, B, W), initialized from class-mean and pooled within scatter.

    ``ll_history`` holds the training log-likelihood after initialization and
    after every EM iteration; EM guarantees it never decreases.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ConfigError("PLDA training needs a non-empty (n, d) matrix")
    if len(labels) != len(x):
        raise DimensionError(f"{len(labels)} labels for {len(x)} vectors")
    counts, means, scatter = _group(x, labels)
    if len(counts) < 2:
        raise ConfigError("PLDA training needs at least two classes (between-class covariance undefined)")
    if counts.max() < 2:
        raise ConfigError("PLDA training needs at least one class with two or more samples")
    n_total, d = x.shape
    s = len(counts)
    eye = np.eye(d)

    mu = means.mean(axis=0)
    b = _sym((means - mu).T @ (means - mu) / s)
    w = _sym(scatter / max(n_total - s, 1)) + floor * eye
    history = [_loglik(mu, b, w, counts, means, scatter)]

    for _ in range(n_iter):
        # E-step, shared per distinct class size
        y_hat = np.empty_like(means)
        post_cov_sum_b = np.zeros((d, d))
        post_cov_sum_w = np.zeros((d, d))
        for n in np.unique(counts):
            sel = counts == n
            gain = np.linalg.solve(_sym(b + w / n), b).T  # B (B + W/n)^-1
            post_cov = _sym(b - gain @ b)
            y_hat[sel] = mu + (means[sel] - mu) @ gain.T
            k = int(sel.sum())
            post_cov_sum_b += k * post_cov
            post_cov_sum_w += k * n * post_cov
        # M-step
        mu = y_hat.mean(axis=0)
        dy = y_hat - mu
        b = _sym((post_cov_sum_b + dy.T @ dy) / s)
        dm = (means - y_hat) * np.sqrt(counts)[:, None]
        w = _sym((scatter + dm.T @ dm + post_cov_sum_w) / n_total)
        history.append(_loglik(mu, b, w, counts, means, scatter))
        if tol and history[-1] - history[-2] < tol:
            break
    return PldaModel(mu, b, w, tuple(history))

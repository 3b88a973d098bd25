"""Average-linkage AHC with a cluster-count corridor, and PAM k-medoids."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DimensionError, EmptyInputError, DiarizationWarning


class Metric(str, enum.Enum):
    COSINE = "COSINE"
    NEG_PLDA = "NEG_PLDA"


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    metric: Metric = Metric.COSINE

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DimensionError(f"distance matrix must be square, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DimensionError("distance matrix has non-finite entries")
        if v.size and np.max(np.abs(v - v.T)) > 1e-9:
            raise DimensionError("distance matrix is not symmetric")
        metric = Metric(self.metric)
        if metric is Metric.COSINE and v.size and np.any(np.diag(v) != 0):
            raise DimensionError("cosine distance matrix must have a zero diagonal")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "metric", metric)

    @property
    def n(self) -> int:
        return self.values.shape[0]


class Merge(NamedTuple):
    first: int
    second: int
    distance: float
    size: int


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    k: int
    linkage_trace: tuple[Merge, ...] = field(default_factory=tuple)
    medoids: tuple[int, ...] = ()
    cost: float | None = None
    cost_history: tuple[float, ...] = ()

    def clusters(self) -> list[list[int]]:
        return [np.flatnonzero(self.labels == c).tolist() for c in range(self.k)]


def cosine_distance(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        warnings.warn("cosine distance with a zero vector defined as 1", DiarizationWarning, stacklevel=2)
        return 1.0
    return float(min(max(1.0 - float(u @ v) / (nu * nv), 0.0), 2.0))


def cosine_distance_matrix(x: np.ndarray) -> DistanceMatrix:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    zero = norms == 0
    if np.any(zero):
        warnings.warn(f"{int(zero.sum())} zero vectors; their cosine distances are set to 1", DiarizationWarning, stacklevel=2)
    unit = x / np.where(zero, 1.0, norms)[:, None]
    d = 1.0 - unit @ unit.T
    d[zero, :] = 1.0
    d[:, zero] = 1.0
    d = np.clip(0.5 * (d + d.T), 0.0, 2.0)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d, Metric.COSINE)


def _relabel(groups: list[list[int]], n: int) -> np.ndarray:
    """Cluster ids in order of each cluster's smallest member."""
    labels = np.empty(n, dtype=np.int64)
    for c, members in enumerate(sorted(groups, key=min)):
        labels[members] = c
    return labels


def ahc(dist: DistanceMatrix, threshold: float, k_min: int = 1, k_max: int | None = None) -> ClusterAssignment:
    """Average-linkage agglomerative clustering.

    Merging stops once the closest pair is farther than ``threshold`` and the
    cluster count is already at most ``k_max``. Merging continues past the
    threshold while there are more than ``k_max`` clusters, and never goes
    below ``k_min``. Ties pick the lowest (i, j) pair.
    """
    n = dist.n
    if n == 0:
        raise EmptyInputError("AHC on zero items")
    k_max = n if k_max is None else k_max
    if k_min < 1 or k_max < 1:
        raise ConfigError(f"cluster corridor must be positive, got [{k_min}, {k_max}]")
    if k_min > k_max:
        raise ConfigError(f"k_min {k_min} > k_max {k_max}")
    if k_min > n:
        warnings.warn(f"k_min {k_min} > {n} items; clamped", DiarizationWarning, stacklevel=2)
        k_min = n
    k_max = min(k_max, n)

    d = dist.values.copy()
    np.fill_diagonal(d, np.inf)
    active = np.ones(n, dtype=bool)
    sizes = np.ones(n, dtype=np.int64)
    members = [[i] for i in range(n)]
    trace = []
    k = n
    while k > k_min:
        sub = np.where(active[:, None] & active[None, :], d, np.inf)
        # upper triangle only so the flat argmin yields the lowest (i, j) pair
        sub[np.tril_indices(n)] = np.inf
        flat = int(np.argmin(sub))
        i, j = divmod(flat, n)
        best = sub[i, j]
        if best > threshold and k <= k_max:
            break
        ni, nj = sizes[i], sizes[j]
        # Lance-Williams update for average linkage
        row = (ni * d[i] + nj * d[j]) / (ni + nj)
        d[i, :] = row
        d[:, i] = row
        d[i, i] = np.inf
        d[j, :] = np.inf
        d[:, j] = np.inf
        active[j] = False
        sizes[i] = ni + nj
        members[i].extend(members[j])
        members[j] = []
        trace.append(Merge(i, j, float(best), int(sizes[i])))
        k -= 1

    groups = [members[i] for i in range(n) if active[i]]
    return ClusterAssignment(_relabel(groups, n), len(groups), tuple(trace))


def _assign(d: np.ndarray, medoids: list[int]) -> tuple[np.ndarray, float]:
    sub = d[:, medoids]
    nearest = np.argmin(sub, axis=1)
    return nearest, float(sub[np.arange(d.shape[0]), nearest].sum())


# largest C(n, k) for which the PAM result is refined to the global optimum
EXACT_BUDGET = 100_000


def _exact_medoids(d: np.ndarray, k: int, bound: float) -> tuple[list[int], float] | None:
    """Branch and bound over medoid sets in increasing index order.

    Returns a set strictly cheaper than ``bound``, or None. A partial set
    with next candidate ``c`` costs at least sum_i min(current_i, min_{j>=c} d_ij).
    """
    n = d.shape[0]
    # tail[c, i] = min over j >= c of d[i, j]; row n is +inf
    tail = np.full((n + 1, n), np.inf)
    tail[:n] = np.minimum.accumulate(d.T[::-1], axis=0)[::-1]
    best: list = [bound - 1e-12, None]

    def search(chosen: list[int], current: np.ndarray, start: int) -> None:
        left = k - len(chosen)
        stop = n - left + 1
        if left == 1:
            costs = np.minimum(current[:, None], d[:, start:stop]).sum(axis=0)
            j = int(np.argmin(costs))
            if costs[j] < best[0]:
                best[:] = [float(costs[j]), chosen + [start + j]]
            return
        for c in range(start, stop):
            nxt = np.minimum(current, d[:, c])
            if np.minimum(nxt, tail[c + 1]).sum() >= best[0]:
                continue
            search(chosen + [c], nxt, c + 1)

    search([], np.full(n, np.inf), 0)
    return None if best[1] is None else (best[1], best[0])


def k_medoids(
    dist: DistanceMatrix, k: int, max_iter: int = 1000, exact_budget: int = EXACT_BUDGET
) -> ClusterAssignment:
    """PAM: greedy BUILD followed by best-improvement SWAP until no swap lowers the cost.

    SWAP can stall in a local optimum. When ``C(n, k) <= exact_budget`` the
    PAM cost seeds a branch-and-bound search that returns the global optimum;
    pass ``exact_budget=0`` for plain PAM.
    """
    n = dist.n
    if k < 1:
        raise ConfigError(f"k must be positive, got {k}")
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of items n={n}")
    d = dist.values

    medoids = [int(np.argmin(d.sum(axis=0)))]
    nearest = d[:, medoids[0]].copy()
    while len(medoids) < k:
        gains = np.maximum(nearest[:, None] - d, 0.0).sum(axis=0)
        gains[medoids] = -np.inf
        c = int(np.argmax(gains))
        medoids.append(c)
        nearest = np.minimum(nearest, d[:, c])

    _, cost = _assign(d, medoids)
    history = [cost]
    for _ in range(max_iter):
        best = (cost, None, None)
        is_medoid = np.zeros(n, dtype=bool)
        is_medoid[medoids] = True
        for pos in range(k):
            others = medoids[:pos] + medoids[pos + 1 :]
            base = d[:, others].min(axis=1) if others else np.full(n, np.inf)
            # cost of replacing medoid `pos` with every candidate column at once
            costs = np.minimum(base[:, None], d).sum(axis=0)
            costs[is_medoid] = np.inf
            o = int(np.argmin(costs))
            if costs[o] < best[0] - 1e-12:
                best = (float(costs[o]), pos, o)
        if best[1] is None:
            break
        medoids[best[1]] = best[2]
        cost = best[0]
        history.append(cost)

    if k > 1 and math.comb(n, k) <= exact_budget:
        found = _exact_medoids(d, k, cost)
        if found is not None:
            medoids, cost = found
            history.append(cost)

    order = sorted(medoids)
    nearest, cost = _assign(d, order)
    labels = nearest.astype(np.int64)
    # medoids always belong to themselves
    for c, m in enumerate(order):
        labels[m] = c
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        raise EmptyInputError("k-medoids produced an empty cluster")
    return ClusterAssignment(labels, k, (), tuple(order), cost, tuple(history))


def medoid_cost(dist: DistanceMatrix | np.ndarray, medoids) -> float:
    d = dist.values if isinstance(dist, DistanceMatrix) else np.asarray(dist)
    return _assign(d, list(medoids))[1]

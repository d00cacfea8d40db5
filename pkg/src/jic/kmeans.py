"""Lloyd's k-means with k-means++ seeding, plus an exhaustive oracle.

Points are passed as an ``(n, d)`` array (one sample per row), which is the
transpose of the score matrices produced elsewhere in the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from .exceptions import DimensionError, InputError, SizeError

BRUTE_FORCE_LIMIT = 10**6


@dataclass(frozen=True)
class KmeansFit:
    labels: np.ndarray  # 1..K, renumbered by first occurrence
    centroids: np.ndarray  # (K, d), row k-1 belongs to label k
    wss: float
    restarts_used: int = 1
    best_restart_seed: int = 0
    n_iter: int = 0
    # wss after every Lloyd update of the winning restart
    wss_history: tuple = ()

    @property
    def K(self) -> int:
        return self.centroids.shape[0]


def _as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] < 1:
        raise DimensionError(f"points must be (n, d) with d >= 1, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("points contain non-finite values")
    return x


def canonical_labels(labels) -> np.ndarray:
    """Rename labels 1, 2, ... in order of first appearance."""
    labels = np.asarray(labels)
    mapping = {}
    out = np.empty(labels.shape, dtype=int)
    for j, l in enumerate(labels.tolist()):
        if l not in mapping:
            mapping[l] = len(mapping) + 1
        out[j] = mapping[l]
    return out


def _sq_dists(x, centroids):
    d = (x * x).sum(1)[:, None] - 2.0 * x @ centroids.T + (centroids * centroids).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _wss(x, labels0, centroids):
    return float(((x - centroids[labels0]) ** 2).sum())


def _centroids(x, labels0, K):
    counts = np.bincount(labels0, minlength=K)
    sums = np.zeros((K, x.shape[1]))
    np.add.at(sums, labels0, x)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = sums / counts[:, None]
    return c, counts


def kmeans_plusplus(x, K, rng) -> np.ndarray:
    """k-means++ seeding: each new centre drawn with probability ~ D(x)^2."""
    n = x.shape[0]
    first = int(rng.integers(n))
    centres = [x[first]]
    d2 = ((x - x[first]) ** 2).sum(1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0.0:
            # every point coincides with a centre; pick uniformly
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centres.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(1))
    return np.array(centres)


def _repair_empty(x, labels0, centroids, counts):
    """Move each empty centroid onto the point farthest from its own centroid."""
    for k in np.flatnonzero(counts == 0):
        resid = ((x - centroids[labels0]) ** 2).sum(1)
        # never strip a singleton cluster
        resid[counts[labels0] <= 1] = -1.0
        j = int(np.argmax(resid))
        counts[labels0[j]] -= 1
        labels0[j] = k
        counts[k] = 1
        centroids[k] = x[j]
    return labels0, counts


def lloyd(x, init_centroids, max_iter=300):
    """Run Lloyd iterations from given centroids.

    Assignment ties go to the lowest centroid index (``argmin``). Stops once
    the assignment no longer changes. Returns 0-based labels, centroids,
    the wss history and iteration count.
    """
    K = init_centroids.shape[0]
    centroids = np.array(init_centroids, dtype=np.float64)
    labels0 = np.argmin(_sq_dists(x, centroids), axis=1)
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        centroids, counts = _centroids(x, labels0, K)
        if np.any(counts == 0):
            labels0, counts = _repair_empty(x, labels0, centroids, counts)
            centroids, counts = _centroids(x, labels0, K)
        history.append(_wss(x, labels0, centroids))
        new = np.argmin(_sq_dists(x, centroids), axis=1)
        if np.array_equal(new, labels0):
            break
        labels0 = new
    else:
        centroids, counts = _centroids(x, labels0, K)
        if np.any(counts == 0):
            labels0, counts = _repair_empty(x, labels0, centroids, counts)
            centroids, _ = _centroids(x, labels0, K)
    return labels0, centroids, history, n_iter


def _finish(x, labels0, centroids, **kw) -> KmeansFit:
    labels = canonical_labels(labels0)
    # reorder centroids to follow the canonical labels
    order = [int(labels0[np.flatnonzero(labels == k)[0]]) for k in range(1, labels.max() + 1)]
    centroids = centroids[order]
    return KmeansFit(labels=labels, centroids=centroids, wss=_wss(x, labels - 1, centroids), **kw)


def restart_seeds(seed: int, restarts: int) -> list:
    """Independent integer seeds for each restart, derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(restarts)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _single_run(x, K, max_iter, run_seed):
    rng = np.random.default_rng(run_seed)
    init = kmeans_plusplus(x, K, rng)
    return lloyd(x, init, max_iter)


def kmeans(points, K: int, restarts: int = 30, max_iter: int = 300, seed: int = 0,
           executor=None) -> KmeansFit:
    """Best of ``restarts`` k-means++/Lloyd runs.

    Parameters
    ----------
    points : array_like, shape (n, d) or (n,)
    K : int
        Number of clusters, ``1 <= K <= n``.
    restarts : int
        Independent seeded runs; the lowest wss wins, ties to the earliest.
    max_iter : int
        Cap on Lloyd iterations per run.
    seed : int
        Root of the per-restart seed streams.
    executor : concurrent.futures.Executor, optional
        Runs restarts concurrently when given; the result is unchanged.

    Returns
    -------
    KmeansFit
    """
    x = _as_points(points)
    n = x.shape[0]
    K = int(K)
    if K < 1 or K > n:
        raise SizeError(f"K={K} must lie in [1, n={n}]")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if K == 1:
        c = x.mean(0, keepdims=True)
        return KmeansFit(np.ones(n, dtype=int), c, _wss(x, np.zeros(n, int), c),
                         restarts_used=restarts, best_restart_seed=int(seed))
    seeds = restart_seeds(seed, restarts)
    if executor is None:
        runs = [_single_run(x, K, max_iter, s) for s in seeds]
    else:
        runs = list(executor.map(lambda s: _single_run(x, K, max_iter, s), seeds))
    best = None
    for i, (labels0, centroids, history, n_iter) in enumerate(runs):
        w = _wss(x, labels0, centroids)
        if best is None or w < best[0]:
            best = (w, i, labels0, centroids, history, n_iter)
    _, i, labels0, centroids, history, n_iter = best
    return _finish(x, labels0, centroids, restarts_used=restarts,
                   best_restart_seed=seeds[i], n_iter=n_iter, wss_history=tuple(history))


def stirling2(n: int, k: int) -> int:
    """Number of partitions of ``n`` items into exactly ``k`` nonempty sets."""
    return sum((-1) ** i * comb(k, i) * (k - i) ** n for i in range(k + 1)) // factorial(k)


def _partitions(n, K):
    """Restricted growth strings of length n using exactly K symbols."""
    a = [0] * n

    def rec(i, used):
        if n - i < K - used:
            return
        if i == n:
            if used == K:
                yield a
            return
        for v in range(min(used + 1, K)):
            a[i] = v
            yield from rec(i + 1, max(used, v + 1))

    yield from rec(1, 1)


def brute_force_kmeans(points, K: int) -> KmeansFit:
    """Global k-means optimum by enumerating every partition into K sets."""
    x = _as_points(points)
    n = x.shape[0]
    K = int(K)
    if K < 1 or K > n:
        raise SizeError(f"K={K} must lie in [1, n={n}]")
    total = sum(stirling2(n, k) for k in range(1, K + 1))
    if total > BRUTE_FORCE_LIMIT:
        raise SizeError(f"{total} partitions exceed the limit of {BRUTE_FORCE_LIMIT}")
    sq = (x * x).sum(1)
    best_w, best = np.inf, None
    for a in _partitions(n, K):
        lab = np.array(a)
        counts = np.bincount(lab, minlength=K)
        sums = np.zeros((K, x.shape[1]))
        np.add.at(sums, lab, x)
        w = sq.sum() - ((sums * sums).sum(1) / counts).sum()
        if w < best_w:
            best_w, best = w, lab.copy()
    centroids, _ = _centroids(x, best, K)
    return _finish(x, best, centroids, restarts_used=0, best_restart_seed=0)


def indicator_matrix(labels, K: int) -> np.ndarray:
    """Scaled cluster indicators: row k is ``n_k^{-1/2}`` on cluster k+1.

    Only clusters 1..K-1 get a row; the last cluster is the all-zero pattern.
    """
    labels = np.asarray(labels, dtype=int)
    if labels.ndim != 1:
        raise DimensionError("labels must be a vector")
    if labels.size and (labels.min() < 1 or labels.max() > K):
        raise InputError(f"labels must lie in 1..{K}")
    counts = np.bincount(labels, minlength=K + 1)[1:]
    missing = [k + 1 for k in range(K) if counts[k] == 0]
    if missing:
        raise InputError(f"clusters {missing} have no members")
    out = np.zeros((K - 1, labels.size))
    for k in range(K - 1):
        out[k, labels == k + 1] = counts[k] ** -0.5
    return out

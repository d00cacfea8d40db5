"""Joint and individual low-rank decomposition of a BlockSet, and clustering.

Every block is modelled as ``X_m = J_m + A_m + R_m``. ``J = W @ Z`` is a
rank-``r`` joint term on the concatenated matrix, ``A_m = V_m @ Z_m`` is a
rank-``r_m`` term specific to block ``m``, and the score row spaces satisfy
``Z @ Z_m.T = 0``. The fit alternates exact least-squares updates of the
joint and individual terms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .blocks import BlockSet, block_offsets, concat_blocks, split_rows, truncated_svd
from .exceptions import DimensionError, RankError
from .io import read_matrix, write_json, write_matrix
from .kmeans import KmeansFit, kmeans

UPDATE_MODES = ("original", "cumulative")


@dataclass(frozen=True)
class Ranks:
    r: int
    r_m: tuple

    def __post_init__(self):
        object.__setattr__(self, "r", int(self.r))
        object.__setattr__(self, "r_m", tuple(int(v) for v in self.r_m))
        if self.r < 0 or any(v < 0 for v in self.r_m):
            raise RankError(f"ranks must be non-negative, got r={self.r}, r_m={self.r_m}")

    @classmethod
    def from_cluster_counts(cls, K: int, K_m: Sequence[int]) -> "Ranks":
        """``K`` clusters need ``K - 1`` score dimensions."""
        return cls(K - 1, tuple(k - 1 for k in K_m))

    def validate(self, bs: BlockSet) -> None:
        n = bs.n_samples
        p = sum(bs.sizes)
        if len(self.r_m) != len(bs):
            raise RankError(f"{len(self.r_m)} individual ranks for {len(bs)} blocks")
        if self.r > min(p, n):
            raise RankError(f"joint rank {self.r} exceeds min(p, n) = {min(p, n)}")
        for m, (rm, pm) in enumerate(zip(self.r_m, bs.sizes)):
            if rm > min(pm, n):
                raise RankError(f"rank {rm} of block {m + 1} exceeds min(p_m, n) = {min(pm, n)}")
        if self.r + max(self.r_m, default=0) > n - 1:
            raise RankError(
                f"r + max(r_m) = {self.r + max(self.r_m, default=0)} exceeds n - 1 = {n - 1}"
            )


@dataclass(frozen=True)
class Decomposition:
    joint_scores: np.ndarray  # Z, (r, n)
    joint_loadings: np.ndarray  # W, (p, r); joint term is W @ Z
    individual_scores: tuple  # Z_m, (r_m, n)
    individual_loadings: tuple  # V_m, (p_m, r_m)
    residual_sq: float
    history: tuple
    iterations: int
    converged: bool
    ranks: Ranks
    block_sizes: tuple
    tol: float = 1e-8
    max_iter: int = 500
    orthogonalize: bool = True
    update: str = "original"
    # block index -> numerical rank used when a residual was rank deficient
    rank_truncations: dict = field(default_factory=dict)

    @property
    def n_blocks(self) -> int:
        return len(self.block_sizes)

    @property
    def r(self) -> int:
        return self.joint_scores.shape[0]

    @property
    def r_m(self) -> list:
        return [z.shape[0] for z in self.individual_scores]

    def joint_loadings_by_block(self) -> list:
        return split_rows(self.joint_loadings, self.block_sizes)

    def joint_block(self, m: int) -> np.ndarray:
        o = block_offsets(self.block_sizes)
        return self.joint_loadings[o[m]:o[m + 1]] @ self.joint_scores

    def joint(self) -> np.ndarray:
        return self.joint_loadings @ self.joint_scores

    def individual(self, m: int) -> np.ndarray:
        return self.individual_loadings[m] @ self.individual_scores[m]

    def cross_orthogonality(self) -> float:
        """max over blocks of ``max |Z @ Z_m.T|`` (0 when either side is empty)."""
        vals = [np.abs(self.joint_scores @ zm.T).max(initial=0.0) for zm in self.individual_scores]
        return float(max(vals, default=0.0))

    def save(self, directory, extra: Optional[dict] = None) -> None:
        """Write factors as CSV and a JSON manifest into ``directory``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_matrix(d / "Z.csv", self.joint_scores)
        write_matrix(d / "W.csv", self.joint_loadings)
        for m in range(self.n_blocks):
            write_matrix(d / f"Z_{m + 1}.csv", self.individual_scores[m])
            write_matrix(d / f"V_{m + 1}.csv", self.individual_loadings[m])
        write_matrix(d / "history.csv", np.asarray(self.history)[:, None], header=["residual_sq"])
        manifest = {
            "ranks": {"r": self.ranks.r, "r_m": list(self.ranks.r_m)},
            "effective_ranks": {"r": self.r, "r_m": self.r_m},
            "block_sizes": list(self.block_sizes),
            "n_samples": int(self.joint_scores.shape[1]),
            "tol": self.tol,
            "max_iter": self.max_iter,
            "orthogonalize": self.orthogonalize,
            "update": self.update,
            "iterations": self.iterations,
            "converged": self.converged,
            "residual_sq": self.residual_sq,
            "rank_truncations": {str(k): v for k, v in self.rank_truncations.items()},
        }
        if extra:
            manifest.update(extra)
        write_json(d / "decomposition.json", manifest)

    @classmethod
    def load(cls, directory) -> "Decomposition":
        d = Path(directory)
        with open(d / "decomposition.json") as fh:
            man = json.load(fh)
        sizes = tuple(man["block_sizes"])
        eff = man["effective_ranks"]
        n = man["n_samples"]

        def load(name, rows, cols):
            return read_matrix(d / name).reshape(rows, cols)

        Z = load("Z.csv", eff["r"], n)
        W = load("W.csv", sum(sizes), eff["r"])
        Zm = tuple(load(f"Z_{m + 1}.csv", eff["r_m"][m], n) for m in range(len(sizes)))
        Vm = tuple(load(f"V_{m + 1}.csv", sizes[m], eff["r_m"][m]) for m in range(len(sizes)))
        hist = tuple(read_matrix(d / "history.csv").ravel().tolist())
        return cls(
            joint_scores=Z, joint_loadings=W, individual_scores=Zm, individual_loadings=Vm,
            residual_sq=man["residual_sq"], history=hist, iterations=man["iterations"],
            converged=man["converged"], ranks=Ranks(man["ranks"]["r"], man["ranks"]["r_m"]),
            block_sizes=sizes, tol=man["tol"], max_iter=man["max_iter"],
            orthogonalize=man["orthogonalize"], update=man["update"],
            rank_truncations={int(k): v for k, v in man["rank_truncations"].items()},
        )


def _numerical_rank(s, ref_norm, n_dim) -> int:
    if ref_norm == 0.0:
        return 0
    tol = max(n_dim, 1) * np.finfo(float).eps * ref_norm
    return int(np.sum(s > tol))


def _low_rank(x, r, ref_norm):
    """Rank-``r`` SVD fit of ``x`` truncated to its numerical rank."""
    svd = truncated_svd(x, r)
    keep = _numerical_rank(svd.s, ref_norm, max(x.shape))
    if keep < r:
        svd = truncated_svd(x, keep)
    return svd, keep


def _project_out(x, basis):
    """Remove the row space spanned by orthonormal ``basis`` rows from ``x``."""
    if basis.shape[0] == 0:
        return x
    return x - (x @ basis.T) @ basis


def _orthonormal_rows(rows, n):
    """Orthonormal basis (rows) of the span of ``rows``."""
    if len(rows) == 0 or sum(r.shape[0] for r in rows) == 0:
        return np.zeros((0, n))
    stacked = np.vstack([r for r in rows if r.shape[0]])
    q, s, vt = np.linalg.svd(stacked, full_matrices=False)
    keep = s > max(stacked.shape) * np.finfo(float).eps * max(s[0], 1.0)
    return vt[keep]


def reconstruction_error(bs, d: Decomposition) -> float:
    """Sum over blocks of ``||X_m - W_m Z - V_m Z_m||_F^2``."""
    arrays = bs.arrays() if isinstance(bs, BlockSet) else [np.asarray(a) for a in bs]
    if tuple(a.shape[0] for a in arrays) != tuple(d.block_sizes):
        raise DimensionError(
            f"block sizes {[a.shape[0] for a in arrays]} do not match {list(d.block_sizes)}"
        )
    n = arrays[0].shape[1]
    if d.joint_scores.shape[1] not in (0, n) and d.r > 0:
        raise DimensionError(f"scores have {d.joint_scores.shape[1]} samples, data has {n}")
    total = 0.0
    for m, x in enumerate(arrays):
        res = x - d.joint_block(m) - d.individual(m)
        total += float(np.sum(res * res))
    return total


def jic_decompose(bs: BlockSet, ranks: Ranks, tol: float = 1e-8, max_iter: int = 500,
                  orthogonalize: bool = True, update: str = "original",
                  executor=None) -> Decomposition:
    """Alternate joint and individual low-rank fits until ``||R||^2`` settles.

    Each iteration

    1. fits the joint term as the rank-``r`` SVD of the concatenated matrix of
       ``X_m - A_m`` (restricted to the row space orthogonal to all current
       individual scores when ``orthogonalize``);
    2. fits each ``A_m`` as the rank-``r_m`` SVD of ``X_m - J_m`` after
       projecting out the joint score space (``orthogonalize``), i.e. the
       constrained least-squares optimum.

    With ``orthogonalize`` both steps are exact minimisers over the feasible
    set, so the recorded ``||R||^2`` sequence cannot increase. The loop stops
    when the relative change falls below ``tol``; hitting ``max_iter`` returns
    the current state with ``converged=False``.

    ``update="cumulative"`` instead carries the working matrix forward as
    ``X^(l+1)_m = X^(l)_m - A_m`` before the next joint step; it has no
    monotonicity guarantee and is kept for comparisons.

    The input blocks are used as given, so center or scale them first.
    """
    if update not in UPDATE_MODES:
        raise ValueError(f"update must be one of {UPDATE_MODES}, got {update!r}")
    ranks.validate(bs)
    X = bs.arrays()
    sizes = tuple(bs.sizes)
    n = bs.n_samples
    M = len(X)
    norms = [float(np.linalg.norm(x)) for x in X]
    total_norm = float(np.sqrt(sum(v * v for v in norms)))

    Zm = [np.zeros((0, n)) for _ in range(M)]
    Vm = [np.zeros((p, 0)) for p in sizes]
    A = [np.zeros_like(x) for x in X]
    working = [x for x in X]
    truncations = {}
    history = []
    converged = False
    W = np.zeros((sum(sizes), 0))
    Z = np.zeros((0, n))
    no_individual = all(v == 0 for v in ranks.r_m)

    def fit_individual(m):
        resid = X[m] - J_blocks[m] if update == "original" else working[m] - J_blocks[m]
        if orthogonalize:
            resid = _project_out(resid, Z)
        svd, keep = _low_rank(resid, ranks.r_m[m], norms[m])
        return svd, keep

    it = 0
    for it in range(1, max_iter + 1):
        base = [x - a for x, a in zip(X, A)] if update == "original" else working
        joint_in = concat_blocks(base)
        if orthogonalize:
            joint_in = _project_out(joint_in, _orthonormal_rows(Zm, n))
        jsvd, keep = _low_rank(joint_in, ranks.r, total_norm)
        if keep < ranks.r:
            truncations["joint"] = keep
        Z = jsvd.vt
        W = jsvd.u * jsvd.s
        J_blocks = [W_m @ Z for W_m in split_rows(W, sizes)]

        if executor is None or M == 1:
            fits = [fit_individual(m) for m in range(M)]
        else:
            fits = list(executor.map(fit_individual, range(M)))
        for m, (svd, keep) in enumerate(fits):
            if keep < ranks.r_m[m]:
                truncations[m] = keep
            Zm[m] = svd.vt
            Vm[m] = svd.u * svd.s
            A[m] = Vm[m] @ Zm[m]
        if update == "cumulative":
            working = [w - a for w, a in zip(working, A)]

        rsq = float(sum(np.sum((x - j - a) ** 2) for x, j, a in zip(X, J_blocks, A)))
        history.append(rsq)
        if no_individual or rsq <= (np.finfo(float).eps * total_norm) ** 2:
            # a single SVD is already the global optimum
            converged = True
            break
        if len(history) > 1:
            prev = history[-2]
            if abs(prev - rsq) <= tol * max(rsq, np.finfo(float).tiny):
                converged = True
                break

    return Decomposition(
        joint_scores=Z, joint_loadings=W, individual_scores=tuple(Zm),
        individual_loadings=tuple(Vm), residual_sq=history[-1], history=tuple(history),
        iterations=it, converged=converged, ranks=ranks, block_sizes=sizes, tol=tol,
        max_iter=max_iter, orthogonalize=orthogonalize, update=update,
        rank_truncations=truncations,
    )


@dataclass(frozen=True)
class ClusterResult:
    joint_labels: np.ndarray
    individual_labels: tuple
    joint_fit: Optional[KmeansFit]
    individual_fits: tuple

    def diagnostics(self) -> dict:
        def summary(fit):
            if fit is None:
                return {"K": 1, "wss": None, "restarts": 0}
            return {"K": fit.K, "wss": fit.wss, "restarts": fit.restarts_used,
                    "best_restart_seed": fit.best_restart_seed}

        return {"joint": summary(self.joint_fit),
                "individual": [summary(f) for f in self.individual_fits]}


def block_seed(seed: int, m: int) -> int:
    """Seed for the individual clustering of block ``m`` (0-based)."""
    ss = np.random.SeedSequence([int(seed), m + 1])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _cluster_scores(scores, restarts, seed, max_iter):
    n = scores.shape[1]
    if scores.shape[0] == 0:
        return np.ones(n, dtype=int), None
    fit = kmeans(scores.T, scores.shape[0] + 1, restarts=restarts, max_iter=max_iter, seed=seed)
    return fit.labels, fit


def cluster_decomposition(d: Decomposition, restarts: int = 30, seed: int = 0,
                          max_iter: int = 300) -> ClusterResult:
    """k-means on the score columns: ``r + 1`` joint and ``r_m + 1`` per-block groups.

    The joint clustering uses ``seed`` directly, so with one block and no
    individual structure the labels match ``kmeans(pc_scores(X, r).T, r + 1,
    seed=seed)``. Block ``m`` uses :func:`block_seed`.
    """
    jl, jf = _cluster_scores(d.joint_scores, restarts, seed, max_iter)
    ils, ifs = [], []
    for m, zm in enumerate(d.individual_scores):
        l, f = _cluster_scores(zm, restarts, block_seed(seed, m), max_iter)
        ils.append(l)
        ifs.append(f)
    return ClusterResult(jl, tuple(ils), jf, tuple(ifs))

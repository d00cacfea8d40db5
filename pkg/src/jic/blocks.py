"""Block containers, preprocessing and the truncated SVD used throughout.

All matrices are oriented variables x samples: a block with ``p_m``
variables measured on ``n`` samples is stored as a ``(p_m, n)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .exceptions import DegenerateInputError, DimensionError, InputError, RankError

SCALE_NORMS = ("frobenius", "total_variance")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Block:
    """One data type: a ``(p_m, n)`` matrix plus the norm divided out of it."""

    data: np.ndarray
    label: str = "block"
    scale_factor: float = 1.0

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2:
            raise DimensionError(f"block {self.label!r} must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 2:
            raise DimensionError(
                f"block {self.label!r} needs >= 1 variable and >= 2 samples, got {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise InputError(f"block {self.label!r} contains non-finite entries")
        if not self.scale_factor > 0:
            raise InputError(f"scale_factor must be positive, got {self.scale_factor}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "scale_factor", float(self.scale_factor))

    @property
    def shape(self):
        return self.data.shape

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def original(self) -> np.ndarray:
        """Undo scaling (not centering)."""
        return self.data * self.scale_factor


@dataclass(frozen=True)
class BlockSet:
    """Ordered blocks sharing one sample axis."""

    blocks: tuple
    sample_ids: Optional[tuple] = None

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if len(blocks) < 1:
            raise DimensionError("a BlockSet needs at least one block")
        n = blocks[0].n_samples
        for b in blocks[1:]:
            if b.n_samples != n:
                raise DimensionError(
                    f"block {b.label!r} has {b.n_samples} samples, expected {n}"
                )
        object.__setattr__(self, "blocks", blocks)
        if self.sample_ids is not None:
            ids = tuple(str(s) for s in self.sample_ids)
            if len(ids) != n:
                raise DimensionError(f"{len(ids)} sample ids given for {n} samples")
            object.__setattr__(self, "sample_ids", ids)

    @classmethod
    def from_arrays(cls, arrays: Sequence, labels=None, sample_ids=None) -> "BlockSet":
        if labels is None:
            labels = [f"X{m + 1}" for m in range(len(arrays))]
        return cls(tuple(Block(a, label=l) for a, l in zip(arrays, labels)), sample_ids)

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __getitem__(self, m):
        return self.blocks[m]

    @property
    def n_samples(self) -> int:
        return self.blocks[0].n_samples

    @property
    def sizes(self) -> list:
        return [b.shape[0] for b in self.blocks]

    @property
    def offsets(self) -> list:
        return block_offsets(self.sizes)

    @property
    def labels(self) -> list:
        return [b.label for b in self.blocks]

    def arrays(self) -> list:
        return [b.data for b in self.blocks]


def block_offsets(sizes) -> list:
    """Row offset of each block plus the total, e.g. [0, p1, p1+p2, ...]."""
    return [0] + list(np.cumsum(sizes, dtype=int))


def concat_blocks(bs) -> np.ndarray:
    """Stack the blocks of ``bs`` row-wise into one ``(sum p_m, n)`` matrix."""
    arrays = bs.arrays() if isinstance(bs, BlockSet) else [np.asarray(a) for a in bs]
    ns = {a.shape[1] for a in arrays}
    if len(ns) != 1:
        raise DimensionError(f"blocks have mismatched column counts {sorted(ns)}")
    return np.vstack(arrays)


def split_rows(x: np.ndarray, sizes) -> list:
    """Inverse of :func:`concat_blocks` for given block row counts."""
    off = block_offsets(sizes)
    if off[-1] != x.shape[0]:
        raise DimensionError(f"row sizes {list(sizes)} do not sum to {x.shape[0]}")
    return [x[off[m]:off[m + 1]] for m in range(len(sizes))]


def center_block(b: Block) -> Block:
    """Subtract each variable's mean across samples."""
    data = b.data - b.data.mean(axis=1, keepdims=True)
    return replace(b, data=data)


def scale_block(b: Block, norm: str = "frobenius") -> Block:
    """Divide ``b`` by its chosen norm.

    ``frobenius`` uses the Frobenius norm of the data as stored;
    ``total_variance`` uses the Frobenius norm after row-centering (the data
    itself is not centered here). ``scale_factor`` accumulates the divisor so
    that ``data * scale_factor`` is the pre-scaling matrix.
    """
    if norm == "frobenius":
        divisor = float(np.linalg.norm(b.data))
    elif norm == "total_variance":
        divisor = float(np.linalg.norm(b.data - b.data.mean(axis=1, keepdims=True)))
    else:
        raise ValueError(f"unknown norm {norm!r}; expected one of {SCALE_NORMS}")
    if divisor == 0.0:
        raise DegenerateInputError(f"block {b.label!r} has zero {norm} norm")
    return replace(b, data=b.data / divisor, scale_factor=b.scale_factor * divisor)


def preprocess(bs: BlockSet, center: bool = True, scale: Optional[str] = "frobenius") -> BlockSet:
    """Row-center and/or scale every block; ``scale=None`` leaves norms alone."""
    out = []
    for b in bs:
        if center:
            b = center_block(b)
        if scale is not None:
            b = scale_block(b, scale)
        out.append(b)
    return BlockSet(tuple(out), bs.sample_ids)


@dataclass(frozen=True)
class TruncatedSvd:
    """Leading ``r`` singular triplets: ``x ~ u @ diag(s) @ vt``."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    @property
    def rank(self) -> int:
        return self.s.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.vt


def _check_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("matrix contains non-finite entries")
    return x


def truncated_svd(x, r: int) -> TruncatedSvd:
    """Best rank-``r`` approximation of ``x`` in Frobenius norm.

    Each pair ``(u_i, v_i)`` is sign-flipped so that the largest-magnitude
    entry of ``v_i`` is positive, which makes the factors reproducible.
    ``r = 0`` returns empty factors.
    """
    x = _check_matrix(x)
    p, n = x.shape
    r = int(r)
    if r < 0 or r > min(p, n):
        raise RankError(f"rank {r} outside [0, {min(p, n)}] for a {p}x{n} matrix")
    if r == 0:
        return TruncatedSvd(np.zeros((p, 0)), np.zeros(0), np.zeros((0, n)))
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    u, s, vt = u[:, :r].copy(), s[:r].copy(), vt[:r].copy()
    idx = np.argmax(np.abs(vt), axis=1)
    signs = np.sign(vt[np.arange(r), idx])
    signs[signs == 0] = 1.0
    u *= signs
    vt *= signs[:, None]
    return TruncatedSvd(u, s, vt)


def pc_scores(x, r: int) -> np.ndarray:
    """Standardized principal component scores, one component per row.

    Returns the ``(r, n)`` right singular vectors, so ``Z @ Z.T = I_r``.
    """
    return truncated_svd(x, r).vt

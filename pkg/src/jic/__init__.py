"""Joint and individual clustering of multi-block data."""

__version__ = "0.1.0"

from .blocks import Block, BlockSet, concat_blocks, pc_scores, preprocess, truncated_svd
from .decomposition import (
    ClusterResult,
    Decomposition,
    Ranks,
    cluster_decomposition,
    jic_decompose,
    reconstruction_error,
)
from .exceptions import (
    DegenerateInputError,
    DimensionError,
    InconsistentSelectionError,
    InputError,
    JICError,
    RankError,
    SizeError,
)
from .io import read_block, read_blockset
from .kmeans import KmeansFit, brute_force_kmeans, kmeans
from .selection import (
    RankSelection,
    ScanRule,
    anderson_darling,
    cluster_numbers,
    select_cluster_numbers,
)
from .simulation import SimConfig, generate, precision, run_monte_carlo

__all__ = [
    "Block", "BlockSet", "ClusterResult", "Decomposition", "DegenerateInputError",
    "DimensionError", "InconsistentSelectionError", "InputError", "JICError", "KmeansFit",
    "RankError", "RankSelection", "Ranks", "ScanRule", "SimConfig", "SizeError",
    "anderson_darling", "brute_force_kmeans", "cluster_decomposition", "cluster_numbers",
    "concat_blocks", "generate", "jic_decompose", "kmeans", "pc_scores", "precision",
    "preprocess", "read_block", "read_blockset", "reconstruction_error", "run_monte_carlo",
    "select_cluster_numbers", "truncated_svd",
]

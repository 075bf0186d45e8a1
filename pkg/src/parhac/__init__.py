"""Approximate hierarchical agglomerative clustering for centroid and Ward's linkage."""
from .core import (Cluster, Dendrogram, Instance, LinkageKind, MergeRecord, MergeTrace,
                   ParhacError, RunStats, aspect_ratio, dendrogram_height, normalize_scale)
from .hac_parallel import run_parallel
from .hac_seq import Policy, run_c_approx, run_exact
from .verify import replay_verify

__all__ = ["Cluster", "Dendrogram", "Instance", "LinkageKind", "MergeRecord", "MergeTrace",
           "ParhacError", "Policy", "RunStats", "aspect_ratio", "dendrogram_height",
           "normalize_scale", "replay_verify", "run_c_approx", "run_exact", "run_parallel"]

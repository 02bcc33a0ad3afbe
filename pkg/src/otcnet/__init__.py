"""Reconstruct and analyse counterparty-risk networks from quarterly top-25 derivative rankings."""

from .activity import aggregate, distribution_fit, gini, rank_quarter, skewness
from .correlate import correlation_matrix, pearson_full, pearson_pairwise, split_at
from .ingest import AliasTable, Panel, build_panel, load_panel, normalize_name
from .kcore import decompose, topological_ranking, weighted_degree
from .network import aggregate_links, binary_links, rank_weighted_links, temporal_network

__version__ = "0.1.0"

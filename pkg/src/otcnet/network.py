"""Per-quarter co-occurrence networks and their time aggregation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import Panel
from .quarters import compact

MODES = ("binary", "rank")


def binary_links(ranks: Sequence[int], top_n: int = 25) -> np.ndarray:
    """``l_ij = 1`` when both ranks lie in ``1..top_n`` and ``i != j``."""
    r = np.asarray(ranks, dtype=np.int64)
    on = (r >= 1) & (r <= top_n)
    links = np.outer(on, on).astype(float)
    np.fill_diagonal(links, 0.0)
    return links


def rank_weighted_links(ranks: Sequence[int], top_n: int = 25) -> np.ndarray:
    """``l_ij = min(1/r_i, 1/r_j) = 1/max(r_i, r_j)`` for co-ranked pairs."""
    r = np.asarray(ranks, dtype=np.int64)
    on = (r >= 1) & (r <= top_n)
    worst = np.maximum.outer(r, r).astype(float)
    links = np.zeros(worst.shape)
    mask = np.outer(on, on)
    links[mask] = 1.0 / worst[mask]
    np.fill_diagonal(links, 0.0)
    return links


@dataclass(frozen=True)
class TemporalNetwork:
    names: tuple[str, ...]
    quarters: tuple[str, ...]
    links: np.ndarray  # T x N x N
    mode: str

    @property
    def T(self) -> int:
        return len(self.quarters)

    @property
    def N(self) -> int:
        return len(self.names)


def temporal_network(panel: Panel, mode: str = "rank") -> TemporalNetwork:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    build = binary_links if mode == "binary" else rank_weighted_links
    ranks = panel.ranks
    links = np.stack([build(ranks[:, t]) for t in range(panel.T)]) if panel.T else \
        np.zeros((0, panel.N, panel.N))
    links.setflags(write=False)
    return TemporalNetwork(panel.names, panel.quarters, links, mode)


@dataclass(frozen=True)
class AggregatedGraph:
    names: tuple[str, ...]
    w: np.ndarray
    mode: str
    T: int

    @property
    def importance(self) -> np.ndarray:
        """``W_i = sum_j w_ij``."""
        return self.w.sum(axis=1)

    @property
    def normalized_importance(self) -> np.ndarray:
        W = self.importance
        total = W.sum()
        return W / total if total > 0 else np.zeros_like(W)


def aggregate_links(temporal: TemporalNetwork) -> AggregatedGraph:
    """Time average ``w_ij = (1/T) sum_t l_ij(t)`` over all declared quarters."""
    if temporal.T < 1:
        raise ValueError("cannot aggregate an empty network")
    total = np.zeros((temporal.N, temporal.N))
    for t in range(temporal.T):  # fixed summation order keeps results bit-stable
        total += temporal.links[t]
    return AggregatedGraph(temporal.names, total / temporal.T, temporal.mode, temporal.T)


def period_subnetwork(temporal: TemporalNetwork, start: int | str, end: int | str) -> TemporalNetwork:
    """Restrict to quarters ``start..end`` (1-based indices or labels, inclusive)."""
    if isinstance(start, str):
        start = temporal.quarters.index(start) + 1
    if isinstance(end, str):
        end = temporal.quarters.index(end) + 1
    if end < start:
        raise ValueError(f"empty period {start}..{end}")
    if not 1 <= start <= end <= temporal.T:
        raise ValueError(f"period {start}..{end} outside 1..{temporal.T}")
    return TemporalNetwork(temporal.names, temporal.quarters[start - 1:end],
                           temporal.links[start - 1:end], temporal.mode)


# --------------------------------------------------------------------------
# frames


def frame_document(temporal: TemporalNetwork, t: int, ranks: np.ndarray | None = None,
                   correlations: np.ndarray | None = None) -> dict:
    """Nodes and links of quarter ``t`` (1-based).

    Nodes are the institutions with at least one link (or a positive rank
    when ``ranks`` is given); importance is the quarterly strength.
    """
    L = temporal.links[t - 1]
    strength = L.sum(axis=1)
    if ranks is not None:
        present = [i for i in range(temporal.N) if ranks[i] > 0]
    else:
        present = [i for i in range(temporal.N) if strength[i] > 0]
    total = float(sum(strength[i] for i in present))
    nodes = []
    for i in present:
        node = {"id": i, "name": temporal.names[i],
                "importance": float(strength[i]),
                "normalized_importance": float(strength[i] / total) if total > 0 else 0.0}
        if ranks is not None:
            node["rank"] = int(ranks[i])
        nodes.append(node)
    links = []
    for a, i in enumerate(present):
        for j in present[a + 1:]:
            if L[i, j] > 0:
                link = {"source": i, "target": j, "weight": float(L[i, j])}
                if correlations is not None:
                    c = correlations[i, j]
                    link["correlation"] = None if np.isnan(c) else float(c)
                links.append(link)
    return {"quarter": temporal.quarters[t - 1], "mode": temporal.mode,
            "nodes": nodes, "links": links}


def emit_frames(temporal: TemporalNetwork, out_dir, ranks: np.ndarray | None = None,
                correlations: np.ndarray | None = None) -> list[Path]:
    """Write ``frame_<YYYYQn>.json`` for every quarter; returns the paths.

    ``ranks`` is the ``N x T`` rank matrix; ``correlations`` an optional
    ``N x N`` matrix attached to each link as a colour value.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in range(1, temporal.T + 1):
        doc = frame_document(temporal, t, None if ranks is None else ranks[:, t - 1], correlations)
        path = out / f"frame_{compact(temporal.quarters[t - 1])}.json"
        path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
        paths.append(path)
    return paths

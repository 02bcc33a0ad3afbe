"""Weighted k-core decomposition and the topology-based ranking."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .activity import AggregateRanking
from .network import AggregatedGraph

SCHEDULES = ("distinct", "integer")


def _matrix(graph) -> np.ndarray:
    w = graph.w if isinstance(graph, AggregatedGraph) else np.asarray(graph, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("weight matrix must be square")
    return w


def weighted_degree(graph, node: int, alpha: float = 0.0, beta: float = 1.0,
                    alive: Sequence[bool] | None = None) -> float:
    """``[k^alpha (sum_j w_ij)^beta]^(1/(alpha+beta))`` over the alive neighbourhood."""
    if alpha + beta == 0:
        raise ValueError("alpha + beta must be nonzero")
    w = _matrix(graph)
    n = w.shape[0]
    if not 0 <= node < n:
        raise IndexError(node)
    if alive is None:
        alive = [True] * n
    row = [w[node, j] for j in range(n) if j != node and alive[j] and w[node, j] > 0]
    k = float(len(row))
    s = math.fsum(row)
    return (k**alpha * s**beta) ** (1.0 / (alpha + beta))


@dataclass(frozen=True)
class RemovalStep:
    wave: int
    threshold: float
    node: int
    khat: float


@dataclass(frozen=True)
class CoreDecomposition:
    names: tuple[str, ...]
    core: np.ndarray
    alpha: float
    beta: float
    schedule: str
    steps: tuple[RemovalStep, ...]

    @property
    def normalized(self) -> np.ndarray:
        top = self.core.max() if self.core.size else 0.0
        return self.core / top if top > 0 else np.zeros_like(self.core)


def decompose(graph, alpha: float = 0.0, beta: float = 1.0, schedule: str = "distinct",
              names: Sequence[str] | None = None) -> CoreDecomposition:
    """Recursive pruning by weighted degree.

    For each threshold ``K`` in ascending order, nodes with ``khat <= K`` are
    removed in waves (``khat`` recomputed after every wave) until none is
    left at or below ``K``; removed nodes get core ``K``.  With the
    ``"distinct"`` schedule the next threshold is the smallest remaining
    ``khat``; with ``"integer"`` it is the next integer ``K = 1, 2, ...``
    that removes anything.
    """
    if alpha + beta == 0:
        raise ValueError("alpha + beta must be nonzero")
    if schedule not in SCHEDULES:
        raise ValueError(f"schedule must be one of {SCHEDULES}")
    w = _matrix(graph)
    n = w.shape[0]
    if n == 0:
        raise ValueError("empty graph")
    if names is None:
        names = graph.names if isinstance(graph, AggregatedGraph) else tuple(str(i) for i in range(n))

    alive = [True] * n
    core = np.zeros(n)
    steps: list[RemovalStep] = []
    K = -math.inf
    wave = 0
    while any(alive):
        khat = {i: weighted_degree(w, i, alpha, beta, alive) for i in range(n) if alive[i]}
        lowest = min(khat.values())
        if schedule == "distinct":
            K = max(K, lowest)
        else:
            K = max(K, 1.0, float(math.ceil(lowest)))
        while True:
            doomed = sorted(i for i, k in khat.items() if k <= K)
            if not doomed:
                break
            wave += 1
            for i in doomed:
                steps.append(RemovalStep(wave, K, i, khat[i]))
                core[i] = K
            for i in doomed:
                alive[i] = False
            khat = {i: weighted_degree(w, i, alpha, beta, alive) for i in range(n) if alive[i]}
    return CoreDecomposition(tuple(names), core, float(alpha), float(beta), schedule, tuple(steps))


def topological_ranking(decomp: CoreDecomposition, graph: AggregatedGraph | None = None) -> list[int]:
    """Node indices by descending core, then descending importance, then name."""
    W = graph.importance if graph is not None else np.zeros(len(decomp.names))
    return sorted(range(len(decomp.names)),
                  key=lambda i: (-decomp.core[i], -W[i], decomp.names[i]))


@dataclass
class CoreComparison:
    names: tuple[str, ...]
    core: np.ndarray
    normalized: np.ndarray
    topo_rank: np.ndarray
    activity_rank: np.ndarray
    displacement: np.ndarray

    def rows(self):
        order = np.argsort(self.topo_rank, kind="stable")
        for i in order:
            yield (self.names[i], float(self.core[i]), float(self.normalized[i]),
                   int(self.topo_rank[i]), int(self.activity_rank[i]), int(self.displacement[i]))


KCORE_HEADER = ("institution", "core", "core_normalized", "topological_rank",
                "activity_rank", "displacement")


def compare_core_vs_activity(order: Sequence[int], decomp: CoreDecomposition,
                             agg: AggregateRanking) -> CoreComparison:
    """Pair each institution's topological position with its activity rank ``R``."""
    n = len(decomp.names)
    if tuple(agg.names) != tuple(decomp.names) or sorted(order) != list(range(n)):
        raise ValueError("rankings cover different institution sets")
    if any(r <= 0 for r in agg.R):
        raise ValueError("activity ranking does not cover every institution")
    topo = np.zeros(n, dtype=np.int64)
    for pos, i in enumerate(order, 1):
        topo[i] = pos
    R = np.asarray(agg.R, dtype=np.int64)
    return CoreComparison(decomp.names, decomp.core, decomp.normalized, topo, R, np.abs(topo - R))

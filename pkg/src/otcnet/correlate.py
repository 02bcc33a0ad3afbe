"""Pearson correlation matrices over activities and credit exposures.

The default coefficient uses only the quarters in which both institutions
were ranked and is then multiplied by the binary co-appearance weight
``w_ij`` of the same period, so its range becomes ``[-w_ij, +w_ij]``.
Undefined cells are NaN in memory, empty in CSV and ``null`` in JSON.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kcore
from .export import fmt, write_csv, write_json
from .ingest import Panel
from .network import AggregatedGraph, aggregate_links, period_subnetwork, temporal_network
from .quarters import canonical_quarter

FIELDS = ("activity_total", "activity_otc", "cce", "tce")
MODES = ("pairwise", "zero_fill")


@dataclass(frozen=True)
class Period:
    start: int  # 1-based, inclusive
    end: int
    first: str = ""
    last: str = ""

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def as_slice(self) -> slice:
        return slice(self.start - 1, self.end)

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "first": self.first, "last": self.last}


def full_period(quarters: Sequence[str]) -> Period:
    return Period(1, len(quarters), quarters[0], quarters[-1])


def make_period(quarters: Sequence[str], start, end) -> Period:
    if isinstance(start, str):
        start = list(quarters).index(canonical_quarter(start)) + 1
    if isinstance(end, str):
        end = list(quarters).index(canonical_quarter(end)) + 1
    if end < start:
        raise ValueError(f"empty period {start}..{end}")
    if not 1 <= start <= end <= len(quarters):
        raise ValueError(f"period {start}..{end} outside 1..{len(quarters)}")
    return Period(start, end, quarters[start - 1], quarters[end - 1])


def split_at(quarters: Sequence[str] | Panel, boundary: str) -> tuple[Period, Period]:
    """Quarters before ``boundary`` and from ``boundary`` on."""
    if isinstance(quarters, Panel):
        quarters = quarters.quarters
    label = canonical_quarter(boundary)
    if label not in quarters:
        raise ValueError(f"boundary {label} is outside {quarters[0]}..{quarters[-1]}")
    b = list(quarters).index(label) + 1
    if b <= 1 or b >= len(quarters):
        raise ValueError(f"boundary {boundary} must lie strictly inside the quarter range")
    return make_period(quarters, 1, b - 1), make_period(quarters, b, len(quarters))


def pearson_full(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Product-moment coefficient with ``1/(T-1)`` normalization; None if undefined."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("series must be 1-d and of equal length")
    T = x.size
    if T < 2:
        return None
    dx, dy = x - x.mean(), y - y.mean()
    sx = np.sqrt(np.sum(dx * dx) / (T - 1))
    sy = np.sqrt(np.sum(dy * dy) / (T - 1))
    if sx == 0 or sy == 0:
        return None
    rho = float(np.sum((dx / sx) * (dy / sy)) / (T - 1))
    return min(1.0, max(-1.0, rho))


def pearson_pairwise(x, y, present_x, present_y, moments: str = "overlap") -> tuple[float | None, int]:
    """Coefficient over the quarters where both series are available.

    ``moments="overlap"`` takes means and deviations on the shared quarters,
    giving an ordinary bounded coefficient.  ``moments="presence"`` takes them
    over each series' own available quarters instead; that variant is not
    bounded by 1.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    px = np.asarray(present_x, dtype=bool) & np.isfinite(x)
    py = np.asarray(present_y, dtype=bool) & np.isfinite(y)
    both = px & py
    n = int(both.sum())
    if n < 2:
        return None, n
    if moments == "overlap":
        return pearson_full(x[both], y[both]), n
    if moments != "presence":
        raise ValueError("moments must be 'overlap' or 'presence'")
    if px.sum() < 2 or py.sum() < 2:
        return None, n
    mx, my = x[px].mean(), y[py].mean()
    sx, sy = x[px].std(ddof=1), y[py].std(ddof=1)
    if sx == 0 or sy == 0:
        return None, n
    return float(np.sum((x[both] - mx) / sx * (y[both] - my) / sy) / (n - 1)), n


def scale_by_weight(rho: np.ndarray, graph: AggregatedGraph) -> np.ndarray:
    """``rho_ij * w_ij`` with binary co-appearance weights and ``w_ii = 1``."""
    if graph.mode != "binary":
        raise ValueError("scaling needs weights from the binary co-occurrence network")
    rho = np.asarray(rho, dtype=float)
    if rho.shape != graph.w.shape:
        raise ValueError("matrices cover different institution sets")
    w = graph.w.copy()
    np.fill_diagonal(w, 1.0)
    return rho * w  # NaN stays NaN


@dataclass(frozen=True)
class CorrelationMatrix:
    names: tuple[str, ...]
    index: tuple[int, ...]  # panel institution ids along the axes
    rho: np.ndarray
    overlap: np.ndarray
    weight: np.ndarray
    scaled_values: np.ndarray
    field: str
    period: Period
    scaled: bool
    mode: str

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.rho)

    @property
    def values(self) -> np.ndarray:
        return self.scaled_values if self.scaled else self.rho

    def cell(self, a: str, b: str) -> float | None:
        v = self.values[self.names.index(a), self.names.index(b)]
        return None if np.isnan(v) else float(v)


def default_order(panel: Panel, alpha: float = 0.0, beta: float = 1.0) -> list[int]:
    """Topological ranking of the full-period rank-weighted network."""
    graph = aggregate_links(temporal_network(panel, "rank"))
    return kcore.topological_ranking(kcore.decompose(graph, alpha, beta), graph)


def correlation_matrix(panel: Panel, field: str = "activity_total", period: Period | None = None,
                       scaled: bool = True, order: Sequence[int] | None = None,
                       institutions: Sequence[int] | None = None,
                       mode: str = "pairwise") -> CorrelationMatrix:
    """All pairwise coefficients of ``field`` over ``period``.

    Axes follow ``order`` (default: the k-core topological ranking),
    optionally restricted to ``institutions``.  ``mode="zero_fill"`` is a
    diagnostic that treats absent quarters as zero activity.
    """
    if field not in FIELDS:
        raise ValueError(f"field must be one of {FIELDS}")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    period = period or full_period(panel.quarters)
    if period.length < 1:
        raise ValueError("empty period")
    sl = period.as_slice()
    values = panel.series(field)[:, sl]
    avail = panel.present[:, sl] & np.isfinite(values)

    idx = list(order) if order is not None else default_order(panel)
    if institutions is not None:
        keep = set(institutions)
        idx = [i for i in idx if i in keep]
    n = len(idx)

    binary = aggregate_links(period_subnetwork(temporal_network(panel, "binary"),
                                               period.start, period.end))
    rho = np.full((n, n), np.nan)
    overlap = np.zeros((n, n), dtype=np.int64)
    filled = np.where(avail, values, 0.0)
    for a in range(n):
        for b in range(a, n):
            i, j = idx[a], idx[b]
            if mode == "pairwise":
                r, k = pearson_pairwise(values[i], values[j], avail[i], avail[j])
            else:
                r, k = pearson_full(filled[i], filled[j]), int((avail[i] & avail[j]).sum())
            if a == b and r is not None:
                r = 1.0
            rho[a, b] = rho[b, a] = np.nan if r is None else r
            overlap[a, b] = overlap[b, a] = k

    sub = AggregatedGraph(tuple(panel.names[i] for i in idx), binary.w[np.ix_(idx, idx)],
                          "binary", binary.T)
    scaled_values = scale_by_weight(rho, sub)
    weight = sub.w.copy()
    np.fill_diagonal(weight, 1.0)
    return CorrelationMatrix(sub.names, tuple(idx), rho, overlap, weight, scaled_values,
                             field, period, scaled, mode)


def write_matrix_csv(cm: CorrelationMatrix, path):
    vals = cm.values
    return write_csv(path, ("", *cm.names),
                     ((name, *vals[a]) for a, name in enumerate(cm.names)))


def matrix_document(cm: CorrelationMatrix) -> dict:
    def nullable(m):
        return [[None if np.isnan(v) else float(fmt(float(v))) for v in row] for row in m]

    return {
        "field": cm.field,
        "period": cm.period.to_dict(),
        "scaled": cm.scaled,
        "mode": cm.mode,
        "names": list(cm.names),
        "defined": cm.defined.tolist(),
        "overlap": cm.overlap.tolist(),
        "weight": nullable(cm.weight),
        "rho": nullable(cm.rho),
        "values": nullable(cm.values),
    }


def write_matrix_json(cm: CorrelationMatrix, path):
    return write_json(path, matrix_document(cm))

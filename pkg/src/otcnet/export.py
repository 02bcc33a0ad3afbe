"""File writers shared by the analysis modules."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import networkx as nx

from .network import AggregatedGraph


def fmt(x) -> str:
    """CSV cell: 9 significant digits for floats, empty for undefined."""
    if x is None:
        return ""
    if isinstance(x, float) or hasattr(x, "dtype") and x.dtype.kind == "f":
        x = float(x)
        if math.isnan(x):
            return ""
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.9g}"
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path


def _edges(graph: AggregatedGraph):
    n = len(graph.names)
    for i in range(n):
        for j in range(i + 1, n):
            if graph.w[i, j] > 0:
                yield i, j, float(graph.w[i, j])


def write_edge_list(graph: AggregatedGraph, path) -> Path:
    return write_csv(path, ("source", "target", "weight"),
                     ((graph.names[i], graph.names[j], w) for i, j, w in _edges(graph)))


def to_networkx(graph: AggregatedGraph) -> nx.Graph:
    G = nx.Graph(mode=graph.mode, quarters=graph.T)
    W = graph.importance
    size = graph.normalized_importance
    for i, name in enumerate(graph.names):
        G.add_node(name, importance=float(W[i]), size=float(size[i]))
    for i, j, w in _edges(graph):
        G.add_edge(graph.names[i], graph.names[j], weight=w)
    return G


def write_graphml(graph: AggregatedGraph, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nx.write_graphml(to_networkx(graph), path)
    return path


def _dot_id(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def write_dot(graph: AggregatedGraph, path) -> Path:
    """Undirected DOT with node ``size`` = normalized importance."""
    size = graph.normalized_importance
    lines = [f"graph counterparty_{graph.mode} {{"]
    for i, name in enumerate(graph.names):
        lines.append(f"  {_dot_id(name)} [size={fmt(float(size[i]))}];")
    for i, j, w in _edges(graph):
        lines.append(f"  {_dot_id(graph.names[i])} -- {_dot_id(graph.names[j])} [weight={fmt(w)}];")
    lines.append("}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path

"""Artifact writers behind the CLI subcommands, and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import activity, correlate, kcore, network
from .config import ConfigError, RunConfig
from .export import write_csv, write_dot, write_edge_list, write_graphml, write_json
from .ingest import AliasTable, Panel, load_panel, write_log, write_panel_csv, write_registry_json
from .quarters import canonical_quarter, compact

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Artifact:
    path: Path
    family: str
    describes: str


def aliases_for(cfg: RunConfig) -> AliasTable:
    return AliasTable.from_tsv(cfg.aliases) if cfg.aliases else AliasTable.default()


def panel_for(cfg: RunConfig) -> Panel:
    rng = tuple(cfg.quarters) if cfg.quarters else None
    return load_panel(cfg.panel, aliases_for(cfg), rng, tolerant=cfg.tolerant,
                      allow_unsafe_merge=cfg.allow_unsafe_merge)


def read_market_totals(path) -> dict[str, float]:
    """``quarter,market_total`` CSV (millions USD, whole market per quarter)."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or {"quarter", "market_total"} - set(reader.fieldnames):
            raise ConfigError(f"{path}: expected columns quarter,market_total")
        for row in reader:
            out[canonical_quarter(row["quarter"])] = float(row["market_total"])
    return out


def _period(panel: Panel, pair) -> correlate.Period:
    if not pair:
        return correlate.full_period(panel.quarters)
    return correlate.make_period(panel.quarters, pair[0], pair[1])


# --------------------------------------------------------------------------
# families


def write_ingest(panel: Panel, out: Path) -> list[Artifact]:
    out.mkdir(parents=True, exist_ok=True)
    write_panel_csv(panel, out / "panel.csv")
    write_registry_json(panel, out / "registry.json")
    recovery = [line for line in panel.log if line.startswith("skipped line")]
    merge = [line for line in panel.log if not line.startswith("skipped line")]
    write_log(recovery, out / "recovery.log")
    write_log(merge, out / "merge.log")
    return [
        Artifact(out / "panel.csv", "ingest", "normalized panel, one ranked record per row"),
        Artifact(out / "registry.json", "ingest", "canonical institution registry"),
        Artifact(out / "recovery.log", "ingest", "rows skipped by tolerant parsing"),
        Artifact(out / "merge.log", "ingest", "identity merges, rank repairs, identity checks"),
    ]


def stats_document(panel: Panel, cfg: RunConfig) -> dict:
    agg = activity.aggregate(panel)
    fit = activity.distribution_fit(agg.A, cfg.ks_trials, cfg.p_threshold, cfg.seed)
    shares = activity.cumulative_share(agg.A)
    doc = fit.to_dict()
    ranked = agg.A[agg.by_rank()]
    ranked = ranked[ranked > 0]
    if ranked.size >= 3:
        mu_r, sigma_r = activity.fit_lognormal_rank(ranked, normalize=True)
        doc["rank_curve"] = {"mu": mu_r, "sigma": sigma_r, "normalized": True}
    doc["N"] = panel.N
    doc["T"] = panel.T
    doc["share_top"] = {str(k): float(shares[k - 1]) for k in (7, 10, 15, 25) if k <= panel.N}
    cmp = activity.compare_rankings(agg.R, agg.R_otc, agg.names) if np.all(agg.R_otc > 0) else None
    if cmp is not None:
        doc["otc_rank_displacement_max"] = cmp.band_max
    if cfg.market_totals:
        totals = read_market_totals(cfg.market_totals)
        quarterly = {}
        for t, q in enumerate(panel.quarters):
            if q in totals:
                quarterly[q] = float(panel.activity[:, t].sum() / totals[q])
        doc["reported_share_of_market"] = quarterly
    growth = []
    for g in cfg.growth:
        i = panel.index_of(g.institution)
        trend = activity.growth_trend(panel.activity[i], panel.quarters, (g.start, g.end))
        growth.append({"institution": g.institution, "start": g.start, "end": g.end,
                       "slope_per_year": trend.slope, "yearly_ratio": trend.ratio,
                       "points": trend.n_points, "excluded": list(trend.excluded)})
    if growth:
        doc["growth"] = growth
    return doc


def write_stats(panel: Panel, cfg: RunConfig, out: Path) -> list[Artifact]:
    agg = activity.aggregate(panel)
    order = agg.by_rank()
    arts = [Artifact(write_json(out / "stats.json", stats_document(panel, cfg)), "stats",
                     "log-normal fit, Gini, skewness, Monte-Carlo KS passes, top-k shares")]

    arts.append(Artifact(write_csv(
        out / "rank_activity.csv", ("rank", "institution", "activity", "activity_otc", "activity_etd"),
        ((int(agg.R[i]), agg.names[i], agg.A[i], agg.A_otc[i], agg.A_etd[i]) for i in order)),
        "rank_activity", "aggregated activity versus aggregated-activity rank"))

    shares = activity.cumulative_share(agg.A[order])
    arts.append(Artifact(write_csv(
        out / "cumulative_share.csv", ("top_k", "institution", "cumulative_share"),
        ((k + 1, agg.names[i], shares[k]) for k, i in enumerate(order))),
        "cumulative_share", "cumulative share of aggregated activity held by the top k"))

    ratio = activity.otc_ratio(agg)
    arts.append(Artifact(write_csv(
        out / "otc_ratio.csv", ("rank", "institution", "otc_etd_ratio", "flag"),
        ((int(ratio.R[i]), ratio.names[i], ratio.ratio[i], ratio.flag[i]) for i in order)),
        "otc_ratio", "aggregated OTC over exchange-traded activity versus rank"))

    if np.any(agg.R_otc > 0):
        cmp = activity.compare_rankings(agg.R, agg.R_otc, agg.names)
        rows = ((int(cmp.first[i]), int(cmp.second[i]), cmp.names[i], int(cmp.displacement[i]))
                for i in order)
    else:
        rows = iter(())
    arts.append(Artifact(write_csv(
        out / "rank_comparison.csv", ("rank_total", "rank_otc", "institution", "displacement"), rows),
        "rank_comparison", "rank by total activity versus rank by OTC activity"))
    return arts


def write_network(panel: Panel, out: Path) -> list[Artifact]:
    arts = []
    for mode, label in (("binary", "co-occurrence"), ("rank", "rank-weighted co-occurrence")):
        graph = network.aggregate_links(network.temporal_network(panel, mode))
        stem = out / f"network_{mode}"
        arts += [
            Artifact(write_edge_list(graph, stem.with_suffix(".csv")), "network",
                     f"time-aggregated {label} weights, edge list"),
            Artifact(write_graphml(graph, stem.with_suffix(".graphml")), "network",
                     f"time-aggregated {label} network, GraphML"),
            Artifact(write_dot(graph, stem.with_suffix(".dot")), "network",
                     f"time-aggregated {label} network, DOT"),
        ]
    return arts


def kcore_table(panel: Panel, cfg: RunConfig):
    graph = network.aggregate_links(network.temporal_network(panel, "rank"))
    decomp = kcore.decompose(graph, cfg.alpha, cfg.beta, cfg.schedule)
    order = kcore.topological_ranking(decomp, graph)
    return order, kcore.compare_core_vs_activity(order, decomp, activity.aggregate(panel))


def write_kcore(panel: Panel, cfg: RunConfig, out: Path) -> list[Artifact]:
    _, table = kcore_table(panel, cfg)
    path = write_csv(out / "kcore.csv", kcore.KCORE_HEADER, table.rows())
    return [Artifact(path, "kcore", "weighted k-core index and topological versus activity rank")]


def correlation_jobs(panel: Panel, cfg: RunConfig) -> list[tuple[str, correlate.Period, str]]:
    """(field, period, tag) triples: the main period per field, plus split halves."""
    main = _period(panel, cfg.period)
    jobs = [(f, main, "all" if cfg.period is None else f"{compact(main.first)}-{compact(main.last)}")
            for f in cfg.fields]
    if cfg.split:
        before, after = correlate.split_at(panel, cfg.split)
        tag = compact(cfg.split)
        for f in cfg.fields:
            if f in ("cce", "tce"):
                jobs += [(f, before, f"before{tag}"), (f, after, f"from{tag}")]
    return jobs


def write_correlations(panel: Panel, cfg: RunConfig, out: Path, order=None,
                       jobs=None) -> list[Artifact]:
    order = order if order is not None else kcore_table(panel, cfg)[0]
    arts = []
    for fld, period, tag in jobs if jobs is not None else correlation_jobs(panel, cfg):
        cm = correlate.correlation_matrix(panel, fld, period, cfg.scaled, order=order)
        stem = out / f"corr_{fld}_{tag}"
        kind = "weight-scaled pairwise" if cfg.scaled else "pairwise"
        arts += [
            Artifact(correlate.write_matrix_csv(cm, stem.with_suffix(".csv")), "correlation",
                     f"{kind} Pearson matrix of {fld}, {period.first}..{period.last}"),
            Artifact(correlate.write_matrix_json(cm, stem.with_suffix(".json")), "correlation",
                     f"overlap counts and definedness for {fld}, {period.first}..{period.last}"),
        ]
    return arts


def write_frames(panel: Panel, cfg: RunConfig, out: Path, order=None) -> list[Artifact]:
    temporal = network.temporal_network(panel, cfg.frames_mode)
    order = order if order is not None else kcore_table(panel, cfg)[0]
    cm = correlate.correlation_matrix(panel, "activity_total", None, True, order=order)
    colour = np.full((panel.N, panel.N), np.nan)
    colour[np.ix_(cm.index, cm.index)] = cm.values
    paths = network.emit_frames(temporal, out / "frames", panel.ranks, colour)
    return [Artifact(p, "frames", f"network frame for {q}") for p, q in zip(paths, panel.quarters)]


# --------------------------------------------------------------------------
# manifest


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, cfg: RunConfig, artifacts: list[Artifact]) -> Path:
    doc = {
        "config": cfg.to_dict(),
        "parameters": {
            "seed": cfg.seed, "rng": activity.RNG_ALGORITHM, "alpha": cfg.alpha, "beta": cfg.beta,
            "kcore_schedule": cfg.schedule, "boundary": cfg.split, "ks_trials": cfg.ks_trials,
            "p_threshold": cfg.p_threshold, "scaled": cfg.scaled,
        },
        "families": sorted({a.family for a in artifacts}),
        "artifacts": [
            {"path": a.path.relative_to(out).as_posix(), "family": a.family,
             "describes": a.describes, "sha256": sha256(a.path)}
            for a in artifacts
        ],
    }
    return write_json(out / "manifest.json", doc)


def run_report(cfg: RunConfig) -> list[Artifact]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    panel = panel_for(cfg)
    order, _ = kcore_table(panel, cfg)
    arts = write_stats(panel, cfg, out)
    arts += write_network(panel, out)
    arts += write_kcore(panel, cfg, out)
    arts += write_correlations(panel, cfg, out, order)
    arts += write_frames(panel, cfg, out, order)
    write_manifest(out, cfg, arts)
    return arts

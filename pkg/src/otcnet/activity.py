"""Activities, rankings, concentration statistics and log-normal fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .ingest import Panel
from .quarters import parse_quarter

RNG_ALGORITHM = "PCG64"


def rank_quarter(activities: Sequence[float], names: Sequence[str] | None = None) -> np.ndarray:
    """Dense ranks ``1..n`` by descending activity; non-positive entries get 0.

    Ties are broken by ``names`` in lexicographic order (by position when no
    names are given).
    """
    a = np.asarray(activities, dtype=float)
    a = np.where(np.isnan(a), 0.0, a)
    if not np.any(a > 0):
        raise ValueError("no positive activity: ranking undefined")
    keys = list(names) if names is not None else list(range(len(a)))
    if len(keys) != len(a):
        raise ValueError("names and activities differ in length")
    order = sorted((k for k in range(len(a)) if a[k] > 0), key=lambda k: (-a[k], keys[k]))
    ranks = np.zeros(len(a), dtype=np.int64)
    for pos, k in enumerate(order, 1):
        ranks[k] = pos
    return ranks


@dataclass(frozen=True)
class AggregateRanking:
    names: tuple[str, ...]
    A: np.ndarray
    A_etd: np.ndarray
    A_otc: np.ndarray
    R: np.ndarray
    R_otc: np.ndarray

    def by_rank(self) -> np.ndarray:
        """Institution indices ordered by ``R`` (ranked ones only)."""
        ranked = [i for i in range(len(self.R)) if self.R[i] > 0]
        return np.array(sorted(ranked, key=lambda i: self.R[i]), dtype=np.int64)


def _period_slice(panel: Panel, period) -> slice:
    if period is None:
        return slice(0, panel.T)
    start, end = period
    if isinstance(start, str):
        start = panel.quarter_index(start)
    if isinstance(end, str):
        end = panel.quarter_index(end)
    if not 1 <= start <= end <= panel.T:
        raise ValueError(f"period {period} outside 1..{panel.T}")
    return slice(start - 1, end)


def aggregate(panel: Panel, period=None) -> AggregateRanking:
    """Sum activities over the quarters of ``period`` (default: all).

    Absent quarters contribute zero, as do null ETD/OTC splits.
    """
    sl = _period_slice(panel, period)
    A = panel.activity[:, sl].sum(axis=1)
    A_etd = np.nan_to_num(panel.series("activity_etd")[:, sl]).sum(axis=1)
    A_otc = np.nan_to_num(panel.series("activity_otc")[:, sl]).sum(axis=1)
    R = rank_quarter(A, panel.names)
    R_otc = rank_quarter(A_otc, panel.names) if np.any(A_otc > 0) else np.zeros_like(R)
    return AggregateRanking(panel.names, A, A_etd, A_otc, R, R_otc)


def gini(values: Sequence[float]) -> float:
    """Half the relative mean absolute difference, sum|xi-xj| / (2 n^2 mean)."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0 or np.any(x < 0):
        raise ValueError("gini needs a non-empty, nonnegative sample")
    total = x.sum()
    if total <= 0:
        raise ValueError("gini undefined for an all-zero sample")
    n = x.size
    # sum_i sum_j |xi - xj| = 2 * sum_k (2k - n - 1) x_(k) for sorted x, k = 1..n
    k = np.arange(1, n + 1)
    return float(np.sum((2 * k - n - 1) * x) / (n * total))


def skewness(values: Sequence[float]) -> float:
    """Adjusted Fisher-Pearson sample skewness ``G1``."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 3:
        raise ValueError("skewness needs at least 3 values")
    d = x - x.mean()
    m2 = np.mean(d**2)
    if m2 <= 0:
        raise ValueError("skewness undefined for zero variance")
    g1 = np.mean(d**3) / m2**1.5
    return float(g1 * math.sqrt(n * (n - 1)) / (n - 2))


# --------------------------------------------------------------------------
# log-normal fits


def lognormal_rank_curve(R, mu: float, sigma: float) -> np.ndarray:
    """``1 / (R sigma sqrt(2 pi)) * exp(-(ln R - mu)^2 / (2 sigma^2))``."""
    R = np.asarray(R, dtype=float)
    return np.exp(-((np.log(R) - mu) ** 2) / (2 * sigma**2)) / (R * sigma * math.sqrt(2 * math.pi))


def fit_lognormal(values: Sequence[float]) -> tuple[float, float]:
    """Maximum-likelihood log-normal parameters of a positive sample.

    ``mu`` is the mean of ``ln x`` and ``sigma`` its standard deviation with
    ``1/n`` normalization.
    """
    x = np.asarray(values, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 values to fit")
    if np.any(x <= 0):
        raise ValueError("log-normal fit needs positive values")
    logs = np.log(x)
    mu = float(logs.mean())
    sigma = float(np.sqrt(np.mean((logs - mu) ** 2)))
    if sigma <= 0:
        raise ValueError("degenerate sample: all values equal")
    return mu, sigma


def fit_lognormal_rank(A: Sequence[float], normalize: bool = True) -> tuple[float, float]:
    """Fit the log-normal rank curve to values ordered by rank ``1..n``.

    Least squares on ``ln A(R)``; the curve has no free amplitude, so
    ``normalize`` (divide by the total first) matters for real currency data.
    """
    y = np.asarray(A, dtype=float)
    if y.size < 3:
        raise ValueError("need at least 3 points to fit")
    if np.any(y <= 0):
        raise ValueError("rank curve fit needs positive values")
    if normalize:
        y = y / y.sum()
    R = np.arange(1, y.size + 1, dtype=float)
    L = np.log(R)
    target = np.log(y)

    # ln A + ln R is quadratic in ln R; use that for the starting point
    mu0, sigma0 = float(L.mean()), 1.0
    c2, c1, _ = np.polyfit(L, target + L, 2)
    if c2 < 0:
        sigma0 = math.sqrt(-1.0 / (2.0 * c2))
        mu0 = c1 * sigma0**2

    def residuals(p):
        mu, log_sigma = p
        sigma = math.exp(log_sigma)
        model = -L - log_sigma - 0.5 * math.log(2 * math.pi) - (L - mu) ** 2 / (2 * sigma**2)
        return model - target

    sol = optimize.least_squares(residuals, x0=[mu0, math.log(sigma0)], method="lm",
                                 xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return float(sol.x[0]), float(math.exp(sol.x[1]))


# --------------------------------------------------------------------------
# Kolmogorov-Smirnov


def ks_statistic(x: Sequence[float], y: Sequence[float]) -> float:
    """Two-sample sup distance between empirical CDFs over the pooled sample."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    if x.size == 0 or y.size == 0:
        raise ValueError("empty sample")
    pooled = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, pooled, side="right") / x.size
    cdf_y = np.searchsorted(y, pooled, side="right") / y.size
    return float(np.max(np.abs(cdf_x - cdf_y)))


def kolmogorov_sf(lam: float) -> float:
    """``Q(lam) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lam^2)``."""
    if lam < 0.2:
        return 1.0
    total, sign = 0.0, 1.0
    for j in range(1, 101):
        term = sign * math.exp(-2.0 * j * j * lam * lam)
        total += term
        if abs(term) < 1e-16:
            break
        sign = -sign
    return min(1.0, max(0.0, 2.0 * total))


def ks_pvalue(d: float, n: int, m: int) -> float:
    """Asymptotic p-value with the ``sqrt(ne) + 0.12 + 0.11/sqrt(ne)`` correction."""
    en = math.sqrt(n * m / (n + m))
    return kolmogorov_sf((en + 0.12 + 0.11 / en) * d)


def ks_2samp(x, y) -> tuple[float, float]:
    d = ks_statistic(x, y)
    return d, ks_pvalue(d, len(x), len(y))


@dataclass(frozen=True)
class KSResult:
    passes: int
    trials: int
    threshold: float
    seed: int
    rng: str = RNG_ALGORITHM

    @property
    def pass_fraction(self) -> float:
        return self.passes / self.trials

    def to_dict(self) -> dict:
        return {"trials": self.trials, "threshold": self.threshold, "passes": self.passes,
                "seed": self.seed, "rng": self.rng}


def ks_montecarlo(sample: Sequence[float], mu: float, sigma: float, trials: int = 10000,
                  p_threshold: float = 0.10, seed: int = 0) -> KSResult:
    """Count synthetic log-normal samples the empirical sample is not rejected against.

    Each trial draws ``len(sample)`` values from ``LogNormal(mu, sigma)`` with
    its own child seed of ``seed``, so the count does not depend on how trials
    are scheduled.
    """
    if not 0 < p_threshold < 1:
        raise ValueError(f"p_threshold must lie in (0, 1), got {p_threshold}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    if n < 3:
        raise ValueError("sample needs at least 3 values")
    passes = 0
    for child in np.random.SeedSequence(seed).spawn(trials):
        synth = np.random.Generator(np.random.PCG64(child)).lognormal(mu, sigma, n)
        _, p = ks_2samp(x, synth)
        if p >= p_threshold:
            passes += 1
    return KSResult(passes, trials, p_threshold, seed)


@dataclass(frozen=True)
class DistributionFit:
    mu: float
    sigma: float
    gini: float
    skewness: float
    ks: KSResult

    @property
    def ks_pass_count(self) -> int:
        return self.ks.passes

    @property
    def ks_trials(self) -> int:
        return self.ks.trials

    @property
    def ks_p_threshold(self) -> float:
        return self.ks.threshold

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "gini": self.gini,
                "skewness": self.skewness, "ks": self.ks.to_dict()}


def distribution_fit(A: Sequence[float], trials: int = 10000, p_threshold: float = 0.10,
                     seed: int = 0) -> DistributionFit:
    values = np.asarray(A, dtype=float)
    values = values[values > 0]
    mu, sigma = fit_lognormal(values)
    return DistributionFit(mu, sigma, gini(values), skewness(values),
                           ks_montecarlo(values, mu, sigma, trials, p_threshold, seed))


# --------------------------------------------------------------------------
# concentration, OTC/ETD composition, rank comparison


def cumulative_share(values: Sequence[float], market_total: float | None = None) -> np.ndarray:
    """Cumulative fraction held by the top 1, 2, ... entries."""
    v = np.sort(np.asarray(values, dtype=float))[::-1]
    total = float(v.sum()) if market_total is None else float(market_total)
    if total <= 0:
        raise ValueError("total activity must be positive")
    return np.cumsum(v) / total


def market_share(panel: Panel, top_k: int, period=None, market_total: float | None = None) -> float:
    """Share of the summed activity over ``period`` held by the ``top_k`` aggregates.

    ``market_total`` replaces the panel total as denominator, e.g. the whole
    market including institutions below the reported top 25.
    """
    A = aggregate(panel, period).A
    if not 1 <= top_k <= panel.N:
        raise ValueError(f"top_k must lie in 1..{panel.N}")
    return float(cumulative_share(A, market_total)[top_k - 1])


@dataclass(frozen=True)
class OtcRatio:
    names: tuple[str, ...]
    R: np.ndarray
    ratio: np.ndarray  # inf where ETD is zero, nan where undefined
    flag: tuple[str, ...]  # "ok" | "infinite" | "undefined"


def otc_ratio(agg: AggregateRanking) -> OtcRatio:
    ratio = np.empty(len(agg.names))
    flags = []
    for k, (otc, etd) in enumerate(zip(agg.A_otc, agg.A_etd)):
        if etd > 0:
            ratio[k] = otc / etd
            flags.append("ok")
        elif otc > 0:
            ratio[k] = math.inf
            flags.append("infinite")
        else:
            ratio[k] = math.nan
            flags.append("undefined")
    return OtcRatio(agg.names, agg.R.copy(), ratio, tuple(flags))


@dataclass
class RankComparison:
    names: tuple[str, ...]
    first: np.ndarray
    second: np.ndarray
    displacement: np.ndarray
    band_max: dict[str, int] = field(default_factory=dict)


def compare_rankings(R: Sequence[int], R_other: Sequence[int], names: Sequence[str] | None = None,
                     bands: Sequence[int] = (15, 50)) -> RankComparison:
    """Per-institution displacement ``|R - R_other|`` and its maximum per rank band.

    Bands are keyed by ``R``: with the default edges 1-15, 16-50 and 51+.
    """
    a = np.asarray(R, dtype=np.int64)
    b = np.asarray(R_other, dtype=np.int64)
    if a.shape != b.shape:
        raise ValueError("rankings cover different institution sets")
    if (a > 0).tolist() != (b > 0).tolist():
        raise ValueError("rankings cover different institution sets")
    names = tuple(names) if names is not None else tuple(str(k) for k in range(a.size))
    disp = np.abs(a - b)
    edges = [0, *bands, None]
    band_max = {}
    for lo, hi in zip(edges, edges[1:]):
        mask = (a > lo) & ((a <= hi) if hi is not None else True)
        label = f"{lo + 1}-{hi}" if hi is not None else f"{lo + 1}+"
        if np.any(mask):
            band_max[label] = int(disp[mask].max())
    return RankComparison(names, a, b, disp, band_max)


# --------------------------------------------------------------------------
# growth


@dataclass(frozen=True)
class GrowthTrend:
    slope: float  # per year, of ln a
    ratio: float  # exp(slope)
    n_points: int
    excluded: tuple[str, ...]


def growth_trend(series: Sequence[float], quarters: Sequence[str], window=None) -> GrowthTrend:
    """Least-squares slope of ``ln a(t)`` against time in years.

    ``window`` is an inclusive ``(start, end)`` pair of quarter labels;
    quarters with zero (or missing) activity are left out and reported.
    """
    a = np.asarray(series, dtype=float)
    if a.size != len(quarters):
        raise ValueError("series and quarter labels differ in length")
    ords = np.array([parse_quarter(q) for q in quarters])
    mask = np.ones(a.size, dtype=bool)
    if window is not None:
        lo, hi = parse_quarter(window[0]), parse_quarter(window[1])
        mask &= (ords >= lo) & (ords <= hi)
    valid = mask & np.isfinite(a) & (a > 0)
    excluded = tuple(q for q, m, v in zip(quarters, mask, valid) if m and not v)
    if valid.sum() < 8:
        raise ValueError(f"need at least 8 positive observations, found {int(valid.sum())}")
    years = ords[valid] / 4.0
    slope = float(np.polyfit(years - years.mean(), np.log(a[valid]), 1)[0])
    return GrowthTrend(slope, math.exp(slope), int(valid.sum()), excluded)

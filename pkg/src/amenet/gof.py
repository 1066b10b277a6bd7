"""Goodness-of-fit statistics and the posterior-predictive comparison table.

Four statistics summarise second- and third-order structure of a binary
directed network: the standard deviations of the row and column means, the
dyad dependence (correlation between the two directions of each dyad) and
the triad dependence (normalised cyclic third moment).  All standard
deviations here are sample standard deviations (n-1 denominator).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import linear_predictor, simulate_network
from .network import DirectedNetwork

__all__ = [
    "GofStats",
    "GofTable",
    "gof_stats",
    "gof_stats_matrix",
    "posterior_predictive_gof",
    "write_gof_csv",
]

STAT_NAMES = ("sd_rowmean", "sd_colmean", "dyad_dep", "triad_dep")


@dataclass(frozen=True)
class GofStats:
    """The four network statistics; dependence terms are None when the
    network is constant (zero off-diagonal variance)."""

    sd_rowmean: float
    sd_colmean: float
    dyad_dep: float | None
    triad_dep: float | None

    def as_tuple(self):
        return (self.sd_rowmean, self.sd_colmean, self.dyad_dep, self.triad_dep)


def gof_stats(net: DirectedNetwork) -> GofStats:
    """Compute the four statistics for a network (n >= 3)."""
    return gof_stats_matrix(net.adjacency)


def gof_stats_matrix(y: np.ndarray) -> GofStats:
    """Matrix-level implementation; the diagonal is ignored entirely
    (it may hold NaN, zeros, anything)."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if y.ndim != 2 or y.shape[1] != n:
        raise ValueError("adjacency must be square")
    if n < 3:
        raise ValueError("gof statistics need n >= 3")
    off = ~np.eye(n, dtype=bool)

    row_means = np.array([y[i, off[i]].mean() for i in range(n)])
    col_means = np.array([y[off[:, j], j].mean() for j in range(n)])
    sd_rowmean = float(np.std(row_means, ddof=1))
    sd_colmean = float(np.std(col_means, ddof=1))

    vals = y[off]
    ybar = vals.mean()
    s = float(np.std(vals, ddof=1))
    if s == 0.0:
        return GofStats(sd_rowmean, sd_colmean, None, None)

    # dyad dependence: Pearson correlation of (y_ij) with (y_ji) over all
    # ordered pairs; both vectors share the same marginal so the ratio of
    # cross- to self-moments is the correlation
    e = y - ybar
    np.fill_diagonal(e, 0.0)
    dyad = float(np.sum(e * e.T) / np.sum(e * e))

    # triad dependence: with a zeroed diagonal, trace(E^3) sums the cyclic
    # product over exactly the ordered triples of distinct indices
    triad = float(np.trace(e @ e @ e) / (n * (n - 1) * (n - 2) * s**3))
    return GofStats(sd_rowmean, sd_colmean, dyad, triad)


@dataclass
class GofTable:
    """Posterior-predictive draws of the four statistics plus the observed
    row, for one fitted model."""

    model: str
    draws: list[GofStats]
    observed: GofStats | None = None

    def band(self, stat: str, lo: float = 2.5, hi: float = 97.5) -> tuple[float, float]:
        """Percentile band of one statistic over the predictive draws."""
        vals = [getattr(g, stat) for g in self.draws]
        vals = [v for v in vals if v is not None]
        if not vals:
            raise ValueError(f"no defined draws for {stat}")
        return (float(np.percentile(vals, lo)), float(np.percentile(vals, hi)))


def posterior_predictive_gof(chain, X=None, spec=None, base_seed=None,
                             observed=None) -> GofTable:
    """Simulate one replicate network per stored state and tabulate its
    statistics next to the observed network's.

    Parameters default to what the chain carries.  Each replicate uses its
    own generator seeded ``base_seed + state_index`` so draws are
    reproducible and independent of evaluation order.
    """
    spec = spec if spec is not None else chain.spec
    X = X if X is not None else chain.design
    if base_seed is None:
        base_seed = chain.seed
    draws = []
    for idx, state in enumerate(chain.states):
        rng = np.random.default_rng(base_seed + idx)
        m = linear_predictor(state, X, spec)
        np.fill_diagonal(m, 0.0)
        y_sim = simulate_network(m, state.rho, rng, symmetric=spec.symmetric)
        draws.append(gof_stats_matrix(y_sim))
    obs_stats = None
    y_obs = observed if observed is not None else chain.observed
    if y_obs is not None:
        y_obs = y_obs.adjacency if isinstance(y_obs, DirectedNetwork) else y_obs
        obs_stats = gof_stats_matrix(y_obs)
    return GofTable(model=spec.variant, draws=draws, observed=obs_stats)


def write_gof_csv(tables, path) -> None:
    """Long-format CSV ``model,statistic,draw_index,value,observed`` ready
    for boxplot tooling; undefined statistics are written as NA and the
    observed rows carry draw_index -1."""
    if isinstance(tables, GofTable):
        tables = [tables]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "statistic", "draw_index", "value", "observed"])
        for table in tables:
            for idx, g in enumerate(table.draws):
                for stat in STAT_NAMES:
                    v = getattr(g, stat)
                    w.writerow([table.model, stat, idx,
                                "NA" if v is None else format(v, ".17g"), 0])
            if table.observed is not None:
                for stat in STAT_NAMES:
                    v = getattr(table.observed, stat)
                    w.writerow([table.model, stat, -1,
                                "NA" if v is None else format(v, ".17g"), 1])

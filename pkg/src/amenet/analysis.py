"""Posterior summaries: coefficients, additive-effect rankings, the mean
multiplicative-effect matrix and k-means clustering of the latent factors."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .gibbs import Chain, tail_probability

__all__ = [
    "CoefficientSummary",
    "EffectSummary",
    "ClusterAssignment",
    "coefficient_summary",
    "rank_additive_effects",
    "multiplicative_matrix",
    "cluster_multiplicative",
    "kmeans",
    "write_coefficients_csv",
    "write_effects_csv",
    "write_uv_csv",
    "write_clusters_csv",
]


@dataclass(frozen=True)
class CoefficientSummary:
    name: str
    mean: float
    sd: float
    q025: float
    q500: float
    q975: float
    tail_prob: float
    significant: bool


@dataclass(frozen=True)
class EffectSummary:
    node_id: str
    mean: float
    sd: float
    q025: float
    q500: float
    q975: float


@dataclass(frozen=True)
class ClusterAssignment:
    node_id: str
    cluster: int
    distance: float


def _summarise(draws: np.ndarray) -> tuple[float, float, float, float, float]:
    q = np.quantile(draws, [0.025, 0.5, 0.975])
    sd = float(draws.std(ddof=1)) if draws.size > 1 else 0.0
    return float(draws.mean()), sd, float(q[0]), float(q[1]), float(q[2])


def coefficient_summary(chain: Chain) -> list[CoefficientSummary]:
    """Posterior summary per regression coefficient (intercept included).

    ``significant`` is derived from the reported quantiles themselves: the
    central 95% interval excludes zero.
    """
    if not chain.states:
        raise ValueError("empty chain")
    out = []
    draws = chain.coef_draws()
    for name, col in zip(chain.coef_names(), draws.T):
        mean, sd, q025, q500, q975 = _summarise(col)
        out.append(CoefficientSummary(
            name=name, mean=mean, sd=sd, q025=q025, q500=q500, q975=q975,
            tail_prob=tail_probability(col),
            significant=bool(q025 > 0.0 or q975 < 0.0)))
    return out


def rank_additive_effects(chain: Chain, side: str = "row", direction: str = "largest",
                          k: int = 10) -> list[EffectSummary]:
    """Top-k nodes by posterior mean additive effect, ties broken by node id."""
    if not chain.states:
        raise ValueError("empty chain")
    if not chain.spec.uses_additive:
        raise ValueError(f"{chain.spec.variant} has no additive effects")
    if side not in ("row", "column"):
        raise ValueError("side must be 'row' or 'column'")
    if direction not in ("largest", "smallest"):
        raise ValueError("direction must be 'largest' or 'smallest'")
    n = chain.n
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    draws = chain.a_draws() if side == "row" else chain.b_draws()
    summaries = []
    for idx, node in enumerate(chain.node_ids):
        mean, sd, q025, q500, q975 = _summarise(draws[:, idx])
        summaries.append(EffectSummary(node, mean, sd, q025, q500, q975))
    sign = -1.0 if direction == "largest" else 1.0
    summaries.sort(key=lambda e: (sign * e.mean, e.node_id))
    return summaries[:k]


def _subset_indices(chain: Chain, nodes) -> list[int]:
    if nodes is None:
        return list(range(chain.n))
    idx = []
    pos = {nm: i for i, nm in enumerate(chain.node_ids)}
    for node in nodes:
        if isinstance(node, str):
            if node not in pos:
                raise KeyError(f"unknown node id {node!r}")
            idx.append(pos[node])
        else:
            idx.append(int(node))
    return idx


def multiplicative_matrix(chain: Chain, nodes=None) -> tuple[np.ndarray, list[str]]:
    """Posterior mean of the factor product matrix on a node subset.

    Averaging the per-draw products (never the product of averages) makes
    the result exactly invariant to the per-draw rotation ambiguity of the
    factors.
    """
    if not chain.spec.uses_multiplicative:
        raise ValueError(f"{chain.spec.variant} has no multiplicative effects")
    if not chain.states:
        raise ValueError("empty chain")
    idx = _subset_indices(chain, nodes)
    acc = np.zeros((len(idx), len(idx)))
    for state in chain.states:
        acc += state.u[idx] @ state.v[idx].T
    acc /= len(chain.states)
    return acc, [chain.node_ids[i] for i in idx]


def kmeans(X: np.ndarray, k: int, seed: int = 0, restarts: int = 50,
           max_iter: int = 300) -> tuple[np.ndarray, np.ndarray, float]:
    """Lloyd's algorithm with k-means++ seeding and restarts.

    Deterministic given ``seed``; the best run by within-cluster sum of
    squares wins and labels are renumbered by first appearance so the
    output does not depend on the internal restart ordering.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        centers = _kmeans_pp(X, k, rng)
        labels = np.zeros(n, dtype=int)
        for _ in range(max_iter):
            d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            labels = np.argmin(d2, axis=1)
            new_centers = centers.copy()
            for j in range(k):
                mask = labels == j
                if mask.any():
                    new_centers[j] = X[mask].mean(axis=0)
                else:
                    # reseed an empty cluster at the worst-fit point
                    worst = int(np.argmax(d2[np.arange(n), labels]))
                    new_centers[j] = X[worst]
            if np.allclose(new_centers, centers, rtol=0.0, atol=1e-12):
                centers = new_centers
                break
            centers = new_centers
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        wcss = float(d2[np.arange(n), labels].sum())
        if best is None or wcss < best[2] - 1e-12:
            best = (labels, centers, wcss)
    labels, centers, wcss = best
    # canonical labels: order of first appearance over the node sequence
    remap: dict[int, int] = {}
    for lab in labels:
        if lab not in remap:
            remap[lab] = len(remap)
    for j in range(k):  # clusters that stayed empty keep a stable slot
        if j not in remap:
            remap[j] = len(remap)
    new_labels = np.array([remap[lab] for lab in labels])
    new_centers = np.empty_like(centers)
    for old, new in remap.items():
        new_centers[new] = centers[old]
    return new_labels, new_centers, wcss


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[j] = X[rng.integers(n)]
            continue
        centers[j] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def stabilized_factors(chain: Chain, rank: int | None = None) -> np.ndarray:
    """Rotation-stable latent positions for clustering.

    Raw per-draw factors are only identified up to a joint rotation, so the
    posterior mean of U is not a meaningful object.  Instead take the best
    rank-R factorisation (SVD) of the rotation-invariant mean product matrix
    and scale the left factor by the root singular values.
    """
    rank = rank if rank is not None else chain.spec.latent_rank
    m, _ = multiplicative_matrix(chain)
    w, s, _ = np.linalg.svd(m)
    return w[:, :rank] * np.sqrt(s[:rank])


def cluster_multiplicative(chain: Chain, n_clusters: int = 5, seed: int = 0,
                           restarts: int = 50) -> list[ClusterAssignment]:
    """K-means clustering of the stabilized latent sender positions."""
    if not 1 <= n_clusters <= chain.n:
        raise ValueError(f"n_clusters must be in 1..{chain.n}")
    L = stabilized_factors(chain)
    labels, centers, _ = kmeans(L, n_clusters, seed=seed, restarts=restarts)
    out = []
    for idx, node in enumerate(chain.node_ids):
        dist = float(np.linalg.norm(L[idx] - centers[labels[idx]]))
        out.append(ClusterAssignment(node, int(labels[idx]), dist))
    return out


# --- CSV emitters -------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_coefficients_csv(summaries: list[CoefficientSummary], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "mean", "sd", "q025", "q500", "q975",
                    "tail_prob", "significant"])
        for s in summaries:
            w.writerow([s.name, _fmt(s.mean), _fmt(s.sd), _fmt(s.q025),
                        _fmt(s.q500), _fmt(s.q975), _fmt(s.tail_prob),
                        int(s.significant)])


def write_effects_csv(chain: Chain, path) -> None:
    """Both additive-effect sides for every node, unranked."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "side", "mean", "sd", "q025", "q500", "q975"])
        for side in ("row", "column"):
            for e in rank_additive_effects(chain, side=side, direction="largest",
                                           k=chain.n):
                w.writerow([e.node_id, side, _fmt(e.mean), _fmt(e.sd),
                            _fmt(e.q025), _fmt(e.q500), _fmt(e.q975)])


def write_uv_csv(matrix: np.ndarray, node_ids: list[str], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_id", "col_id", "value"])
        for i, ri in enumerate(node_ids):
            for j, cj in enumerate(node_ids):
                w.writerow([ri, cj, _fmt(matrix[i, j])])


def write_clusters_csv(assignments: list[ClusterAssignment], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "cluster", "distance_to_centroid"])
        for c in assignments:
            w.writerow([c.node_id, c.cluster, _fmt(c.distance)])

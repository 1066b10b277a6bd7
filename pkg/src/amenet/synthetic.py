"""Synthetic data generation and the independent verification oracles.

The generator draws networks from known parameters so recovery can be
checked end to end.  The oracles are deliberately naive (loops, quadrature,
Monte Carlo) and live in the shipped library so the command line can run
them on demand; they never share code with the fast paths they check.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.special import erf, log_ndtr

from . import analysis, gibbs, gof
from .model import (ModelSpec, ParameterState, PriorHyper, sample_prior_state,
                    simulate_noise)
from .network import DirectedNetwork

__all__ = [
    "GenerativeParams",
    "GenerativeTruth",
    "generate",
    "exact_small_posterior",
    "gof_stats_slow",
    "OracleResult",
    "run_verification",
]


@dataclass(frozen=True)
class GenerativeParams:
    """True parameter values for the generator.

    Covariates are drawn fresh: ``n_continuous`` standard normal columns,
    one Bernoulli column per entry of ``binary_probs``, and for each
    frequency vector in ``categorical_probs`` a categorical variable encoded
    as dummies against its first level.  ``beta_r``/``beta_c`` must match
    the resulting column count.  A covariance left at None keeps that random
    effect block at exactly zero.
    """

    mu: float = 0.0
    beta_r: tuple = ()
    beta_c: tuple = ()
    sigma_ab: np.ndarray | None = None
    psi: np.ndarray | None = None
    rho: float = 0.0
    n_continuous: int = 0
    binary_probs: tuple = ()
    categorical_probs: tuple = ()


@dataclass
class GenerativeTruth:
    """Everything the generator realised: parameters, latent matrix,
    network and design."""

    state: ParameterState
    network: DirectedNetwork
    design: np.ndarray
    design_names: list[str]
    spec: ModelSpec


def _draw_design(params: GenerativeParams, n: int, rng) -> tuple[np.ndarray, list[str]]:
    cols = []
    names = []
    for k in range(params.n_continuous):
        cols.append(rng.standard_normal(n))
        names.append(f"x{k + 1}")
    for k, p in enumerate(params.binary_probs):
        cols.append((rng.random(n) < p).astype(float))
        names.append(f"bin{k + 1}")
    for k, probs in enumerate(params.categorical_probs):
        probs = np.asarray(probs, dtype=float)
        levels = rng.choice(probs.size, size=n, p=probs / probs.sum())
        for lvl in range(1, probs.size):
            cols.append((levels == lvl).astype(float))
            names.append(f"cat{k + 1}_{lvl + 1}")
    if not cols:
        return np.zeros((n, 0)), []
    return np.column_stack(cols), names


def generate(spec: ModelSpec, n: int, params: GenerativeParams, seed: int = 0) -> GenerativeTruth:
    """Draw covariates, effects, dyad-correlated errors and the network.

    The realised ties equal the sign of the realised latent matrix entry
    for entry, by construction.
    """
    rng = np.random.default_rng(seed)
    Xd, names = _draw_design(params, n, rng)
    q = Xd.shape[1]
    beta_r = np.asarray(params.beta_r, dtype=float)
    beta_c = np.asarray(params.beta_c, dtype=float)
    if spec.uses_covariates and (beta_r.size != q or beta_c.size != q):
        raise ValueError(f"beta length must match the {q} generated covariates")
    R = spec.latent_rank

    if spec.uses_additive and params.sigma_ab is not None:
        sab = np.atleast_2d(np.asarray(params.sigma_ab, dtype=float))
        if spec.symmetric:
            a = rng.normal(0.0, np.sqrt(sab[0, 0]), size=n)
            b = a.copy()
            sigma_ab = np.full((2, 2), sab[0, 0])
        else:
            if np.linalg.eigvalsh(sab).min() <= 0:
                raise ValueError("sigma_ab must be positive definite")
            ab = rng.multivariate_normal(np.zeros(2), sab, size=n)
            a, b = ab[:, 0].copy(), ab[:, 1].copy()
            sigma_ab = sab
    else:
        a = np.zeros(n)
        b = np.zeros(n)
        sigma_ab = np.zeros((2, 2))

    if spec.uses_multiplicative and params.psi is not None:
        psi = np.atleast_2d(np.asarray(params.psi, dtype=float))
        if spec.symmetric:
            psi_r = psi[:R, :R]
            u = rng.multivariate_normal(np.zeros(R), psi_r, size=n)
            v = u.copy()
            psi_full = np.block([[psi_r, psi_r], [psi_r, psi_r]])
        else:
            if psi.shape != (2 * R, 2 * R):
                raise ValueError(f"psi must be {2 * R}x{2 * R}")
            if np.linalg.eigvalsh(psi).min() <= 0:
                raise ValueError("psi must be positive definite")
            uv = rng.multivariate_normal(np.zeros(2 * R), psi, size=n)
            u, v = uv[:, :R].copy(), uv[:, R:].copy()
            psi_full = psi
    else:
        u = np.zeros((n, max(R, 0)))
        v = np.zeros((n, max(R, 0)))
        psi_full = np.zeros((2 * R, 2 * R)) if R else np.zeros((0, 0))

    rho = float(params.rho) if spec.uses_rho else 0.0
    m = np.full((n, n), params.mu)
    if spec.uses_covariates and q:
        m += (Xd @ beta_r)[:, None]
        m += (Xd @ beta_c)[None, :]
    m += a[:, None] + b[None, :]
    if spec.uses_multiplicative:
        m += u @ v.T
    z = m + simulate_noise(n, rho, rng, symmetric=spec.symmetric)
    np.fill_diagonal(z, 0.0)
    y = (z > 0).astype(float)
    np.fill_diagonal(y, 0.0)
    net = DirectedNetwork(y, tuple(f"n{k}" for k in range(n)), symmetric=spec.symmetric)
    state = ParameterState(mu=float(params.mu), beta_r=beta_r, beta_c=beta_c,
                           a=a, b=b, u=u, v=v, sigma_ab=sigma_ab, psi=psi_full,
                           rho=rho, z=z)
    return GenerativeTruth(state=state, network=net, design=Xd,
                           design_names=names, spec=spec)


# --- exact small-instance posterior -------------------------------------------

def exact_small_posterior(Y, spec: ModelSpec) -> tuple[float, float]:
    """Posterior mean and sd of the intercept for a 3-node intercept-only
    model with independent errors, by one-dimensional quadrature.

    The posterior is N(0, v) times Phi(mu)^s * Phi(-mu)^(6-s) where s counts
    the observed ties.  A Simpson rule on a dense grid over +-8 prior sds is
    exact to far beyond the Monte Carlo error it is compared against; the
    result is validated against a half-resolution pass.
    """
    y = Y.binary_matrix() if isinstance(Y, DirectedNetwork) else np.asarray(Y, dtype=float)
    n = y.shape[0]
    if n != 3:
        raise ValueError("the exact posterior oracle is defined for n = 3")
    off = ~np.eye(3, dtype=bool)
    s = float(y[off].sum())
    c = 6.0 - s
    v = spec.prior.beta_prior_variance

    def moments(n_points: int):
        half = 8.0 * np.sqrt(v)
        grid = np.linspace(-half, half, n_points)
        logpost = -0.5 * grid**2 / v + s * log_ndtr(grid) + c * log_ndtr(-grid)
        w = np.exp(logpost - logpost.max())
        norm = simpson(w, x=grid)
        mean = simpson(w * grid, x=grid) / norm
        second = simpson(w * grid**2, x=grid) / norm
        return mean, second

    mean, second = moments(400_001)
    mean_lo, second_lo = moments(200_001)
    if abs(mean - mean_lo) > 1e-6 * (1.0 + abs(mean)):
        raise gibbs.NumericalError("intercept quadrature did not converge")
    var = second - mean**2
    return float(mean), float(np.sqrt(max(var, 0.0)))


# --- brute-force GOF -----------------------------------------------------------

def gof_stats_slow(net) -> gof.GofStats:
    """Loop-based reference for the four statistics (independent of the
    matrix implementation; shares only the definitions)."""
    y = net.adjacency if isinstance(net, DirectedNetwork) else np.asarray(net, dtype=float)
    n = y.shape[0]
    if n < 3:
        raise ValueError("gof statistics need n >= 3")

    def sample_sd(vals):
        m = sum(vals) / len(vals)
        return (sum((x - m) ** 2 for x in vals) / (len(vals) - 1)) ** 0.5

    row_means = []
    col_means = []
    for i in range(n):
        row = [y[i, j] for j in range(n) if j != i]
        col = [y[j, i] for j in range(n) if j != i]
        row_means.append(sum(row) / (n - 1))
        col_means.append(sum(col) / (n - 1))
    sd_rowmean = sample_sd(row_means)
    sd_colmean = sample_sd(col_means)

    vals = [y[i, j] for i in range(n) for j in range(n) if i != j]
    ybar = sum(vals) / len(vals)
    s = sample_sd(vals)
    if s == 0.0:
        return gof.GofStats(sd_rowmean, sd_colmean, None, None)

    num = 0.0
    den = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                num += (y[i, j] - ybar) * (y[j, i] - ybar)
                den += (y[i, j] - ybar) ** 2
    dyad = num / den

    total = 0.0
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            for k in range(n):
                if k == i or k == j:
                    continue
                total += (y[i, j] - ybar) * (y[j, k] - ybar) * (y[k, i] - ybar)
    triad = total / (n * (n - 1) * (n - 2) * s**3)
    return gof.GofStats(sd_rowmean, sd_colmean, dyad, triad)


# --- oracle suite ---------------------------------------------------------------

@dataclass
class OracleResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _check(results, name, fn):
    t0 = time.perf_counter()
    try:
        passed, detail = fn()
    except Exception as exc:  # an oracle crashing is a failure, not an error
        passed, detail = False, f"raised {type(exc).__name__}: {exc}"
    results.append(OracleResult(name, bool(passed), detail,
                                time.perf_counter() - t0))


def run_verification(seed: int = 0) -> list[OracleResult]:
    """Run the oracle battery; every check is seeded and self-contained."""
    results: list[OracleResult] = []

    def half_normal_mean():
        rng = np.random.default_rng(seed)
        draws = gibbs.sample_sign_truncated(rng, np.zeros(100_000), 1.0,
                                            np.ones(100_000, dtype=bool))
        want = np.sqrt(2.0 / np.pi)
        got = draws.mean()
        return abs(got - want) < 0.01, f"mean {got:.4f} vs sqrt(2/pi) {want:.4f}"

    _check(results, "truncated-normal half-normal mean", half_normal_mean)

    def truncated_moments():
        # conditional of z_ij given z_ji = 2 at rho 0.9: N(1.8, 0.19) cut to (0, inf)
        rng = np.random.default_rng(seed + 1)
        m, s2 = 1.8, 0.19
        sd = np.sqrt(s2)
        draws = gibbs.sample_sign_truncated(rng, np.full(200_000, m), sd,
                                            np.ones(200_000, dtype=bool))
        alpha = -m / sd
        lam = np.exp(-0.5 * alpha**2) / np.sqrt(2 * np.pi) / (1 - 0.5 * (1 + erf(alpha / np.sqrt(2))))
        want_mean = m + sd * lam
        want_var = s2 * (1 + alpha * lam - lam**2)
        ok = (abs(draws.mean() - want_mean) < 0.01
              and abs(draws.var() - want_var) < 0.01)
        return ok, (f"mean {draws.mean():.4f} vs {want_mean:.4f}, "
                    f"var {draws.var():.4f} vs {want_var:.4f}")

    _check(results, "truncated-normal tail moments", truncated_moments)

    def sign_constraint():
        rng = np.random.default_rng(seed + 2)
        mean = rng.normal(0, 3, size=50_000)
        pos = rng.random(50_000) < 0.5
        draws = gibbs.sample_sign_truncated(rng, mean, 0.7, pos)
        ok = np.all(draws[pos] > 0) and np.all(draws[~pos] <= 0)
        return bool(ok), "all draws on the constrained side of zero"

    _check(results, "truncated-normal sign constraint", sign_constraint)

    def iw_recovery():
        rng = np.random.default_rng(seed + 3)
        n = 4000
        w = rng.multivariate_normal([0, 0], np.diag([4.0, 1.0]), size=n)
        draws = [gibbs._inv_wishart(rng, 4.0 + n, np.eye(2) + w.T @ w)
                 for _ in range(400)]
        mean = np.mean(draws, axis=0)
        ok = (abs(mean[0, 0] - 4.0) / 4.0 < 0.1 and abs(mean[1, 1] - 1.0) < 0.1)
        return ok, f"posterior mean diag ({mean[0, 0]:.2f}, {mean[1, 1]:.2f}) vs (4, 1)"

    _check(results, "inverse-Wishart conjugate recovery", iw_recovery)

    def prior_covariance():
        # pin the covariance essentially at I with a near-point-mass prior,
        # then pool (a_i, b_i) draws across prior states: 200 x 500 = 1e5
        big = 100_000.0
        spec = ModelSpec(variant="SRM", iterations=10, burn_in=5, seed=seed,
                         prior=PriorHyper(sab_df=big, sab_scale=big - 3.0))
        rng = np.random.default_rng(seed + 4)
        pools = []
        for _ in range(200):
            state = sample_prior_state(spec, None, rng, n=500)
            pools.append(np.column_stack([state.a, state.b]))
        cov = np.cov(np.vstack(pools).T)
        ok = np.all(np.abs(cov - np.eye(2)) < 0.02)
        return ok, f"sample covariance within 0.02 of I: {np.round(cov, 3).tolist()}"

    _check(results, "prior additive-effect covariance", prior_covariance)

    def quadrature_vs_gibbs():
        y = np.zeros((3, 3))
        y[0, 1] = y[0, 2] = y[1, 0] = y[1, 2] = 1.0  # 4 ones, 2 zeros
        spec = ModelSpec(variant="SRG", iterations=12_000, burn_in=2_000,
                         thinning=1, seed=seed + 5,
                         prior=_frozen_rho_prior())
        chain = gibbs.run_chain(y, None, spec)
        mu = chain.coef_draws()[:, 0]
        want, _ = exact_small_posterior(y, spec)
        ess = gibbs.effective_sample_size(mu)
        mcse = mu.std(ddof=1) / np.sqrt(ess)
        ok = abs(mu.mean() - want) < 3 * mcse
        return ok, f"chain mean {mu.mean():.4f} vs quadrature {want:.4f} (3 mcse = {3 * mcse:.4f})"

    _check(results, "intercept quadrature vs chain", quadrature_vs_gibbs)

    def gof_equivalence():
        rng = np.random.default_rng(seed + 6)
        for n in (5, 8):
            y = (rng.random((n, n)) < 0.4).astype(float)
            np.fill_diagonal(y, 0.0)
            fast = gof.gof_stats_matrix(y)
            slow = gof_stats_slow(y)
            for f, s in zip(fast.as_tuple(), slow.as_tuple()):
                if f is None or s is None:
                    if f is not s:
                        return False, "undefined-statistic mismatch"
                elif abs(f - s) > 1e-12:
                    return False, f"matrix vs loop differ by {abs(f - s):.2e}"
        return True, "matrix and loop implementations agree to 1e-12"

    _check(results, "gof matrix vs brute force", gof_equivalence)

    def symmetric_dyad():
        rng = np.random.default_rng(seed + 7)
        y = (rng.random((12, 12)) < 0.3).astype(float)
        np.fill_diagonal(y, 0.0)
        net = DirectedNetwork(y, tuple(f"n{k}" for k in range(12))).symmetrize()
        stats = gof.gof_stats(net)
        ok = stats.dyad_dep is not None and abs(stats.dyad_dep - 1.0) < 1e-12
        return ok, f"dyad dependence {stats.dyad_dep} on a symmetrized network"

    _check(results, "symmetric dyad dependence is 1", symmetric_dyad)

    def planted_clusters():
        rng = np.random.default_rng(seed + 8)
        blob1 = rng.normal(0, 0.2, size=(20, 2)) + np.array([3.0, 0.0])
        blob2 = rng.normal(0, 0.2, size=(20, 2)) - np.array([3.0, 0.0])
        X = np.vstack([blob1, blob2])
        labels, _, _ = analysis.kmeans(X, 2, seed=seed)
        ok = (len(set(labels[:20])) == 1 and len(set(labels[20:])) == 1
              and labels[0] != labels[20])
        return ok, "two planted blobs recovered exactly"

    _check(results, "k-means planted clusters", planted_clusters)

    def generator_checks():
        spec = ModelSpec(variant="SRG", iterations=10, burn_in=5, seed=0)
        t1 = generate(spec, 200, GenerativeParams(mu=0.0), seed=seed + 9)
        t2 = generate(spec, 200, GenerativeParams(mu=0.0), seed=seed + 9)
        if not np.array_equal(t1.network.binary_matrix(), t2.network.binary_matrix()):
            return False, "same seed gave different networks"
        dens = t1.network.edge_count() / (200 * 199)
        sd3 = 3 * np.sqrt(0.25 / (200 * 199))
        if abs(dens - 0.5) > sd3:
            return False, f"density {dens:.4f} more than 3 sds from 0.5"
        t3 = generate(spec, 200, GenerativeParams(mu=0.0, rho=0.99), seed=seed + 10)
        stats = gof.gof_stats(t3.network)
        if stats.dyad_dep is None or stats.dyad_dep < 0.5:
            return False, f"dyad dependence {stats.dyad_dep} under rho=0.99"
        empty = generate(spec, 50, GenerativeParams(mu=-20.0), seed=seed + 11)
        if empty.network.edge_count() != 0:
            return False, "mu = -20 should give an empty network"
        return True, "determinism, density, reciprocity and saturation all hold"

    _check(results, "generator behaviour", generator_checks)

    def quadrature_symmetry():
        y = np.zeros((3, 3))
        y[0, 1] = y[1, 2] = y[2, 0] = 1.0  # 3 ones, 3 zeros
        spec = ModelSpec(variant="SRG", iterations=10, burn_in=5, seed=0)
        mean, sd = exact_small_posterior(y, spec)
        return abs(mean) < 1e-8, f"symmetric-likelihood posterior mean {mean:.2e}"

    _check(results, "quadrature symmetry", quadrature_symmetry)

    return results


def _frozen_rho_prior() -> PriorHyper:
    # zero proposal sd freezes the dyad correlation at its initial value 0
    return PriorHyper(rho_proposal_sd=0.0)


def format_verification(results: list[OracleResult]) -> str:
    lines = [r.line() for r in results]
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} oracle checks passed")
    return "\n".join(lines) + "\n"

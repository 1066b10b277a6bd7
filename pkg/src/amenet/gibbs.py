"""Gibbs sampler for the probit network models.

Every update is an exact draw from its full conditional except the
within-dyad correlation, which uses a random-walk Metropolis step on the
Fisher transform.  The per-iteration update order is fixed for
reproducibility: latent matrix, joint (intercept, coefficients, additive
effects), additive-effect covariance, multiplicative factors, factor
covariance, dyad correlation.

The dyadic error model couples each ordered pair (i, j) with its mirror
(j, i) through correlation rho.  Conditioning works on the decorrelated
dyad transform, which reduces every Gaussian draw below to closed-form
quantities of the form (T1 - rho*T2)/(1 - rho^2); T1 and T2 depend only on
the design and are precomputed once per chain.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import log_ndtr, ndtri_exp
from scipy.stats import invwishart

from . import gof as gof_mod
from .model import (ModelSpec, ParameterState, PriorHyper, as_design,
                    simulate_network)
from .network import DirectedNetwork

__all__ = [
    "Chain",
    "NumericalError",
    "run_chain",
    "update_z",
    "update_beta_ab",
    "update_sigma_ab",
    "update_psi",
    "update_uv",
    "update_rho",
    "sample_sign_truncated",
    "effective_sample_size",
    "empirical_bayes_hyper",
    "write_samples_csv",
    "read_samples_csv",
]


class NumericalError(RuntimeError):
    """Linear algebra failed mid-chain (singular conditional, non-SPD scale)."""


# --- truncated normal -------------------------------------------------------

def sample_sign_truncated(rng: np.random.Generator, mean, sd, positive) -> np.ndarray:
    """Vectorised one-sided truncated normal draws.

    Where ``positive`` is True the draw is from N(mean, sd^2) restricted to
    (0, inf), elsewhere restricted to (-inf, 0].  Uses the inverse-CDF in
    log space (ndtri_exp of log_ndtr), which stays exact far into the tails
    where a naive Phi-inverse saturates.
    """
    mean = np.asarray(mean, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    m = np.where(positive, -mean, mean)
    # draw from N(m, sd^2) truncated to (-inf, 0]; flip back afterwards
    bound = -m / sd
    w = 1.0 - rng.random(m.shape)  # in (0, 1]
    t = m + sd * ndtri_exp(np.log(w) + log_ndtr(bound))
    x = np.where(positive, -t, t)
    # the w == 1 boundary could produce an exact 0 on a positive entry
    return np.where(positive & (x <= 0.0), np.finfo(float).tiny, x)


def _draw_mvn_precision(rng: np.random.Generator, prec: np.ndarray,
                        lin: np.ndarray) -> np.ndarray:
    """Draw from N(prec^-1 lin, prec^-1) via one Cholesky factorisation."""
    try:
        L = cholesky(prec, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"conditional precision not SPD: {exc}") from exc
    mean = cho_solve((L, True), lin, check_finite=False)
    eta = rng.standard_normal(lin.shape[0])
    return mean + solve_triangular(L.T, eta, lower=False, check_finite=False)


def _inv_wishart(rng, df: float, scale: np.ndarray) -> np.ndarray:
    try:
        draw = invwishart.rvs(df=df, scale=scale, random_state=rng)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"inverse-Wishart scale not SPD: {exc}") from exc
    return np.atleast_2d(draw)


# --- closed-form design Grams ------------------------------------------------

def _build_grams(Xd: np.ndarray, n: int, has_covs: bool, has_ab: bool):
    """T1 = sum over ordered pairs of d_ij d_ij', T2 = sum of d_ij d_ji',
    for design rows d_ij = (1, X_i, X_j, e_i(a), e_j(b)) with inactive
    blocks dropped.  Both reduce to node-level sums of the covariates."""
    q = Xd.shape[1] if has_covs else 0
    p = 1 + 2 * q
    d = p + (2 * n if has_ab else 0)
    T1 = np.zeros((d, d))
    T2 = np.zeros((d, d))
    r = slice(1, 1 + q)
    c = slice(1 + q, 1 + 2 * q)
    T1[0, 0] = T2[0, 0] = n * (n - 1)
    if q:
        S = Xd.sum(axis=0)
        G = Xd.T @ Xd
        for T in (T1, T2):
            T[0, r] = (n - 1) * S
            T[0, c] = (n - 1) * S
            T[r, 0] = (n - 1) * S
            T[c, 0] = (n - 1) * S
        T1[r, r] = (n - 1) * G
        T1[c, c] = (n - 1) * G
        T1[r, c] = np.outer(S, S) - G
        T1[c, r] = T1[r, c].T
        T2[r, r] = np.outer(S, S) - G
        T2[c, c] = np.outer(S, S) - G
        T2[r, c] = (n - 1) * G
        T2[c, r] = (n - 1) * G
    if has_ab:
        pa = slice(p, p + n)
        pb = slice(p + n, p + 2 * n)
        ar = np.arange(n)
        ones_min_eye = np.ones((n, n)) - np.eye(n)
        T1[0, pa] = T1[0, pb] = n - 1.0
        T1[pa, 0] = T1[pb, 0] = n - 1.0
        T2[0, pa] = T2[0, pb] = n - 1.0
        T2[pa, 0] = T2[pb, 0] = n - 1.0
        if q:
            col_self = (n - 1) * Xd.T           # column i: (n-1) X_i
            col_rest = S[:, None] - Xd.T        # column i: S - X_i
            T1[r, pa] = col_self
            T1[c, pa] = col_rest
            T1[r, pb] = col_rest
            T1[c, pb] = col_self
            T2[r, pa] = col_rest
            T2[c, pa] = col_self
            T2[r, pb] = col_self
            T2[c, pb] = col_rest
            for T in (T1, T2):
                T[pa, r] = T[r, pa].T
                T[pa, c] = T[c, pa].T
                T[pb, r] = T[r, pb].T
                T[pb, c] = T[c, pb].T
        T1[pa, pa] = (n - 1.0) * np.eye(n)
        T1[pb, pb] = (n - 1.0) * np.eye(n)
        T1[pa, pb] = ones_min_eye
        T1[pb, pa] = ones_min_eye
        T2[pa, pa] = ones_min_eye
        T2[pb, pa] = (n - 1.0) * np.eye(n)
        T2[pa, pb] = (n - 1.0) * np.eye(n)
        T2[pb, pb] = ones_min_eye
    return T1, T2


def _build_gram_symmetric(Xd: np.ndarray, n: int, has_covs: bool, has_ab: bool):
    """Gram over the n(n-1)/2 dyads with rows (1, X_i + X_j, e_i + e_j)."""
    q = Xd.shape[1] if has_covs else 0
    p = 1 + q
    d = p + (n if has_ab else 0)
    T = np.zeros((d, d))
    T[0, 0] = n * (n - 1) / 2.0
    r = slice(1, 1 + q)
    if q:
        S = Xd.sum(axis=0)
        G = Xd.T @ Xd
        T[0, r] = (n - 1) * S
        T[r, 0] = (n - 1) * S
        T[r, r] = (n - 2) * G + np.outer(S, S)
    if has_ab:
        pa = slice(p, p + n)
        T[0, pa] = n - 1.0
        T[pa, 0] = n - 1.0
        if q:
            cols = (n - 2) * Xd.T + S[:, None]
            T[r, pa] = cols
            T[pa, r] = cols.T
        T[pa, pa] = (n - 2.0) * np.eye(n) + np.ones((n, n))
    return T


# --- engines -----------------------------------------------------------------

class _Engine:
    """Directed-network sampler state and update steps."""

    def __init__(self, Y, Xd, spec: ModelSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.n = n = Xd.shape[0] if Xd.shape[0] else Y.shape[0]
        self.Y = Y
        self.Xd = Xd if spec.uses_covariates else np.zeros((n, 0))
        self.q = q = self.Xd.shape[1]
        self.R = spec.latent_rank
        self.iu, self.ju = np.triu_indices(n, 1)
        if Y is not None:
            self.pos_u = Y[self.iu, self.ju] == 1.0
            self.pos_l = Y[self.ju, self.iu] == 1.0
        self.p = 1 + 2 * q
        self.has_ab = spec.uses_additive
        self.d = self.p + (2 * n if self.has_ab else 0)
        self.T1, self.T2 = _build_grams(self.Xd, n, q > 0, self.has_ab)
        self.v_beta = spec.prior.beta_prior_variance
        if self.has_ab:
            self.sab_df, self.sab_scale = spec.prior.resolved_sab(False)
        if spec.uses_multiplicative:
            self.psi_df, self.psi_scale = spec.prior.resolved_psi(self.R, False)
        self.rho_sd = spec.prior.rho_proposal_sd
        self.rho_accepted = 0
        self.rho_attempts = 0
        self.z = None

    # -- state ------------------------------------------------------------

    def init_state(self):
        n, q, R = self.n, self.q, self.R
        self.mu = 0.0
        self.beta_r = np.zeros(q)
        self.beta_c = np.zeros(q)
        self.a = np.zeros(n)
        self.b = np.zeros(n)
        if self.has_ab:
            self.sigma_ab = (self.sab_scale / (self.sab_df - 3.0)
                             if self.sab_df > 3.0 else np.eye(2))
        else:
            self.sigma_ab = np.zeros((2, 2))
        self.rho = 0.0
        z = np.abs(self.rng.standard_normal((n, n)))
        self.z = np.where(self.Y == 1.0, z, -z)
        np.fill_diagonal(self.z, 0.0)
        if self.spec.uses_multiplicative:
            self.psi = (self.psi_scale / (self.psi_df - 2 * R - 1.0)
                        if self.psi_df > 2 * R + 1.0 else np.eye(2 * R))
            # warm start the factors from the leading SVD of the signed init
            w, s, vt = np.linalg.svd(self.z, full_matrices=False)
            root = np.sqrt(s[:R])
            self.u = w[:, :R] * root
            self.v = vt[:R].T * root
        else:
            self.psi = np.zeros((0, 0))
            self.u = np.zeros((n, 0))
            self.v = np.zeros((n, 0))
        self._refresh_means()

    def load_state(self, state: ParameterState):
        self.mu = float(state.mu)
        self.beta_r = np.array(state.beta_r, dtype=float)
        self.beta_c = np.array(state.beta_c, dtype=float)
        self.a = np.array(state.a, dtype=float)
        self.b = np.array(state.b, dtype=float)
        self.u = np.array(state.u, dtype=float)
        self.v = np.array(state.v, dtype=float)
        self.sigma_ab = np.array(state.sigma_ab, dtype=float)
        self.psi = np.array(state.psi, dtype=float)
        self.rho = float(state.rho)
        if state.z is not None:
            self.z = np.array(state.z, dtype=float)
            np.fill_diagonal(self.z, 0.0)
        self._refresh_means()

    def export_state(self, keep_z: bool = False) -> ParameterState:
        return ParameterState(
            mu=float(self.mu), beta_r=self.beta_r.copy(), beta_c=self.beta_c.copy(),
            a=self.a.copy(), b=self.b.copy(), u=self.u.copy(), v=self.v.copy(),
            sigma_ab=self.sigma_ab.copy(), psi=self.psi.copy(), rho=float(self.rho),
            z=self.z.copy() if (keep_z and self.z is not None) else None)

    def _refresh_means(self):
        n = self.n
        m = np.full((n, n), self.mu)
        if self.q:
            m += (self.Xd @ self.beta_r)[:, None]
            m += (self.Xd @ self.beta_c)[None, :]
        if self.has_ab:
            m += self.a[:, None]
            m += self.b[None, :]
        np.fill_diagonal(m, 0.0)
        self.m_add = m
        self.m_full = m + self.u @ self.v.T if self.spec.uses_multiplicative else m
        if self.spec.uses_multiplicative:
            np.fill_diagonal(self.m_full, 0.0)

    # -- updates ------------------------------------------------------------

    def step_z(self):
        iu, ju = self.iu, self.ju
        m_u = self.m_full[iu, ju]
        m_l = self.m_full[ju, iu]
        rho = self.rho
        sd = np.sqrt(1.0 - rho * rho)
        cond = m_u + rho * (self.z[ju, iu] - m_l)
        z_u = sample_sign_truncated(self.rng, cond, sd, self.pos_u)
        cond = m_l + rho * (z_u - m_u)
        z_l = sample_sign_truncated(self.rng, cond, sd, self.pos_l)
        self.z[iu, ju] = z_u
        self.z[ju, iu] = z_l

    def step_beta_ab(self):
        n, p, q = self.n, self.p, self.q
        rho = self.rho
        r2 = 1.0 - rho * rho
        resid = self.z - self.u @ self.v.T if self.spec.uses_multiplicative else self.z
        rt = (resid - rho * resid.T) / r2
        np.fill_diagonal(rt, 0.0)
        rowsum = rt.sum(axis=1)
        colsum = rt.sum(axis=0)
        lin = np.empty(self.d)
        lin[0] = rowsum.sum()
        if q:
            lin[1:1 + q] = self.Xd.T @ rowsum
            lin[1 + q:p] = self.Xd.T @ colsum
        if self.has_ab:
            lin[p:p + n] = rowsum
            lin[p + n:] = colsum
        prec = (self.T1 - rho * self.T2) / r2
        idx = np.arange(p)
        prec[idx, idx] += 1.0 / self.v_beta
        if self.has_ab:
            w = np.linalg.inv(self.sigma_ab)
            ar = np.arange(n)
            prec[p + ar, p + ar] += w[0, 0]
            prec[p + n + ar, p + n + ar] += w[1, 1]
            prec[p + ar, p + n + ar] += w[0, 1]
            prec[p + n + ar, p + ar] += w[0, 1]
        theta = _draw_mvn_precision(self.rng, prec, lin)
        self.mu = float(theta[0])
        if q:
            self.beta_r = theta[1:1 + q].copy()
            self.beta_c = theta[1 + q:p].copy()
        if self.has_ab:
            self.a = theta[p:p + n].copy()
            self.b = theta[p + n:].copy()

    def step_sigma_ab(self):
        w = np.column_stack([self.a, self.b])
        self.sigma_ab = _inv_wishart(self.rng, self.sab_df + self.n,
                                     self.sab_scale + w.T @ w)

    def step_uv(self):
        n, R = self.n, self.R
        rho = self.rho
        r2 = 1.0 - rho * rho
        resid = self.z - self.m_add
        psi_inv = np.linalg.inv(self.psi)
        U, V = self.u, self.v
        guu = U.T @ U
        gvv = V.T @ V
        gvu = V.T @ U
        for i in range(n):
            ui = U[i].copy()
            vi = V[i].copy()
            guu -= np.outer(ui, ui)
            gvv -= np.outer(vi, vi)
            gvu -= np.outer(vi, ui)
            rrow = resid[i, :].copy()
            rcol = resid[:, i].copy()
            rrow[i] = 0.0
            rcol[i] = 0.0
            trow = (rrow - rho * rcol) / r2
            tcol = (rcol - rho * rrow) / r2
            h = np.concatenate([V.T @ trow, U.T @ tcol])
            prec = psi_inv.copy()
            prec[:R, :R] += gvv / r2
            prec[R:, R:] += guu / r2
            cross = (-rho / r2) * gvu
            prec[:R, R:] += cross
            prec[R:, :R] += cross.T
            w = _draw_mvn_precision(self.rng, prec, h)
            U[i] = w[:R]
            V[i] = w[R:]
            guu += np.outer(U[i], U[i])
            gvv += np.outer(V[i], V[i])
            gvu += np.outer(V[i], U[i])

    def step_psi(self):
        w = np.concatenate([self.u, self.v], axis=1)
        self.psi = _inv_wishart(self.rng, self.psi_df + self.n,
                                self.psi_scale + w.T @ w)

    def step_rho(self):
        self.rho_attempts += 1
        e = self.z - self.m_full
        eu = e[self.iu, self.ju]
        el = e[self.ju, self.iu]
        ss = float(eu @ eu + el @ el)
        cp = float(eu @ el)
        nd = self.iu.size

        def log_target(r):
            r2 = 1.0 - r * r
            # bivariate normal dyad likelihood, uniform prior on (-1, 1),
            # plus the Fisher-transform Jacobian log(1 - r^2)
            return -0.5 * nd * np.log(r2) - (ss - 2.0 * r * cp) / (2.0 * r2) + np.log(r2)

        phi = np.arctanh(self.rho)
        prop = np.tanh(phi + self.rho_sd * self.rng.standard_normal())
        delta = log_target(prop) - log_target(self.rho)
        if np.log(1.0 - self.rng.random()) < delta:
            self.rho = float(prop)
            self.rho_accepted += 1

    def iterate(self):
        self.step_z()
        self.step_beta_ab()
        if self.has_ab:
            self.step_sigma_ab()
        if self.spec.uses_multiplicative:
            self._refresh_means()
            self.step_uv()
            self.step_psi()
        self._refresh_means()
        if self.spec.uses_rho:
            self.step_rho()


class _SymmetricEngine:
    """Undirected variant: one latent value per dyad, shared coefficients,
    one additive effect per node and a symmetric factor term u_i'u_j."""

    def __init__(self, Y, Xd, spec: ModelSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.n = n = Xd.shape[0] if Xd.shape[0] else Y.shape[0]
        self.Y = Y
        self.Xd = Xd if spec.uses_covariates else np.zeros((n, 0))
        self.q = q = self.Xd.shape[1]
        self.R = spec.latent_rank
        self.iu, self.ju = np.triu_indices(n, 1)
        if Y is not None:
            self.pos_u = Y[self.iu, self.ju] == 1.0
        self.p = 1 + q
        self.has_ab = spec.uses_additive
        self.d = self.p + (n if self.has_ab else 0)
        self.T = _build_gram_symmetric(self.Xd, n, q > 0, self.has_ab)
        self.v_beta = spec.prior.beta_prior_variance
        if self.has_ab:
            df, scale = spec.prior.resolved_sab(True)
            self.sa_df, self.sa_scale = df, float(scale[0, 0])
        if spec.uses_multiplicative:
            self.psi_df, self.psi_scale = spec.prior.resolved_psi(self.R, True)
        self.rho_accepted = 0
        self.rho_attempts = 0
        self.z = None

    def init_state(self):
        n, q, R = self.n, self.q, self.R
        self.mu = 0.0
        self.beta = np.zeros(q)
        self.a = np.zeros(n)
        self.sigma_a2 = (self.sa_scale / (self.sa_df - 2.0)
                         if self.has_ab and self.sa_df > 2.0 else 1.0) if self.has_ab else 0.0
        z = np.abs(self.rng.standard_normal((n, n)))
        z = np.triu(z, 1)
        z = z + z.T
        self.z = np.where(self.Y == 1.0, z, -z)
        np.fill_diagonal(self.z, 0.0)
        if self.spec.uses_multiplicative:
            self.psi_r = (self.psi_scale / (self.psi_df - R - 1.0)
                          if self.psi_df > R + 1.0 else np.eye(R))
            vals, vecs = np.linalg.eigh(self.z)
            order = np.argsort(-np.abs(vals))[:R]
            self.u = vecs[:, order] * np.sqrt(np.abs(vals[order]))
        else:
            self.psi_r = np.zeros((0, 0))
            self.u = np.zeros((n, 0))
        self._refresh_means()

    def load_state(self, state: ParameterState):
        self.mu = float(state.mu)
        self.beta = np.array(state.beta_r, dtype=float)
        self.a = np.array(state.a, dtype=float)
        self.sigma_a2 = float(state.sigma_ab[0, 0]) if state.sigma_ab.size else 0.0
        self.u = np.array(state.u, dtype=float)
        R = self.R
        self.psi_r = np.array(state.psi[:R, :R], dtype=float) if state.psi.size else np.zeros((0, 0))
        if state.z is not None:
            self.z = np.array(state.z, dtype=float)
            np.fill_diagonal(self.z, 0.0)
        self._refresh_means()

    def export_state(self, keep_z: bool = False) -> ParameterState:
        s2 = self.sigma_a2
        R = self.R
        if self.spec.uses_multiplicative:
            psi = np.block([[self.psi_r, self.psi_r], [self.psi_r, self.psi_r]])
        else:
            psi = np.zeros((0, 0))
        return ParameterState(
            mu=float(self.mu), beta_r=self.beta.copy(), beta_c=self.beta.copy(),
            a=self.a.copy(), b=self.a.copy(), u=self.u.copy(), v=self.u.copy(),
            sigma_ab=np.full((2, 2), s2) if self.has_ab else np.zeros((2, 2)),
            psi=psi, rho=0.0,
            z=self.z.copy() if (keep_z and self.z is not None) else None)

    def _refresh_means(self):
        n = self.n
        m = np.full((n, n), self.mu)
        if self.q:
            xb = self.Xd @ self.beta
            m += xb[:, None]
            m += xb[None, :]
        if self.has_ab:
            m += self.a[:, None]
            m += self.a[None, :]
        np.fill_diagonal(m, 0.0)
        self.m_add = m
        self.m_full = m + self.u @ self.u.T if self.spec.uses_multiplicative else m
        if self.spec.uses_multiplicative:
            np.fill_diagonal(self.m_full, 0.0)

    def step_z(self):
        iu, ju = self.iu, self.ju
        z_u = sample_sign_truncated(self.rng, self.m_full[iu, ju], 1.0, self.pos_u)
        self.z[iu, ju] = z_u
        self.z[ju, iu] = z_u

    def step_beta_ab(self):
        n, p, q = self.n, self.p, self.q
        resid = self.z - self.u @ self.u.T if self.spec.uses_multiplicative else self.z
        resid = resid.copy()
        np.fill_diagonal(resid, 0.0)
        rowsum = resid.sum(axis=1)
        lin = np.empty(self.d)
        lin[0] = rowsum.sum() / 2.0
        if q:
            lin[1:p] = self.Xd.T @ rowsum
        if self.has_ab:
            lin[p:] = rowsum
        prec = self.T.copy()
        idx = np.arange(p)
        prec[idx, idx] += 1.0 / self.v_beta
        if self.has_ab:
            ar = np.arange(n)
            prec[p + ar, p + ar] += 1.0 / self.sigma_a2
        theta = _draw_mvn_precision(self.rng, prec, lin)
        self.mu = float(theta[0])
        if q:
            self.beta = theta[1:p].copy()
        if self.has_ab:
            self.a = theta[p:].copy()

    def step_sigma_a(self):
        draw = _inv_wishart(self.rng, self.sa_df + self.n,
                            np.atleast_2d(self.sa_scale + self.a @ self.a))
        self.sigma_a2 = float(draw[0, 0])

    def step_uv(self):
        n, R = self.n, self.R
        resid = self.z - self.m_add
        psi_inv = np.linalg.inv(self.psi_r)
        U = self.u
        guu = U.T @ U
        for i in range(n):
            ui = U[i].copy()
            guu -= np.outer(ui, ui)
            rrow = resid[i, :].copy()
            rrow[i] = 0.0
            h = U.T @ rrow
            prec = psi_inv + guu
            w = _draw_mvn_precision(self.rng, prec, h)
            U[i] = w
            guu += np.outer(w, w)

    def step_psi(self):
        self.psi_r = _inv_wishart(self.rng, self.psi_df + self.n,
                                  self.psi_scale + self.u.T @ self.u)

    def iterate(self):
        self.step_z()
        self.step_beta_ab()
        if self.has_ab:
            self.step_sigma_a()
        if self.spec.uses_multiplicative:
            self._refresh_means()
            self.step_uv()
            self.step_psi()
        self._refresh_means()


# --- chain -------------------------------------------------------------------

@dataclass
class Chain:
    """Thinned posterior sample plus per-state predictive GOF statistics."""

    spec: ModelSpec
    node_ids: tuple[str, ...]
    design_names: list[str]
    states: list[ParameterState]
    stored_iterations: list[int]
    pp_gof: list = field(default_factory=list)
    acceptance_rho: float | None = None
    seed: int = 0
    observed: np.ndarray | None = None
    design: np.ndarray | None = None
    elapsed_seconds: float = 0.0

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def coef_names(self) -> list[str]:
        names = ["mu"]
        names += [f"beta_r[{nm}]" for nm in self.design_names]
        names += [f"beta_c[{nm}]" for nm in self.design_names]
        return names

    def coef_draws(self) -> np.ndarray:
        return np.array([
            np.concatenate([[s.mu], s.beta_r, s.beta_c]) for s in self.states])

    def a_draws(self) -> np.ndarray:
        return np.array([s.a for s in self.states])

    def b_draws(self) -> np.ndarray:
        return np.array([s.b for s in self.states])

    def rho_draws(self) -> np.ndarray:
        return np.array([s.rho for s in self.states])

    def u_draws(self) -> np.ndarray:
        return np.array([s.u for s in self.states])

    def v_draws(self) -> np.ndarray:
        return np.array([s.v for s in self.states])

    def summary(self) -> dict:
        """Posterior means, sds, quantiles, two-sided tail probabilities and
        effective sample sizes for the scalar parameters."""
        params: dict[str, np.ndarray] = {}
        for name, col in zip(self.coef_names(), self.coef_draws().T):
            params[name] = col
        if self.spec.uses_rho:
            params["rho"] = self.rho_draws()
        if self.spec.uses_additive:
            sab = np.array([s.sigma_ab for s in self.states])
            params["sigma_a2"] = sab[:, 0, 0]
            params["sigma_ab"] = sab[:, 0, 1]
            params["sigma_b2"] = sab[:, 1, 1]
        if self.spec.uses_multiplicative:
            psi = np.array([s.psi for s in self.states])
            for k in range(psi.shape[1]):
                params[f"psi_diag[{k + 1}]"] = psi[:, k, k]
        out = {}
        for name, draws in params.items():
            q = np.quantile(draws, [0.025, 0.5, 0.975])
            out[name] = {
                "mean": float(draws.mean()),
                "sd": float(draws.std(ddof=1)) if draws.size > 1 else 0.0,
                "q025": float(q[0]), "q500": float(q[1]), "q975": float(q[2]),
                "tail_prob": tail_probability(draws),
                "ess": effective_sample_size(draws),
            }
        return {
            "variant": self.spec.variant,
            "n_states": len(self.states),
            "acceptance_rho": self.acceptance_rho,
            "seed": self.seed,
            "parameters": out,
        }


def tail_probability(draws: np.ndarray) -> float:
    """Two-sided posterior tail probability 2*min(P(x>0), P(x<0))."""
    draws = np.asarray(draws, dtype=float)
    return float(2.0 * min(np.mean(draws > 0.0), np.mean(draws < 0.0)))


def effective_sample_size(x: np.ndarray) -> float:
    """Geyer initial-positive-sequence ESS estimate for one scalar chain."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.ptp(x) == 0.0:
        return float(n)
    xc = x - x.mean()
    # FFT autocovariance, biased normalisation (1/n)
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, m)
    acov = np.fft.irfft(f * np.conjugate(f), m)[:n].real / n
    if acov[0] <= 0:
        return float(n)
    rho = acov / acov[0]
    tau = 0.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + (rho[k + 1] if k + 1 < n else 0.0)
        if pair <= 0.0:
            break
        tau += pair
    ess = n / max(2.0 * tau - 1.0, 1.0)
    return float(min(max(ess, 1.0), n))


def _coerce_inputs(Y, X, spec: ModelSpec):
    if isinstance(Y, DirectedNetwork):
        node_ids = Y.node_ids
        if spec.symmetric and not Y.symmetric:
            raise ValueError("spec.symmetric is set; symmetrize the network first")
        y = Y.binary_matrix()
    else:
        y = np.asarray(Y, dtype=float).copy()
        np.fill_diagonal(y, 0.0)
        node_ids = tuple(f"n{k}" for k in range(y.shape[0]))
        if spec.symmetric and not np.array_equal(y, y.T):
            raise ValueError("spec.symmetric is set but the adjacency is not symmetric")
    off = ~np.eye(y.shape[0], dtype=bool)
    if not np.all((y[off] == 0.0) | (y[off] == 1.0)):
        raise ValueError("adjacency entries must be binary")
    Xd, names = as_design(X, y.shape[0])
    if spec.uses_covariates and Xd.shape[0] != y.shape[0]:
        raise ValueError("covariate rows do not match the network size")
    return y, node_ids, Xd, names


def run_chain(Y, X, spec: ModelSpec, store_z: bool = False) -> Chain:
    """Run one seeded Gibbs chain and return the thinned sample.

    Deterministic given (Y, X, spec): the generator is seeded from
    ``spec.seed`` and updates run in a fixed order.  Stored states drop the
    latent matrix unless ``store_z`` is set (it dominates memory at scale).
    Each stored state also records the GOF statistics of one network
    simulated from the model at that state (networks with n >= 3).
    """
    y, node_ids, Xd, names = _coerce_inputs(Y, X, spec)
    rng = np.random.default_rng(spec.seed)
    cls = _SymmetricEngine if spec.symmetric else _Engine
    eng = cls(y, Xd, spec, rng)
    eng.init_state()
    states: list[ParameterState] = []
    stored_iters: list[int] = []
    pp: list = []
    t0 = time.perf_counter()
    for t in range(1, spec.iterations + 1):
        try:
            eng.iterate()
        except NumericalError as exc:
            raise NumericalError(f"iteration {t}: {exc}") from exc
        if t > spec.burn_in and (t - spec.burn_in) % spec.thinning == 0:
            states.append(eng.export_state(keep_z=store_z))
            stored_iters.append(t)
            if eng.n >= 3:
                y_sim = simulate_network(eng.m_full, getattr(eng, "rho", 0.0),
                                         rng, symmetric=spec.symmetric)
                pp.append(gof_mod.gof_stats_matrix(y_sim))
    elapsed = time.perf_counter() - t0
    acc = (eng.rho_accepted / eng.rho_attempts) if eng.rho_attempts else None
    return Chain(spec=spec, node_ids=tuple(node_ids), design_names=names,
                 states=states, stored_iterations=stored_iters, pp_gof=pp,
                 acceptance_rho=acc, seed=spec.seed, observed=y, design=Xd,
                 elapsed_seconds=elapsed)


# --- public single-update operations (used mainly by tests/diagnostics) ------

def _engine_for(state: ParameterState, spec: ModelSpec, rng, Y=None, X=None,
                need_z: bool = False):
    if need_z and state.z is None:
        raise ValueError("state carries no latent matrix (was it stored slim?)")
    n = state.a.shape[0]
    Xd, _ = as_design(X, n)
    y = None
    if Y is not None:
        y = Y.binary_matrix() if isinstance(Y, DirectedNetwork) else np.asarray(Y, dtype=float)
    cls = _SymmetricEngine if spec.symmetric else _Engine
    eng = cls(y, Xd, spec, rng)
    eng.load_state(state)
    return eng


def update_z(rng, state: ParameterState, Y, spec: ModelSpec, X=None) -> ParameterState:
    """Redraw the latent matrix from its truncated-normal full conditional."""
    eng = _engine_for(state, spec, rng, Y=Y, X=X, need_z=True)
    eng.step_z()
    return eng.export_state(keep_z=True)


def update_beta_ab(rng, state: ParameterState, X, spec: ModelSpec) -> ParameterState:
    """Joint draw of (intercept, coefficients, additive effects)."""
    eng = _engine_for(state, spec, rng, X=X, need_z=True)
    eng.step_beta_ab()
    return eng.export_state(keep_z=True)


def update_sigma_ab(rng, state: ParameterState, spec: ModelSpec) -> ParameterState:
    """Conjugate inverse-Wishart draw for the additive-effect covariance."""
    eng = _engine_for(state, spec, rng)
    if spec.symmetric:
        eng.step_sigma_a()
    else:
        eng.step_sigma_ab()
    return eng.export_state(keep_z=True)


def update_psi(rng, state: ParameterState, spec: ModelSpec) -> ParameterState:
    """Conjugate inverse-Wishart draw for the factor covariance."""
    eng = _engine_for(state, spec, rng)
    eng.step_psi()
    return eng.export_state(keep_z=True)


def update_uv(rng, state: ParameterState, X, spec: ModelSpec) -> ParameterState:
    """Sweep the nodes in order, redrawing each node's factor pair."""
    if not spec.uses_multiplicative:
        raise ValueError("factor update only applies to the AME variant")
    eng = _engine_for(state, spec, rng, X=X, need_z=True)
    eng.step_uv()
    return eng.export_state(keep_z=True)


def update_rho(rng, state: ParameterState, X, spec: ModelSpec) -> tuple[ParameterState, bool]:
    """Metropolis step on the Fisher transform of the dyad correlation."""
    if not spec.uses_rho:
        raise ValueError(f"{spec.variant} does not estimate the dyad correlation")
    eng = _engine_for(state, spec, rng, X=X, need_z=True)
    eng.step_rho()
    return eng.export_state(keep_z=True), eng.rho_accepted > 0


# --- empirical Bayes ---------------------------------------------------------

def empirical_bayes_hyper(Y, X, spec: ModelSpec, pilot_iterations: int = 2000,
                          pilot_burn: int = 500, pilot_thinning: int = 5) -> PriorHyper:
    """Calibrate the inverse-Wishart scales from short pilot chains.

    A pilot with additive effects only (plus covariates when available) sets
    the additive-effect scale; for AME a diffuse-prior pilot of the full
    model sets the factor scale.  df is fixed at dim + 2 so the prior mean
    equals the pilot posterior mean.
    """
    prior = spec.prior
    diffuse = replace(prior, sab_df=None, sab_scale=None, psi_df=None, psi_scale=None)
    if spec.uses_additive:
        n_nodes = Y.n if isinstance(Y, DirectedNetwork) else np.asarray(Y).shape[0]
        _, names = as_design(X, n_nodes)
        pilot_variant = "SRRM" if (spec.uses_covariates and len(names)) else "SRM"
        pspec = ModelSpec(variant=pilot_variant, latent_rank=0, symmetric=spec.symmetric,
                          prior=diffuse, iterations=pilot_iterations, burn_in=pilot_burn,
                          thinning=pilot_thinning, seed=spec.seed + 101)
        pilot = run_chain(Y, X if pspec.uses_covariates else None, pspec)
        if spec.symmetric:
            sab_scale = float(np.mean([s.sigma_ab[0, 0] for s in pilot.states]))
            prior = replace(prior, sab_df=3.0, sab_scale=sab_scale)
        else:
            sab_scale = np.mean([s.sigma_ab for s in pilot.states], axis=0)
            prior = replace(prior, sab_df=4.0, sab_scale=sab_scale)
    if spec.uses_multiplicative:
        pspec = replace(spec, prior=diffuse, iterations=pilot_iterations,
                        burn_in=pilot_burn, thinning=pilot_thinning, seed=spec.seed + 202)
        pilot = run_chain(Y, X, pspec)
        R = spec.latent_rank
        dim = R if spec.symmetric else 2 * R
        if spec.symmetric:
            psi_scale = np.mean([s.psi[:R, :R] for s in pilot.states], axis=0)
        else:
            psi_scale = np.mean([s.psi for s in pilot.states], axis=0)
        prior = replace(prior, psi_df=float(dim + 2), psi_scale=psi_scale)
    return prior


# --- samples file ------------------------------------------------------------

def _state_rows(chain: Chain, state: ParameterState):
    yield "mu", state.mu
    for nm, val in zip(chain.design_names, state.beta_r):
        yield f"beta_r[{nm}]", val
    for nm, val in zip(chain.design_names, state.beta_c):
        yield f"beta_c[{nm}]", val
    if chain.spec.uses_additive:
        for nm, val in zip(chain.node_ids, state.a):
            yield f"a[{nm}]", val
        for nm, val in zip(chain.node_ids, state.b):
            yield f"b[{nm}]", val
        yield "sigma_ab[1|1]", state.sigma_ab[0, 0]
        yield "sigma_ab[1|2]", state.sigma_ab[0, 1]
        yield "sigma_ab[2|2]", state.sigma_ab[1, 1]
    if chain.spec.uses_multiplicative:
        R = chain.spec.latent_rank
        for nm, row in zip(chain.node_ids, state.u):
            for k in range(R):
                yield f"u[{nm}|{k + 1}]", row[k]
        for nm, row in zip(chain.node_ids, state.v):
            for k in range(R):
                yield f"v[{nm}|{k + 1}]", row[k]
        dim = state.psi.shape[0]
        for i in range(dim):
            for j in range(i, dim):
                yield f"psi[{i + 1}|{j + 1}]", state.psi[i, j]
    yield "rho", state.rho


def write_samples_csv(chain: Chain, path) -> None:
    """Columnar samples file: iteration, parameter, value."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "parameter", "value"])
        for it, state in zip(chain.stored_iterations, chain.states):
            for name, val in _state_rows(chain, state):
                w.writerow([it, name, format(float(val), ".17g")])


def read_samples_csv(path, spec: ModelSpec, node_ids) -> Chain:
    """Rebuild a chain (states only, no latent matrices) from a samples file."""
    node_ids = tuple(node_ids)
    n = len(node_ids)
    pos = {nm: k for k, nm in enumerate(node_ids)}
    R = spec.latent_rank
    per_iter: dict[int, dict[str, float]] = {}
    design_names: list[str] = []
    with open(path, encoding="utf-8", newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header[:3] != ["iteration", "parameter", "value"]:
            raise ValueError(f"{path}: not a samples file")
        for it_s, name, val_s in rd:
            it = int(it_s)
            per_iter.setdefault(it, {})[name] = float(val_s)
            if name.startswith("beta_r[") and name[7:-1] not in design_names:
                design_names.append(name[7:-1])
    states = []
    iters = sorted(per_iter)
    dim_psi = 2 * R
    for it in iters:
        row = per_iter[it]
        q = len(design_names)
        beta_r = np.array([row[f"beta_r[{nm}]"] for nm in design_names]) if q else np.zeros(0)
        beta_c = np.array([row[f"beta_c[{nm}]"] for nm in design_names]) if q else np.zeros(0)
        a = np.zeros(n)
        b = np.zeros(n)
        sigma_ab = np.zeros((2, 2))
        if spec.uses_additive:
            for nm in node_ids:
                a[pos[nm]] = row[f"a[{nm}]"]
                b[pos[nm]] = row[f"b[{nm}]"]
            sigma_ab = np.array([[row["sigma_ab[1|1]"], row["sigma_ab[1|2]"]],
                                 [row["sigma_ab[1|2]"], row["sigma_ab[2|2]"]]])
        u = np.zeros((n, R)) if R else np.zeros((n, 0))
        v = np.zeros((n, R)) if R else np.zeros((n, 0))
        psi = np.zeros((dim_psi, dim_psi)) if R else np.zeros((0, 0))
        if spec.uses_multiplicative:
            for nm in node_ids:
                for k in range(R):
                    u[pos[nm], k] = row[f"u[{nm}|{k + 1}]"]
                    v[pos[nm], k] = row[f"v[{nm}|{k + 1}]"]
            for i in range(dim_psi):
                for j in range(i, dim_psi):
                    psi[i, j] = psi[j, i] = row[f"psi[{i + 1}|{j + 1}]"]
        states.append(ParameterState(
            mu=row["mu"], beta_r=beta_r, beta_c=beta_c, a=a, b=b, u=u, v=v,
            sigma_ab=sigma_ab, psi=psi, rho=row["rho"]))
    return Chain(spec=spec, node_ids=node_ids, design_names=design_names,
                 states=states, stored_iterations=iters, seed=spec.seed)

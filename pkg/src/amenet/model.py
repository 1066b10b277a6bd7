"""Model variants, prior hyperparameters and the MCMC parameter state.

Five nested probit models for a binary directed network are supported:

* ``SRG``    intercept only
* ``SRM``    intercept + additive row/column effects
* ``SRRM``   + nodal covariates on rows and columns
* ``IIDREG`` covariates only, iid errors (no network structure)
* ``AME``    SRRM + a rank-R multiplicative term u_i'v_j

The latent outcome for entry (i, j) is the sum of the active blocks plus a
dyad-correlated Gaussian error with unit variance; the binary tie is its
sign.  Error variance is fixed at 1 because the scale is unidentified under
a sign-threshold link; only the within-dyad correlation rho is estimated.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import invwishart

from .ingest import CovariateTable

__all__ = [
    "VARIANTS",
    "ModelSpec",
    "PriorHyper",
    "ParameterState",
    "as_design",
    "linear_predictor",
    "sample_prior_state",
    "simulate_network",
    "parse_config",
    "spec_from_config",
    "spec_to_config",
]

VARIANTS = ("SRG", "SRM", "SRRM", "IIDREG", "AME")
_HAS_COVS = frozenset({"SRRM", "IIDREG", "AME"})
_HAS_AB = frozenset({"SRM", "SRRM", "AME"})
_HAS_UV = frozenset({"AME"})
# IIDREG assumes iid errors, so rho stays fixed at 0 there
_HAS_RHO = frozenset({"SRG", "SRM", "SRRM", "AME"})


@dataclass(frozen=True)
class PriorHyper:
    """Prior hyperparameters; None means "derive the standard default".

    ``sab_*`` control the inverse-Wishart prior on the 2x2 additive-effect
    covariance, ``psi_*`` the one on the multiplicative-factor covariance
    (2R x 2R for directed fits, R x R for symmetric fits).  Scale entries
    given as scalars mean that multiple of the identity.  Defaults put the
    inverse-Wishart mean at the identity (df = dim + 2, scale = I).
    """

    beta_prior_variance: float = 100.0
    sab_df: float | None = None
    sab_scale: object = None
    psi_df: float | None = None
    psi_scale: object = None
    rho_proposal_sd: float = 0.1

    def __post_init__(self):
        if self.beta_prior_variance <= 0:
            raise ValueError("beta_prior_variance must be positive")
        if self.rho_proposal_sd < 0:
            raise ValueError("rho_proposal_sd must be >= 0")

    def resolved_sab(self, symmetric: bool) -> tuple[float, np.ndarray]:
        dim = 1 if symmetric else 2
        return _resolve_iw(self.sab_df, self.sab_scale, dim, "sab")

    def resolved_psi(self, rank: int, symmetric: bool) -> tuple[float, np.ndarray]:
        dim = rank if symmetric else 2 * rank
        return _resolve_iw(self.psi_df, self.psi_scale, dim, "psi")


def _resolve_iw(df, scale, dim: int, name: str) -> tuple[float, np.ndarray]:
    df = float(df) if df is not None else dim + 2.0
    if scale is None:
        scale_m = np.eye(dim)
    elif np.isscalar(scale):
        scale_m = float(scale) * np.eye(dim)
    else:
        scale_m = np.array(scale, dtype=float)
    if scale_m.shape != (dim, dim):
        raise ValueError(f"{name} scale must be {dim}x{dim}, got {scale_m.shape}")
    if df <= dim - 1:
        raise ValueError(f"{name} inverse-Wishart df must exceed dim - 1 = {dim - 1}")
    if not np.allclose(scale_m, scale_m.T):
        raise ValueError(f"{name} scale must be symmetric")
    if np.linalg.eigvalsh(scale_m).min() <= 0:
        raise ValueError(f"{name} scale must be positive definite")
    return df, scale_m


@dataclass(frozen=True)
class ModelSpec:
    """Which variant to fit, with MCMC settings and priors.

    ``latent_rank`` defaults to 3 for AME and must be 0 for the other
    variants.  ``seed`` drives every random draw of a fit.
    """

    variant: str
    latent_rank: int | None = None
    symmetric: bool = False
    prior: PriorHyper = field(default_factory=PriorHyper)
    iterations: int = 10_000
    burn_in: int = 2_000
    thinning: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        rank = self.latent_rank
        if rank is None:
            rank = 3 if self.variant == "AME" else 0
            object.__setattr__(self, "latent_rank", rank)
        if self.variant == "AME" and rank < 1:
            raise ValueError("AME needs latent_rank >= 1")
        if self.variant != "AME" and rank != 0:
            raise ValueError(f"{self.variant} does not use a latent space (latent_rank must be 0)")
        if self.iterations <= self.burn_in:
            raise ValueError("iterations must exceed burn_in")
        if self.burn_in < 0 or self.thinning < 1:
            raise ValueError("burn_in >= 0 and thinning >= 1 required")

    @property
    def uses_covariates(self) -> bool:
        return self.variant in _HAS_COVS

    @property
    def uses_additive(self) -> bool:
        return self.variant in _HAS_AB

    @property
    def uses_multiplicative(self) -> bool:
        return self.variant in _HAS_UV

    @property
    def uses_rho(self) -> bool:
        return self.variant in _HAS_RHO and not self.symmetric

    def n_stored(self) -> int:
        return (self.iterations - self.burn_in) // self.thinning


@dataclass
class ParameterState:
    """One MCMC state.

    ``z`` is the latent n x n matrix (diagonal meaningless, kept at 0
    internally); its sign always matches the observed ties.  For symmetric
    fits ``b`` mirrors ``a`` and ``v`` mirrors ``u``; the stored ``sigma_ab``
    and ``psi`` are then the (singular) covariances of the duplicated pairs.
    """

    mu: float
    beta_r: np.ndarray
    beta_c: np.ndarray
    a: np.ndarray
    b: np.ndarray
    u: np.ndarray
    v: np.ndarray
    sigma_ab: np.ndarray
    psi: np.ndarray
    rho: float
    z: np.ndarray | None = None

    def snapshot(self, keep_z: bool = False) -> "ParameterState":
        return ParameterState(
            mu=float(self.mu),
            beta_r=self.beta_r.copy(),
            beta_c=self.beta_c.copy(),
            a=self.a.copy(),
            b=self.b.copy(),
            u=self.u.copy(),
            v=self.v.copy(),
            sigma_ab=self.sigma_ab.copy(),
            psi=self.psi.copy(),
            rho=float(self.rho),
            z=self.z.copy() if (keep_z and self.z is not None) else None,
        )


def as_design(X, n: int | None = None) -> tuple[np.ndarray, list[str]]:
    """Coerce covariates to an (n, q) design array plus column names.

    Accepts a CovariateTable, a bare ndarray (columns named x1..xq) or None
    (an empty design).
    """
    if X is None:
        if n is None:
            raise ValueError("need n to build an empty design")
        return np.zeros((n, 0)), []
    if isinstance(X, CovariateTable):
        return X.design()
    Xd = np.asarray(X, dtype=float)
    if Xd.ndim == 1:
        Xd = Xd[:, None]
    return Xd, [f"x{k + 1}" for k in range(Xd.shape[1])]


def _mean_matrix(state: ParameterState, Xd: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Systematic part of z with a zeroed diagonal (internal convention)."""
    n = state.a.shape[0]
    m = np.full((n, n), state.mu)
    if spec.uses_covariates and Xd.shape[1]:
        m += (Xd @ state.beta_r)[:, None]
        m += (Xd @ state.beta_c)[None, :]
    if spec.uses_additive:
        m += state.a[:, None]
        m += state.b[None, :]
    if spec.uses_multiplicative:
        m += state.u @ state.v.T
    np.fill_diagonal(m, 0.0)
    return m


def linear_predictor(state: ParameterState, X, spec: ModelSpec) -> np.ndarray:
    """Systematic mean of the latent z matrix; diagonal is NaN (undefined).

    Only the blocks the variant uses contribute, so an SRRM predictor equals
    the AME predictor with all factors at zero.
    """
    n = state.a.shape[0]
    Xd, _ = as_design(X, n)
    if spec.uses_covariates and Xd.shape[0] != n:
        raise ValueError(f"design has {Xd.shape[0]} rows for n={n} nodes")
    if spec.uses_covariates and Xd.shape[1] != state.beta_r.shape[0]:
        raise ValueError(
            f"design has {Xd.shape[1]} columns but state carries "
            f"{state.beta_r.shape[0]} coefficients")
    m = _mean_matrix(state, Xd, spec)
    np.fill_diagonal(m, np.nan)
    return m


def simulate_network(mean: np.ndarray, rho: float, rng: np.random.Generator,
                     symmetric: bool = False) -> np.ndarray:
    """Draw one binary network: latent mean plus dyad-correlated unit-variance
    noise, thresholded at zero.  Returns a float 0/1 matrix with zero diagonal.
    """
    n = mean.shape[0]
    iu, ju = np.triu_indices(n, 1)
    z = np.array(mean, dtype=float)
    e1 = rng.standard_normal(iu.size)
    if symmetric:
        z[iu, ju] += e1
        zl = z[iu, ju] - mean[iu, ju] + mean[ju, iu]  # mirror the noise
        z[ju, iu] = zl
    else:
        e2 = rng.standard_normal(iu.size)
        z[iu, ju] += e1
        z[ju, iu] += rho * e1 + np.sqrt(1.0 - rho**2) * e2
    y = (z > 0).astype(float)
    np.fill_diagonal(y, 0.0)
    return y


def sample_prior_state(spec: ModelSpec, X, rng, n: int | None = None,
                       Y: np.ndarray | None = None) -> ParameterState:
    """Draw a full parameter state from the priors.

    Covariances come from their inverse-Wishart priors, effects from the
    implied Gaussians, coefficients from the diffuse normal; blocks unused
    by the variant are exactly zero.  The latent matrix is the linear
    predictor plus noise and, when the observed network ``Y`` is supplied,
    sign-corrected to it entry by entry.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    Xd, _ = as_design(X, n)
    n = Xd.shape[0] if Xd.shape[0] else n
    if n is None:
        raise ValueError("supply X or n")
    q = Xd.shape[1]
    R = spec.latent_rank
    v = spec.prior.beta_prior_variance
    sd_beta = np.sqrt(v)

    mu = float(rng.normal(0.0, sd_beta))
    if spec.uses_covariates:
        beta_r = rng.normal(0.0, sd_beta, size=q)
        beta_c = rng.normal(0.0, sd_beta, size=q)
    else:
        beta_r = np.zeros(q)
        beta_c = np.zeros(q)

    if spec.uses_additive:
        df, scale = spec.prior.resolved_sab(spec.symmetric)
        if spec.symmetric:
            s2 = float(invwishart.rvs(df=df, scale=scale, random_state=rng))
            a = rng.normal(0.0, np.sqrt(s2), size=n)
            b = a.copy()
            sigma_ab = np.full((2, 2), s2)
        else:
            sigma_ab = np.atleast_2d(invwishart.rvs(df=df, scale=scale, random_state=rng))
            ab = rng.multivariate_normal(np.zeros(2), sigma_ab, size=n)
            a, b = ab[:, 0].copy(), ab[:, 1].copy()
    else:
        a = np.zeros(n)
        b = np.zeros(n)
        sigma_ab = np.zeros((2, 2))

    if spec.uses_multiplicative:
        df, scale = spec.prior.resolved_psi(R, spec.symmetric)
        if spec.symmetric:
            psi_r = np.atleast_2d(invwishart.rvs(df=df, scale=scale, random_state=rng))
            u = rng.multivariate_normal(np.zeros(R), psi_r, size=n)
            vmat = u.copy()
            psi = np.block([[psi_r, psi_r], [psi_r, psi_r]])
        else:
            psi = np.atleast_2d(invwishart.rvs(df=df, scale=scale, random_state=rng))
            uv = rng.multivariate_normal(np.zeros(2 * R), psi, size=n)
            u, vmat = uv[:, :R].copy(), uv[:, R:].copy()
    else:
        u = np.zeros((n, 0))
        vmat = np.zeros((n, 0))
        psi = np.zeros((0, 0))

    rho = float(rng.uniform(-1.0, 1.0)) if spec.uses_rho else 0.0

    state = ParameterState(mu=mu, beta_r=beta_r, beta_c=beta_c, a=a, b=b,
                           u=u, v=vmat, sigma_ab=sigma_ab, psi=psi, rho=rho)
    m = _mean_matrix(state, Xd if q else np.zeros((n, 0)), spec)
    z = m + simulate_noise(n, rho, rng, spec.symmetric)
    if Y is not None:
        y = np.asarray(Y, dtype=float)
        want_pos = y == 1.0
        mag = np.abs(z)
        tiny = np.finfo(float).tiny
        z = np.where(want_pos, np.maximum(mag, tiny), -mag)
    np.fill_diagonal(z, 0.0)
    state.z = z
    return state


def simulate_noise(n: int, rho: float, rng: np.random.Generator,
                   symmetric: bool = False) -> np.ndarray:
    """Dyad-correlated unit-variance noise matrix with zero diagonal."""
    iu, ju = np.triu_indices(n, 1)
    e = np.zeros((n, n))
    e1 = rng.standard_normal(iu.size)
    e[iu, ju] = e1
    if symmetric:
        e[ju, iu] = e1
    else:
        e2 = rng.standard_normal(iu.size)
        e[ju, iu] = rho * e1 + np.sqrt(1.0 - rho**2) * e2
    return e


# --- flat key-value config ------------------------------------------------

_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def parse_config(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blanks ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def spec_from_config(cfg: dict[str, str]) -> ModelSpec:
    """Build a ModelSpec from a parsed config; unknown keys are left to the
    caller (the CLI consumes e.g. ``empirical_bayes`` itself)."""
    def _get(key, cast, default):
        if key not in cfg:
            return default
        return cast(cfg[key])

    def _bool(s):
        try:
            return _BOOL[s.lower()]
        except KeyError:
            raise ValueError(f"expected a boolean, got {s!r}") from None

    prior = PriorHyper(
        beta_prior_variance=_get("beta_prior_variance", float, 100.0),
        sab_df=_get("sab_df", float, None),
        sab_scale=_get("sab_scale", float, None),
        psi_df=_get("psi_df", float, None),
        psi_scale=_get("psi_scale", float, None),
        rho_proposal_sd=_get("rho_proposal_sd", float, 0.1),
    )
    variant = cfg.get("variant", "AME").upper()
    rank = _get("latent_rank", int, None)
    return ModelSpec(
        variant=variant,
        latent_rank=rank,
        symmetric=_get("symmetric", _bool, False),
        prior=prior,
        iterations=_get("iterations", int, 10_000),
        burn_in=_get("burn_in", int, 2_000),
        thinning=_get("thinning", int, 10),
        seed=_get("seed", int, 0),
    )


def spec_to_config(spec: ModelSpec) -> dict[str, object]:
    """Flat echo of every spec field, for run manifests."""
    prior = spec.prior
    sab_df, sab_scale = spec.prior.resolved_sab(spec.symmetric) if spec.uses_additive else (None, None)
    if spec.uses_multiplicative:
        psi_df, psi_scale = prior.resolved_psi(spec.latent_rank, spec.symmetric)
    else:
        psi_df, psi_scale = None, None
    return {
        "variant": spec.variant,
        "latent_rank": spec.latent_rank,
        "symmetric": spec.symmetric,
        "iterations": spec.iterations,
        "burn_in": spec.burn_in,
        "thinning": spec.thinning,
        "seed": spec.seed,
        "beta_prior_variance": prior.beta_prior_variance,
        "sab_df": sab_df,
        "sab_scale": None if sab_scale is None else sab_scale.tolist(),
        "psi_df": psi_df,
        "psi_scale": None if psi_scale is None else psi_scale.tolist(),
        "rho_proposal_sd": prior.rho_proposal_sd,
    }


def make_spec(variant: str, **kwargs) -> ModelSpec:
    """Convenience constructor used throughout the examples and tests."""
    return ModelSpec(variant=variant, **kwargs)

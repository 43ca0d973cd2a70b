"""Dirichlet observation model, precision link, latent AR(1)/random-walk
process, priors and the log joint density."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import special

from .lorenz import LorenzFamily, get_family
from .special_functions import DomainError, lgamma_u

__all__ = [
    "DataError",
    "GroupedSeries",
    "PriorSpec",
    "LatentProcessSpec",
    "ChainState",
    "dirichlet_logpdf",
    "lambda_t",
    "loglik_from_increments",
    "obs_loglik",
    "obs_loglik_t",
    "latent_logdensity",
    "latent_conditional",
    "prior_logdensity",
    "log_joint",
]

_LOG_2PI = np.log(2.0 * np.pi)


class DataError(ValueError):
    pass


def equal_grid(K: int) -> np.ndarray:
    grid = np.arange(K + 1) / K
    grid[-1] = 1.0
    return grid


@dataclass
class GroupedSeries:
    """Income shares ``q`` (T x K), sample sizes ``n`` and population grid."""

    q: np.ndarray
    n: np.ndarray
    p_grid: np.ndarray | None = None
    labels: list[str] | None = None

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        self.n = np.atleast_1d(np.asarray(self.n))
        T, K = self.q.shape
        if self.p_grid is None:
            self.p_grid = equal_grid(K)
        self.p_grid = np.asarray(self.p_grid, dtype=float)
        if self.labels is None:
            self.labels = [str(t + 1) for t in range(T)]
        self.labels = [str(x) for x in self.labels]

        if len(self.labels) != T:
            raise DataError(f"{len(self.labels)} labels for {T} periods")
        if self.p_grid.shape != (K + 1,):
            raise DataError(f"p_grid needs {K + 1} points for K={K} classes")
        if self.p_grid[0] != 0.0 or self.p_grid[-1] != 1.0 or np.any(np.diff(self.p_grid) <= 0):
            raise DataError("p_grid must increase strictly from exactly 0 to exactly 1")
        if self.n.shape != (T,):
            raise DataError(f"{self.n.size} sample sizes for {T} periods")
        if np.any(self.n != np.round(self.n)) or np.any(self.n < 1):
            bad = int(np.flatnonzero((self.n != np.round(self.n)) | (self.n < 1))[0])
            raise DataError(f"period {self.labels[bad]}: sample size must be an integer >= 1")
        self.n = self.n.astype(np.int64)
        for t in range(T):
            row = self.q[t]
            if not np.all(np.isfinite(row)) or np.any(row <= 0):
                raise DataError(f"period {self.labels[t]}: income shares must be strictly positive")
            if abs(row.sum() - 1.0) > 1e-9:
                raise DataError(f"period {self.labels[t]}: income shares sum to {row.sum():.6g}, not 1")

    @property
    def T(self) -> int:
        return self.q.shape[0]

    @property
    def K(self) -> int:
        return self.q.shape[1]

    @cached_property
    def logq(self) -> np.ndarray:
        return np.log(self.q)

    @property
    def cumulative(self) -> np.ndarray:
        """Cumulative income shares y_1..y_K (y_K = 1)."""
        return np.cumsum(self.q, axis=1)

    def subset(self, idx) -> "GroupedSeries":
        idx = np.atleast_1d(idx)
        return GroupedSeries(self.q[idx], self.n[idx], self.p_grid, [self.labels[i] for i in idx])


@dataclass
class PriorSpec:
    """Hyperparameters.

    ``m``, ``v2``: normal prior on each process mean (and, for the separate
    per-period fit, on each latent coordinate). ``r``, ``s``: inverse-gamma
    shape and scale on each innovation variance. ``m_psi``, ``v2_psi``:
    normal prior on the log precision scale. ``c``: variance inflation of
    the first random-walk state.
    """

    m: np.ndarray
    v2: np.ndarray
    r: np.ndarray
    s: np.ndarray
    m_psi: float = 0.0
    v2_psi: float = 100.0
    c: float = 1e5

    def __post_init__(self):
        self.m, self.v2, self.r, self.s = (np.atleast_1d(np.asarray(x, dtype=float))
                                           for x in (self.m, self.v2, self.r, self.s))
        d = self.m.size
        if not all(x.shape == (d,) for x in (self.v2, self.r, self.s)):
            raise ValueError("prior hyperparameter arrays must share one length")
        if np.any(self.v2 <= 0) or np.any(self.r <= 0) or np.any(self.s <= 0):
            raise ValueError("v2, r, s must be positive")
        if self.v2_psi <= 0 or self.c <= 0:
            raise ValueError("v2_psi and c must be positive")

    @property
    def dim(self) -> int:
        return self.m.size

    @classmethod
    def default(cls, d: int, **kw) -> "PriorSpec":
        """mu_j ~ N(0, 1), tau_j^2 ~ IG(3, 0.1), psi ~ N(0, 100)."""
        return cls(np.zeros(d), np.ones(d), np.full(d, 3.0), np.full(d, 0.1), **kw)

    @classmethod
    def diffuse(cls, d: int, **kw) -> "PriorSpec":
        """The more diffuse alternative, mu_j ~ N(-0.5, 2)."""
        return cls(np.full(d, -0.5), np.full(d, 2.0), np.full(d, 3.0), np.full(d, 0.1), **kw)


@dataclass
class LatentProcessSpec:
    """AR(1) or random-walk dynamics for each latent coordinate.

    For ``kind == "RW"`` only ``tau2`` and ``c`` matter; ``mu`` and ``rho``
    are kept at 0 and 1 so that the shared formulas reduce correctly.
    """

    kind: str
    mu: np.ndarray
    rho: np.ndarray
    tau2: np.ndarray
    c: float = 1e5

    def __post_init__(self):
        self.kind = self.kind.upper()
        if self.kind not in ("AR", "RW"):
            raise ValueError(f"process kind must be AR or RW, got {self.kind!r}")
        self.mu, self.rho, self.tau2 = (np.array(np.atleast_1d(x), dtype=float)
                                        for x in (self.mu, self.rho, self.tau2))
        if self.kind == "RW":
            self.mu = np.zeros_like(self.tau2)
            self.rho = np.ones_like(self.tau2)
        elif np.any(np.abs(self.rho) >= 1):
            raise ValueError("AR(1) coefficients must satisfy |rho| < 1")
        if np.any(self.tau2 <= 0):
            raise ValueError("innovation variances must be positive")

    @property
    def dim(self) -> int:
        return self.tau2.size

    def copy(self) -> "LatentProcessSpec":
        return replace(self, mu=self.mu.copy(), rho=self.rho.copy(), tau2=self.tau2.copy())


@dataclass
class ChainState:
    u: np.ndarray
    eta: LatentProcessSpec
    psi: float = 0.0

    def copy(self) -> "ChainState":
        return ChainState(self.u.copy(), self.eta.copy(), float(self.psi))


# ---------------------------------------------------------------------------
# observation density

def dirichlet_logpdf(q, a) -> float:
    """log Dir(q | a), checked."""
    q = np.asarray(q, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0) or not np.all(np.isfinite(a)):
        raise DomainError("Dirichlet parameters must be positive")
    if np.any(q <= 0):
        raise DomainError("Dirichlet support requires positive components")
    return float(lgamma_u(a.sum(-1)) + np.sum((a - 1.0) * np.log(q) - lgamma_u(a), axis=-1))


def lambda_t(psi, n_t):
    return n_t * np.exp(psi)


def loglik_from_increments(logq, inc, log_lam):
    """Dirichlet log density with cell parameters lambda * inc.

    Broadcasts over leading axes; ``inc`` and ``logq`` have classes on the
    last axis. Rows with a non-positive increment give -inf.
    """
    inc = np.asarray(inc, dtype=float)
    valid = np.all(inc > 0, axis=-1)
    lam = np.exp(np.asarray(log_lam, dtype=float))
    a = lam[..., None] * np.where(valid[..., None], inc, 1.0)
    ll = special.gammaln(lam) + np.sum((a - 1.0) * logq - special.gammaln(a), axis=-1)
    return np.where(valid & np.isfinite(ll), ll, -np.inf)


def obs_loglik(logq, u, log_lam, p_grid, family: LorenzFamily):
    """Vectorized observation log likelihood at latent coordinates ``u``
    (shape (..., d)); -inf for parameters that do not give a valid curve."""
    # far-out proposals overflow the links; they are invalid and map to -inf
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        theta = family.from_latent(u)
        inc, valid = family.increments(theta, p_grid)
        ll = loglik_from_increments(logq, inc, log_lam)
    return np.where(valid, ll, -np.inf)


def obs_loglik_t(q_row, u_t, psi, n_t, p_grid, family) -> float:
    family = get_family(family)
    q_row = np.asarray(q_row, dtype=float)
    return float(obs_loglik(np.log(q_row), np.asarray(u_t, dtype=float), np.log(n_t) + psi,
                            np.asarray(p_grid, dtype=float), family))


# ---------------------------------------------------------------------------
# latent process

def _norm_logpdf(x, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def latent_logdensity(u, spec: LatentProcessSpec) -> float:
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if spec.kind == "AR":
        mu, rho, tau2 = spec.mu, spec.rho, spec.tau2
        out = _norm_logpdf(u[0], mu, tau2 / (1.0 - rho**2)).sum()
        if u.shape[0] > 1:
            mean = mu + rho * (u[:-1] - mu)
            out += _norm_logpdf(u[1:], mean, tau2).sum()
    else:
        out = _norm_logpdf(u[0], 0.0, spec.c * spec.tau2).sum()
        if u.shape[0] > 1:
            out += _norm_logpdf(u[1:], u[:-1], spec.tau2).sum()
    return float(out)


def latent_conditional(u, ts, spec: LatentProcessSpec) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian conditional of u_t given its neighbours, for each t in ``ts``.

    Returns (mean, precision), both of shape (len(ts), d). This is the
    latent-process part of the full conditional of u_t.
    """
    u = np.asarray(u, dtype=float)
    ts = np.atleast_1d(ts)
    T = u.shape[0]
    tau2 = spec.tau2
    has_prev = ts > 0
    has_next = ts < T - 1
    prev = u[np.maximum(ts - 1, 0)]
    nxt = u[np.minimum(ts + 1, T - 1)]
    hp = has_prev[:, None]
    hn = has_next[:, None]

    if spec.kind == "AR":
        mu, rho = spec.mu, spec.rho
        # own term: stationary law at t=0, transition from t-1 otherwise
        prec0 = np.where(hp, 1.0, 1.0 - rho**2) / tau2
        num0 = np.where(hp, mu + rho * (prev - mu), mu) * prec0
        # term from the transition t -> t+1, as a function of u_t
        prec1 = np.where(hn, rho**2 / tau2, 0.0)
        num1 = np.where(hn, rho * (nxt - mu + rho * mu) / tau2, 0.0)
    else:
        prec0 = np.where(hp, 1.0, 1.0 / spec.c) / tau2
        num0 = np.where(hp, prev, 0.0) * prec0
        prec1 = np.where(hn, 1.0 / tau2, 0.0)
        num1 = np.where(hn, nxt / tau2, 0.0)
    prec = prec0 + prec1
    return (num0 + num1) / prec, prec


# ---------------------------------------------------------------------------
# priors and joint

def _invgamma_logpdf(x, r, s):
    return r * np.log(s) - lgamma_u(r) - (r + 1.0) * np.log(x) - s / x


def prior_logdensity(eta: LatentProcessSpec, psi: float, priors: PriorSpec) -> float:
    out = _norm_logpdf(psi, priors.m_psi, priors.v2_psi)
    out += np.sum(_invgamma_logpdf(eta.tau2, priors.r, priors.s))
    if eta.kind == "AR":
        out += np.sum(_norm_logpdf(eta.mu, priors.m, priors.v2))
        out += eta.dim * np.log(0.5)
    return float(out)


def log_joint(state: ChainState, data: GroupedSeries, priors: PriorSpec, family,
              likelihood: bool = True) -> float:
    family = get_family(family)
    out = latent_logdensity(state.u, state.eta) + prior_logdensity(state.eta, state.psi, priors)
    if likelihood:
        ll = obs_loglik(data.logq, state.u, np.log(data.n) + state.psi, data.p_grid, family)
        out += float(np.sum(ll))
    return out

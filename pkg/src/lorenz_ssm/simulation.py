"""Synthetic grouped income data from a latent AR(1)/RW path of
Singh-Maddala parameters."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lorenz import get_family
from .model import GroupedSeries, LatentProcessSpec, equal_grid

__all__ = [
    "SimConfig",
    "SimTruth",
    "simulate_latent",
    "sample_sm_income",
    "group_shares",
    "generate_dataset",
]


@dataclass
class SimConfig:
    T: int = 500
    K: int = 5
    family: str = "SM"
    kind: str = "AR"
    mu: tuple[float, ...] = (1.25, 0.4)
    rho: tuple[float, ...] = (0.8, 0.5)
    tau: tuple[float, ...] = (0.015, 0.02)
    pool: tuple[int, ...] = tuple(range(5000, 15001, 1000))
    c: float = 1e5
    seed: int = 0

    def __post_init__(self):
        if self.family.upper() != "SM":
            raise ValueError("only Singh-Maddala income generation is supported")
        if any(n % self.K for n in self.pool):
            raise ValueError(f"every pool size must be divisible by K={self.K}")
        if self.T < 1:
            raise ValueError("T must be positive")

    @classmethod
    def table1(cls, **kw) -> "SimConfig":
        return cls(**kw)

    @classmethod
    def text_preset(cls, **kw) -> "SimConfig":
        """Same as :meth:`table1` but with rho_2 = 0.8 for the second coordinate."""
        kw.setdefault("rho", (0.8, 0.8))
        return cls(**kw)

    def process(self) -> LatentProcessSpec:
        return LatentProcessSpec(self.kind, np.array(self.mu), np.array(self.rho),
                                 np.square(self.tau), self.c)


@dataclass
class SimTruth:
    u: np.ndarray
    theta: np.ndarray
    gini: np.ndarray
    lorenz: np.ndarray  # L(p_k) at every grid point, T x (K+1)
    process: LatentProcessSpec = field(repr=False, default=None)


def simulate_latent(spec: LatentProcessSpec, T: int, rng: np.random.Generator) -> np.ndarray:
    d = spec.dim
    tau = np.sqrt(spec.tau2)
    e = rng.standard_normal((T, d))
    u = np.empty((T, d))
    if spec.kind == "AR":
        u[0] = spec.mu + tau / np.sqrt(1.0 - spec.rho**2) * e[0]
        for t in range(1, T):
            u[t] = spec.mu + spec.rho * (u[t - 1] - spec.mu) + tau * e[t]
    else:
        u[0] = np.sqrt(spec.c) * tau * e[0]
        u[1:] = u[0] + np.cumsum(tau * e[1:], axis=0)
    return u


def sample_sm_income(alpha: float, beta: float, gamma: float, n: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from SM(alpha, beta, gamma)."""
    if not (alpha > 0 and beta > 0 and gamma > 0):
        raise ValueError("Singh-Maddala parameters must be positive")
    v = rng.uniform(size=n)
    return beta * np.expm1(-np.log1p(-v) / gamma) ** (1.0 / alpha)


def group_shares(incomes, K: int) -> np.ndarray:
    """Shares of total income held by K equal-sized groups of sorted incomes."""
    x = np.sort(np.asarray(incomes, dtype=float))
    if x.size % K:
        raise ValueError(f"{x.size} incomes cannot be split into {K} equal groups")
    sums = x.reshape(K, -1).sum(axis=1)
    return sums / sums.sum()


def generate_dataset(cfg: SimConfig) -> tuple[GroupedSeries, SimTruth]:
    rng = np.random.default_rng(cfg.seed)
    fam = get_family(cfg.family)
    spec = cfg.process()
    u = simulate_latent(spec, cfg.T, rng)
    n = rng.choice(np.asarray(cfg.pool), size=cfg.T)
    theta = fam.from_latent(u)
    q = np.empty((cfg.T, cfg.K))
    for t in range(cfg.T):
        x = sample_sm_income(theta[t, 0], 1.0, theta[t, 1], int(n[t]), rng)
        q[t] = group_shares(x, cfg.K)
    grid = equal_grid(cfg.K)
    data = GroupedSeries(q, n, grid)
    truth = SimTruth(u=u, theta=theta, gini=fam.gini(theta),
                     lorenz=fam.curve(theta[:, None, :], grid), process=spec)
    return data, truth

"""Comparison estimators: a per-period Dirichlet fit and the crude
trapezoid Gini."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lorenz import get_family
from .mcmc import ChainAbort, SamplerConfig, fit_periods, laplace_batch
from .model import GroupedSeries, PriorSpec, equal_grid, obs_loglik

__all__ = ["SeparateConfig", "SeparateFitResult", "fit_separate", "fit_separate_series", "crude_gini"]


@dataclass
class SeparateConfig:
    n_burnin: int = 2000
    n_draws: int = 10000
    rng_seed: int | None = 0
    adapt_target: float = 0.3
    abort_window: int = 1000
    abort_fraction: float = 0.999

    def __post_init__(self):
        if self.n_draws <= 0 or self.n_burnin < 0:
            raise ValueError("draw counts must be positive")
        if not 0 < self.adapt_target < 1:
            raise ValueError("adapt_target must lie in (0, 1)")


@dataclass
class SeparateFitResult:
    family: str
    u: np.ndarray  # (N, T, d) latent draws
    log_lambda: np.ndarray  # (N, T)
    acceptance: np.ndarray  # (T,)
    proposal_cov: np.ndarray = field(repr=False, default=None)  # (T, d+1, d+1)

    @property
    def n_draws(self) -> int:
        return self.u.shape[0]

    def theta(self) -> np.ndarray:
        return get_family(self.family).from_latent(self.u)

    def gini(self) -> np.ndarray:
        return get_family(self.family).gini(self.theta())


def _log_post(data: GroupedSeries, family, priors: PriorSpec):
    fam = get_family(family)
    d = fam.dim

    def f(X, rows):
        u, ll = X[..., :d], X[..., d]
        prior = (-0.5 * np.sum((u - priors.m) ** 2 / priors.v2, axis=-1)
                 - 0.5 * (ll - priors.m_psi) ** 2 / priors.v2_psi)
        return obs_loglik(data.logq[rows, None, :], u, ll, data.p_grid, fam) + prior

    return f


def fit_separate_series(data: GroupedSeries, family, priors: PriorSpec | None = None,
                        cfg: SeparateConfig | None = None, rng=None) -> SeparateFitResult:
    """Independent random-walk MH chains on (latent parameters, log lambda_t),
    one per period, advanced in lockstep.

    Each chain uses a Gaussian proposal whose covariance starts from the
    inverse curvature at the period's posterior mode and is reset halfway
    through burn-in to the covariance of the draws so far; a common
    multiplier per chain is tuned by Robbins-Monro throughout burn-in. The
    proposal is frozen after burn-in. A full covariance is used because the
    shape parameters are strongly correlated a posteriori.
    """
    fam = get_family(family)
    cfg = cfg or SeparateConfig()
    priors = priors or PriorSpec.default(fam.dim)
    rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
    T, d = data.T, fam.dim
    f = _log_post(data, fam, priors)
    rows = np.arange(T)

    u0 = fit_periods(data, fam, np.log(data.n))
    x0 = np.column_stack([u0, np.log(data.n)])
    # log lambda is weakly identified, so the step tolerance is looser here
    search = SamplerConfig(mode_find_tol=1e-4, mode_find_max_iter=100, armh_inflation=1.0)
    mode, cov, ok, _ = laplace_batch(f, x0, search)
    x = np.where(ok[:, None], mode, x0)
    base = 2.38**2 / (d + 1)
    prop_cov = np.broadcast_to(np.eye(d + 1) * 0.05**2, (T, d + 1, d + 1)).copy()
    prop_cov[ok] = cov[ok] * base
    chol = np.linalg.cholesky(prop_cov)
    fx = f(x[:, None, :], rows)[:, 0]
    if not np.all(np.isfinite(fx)):
        bad = np.flatnonzero(~np.isfinite(fx))
        raise ChainAbort(f"no valid starting point for period {data.labels[bad[0]]}",
                         {"periods": [data.labels[i] for i in bad]})

    log_scale = np.zeros(T)
    N = cfg.n_draws
    out = np.empty((N, T, d + 1))
    n_acc = np.zeros(T)
    invalid_run = np.zeros(T, dtype=int)
    window = np.zeros((cfg.abort_window, T), dtype=bool)
    limit = cfg.abort_fraction * cfg.abort_window

    # covariance reset from burn-in moments, once, halfway through burn-in
    rescale_at = cfg.n_burnin // 2
    collect_from = cfg.n_burnin // 4
    s1 = np.zeros((T, d + 1))
    s2 = np.zeros((T, d + 1, d + 1))
    n_col = 0
    t_gain = 0

    for it in range(cfg.n_burnin + N):
        z = rng.standard_normal((T, d + 1))
        y = x + np.exp(log_scale)[:, None] * np.einsum("tij,tj->ti", chol, z)
        fy = f(y[:, None, :], rows)[:, 0]
        invalid = ~np.isfinite(fy)
        slot = it % cfg.abort_window
        invalid_run += invalid.astype(int) - window[slot]
        window[slot] = invalid
        if it + 1 >= cfg.abort_window and np.any(invalid_run > limit):
            bad = np.flatnonzero(invalid_run > limit)
            raise ChainAbort(
                f"separate fit: over {cfg.abort_fraction:.1%} of the last {cfg.abort_window} proposals "
                f"gave invalid curves in period {data.labels[bad[0]]}",
                {"periods": [data.labels[i] for i in bad], "iteration": it})
        acc = np.log(rng.uniform(size=T)) < fy - fx
        x = np.where(acc[:, None], y, x)
        fx = np.where(acc, fy, fx)
        if it < cfg.n_burnin:
            t_gain += 1
            log_scale += (acc - cfg.adapt_target) / t_gain**0.6
            if it >= collect_from:
                s1 += x
                s2 += x[:, :, None] * x[:, None, :]
                n_col += 1
            if it == rescale_at and n_col > 10:
                mean = s1 / n_col
                emp = s2 / n_col - mean[:, :, None] * mean[:, None, :]
                emp = base * emp + 1e-10 * np.eye(d + 1)
                good = np.linalg.eigvalsh(emp)[:, 0] > 0
                chol[good] = np.linalg.cholesky(emp[good])
                log_scale[good] = 0.0
                t_gain = 0
        else:
            k = it - cfg.n_burnin
            out[k] = x
            n_acc += acc
    final = np.exp(2 * log_scale)[:, None, None] * (chol @ np.swapaxes(chol, 1, 2))
    return SeparateFitResult(fam.tag, out[..., :d], out[..., d], n_acc / N, final)


def fit_separate(q_row, p_grid, family, priors: PriorSpec | None = None,
                 cfg: SeparateConfig | None = None, rng=None, n: int = 1) -> SeparateFitResult:
    """Separate Dirichlet fit for a single period.

    ``n`` only sets the starting value of log lambda.
    """
    q_row = np.atleast_2d(np.asarray(q_row, dtype=float))
    data = GroupedSeries(q_row, np.array([n]), np.asarray(p_grid, dtype=float))
    return fit_separate_series(data, family, priors, cfg, rng)


def crude_gini(q_row, p_grid=None) -> float | np.ndarray:
    """1 - sum_k (y_k + y_{k-1}) (p_k - p_{k-1}) with y the cumulative shares.

    Accepts a single row or a (T, K) array.
    """
    q = np.asarray(q_row, dtype=float)
    K = q.shape[-1]
    p = equal_grid(K) if p_grid is None else np.asarray(p_grid, dtype=float)
    if p.shape != (K + 1,):
        raise ValueError(f"p_grid must have {K + 1} points")
    y = np.concatenate([np.zeros(q.shape[:-1] + (1,)), np.cumsum(q, axis=-1)], axis=-1)
    y = y / y[..., -1:]
    g = 1.0 - np.sum((y[..., 1:] + y[..., :-1]) * np.diff(p), axis=-1)
    return float(g) if g.ndim == 0 else g

"""Posterior sampler for the Dirichlet state-space model.

One sweep updates, in order, the latent states u_t, the process means,
the AR coefficients, the innovation variances and the log precision psi.

The latent states are drawn with an accept-reject Metropolis-Hastings
(ARMH) kernel built on a Laplace approximation of each full conditional.
Given their neighbours, the states at odd periods are conditionally
independent of each other, and so are the states at even periods. The
sweep therefore updates all odd periods as one vectorized batch, then all
even periods. This is the same Markov kernel as a sequential scan in the
order 1, 3, 5, ..., 2, 4, 6, ....
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .lorenz import LorenzFamily, get_family
from .model import (
    ChainState,
    GroupedSeries,
    LatentProcessSpec,
    PriorSpec,
    latent_conditional,
    loglik_from_increments,
    obs_loglik,
)

__all__ = [
    "SamplerConfig",
    "PosteriorDraws",
    "ModeFindingError",
    "ChainAbort",
    "laplace_approx",
    "laplace_batch",
    "armh_batch",
    "armh_log_alpha",
    "step_u_block",
    "step_u_t",
    "step_mu_j",
    "mu_posterior_params",
    "step_rho_j",
    "rho_log_target",
    "rho_proposal_params",
    "step_tau2_j",
    "tau2_posterior_params",
    "step_psi",
    "psi_loglik",
    "fit_periods",
    "initial_state",
    "Sampler",
    "run_chain",
    "inefficiency_factor",
]

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


class ModeFindingError(RuntimeError):
    pass


class ChainAbort(RuntimeError):
    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload or {}


@dataclass
class SamplerConfig:
    n_burnin: int = 2000
    n_draws: int = 10000
    rng_seed: int | None = 0
    armh_inflation: float = 1.2
    rw_mix_prob: float = 0.05
    psi_step: float = 0.1
    adapt_target: float = 0.3
    mode_find_tol: float = 1e-8
    mode_find_max_iter: int = 50
    fd_step: float = 1e-5
    max_ar_tries: int = 200
    # False drops the observation term, so the chain samples the prior
    likelihood: bool = True

    def __post_init__(self):
        if min(self.n_draws, self.armh_inflation, self.psi_step, self.adapt_target,
               self.mode_find_tol, self.mode_find_max_iter, self.fd_step) <= 0 or self.n_burnin < 0:
            raise ValueError("sampler settings must be positive")
        if not 0.0 <= self.rw_mix_prob <= 1.0:
            raise ValueError("rw_mix_prob must lie in [0, 1]")


@dataclass
class PosteriorDraws:
    family: str
    kind: str
    u: np.ndarray  # (N, T, d)
    mu: np.ndarray  # (N, d); NaN for random-walk fits
    rho: np.ndarray
    tau2: np.ndarray
    psi: np.ndarray  # (N,)
    n: np.ndarray  # sample sizes, for lambda_t
    acceptance: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.psi.shape[0]

    @property
    def log_lambda(self) -> np.ndarray:
        """log lambda_t per draw, shape (N, T)."""
        return self.psi[:, None] + np.log(self.n)[None, :]

    def theta(self) -> np.ndarray:
        return get_family(self.family).from_latent(self.u)


# ---------------------------------------------------------------------------
# Laplace approximation

_FINAL_STEP = 1e-6
# candidates per row in the first and later accept-reject rounds of ARMH
_ARMH_BATCH = (4, 8)


def _fd_points(x, h):
    """Stencil for a central-difference gradient and Hessian diagonal plus
    forward-difference cross terms.

    Returns points of shape (m, P, d) with P = 1 + 2d + d(d-1)/2. The
    cross terms are first-order accurate, which is ample for a proposal
    covariance; the gradient, which locates the mode, stays central.
    """
    m, d = x.shape
    pts = [x]
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        pts.append(x + h[:, i:i + 1] * e)
        pts.append(x - h[:, i:i + 1] * e)
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros(d)
            e[i] = e[j] = 1.0
            pts.append(x + h * e)
    return np.stack(pts, axis=1)


def _fd_grad_hess(fvals, h):
    m, d = h.shape
    f0 = fvals[:, 0]
    g = np.empty((m, d))
    H = np.empty((m, d, d))
    for i in range(d):
        fp, fm = fvals[:, 1 + 2 * i], fvals[:, 2 + 2 * i]
        g[:, i] = (fp - fm) / (2 * h[:, i])
        H[:, i, i] = (fp - 2 * f0 + fm) / h[:, i] ** 2
    k = 1 + 2 * d
    for i in range(d):
        for j in range(i + 1, d):
            fpp, fi, fj = fvals[:, k], fvals[:, 1 + 2 * i], fvals[:, 1 + 2 * j]
            H[:, i, j] = H[:, j, i] = (fpp - fi - fj + f0) / (h[:, i] * h[:, j])
            k += 1
    return g, H


def laplace_batch(f, init, cfg: SamplerConfig):
    """Damped Newton mode search with finite-difference derivatives, batched.

    ``f(X, rows)`` evaluates the log densities of the selected rows at
    points ``X`` of shape (len(rows), P, d) and returns shape (len(rows), P).

    Returns ``(mode, cov, ok, n_iter)``: ``cov`` is the inverse negative
    Hessian at the mode scaled by ``armh_inflation**2``. A row is ``ok`` when
    its Newton step fell below ``mode_find_tol`` within ``mode_find_max_iter``
    iterations at a point with positive definite negative Hessian.
    """
    x = np.array(init, dtype=float)
    m, d = x.shape
    fx = np.full(m, np.nan)
    g = np.full((m, d), np.nan)
    negH = np.full((m, d, d), np.nan)
    stale = np.ones(m, dtype=bool)
    ok = np.zeros(m, dtype=bool)
    failed = np.zeros(m, dtype=bool)
    cov = np.full((m, d, d), np.nan)
    n_iter = np.zeros(m, dtype=int)
    infl2 = cfg.armh_inflation**2

    def stencil(pts, rows):
        # f, gradient and negative Hessian at pts
        h = cfg.fd_step * np.maximum(1.0, np.abs(pts))
        fv = f(_fd_points(pts, h), rows)
        with np.errstate(invalid="ignore"):
            gg, HH = _fd_grad_hess(fv, h)
        return fv[:, 0], gg, -HH

    for _ in range(cfg.mode_find_max_iter):
        rows = np.flatnonzero(stale & ~failed)
        if rows.size:
            fx[rows], g[rows], negH[rows] = stencil(x[rows], rows)
            stale[rows] = False
        bad = ~(np.isfinite(fx) & np.all(np.isfinite(g), axis=1)
                & np.all(np.isfinite(negH), axis=(1, 2)))
        failed |= bad & ~ok
        rows = np.flatnonzero(~ok & ~failed)
        if rows.size == 0:
            break
        n_iter[rows] += 1
        A = negH[rows]
        eig = np.linalg.eigvalsh(A)
        pd = eig[:, 0] > 0
        # shift indefinite Hessians so the step is an ascent direction
        shift = np.where(pd, 0.0, -eig[:, 0] + 1e-3 * np.maximum(1.0, np.abs(eig[:, -1])))
        A = A + shift[:, None, None] * np.eye(d)
        step = np.linalg.solve(A, g[rows][..., None])[..., 0]

        size = np.max(np.abs(step), axis=1)
        # finite-difference noise keeps the step near 3e-8 at best; once it
        # is below _FINAL_STEP, Newton's quadratic convergence makes the
        # step itself exact to well under that noise, so take it and stop
        final = pd & (size < _FINAL_STEP) & (size >= cfg.mode_find_tol)
        x[rows[final]] += step[final]
        converged = pd & (size < _FINAL_STEP)
        if np.any(converged):
            cr = rows[converged]
            ok[cr] = True
            cov[cr] = np.linalg.inv(negH[cr]) * infl2
        go = ~converged
        rows, step = rows[go], step[go]
        if rows.size == 0:
            continue
        # full Newton step, evaluated together with the next stencil
        xn = x[rows] + step
        fn, gn, Hn = stencil(xn, rows)
        base = fx[rows]
        tol = 1e-10 * np.maximum(1.0, np.abs(base))
        good = np.isfinite(fn) & (fn >= base - tol)
        gr = rows[good]
        x[gr], fx[gr], g[gr], negH[gr] = xn[good], fn[good], gn[good], Hn[good]
        # backtracking for the rest
        rows, step = rows[~good], step[~good]
        t = np.full(rows.size, 0.5)
        pending = np.ones(rows.size, dtype=bool)
        for _ls in range(40):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            xt = x[rows[idx]] + t[idx, None] * step[idx]
            ft = f(xt[:, None, :], rows[idx])[:, 0]
            better = np.isfinite(ft) & (ft >= fx[rows[idx]] - tol[~good][idx])
            acc = idx[better]
            x[rows[acc]] = xt[better]
            stale[rows[acc]] = True
            pending[acc] = False
            t[idx[~better]] *= 0.5
        failed[rows[pending]] = True
    return x, cov, ok, n_iter


def laplace_approx(logdensity, init, cfg: SamplerConfig | None = None):
    """Mode and inflated inverse negative Hessian of a log density on R^d.

    Raises :class:`ModeFindingError` when Newton does not converge or the
    Hessian at the mode is not negative definite.
    """
    cfg = cfg or SamplerConfig()
    init = np.atleast_1d(np.asarray(init, dtype=float))

    def f(X, rows):
        flat = X.reshape(-1, X.shape[-1])
        return np.array([logdensity(v) for v in flat], dtype=float).reshape(X.shape[:-1])

    if not np.isfinite(logdensity(init)):
        raise ModeFindingError("log density is not finite at the initial point")
    mode, cov, ok, n_iter = laplace_batch(f, init[None, :], cfg)
    if not ok[0]:
        raise ModeFindingError(f"mode search failed after {int(n_iter[0])} iterations")
    return mode[0], cov[0]


# ---------------------------------------------------------------------------
# latent states

def _mvn_logpdf_chol(x, mean, chol):
    """log N(x | mean, L L^T) with batched lower-triangular L; x (..., d)."""
    diff = x - mean
    z = np.linalg.solve(chol, diff[..., None])[..., 0]
    d = x.shape[-1]
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * (d * _LOG_2PI + logdet + np.sum(z * z, axis=-1))


def armh_log_alpha(f_cur, logh_cur, f_cand, logh_cand, log_c):
    """Log MH acceptance for moving from the current point to an
    accept-reject candidate, given log target ``f``, log proposal ``logh``
    and the log dominating constant."""
    cur_in = f_cur <= log_c + logh_cur
    cand_in = f_cand <= log_c + logh_cand
    with np.errstate(invalid="ignore"):
        out = np.where(cur_in, 0.0,
                       np.where(cand_in, log_c + logh_cur - f_cur,
                                f_cand + logh_cur - f_cur - logh_cand))
    return np.minimum(0.0, out)


def armh_batch(f, x_cur, mode, cov, rng, max_tries=200):
    """One ARMH transition per row.

    The dominating function is c * N(mode, cov) with c chosen so that it
    touches the target at the mode. Rows whose accept-reject phase finds no
    candidate within ``max_tries`` proposals keep their current value.

    Returns ``(x_new, moved, n_proposals, exhausted)``.
    """
    m, d = x_cur.shape
    rows = np.arange(m)
    chol = np.linalg.cholesky(cov)
    log_c = -_mvn_logpdf_chol(mode, mode, chol)
    logh_cur = _mvn_logpdf_chol(x_cur, mode, chol)

    cand = np.full_like(x_cur, np.nan)
    f_cand = np.full(m, -np.inf)
    logh_cand = np.zeros(m)
    have = np.zeros(m, dtype=bool)
    tries = np.zeros(m, dtype=int)
    n_prop = 0
    first = True
    while True:
        idx = np.flatnonzero(~have & (tries < max_tries))
        if idx.size == 0:
            break
        # several i.i.d. candidates per row in one call; taking the first
        # accepted one in order is the same as proposing them one at a time
        k = min(_ARMH_BATCH[0] if first else _ARMH_BATCH[1], max_tries)
        z = rng.standard_normal((idx.size, k, d))
        y = mode[idx, None, :] + np.einsum("mij,mkj->mki", chol[idx], z)
        if first:
            # the mode and the current point ride along with the first batch
            pts = np.concatenate([mode[:, None, :], x_cur[:, None, :], y], axis=1)
            fy = f(pts, rows)
            log_c += fy[:, 0]
            f_cur = fy[:, 1]
            fy = fy[:, 2:]
            first = False
        else:
            fy = f(y, idx)
        lh = _mvn_logpdf_chol(y, mode[idx, None, :], chol[idx, None])
        u = np.log(rng.uniform(size=(idx.size, k)))
        take = (u < np.minimum(0.0, fy - log_c[idx, None] - lh)) & (tries[idx, None] + np.arange(k) < max_tries)
        hit = take.any(axis=1)
        j = np.argmax(take, axis=1)
        n_prop += int(np.where(hit, j + 1, np.minimum(k, max_tries - tries[idx])).sum())
        tries[idx] += k
        sel, jj = idx[hit], j[hit]
        r = np.flatnonzero(hit)
        cand[sel], f_cand[sel], logh_cand[sel] = y[r, jj], fy[r, jj], lh[r, jj]
        have[sel] = True
    exhausted = ~have

    log_alpha = armh_log_alpha(f_cur, logh_cur, f_cand, logh_cand, log_c)
    u = rng.uniform(size=m)
    moved = have & (np.log(u) < log_alpha)
    x_new = np.where(moved[:, None], cand, x_cur)
    return x_new, moved, n_prop, exhausted


def _rwmh_batch(f, x_cur, cov, rng):
    m, d = x_cur.shape
    rows = np.arange(m)
    chol = np.linalg.cholesky(cov)
    y = x_cur + np.einsum("mij,mj->mi", chol, rng.standard_normal((m, d)))
    fy = f(y[:, None, :], rows)[:, 0]
    fx = f(x_cur[:, None, :], rows)[:, 0]
    moved = np.log(rng.uniform(size=m)) < fy - fx
    return np.where(moved[:, None], y, x_cur), moved


def _block_logdensity(ts, state: ChainState, data: GroupedSeries, family: LorenzFamily,
                      likelihood: bool):
    mean, prec = latent_conditional(state.u, ts, state.eta)
    logq = data.logq[ts]
    log_lam = np.log(data.n[ts]) + state.psi
    p_grid = data.p_grid

    def f(X, rows):
        prior = -0.5 * np.sum(prec[rows, None, :] * (X - mean[rows, None, :]) ** 2, axis=-1)
        if not likelihood:
            return prior
        ll = obs_loglik(logq[rows, None, :], X, log_lam[rows, None], p_grid, family)
        return ll + prior

    return f, mean, prec


def step_u_block(ts, state: ChainState, data: GroupedSeries, family, cfg: SamplerConfig,
                 rng: np.random.Generator, burn: bool = False, warm=None, fallback_cov=None,
                 stats: dict | None = None):
    """Update u_t for a set of conditionally independent periods ``ts``.

    ``warm`` (len(ts) x d) seeds the mode search; ``fallback_cov`` supplies
    random-walk proposal covariances for rows whose mode search fails.
    Returns ``(new_rows, modes, covs, ok)``.
    """
    family = get_family(family)
    ts = np.atleast_1d(ts)
    m, d = ts.size, state.u.shape[1]
    f, mean, prec = _block_logdensity(ts, state, data, family, cfg.likelihood)
    x_cur = state.u[ts].copy()

    use_rw = np.zeros(m, dtype=bool)
    if burn and cfg.rw_mix_prob > 0:
        use_rw = rng.uniform(size=m) < cfg.rw_mix_prob

    init = x_cur if warm is None else np.where(np.isfinite(f(warm[:, None, :], np.arange(m))[:, 0])[:, None],
                                                warm, x_cur)
    if cfg.likelihood:
        mode, cov, ok, _ = laplace_batch(f, init, cfg)
    else:
        # the conditional is exactly Gaussian
        mode, ok = mean.copy(), np.ones(m, dtype=bool)
        cov = np.einsum("mi,ij->mij", 1.0 / prec, np.eye(d)) * cfg.armh_inflation**2
    if np.any(~ok):
        log.debug("mode search failed for %d of %d periods; using random-walk MH", int((~ok).sum()), m)
    use_rw |= ~ok

    x_new = x_cur.copy()
    arm = np.flatnonzero(~use_rw)
    if arm.size:
        sub = lambda X, rows: f(X, arm[rows])  # noqa: E731
        xa, moved, n_prop, exhausted = armh_batch(sub, x_cur[arm], mode[arm], cov[arm], rng,
                                                  cfg.max_ar_tries)
        x_new[arm] = xa
        if stats is not None:
            stats["armh_moves"] += int(moved.sum())
            stats["armh_updates"] += arm.size
            stats["ar_proposals"] += n_prop
            stats["ar_exhausted"] += int(exhausted.sum())
    rw = np.flatnonzero(use_rw)
    if rw.size:
        rcov = np.empty((rw.size, d, d))
        for k, i in enumerate(rw):
            if ok[i]:
                rcov[k] = cov[i]
            elif fallback_cov is not None and np.all(np.isfinite(fallback_cov[i])):
                rcov[k] = fallback_cov[i]
            else:
                rcov[k] = np.eye(d) * 0.05**2
        sub = lambda X, rows: f(X, rw[rows])  # noqa: E731
        xr, moved = _rwmh_batch(sub, x_cur[rw], rcov, rng)
        x_new[rw] = xr
        if stats is not None:
            stats["rw_moves"] += int(moved.sum())
            stats["rw_updates"] += rw.size
            stats["mode_failures"] += int((~ok).sum())
    return x_new, mode, cov, ok


def step_u_t(t, state, data, family, cfg, rng, burn=False):
    """Draw a new u_t (0-based period index) from its full conditional."""
    x_new, *_ = step_u_block(np.array([t]), state, data, family, cfg, rng, burn=burn)
    return x_new[0]


# ---------------------------------------------------------------------------
# process parameters

def mu_posterior_params(j, state: ChainState, priors: PriorSpec):
    """Mean and variance of the normal full conditional of mu_j."""
    u = state.u[:, j]
    rho, tau2 = state.eta.rho[j], state.eta.tau2[j]
    T = u.size
    prec = ((1 - rho**2) + (T - 1) * (1 - rho) ** 2) / tau2 + 1.0 / priors.v2[j]
    num = ((1 - rho**2) * u[0] + (1 - rho) * np.sum(u[1:] - rho * u[:-1])) / tau2 + priors.m[j] / priors.v2[j]
    return num / prec, 1.0 / prec


def step_mu_j(j, state: ChainState, priors: PriorSpec, rng):
    mean, var = mu_posterior_params(j, state, priors)
    return mean + np.sqrt(var) * rng.standard_normal()


def rho_log_target(rho, j, state: ChainState):
    """Unnormalized log full conditional of rho_j (uniform prior on (-1, 1))."""
    rho = np.asarray(rho, dtype=float)
    x = state.u[:, j] - state.eta.mu[j]
    tau2 = state.eta.tau2[j]
    inside = np.abs(rho) < 1
    r = np.where(inside, rho, 0.0)
    resid = x[None, 1:] - np.multiply.outer(np.atleast_1d(r), x[:-1])
    sse = np.sum(resid**2, axis=-1).reshape(r.shape)
    out = 0.5 * np.log1p(-r**2) - (1 - r**2) * x[0] ** 2 / (2 * tau2) - sse / (2 * tau2)
    return np.where(inside, out, -np.inf)


def rho_proposal_params(j, state: ChainState):
    """Mean and variance of the normal independence proposal for rho_j,
    or ``None`` when the lagged sum of squares is degenerate."""
    x = state.u[:, j] - state.eta.mu[j]
    tau2 = state.eta.tau2[j]
    S = np.sum(x[:-1] ** 2)
    if not S > 1e-12 * max(tau2, 1e-300):
        return None
    return np.sum(x[1:] * x[:-1]) / S, tau2 / S


def step_rho_j(j, state: ChainState, priors: PriorSpec | None, rng):
    """Independence MH update of rho_j. Returns ``(rho, accepted)``."""
    cur = state.eta.rho[j]
    params = rho_proposal_params(j, state)
    if params is None:
        prop = rng.uniform(-1.0, 1.0)
        log_q_prop = log_q_cur = 0.0
    else:
        m, v = params
        prop = m + np.sqrt(v) * rng.standard_normal()
        log_q_prop = -0.5 * (prop - m) ** 2 / v
        log_q_cur = -0.5 * (cur - m) ** 2 / v
    if abs(prop) >= 1:
        return cur, False
    log_alpha = (rho_log_target(prop, j, state) - log_q_prop) - (rho_log_target(cur, j, state) - log_q_cur)
    if np.log(rng.uniform()) < log_alpha:
        return float(prop), True
    return cur, False


def tau2_posterior_params(j, state: ChainState, priors: PriorSpec):
    """Shape and scale of the inverse-gamma full conditional of tau_j^2."""
    u = state.u[:, j]
    eta = state.eta
    T = u.size
    if eta.kind == "AR":
        mu, rho = eta.mu[j], eta.rho[j]
        x = u - mu
        ss = (1 - rho**2) * x[0] ** 2 + np.sum((x[1:] - rho * x[:-1]) ** 2)
    else:
        ss = u[0] ** 2 / eta.c + np.sum(np.diff(u) ** 2)
    return priors.r[j] + T / 2.0, priors.s[j] + 0.5 * ss


def step_tau2_j(j, state: ChainState, priors: PriorSpec, rng):
    shape, scale = tau2_posterior_params(j, state, priors)
    return scale / rng.gamma(shape)


def psi_loglik(psi, state: ChainState, data: GroupedSeries, family, inc=None):
    """Sum over periods of the observation log likelihood as a function of psi.

    ``inc`` caches the Lorenz increments at the current latent states.
    """
    family = get_family(family)
    if inc is None:
        inc, valid = family.increments(family.from_latent(state.u), data.p_grid)
        inc = np.where(valid[:, None], inc, 0.0)
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    log_lam = np.log(data.n)[None, :] + psi[:, None]
    out = np.sum(loglik_from_increments(data.logq[None], inc[None], log_lam), axis=-1)
    return out


def step_psi(state: ChainState, data: GroupedSeries, priors: PriorSpec, cfg: SamplerConfig, rng,
             step: float | None = None, family=None, inc=None):
    """Random-walk MH update of psi. Returns ``(psi, accepted)``."""
    step = max(cfg.psi_step if step is None else step, 1e-4)
    prop = state.psi + step * rng.standard_normal()

    def lp(x):
        prior = -0.5 * (x - priors.m_psi) ** 2 / priors.v2_psi
        if not cfg.likelihood:
            return prior
        return float(psi_loglik(x, state, data, family, inc)[0]) + prior

    if np.log(rng.uniform()) < lp(prop) - lp(state.psi):
        return float(prop), True
    return float(state.psi), False


# ---------------------------------------------------------------------------
# initialization

def fit_periods(data: GroupedSeries, family, log_lam, cfg: SamplerConfig | None = None,
                start=None) -> np.ndarray:
    """Per-period maximizers of the observation log likelihood in latent space.

    Starts every period from ``start`` (default: the family's fixed starting
    point), runs the batched Newton search and finishes stragglers with
    Nelder-Mead.
    """
    from scipy.optimize import minimize

    family = get_family(family)
    cfg = cfg or SamplerConfig()
    T = data.T
    start = family.to_latent(np.array(family.start)) if start is None else np.asarray(start, float)
    x0 = np.broadcast_to(start, (T, family.dim)).copy()
    log_lam = np.broadcast_to(np.asarray(log_lam, dtype=float), (T,))

    def f(X, rows):
        return obs_loglik(data.logq[rows, None, :], X, log_lam[rows, None], data.p_grid, family)

    search = SamplerConfig(mode_find_max_iter=100, mode_find_tol=1e-6, fd_step=cfg.fd_step)
    ok_start = np.isfinite(f(x0[:, None, :], np.arange(T))[:, 0])
    mode, _, ok, _ = laplace_batch(f, x0, search)
    ok &= ok_start
    for t in np.flatnonzero(~ok):
        obj = lambda v, t=t: -float(f(np.asarray(v)[None, None, :], np.array([t]))[0, 0])  # noqa: E731
        best = None
        for trial in range(20):
            s = x0[t] if trial == 0 else x0[t] + np.random.default_rng(trial).normal(0, 0.5, family.dim)
            if not np.isfinite(obj(s)):
                continue
            res = minimize(obj, s, method="Nelder-Mead",
                           options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 5000})
            if best is None or res.fun < best.fun:
                best = res
            if best is not None and np.isfinite(best.fun):
                break
        if best is None or not np.isfinite(best.fun):
            raise ChainAbort(f"no valid {family.tag} curve found for period {data.labels[t]}",
                             {"period": data.labels[t]})
        mode[t] = best.x
    return mode


def initial_state(data: GroupedSeries, family, kind: str, priors: PriorSpec,
                  cfg: SamplerConfig | None = None) -> ChainState:
    """Per-period fits at psi = 0, then moment-style process parameters."""
    family = get_family(family)
    cfg = cfg or SamplerConfig()
    if cfg.likelihood:
        u = fit_periods(data, family, np.log(data.n), cfg)
    else:
        u = np.broadcast_to(family.to_latent(np.array(family.start)), (data.T, family.dim)).copy()
    T, d = u.shape
    kind = kind.upper()
    if kind == "AR":
        mu = u.mean(axis=0)
        rho = np.zeros(d)
        if T > 2:
            x = u - mu
            denom = np.sum(x[:-1] ** 2, axis=0)
            with np.errstate(invalid="ignore", divide="ignore"):
                rho = np.where(denom > 0, np.sum(x[1:] * x[:-1], axis=0) / denom, 0.0)
            rho = np.clip(rho, -0.9, 0.9)
        tau2 = np.maximum(u.var(axis=0) * (1 - rho**2), 1e-4)
    else:
        mu, rho = np.zeros(d), np.ones(d)
        tau2 = np.maximum(np.mean(np.diff(u, axis=0) ** 2, axis=0), 1e-4) if T > 1 else np.full(d, 1e-2)
    eta = LatentProcessSpec(kind, mu, rho, tau2, priors.c)
    return ChainState(u, eta, 0.0)


# ---------------------------------------------------------------------------
# driver

class Sampler:
    """Holds the chain state and adaptation bookkeeping for one fit."""

    def __init__(self, data: GroupedSeries, family, kind: str, priors: PriorSpec,
                 cfg: SamplerConfig, state: ChainState | None = None, rng=None):
        self.data = data
        self.family = get_family(family)
        self.kind = kind.upper()
        self.priors = priors
        self.cfg = cfg
        if priors.dim != self.family.dim:
            raise ValueError(f"prior dimension {priors.dim} does not match {self.family.tag} ({self.family.dim})")
        self.rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
        self.state = state if state is not None else initial_state(data, self.family, self.kind, priors, cfg)
        T, d = self.state.u.shape
        self.modes = self.state.u.copy()
        self.covs = np.full((T, d, d), np.nan)
        self.psi_step = cfg.psi_step
        self.iteration = 0
        self.stats = dict(armh_moves=0, armh_updates=0, ar_proposals=0, ar_exhausted=0,
                          rw_moves=0, rw_updates=0, mode_failures=0,
                          rho_accepts=0, rho_updates=0, psi_accepts=0, psi_updates=0)

    def update_latent(self, burn: bool):
        T = self.data.T
        for parity in (0, 1):
            ts = np.arange(parity, T, 2)
            if ts.size == 0:
                continue
            x_new, mode, cov, ok = step_u_block(
                ts, self.state, self.data, self.family, self.cfg, self.rng, burn=burn,
                warm=self.modes[ts], fallback_cov=self.covs[ts], stats=self.stats)
            self.state.u[ts] = x_new
            good = ts[ok]
            self.modes[good] = mode[ok]
            self.covs[good] = cov[ok]

    def sweep(self, burn: bool = False):
        st, pr = self.state, self.priors
        self.update_latent(burn)
        d = st.u.shape[1]
        if self.kind == "AR":
            for j in range(d):
                st.eta.mu[j] = step_mu_j(j, st, pr, self.rng)
            for j in range(d):
                st.eta.rho[j], acc = step_rho_j(j, st, pr, self.rng)
                self.stats["rho_accepts"] += acc
                self.stats["rho_updates"] += 1
        for j in range(d):
            st.eta.tau2[j] = step_tau2_j(j, st, pr, self.rng)

        inc = None
        if self.cfg.likelihood:
            inc, valid = self.family.increments(self.family.from_latent(st.u), self.data.p_grid)
            if not np.all(valid):
                raise ChainAbort("latent state left the valid region",
                                 {"iteration": self.iteration, "periods": np.flatnonzero(~valid).tolist()})
        st.psi, acc = step_psi(st, self.data, pr, self.cfg, self.rng, self.psi_step, self.family, inc)
        self.stats["psi_accepts"] += acc
        self.stats["psi_updates"] += 1
        if burn:
            gain = 1.0 / (self.iteration + 1) ** 0.6
            self.psi_step = max(self.psi_step * np.exp(gain * (acc - self.cfg.adapt_target)), 1e-4)
        self.iteration += 1

    def acceptance(self) -> dict:
        s = self.stats

        def rate(a, b):
            return a / b if b else float("nan")

        return {
            "armh": rate(s["armh_moves"], s["armh_updates"]),
            "ar_step": rate(s["armh_updates"] - s["ar_exhausted"], s["ar_proposals"]),
            "rw_u": rate(s["rw_moves"], s["rw_updates"]),
            "rho": rate(s["rho_accepts"], s["rho_updates"]),
            "psi": rate(s["psi_accepts"], s["psi_updates"]),
            "mode_failures": s["mode_failures"],
            "ar_exhausted": s["ar_exhausted"],
            "psi_step": self.psi_step,
        }


def run_chain(data: GroupedSeries, family, kind: str, priors: PriorSpec | None = None,
              cfg: SamplerConfig | None = None, state: ChainState | None = None,
              progress=None) -> PosteriorDraws:
    """Burn-in then ``n_draws`` stored sweeps. Deterministic given ``cfg.rng_seed``."""
    family = get_family(family)
    cfg = cfg or SamplerConfig()
    priors = priors or PriorSpec.default(family.dim)
    sampler = Sampler(data, family, kind, priors, cfg, state=state)
    T, d = sampler.state.u.shape
    N = cfg.n_draws
    out_u = np.empty((N, T, d))
    out_mu = np.full((N, d), np.nan)
    out_rho = np.full((N, d), np.nan)
    out_tau2 = np.empty((N, d))
    out_psi = np.empty(N)

    for it in range(cfg.n_burnin):
        sampler.sweep(burn=True)
        if progress:
            progress(it, "burnin")
    for k in range(N):
        sampler.sweep(burn=False)
        st = sampler.state
        out_u[k] = st.u
        if sampler.kind == "AR":
            out_mu[k] = st.eta.mu
            out_rho[k] = st.eta.rho
        out_tau2[k] = st.eta.tau2
        out_psi[k] = st.psi
        if progress:
            progress(k, "sampling")
    return PosteriorDraws(family.tag, sampler.kind, out_u, out_mu, out_rho, out_tau2, out_psi,
                          data.n.copy(), sampler.acceptance())


# ---------------------------------------------------------------------------
# diagnostics

def inefficiency_factor(draws) -> float:
    """1 + 2 * sum of Bartlett-weighted sample autocorrelations.

    The bandwidth is L = min(len // 10, 1000).
    """
    x = np.asarray(draws, dtype=float).ravel()
    n = x.size
    if n < 100:
        raise ValueError("inefficiency factor needs at least 100 draws")
    x = x - x.mean()
    var = np.dot(x, x) / n
    if not var > 0:
        raise ValueError("inefficiency factor of a constant series is undefined")
    L = min(n // 10, 1000)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(spec * np.conj(spec), nfft)[: L + 1] / n
    rho = acov[1:] / var
    lags = np.arange(1, L + 1)
    w = 1.0 - lags / (L + 1.0)
    return float(1.0 + 2.0 * np.sum(w * rho))

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize, stats
from scipy.signal import lfilter

from lorenz_ssm.lorenz import get_family
from lorenz_ssm.mcmc import (
    ModeFindingError,
    PosteriorDraws,
    Sampler,
    SamplerConfig,
    armh_log_alpha,
    inefficiency_factor,
    laplace_approx,
    mu_posterior_params,
    rho_log_target,
    rho_proposal_params,
    run_chain,
    step_mu_j,
    step_psi,
    step_rho_j,
    step_tau2_j,
    step_u_t,
    tau2_posterior_params,
)
from lorenz_ssm.model import (
    ChainState,
    GroupedSeries,
    LatentProcessSpec,
    PriorSpec,
    equal_grid,
    latent_conditional,
    latent_logdensity,
    log_joint,
)
from lorenz_ssm.simulation import SimConfig, generate_dataset


def grid_sup_norm(draws, logtarget, lo, hi, bw=0.15):
    """Sup-norm gap between a kernel density of standardized draws and the
    grid-normalized target smoothed by the same kernel."""
    x = np.linspace(lo, hi, 8001)
    lp = np.array([logtarget(v) for v in x])
    p = np.exp(lp - lp.max())
    p /= np.trapezoid(p, x)
    m = np.trapezoid(x * p, x)
    s = math.sqrt(np.trapezoid((x - m) ** 2 * p, x))
    z, pz = (x - m) / s, p * s
    e = np.linspace(-3, 3, 121)
    phi = lambda a: np.exp(-0.5 * (a / bw) ** 2) / (bw * math.sqrt(2 * math.pi))  # noqa: E731
    oracle = np.array([np.trapezoid(phi(v - z) * pz, z) for v in e])
    zd = (np.asarray(draws) - m) / s
    kde = np.array([phi(v - zd).mean() for v in e])
    return np.max(np.abs(kde - oracle))


def ar_state(u, mu, rho, tau2, psi=0.0, kind="AR"):
    return ChainState(np.array(u, dtype=float), LatentProcessSpec(kind, mu, rho, tau2), psi)


# ---------------------------------------------------------------------------
# Laplace approximation

def test_laplace_quadratic_exact():
    A = np.array([[2.0, 0.3, 0.0], [0.3, 1.0, -0.2], [0.0, -0.2, 0.5]])
    m = np.array([0.4, -1.0, 2.0])
    mode, cov = laplace_approx(lambda x: -0.5 * (x - m) @ A @ (x - m), np.zeros(3))
    assert np.allclose(mode, m, atol=1e-6)
    assert np.allclose(cov, np.linalg.inv(A) * 1.2**2, atol=1e-6)


def test_laplace_skewed_logistic_matches_root_finder():
    a, b = 2.0, 5.0
    f = lambda x: a * x[0] - (a + b) * np.log1p(np.exp(x[0]))  # noqa: E731
    root = optimize.brentq(lambda x: a - (a + b) / (1 + np.exp(-x)), -10, 10, xtol=1e-14)
    mode, _ = laplace_approx(f, [3.0])
    assert mode[0] == pytest.approx(root, abs=1e-6)


def test_laplace_started_at_mode_converges_fast():
    from lorenz_ssm.mcmc import laplace_batch

    m = np.array([[0.3, -0.1]])
    f = lambda X, rows: -0.5 * np.sum((X - m[rows, None, :]) ** 2 * [1.0, 4.0], axis=-1)  # noqa: E731
    _, _, ok, n_iter = laplace_batch(f, m.copy(), SamplerConfig())
    assert ok[0] and n_iter[0] <= 2


def test_laplace_failures_raise():
    with pytest.raises(ModeFindingError):
        laplace_approx(lambda x: float(x[0]), [0.0])
    with pytest.raises(ModeFindingError):
        laplace_approx(lambda x: -math.inf, [0.0])


# ---------------------------------------------------------------------------
# ARMH

@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(-20, 20), st.floats(-20, 20), st.floats(-5, 5))
def test_armh_detailed_balance(fx, hx, fy, hy, c):
    # the accept-reject candidate density is proportional to min(f, c h)
    lhs = fx + min(fy, c + hy) + float(armh_log_alpha(fx, hx, fy, hy, c))
    rhs = fy + min(fx, c + hx) + float(armh_log_alpha(fy, hy, fx, hx, c))
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_u_kernel_gaussian_limit():
    """Without the observation term the conditional of an interior state is normal."""
    spec = LatentProcessSpec("AR", [1.0, 0.3], [0.7, -0.2], [0.05, 0.02])
    u = np.array([[1.1, 0.4], [0.9, 0.2], [1.3, 0.35], [1.0, 0.3], [0.8, 0.1]])
    data = GroupedSeries(np.full((5, 5), 0.2), [100] * 5, equal_grid(5))
    cfg = SamplerConfig(likelihood=False)
    st_ = ChainState(u.copy(), spec, 0.0)
    mean, prec = latent_conditional(u, [2], spec)
    rng = np.random.default_rng(0)
    N = 20000
    draws = np.empty((N, 2))
    for i in range(N):
        draws[i] = st_.u[2] = step_u_t(2, st_, data, "SM", cfg, rng)
    x = draws - draws.mean(axis=0)
    ifs = np.array([inefficiency_factor(draws[:, j]) for j in range(2)])
    se_m = np.sqrt(1 / prec[0] * ifs / N)
    assert np.all(np.abs(draws.mean(axis=0) - mean[0]) < 3 * se_m)
    # the sample variance is a mean of squared deviations, so its s.e. uses their IF
    var = (x**2).mean(axis=0)
    ifs2 = np.array([inefficiency_factor(x[:, j] ** 2) for j in range(2)])
    assert np.all(np.abs(var - 1 / prec[0]) < 3 * (1 / prec[0]) * np.sqrt(2 * ifs2 / N))


def test_u_kernel_with_likelihood_matches_grid_cdf():
    """Lognormal curve, one latent coordinate: KS test against the grid CDF."""
    fam = get_family("LN")
    q = np.diff(fam.curve(np.array([0.6]), equal_grid(5)))
    data = GroupedSeries(np.tile(q, (3, 1)), [40, 60, 50], equal_grid(5))
    spec = LatentProcessSpec("AR", [-0.4], [0.6], [0.1])
    st_ = ChainState(np.array([[-0.5], [-0.45], [-0.6]]), spec, 0.5)
    pr = PriorSpec.default(1)

    def logt(v):
        s2 = ChainState(st_.u.copy(), spec, st_.psi)
        s2.u[1, 0] = v
        return log_joint(s2, data, pr, "LN")

    x = np.linspace(-2.0, 1.0, 6001)
    p = np.exp(np.array([logt(v) for v in x]) - max(logt(v) for v in x[::50]))
    cdf = np.concatenate([[0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(x))])
    cdf /= cdf[-1]
    rng = np.random.default_rng(1)
    N = 4000
    draws = np.empty(N)
    for i in range(N):
        st_.u[1] = step_u_t(1, st_, data, "LN", SamplerConfig(), rng)
        draws[i] = st_.u[1, 0]
    assert stats.kstest(draws, lambda v: np.interp(v, x, cdf)).pvalue > 0.01


def test_u_kernel_never_accepts_invalid_kakwani():
    fam = get_family("KA")
    grid = equal_grid(5)
    th = np.array([0.35, 0.6, 0.5])
    q = np.diff(fam.curve(th, grid))
    data = GroupedSeries(np.tile(q, (3, 1)), [5, 5, 5], grid)
    u = np.tile(fam.to_latent(th), (3, 1))
    st_ = ChainState(u, LatentProcessSpec("AR", fam.to_latent(th), [0.5] * 3, [4.0] * 3), -2.0)
    rng = np.random.default_rng(2)
    for _ in range(300):
        st_.u[1] = step_u_t(1, st_, data, "KA", SamplerConfig(), rng, burn=True)
        _, ok = fam.increments(fam.from_latent(st_.u[1]), grid)
        assert ok


# ---------------------------------------------------------------------------
# process parameters

def test_mu_iid_case_and_flat_prior():
    u = np.array([[0.2], [0.5], [-0.1], [0.4]])
    st_ = ar_state(u, [0.0], [0.0], [0.3])
    pr = PriorSpec([0.1], [2.0], [3.0], [0.1])
    mean, var = mu_posterior_params(0, st_, pr)
    prec = 4 / 0.3 + 1 / 2.0
    assert var == pytest.approx(1 / prec, rel=1e-13)
    assert mean == pytest.approx((u.sum() / 0.3 + 0.1 / 2.0) / prec, rel=1e-13)
    flat = PriorSpec([0.1], [1e12], [3.0], [0.1])
    assert mu_posterior_params(0, st_, flat)[0] == pytest.approx(u.mean(), rel=1e-9)


def test_mu_kernel_grid_oracle():
    rng = np.random.default_rng(3)
    u = rng.normal(0.5, 0.3, (6, 1))
    st_ = ar_state(u, [0.0], [0.6], [0.08])
    pr = PriorSpec([0.2], [0.5], [3.0], [0.1])
    draws = np.array([step_mu_j(0, st_, pr, rng) for _ in range(100000)])

    def logt(m):
        return latent_logdensity(u, LatentProcessSpec("AR", [m], [0.6], [0.08])) - 0.5 * (m - 0.2) ** 2 / 0.5

    assert grid_sup_norm(draws, logt, -2, 3) < 0.02


@pytest.mark.parametrize("T", [2, 10])
def test_rho_kernel_grid_oracle(T):
    rng = np.random.default_rng(T)
    spec = LatentProcessSpec("AR", [0.3], [0.5], [0.1])
    from lorenz_ssm.simulation import simulate_latent

    u = simulate_latent(spec, T, rng)
    st_ = ChainState(u, spec, 0.0)
    draws = np.empty(100000)
    for i in range(draws.size):
        st_.eta.rho[0], _ = step_rho_j(0, st_, None, rng)
        draws[i] = st_.eta.rho[0]

    def logt(r):
        return latent_logdensity(u, LatentProcessSpec("AR", [0.3], [r], [0.1]))

    assert grid_sup_norm(draws, logt, -0.99999, 0.99999) < 0.02


def test_rho_target_outside_and_degenerate_proposal():
    st_ = ar_state(np.full((5, 1), 0.7), [0.7], [0.2], [0.1])
    assert rho_log_target(1.5, 0, st_) == -math.inf
    assert rho_log_target(-1.5, 0, st_) == -math.inf
    assert rho_proposal_params(0, st_) is None
    # the uniform fallback proposal keeps the chain inside (-1, 1) and moving
    rng = np.random.default_rng(4)
    moves = [step_rho_j(0, st_, None, rng) for _ in range(50)]
    assert all(-1 < r < 1 for r, _ in moves)
    assert sum(acc for _, acc in moves) > 10


def test_tau2_hand_values():
    pr = PriorSpec([0.0], [1.0], [3.0], [0.1])
    st_ = ar_state([[1.0], [1.5], [0.7]], [0.5], [0.4], [0.1])
    r, s = tau2_posterior_params(0, st_, pr)
    assert r == 4.5 and s == pytest.approx(0.545, abs=1e-14)
    rw = ChainState(np.array([[1.0], [1.5], [0.7]]), LatentProcessSpec("RW", [0], [1], [0.1], c=1e5), 0.0)
    assert tau2_posterior_params(0, rw, pr)[1] == pytest.approx(0.545005, abs=1e-14)
    flat = ar_state(np.full((4, 1), 0.5), [0.5], [0.0], [0.1])
    assert tau2_posterior_params(0, flat, pr) == (5.0, 0.1)


def test_tau2_kernel_moments_and_grid():
    rng = np.random.default_rng(5)
    u = rng.normal(0.5, 0.3, (8, 1))
    pr = PriorSpec([0.0], [1.0], [3.0], [0.1])
    st_ = ar_state(u, [0.5], [0.3], [0.1])
    r, s = tau2_posterior_params(0, st_, pr)
    draws = np.array([step_tau2_j(0, st_, pr, rng) for _ in range(100000)])
    assert abs(draws.mean() - s / (r - 1)) < 3 * draws.std() / math.sqrt(draws.size)

    def logt(t2):
        return (latent_logdensity(u, LatentProcessSpec("AR", [0.5], [0.3], [t2]))
                + stats.invgamma.logpdf(t2, 3.0, scale=0.1))

    assert grid_sup_norm(draws, logt, 1e-4, 1.5) < 0.02


def test_psi_kernel_grid_oracle_on_flat_data():
    # an exact egalitarian fit makes the likelihood increase in psi without
    # bound, so a unit-variance prior keeps the conditional proper
    data = GroupedSeries(np.full((3, 3), 1 / 3), [10, 20, 15], equal_grid(3))
    spec = LatentProcessSpec("AR", [-12.0], [0.5], [0.1])
    st_ = ChainState(np.full((3, 1), -12.0), spec, 0.0)
    pr = PriorSpec([0.0], [1.0], [3.0], [0.1], m_psi=0.0, v2_psi=1.0)
    cfg = SamplerConfig()
    rng = np.random.default_rng(6)
    draws = np.empty(100000)
    for i in range(draws.size):
        st_.psi, _ = step_psi(st_, data, pr, cfg, rng, step=2.0, family="LN")
        draws[i] = st_.psi

    def logt(psi):
        return log_joint(ChainState(st_.u, spec, psi), data, pr, "LN")

    assert grid_sup_norm(draws, logt, -4, 10) < 0.02


def test_psi_zero_step_is_guarded():
    data = GroupedSeries(np.full((3, 3), 1 / 3), [10, 20, 15], equal_grid(3))
    st_ = ChainState(np.full((3, 1), -12.0), LatentProcessSpec("AR", [-12.0], [0.5], [0.1]), 0.0)
    rng = np.random.default_rng(7)
    vals = [step_psi(st_, data, PriorSpec.default(1), SamplerConfig(), rng, step=0.0, family="LN")[0]
            for _ in range(20)]
    assert len(set(vals)) > 1 and max(abs(v) for v in vals) < 1e-2


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(rw_mix_prob=1.5)
    with pytest.raises(ValueError):
        SamplerConfig(psi_step=0.0)


# ---------------------------------------------------------------------------
# chain driver

def test_seed_determinism():
    data, _ = generate_dataset(SimConfig(T=20, seed=3))
    cfg = SamplerConfig(n_burnin=30, n_draws=30, rng_seed=11)
    a = run_chain(data, "SM", "AR", cfg=cfg)
    b = run_chain(data, "SM", "AR", cfg=cfg)
    for name in ("u", "mu", "rho", "tau2", "psi"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = run_chain(data, "SM", "AR", cfg=SamplerConfig(n_burnin=30, n_draws=30, rng_seed=12))
    assert not np.array_equal(a.psi, c.psi)


def test_random_walk_chain_shapes():
    data, _ = generate_dataset(SimConfig(T=10, seed=4))
    d = run_chain(data, "SM", "RW", cfg=SamplerConfig(n_burnin=10, n_draws=20))
    assert isinstance(d, PosteriorDraws)
    assert d.u.shape == (20, 10, 2) and d.n_draws == 20
    assert np.all(np.isnan(d.mu)) and np.all(np.isnan(d.rho))
    assert d.log_lambda.shape == (20, 10)
    assert np.all(get_family("SM").is_valid(d.theta().reshape(-1, 2)))


def test_psi_acceptance_after_adaptation():
    data, _ = generate_dataset(SimConfig(T=50, seed=5))
    d = run_chain(data, "SM", "AR", cfg=SamplerConfig(n_burnin=300, n_draws=300))
    assert 0.15 <= d.acceptance["psi"] <= 0.5


def _ess_se(x):
    return x.std() * math.sqrt(inefficiency_factor(x) / x.size)


def test_prior_only_chain_recovers_priors():
    data, _ = generate_dataset(SimConfig(T=10, seed=6))
    d = run_chain(data, "SM", "AR", cfg=SamplerConfig(n_burnin=500, n_draws=40000, likelihood=False))
    for j in range(2):
        assert abs(d.mu[:, j].mean()) < 3 * _ess_se(d.mu[:, j])
        assert abs(d.tau2[:, j].mean() - 0.05) < 3 * _ess_se(d.tau2[:, j])
        assert abs(d.rho[:, j].mean()) < 3 * _ess_se(d.rho[:, j])
    assert abs(d.psi.mean()) < 3 * _ess_se(d.psi)


def test_geweke_joint_distribution():
    """Marginal-conditional and successive-conditional simulators agree.

    Each successive chain starts from an exact joint draw, so every state it
    visits is an exact draw too; chain means are then independent and their
    spread gives the standard error without estimating autocorrelation.
    """
    T, K = 20, 5
    grid = equal_grid(K)
    fam = get_family("SM")
    n = np.full(T, 50)
    pr = PriorSpec([1.0, 0.3], [0.1, 0.1], [6.0, 6.0], [0.25, 0.25], m_psi=3.0, v2_psi=0.25)
    rng = np.random.default_rng(8)
    from lorenz_ssm.simulation import simulate_latent

    def prior_draw():
        # the model restricts u to valid curves, so draw jointly and reject
        while True:
            mu = pr.m + np.sqrt(pr.v2) * rng.standard_normal(2)
            rho = rng.uniform(-1, 1, 2)
            tau2 = pr.s / rng.gamma(pr.r)
            spec = LatentProcessSpec("AR", mu, rho, tau2)
            u = simulate_latent(spec, T, rng)
            if np.all(fam.is_valid(fam.from_latent(u))):
                psi = pr.m_psi + math.sqrt(pr.v2_psi) * rng.standard_normal()
                return u, spec, psi

    def new_data(u, psi):
        inc, _ = fam.increments(fam.from_latent(u), grid)
        lam = n * math.exp(psi)
        return GroupedSeries(np.array([rng.dirichlet(lam[t] * inc[t]) for t in range(T)]), n, grid)

    def stats_of(mu, rho, tau2, psi):
        return np.concatenate([mu, rho, tau2, [psi]])

    M = 20000
    marg = np.array([stats_of(s.mu, s.rho, s.tau2, p) for _, s, p in (prior_draw() for _ in range(M))])

    C, N = 16, 1500
    succ = np.empty((C, N, 7))
    for c in range(C):
        u, spec, psi = prior_draw()
        cfg = SamplerConfig(psi_step=0.05, rng_seed=100 + c)
        sampler = Sampler(new_data(u, psi), fam, "AR", pr, cfg, state=ChainState(u, spec, psi))
        for i in range(N):
            sampler.sweep(burn=False)
            s = sampler.state
            succ[c, i] = stats_of(s.eta.mu, s.eta.rho, s.eta.tau2, s.psi)
            sampler.data = new_data(s.u, s.psi)

    for k in range(7):
        for power in (1, 2):
            a, b = marg[:, k] ** power, (succ[:, :, k] ** power).mean(axis=1)
            se = math.sqrt(a.var() / a.size + b.var(ddof=1) / C)
            assert abs(a.mean() - b.mean()) < 3 * se, (k, power)


# ---------------------------------------------------------------------------
# inefficiency factor

def ar1_chain(rho, n, rng):
    e = rng.standard_normal(n)
    e[0] /= math.sqrt(1 - rho**2)
    return lfilter([1.0], [1.0, -rho], e)


def test_inefficiency_factor_iid():
    rng = np.random.default_rng(10)
    assert inefficiency_factor(rng.standard_normal(10**5)) == pytest.approx(1.0, abs=0.1)


def test_inefficiency_factor_ar1():
    # with bandwidth 1000 a single 1e5 chain has sd near 0.35, so the
    # estimator is judged on the mean of independent chains of that length
    rng = np.random.default_rng(11)
    est = [inefficiency_factor(ar1_chain(0.5, 10**5, rng)) for _ in range(20)]
    assert np.mean(est) == pytest.approx(3.0, rel=0.1)
    assert 0.2 < np.std(est) < 0.6


def test_inefficiency_factor_errors():
    with pytest.raises(ValueError):
        inefficiency_factor(np.ones(500))
    with pytest.raises(ValueError):
        inefficiency_factor(np.arange(50.0))

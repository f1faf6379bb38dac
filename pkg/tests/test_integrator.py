import io
import json
import math

import numpy as np
import pytest

from fracspde.errors import ConfigError, PicardDivergenceError
from fracspde.integrator import (
    CoefficientSet,
    SolverConfig,
    contraction_ratio,
    discrete_norm,
    evaluate_nonlinearity,
    picard_solve,
    prepare_noise,
    resolve_diffusivity,
    sample_diffusivity,
    solve_deterministic,
    solve_linear,
    stochastic_convolution_jump,
    stochastic_convolution_wiener,
    time_changed_solve,
)
from fracspde.levy import DriverPath, LevyMeasureSpec, LevyTriplet, sample_ensemble, sample_path, truncate_big_jumps
from fracspde.spectral import Field, FieldStack, Grid, abs_power, frac_power, gradient, semigroup_apply

GRID = Grid(1, 32)
X = GRID.coords[0]


def _cfg(**kw):
    base = dict(alpha=1.0, T=0.5, dt=0.05, grid=GRID)
    base.update(kw)
    return SolverConfig(**base)


# -- configuration ---------------------------------------------------------------


def test_eps1_defaults_and_guards():
    assert _cfg(p=2).eps1 == 0.0
    assert _cfg(p=4).eps1 == pytest.approx(0.25 + 0.05)
    with pytest.raises(ConfigError):
        _cfg(p=2, eps1=0.1)
    with pytest.raises(ConfigError) as err:
        _cfg(p=4, eps1=0.25)
    assert "alpha(1/2 - 1/p)" in err.value.condition
    assert _cfg(p=4, eps1=0.26).eps1 == 0.26


@pytest.mark.parametrize("kw", [{"alpha": 0.0}, {"alpha": 2.0}, {"p": 1.5}, {"dt": 0.3}, {"K": 0}])
def test_config_guards(kw):
    with pytest.raises(ConfigError):
        _cfg(**kw)


def test_diffusivity_resolution():
    cfg = _cfg()
    assert resolve_diffusivity(None, cfg).shape == (1, 10)
    assert np.all(resolve_diffusivity(2.0, cfg) == 2.0)
    steps = resolve_diffusivity(lambda t: 1 + t, cfg)
    assert np.allclose(steps[0], 1 + cfg.times[:-1])
    with pytest.raises(ConfigError):
        resolve_diffusivity(np.ones(7), cfg)
    with pytest.raises(ConfigError):
        resolve_diffusivity(-1.0, cfg)
    with pytest.raises(ConfigError):
        resolve_diffusivity(3.0, cfg, delta=0.5)


def test_sampled_diffusivity_stays_inside_bounds():
    a = sample_diffusivity(0.4, 2.0, 0.01, seed=1, n_paths=20, vol=5.0)
    assert a.shape[0] == 20
    assert np.all(a > 0.4) and np.all(a < 2.5)
    again = sample_diffusivity(0.4, 2.0, 0.01, seed=1, n_paths=20, vol=5.0)
    assert np.array_equal(a, again)


def test_discrete_norm():
    vals = np.array([[1.0, 2.0], [3.0, 0.0]])
    assert discrete_norm(vals, 0.5, 2) == pytest.approx(math.sqrt((0.5 * 5 + 0.5 * 9) / 2))


# -- deterministic solves ----------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.6, 1.0, 1.7])
def test_eigenmode_decay_is_exact(alpha):
    k = 3
    cfg = _cfg(alpha=alpha)
    sol = solve_deterministic(Field(GRID, np.sin(k * X)), cfg=cfg)
    expected = math.exp(-(k**alpha) * cfg.T) * np.sin(k * X)
    assert np.allclose(sol.final[0], expected, atol=1e-14)
    assert np.array_equal(sol.states[0, 0], np.sin(k * X))


def test_duhamel_forcing_is_exact():
    k, alpha = 2, 1.3
    cfg = _cfg(alpha=alpha)
    lam = k**alpha
    sol = solve_deterministic(None, Field(GRID, np.sin(k * X)), cfg=cfg)
    assert np.allclose(sol.final[0], (1 - math.exp(-lam * cfg.T)) / lam * np.sin(k * X), atol=1e-14)


def test_constant_forcing_grows_linearly():
    cfg = _cfg()
    sol = solve_deterministic(None, Field.constant(GRID, 2.0), cfg=cfg)
    assert np.allclose(sol.final[0], 2.0 * cfg.T, atol=1e-14)


def test_zero_data_stays_zero():
    sol = solve_deterministic(None, cfg=_cfg())
    assert not sol.states.any()
    assert not sol.norm_top.any()


def test_time_dependent_forcing_and_diffusivity(rng):
    # callable data is frozen at left endpoints: compare against a hand loop
    cfg = _cfg(alpha=1.5)
    u0 = Field.random(GRID, rng)
    f = lambda t: np.cos(3 * t) * np.sin(2 * X)
    a = lambda t: 1 + 0.3 * t
    sol = solve_deterministic(u0, f, a, cfg)
    lam = GRID.abs_xi**1.5
    u = GRID.fft(u0.values)
    for t in cfg.times[:-1]:
        E = np.exp(-a(t) * cfg.dt * lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = np.where(lam == 0, cfg.dt, -np.expm1(-a(t) * cfg.dt * lam) / (a(t) * lam))
        u = E * u + phi * GRID.fft(f(t))
    assert np.allclose(sol.final[0], GRID.ifft(u), atol=1e-13)


def test_diagnostic_norms(rng):
    cfg = _cfg(gamma=-0.3, p=3)
    u0 = Field.random(GRID, rng)
    f = Field.random(GRID, rng)
    sol = solve_deterministic(u0, f, 1.4, cfg)
    n = 4
    state = sol.state(n)
    assert sol.norm_gamma[0, n] == pytest.approx(GRID.sobolev_norm(state.values, -0.3, 3))
    assert sol.norm_top[0, n] == pytest.approx(GRID.sobolev_norm(state.values, 0.7, 3))
    drift = 1.4 * frac_power(state, 1.0).values + f.values
    assert sol.drift_norm[0, n] == pytest.approx(GRID.sobolev_norm(drift, -0.3, 3))


def test_solution_exports(rng):
    sol = solve_deterministic(Field.random(GRID, rng), cfg=_cfg())
    buf = io.StringIO()
    sol.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "time,node,value"
    assert len(lines) == 1 + 11 * 32
    buf = io.StringIO()
    sol.write_csv(buf, space="frequency")
    assert buf.getvalue().startswith("time,frequency,value_re,value_im")
    with pytest.raises(ConfigError):
        sol.write_csv(io.StringIO(), space="wavelet")
    buf = io.StringIO()
    sol.write_json(buf)
    data = json.loads(buf.getvalue())
    assert data["n_paths"] == 1 and len(data["times"]) == 11


# -- stochastic convolutions ---------------------------------------------------------


def test_zero_integrand_gives_zero():
    cfg = _cfg()
    paths = sample_ensemble(LevyTriplet.wiener(), cfg.T, cfg.dt, 1, 3, n_drivers=1)
    sol = stochastic_convolution_wiener(FieldStack(GRID, np.zeros((1, 32))), paths, cfg)
    assert not sol.states.any()


def test_per_mode_ou_variance():
    k, alpha = 2, 1.0
    cfg = _cfg(alpha=alpha, T=0.4, dt=0.04)
    g = FieldStack(GRID, np.sin(k * X)[None])
    paths = sample_ensemble(LevyTriplet.wiener(), cfg.T, cfg.dt, 7, 10_000, n_drivers=1)
    sol = stochastic_convolution_wiener(g, paths, cfg, keep_states=False)
    amp = sol.final @ np.sin(k * X) / (GRID.n / 2)
    n = cfg.n_steps
    target = sum(cfg.dt * math.exp(-2 * k**alpha * (n - j) * cfg.dt) for j in range(n))
    var = amp.var(ddof=1)
    se = var * math.sqrt(2 / (amp.size - 1))
    assert abs(var - target) < 3 * se
    assert abs(amp.mean()) < 3 * math.sqrt(var / amp.size)


def test_wiener_recursion_matches_hand_loop(rng):
    cfg = _cfg(alpha=1.2)
    g = FieldStack(GRID, GRID.random_values(rng, size=2))
    paths = sample_ensemble(LevyTriplet.wiener(), cfg.T, cfg.dt, 3, 1, n_drivers=2)
    sol = stochastic_convolution_wiener(g, paths, cfg)
    u = np.zeros(32)
    for n in range(cfg.n_steps):
        kick = sum(g.components[k] * paths[0][k].wiener_increments[n, 0] for k in range(2))
        u = semigroup_apply(Field(GRID, u + kick), cfg.dt, 1.0, 1.2).values
    assert np.allclose(sol.final[0], u, atol=1e-13)


def _single_jump_path(spec, T, dt, tau, z):
    return DriverPath(LevyTriplet.pure_jump(spec), T, dt, np.zeros((round(T / dt), 1)),
                      np.array([tau]), np.array([[z]]), seed=0)


def test_single_jump_hand_evaluation():
    cfg = _cfg(alpha=1.5)
    spec = LevyMeasureSpec.symmetric(1.0, 0.5)  # symmetric: zero compensator
    g_field = Field(GRID, np.exp(np.cos(X)))
    tau, z = 0.23, -0.8
    path = _single_jump_path(spec, cfg.T, cfg.dt, tau, z)
    sol = stochastic_convolution_jump(FieldStack(GRID, g_field.values[None]), [path], cfg)
    expected = semigroup_apply(g_field * z, cfg.T - tau, 1.0, 1.5).values
    assert np.allclose(sol.final[0], expected, atol=1e-13)
    before = int(tau / cfg.dt)
    assert not sol.states[0, : before + 1].any()


def test_skewed_jump_measure_subtracts_compensator():
    cfg = _cfg()
    spec = LevyMeasureSpec([1.0], [2.0])
    path = DriverPath(LevyTriplet.pure_jump(spec), cfg.T, cfg.dt, np.zeros((10, 1)),
                      np.zeros(0), np.zeros((0, 1)), seed=0)
    sol = stochastic_convolution_jump(FieldStack(GRID, np.ones((1, 32))), [path], cfg)
    assert np.allclose(sol.final[0], -2.0 * cfg.T, atol=1e-13)


def test_jump_convolution_is_mean_zero():
    grid = Grid(1, 16)
    cfg = SolverConfig(alpha=1.0, T=0.2, dt=0.05, grid=grid)
    spec = LevyMeasureSpec([1.0, -0.5], [1.0, 3.0])
    paths = sample_ensemble(LevyTriplet.pure_jump(spec), cfg.T, cfg.dt, 5, 10_000, n_drivers=1)
    g = FieldStack(grid, (1 + 0.5 * np.sin(grid.coords[0]))[None])
    sol = stochastic_convolution_jump(g, paths, cfg, keep_states=False)
    z = sol.final.mean(axis=0) / (sol.final.std(axis=0, ddof=1) / math.sqrt(10_000))
    assert np.all(np.abs(z) < 4)  # 16 correlated nodes, all within a few standard errors
    assert np.mean(np.abs(z) < 3) >= 0.9


def test_non_recentred_triplet_is_rejected():
    cfg = _cfg()
    tr = LevyTriplet([0.0], 0.0, LevyMeasureSpec.symmetric(2.0, 1.0))
    path = sample_path(tr, cfg.T, cfg.dt, 0)
    with pytest.raises(ConfigError):
        prepare_noise(cfg, jump_paths=[[path]])


# -- reductions -----------------------------------------------------------------------


def test_linear_reduces_to_deterministic_bitwise(rng):
    cfg = _cfg(alpha=1.4, gamma=0.3)
    u0, f = Field.random(GRID, rng), Field.random(GRID, rng)
    a = lambda t: 1 + 0.5 * np.sin(t)
    lin = solve_linear(u0=u0, f=f, a=a, cfg=cfg)
    det = solve_deterministic(u0, f, a, cfg)
    assert np.array_equal(lin.states, det.states)
    assert np.array_equal(lin.norm_top, det.norm_top)


def test_linear_reduces_to_wiener_convolution_bitwise(rng):
    cfg = _cfg()
    h = FieldStack(GRID, GRID.random_values(rng, size=2))
    paths = sample_ensemble(LevyTriplet.wiener(), cfg.T, cfg.dt, 9, 4, n_drivers=2)
    lin = solve_linear(h=h, wiener_paths=paths, cfg=cfg)
    conv = stochastic_convolution_wiener(h, paths, cfg)
    assert np.array_equal(lin.states, conv.states)


def test_linear_reduces_to_jump_convolution_bitwise(rng):
    cfg = _cfg()
    g = FieldStack(GRID, GRID.random_values(rng, size=2))
    tr = LevyTriplet.pure_jump(LevyMeasureSpec.symmetric(1.0, 3.0))
    paths = sample_ensemble(tr, cfg.T, cfg.dt, 9, 4, n_drivers=2)
    lin = solve_linear(g=g, jump_paths=paths, cfg=cfg)
    conv = stochastic_convolution_jump(g, paths, cfg)
    assert np.array_equal(lin.states, conv.states)


def test_linear_superposition(rng):
    cfg = _cfg()
    u0, f = Field.random(GRID, rng), Field.random(GRID, rng)
    h = FieldStack(GRID, GRID.random_values(rng, size=1))
    paths = sample_ensemble(LevyTriplet.wiener(), cfg.T, cfg.dt, 2, 2, n_drivers=1)
    full = solve_linear(u0=u0, f=f, h=h, wiener_paths=paths, cfg=cfg)
    det = solve_deterministic(u0, f, cfg=cfg)
    noise = stochastic_convolution_wiener(h, paths, cfg)
    assert np.allclose(full.states, det.states + noise.states, atol=1e-13)


def test_truncated_drivers_agree_before_first_big_jump():
    cfg = _cfg(T=2.0, dt=0.05)
    spec = LevyMeasureSpec([1.0, -1.0, 6.0, -6.0], [1.0, 1.0, 0.4, 0.4])
    tr = LevyTriplet.pure_jump(spec)
    g = FieldStack(GRID, np.cos(X)[None])
    for seed in range(20):
        path = sample_path(tr, cfg.T, cfg.dt, seed)
        cut, first = truncate_big_jumps(path, 3.0)
        if first is None:
            continue
        full = stochastic_convolution_jump(g, [path], cfg)
        trunc = stochastic_convolution_jump(g, [cut], cfg)
        before = cfg.times < first
        assert np.allclose(full.states[0, before], trunc.states[0, before], atol=1e-12)
        assert not np.allclose(full.final, trunc.final)
        return
    pytest.fail("no sampled path contained a big jump")


# -- time change ---------------------------------------------------------------------


def test_time_change_matches_direct_solve_to_first_order(rng):
    u0, f = Field.random(GRID, rng), Field.random(GRID, rng)
    a = lambda t: 1 + 0.5 * np.sin(t)
    errors = []
    for dt in (0.05, 0.025, 0.0125):
        cfg = SolverConfig(alpha=1.0, T=1.0, dt=dt, grid=GRID)
        direct = solve_deterministic(u0, f, a, cfg, keep_states=False).final[0]
        changed = time_changed_solve(u0, f, a, cfg).final[0]
        errors.append(np.abs(direct - changed).max())
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(np.abs(orders - 1) < 0.2)


def test_time_change_with_closed_form_clock(rng):
    u0, f = Field.random(GRID, rng), Field.random(GRID, rng)
    a = lambda t: 1 + 0.5 * np.sin(t)
    clock = lambda t: t + 0.5 * (1 - np.cos(t))
    cfg = SolverConfig(alpha=1.0, T=1.0, dt=0.05, grid=GRID)
    quad = time_changed_solve(u0, f, a, cfg).final[0]
    closed = time_changed_solve(u0, f, a, cfg, clock=clock).final[0]
    assert np.allclose(quad, closed, atol=1e-10)


# -- nonlinearity ------------------------------------------------------------------------


def test_nonlinearity_at_zero_returns_free_terms():
    cfg = _cfg(alpha=1.5)
    f0, h0, g0 = np.sin(X), np.cos(X)[None], np.ones((1, 1, 32))
    co = CoefficientSet(b=0.3, beta1=0.5, dcoef=0.2, eta=0.1, beta2=0.2, ell=0.1, sigma=0.1, nu=0.2,
                        beta3=0.1, f0=f0, h0=h0, g0=g0)
    f, h, g = evaluate_nonlinearity(Field.zeros(GRID), 0.0, co, cfg)
    assert np.array_equal(f.values, f0)
    assert np.array_equal(h.components, h0)
    assert np.array_equal(g[0].components, g0[:, 0])


def test_nonlinearity_without_coefficients_is_absent(rng):
    f, h, g = evaluate_nonlinearity(Field.random(GRID, rng), 0.0, CoefficientSet(), _cfg())
    assert f is None and h is None and g is None


def test_nonlinearity_terms(rng):
    cfg = _cfg(alpha=1.5)
    u = Field.random(GRID, rng)
    b, c, d = np.cos(X), np.sin(X), 0.7
    co = CoefficientSet(b=b, beta1=0.8, c=[c], dcoef=d)
    f, _, _ = evaluate_nonlinearity(u, 0.0, co, cfg)
    expected = b * frac_power(u, 0.8).values + c * gradient(u)[0].values + d * u.values
    assert np.allclose(f.values, expected, atol=1e-12)
    # the gradient term is switched off for alpha <= 1
    f_low, _, _ = evaluate_nonlinearity(u, 0.0, CoefficientSet(c=[c]), _cfg(alpha=1.0))
    assert f_low is None


def test_nonlinearity_lipschitz_bound(rng):
    cfg = _cfg(alpha=1.5)
    b, c, d = 0.4 * np.cos(X), 0.3 * np.sin(2 * X), -0.2 + 0.1 * np.cos(X)
    co = CoefficientSet(b=b, beta1=1.2, c=[c], dcoef=d)
    for _ in range(20):
        u, v = Field.random(GRID, rng), Field.random(GRID, rng)
        fu, _, _ = evaluate_nonlinearity(u, 0.0, co, cfg)
        fv, _, _ = evaluate_nonlinearity(v, 0.0, co, cfg)
        w = u - v
        lhs = GRID.lp_norm(fu.values - fv.values, 2)
        rhs = (np.abs(b).max() * GRID.lp_norm(abs_power(w, 1.2).values, 2)
               + np.abs(c).max() * GRID.lp_norm(gradient(w)[0].values, 2)
               + np.abs(d).max() * GRID.lp_norm(w.values, 2))
        assert lhs <= rhs * (1 + 1e-12)


@pytest.mark.parametrize("kw", [
    {"b": 1.0, "beta1": 1.0},
    {"eta": 1.0, "beta2": 0.5},
    {"sigma": 1.0, "beta3": 0.5},
    {"c": [1.0, 1.0]},
])
def test_order_bounds_are_enforced(kw):
    with pytest.raises(ConfigError):
        evaluate_nonlinearity(Field.zeros(GRID), 0.0, CoefficientSet(**kw), _cfg(alpha=1.0))


def test_coefficient_sup_bound():
    with pytest.raises(ConfigError):
        CoefficientSet(b=np.full(32, 2.0), K_bound=1.0)
    with pytest.raises(ConfigError):
        CoefficientSet(delta=1.5)


# -- Picard ---------------------------------------------------------------------------------


def test_picard_with_free_terms_only_is_one_linear_solve(rng):
    cfg = _cfg()
    u0 = Field.random(GRID, rng)
    f0 = GRID.random_values(rng)
    h0 = GRID.random_values(rng, size=1)
    paths = sample_ensemble(LevyTriplet.wiener(), cfg.T, cfg.dt, 4, 3, n_drivers=1)
    sol = picard_solve(u0, CoefficientSet(f0=f0, h0=h0), cfg, wiener_paths=paths)
    assert sol.picard_history == [0.0]
    lin = solve_linear(u0=u0, f=f0, h=h0, wiener_paths=paths, cfg=cfg)
    assert np.allclose(sol.states, lin.states, atol=1e-14)


def test_picard_linear_growth_matches_ode():
    k, alpha, lam = 2, 1.0, 0.8
    u0 = Field(GRID, np.sin(k * X))
    errors = []
    for dt in (0.02, 0.01):
        cfg = SolverConfig(alpha=alpha, T=0.5, dt=dt, grid=GRID, picard_tol=1e-12)
        sol = picard_solve(u0, CoefficientSet(dcoef=lam), cfg)
        exact = math.exp((lam - k**alpha) * cfg.T) * np.sin(k * X)
        errors.append(np.abs(sol.final[0] - exact).max())
    assert errors[0] < 5e-3
    assert 1.6 < errors[0] / errors[1] < 2.4


def test_picard_hits_iteration_cap():
    cfg = _cfg(picard_max_iters=2, picard_tol=1e-14)
    with pytest.raises(PicardDivergenceError) as err:
        picard_solve(Field(GRID, np.sin(X)), CoefficientSet(dcoef=0.5), cfg)
    assert len(err.value.history) == 2
    assert len(err.value.ratios) >= 1


def test_picard_splits_horizon_when_iteration_grows():
    # (lam T)^n / n! transients exceed the sweep cap on the full horizon
    cfg = SolverConfig(alpha=1.0, T=3.0, dt=0.01, grid=GRID, picard_max_iters=10, picard_tol=1e-6)
    sol = picard_solve(Field(GRID, np.sin(X)), CoefficientSet(dcoef=2.0), cfg)
    assert sol.meta["subintervals"] > 1
    assert len(sol.meta["iterations"]) == sol.meta["subintervals"]
    exact = math.exp((2.0 - 1.0) * cfg.T) * np.sin(X)
    assert np.abs(sol.final[0] - exact).max() / np.abs(exact).max() < 0.05


def test_contraction_ratio_of_geometric_sequence():
    assert contraction_ratio([1.0, 0.5, 0.25, 0.125]) == pytest.approx(0.5)
    assert contraction_ratio([1.0]) == 0.0

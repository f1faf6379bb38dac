import math

import numpy as np
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fracspde.integrator import SolverConfig, contraction_ratio, solve_deterministic
from fracspde.levy import LevyMeasureSpec, moment_constant, moment_constants
from fracspde.spectral import (
    Field,
    Grid,
    MultiplierSymbol,
    bessel_potential,
    forward_transform,
    frac_power,
    inverse_transform,
    lp_norm,
    semigroup_apply,
    sobolev_norm,
)
from fracspde.whitenoise import (
    BasisSpec,
    WhiteNoiseConfig,
    hbar,
    r_gamma_kernel,
    solvability_interval,
    validate_exponents,
)

GRID = Grid(1, 32)
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
values = arrays(np.float64, 32, elements=finite)
alphas = st.floats(0.1, 2.0)
times = st.floats(0.0, 2.0)
orders = st.floats(-3.0, 3.0)


@given(values)
def test_transform_round_trip(v):
    u = Field(GRID, v)
    back = inverse_transform(forward_transform(u)).values
    assert np.allclose(back, v, atol=1e-12 * (1 + np.abs(v).max()))


@given(values)
def test_plancherel(v):
    u = Field(GRID, v)
    assert math.isclose(sobolev_norm(u, 0, 2), lp_norm(u, 2), rel_tol=1e-12, abs_tol=1e-12)


@given(values, times, times, alphas, st.floats(0.1, 3.0))
def test_semigroup_composes(v, s, t, alpha, a):
    u = Field(GRID, v)
    two = semigroup_apply(semigroup_apply(u, s, a, alpha), t, a, alpha).values
    one = semigroup_apply(u, s + t, a, alpha).values
    assert np.allclose(two, one, atol=1e-11 * (1 + np.abs(v).max()))


@given(values, times, alphas)
def test_semigroup_keeps_mass_and_contracts(v, t, alpha):
    u = Field(GRID, v)
    out = semigroup_apply(u, t, 1.0, alpha)
    assert math.isclose(out.mean(), u.mean(), abs_tol=1e-11 * (1 + np.abs(v).max()))
    assert lp_norm(out, 2) <= lp_norm(u, 2) * (1 + 1e-12) + 1e-12


@given(values, orders, orders)
def test_bessel_potentials_form_a_group(v, a, b):
    u = Field(GRID, v)
    two = bessel_potential(bessel_potential(u, a), b).values
    one = bessel_potential(u, a + b).values
    scale = 1 + np.abs(v).max() * (1 + GRID.n**2) ** (max(a, b, a + b, 0) / 2)
    assert np.allclose(two, one, atol=1e-11 * scale)


@given(values, finite, alphas)
def test_frac_power_is_linear(v, c, alpha):
    u = Field(GRID, v)
    lhs = frac_power(u * c, alpha).values
    rhs = c * frac_power(u, alpha).values
    assert np.allclose(lhs, rhs, atol=1e-10 * (1 + abs(c)) * (1 + np.abs(v).max()) * GRID.n**alpha)


@given(st.integers(1, 4), st.floats(0.05, 3.0))
def test_eta_symbols_are_bounded_where_claimed(i, beta):
    vals = np.abs(GRID.symbol(MultiplierSymbol.eta(i, beta)))
    assert np.all(np.isfinite(vals))
    if i >= 3:
        assert vals.max() <= 1 + 1e-12


@given(st.lists(st.tuples(st.floats(0.05, 5.0), st.floats(0.05, 5.0)), min_size=1, max_size=5),
       st.floats(2.0, 8.0), st.floats(0.0, 1.0))
def test_moment_constants_interpolate(atoms, p, frac):
    spec = LevyMeasureSpec([m for m, _ in atoms], [r for _, r in atoms])
    consts = moment_constants(spec, p)
    q = 2 + frac * (p - 2)
    assert moment_constant(spec, q) <= consts.chat * (1 + 1e-12)


@given(st.integers(1, 32))
def test_basis_is_orthonormal(k):
    eta = BasisSpec(GRID, k).functions().components
    assert np.allclose(GRID.h * eta @ eta.T, np.eye(k), atol=1e-12)


@given(st.floats(-1.0, 1.0).filter(lambda c: abs(c) > 1e-3))
def test_hbar_is_absolutely_homogeneous(c):
    x = GRID.coords[0]
    h0 = Field(GRID, 1 + 0.5 * np.cos(x))
    xi0 = Field(GRID, np.exp(0.3 * np.sin(x)))
    base = hbar(h0, xi0, -1.3, 1.5).values
    assert np.allclose(hbar(h0 * c, xi0, -1.3, 1.5).values, abs(c) * base, rtol=1e-12, atol=0)


@given(st.floats(1.05, 1.95), st.floats(0.01, 0.99))
def test_solvability_interval_satisfies_exponent_rules(alpha, frac):
    lo, hi = solvability_interval(alpha)
    gamma = lo + frac * (hi - lo)
    ok, problems = validate_exponents(WhiteNoiseConfig(gamma, alpha))
    assert ok, problems


@given(st.floats(-0.95, -0.05), st.floats(0.05, 5.0), st.floats(1.01, 3.0))
def test_kernel_is_positive_and_decreasing(mu, x, stretch):
    near, far = r_gamma_kernel(np.array([x, x * stretch]), mu - 0.5, 1.0)
    assert 0 < far < near


@given(st.floats(1e-3, 0.99), st.floats(1e-6, 1.0), st.integers(3, 8))
def test_contraction_ratio_of_geometric_history(q, start, n):
    history = [start * q**i for i in range(n)]
    assert math.isclose(contraction_ratio(history), q, rel_tol=1e-9)


@given(finite, finite)
def test_deterministic_solver_is_linear(c1, c2):
    cfg = SolverConfig(alpha=1.2, T=0.1, dt=0.02, grid=GRID)
    x = GRID.coords[0]
    u1, f1 = Field(GRID, np.sin(x)), Field(GRID, np.cos(2 * x))
    u2, f2 = Field(GRID, np.cos(3 * x)), Field(GRID, np.ones(32))
    a = solve_deterministic(u1, f=f1, cfg=cfg, keep_states=False).final
    b = solve_deterministic(u2, f=f2, cfg=cfg, keep_states=False).final
    ab = solve_deterministic(u1 * c1 + u2 * c2, f=f1 * c1 + f2 * c2, cfg=cfg, keep_states=False).final
    assert np.allclose(ab, c1 * a + c2 * b, atol=1e-12 * (1 + abs(c1) + abs(c2)))

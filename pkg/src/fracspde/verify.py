"""Ratio checks for the moment and regularity inequalities.

Constants in these inequalities are existential, so each check reports the
ratio lhs/rhs together with enough metadata (Monte-Carlo error, refinement
series, flags) to test that the ratio is bounded and refinement-stable.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, UnsupportedError
from .integrator import (
    SolverConfig,
    _as_array,
    _source,
    discrete_norm,
    solve_deterministic,
    solve_linear,
    time_changed_solve,
)
from .levy import LevyMeasureSpec, LevyTriplet, StepFunction, sample_ensemble
from .spectral import Field, FieldStack, Grid, MultiplierSymbol

OUTSIDE_REGIME = "outside-lemma regime"


# -- reports -------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, (Field, FieldStack)):
        obj = obj.values if isinstance(obj, Field) else obj.components
    if isinstance(obj, np.ndarray):
        arr = np.ascontiguousarray(obj, dtype=float)
        return {"shape": list(arr.shape), "sha256": hashlib.sha256(arr.tobytes()).hexdigest()}
    if isinstance(obj, StepFunction):
        return {"breaks": _jsonable(obj.breaks), "values": _jsonable(obj.values)}
    if isinstance(obj, LevyMeasureSpec):
        return {"marks": _jsonable(obj.marks), "rates": _jsonable(obj.rates)}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if callable(obj):
        return getattr(obj, "__qualname__", repr(obj))
    return obj


def config_digest(config: dict) -> str:
    text = json.dumps(_jsonable(config), sort_keys=True, default=repr)
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    ratio: float
    mc_paths: int = 0
    mc_std_error: float = 0.0
    config_digest: str = ""
    refinement_series: Optional[list] = None
    flags: list = field(default_factory=list)
    passed: bool = True
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lhs < 0 or self.rhs < 0:
            raise ValueError("inequality sides must be nonnegative")

    @property
    def refinement_level(self) -> int:
        return len(self.refinement_series) - 1 if self.refinement_series else 0

    @property
    def refinement_drift(self) -> float:
        """Largest relative change between consecutive ratios in the series."""
        s = self.refinement_series or []
        if len(s) < 2:
            return 0.0
        return max(abs(b / a - 1) if a else (0.0 if b == a else math.inf) for a, b in zip(s[:-1], s[1:]))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["refinement_level"] = self.refinement_level
        return _jsonable(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)


def make_report(name, lhs, rhs, config, **kw) -> InequalityReport:
    lhs, rhs = float(lhs), float(rhs)
    if rhs > 0:
        ratio = lhs / rhs
    else:
        ratio = 0.0 if lhs == 0 else math.inf
    kw.setdefault("passed", math.isfinite(ratio))
    return InequalityReport(name, lhs, rhs, ratio, config_digest=config_digest(config), **kw)


def with_refinement(reports: Sequence[InequalityReport], max_drift) -> InequalityReport:
    """Fold a refinement sweep into its finest report and gate on the ratio drift."""
    last = dataclasses.replace(reports[-1])
    last.refinement_series = [r.ratio for r in reports]
    last.details = dict(last.details, max_drift=max_drift, drift=last.refinement_drift)
    last.passed = all(r.passed for r in reports) and last.refinement_drift < max_drift
    return last


def write_reports_csv(reports: Sequence[InequalityReport], fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["name", "lhs", "rhs", "ratio", "mc_std_error", "refinement_level", "pass"])
    for r in reports:
        writer.writerow([r.name, repr(r.lhs), repr(r.rhs), repr(r.ratio), repr(r.mc_std_error),
                         r.refinement_level, r.passed])


# -- quadrature helpers --------------------------------------------------------


def gauss_panels(a, b, width, nodes):
    """Gauss-Legendre nodes and weights on [a, b] split into panels of at most ``width``."""
    if b <= a:
        return np.zeros(0), np.zeros(0)
    count = max(1, math.ceil((b - a) / width - 1e-9))
    edges = np.linspace(a, b, count + 1)
    x, w = np.polynomial.legendre.leggauss(nodes)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def _stack_at(g, grid):
    """Time-indexed stack data -> callable t -> (K, *grid) array."""
    if callable(g) and not isinstance(g, (Field, FieldStack)):
        def at(t):
            arr = _as_array(g(t))
            return arr[None] if arr.ndim == grid.dim else arr
        return at, False
    arr = _as_array(g)
    arr = arr[None] if arr.ndim == grid.dim else arr
    return (lambda t: arr), True


def _smoothed_power_integral(g, grid, alpha, T, dt, nodes, inner_power, outer_power):
    """int_0^T int_x [ int_0^t |(-Delta)^{alpha/4} T_{t-s} g(s)|_{l2}^inner ds ]^outer dx dt.

    Both time integrals use Gauss-Legendre panels of width dt; the inner
    panels below the outer node's panel are shared across outer nodes.
    """
    g_at, static = _stack_at(g, grid)
    lam = grid.symbol(MultiplierSymbol.abs_power(alpha))
    half = grid.symbol(MultiplierSymbol.abs_power(alpha / 2))
    if static:
        spec0 = grid.fft(g_at(0.0))
        spectra = lambda ss: np.broadcast_to(spec0, (len(ss),) + spec0.shape)
    else:
        spectra = lambda ss: grid.fft(np.stack([g_at(s) for s in ss]))
    n_panels = max(1, math.ceil(T / dt - 1e-9))
    edges = np.linspace(0.0, T, n_panels + 1)
    x, w = np.polynomial.legendre.leggauss(nodes)
    panel_nodes = [0.5 * (a + b) + 0.5 * (b - a) * x for a, b in zip(edges[:-1], edges[1:])]
    panel_weights = [0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])]
    cache = {}

    def panel_spec(i):
        if i not in cache:
            cache[i] = spectra(panel_nodes[i])
        return cache[i]

    total = 0.0
    for m in range(n_panels):
        for t, wt in zip(panel_nodes[m], panel_weights[m]):
            s_part, w_part = gauss_panels(edges[m], t, dt, nodes)
            ss = [panel_nodes[i] for i in range(m)] + [s_part]
            ws = np.concatenate([panel_weights[i] for i in range(m)] + [w_part])
            spec = np.concatenate([panel_spec(i) for i in range(m)] + [spectra(s_part)])
            lag = (t - np.concatenate(ss)).reshape((-1, 1) + (1,) * grid.dim)
            vals = grid.ifft(spec * half * np.exp(-lag * lam))
            mag2 = (vals**2).sum(axis=1)
            inner = np.tensordot(ws, mag2 ** (inner_power / 2), axes=1)
            total += wt * grid.integrate(inner**outer_power)
    return float(total)


# -- Littlewood-Paley and the epsilon estimate ----------------------------------


def check_littlewood_paley(g, alpha, p, T, grid: Grid, dt, nodes=8) -> InequalityReport:
    """LHS = int int [int_0^t |d^{alpha/2} T_{t-s} g(s)|^2_l2 ds]^{p/2} dt dx, RHS = int int |g|^p_l2."""
    if p < 2:
        raise ConfigError(f"p must be >= 2, got {p}")
    lhs = _smoothed_power_integral(g, grid, alpha, T, dt, nodes, 2.0, p / 2)
    g_at, _ = _stack_at(g, grid)
    ts, wts = gauss_panels(0.0, T, dt, nodes)
    rhs = sum(wt * grid.integrate(np.sqrt((g_at(t) ** 2).sum(axis=0)) ** p) for t, wt in zip(ts, wts))
    cfg = dict(g=g, alpha=alpha, p=p, T=T, grid=grid, dt=dt, nodes=nodes)
    return make_report("littlewood_paley", lhs, rhs, cfg, details={"dt": dt})


def epsilon_threshold(alpha, p) -> float:
    return alpha * (0.5 - 1.0 / p)


def check_lemma32(f, alpha, p, eps, T, grid: Grid = None, dt=None, nodes=8) -> InequalityReport:
    """LHS = int int_0^T int_0^s |d^{alpha/2} T_{s-r} f(r)|^p dr ds dx, RHS = int_0^T ||f||^p_{H^eps_p}.

    Runs below the threshold alpha(1/2 - 1/p) are allowed and flagged.
    """
    if grid is None:
        grid = f.grid if isinstance(f, Field) else Grid()
    dt = T / 20 if dt is None else dt
    flags = []
    if p <= 2 or eps <= epsilon_threshold(alpha, p):
        flags.append(OUTSIDE_REGIME)
    lhs = _smoothed_power_integral(f, grid, alpha, T, dt, nodes, p, 1.0)
    f_at, _ = _stack_at(f, grid)
    ts, wts = gauss_panels(0.0, T, dt, nodes)
    rhs = sum(wt * grid.sobolev_norm(f_at(t)[0], eps, p) ** p for t, wt in zip(ts, wts))
    cfg = dict(f=f, alpha=alpha, p=p, eps=eps, T=T, grid=grid, dt=dt, nodes=nodes)
    return make_report("epsilon_estimate", lhs, rhs, cfg, flags=flags,
                       details={"eps": eps, "threshold": epsilon_threshold(alpha, p)})


# -- Kunita --------------------------------------------------------------------


def _as_steps(g, T):
    out = []
    for gk in g:
        if isinstance(gk, StepFunction):
            out.append(gk)
        elif callable(gk):
            raise UnsupportedError("integrands must be deterministic step functions or constants")
        else:
            out.append(StepFunction.constant(gk, T))
    return out


def kunita_rhs(g: Sequence[StepFunction], p, T) -> float:
    """(int sum_k |g^k|^2 ds)^{p/2} + int sum_k |g^k|^p ds for step integrands."""
    sq = sum(StepFunction(gk.breaks, np.linalg.norm(gk.values, axis=1) ** 2).integral(T)[0] for gk in g)
    pw = sum(StepFunction(gk.breaks, np.linalg.norm(gk.values, axis=1) ** p).integral(T)[0] for gk in g)
    return float(sq ** (p / 2) + pw)


def kunita_poisson_oracle(g_value, spec: LevyMeasureSpec, p, T, tail=1e-12) -> float:
    """E[(|g|^2 |z|^2 N_T)^{p/2}] when every atom has the same norm |z|.

    N_T ~ Poisson(total rate * T); the series is cut where the remaining
    Poisson mass drops below ``tail``.
    """
    norms = spec.norms
    if norms.size == 0:
        return 0.0
    if np.ptp(norms) > 1e-14 * norms.max():
        raise UnsupportedError("the Poisson series oracle needs atoms of equal norm")
    mean = spec.total_rate * T
    n_max = int(stats.poisson.isf(tail, mean)) + 1
    n = np.arange(n_max + 1)
    weight = float(np.linalg.norm(np.atleast_1d(g_value))) ** 2 * norms[0] ** 2
    return float((stats.poisson.pmf(n, mean) * (weight * n) ** (p / 2)).sum())


def kunita_samples(g, spec: LevyMeasureSpec, p, T, n_paths, seed=0) -> np.ndarray:
    """Per-path values of (sum_k int int |g^k|^2 |z|^2 N_k(ds, dz))^{p/2} with raw jump counts."""
    g = _as_steps(g, T)
    acc = np.zeros(n_paths)
    rate = spec.total_rate
    norms2 = spec.norms**2
    for k, gk in enumerate(g):
        if rate == 0:
            break
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(k,))))
        counts = rng.poisson(rate * T, size=n_paths)
        total = int(counts.sum())
        times = rng.uniform(0.0, T, total)
        atoms = rng.choice(norms2.size, size=total, p=spec.rates / rate)
        vals = np.linalg.norm(gk(times), axis=1) ** 2 * norms2[atoms]
        acc += np.bincount(np.repeat(np.arange(n_paths), counts), weights=vals, minlength=n_paths)
    return acc ** (p / 2)


def check_kunita(g, spec: LevyMeasureSpec, p, T, n_paths=10_000, seed=0) -> InequalityReport:
    """MC check of the Kunita-type bound; ``g`` lists one integrand per driver."""
    steps = _as_steps(g, T)
    x = kunita_samples(steps, spec, p, T, n_paths, seed)
    lhs = float(x.mean())
    se = float(x.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    rhs = kunita_rhs(steps, p, T)
    cfg = dict(g=steps, spec=spec, p=p, T=T, n_paths=n_paths, seed=seed)
    details = {"K": len(steps)}
    if len(steps) == 1 and np.ptp(steps[0].values, axis=0).max() == 0 and spec.norms.size and np.ptp(spec.norms) == 0:
        oracle = kunita_poisson_oracle(steps[0].values[0], spec, p, T)
        details.update(oracle=oracle, oracle_z=(lhs - oracle) / se if se > 0 else 0.0)
    passed = math.isfinite(lhs / rhs) if rhs > 0 else lhs == 0
    if "oracle" in details:
        passed = passed and abs(lhs - details["oracle"]) <= 3 * se + 1e-12
    return make_report("kunita", lhs, rhs, cfg, mc_paths=n_paths, mc_std_error=se,
                       passed=passed, details=details)


# -- linear and sup estimates --------------------------------------------------


def _data_norm(data, cfg: SolverConfig, order, trailing, ell2):
    """(sum_n dt ||data(t_n)||^p)^{1/p} over left endpoints n = 0..N-1."""
    if data is None:
        return 0.0
    grid = cfg.grid
    at = _source(data, cfg, trailing)
    vals = []
    for n in range(cfg.n_steps):
        arr = at(n)
        if ell2:
            vals.append(grid.ell2_sobolev_norm(arr, order, cfg.p))
        else:
            vals.append(grid.sobolev_norm(arr, order, cfg.p))
    vals = np.asarray(vals)
    vals = vals.reshape(cfg.n_steps, -1).T
    return discrete_norm(vals, cfg.dt, cfg.p)


def _g_norms(g, cfg, order):
    """One l2 norm per mark component j."""
    if g is None:
        return []
    arr = g if callable(g) and not isinstance(g, (Field, FieldStack)) else _as_array(g)
    grid = cfg.grid
    if not callable(arr):
        arr = arr[:, None] if arr.ndim == grid.dim + 1 else arr
        return [_data_norm(arr[:, j], cfg, order, arr.shape[:1] + grid.shape, True) for j in range(arr.shape[1])]
    probe = _as_array(arr(0.0))
    probe = probe[:, None] if probe.ndim == grid.dim + 1 else probe

    def comp(j):
        return lambda t: (lambda a: a[:, None] if a.ndim == grid.dim + 1 else a)(_as_array(arr(t)))[:, j]

    return [_data_norm(comp(j), cfg, order, probe.shape[:1] + grid.shape, True) for j in range(probe.shape[1])]


def _stack_count(h, grid):
    arr = _as_array(h)
    return 1 if arr.ndim == grid.dim else arr.shape[0]


def _drivers(cfg, h, g, jump_spec, n_paths, seed):
    grid = cfg.grid
    wiener = jumps = None
    if h is not None:
        kw = _stack_count(h, grid)
        wiener = sample_ensemble([LevyTriplet.wiener()] * kw, cfg.T, cfg.dt, seed, n_paths)
    if g is not None:
        if jump_spec is None:
            raise ConfigError("jump data needs a jump measure")
        arr = _as_array(g)
        trip = LevyTriplet.pure_jump(jump_spec)
        jumps = sample_ensemble([trip] * arr.shape[0], cfg.T, cfg.dt, seed, n_paths, first_driver=1000)
    return wiener, jumps


def check_linear_estimate(
    cfg: SolverConfig, u0=None, f=None, h=None, g=None, a=None, n_paths=200,
    jump_spec: LevyMeasureSpec = None, seed=None, delta=None, name="linear_estimate",
) -> InequalityReport:
    """Full solution norm against the data norms of the linear equation.

    LHS = ||u||_{H^{gamma+alpha}} + ||a Delta^{alpha/2} u + f||_{H^gamma}
          + ||h||_{H^{gamma+alpha/2}} + sum_j ||g^j||_{H^{gamma+alpha/2}} + ||u0||_{gamma+alpha-alpha/p}
    RHS = ||f||_{H^gamma} + ||h||_{H^{gamma+alpha/2}} + sum_j ||g^j||_{H^{gamma+alpha/2+eps1}}
          + ||u0||_{gamma+alpha-alpha/p}
    with space-time norms from the rectangle rule (right endpoints for u,
    left endpoints for the data).
    """
    seed = cfg.seed if seed is None else seed
    grid = cfg.grid
    if h is None and g is None:
        n_paths = 1
    wiener, jumps = _drivers(cfg, h, g, jump_spec, n_paths, seed)
    sol = solve_linear(u0=u0, f=f, h=h, g=g, a=a, wiener_paths=wiener, jump_paths=jumps,
                       cfg=cfg, delta=delta, keep_states=False)
    p, gm, al = cfg.p, cfg.gamma, cfg.alpha
    per_path = cfg.dt * (sol.norm_top[:, 1:] ** p).sum(axis=1)
    u_norm = float(per_path.mean() ** (1 / p))
    se = 0.0
    if n_paths > 1 and u_norm > 0:
        se = float(u_norm ** (1 - p) / p * per_path.std(ddof=1) / np.sqrt(n_paths))
    drift = sol.drift_space_time_norm()
    f_norm = _data_norm(f, cfg, gm, grid.shape, False)
    h_norm = _data_norm(h, cfg, gm + al / 2, (_stack_count(h, grid),) + grid.shape, True) if h is not None else 0.0
    g_low = _g_norms(g, cfg, gm + al / 2)
    g_high = _g_norms(g, cfg, gm + al / 2 + cfg.eps1)
    u0_norm = 0.0 if u0 is None else float(grid.sobolev_norm(_as_array(u0), gm + al - al / p, p))
    lhs = u_norm + drift + h_norm + sum(g_low) + u0_norm
    rhs = f_norm + h_norm + sum(g_high) + u0_norm
    cfg_d = dict(cfg=cfg, u0=u0, f=f, h=h, g=g, a=a, n_paths=n_paths, jump_spec=jump_spec, seed=seed)
    details = dict(u_norm=u_norm, drift_norm=drift, f_norm=f_norm, h_norm=h_norm,
                   g_norms=g_low, g_shifted_norms=g_high, u0_norm=u0_norm, dt=cfg.dt)
    return make_report(name, lhs, rhs, cfg_d, mc_paths=n_paths, mc_std_error=se, details=details)


def check_deterministic_estimate(cfg: SolverConfig, u0=None, f=None, a=None, delta=None) -> InequalityReport:
    """The linear estimate with no noise terms."""
    return check_linear_estimate(cfg, u0=u0, f=f, a=a, delta=delta, name="deterministic_estimate")


def check_sup_estimate(
    cfg: SolverConfig, u0=None, f=None, h=None, g=None, a=None, n_paths=200,
    jump_spec: LevyMeasureSpec = None, seed=None, delta=None,
) -> InequalityReport:
    """LHS = E sup_n ||u(t_n)||^p_{H^gamma_p}; RHS = ||Du||^p + ||h||^p + sum_j ||g^j||^p + ||u0||^p, all at order gamma."""
    seed = cfg.seed if seed is None else seed
    grid = cfg.grid
    if h is None and g is None:
        n_paths = 1
    wiener, jumps = _drivers(cfg, h, g, jump_spec, n_paths, seed)
    sol = solve_linear(u0=u0, f=f, h=h, g=g, a=a, wiener_paths=wiener, jump_paths=jumps,
                       cfg=cfg, delta=delta, keep_states=False)
    p, gm = cfg.p, cfg.gamma
    sups = sol.norm_gamma.max(axis=1) ** p
    lhs = float(sups.mean())
    se = float(sups.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    drift = sol.drift_space_time_norm() ** p
    h_norm = _data_norm(h, cfg, gm, (_stack_count(h, grid),) + grid.shape, True) ** p if h is not None else 0.0
    g_norm = sum(x**p for x in _g_norms(g, cfg, gm))
    u0_norm = 0.0 if u0 is None else float(grid.sobolev_norm(_as_array(u0), gm, p)) ** p
    rhs = drift + h_norm + g_norm + u0_norm
    cfg_d = dict(cfg=cfg, u0=u0, f=f, h=h, g=g, a=a, n_paths=n_paths, jump_spec=jump_spec, seed=seed)
    details = dict(drift=drift, h=h_norm, g=g_norm, u0=u0_norm, dt=cfg.dt,
                   deterministic_bound=deterministic_sup_bound(sol) if n_paths == 1 else None)
    return make_report("sup_estimate", lhs, rhs, cfg_d, mc_paths=n_paths, mc_std_error=se, details=details)


def deterministic_sup_bound(sol) -> float:
    """||u0|| + T^{1-1/p} ||Du||_{L_p(0,T; H^gamma_p)} for a single noise-free path.

    Follows from u(t) = u0 + int_0^t Du ds and Hoelder in time.
    """
    p = sol.p
    T = sol.times[-1]
    return float(sol.norm_gamma[0, 0] + T ** (1 - 1 / p) * sol.drift_space_time_norm())


# -- static multiplier checks --------------------------------------------------


def check_interpolation(u: Field, gamma, alpha, alpha1, p) -> InequalityReport:
    """||u||_{gamma+alpha1} against ||u||_{gamma+alpha}^{alpha1/alpha} ||u||_gamma^{1-alpha1/alpha}."""
    if not 0 < alpha1 < alpha:
        raise ConfigError(f"need 0 < alpha1 < alpha, got alpha1={alpha1}, alpha={alpha}")
    grid = u.grid
    theta = alpha1 / alpha
    lhs = grid.sobolev_norm(u.values, gamma + alpha1, p)
    rhs = grid.sobolev_norm(u.values, gamma + alpha, p) ** theta * grid.sobolev_norm(u.values, gamma, p) ** (1 - theta)
    rep = make_report("interpolation", lhs, rhs, dict(u=u, gamma=gamma, alpha=alpha, alpha1=alpha1, p=p))
    if p == 2:
        rep.passed = rep.ratio <= 1 + 1e-10
    return rep


def _eta_chain(indices, beta):
    if isinstance(indices, int):
        indices = (indices,)
    syms = [MultiplierSymbol.eta(i, beta) for i in indices]
    return syms


def check_multiplier_bounds(i, beta, p, grid: Grid, trials=20, seed=0, refinements=0, max_drift=0.10) -> InequalityReport:
    """max over random band-limited u of ||eta_i(D) u||_p / ||u||_p.

    ``i`` may be a tuple of indices, applied as a composition.  With
    ``refinements`` > 0 the grid is doubled that many times and the ratios
    form the refinement series.
    """
    reports = []
    g = grid
    for level in range(refinements + 1):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(level,))))
        u = g.random_values(rng, size=trials)
        sym = np.ones(g.shape)
        for s in _eta_chain(i, beta):
            sym = sym * g.symbol(s)
        out = g.apply(u, sym)
        num, den = g.lp_norm(out, p), g.lp_norm(u, p)
        k = int(np.argmax(num / den))
        rep = make_report(f"multiplier_eta{i}", num[k], den[k],
                          dict(i=i, beta=beta, p=p, grid=g, trials=trials, seed=seed))
        if p == 2:
            rep.passed = rep.ratio <= float(np.abs(sym).max()) + 1e-10
        reports.append(rep)
        g = g.refined()
    if refinements == 0:
        return reports[0]
    return with_refinement(reports, max_drift)


def check_pointwise_multiplier(a: Field, h: Field, p, gamma=0.0) -> InequalityReport:
    """||a h||_p <= sup|a| ||h||_p; only the order-zero case is supported."""
    if gamma != 0:
        raise UnsupportedError("pointwise multiplier check supports gamma = 0 only")
    grid = h.grid
    lhs = grid.lp_norm(a.values * h.values, p)
    rhs = np.abs(a.values).max() * grid.lp_norm(h.values, p)
    rep = make_report("pointwise_multiplier", lhs, rhs, dict(a=a, h=h, p=p))
    rep.passed = rep.ratio <= 1 + 1e-12
    return rep


# -- Monte-Carlo isometry and time change --------------------------------------


def check_ito_isometry(g, cfg: SolverConfig, n_paths=10_000, seed=None, chunk=2000) -> InequalityReport:
    """E||u(T)||^2_{L2} of the Wiener convolution against sum_k sum_j dt ||T_{T-t_j} g^k(t_j)||^2.

    The right side is evaluated deterministically over the same time grid.
    """
    from .integrator import stochastic_convolution_wiener

    seed = cfg.seed if seed is None else seed
    grid = cfg.grid
    K = _stack_count(g, grid)
    at = _source(g, cfg, (K,) + grid.shape)
    lam = grid.symbol(MultiplierSymbol.abs_power(cfg.alpha))
    rhs = 0.0
    for n in range(cfg.n_steps):
        lag = cfg.T - cfg.times[n]
        vals = grid.apply(_as_array(at(n)), np.exp(-lag * lam))
        rhs += cfg.dt * float((grid.lp_norm(vals, 2) ** 2).sum())
    samples = []
    for start in range(0, n_paths, chunk):
        count = min(chunk, n_paths - start)
        ens = sample_ensemble([LevyTriplet.wiener()] * K, cfg.T, cfg.dt, seed, start + count)[start:]
        sol = stochastic_convolution_wiener(g, ens, cfg, keep_states=False)
        samples.append(grid.lp_norm(sol.final, 2) ** 2)
    x = np.concatenate(samples)
    lhs = float(x.mean())
    se = float(x.std(ddof=1) / np.sqrt(n_paths))
    rep = make_report("ito_isometry", lhs, rhs, dict(g=g, cfg=cfg, n_paths=n_paths, seed=seed),
                      mc_paths=n_paths, mc_std_error=se, details={"z": (lhs - rhs) / se if se else 0.0})
    rep.passed = abs(lhs - rhs) <= 3 * se
    return rep


def time_change_error(u0, f, a_fn, cfg: SolverConfig, clock=None) -> float:
    """L2 distance at T between the direct solve and the time-changed clock solve."""
    direct = solve_deterministic(u0, f, a_fn, cfg, keep_states=False)
    changed = time_changed_solve(u0, f, a_fn, cfg, clock=clock)
    return float(cfg.grid.lp_norm(direct.final[0] - changed.final[0], 2))


def fitted_order(steps, errors) -> float:
    """Least-squares slope of log(error) against log(step)."""
    return float(np.polyfit(np.log(steps), np.log(errors), 1)[0])


def check_time_change(u0, f, a_fn, cfg: SolverConfig, levels=3, clock=None, target=1.0, tol=0.2) -> InequalityReport:
    """Fitted convergence order of the time-change cross-check under dt halving.

    Reported as lhs = finest error, rhs = coarsest error; the refinement
    series holds the errors themselves.
    """
    dts, errs = [], []
    c = cfg
    for _ in range(levels):
        dts.append(c.dt)
        errs.append(time_change_error(u0, f, a_fn, c, clock))
        c = c.with_(dt=c.dt / 2)
    order = fitted_order(dts, errs)
    rep = make_report("time_change", errs[-1], errs[0], dict(u0=u0, f=f, a=a_fn, cfg=cfg, levels=levels),
                      details={"dts": dts, "errors": errs, "order": order})
    rep.refinement_series = errs
    rep.passed = abs(order - target) <= tol
    return rep


# -- default suite -------------------------------------------------------------


def run_suite(seed=0, mc_paths=400, refinement_levels=2) -> list:
    """A small, fast battery of checks with default data; every report carries a pass flag."""
    grid = Grid(1, 32)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    reports = []
    levels = max(1, int(refinement_levels))

    g_lp = FieldStack(grid, grid.random_values(rng, size=2))
    lp = [check_littlewood_paley(g_lp, 1.0, 4, 1.0, grid, 0.1 / 2**i, nodes=6) for i in range(levels)]
    reports.append(with_refinement(lp, 0.10))

    spec = LevyMeasureSpec.symmetric(1.0, 2.0)
    reports.append(check_kunita([0.7], spec, 4, 1.0, n_paths=max(mc_paths, 2000), seed=seed))

    cfg = SolverConfig(alpha=1.0, gamma=0.0, p=2, T=0.5, dt=0.05, grid=grid, seed=seed)
    f = Field(grid, grid.random_values(rng))
    h = FieldStack(grid, grid.random_values(rng, size=2))
    u0 = Field(grid, grid.random_values(rng))
    lin = [check_linear_estimate(cfg.with_(dt=cfg.dt / 2**i), u0=u0, f=f, h=h, n_paths=mc_paths)
           for i in range(levels)]
    reports.append(with_refinement(lin, 0.25))
    reports.append(check_deterministic_estimate(cfg, u0=u0, f=f))
    sup = [check_sup_estimate(cfg.with_(dt=cfg.dt / 2**i), u0=u0, f=f, h=h, n_paths=mc_paths)
           for i in range(levels)]
    reports.append(with_refinement(sup, 0.15))

    two = Field(grid, grid.mode_values(1) + 0.5 * grid.mode_values(3, "cos"))
    reports.append(check_interpolation(two, 0.0, 1.0, 0.5, 2))
    f32 = Field(grid, grid.random_values(rng))
    reports.append(check_lemma32(f32, 1.0, 4, 0.35, 0.5, grid, dt=0.05, nodes=6))
    reports.append(check_multiplier_bounds(3, 1.0, 2, grid, trials=10, seed=seed))
    reports.append(check_multiplier_bounds(1, 1.0, 4, grid, trials=10, seed=seed, refinements=1))
    bump = Field(grid, np.exp(-4 * (grid.coords[0] - np.pi) ** 2))
    reports.append(check_pointwise_multiplier(bump, u0, 3))

    ito_cfg = SolverConfig(alpha=1.5, T=0.2, dt=0.02, grid=grid, seed=seed)
    reports.append(check_ito_isometry(h, ito_cfg, n_paths=mc_paths))

    a_fn = lambda t: 1 + 0.5 * np.sin(t)
    clock = lambda t: t + 0.5 * (1 - np.cos(t))
    tc_cfg = SolverConfig(alpha=1.0, T=1.0, dt=0.05, grid=grid)
    reports.append(check_time_change(u0, f, a_fn, tc_cfg, levels=3, clock=clock))
    return reports

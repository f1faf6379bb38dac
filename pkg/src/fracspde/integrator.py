"""Exponential-Euler time stepping of the mild form.

One engine, :func:`_march`, advances the Fourier coefficients of a batch of
paths through

    u_{n+1} = E_n (u_n + sum_k h^k dW^k_n + gaussian jump-driver part)
              + phi_n (f_n + sum_{k,j} g^{k,j} (drift - compensator)^{k,j})
              + sum_{jumps tau in (t_n, t_{n+1}]} exp(-a_n (t_{n+1} - tau) |xi|^alpha) g(t_n) . z

with E_n = exp(-a_n dt |xi|^alpha) and phi_n = (1 - E_n) / (a_n |xi|^alpha)
(limit dt at xi = 0).  Integrands are frozen at the left endpoint t_n.  All
public solvers call the same engine and skip absent terms, so a solver with
vanishing extra inputs reproduces its special case bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import ConfigError, PicardDivergenceError
from .levy import DriverPath, step_count
from .spectral import Field, FieldStack, Grid, MultiplierSymbol


@dataclass(frozen=True)
class SolverConfig:
    alpha: float
    gamma: float = 0.0
    p: float = 2.0
    T: float = 1.0
    dt: float = 0.01
    grid: Grid = field(default_factory=Grid)
    K: int = 1
    eps1: Optional[float] = None
    picard_tol: float = 1e-10
    picard_max_iters: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ConfigError(f"alpha must lie in (0, 2), got {self.alpha}", "0 < alpha < 2")
        if self.p < 2:
            raise ConfigError(f"p must be >= 2, got {self.p}", "p in [2, inf)")
        step_count(self.T, self.dt)
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"driver count must be a positive integer, got {self.K}")
        threshold = self.alpha * (0.5 - 1.0 / self.p)
        if self.eps1 is None:
            object.__setattr__(self, "eps1", 0.0 if self.p == 2 else threshold + 0.05)
        elif self.p == 2 and self.eps1 != 0:
            raise ConfigError(
                f"eps1 must be 0 when p = 2, got {self.eps1}",
                "eps1 = 0 when p = 2 (jump-noise solvability condition)",
            )
        elif self.p > 2 and not self.eps1 > threshold:
            raise ConfigError(
                f"eps1 = {self.eps1} <= alpha(1/2 - 1/p) = {threshold:.6g}",
                "eps1 > alpha(1/2 - 1/p) when p > 2 (jump-noise solvability condition)",
            )
        if self.picard_tol <= 0 or self.picard_max_iters < 1:
            raise ConfigError("Picard tolerance and iteration cap must be positive")

    @property
    def n_steps(self) -> int:
        return step_count(self.T, self.dt)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def eps1_threshold(self) -> float:
        return self.alpha * (0.5 - 1.0 / self.p)

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass(eq=False)
class SolutionPath:
    """Output of a solve for ``n_paths`` Monte-Carlo replicas.

    ``states`` has shape (n_paths, len(state_times), *grid.shape); unless the
    solve was asked to drop them, ``state_times`` equals ``times``.
    ``norm_gamma`` and ``norm_top`` hold H^gamma_p and H^{gamma+alpha}_p norms
    at every time; ``drift_norm[:, n]`` is the H^gamma_p norm of
    a Delta^{alpha/2} u + f at t_n.
    """

    grid: Grid
    times: np.ndarray
    state_times: np.ndarray
    states: np.ndarray
    norm_gamma: np.ndarray
    norm_top: np.ndarray
    drift_norm: np.ndarray
    gamma: float
    alpha: float
    p: float
    picard_history: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def final(self) -> np.ndarray:
        return self.states[:, -1]

    def state(self, i, path=0) -> Field:
        return Field(self.grid, self.states[path, i])

    def final_field(self, path=0) -> Field:
        return Field(self.grid, self.final[path])

    def space_time_norm(self, which="top", p=None) -> float:
        """(E sum_n dt ||u(t_n)||^p)^{1/p} over t_1..t_N (rectangle rule)."""
        p = self.p if p is None else p
        vals = {"top": self.norm_top, "gamma": self.norm_gamma}[which][:, 1:]
        return discrete_norm(vals, self.dt, p)

    def drift_space_time_norm(self, p=None) -> float:
        p = self.p if p is None else p
        return discrete_norm(self.drift_norm, self.dt, p)

    def write_csv(self, fh, path=0, space="node") -> None:
        writer = csv.writer(fh)
        if space == "node":
            writer.writerow(["time", "node", "value"])
            for t, u in zip(self.state_times, self.states[path]):
                for j, v in enumerate(u.reshape(-1)):
                    writer.writerow([repr(float(t)), j, repr(float(v))])
        elif space == "frequency":
            writer.writerow(["time", "frequency", "value_re", "value_im"])
            for t, u in zip(self.state_times, self.states[path]):
                for j, c in enumerate(self.grid.fft(u).reshape(-1)):
                    writer.writerow([repr(float(t)), j, repr(float(c.real)), repr(float(c.imag))])
        else:
            raise ConfigError(f"unknown CSV space {space!r}")

    def diagnostics(self) -> dict:
        return {
            "times": self.times.tolist(),
            "n_paths": self.n_paths,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "p": self.p,
            "mean_norm_gamma": self.norm_gamma.mean(axis=0).tolist(),
            "mean_norm_top": self.norm_top.mean(axis=0).tolist(),
            "space_time_norm_top": self.space_time_norm("top"),
            "picard_history": list(self.picard_history),
            "meta": self.meta,
        }

    def write_json(self, fh) -> None:
        json.dump(self.diagnostics(), fh, indent=2, default=float)


def discrete_norm(step_values, dt, p) -> float:
    """(mean over paths of sum_n dt v_n^p)^{1/p} for an array (paths, steps)."""
    v = np.asarray(step_values, dtype=float)
    return float((dt * (v**p).sum(axis=-1)).mean() ** (1.0 / p))


# -- diffusivity ---------------------------------------------------------------


def resolve_diffusivity(a, cfg: SolverConfig, delta=None) -> np.ndarray:
    """Per-step values a(t_n), shape (1 or n_paths, n_steps)."""
    n = cfg.n_steps
    if a is None:
        arr = np.ones((1, n))
    elif callable(a):
        arr = np.array([float(a(t)) for t in cfg.times[:-1]])[None, :]
    else:
        arr = np.asarray(a, dtype=float)
        if arr.ndim == 0:
            arr = np.full((1, n), float(arr))
        elif arr.ndim in (1, 2):
            arr = arr[None, :] if arr.ndim == 1 else arr
            if arr.shape[1] not in (n, n + 1):
                raise ConfigError(f"diffusivity has {arr.shape[1]} time samples, need {n}")
            arr = arr[:, :n]
        else:
            raise ConfigError("diffusivity array must be per-step or per-path-per-step")
    if not np.isfinite(arr).all() or (arr <= 0).any():
        raise ConfigError("diffusivity must be positive and finite")
    if delta is not None and not ((arr > delta).all() and (arr < 1.0 / delta).all()):
        raise ConfigError(
            f"diffusivity leaves ({delta}, {1 / delta})",
            "delta < a(t) < 1/delta for all t",
        )
    return arr


def sample_diffusivity(delta, T, dt, seed, n_paths=1, theta=1.0, vol=None) -> np.ndarray:
    """Clipped Ornstein-Uhlenbeck diffusivity around the midpoint of (delta, 1/delta).

    Returns (n_paths, n_steps + 1) values kept 5% of the band width away from
    either bound.
    """
    if not 0 < delta < 1:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    n = step_count(T, dt)
    lo, hi = delta, 1.0 / delta
    width = hi - lo
    vol = 0.25 * width if vol is None else vol
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(2**20,))))
    decay = np.exp(-theta * dt)
    scale = vol * np.sqrt((1 - decay**2) / (2 * theta))
    x = np.zeros((n_paths, n + 1))
    noise = rng.standard_normal((n_paths, n))
    for i in range(n):
        x[:, i + 1] = decay * x[:, i] + scale * noise[:, i]
    return np.clip(0.5 * (lo + hi) + x, lo + 0.05 * width, hi - 0.05 * width)


# -- data normalisation --------------------------------------------------------


def _as_array(obj):
    if isinstance(obj, Field):
        return obj.values
    if isinstance(obj, FieldStack):
        return obj.components
    if isinstance(obj, (list, tuple)) and obj and isinstance(obj[0], FieldStack):
        # one stack per mark component j -> (K, m, ...)
        return np.stack([s.components for s in obj], axis=1)
    return np.asarray(obj, dtype=float)


def _source(obj, cfg: SolverConfig, trailing: tuple):
    """Turn time-indexed data into n -> array of shape trailing or (P, *trailing)."""
    if obj is None:
        return None
    n = cfg.n_steps
    times = cfg.times
    if callable(obj) and not isinstance(obj, (Field, FieldStack)):
        def at(i):
            return _check_shape(_as_array(obj(times[i])), trailing)
        return at
    arr = _as_array(obj)
    nt = len(trailing)
    if arr.shape == trailing:
        return lambda i: arr
    if arr.ndim == nt + 1 and arr.shape[1:] == trailing and arr.shape[0] in (n, n + 1):
        return lambda i: arr[i]
    if arr.ndim == nt + 2 and arr.shape[2:] == trailing and arr.shape[1] in (n, n + 1):
        return lambda i: arr[:, i]
    raise ConfigError(f"data of shape {arr.shape} does not fit {trailing} per step")


def _check_shape(arr, trailing):
    if arr.shape[-len(trailing):] != trailing:
        raise ConfigError(f"data of shape {arr.shape} does not end with {trailing}")
    return arr


# -- drivers -------------------------------------------------------------------


@dataclass
class _Noise:
    n_paths: int
    dW: Optional[np.ndarray] = None          # (P, n, Kw)
    gauss: Optional[np.ndarray] = None       # (P, n, Kj, m) Gaussian part of jump drivers
    drift_comp: Optional[np.ndarray] = None  # (Kj, m) drift minus compensator rate
    ptr: Optional[np.ndarray] = None         # (n + 1,) event offsets per step
    rep: Optional[np.ndarray] = None
    drv: Optional[np.ndarray] = None
    lag: Optional[np.ndarray] = None         # t_{n+1} - tau
    marks: Optional[np.ndarray] = None
    n_jump_drivers: int = 0
    mark_dim: int = 0


def _nested(paths):
    if paths is None:
        return None
    paths = list(paths)
    if paths and isinstance(paths[0], DriverPath):
        return [paths]
    return [list(r) for r in paths]


def _check_path(p: DriverPath, cfg: SolverConfig):
    if abs(p.horizon - cfg.T) > 1e-12 * cfg.T or abs(p.dt - cfg.dt) > 1e-12 * cfg.dt:
        raise ConfigError("driver path horizon/step differ from the solver configuration")


def prepare_noise(cfg: SolverConfig, wiener_paths=None, jump_paths=None) -> Optional[_Noise]:
    wiener_paths = _nested(wiener_paths)
    jump_paths = _nested(jump_paths)
    if wiener_paths is None and jump_paths is None:
        return None
    counts = {len(x) for x in (wiener_paths, jump_paths) if x is not None}
    if len(counts) != 1:
        raise ConfigError("Wiener and jump ensembles need the same number of replicas")
    noise = _Noise(n_paths=counts.pop())
    n = cfg.n_steps
    if wiener_paths is not None:
        for rep in wiener_paths:
            for p in rep:
                _check_path(p, cfg)
                if p.jump_times.size or p.triplet.has_jumps:
                    raise ConfigError("Wiener convolution got a driver with jumps; use the jump variant")
                if p.triplet.dim != 1:
                    raise ConfigError("Wiener drivers must be one-dimensional")
        noise.dW = np.array([[p.wiener_increments[:, 0] for p in rep] for rep in wiener_paths])
        noise.dW = noise.dW.transpose(0, 2, 1)
    if jump_paths is not None:
        first = jump_paths[0]
        m = first[0].triplet.dim
        kj = len(first)
        noise.n_jump_drivers, noise.mark_dim = kj, m
        for rep in jump_paths:
            if len(rep) != kj:
                raise ConfigError("every replica needs the same number of jump drivers")
            for p in rep:
                _check_path(p, cfg)
                if not p.triplet.recentred:
                    raise ConfigError(
                        "jump driver triplet is not recentred; call recentre() first",
                        "all jumps compensated",
                    )
                if p.triplet.dim != m:
                    raise ConfigError("jump drivers must share one mark dimension")
        noise.drift_comp = np.array(
            [p.triplet.drift - p.triplet.compensator_rate() for p in first]
        )
        for rep in jump_paths[1:]:
            dc = np.array([p.triplet.drift - p.triplet.compensator_rate() for p in rep])
            if not np.array_equal(dc, noise.drift_comp):
                raise ConfigError("replicas of one driver must share a triplet")
        if any(p.triplet.has_gaussian for rep in jump_paths for p in rep):
            noise.gauss = np.array([[p.wiener_increments for p in rep] for rep in jump_paths])
            noise.gauss = noise.gauss.transpose(0, 2, 1, 3)
        reps, drvs, steps, lags, marks = [], [], [], [], []
        for r, rep in enumerate(jump_paths):
            for k, p in enumerate(rep):
                if p.jump_times.size == 0:
                    continue
                s = p.jump_steps()
                reps.append(np.full(s.size, r))
                drvs.append(np.full(s.size, k))
                steps.append(s)
                lags.append((s + 1) * cfg.dt - p.jump_times)
                marks.append(p.jump_marks)
        if steps:
            steps = np.concatenate(steps)
            order = np.argsort(steps, kind="stable")
            noise.rep = np.concatenate(reps)[order]
            noise.drv = np.concatenate(drvs)[order]
            noise.lag = np.clip(np.concatenate(lags)[order], 0.0, cfg.dt)
            noise.marks = np.concatenate(marks)[order]
            noise.ptr = np.searchsorted(steps[order], np.arange(n + 1), side="left")
        else:
            noise.ptr = np.zeros(n + 1, dtype=int)
            noise.rep = noise.drv = np.zeros(0, dtype=int)
            noise.lag = np.zeros(0)
            noise.marks = np.zeros((0, m))
    return noise


# -- engine --------------------------------------------------------------------


def _expand(arr, ndim_trailing):
    """Give static data a leading path axis of length one."""
    arr = np.asarray(arr)
    return arr[None] if arr.ndim == ndim_trailing else arr


def _march(cfg, u0, a_steps, f_at, h_at, g_at, noise, steps, keep_states=True, track_drift=True):
    grid = cfg.grid
    d = grid.dim
    dt = cfg.dt
    lam = grid.symbol(MultiplierSymbol.abs_power(cfg.alpha))
    zero = lam == 0
    lam_safe = np.where(zero, 1.0, lam)
    b_low = grid.symbol(MultiplierSymbol.bessel(cfg.gamma))
    b_top = grid.symbol(MultiplierSymbol.bessel(cfg.gamma + cfg.alpha))
    p = cfg.p

    u_start = _expand(u0, d)
    u_hat = grid.fft(u_start)
    n_paths = max(u_hat.shape[0], a_steps.shape[0], noise.n_paths if noise else 1)
    u_hat = np.broadcast_to(u_hat, (n_paths,) + grid.shape).copy()
    bshape = (-1,) + (1,) * d

    def norms(uh):
        return grid.lp_norm(grid.ifft(b_low * uh), p), grid.lp_norm(grid.ifft(b_top * uh), p)

    steps = list(steps)
    count = len(steps)
    n_low = np.empty((n_paths, count + 1))
    n_top = np.empty((n_paths, count + 1))
    n_drift = np.zeros((n_paths, count))
    n_low[:, 0], n_top[:, 0] = norms(u_hat)
    if keep_states:
        states = np.empty((n_paths, count + 1) + grid.shape)
        states[:, 0] = u_start
    else:
        states = np.empty((n_paths, 2) + grid.shape)
        states[:, 0] = u_start

    jump_g = g_at is not None and noise is not None and noise.ptr is not None
    for i, n in enumerate(steps):
        a_n = a_steps[:, n].reshape(bshape)
        decay = np.exp(-a_n * dt * lam)
        phi = np.where(zero, dt, -np.expm1(-a_n * dt * lam) / (a_n * lam_safe))
        f_n = None if f_at is None else _expand(f_at(n), d)
        g_n = None if g_at is None else _expand(g_at(n), d + 2)

        if track_drift:
            drift_hat = -a_n * lam * u_hat
            if f_n is not None:
                drift_hat = drift_hat + grid.fft(f_n)
            n_drift[:, i] = grid.lp_norm(grid.ifft(b_low * drift_hat), p)

        kick = None
        if h_at is not None and noise is not None and noise.dW is not None:
            h_n = _expand(h_at(n), d + 1)
            dw = noise.dW[:, n].reshape((n_paths, -1) + (1,) * d)
            kick = (h_n * dw).sum(axis=1)
        if g_n is not None and noise is not None and noise.gauss is not None:
            db = noise.gauss[:, n].reshape((n_paths,) + noise.gauss.shape[2:] + (1,) * d)
            extra = (g_n * db).sum(axis=(1, 2))
            kick = extra if kick is None else kick + extra

        force = f_n
        if g_n is not None and noise is not None and noise.drift_comp is not None and np.any(noise.drift_comp):
            dc = noise.drift_comp.reshape((1,) + noise.drift_comp.shape + (1,) * d)
            extra = (g_n * dc).sum(axis=(1, 2))
            force = extra if force is None else force + extra

        w = u_hat
        if kick is not None:
            w = w + grid.fft(kick)
        w = decay * w
        if force is not None:
            w = w + phi * grid.fft(force)
        if jump_g:
            lo, hi = noise.ptr[n], noise.ptr[n + 1]
            if hi > lo:
                rep = noise.rep[lo:hi]
                src = rep if g_n.shape[0] > 1 else np.zeros_like(rep)
                gsel = g_n[src, noise.drv[lo:hi]]  # (E, m, *shape)
                z = noise.marks[lo:hi].reshape((hi - lo, -1) + (1,) * d)
                jump_vals = (gsel * z).sum(axis=1)
                a_e = a_steps[rep if a_steps.shape[0] > 1 else np.zeros_like(rep), n].reshape(bshape)
                lag = noise.lag[lo:hi].reshape(bshape)
                w = w.copy() if w is u_hat else w
                np.add.at(w, rep, grid.fft(jump_vals) * np.exp(-a_e * lag * lam))
        u_hat = w
        n_low[:, i + 1], n_top[:, i + 1] = norms(u_hat)
        if keep_states:
            states[:, i + 1] = grid.ifft(u_hat)
    if not keep_states:
        states[:, 1] = grid.ifft(u_hat)
    return states, n_low, n_top, n_drift, u_hat


def _solution(cfg, states, n_low, n_top, n_drift, keep_states, meta=None, steps=None):
    times = cfg.times if steps is None else cfg.times[steps[0]: steps[-1] + 2]
    state_times = times if keep_states else times[[0, -1]]
    return SolutionPath(
        cfg.grid, times, state_times, states, n_low, n_top, n_drift,
        cfg.gamma, cfg.alpha, cfg.p, meta=dict(meta or {}),
    )


def _initial(u0, cfg):
    if u0 is None:
        return np.zeros(cfg.grid.shape)
    arr = _as_array(u0)
    if arr.shape[-cfg.grid.dim:] != cfg.grid.shape:
        raise ConfigError(f"initial state of shape {arr.shape} does not fit the grid")
    return arr


# -- public solvers ------------------------------------------------------------


def solve_linear(
    u0=None, f=None, h=None, g=None, a=None, wiener_paths=None, jump_paths=None,
    cfg: SolverConfig = None, delta=None, keep_states=True,
) -> SolutionPath:
    """du = (a Delta^{alpha/2} u + f) dt + sum_k h^k dW^k + sum_{k,j} g^{k,j} dZ^{k,j}.

    ``h`` is a FieldStack (or array) with one component per Wiener driver;
    ``g`` has shape (K, m, *grid) or is a list of m FieldStacks, matched to
    the jump drivers.  Any of them may be static, a callable of t, or
    sampled per step (and per path).  Driver ensembles are nested
    ``[replica][driver]``; a flat list is read as a single replica.
    """
    if cfg is None:
        raise ConfigError("a SolverConfig is required")
    grid = cfg.grid
    noise = prepare_noise(cfg, wiener_paths, jump_paths)
    a_steps = resolve_diffusivity(a, cfg, delta)
    kw = noise.dW.shape[2] if noise is not None and noise.dW is not None else None
    kj = noise.n_jump_drivers if noise is not None else 0
    f_at = _source(f, cfg, grid.shape)
    h_at = _source(h, cfg, ((kw,) if kw else (_lead(h),)) + grid.shape) if h is not None else None
    if g is not None:
        g = _with_mark_axis(g, grid.dim)
        m = noise.mark_dim if kj else _as_array(g).shape[-grid.dim - 1]
        g_at = _source(g, cfg, (kj or _lead(g), m) + grid.shape)
    else:
        g_at = None
    if h_at is not None and kw is None:
        h_at = None  # no Wiener drivers: the h term vanishes
    n_paths = noise.n_paths if noise else 1
    if a_steps.shape[0] not in (1, n_paths) and noise is not None:
        raise ConfigError("per-path diffusivity needs one row per replica")
    out = _march(cfg, _initial(u0, cfg), a_steps, f_at, h_at, g_at, noise, range(cfg.n_steps), keep_states)
    return _solution(cfg, *out[:4], keep_states)


def _with_mark_axis(g, d):
    """A single FieldStack (K, *grid) stands for scalar marks: make it (K, 1, *grid)."""
    if callable(g) and not isinstance(g, (Field, FieldStack)):
        return lambda t: _with_mark_axis(g(t), d)
    arr = _as_array(g)
    return arr[:, None] if arr.ndim == d + 1 else arr


def _lead(obj):
    arr = _as_array(obj) if not callable(obj) else None
    if arr is None:
        raise ConfigError("cannot infer the driver count of callable data without drivers")
    return arr.shape[0]


def solve_deterministic(u0, f=None, a=None, cfg: SolverConfig = None, delta=None, keep_states=True):
    """u_t = a(t) Delta^{alpha/2} u + f, exponential Euler with exact spectral phi-function."""
    return solve_linear(u0=u0, f=f, a=a, cfg=cfg, delta=delta, keep_states=keep_states)


def stochastic_convolution_wiener(g, paths, cfg: SolverConfig, keep_states=True) -> SolutionPath:
    """sum_k int_0^t T_{t-s} g^k(s) dW^k_s via u_{n+1} = T_dt (u_n + sum_k g^k(t_n) dW^k_n)."""
    return solve_linear(h=g, wiener_paths=paths, cfg=cfg, keep_states=keep_states)


def stochastic_convolution_jump(g, paths, cfg: SolverConfig, keep_states=True) -> SolutionPath:
    """sum_k int_0^t T_{t-s} g^k(s) . dZ^k_s for recentred (fully compensated) jump drivers."""
    return solve_linear(g=g, jump_paths=paths, cfg=cfg, keep_states=keep_states)


# -- nonlinear structure -------------------------------------------------------


@dataclass(eq=False)
class CoefficientSet:
    """Coefficients of the affine-in-u nonlinearities.

    f(u) = b Delta^{beta1/2} u + sum_i c^i u_{x^i} 1_{alpha>1} + dcoef u + f0
    h^k(u) = eta^k Delta^{beta2/2} u + ell^k u + h0^k
    g^{k,j}(u) = sigma^{k,j} Delta^{beta3_j/2} u + nu^{k,j} u + g0^{k,j}

    Multiplying coefficients may be scalars, arrays shaped like the grid
    (b, c^i, dcoef), (K, *grid) (eta, ell) or (K, m, *grid) (sigma, nu), or
    callables of t returning those.  ``None`` means zero.
    """

    a: object = 1.0
    delta: float = 0.5
    b: object = None
    c: Optional[Sequence] = None
    dcoef: object = None
    eta: object = None
    ell: object = None
    sigma: object = None
    nu: object = None
    beta1: float = 0.0
    beta2: float = 0.0
    beta3: object = 0.0
    f0: object = None
    h0: object = None
    g0: object = None
    K_bound: float = np.inf

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        for name in ("b", "dcoef", "eta", "ell", "sigma", "nu"):
            self._check_bound(name, getattr(self, name))
        for ci in self.c or ():
            self._check_bound("c", ci)

    def _check_bound(self, name, value):
        if value is None or callable(value):
            return
        sup = np.abs(_as_array(value)).max()
        if sup > self.K_bound:
            raise ConfigError(f"sup |{name}| = {sup:.4g} exceeds K = {self.K_bound}", "coefficient sup-norms <= K")

    @property
    def mark_dim(self) -> int:
        for arr in (self.sigma, self.nu):
            if arr is not None and not callable(arr) and _as_array(arr).ndim >= 2:
                return _as_array(arr).shape[1]
        return int(np.atleast_1d(self.beta3).size)

    def validate(self, cfg: SolverConfig) -> None:
        alpha = cfg.alpha
        b3 = np.atleast_1d(np.asarray(self.beta3, dtype=float))
        if min(self.beta1, self.beta2, b3.min()) < 0:
            raise ConfigError("fractional orders must be nonnegative")
        if self.b is not None and not self.beta1 < alpha:
            raise ConfigError(f"beta1 = {self.beta1} >= alpha", "beta1 < alpha")
        if self.eta is not None and not self.beta2 < alpha / 2:
            raise ConfigError(f"beta2 = {self.beta2} >= alpha/2", "beta2 < alpha/2")
        if self.sigma is not None and not (b3 < alpha / 2 - cfg.eps1).all():
            raise ConfigError(f"beta3 = {b3} >= alpha/2 - eps1", "beta3_j < alpha/2 - eps1")
        if self.c is not None and len(self.c) != cfg.grid.dim:
            raise ConfigError("need one gradient coefficient per space dimension")

    @property
    def is_affine_free(self) -> bool:
        """True when f, h, g do not depend on u."""
        return all(v is None for v in (self.b, self.dcoef, self.eta, self.ell, self.sigma, self.nu)) and not self.c


def _coef(value, t):
    if value is None:
        return None
    v = value(t) if callable(value) else value
    return _as_array(v)


def _nonlinearity_arrays(u, t, coeffs: CoefficientSet, cfg: SolverConfig):
    """Arrays (f, h, g) for u of shape (..., *grid); None where a part is absent."""
    grid = cfg.grid
    d = grid.dim
    u_hat = grid.fft(u)

    def frac(beta):
        return grid.ifft(u_hat * grid.symbol(MultiplierSymbol.frac_power(beta)))

    f = None

    def add(acc, term):
        return term if acc is None else acc + term

    b = _coef(coeffs.b, t)
    if b is not None:
        f = add(f, b * frac(coeffs.beta1))
    if coeffs.c and cfg.alpha > 1:
        nyq = np.zeros(grid.shape, dtype=bool)
        for xi in grid.xi:
            nyq |= np.isclose(np.abs(xi), np.pi * grid.n / grid.length)
        for ci, xi in zip(coeffs.c, grid.xi):
            cv = _coef(ci, t)
            if cv is not None:
                f = add(f, cv * grid.ifft(np.where(nyq, 0.0, 1j * xi * u_hat)))
    dc = _coef(coeffs.dcoef, t)
    if dc is not None:
        f = add(f, dc * u)
    f0 = _coef(coeffs.f0, t)
    if f0 is not None:
        f = add(f, f0)

    h = None
    eta, ell, h0 = _coef(coeffs.eta, t), _coef(coeffs.ell, t), _coef(coeffs.h0, t)
    ue = np.expand_dims(u, -d - 1)  # (..., 1, *grid)
    if eta is not None:
        h = add(h, eta * np.expand_dims(frac(coeffs.beta2), -d - 1))
    if ell is not None:
        h = add(h, ell * ue)
    if h0 is not None:
        h = add(h, h0)

    g = None
    sigma, nu, g0 = _coef(coeffs.sigma, t), _coef(coeffs.nu, t), _coef(coeffs.g0, t)
    if sigma is not None:
        b3 = np.atleast_1d(np.asarray(coeffs.beta3, dtype=float))
        m = sigma.shape[-d - 1] if sigma.ndim > d else b3.size
        b3 = np.broadcast_to(b3, (m,))
        parts = np.stack([frac(bj) for bj in b3], axis=-d - 1)  # (..., m, *grid)
        g = add(g, sigma * np.expand_dims(parts, -d - 2))
    if nu is not None:
        g = add(g, nu * np.expand_dims(ue, -d - 2))
    if g0 is not None:
        g = add(g, g0)
    return f, h, g


def evaluate_nonlinearity(u, t, coeffs: CoefficientSet, cfg: SolverConfig):
    """Evaluate (f(u), h(u), g(u)).

    A Field argument returns (Field, FieldStack, list of per-j FieldStacks),
    with None for absent parts; an array argument returns arrays.
    """
    coeffs.validate(cfg)
    if isinstance(u, Field):
        f, h, g = _nonlinearity_arrays(u.values, t, coeffs, cfg)
        grid = cfg.grid
        f = Field(grid, f) if f is not None else None
        h = FieldStack(grid, h) if h is not None else None
        if g is not None:
            g = [FieldStack(grid, g[:, j]) for j in range(g.shape[1])]
        return f, h, g
    return _nonlinearity_arrays(np.asarray(u, dtype=float), t, coeffs, cfg)


def contraction_ratio(history) -> float:
    """Geometric decay rate fitted to successive Picard difference norms."""
    h = np.asarray([x for x in history if x > 0], dtype=float)
    if h.size < 2:
        return 0.0
    slope = np.polyfit(np.arange(h.size), np.log(h), 1)[0]
    return float(np.exp(slope))


def picard_solve(
    u0, coeffs: CoefficientSet, cfg: SolverConfig, wiener_paths=None, jump_paths=None,
    max_subintervals=16,
) -> SolutionPath:
    """Fixed point of u -> solve_linear(f(u), h(u), g(u)) on fixed driver paths.

    The first iterate is the linear solution with the nonlinearity frozen at
    u = 0.  Each sweep re-solves with data evaluated along the previous
    iterate and stops once the discrete H^{gamma+alpha}_p space-time norm of
    the update falls below ``cfg.picard_tol``.  If a window misses the
    tolerance, the horizon is split into twice as many subintervals that are
    solved one after another.
    """
    coeffs.validate(cfg)
    noise = prepare_noise(cfg, wiener_paths, jump_paths)
    a_steps = resolve_diffusivity(coeffs.a, cfg, coeffs.delta)
    parts = 1
    while True:
        try:
            return _picard_chain(u0, coeffs, cfg, noise, a_steps, parts)
        except PicardDivergenceError:
            if parts * 2 > max_subintervals or cfg.n_steps < parts * 2:
                raise
            parts *= 2


def _picard_chain(u0, coeffs, cfg, noise, a_steps, parts):
    n = cfg.n_steps
    bounds = np.linspace(0, n, parts + 1).round().astype(int)
    start = _initial(u0, cfg)
    pieces, histories = [], []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        sol, hist = _picard_window(start, coeffs, cfg, noise, a_steps, range(lo, hi))
        pieces.append(sol)
        histories.append(hist)
        start = sol[0][:, -1]
    states = np.concatenate([pieces[0][0]] + [p[0][:, 1:] for p in pieces[1:]], axis=1)
    n_low = np.concatenate([pieces[0][1]] + [p[1][:, 1:] for p in pieces[1:]], axis=1)
    n_top = np.concatenate([pieces[0][2]] + [p[2][:, 1:] for p in pieces[1:]], axis=1)
    n_drift = np.concatenate([p[3] for p in pieces], axis=1)
    out = _solution(cfg, states, n_low, n_top, n_drift, True, meta={"subintervals": parts})
    out.picard_history = histories[0] if parts == 1 else [x for h in histories for x in h]
    out.meta["histories"] = histories
    out.meta["iterations"] = [len(h) for h in histories]
    return out


def _picard_window(u_start, coeffs, cfg, noise, a_steps, steps):
    d = cfg.grid.dim
    times = cfg.times
    lo = steps[0]
    b_top = cfg.grid.symbol(MultiplierSymbol.bessel(cfg.gamma + cfg.alpha))

    def data_from(prev_states):
        cache = {}

        def at(n):
            if n not in cache:
                u = prev_states[:, n - lo] if prev_states is not None else np.zeros_like(_expand(u_start, d))
                cache.clear()
                cache[n] = _nonlinearity_arrays(u, times[n], coeffs, cfg)
            return cache[n]

        f_at = lambda n: at(n)[0]
        h_at = lambda n: at(n)[1]
        g_at = lambda n: at(n)[2]
        probe = at(lo)
        return (
            f_at if probe[0] is not None else None,
            h_at if probe[1] is not None else None,
            g_at if probe[2] is not None else None,
        )

    def run(prev_states):
        f_at, h_at, g_at = data_from(prev_states)
        if noise is None or noise.dW is None:
            h_at = None
        return _march(cfg, u_start, a_steps, f_at, h_at, g_at, noise, steps, keep_states=True)

    current = run(None)
    history = []
    for _ in range(cfg.picard_max_iters):
        nxt = run(current[0])
        diff = nxt[0][:, 1:] - current[0][:, 1:]
        step_norms = cfg.grid.lp_norm(cfg.grid.apply(diff, b_top), cfg.p)
        history.append(discrete_norm(step_norms, cfg.dt, cfg.p))
        current = nxt
        if history[-1] < cfg.picard_tol:
            return current, history
        if len(history) >= 4 and contraction_ratio(history[-4:]) >= 1 and history[-1] > history[0]:
            break
    ratios = [b / a if a > 0 else 0.0 for a, b in zip(history[:-1], history[1:])]
    raise PicardDivergenceError(
        f"Picard iteration did not reach {cfg.picard_tol} in {len(history)} sweeps",
        history, ratios,
    )


# -- time change ---------------------------------------------------------------


def time_changed_solve(u0, f, a_fn: Callable, cfg: SolverConfig, clock=None, keep_states=False):
    """Solve u_t = a(t) Delta^{alpha/2} u + f(t) through the clock s = int_0^t a.

    v(s) = u(theta^{-1}(s)) solves v_s = Delta^{alpha/2} v + f(theta^{-1}(s)) / a(theta^{-1}(s))
    with unit diffusivity, so v(theta(T)) = u(T).  The same number of steps
    is used on [0, theta(T)].  ``clock`` may supply theta in closed form.
    """

    theta = clock or (lambda t: integrate.quad(a_fn, 0.0, t, epsabs=1e-14, epsrel=1e-13)[0])
    S = theta(cfg.T)

    def inverse(s):
        if s <= 0:
            return 0.0
        return optimize.brentq(lambda t: theta(t) - s, 0.0, cfg.T * (1 + 1e-9) + 1e-12, xtol=1e-15, rtol=1e-15)

    scfg = cfg.with_(T=S, dt=S / cfg.n_steps)
    f_arr = _as_array(f) if not callable(f) else None

    def f_tilde(s):
        t = inverse(s)
        base = f_arr if f_arr is not None else _as_array(f(t))
        return base / a_fn(t)

    return solve_deterministic(u0, f_tilde, None, scfg, keep_states=keep_states)

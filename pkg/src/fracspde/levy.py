"""Driving noises: Wiener increments and finite-activity Levy paths.

Every jump measure is held as a finite list of atoms (mark z, rate lambda),
so the jump part of a driver is an exact compound Poisson process and all
compensators and moment constants are finite sums.  Infinite-activity
measures are discretised on construction (see ``LevyMeasureSpec.radial_tail``).

Random streams: a path is generated from ``SeedSequence(seed,
spawn_key=(driver, replica))`` feeding a Philox counter-based bit generator,
so adding drivers or replicas never perturbs existing ones.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import special

from .errors import ConfigError


@dataclass(frozen=True, eq=False)
class LevyMeasureSpec:
    """Finite Levy measure: ``rates[i]`` is the intensity of jumps of size ``marks[i]``."""

    marks: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        marks = np.array(self.marks, dtype=float)
        if marks.ndim == 1:
            marks = marks[:, None]
        rates = np.array(self.rates, dtype=float).reshape(-1)
        if marks.ndim != 2 or marks.shape[0] != rates.shape[0]:
            raise ConfigError("need one rate per mark")
        if marks.shape[1] < 1:
            raise ConfigError("marks need at least one component")
        if (rates <= 0).any() or not np.isfinite(rates).all():
            raise ConfigError("atom rates must be positive and finite")
        if not np.isfinite(marks).all() or (np.linalg.norm(marks, axis=1) == 0).any():
            raise ConfigError("marks must be finite and nonzero")
        marks.flags.writeable = False
        rates.flags.writeable = False
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "rates", rates)

    @classmethod
    def empty(cls, dim=1):
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def symmetric(cls, size=1.0, rate=1.0, dim=1):
        """Atoms at +-size*e_j for every axis j, each with the given rate."""
        eye = np.eye(dim) * size
        return cls(np.vstack([eye, -eye]), np.full(2 * dim, float(rate)))

    @classmethod
    def radial_tail(cls, c, alpha_l, eps=1e-2, radius=10.0, cells=40, dim=1):
        """Discretise the density c |z|^{-dim-alpha_l} on eps <= |z| <= radius.

        The radial range is cut into log-spaced cells.  Each cell becomes
        atoms on the +-axis directions that carry the cell's exact mass and
        exact second moment, so ``moment_constant(spec, 2)`` is exact for the
        truncated density.  Jumps below ``eps`` are dropped; the density is
        symmetric, so no compensating drift is needed for them
        (see ``small_jump_variance`` for a Gaussian substitute).
        """
        if not 0 < eps < radius:
            raise ConfigError("need 0 < eps < radius for the radial tail")
        if not 0 < alpha_l < 2:
            raise ConfigError(f"tail index must lie in (0, 2), got {alpha_l}")
        edges = np.geomspace(eps, radius, cells + 1)
        area = _sphere_area(dim)
        lo, hi = edges[:-1], edges[1:]
        mass = c * area * (lo**-alpha_l - hi**-alpha_l) / alpha_l
        second = c * area * (hi ** (2 - alpha_l) - lo ** (2 - alpha_l)) / (2 - alpha_l)
        radii = np.sqrt(second / mass)
        eye = np.eye(dim)
        dirs = np.vstack([eye, -eye])
        marks = (radii[:, None, None] * dirs[None]).reshape(-1, dim)
        rates = np.repeat(mass / (2 * dim), 2 * dim)
        return cls(marks, rates)

    @property
    def dim(self) -> int:
        return self.marks.shape[1]

    @property
    def total_rate(self) -> float:
        return float(self.rates.sum())

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.marks, axis=1)

    def first_moment(self, where=None) -> np.ndarray:
        """sum_i z_i lambda_i over the selected atoms."""
        w = self.rates if where is None else self.rates * where
        return (self.marks * w[:, None]).sum(axis=0)

    def restrict(self, max_norm) -> "LevyMeasureSpec":
        keep = self.norms <= max_norm
        return LevyMeasureSpec(self.marks[keep], self.rates[keep])


def _sphere_area(dim):
    return 2 * np.pi ** (dim / 2) / special.gamma(dim / 2)


def small_jump_variance(c, alpha_l, eps, dim=1):
    """Per-coordinate variance of the jumps below ``eps`` of c|z|^{-dim-alpha_l}.

    Feeding ``sqrt`` of this into a triplet's Gaussian part is the usual
    Gaussian substitute for the discarded small jumps.
    """
    total = c * _sphere_area(dim) * eps ** (2 - alpha_l) / (2 - alpha_l)
    return total / dim


@dataclass(frozen=True)
class MomentConstants:
    c2: float
    cp: float
    chat: float


def moment_constant(spec: LevyMeasureSpec, q) -> float:
    """(int |z|^q nu(dz))^{1/q}, a finite sum over atoms."""
    if q < 1:
        raise ConfigError(f"moment order must be >= 1, got {q}")
    if spec.rates.size == 0:
        return 0.0
    return float((spec.norms**q * spec.rates).sum() ** (1.0 / q))


def moment_constants(spec: LevyMeasureSpec, p) -> MomentConstants:
    c2 = moment_constant(spec, 2)
    cp = moment_constant(spec, p)
    return MomentConstants(c2, cp, max(c2, cp))


@dataclass(frozen=True, eq=False)
class LevyTriplet:
    """Drift, Gaussian factor and jump measure of one m-dimensional driver.

    ``recentred`` means the big-jump mean has been absorbed into ``drift``,
    so the driver reads Z_t = drift t + gaussian B_t + int z Ntilde(t, dz)
    with every jump compensated.
    """

    drift: np.ndarray
    gaussian: np.ndarray
    jumps: LevyMeasureSpec
    recentred: bool = False

    def __post_init__(self):
        m = self.jumps.dim
        drift = np.array(self.drift, dtype=float).reshape(-1)
        gauss = np.array(self.gaussian, dtype=float)
        if gauss.ndim == 0:
            gauss = gauss * np.eye(m)
        if drift.shape != (m,) or gauss.shape != (m, m):
            raise ConfigError(f"drift and Gaussian parts must match mark dimension {m}")
        if not np.allclose(gauss, gauss.T):
            raise ConfigError("Gaussian matrix must be symmetric")
        if np.linalg.eigvalsh(gauss).min() < -1e-12 * max(1.0, np.abs(gauss).max()):
            raise ConfigError("Gaussian matrix must be positive semidefinite")
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "gaussian", gauss)

    @classmethod
    def wiener(cls, dim=1):
        return cls(np.zeros(dim), np.eye(dim), LevyMeasureSpec.empty(dim), recentred=True)

    @classmethod
    def pure_jump(cls, spec: LevyMeasureSpec, drift=None):
        """Compensated pure-jump driver Y_t = int z Ntilde(t, dz)."""
        drift = np.zeros(spec.dim) if drift is None else drift
        return cls(drift, np.zeros((spec.dim, spec.dim)), spec, recentred=True)

    @property
    def dim(self) -> int:
        return self.jumps.dim

    @property
    def has_jumps(self) -> bool:
        return self.jumps.rates.size > 0

    @property
    def has_gaussian(self) -> bool:
        return bool(np.any(self.gaussian != 0))

    def recentre(self) -> "LevyTriplet":
        if self.recentred:
            return self
        big = self.jumps.first_moment(self.jumps.norms >= 1)
        return replace(self, drift=self.drift + big, recentred=True)

    def compensator_rate(self) -> np.ndarray:
        """Mean drift of the compensated jump part, subtracted continuously."""
        return self.jumps.first_moment()


@dataclass(frozen=True, eq=False)
class DriverPath:
    """One sampled driver on [0, horizon] with fixed step ``dt``.

    ``wiener_increments[n]`` is the Gaussian increment on (t_n, t_{n+1}];
    ``jump_times`` is strictly increasing with matching rows of ``jump_marks``.
    """

    triplet: LevyTriplet
    horizon: float
    dt: float
    wiener_increments: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray
    seed: int
    stream: tuple = field(default=(0, 0))

    @property
    def n_steps(self) -> int:
        return self.wiener_increments.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def jump_events(self) -> list:
        return [(float(t), z.copy()) for t, z in zip(self.jump_times, self.jump_marks)]

    def jump_steps(self) -> np.ndarray:
        """Index n of the step (t_n, t_{n+1}] holding each jump."""
        n = np.ceil(self.jump_times / self.dt - 1e-12).astype(int) - 1
        return np.clip(n, 0, self.n_steps - 1)


def step_count(T, dt) -> int:
    if not T > 0 or not dt > 0:
        raise ConfigError(f"horizon and step must be positive, got T={T}, dt={dt}")
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * T:
        raise ConfigError(f"step {dt} does not divide horizon {T}")
    return n


def _rng(seed, driver, replica):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(driver), int(replica)))
    return np.random.Generator(np.random.Philox(ss))


def sample_path(triplet: LevyTriplet, T, dt, seed, driver=0, replica=0) -> DriverPath:
    """Sample Gaussian increments and compound-Poisson jumps on [0, T]."""
    n_steps = step_count(T, dt)
    rng = _rng(seed, driver, replica)
    m = triplet.dim
    if triplet.has_gaussian:
        z = rng.standard_normal((n_steps, m))
        dw = np.sqrt(dt) * z @ triplet.gaussian.T
    else:
        dw = np.zeros((n_steps, m))
    lam = triplet.jumps.total_rate
    if lam > 0:
        count = rng.poisson(lam * T)
        times = np.sort(T * (1.0 - rng.random(count)))  # uniform on (0, T]
        idx = rng.choice(triplet.jumps.rates.size, size=count, p=triplet.jumps.rates / lam)
        marks = triplet.jumps.marks[idx]
    else:
        times = np.zeros(0)
        marks = np.zeros((0, m))
    return DriverPath(triplet, float(T), float(dt), dw, times, marks, int(seed), (driver, replica))


def sample_ensemble(triplets, T, dt, seed, n_paths, n_drivers=None, first_driver=0) -> list:
    """``paths[r][k]``: replica r of driver k.  A single triplet is shared by all drivers.

    Driver k draws from stream ``first_driver + k``, so disjoint families of
    drivers under one seed stay independent.
    """
    if isinstance(triplets, LevyTriplet):
        if n_drivers is None:
            raise ConfigError("n_drivers is required when one triplet is shared")
        triplets = [triplets] * n_drivers
    return [
        [sample_path(tr, T, dt, seed, driver=first_driver + k, replica=r) for k, tr in enumerate(triplets)]
        for r in range(n_paths)
    ]


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Left-continuous piecewise-constant map t -> R^m.

    ``values[i]`` holds on (breaks[i], breaks[i+1]]; at t = breaks[0] the
    first value is used.
    """

    breaks: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if b.ndim != 1 or b.size != v.shape[0] + 1 or np.any(np.diff(b) <= 0):
            raise ConfigError("need strictly increasing breaks, one more than values")
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value, T):
        return cls(np.array([0.0, T]), np.atleast_1d(np.asarray(value, dtype=float))[None, :])

    def covers(self, t0, t1) -> bool:
        return self.breaks[0] <= t0 + 1e-12 and t1 <= self.breaks[-1] * (1 + 1e-12)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breaks, t, side="left") - 1
        return self.values[np.clip(idx, 0, self.values.shape[0] - 1)]

    def integral(self, t) -> np.ndarray:
        """int_0^t H(s) ds, componentwise."""
        lo = self.breaks[:-1]
        hi = np.minimum(self.breaks[1:], t)
        width = np.clip(hi - lo, 0.0, None)
        return (width[:, None] * self.values).sum(axis=0)


def compensated_integral(H, path: DriverPath, t=None) -> float:
    """M_t = sum_{jumps <= t} H(tau-) . z - int_0^t H(s) . (sum_i z_i lambda_i) ds."""
    t = path.horizon if t is None else float(t)
    if not isinstance(H, StepFunction):
        H = StepFunction.constant(H, path.horizon)
    if not H.covers(0.0, t):
        raise ConfigError("integrand is not defined on the whole interval [0, t]")
    sel = path.jump_times <= t
    jumps = float(np.einsum("ij,ij->", H(path.jump_times[sel]), path.jump_marks[sel]))
    comp = float(H.integral(t) @ path.triplet.compensator_rate())
    return jumps - comp


def truncate_big_jumps(path: DriverPath, n):
    """Remove jumps with |z| > n; also return the first removal time (or None).

    The returned driver equals the original minus its big jumps, pathwise, so
    the compensator of the removed atoms moves into the drift.
    """
    if not n > 0:
        raise ConfigError(f"truncation level must be positive, got {n}")
    big = np.linalg.norm(path.jump_marks, axis=1) > n
    if not big.any() and not (path.triplet.jumps.norms > n).any():
        return path, None
    first = float(path.jump_times[big].min()) if big.any() else None
    tr = path.triplet.recentre()
    removed = tr.jumps.first_moment(tr.jumps.norms > n)
    new_tr = replace(tr, drift=tr.drift - removed, jumps=tr.jumps.restrict(n))
    new_path = replace(
        path,
        triplet=new_tr,
        jump_times=path.jump_times[~big],
        jump_marks=path.jump_marks[~big],
    )
    return new_path, first


def write_paths_csv(paths: Sequence[DriverPath], fh) -> None:
    """Dump drivers as rows (driver_index, event_type, time, mark_1..mark_m)."""
    m = max(p.triplet.dim for p in paths)
    writer = csv.writer(fh)
    writer.writerow(["driver_index", "event_type", "time"] + [f"mark_{j + 1}" for j in range(m)])
    for k, p in enumerate(paths):
        pad = [""] * (m - p.triplet.dim)
        if p.triplet.has_gaussian:
            for n, inc in enumerate(p.wiener_increments):
                writer.writerow([k, "wiener", repr((n + 1) * p.dt)] + [repr(float(v)) for v in inc] + pad)
        for t, z in zip(p.jump_times, p.jump_marks):
            writer.writerow([k, "jump", repr(float(t))] + [repr(float(v)) for v in z] + pad)

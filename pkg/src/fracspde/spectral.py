"""Fourier-multiplier calculus on the periodic torus [0, L)^d.

Every operator here is diagonal in Fourier space, so a field is transformed
once, multiplied by a symbol evaluated on the grid frequencies, and
transformed back.  Transforms are numpy's unnormalised FFT pair, so the
round trip is the identity and no (2 pi)^{-d/2} factors appear.

Array-level routines live on :class:`Grid` and act on the last ``dim`` axes,
which lets callers push whole Monte-Carlo ensembles through one FFT.  The
module-level functions wrap them for :class:`Field` and :class:`FieldStack`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, SymbolDomainError


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n`` nodes per axis on a torus of side ``length``."""

    dim: int = 1
    n: int = 64
    length: float = 2 * np.pi

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigError(f"grid dimension must be a positive integer, got {self.dim}")
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise ConfigError(f"modes per axis must be an even integer >= 4, got {self.n}")
        if not self.length > 0:
            raise ConfigError(f"torus length must be positive, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def axes(self) -> tuple:
        return tuple(range(-self.dim, 0))

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers along one axis, in FFT order."""
        return 2 * np.pi / self.length * np.fft.fftfreq(self.n, d=1.0 / self.n)

    @cached_property
    def xi(self) -> tuple:
        return tuple(np.meshgrid(*([self.wavenumbers] * self.dim), indexing="ij"))

    @cached_property
    def abs_xi(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.xi))

    @cached_property
    def coords(self) -> tuple:
        x = np.arange(self.n) * self.h
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    @cached_property
    def band_mask(self) -> np.ndarray:
        """Frequencies with integer index |k| <= n/4 along every axis."""
        k = np.abs(np.fft.fftfreq(self.n, d=1.0 / self.n))
        masks = np.meshgrid(*([k <= self.n // 4] * self.dim), indexing="ij")
        return np.logical_and.reduce(masks)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.dim, self.n * factor, self.length)

    # -- array level ---------------------------------------------------------

    def fft(self, values):
        return np.fft.fftn(values, axes=self.axes)

    def ifft(self, coeffs):
        return np.fft.ifftn(coeffs, axes=self.axes).real

    def symbol(self, m: "MultiplierSymbol") -> np.ndarray:
        vals = m(self.abs_xi)
        if np.isnan(vals).any():
            raise SymbolDomainError(f"{m} is undefined at some grid frequency")
        return vals

    def apply(self, values, symbol_values):
        """Multiply the spectrum of ``values`` by ``symbol_values`` and return real output."""
        return self.ifft(self.fft(values) * symbol_values)

    def lp_norm(self, values, p):
        """Rectangle-rule L_p norm over the last ``dim`` axes."""
        a = np.abs(np.asarray(values, dtype=float))
        if np.isinf(p):
            return a.max(axis=self.axes)
        return (self.cell_volume * (a**p).sum(axis=self.axes)) ** (1.0 / p)

    def integrate(self, values):
        return self.cell_volume * np.asarray(values).sum(axis=self.axes)

    def bessel(self, values, mu):
        if mu == 0:
            return np.array(values, dtype=float)
        return self.apply(values, (1.0 + self.abs_xi**2) ** (mu / 2))

    def sobolev_norm(self, values, gamma, p):
        return self.lp_norm(self.bessel(values, gamma), p)

    def ell2_sobolev_norm(self, values, gamma, p):
        """H^gamma_p(l_2) norm of a stack whose component axis precedes the grid axes."""
        mag = np.sqrt((self.bessel(values, gamma) ** 2).sum(axis=-self.dim - 1))
        return self.lp_norm(mag, p)

    def random_values(self, rng, size=(), band_limited=True):
        """Real Gaussian fields with i.i.d. Fourier coefficients on |k| <= n/4."""
        size = (size,) if np.isscalar(size) else tuple(size)
        white = rng.standard_normal(size + self.shape)
        if not band_limited:
            return white
        return self.ifft(self.fft(white) * self.band_mask)

    def mode_values(self, k, kind="sin"):
        """sin or cos of the integer wave vector ``k`` (scalar allowed for d=1)."""
        k = np.atleast_1d(np.asarray(k, dtype=float))
        if k.size != self.dim:
            raise ConfigError(f"wave vector needs {self.dim} components, got {k.size}")
        phase = sum(2 * np.pi / self.length * kj * xj for kj, xj in zip(k, self.coords))
        if kind == "sin":
            return np.sin(phase)
        if kind == "cos":
            return np.cos(phase)
        raise ConfigError(f"unknown mode kind {kind!r}")


@dataclass(frozen=True, eq=False)
class Field:
    """Real grid function; the stored array is read-only."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ConfigError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.isfinite(vals).all():
            raise ConfigError("field values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def mode(cls, grid, k, kind="sin", amplitude=1.0):
        return cls(grid, amplitude * grid.mode_values(k, kind))

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, fn(*grid.coords))

    @classmethod
    def random(cls, grid, rng, band_limited=True):
        return cls(grid, grid.random_values(rng, band_limited=band_limited))

    def _other(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ConfigError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: Grid
    coeffs: np.ndarray

    def is_hermitian(self, rtol=1e-12) -> bool:
        c = self.coeffs
        flipped = np.roll(np.flip(c, axis=self.grid.axes), 1, axis=self.grid.axes)
        scale = max(np.abs(c).max(), 1.0)
        return bool(np.abs(c - np.conj(flipped)).max() <= rtol * scale)


def forward_transform(u: Field) -> SpectralField:
    return SpectralField(u.grid, u.grid.fft(u.values))


def inverse_transform(s: SpectralField) -> Field:
    return Field(s.grid, s.grid.ifft(s.coeffs))


@dataclass(frozen=True, eq=False)
class FieldStack:
    """K fields on one grid: a truncated l_2-valued function."""

    grid: Grid
    components: np.ndarray

    def __post_init__(self):
        comps = np.array(self.components, dtype=float)
        if comps.ndim != self.grid.dim + 1 or comps.shape[1:] != self.grid.shape:
            raise ConfigError(f"stack shape {comps.shape} does not match grid {self.grid.shape}")
        if comps.shape[0] < 1:
            raise ConfigError("a field stack needs at least one component")
        if not np.isfinite(comps).all():
            raise ConfigError("stack values must be finite")
        comps.flags.writeable = False
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_fields(cls, fields):
        fields = list(fields)
        return cls(fields[0].grid, np.stack([f.values for f in fields]))

    @property
    def count(self) -> int:
        return self.components.shape[0]

    def __getitem__(self, k) -> Field:
        return Field(self.grid, self.components[k])

    def __len__(self):
        return self.count

    def magnitude(self) -> Field:
        return Field(self.grid, np.sqrt((self.components**2).sum(axis=0)))


class SymbolKind(enum.Enum):
    FRAC_POWER = "frac_power"
    ABS_POWER = "abs_power"
    BESSEL = "bessel"
    SEMIGROUP = "semigroup"
    ETA = "eta"


@dataclass(frozen=True)
class MultiplierSymbol:
    """A radial Fourier symbol, evaluated on |xi|.

    Build instances through the class-method constructors; ``params`` holds
    the numbers each kind needs.
    """

    kind: SymbolKind
    params: tuple

    @classmethod
    def frac_power(cls, beta):
        """-|xi|^beta, the symbol of Delta^{beta/2}."""
        return cls(SymbolKind.FRAC_POWER, (float(beta),))

    @classmethod
    def abs_power(cls, beta):
        """|xi|^beta, the symbol of (-Delta)^{beta/2}."""
        return cls(SymbolKind.ABS_POWER, (float(beta),))

    @classmethod
    def bessel(cls, mu):
        return cls(SymbolKind.BESSEL, (float(mu),))

    @classmethod
    def semigroup(cls, at, alpha):
        """exp(-at |xi|^alpha) with ``at`` the product a*t."""
        return cls(SymbolKind.SEMIGROUP, (float(at), float(alpha)))

    @classmethod
    def eta(cls, i, beta):
        if i not in (1, 2, 3, 4):
            raise ConfigError(f"eta multiplier index must be 1..4, got {i}")
        if not beta > 0:
            raise ConfigError(f"eta multipliers need beta > 0, got {beta}")
        return cls(SymbolKind.ETA, (int(i), float(beta)))

    def __call__(self, abs_xi):
        r = np.asarray(abs_xi, dtype=float)
        kind = self.kind
        with np.errstate(divide="ignore", invalid="ignore"):
            if kind is SymbolKind.FRAC_POWER:
                return -_abs_pow(r, self.params[0])
            if kind is SymbolKind.ABS_POWER:
                return _abs_pow(r, self.params[0])
            if kind is SymbolKind.BESSEL:
                return (1.0 + r**2) ** (self.params[0] / 2)
            if kind is SymbolKind.SEMIGROUP:
                at, alpha = self.params
                return np.exp(-at * _abs_pow(r, alpha))
            i, beta = self.params
            rb = r**beta
            jb = (1.0 + r**2) ** (beta / 2)
            if i == 1:
                return jb / (1.0 + rb)
            if i == 2:
                return (1.0 + rb) / jb
            if i == 3:
                return rb / (1.0 + rb)
            return rb / jb


def _abs_pow(r, beta):
    # |0|^beta = 0 for beta > 0; negative orders are rejected upstream
    return np.where(r == 0, 1.0 if beta == 0 else 0.0, r ** beta)


def _grid_of(u):
    return u.grid


def apply_symbol(u, m: MultiplierSymbol):
    """Apply the multiplier ``m`` to a Field or, componentwise, to a FieldStack."""
    grid = _grid_of(u)
    sym = grid.symbol(m)
    if isinstance(u, FieldStack):
        return FieldStack(grid, grid.apply(u.components, sym))
    return Field(grid, grid.apply(u.values, sym))


def frac_power(u, beta):
    """Delta^{beta/2} u, symbol -|xi|^beta.  beta = 2 is the spectral Laplacian."""
    if beta < 0:
        raise ConfigError("negative orders go through bessel_potential", "beta >= 0")
    return apply_symbol(u, MultiplierSymbol.frac_power(beta))


def abs_power(u, beta):
    """(-Delta)^{beta/2} u, symbol |xi|^beta."""
    if beta < 0:
        raise ConfigError("negative orders go through bessel_potential", "beta >= 0")
    return apply_symbol(u, MultiplierSymbol.abs_power(beta))


def bessel_potential(u, mu):
    """(1 - Delta)^{mu/2} u."""
    return apply_symbol(u, MultiplierSymbol.bessel(mu))


def semigroup_apply(u, t, a=1.0, alpha=2.0):
    """T_{at} u for the alpha-stable semigroup, symbol exp(-a t |xi|^alpha)."""
    if t < 0:
        raise ConfigError(f"semigroup time must be nonnegative, got {t}")
    if not a > 0:
        raise ConfigError(f"diffusivity must be positive, got {a}")
    if not 0 < alpha <= 2:
        raise ConfigError(f"stability index must lie in (0, 2], got {alpha}")
    return apply_symbol(u, MultiplierSymbol.semigroup(a * t, alpha))


def gradient(u: Field) -> FieldStack:
    """Spectral partial derivatives; the Nyquist mode is dropped to keep outputs real."""
    grid = u.grid
    coeffs = grid.fft(u.values)
    nyq = np.zeros(grid.shape, dtype=bool)
    for c in grid.xi:
        nyq |= np.isclose(np.abs(c), np.pi * grid.n / grid.length)
    comps = [grid.ifft(np.where(nyq, 0.0, 1j * c * coeffs)) for c in grid.xi]
    return FieldStack(grid, np.stack(comps))


def lp_norm(u, p):
    return float(u.grid.lp_norm(u.values, p))


def sobolev_norm(u: Field, gamma, p) -> float:
    """||(1 - Delta)^{gamma/2} u||_p with rectangle-rule quadrature."""
    if p < 1:
        raise ConfigError(f"L_p exponent must be >= 1, got {p}")
    return float(u.grid.sobolev_norm(u.values, gamma, p))


def ell2_sobolev_norm(g: FieldStack, gamma, p) -> float:
    """|| |(1 - Delta)^{gamma/2} g|_{l_2} ||_p for a truncated l_2-valued field."""
    if p < 2:
        raise ConfigError(f"l_2-valued norms need p >= 2, got {p}")
    return float(g.grid.ell2_sobolev_norm(g.components, gamma, p))

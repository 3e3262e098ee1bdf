"""Dirichlet sine-mode representation of vector fields on a box (0, L)^d.

A field with ``k`` components is stored as modal coefficients ``c[i, m1, .., md]``
with respect to the orthonormal basis

    phi_m(x) = (2/L)^(d/2) * prod_i sin(pi * m_i * x_i / L),   m_i = 1..N,

so the L2 inner product of two fields is the Euclidean inner product of their
coefficient arrays.  Collocation points are ``x_j = j L / (N + 1)``, j = 1..N.

Pointwise nonlinear terms are evaluated on the padded grid with ``2N + 1``
points per axis and projected back; with that padding products of up to four
band-limited factors are integrated exactly by the collocation rule.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property, lru_cache

import numpy as np

from .errors import ConfigurationError, DimensionError

__all__ = [
    "Grid",
    "SpectralField",
    "NormReport",
    "make_grid",
    "to_physical",
    "from_physical",
    "to_fine",
    "from_fine",
    "apply_fractional_laplacian",
    "norms",
    "hs_norm",
    "lp_norm",
    "quadrature",
    "gradient_fine",
    "closed_values",
    "trapezoid",
    "hessian_fine",
]


@dataclass(frozen=True)
class Grid:
    d: int
    L: float
    N: int
    k: int = 1

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d not in (1, 2, 3):
            raise ConfigurationError("grid.d", f"must be 1, 2 or 3, got {self.d!r}")
        if not isinstance(self.N, (int, np.integer)) or self.N < 2:
            raise ConfigurationError("grid.N", f"must be an integer >= 2, got {self.N!r}")
        if not (isinstance(self.L, (int, float, np.floating)) and math.isfinite(self.L) and self.L > 0):
            raise ConfigurationError("grid.L", f"must be a positive real, got {self.L!r}")
        if not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise ConfigurationError("grid.k", f"must be an integer >= 1, got {self.k!r}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "k", int(self.k))

    @property
    def shape(self):
        return (self.N,) * self.d

    @property
    def field_shape(self):
        return (self.k,) + self.shape

    @property
    def fine_N(self):
        return 2 * self.N + 1

    @property
    def size(self):
        return self.k * self.N**self.d

    @property
    def points(self):
        """1D collocation points (the same on every axis)."""
        return self.L * np.arange(1, self.N + 1) / (self.N + 1)

    @property
    def fine_points(self):
        M = self.fine_N
        return self.L * np.arange(1, M + 1) / (M + 1)

    @cached_property
    def eigenvalues(self):
        """Dirichlet eigenvalues of -Laplacian, shape ``(N,)*d``."""
        lam1d = (np.pi * np.arange(1, self.N + 1) / self.L) ** 2
        lam = np.zeros(self.shape)
        for axis in range(self.d):
            shape = [1] * self.d
            shape[axis] = self.N
            lam = lam + lam1d.reshape(shape)
        lam.flags.writeable = False
        return lam

    @property
    def lambda1(self):
        return self.d * (np.pi / self.L) ** 2

    def multiplier(self, power):
        """``lambda_m ** power`` broadcastable against a coefficient array."""
        return (self.eigenvalues**power)[None, ...]

    def to_dict(self):
        return {"d": self.d, "L": self.L, "N": self.N, "k": self.k}

    @classmethod
    def from_dict(cls, data):
        return cls(d=data["d"], L=data["L"], N=data["N"], k=data.get("k", 1))

    def with_N(self, N):
        return Grid(self.d, self.L, N, self.k)


def make_grid(d, L, N, k=1):
    return Grid(d=d, L=L, N=N, k=k)


def _nodes(n_points, L, closed):
    j = np.arange(0, n_points + 2) if closed else np.arange(1, n_points + 1)
    return L * j / (n_points + 1)


@lru_cache(maxsize=128)
def _sine_matrix(n_modes, n_points, L, closed=False):
    # values[j, m] = phi_m(x_j) for the 1D orthonormal sine basis
    x = _nodes(n_points, L, closed)
    m = np.arange(1, n_modes + 1)
    mat = math.sqrt(2.0 / L) * np.sin(np.pi * np.outer(x, m) / L)
    mat.flags.writeable = False
    return mat


@lru_cache(maxsize=128)
def _cosine_matrix(n_modes, n_points, L, closed=False):
    # d/dx of the sine basis evaluated at the collocation points
    x = _nodes(n_points, L, closed)
    m = np.arange(1, n_modes + 1)
    mat = math.sqrt(2.0 / L) * (np.pi * m / L) * np.cos(np.pi * np.outer(x, m) / L)
    mat.flags.writeable = False
    return mat


def _apply_axes(arr, mats, d):
    """Apply ``mats[i]`` along spatial axis ``i + 1`` of ``arr`` (axis 0 is the component)."""
    out = arr
    for axis in range(d):
        out = np.moveaxis(np.tensordot(mats[axis], out, axes=(1, axis + 1)), 0, axis + 1)
    return out


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: Grid
    coeffs: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float, copy=True)
        if c.shape != self.grid.field_shape:
            if c.size == self.grid.size:
                raise DimensionError(
                    f"coefficient array has shape {c.shape}, expected {self.grid.field_shape}"
                )
            raise DimensionError(
                f"coefficient array has {c.size} entries, grid needs {self.grid.size}"
            )
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.field_shape))

    @classmethod
    def mode(cls, grid, index, component=0, amplitude=1.0):
        """A single basis function ``amplitude * phi_index`` in one component."""
        if isinstance(index, (int, np.integer)):
            index = (index,) * grid.d
        if len(index) != grid.d or not all(1 <= i <= grid.N for i in index):
            raise DimensionError(f"mode index {index} outside 1..{grid.N} in {grid.d}D")
        c = np.zeros(grid.field_shape)
        c[(component,) + tuple(i - 1 for i in index)] = amplitude
        return cls(grid, c)

    def __add__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField(self.grid, self.coeffs / float(scalar))

    def inner(self, other):
        _check_same_grid(self, other)
        return float(np.vdot(self.coeffs, other.coeffs))

    def resample(self, grid):
        """Zero-pad or truncate the modes onto another grid with the same d, L, k."""
        if (grid.d, grid.L, grid.k) != (self.grid.d, self.grid.L, self.grid.k):
            raise DimensionError("resample needs matching d, L and k")
        c = np.zeros(grid.field_shape)
        n = min(grid.N, self.grid.N)
        sl = (slice(None),) + (slice(0, n),) * grid.d
        c[sl] = self.coeffs[sl]
        return SpectralField(grid, c)

    def to_dict(self):
        return {"grid": self.grid.to_dict(), "coeffs": self.coeffs.ravel().tolist()}

    @classmethod
    def from_dict(cls, data):
        grid = Grid.from_dict(data["grid"])
        flat = np.asarray(data["coeffs"], dtype=float)
        if flat.size != grid.size:
            raise DimensionError(f"expected {grid.size} coefficients, got {flat.size}")
        return cls(grid, flat.reshape(grid.field_shape))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise DimensionError(f"grid mismatch: {a.grid} vs {b.grid}")


def to_physical(field):
    """Values on the ``N^d`` collocation grid, shape ``(k, N, .., N)``."""
    g = field.grid
    S = _sine_matrix(g.N, g.N, g.L)
    return _apply_axes(field.coeffs, [S] * g.d, g.d)


def from_physical(values, grid):
    values = np.asarray(values, dtype=float)
    if values.shape != grid.field_shape:
        raise DimensionError(f"values have shape {values.shape}, expected {grid.field_shape}")
    h = grid.L / (grid.N + 1)
    St = h * _sine_matrix(grid.N, grid.N, grid.L).T
    return SpectralField(grid, _apply_axes(values, [St] * grid.d, grid.d))


def to_fine(field):
    """Values on the padded ``(2N+1)^d`` grid."""
    g = field.grid
    S = _sine_matrix(g.N, g.fine_N, g.L)
    return _apply_axes(field.coeffs, [S] * g.d, g.d)


def from_fine(values, grid):
    """Project values on the padded grid onto the first N modes per axis."""
    values = np.asarray(values, dtype=float)
    M = grid.fine_N
    expected = (values.shape[0],) + (M,) * grid.d
    if values.shape != expected or values.shape[0] != grid.k:
        raise DimensionError(f"fine values have shape {values.shape}, expected {(grid.k,) + (M,) * grid.d}")
    h = grid.L / (M + 1)
    St = h * _sine_matrix(grid.N, M, grid.L).T
    return SpectralField(grid, _apply_axes(values, [St] * grid.d, grid.d))


def gradient_fine(field, fine=True, closed=False):
    """Partial derivatives on the padded grid, shape ``(d, k, M, .., M)``.

    With ``fine=False`` the plain ``N^d`` collocation grid is used instead;
    ``closed=True`` appends the boundary nodes on every axis (see ``trapezoid``).
    """
    g = field.grid
    n = g.fine_N if fine else g.N
    S = _sine_matrix(g.N, n, g.L, closed)
    D = _cosine_matrix(g.N, n, g.L, closed)
    out = []
    for axis in range(g.d):
        mats = [D if i == axis else S for i in range(g.d)]
        out.append(_apply_axes(field.coeffs, mats, g.d))
    return np.stack(out)


def hessian_fine(field):
    """Second partial derivatives on the padded grid, shape ``(d, d, k, M, .., M)``."""
    g = field.grid
    S = _sine_matrix(g.N, g.fine_N, g.L)
    D = _cosine_matrix(g.N, g.fine_N, g.L)
    S2 = S * -((np.pi * np.arange(1, g.N + 1) / g.L) ** 2)
    out = np.empty((g.d, g.d, g.k) + (g.fine_N,) * g.d)
    for i in range(g.d):
        for j in range(i, g.d):
            if i == j:
                mats = [S2 if a == i else S for a in range(g.d)]
            else:
                mats = [D if a in (i, j) else S for a in range(g.d)]
            out[i, j] = _apply_axes(field.coeffs, mats, g.d)
            out[j, i] = out[i, j]
    return out


def closed_values(field, fine=True):
    """Values on the padded grid including the boundary nodes, shape ``(k, M+2, .., M+2)``."""
    g = field.grid
    n = g.fine_N if fine else g.N
    return _apply_axes(field.coeffs, [_sine_matrix(g.N, n, g.L, True)] * g.d, g.d)


def trapezoid(values, grid, fine=True):
    """Trapezoid rule on the closed grid of ``closed_values``.

    Exact for trigonometric polynomials of total frequency below ``2(M+1)``,
    including integrands such as ``|grad u|^2`` that do not vanish on the boundary.
    """
    n = grid.fine_N if fine else grid.N
    h = grid.L / (n + 1)
    w = np.full(n + 2, h)
    w[[0, -1]] = 0.5 * h
    out = np.asarray(values, dtype=float)
    for _ in range(grid.d):
        out = np.tensordot(out, w, axes=(-1, 0))
    return float(out)


def quadrature(values, grid, fine=True):
    """Collocation rule for the integral over the box of a scalar grid function."""
    n = grid.fine_N if fine else grid.N
    h = grid.L / (n + 1)
    return float(np.sum(values) * h**grid.d)


def apply_fractional_laplacian(field, alpha):
    """Spectral Dirichlet ``(-Laplacian)^alpha``: c_m -> lambda_m^alpha c_m."""
    if not alpha > 0:
        raise ConfigurationError("alpha", f"must be > 0, got {alpha!r}")
    return SpectralField(field.grid, field.coeffs * field.grid.multiplier(alpha))


def hs_norm(field, s):
    """Spectral H^s norm ``sqrt(sum lambda_m^s |c_m|^2)``; s = 0 gives the L2 norm."""
    if s == 0:
        return float(np.sqrt(np.sum(field.coeffs**2)))
    return float(np.sqrt(np.sum(field.grid.multiplier(s) * field.coeffs**2)))


def lp_norm(field, p, fine=False):
    """``(int |u|^p)^(1/p)`` by the collocation rule, also for 0 < p < 1.

    ``|u|`` is the Euclidean norm over components.  For p < 1 this is not a
    norm; it is still the quantity used in the growth bounds.
    """
    if not p > 0:
        raise ValueError(f"p must be > 0, got {p!r}")
    vals = to_fine(field) if fine else to_physical(field)
    mag = np.sqrt(np.sum(vals**2, axis=0))
    return quadrature(mag**p, field.grid, fine=fine) ** (1.0 / p)


@dataclass
class NormReport:
    l2: float
    h1: float
    h2: float
    hs: dict
    lp: dict
    d_norm: float | None = None


def norms(field, f_spec=None, s=(), p=()):
    """All norms of ``field``; ``d_norm`` needs the nonlinearity ``f_spec``.

    ``h1`` is ``||grad u||`` and ``h2`` is ``||Laplacian u||`` (both spectral).
    """
    hs = {0.0: hs_norm(field, 0)}
    for si in s:
        hs[float(si)] = hs_norm(field, si)
    lp = {}
    for pi in p:
        lp[float(pi)] = lp_norm(field, pi)
    l2 = hs[0.0]
    h1 = hs_norm(field, 1)
    h2 = hs_norm(field, 2)
    d_norm = None
    if f_spec is not None:
        from .nonlinearity import pointwise_fine

        fu = pointwise_fine(f_spec, field)
        fl2_sq = quadrature(np.sum(fu**2, axis=0), field.grid)
        d_norm = math.sqrt(h2**2 + fl2_sq)
    return NormReport(l2=l2, h1=h1, h2=h2, hs=hs, lp=lp, d_norm=d_norm)

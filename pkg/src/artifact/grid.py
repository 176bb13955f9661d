"""Uniform grids on a truncated line and the field containers that live on them.

Fields carry a far-field model, leading terms ``c0 + c1/x``, fitted on the
outer band of the grid; the nonlocal operators use it to account for the part of the
line that the grid does not cover.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import InvalidArgument, NumericError

TAIL_BAND = 0.9  # outer band: |x| >= TAIL_BAND * L
SPHERE_TOL = 1e-12
TANGENT_TOL = 1e-10


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [-L, L].

    A non-periodic grid includes both endpoints, so ``h = 2L/(N-1)``.
    A periodic grid samples one period ``[-L, L)`` with ``h = 2L/N``.
    """

    L: float
    N: int
    periodic: bool = False

    def __post_init__(self):
        if not np.isfinite(self.L) or self.L <= 0:
            raise InvalidArgument(f"half width must be positive, got {self.L}")
        if int(self.N) != self.N or self.N < 4:
            raise InvalidArgument(f"need at least 4 points, got {self.N}")

    @property
    def h(self) -> float:
        if self.periodic:
            return 2.0 * self.L / self.N
        return 2.0 * self.L / (self.N - 1)

    @property
    def period(self) -> float:
        """Length of the period used by FFT-based operators."""
        return self.N * self.h

    @cached_property
    def x(self) -> np.ndarray:
        # offsets from the center are exact half-integers, so node rounding
        # scales with |x| rather than L and the lattice stays uniform near 0
        center = 0.5 * self.N if self.periodic else 0.5 * (self.N - 1)
        pts = self.h * (np.arange(self.N) - center)
        pts.setflags(write=False)
        return pts

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers matching ``numpy.fft.rfft`` output."""
        k = 2.0 * np.pi * np.fft.rfftfreq(self.N, d=self.h)
        k.setflags(write=False)
        return k

    def refined(self) -> "GridSpec":
        """Same domain, spacing halved."""
        if self.periodic:
            return GridSpec(self.L, 2 * self.N, True)
        return GridSpec(self.L, 2 * self.N - 1, False)


def make_grid(L: float, N: int, periodic: bool = False) -> GridSpec:
    return GridSpec(float(L), int(N), bool(periodic))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def far_field_basis(x: np.ndarray) -> np.ndarray:
    """Columns 1, x/(1+x^2), 1/(1+x^2), x/(1+x^2)^2.

    The last three are real and imaginary parts of (x+i)^-1 and (x+i)^-2,
    boundary values of functions holomorphic in the upper half-plane, so
    the half-Laplacian and Poisson semigroup act on them in closed form.
    """
    q = 1.0 + x * x
    return np.column_stack([np.ones_like(x), x / q, 1.0 / q, x / q**2])


def _band(x: np.ndarray, L: float) -> np.ndarray:
    return np.abs(x) >= TAIL_BAND * L - 1e-12 * L


def far_field_fit(x: np.ndarray, values: np.ndarray, L: float) -> np.ndarray:
    """Least-squares coefficients of :func:`far_field_basis` over ``|x| >= 0.9 L``."""
    mask = _band(x, L)
    if np.count_nonzero(mask) < 8:
        raise InvalidArgument("fewer than 8 points in the outer band")
    # column scaling keeps the fit well conditioned for large L
    scale = np.array([1.0, L, L * L, L**3])
    # centering first makes constant data fit exactly despite the near
    # collinearity of 1 and 1/(1+x^2) on the band
    v = values[mask]
    m = float(np.mean(v))
    coef, *_ = np.linalg.lstsq(far_field_basis(x[mask]) * scale, v - m, rcond=None)
    coef = coef * scale
    coef[0] += m
    return coef


def tail_coefficients(x: np.ndarray, values: np.ndarray, L: float) -> tuple[float, float]:
    """Far-field model ``values ~ c0 + c1/x`` fitted over ``|x| >= 0.9 L``.

    The fit also carries 1/x^2 and 1/x^3 terms so that they do not leak
    into c0 and c1; only the leading pair is returned.
    """
    coef = far_field_fit(x, values, L)
    c0, c1 = float(coef[0]), float(coef[1])
    # clean round-off so exact inputs give exact coefficients
    scale = max(1.0, float(np.max(np.abs(values[_band(x, L)]))))
    if abs(c0) < 1e-14 * scale:
        c0 = 0.0
    if abs(c1) < 1e-14 * scale * L:
        c1 = 0.0
    return c0, c1


@dataclass(frozen=True)
class ScalarField:
    grid: GridSpec
    values: np.ndarray
    tail: tuple[float, float] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.N,):
            raise InvalidArgument(f"expected {self.grid.N} samples, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise NumericError("non-finite sample in scalar field")
        object.__setattr__(self, "values", vals)
        tail = self.tail
        if tail is None:
            tail = tail_coefficients(self.grid.x, vals, self.grid.L)
        tail = (float(tail[0]), float(tail[1]))
        if not all(np.isfinite(tail)):
            raise NumericError("non-finite tail coefficients")
        object.__setattr__(self, "tail", tail)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x


def fit_tail(f: ScalarField) -> tuple[float, float]:
    """Refit the far-field model of a sampled field."""
    return tail_coefficients(f.grid.x, f.values, f.grid.L)


def sample(f: Callable, g: GridSpec) -> ScalarField:
    """Evaluate ``f`` at the grid nodes and fit its tail."""
    x = g.x
    try:
        vals = np.asarray(f(x), dtype=float)
        if vals.shape != x.shape:
            vals = np.broadcast_to(vals, x.shape).astype(float)
    except (TypeError, ValueError):
        vals = np.array([float(f(xi)) for xi in x])
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NumericError(f"non-finite value {vals[i]} at x = {x[i]!r}")
    return ScalarField(g, vals)


@dataclass(frozen=True)
class SphereMapField:
    """Map into the unit circle, stored as two component arrays."""

    grid: GridSpec
    u1: np.ndarray
    u2: np.ndarray
    renormalize: bool = False

    def __post_init__(self):
        u1 = np.asarray(self.u1, dtype=float)
        u2 = np.asarray(self.u2, dtype=float)
        if u1.shape != (self.grid.N,) or u2.shape != (self.grid.N,):
            raise InvalidArgument("component length does not match grid")
        if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(u2))):
            raise NumericError("non-finite sample in sphere map")
        norm = np.hypot(u1, u2)
        if self.renormalize:
            if np.any(norm == 0.0):
                raise NumericError("zero vector cannot be normalized")
            u1, u2 = u1 / norm, u2 / norm
        else:
            dev = np.max(np.abs(u1 * u1 + u2 * u2 - 1.0))
            if dev > SPHERE_TOL:
                raise InvalidArgument(f"|u| deviates from 1 by {dev:.3e}")
        object.__setattr__(self, "u1", _frozen(u1))
        object.__setattr__(self, "u2", _frozen(u2))

    @classmethod
    def from_array(cls, grid: GridSpec, u: np.ndarray, renormalize: bool = False):
        return cls(grid, u[0], u[1], renormalize)

    @property
    def u(self) -> np.ndarray:
        return np.stack([self.u1, self.u2])

    @property
    def x(self) -> np.ndarray:
        return self.grid.x


@dataclass(frozen=True)
class TangentField:
    """Vector field tangent to a base sphere map at every node."""

    grid: GridSpec
    v1: np.ndarray
    v2: np.ndarray
    base: SphereMapField

    def __post_init__(self):
        v1, v2 = _frozen(self.v1), _frozen(self.v2)
        if v1.shape != (self.grid.N,) or v2.shape != (self.grid.N,):
            raise InvalidArgument("component length does not match grid")
        dot = v1 * self.base.u1 + v2 * self.base.u2
        scale = np.maximum(1.0, np.hypot(v1, v2))
        dev = float(np.max(np.abs(dot) / scale))
        if dev > TANGENT_TOL:
            raise InvalidArgument(f"field is not tangent: max |v.u| = {dev:.3e}")
        object.__setattr__(self, "v1", v1)
        object.__setattr__(self, "v2", v2)

    @property
    def v(self) -> np.ndarray:
        return np.stack([self.v1, self.v2])


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(path, fld) -> None:
    """Write a scalar field as ``x,value`` or a 2-vector field as ``x,u1,u2``."""
    if isinstance(fld, ScalarField):
        header, cols = ["x", "value"], [fld.values]
    elif isinstance(fld, SphereMapField):
        header, cols = ["x", "u1", "u2"], [fld.u1, fld.u2]
    elif isinstance(fld, TangentField):
        header, cols = ["x", "u1", "u2"], [fld.v1, fld.v2]
    else:
        raise InvalidArgument(f"cannot serialize {type(fld).__name__}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, xi in enumerate(fld.grid.x):
            w.writerow([_fmt(xi)] + [_fmt(c[i]) for c in cols])


def read_csv(path, grid: GridSpec):
    """Inverse of :func:`write_csv` for a known grid."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != grid.N:
        raise InvalidArgument("row count does not match grid")
    if data.shape[1] == 2:
        return ScalarField(grid, data[:, 1])
    return SphereMapField(grid, data[:, 1], data[:, 2], renormalize=True)

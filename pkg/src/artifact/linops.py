"""Linearization of the flow around a bubble U = omega((x - xi)/mu).

Vector fields are (2, N) arrays on the grid of a :class:`LinearizedAt`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import DomainError, InvalidArgument
from .grid import GridSpec, ScalarField, SphereMapField, TangentField, far_field_fit
from .nonlocal_ops import bilinear_form, half_laplacian_vec, half_laplacian_values, tension_values
from .profiles import BubbleParams, kernel_Z, scaled_bubble
from .quadrature import difference_quotient, integrate_line


@dataclass(frozen=True)
class LinearizedAt:
    base: BubbleParams
    grid: GridSpec

    @cached_property
    def U(self) -> np.ndarray:
        u = scaled_bubble(self.base, self.grid.x)
        u.setflags(write=False)
        return u

    @cached_property
    def y(self) -> np.ndarray:
        return (self.grid.x - self.base.xi) / self.base.mu

    @property
    def field(self) -> SphereMapField:
        return SphereMapField(self.grid, self.U[0], self.U[1], renormalize=True)

    def kernel(self, j: int) -> np.ndarray:
        """Z_j at the bubble, as a function of x."""
        return kernel_Z(j, self.y)


@dataclass(frozen=True)
class ScalarReduced:
    v: ScalarField


def _as_array(phi) -> np.ndarray:
    if isinstance(phi, TangentField):
        return phi.v
    return np.asarray(phi, dtype=float)


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=0)


def project_tangent(L: LinearizedAt, phi) -> TangentField:
    """Pointwise orthogonal projection onto the tangent line of U."""
    p = _as_array(phi)
    U = L.U
    out = p - _dot(p, U) * U
    # one correction sweep removes round-off left by the first pass
    out = out - _dot(out, U) * U
    return TangentField(L.grid, out[0], out[1], L.field)


def normal_correction(phit: TangentField) -> ScalarField:
    """a = sqrt(1 - |phi|^2) - 1, so that U + phi + aU is a unit vector."""
    sq = phit.v1**2 + phit.v2**2
    if np.any(sq > 1.0 + 1e-14):
        i = int(np.argmax(sq))
        raise DomainError(f"|tangent field| = {np.sqrt(sq[i]):.6g} > 1 at x = {phit.grid.x[i]!r}")
    sq = np.minimum(sq, 1.0)
    a = -sq / (1.0 + np.sqrt(1.0 - sq))
    return ScalarField(phit.grid, a)


def linearized_vector(L: LinearizedAt, phit, backend: str = "spectral", tension: np.ndarray | None = None) -> np.ndarray:
    """-(-Delta)^(1/2) phi + T(U) phi + Q[U, phi] U for a tangent field phi."""
    phi = _as_array(phit)
    g = L.grid
    if tension is None:
        tension = tension_values(L.U, g, backend)
    lap = half_laplacian_vec(phi, g, backend)
    q = bilinear_form(L.U, phi, g, backend)
    return -lap + tension * phi + q * L.U


# weights of the four coefficient integrals in the closed-form remainder
_WEIGHTS = (
    lambda s: 2.0 * s / (s * s + 1.0) ** 2,
    lambda s: (s * s - 1.0) / (s * s + 1.0) ** 2,
    lambda s: 2.0 * s * s / (s * s + 1.0) ** 2,
    lambda s: s * (s * s - 1.0) / (s * s + 1.0) ** 2,
)


def coefficient_integrals(a_fn: Callable, b_fn: Callable, y: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """The four weighted difference-quotient integrals, shape (4, len(y)).

    ``a_fn`` and ``b_fn`` are the field components already written in the
    bubble variable.  Row k is (1/pi) int (f(s) - f(y))/(s - y) w_k(s) ds
    with f = a for k = 0, 2 and f = b for k = 1, 3.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty((4, y.size))
    for k, (fn, w) in enumerate(zip((a_fn, b_fn, a_fn, b_fn), _WEIGHTS)):
        integrand = lambda s, fn=fn, w=w: difference_quotient(fn, s, y) * w(s)[None, :]  # noqa: E731
        out[k] = np.atleast_1d(integrate_line(integrand, tol)) / np.pi
    return out


def remainder_from_coefficients(coef: np.ndarray, y: np.ndarray, mu: float) -> np.ndarray:
    """Assemble mu^-1 [(C0 + C1) Z2 + (C2 + C3) Z3]."""
    return ((coef[0] + coef[1]) * kernel_Z(2, y) + (coef[2] + coef[3]) * kernel_Z(3, y)) / mu


def decomposition_check(
    L: LinearizedAt,
    phi_fn: Callable,
    backend: str = "pv",
    y_max: float = 10.0,
    n_check: int = 81,
    tol: float = 1e-10,
) -> dict:
    """Compare L_U[Pi phi] with Pi[-(-Delta)^(1/2) phi] + closed-form remainder.

    ``phi_fn`` maps an x-array to a (2, n) array.  The direct side uses
    the grid operators; the other side evaluates the remainder from its
    four coefficient integrals by adaptive quadrature at ``n_check``
    nodes with ``|y| <= y_max``.
    """
    g = L.grid
    mu, xi = L.base.mu, L.base.xi
    phi = np.asarray(phi_fn(g.x), dtype=float)
    U = L.U
    proj = phi - _dot(phi, U) * U
    direct = linearized_vector(L, proj, backend=backend)

    neg_lap = -half_laplacian_vec(phi, g, backend)
    proj_lap = neg_lap - _dot(neg_lap, U) * U

    inside = np.flatnonzero(np.abs(L.y) <= y_max)
    if inside.size == 0:
        raise InvalidArgument("no grid nodes inside the check window")
    pick = inside[np.unique(np.linspace(0, inside.size - 1, n_check).round().astype(int))]
    yk = L.y[pick]
    a_fn = lambda s: np.asarray(phi_fn(mu * s + xi))[0]  # noqa: E731
    b_fn = lambda s: np.asarray(phi_fn(mu * s + xi))[1]  # noqa: E731
    coef = coefficient_integrals(a_fn, b_fn, yk, tol)
    decomposed = proj_lap[:, pick] + remainder_from_coefficients(coef, yk, mu)
    diff = float(np.max(np.abs(direct[:, pick] - decomposed)))
    return {
        "sup_difference": diff,
        "x": g.x[pick],
        "direct": direct[:, pick],
        "decomposed": decomposed,
    }


def nonlinear_remainder(L: LinearizedAt, phit, U_t=None, backend: str = "spectral") -> np.ndarray:
    """Tangential nonlinear remainder of the flow around U.

    Collects the coefficient of phi built from the four bilinear
    integrals, the -a U_t term, and the cross term
    (1/pi) int (a(x)-a(s)) (U(x)-U(s)) / (x-s)^2 ds coming from the
    normal correction.
    """
    g = L.grid
    P = _as_array(phit)
    U = L.U
    sq = np.sum(P * P, axis=0)
    if np.any(sq > 1.0 + 1e-14):
        raise DomainError("tangent perturbation exceeds unit length")
    sq = np.minimum(sq, 1.0)
    a = -sq / (1.0 + np.sqrt(1.0 - sq))
    aU = a * U
    coef = (
        bilinear_form(aU, U + P, g, backend)
        + bilinear_form(U, P, g, backend)
        + 0.5 * bilinear_form(P, P, g, backend)
        + 0.5 * bilinear_form(aU, aU, g, backend)
    )
    cross = np.stack([bilinear_form(a, U[c], g, backend) for c in range(2)])
    out = coef * P + cross
    if U_t is not None:
        out = out - a * np.asarray(U_t, dtype=float)
    return out


def flow_operator(u: np.ndarray, grid: GridSpec, backend: str = "spectral") -> np.ndarray:
    """Spatial part of the flow, -(-Delta)^(1/2) u + T(u) u, for a unit-vector array."""
    lap = half_laplacian_vec(u, grid, backend)
    return -lap + tension_values(u, grid, backend) * u


def line_integral(v: np.ndarray, weight: np.ndarray, grid: GridSpec, tail) -> float:
    """Trapezoid of v*weight on the grid plus the far-field part for weight 1/(1+s^2).

    Outside the box v is continued by c0 + c2/(1+s^2); the odd far-field
    terms integrate to zero against the even weight.
    """
    h = grid.h
    f = v * weight
    inner = h * (np.sum(f) - 0.5 * (f[0] + f[-1]))
    c0, _ = tail
    L = grid.L
    c2 = float(far_field_fit(grid.x, v, L)[2]) if not grid.periodic else 0.0
    ext0 = 0.5 * np.pi - np.arctan(L)
    ext2 = 0.5 * ext0 - 0.5 * L / (1.0 + L * L)
    return float(inner + 2.0 * c0 * ext0 + 2.0 * c2 * ext2)


def scalar_reduced_apply(v, backend: str = "spectral") -> ScalarReduced:
    """-(-Delta)^(1/2) v + w1 v - (w1/pi) int v/(1+s^2) ds, with w1 = 2/(1+y^2)."""
    fld = v.v if isinstance(v, ScalarReduced) else v
    g = fld.grid
    y = g.x
    w1 = 2.0 / (1.0 + y * y)
    mean = line_integral(fld.values, 1.0 / (1.0 + y * y), g, fld.tail)
    lap = half_laplacian_values(fld.values, g, fld.tail, backend)
    out = -lap + w1 * fld.values - w1 * mean / np.pi
    return ScalarReduced(ScalarField(g, out))

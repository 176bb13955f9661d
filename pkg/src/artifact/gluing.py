"""Inner-outer construction around a shrinking bubble.

Noise field Z*, the Duhamel correction Phi0, the error E* and its mode
projections, the blow-up rate kappa0, the (lambda, xi) parameter ODEs and a
coupled inner-outer time stepper.

Conventions
-----------
* The bubble is U(x, t) = omega(y), y = (x - xi)/mu with mu = mu0 + lambda,
  xi = q + xi1 and mu0(t) = exp(-kappa0 t).
* Z*(x, t) is the half-heat evolution of Z*_0 started at t0:
  Z*(., t) = P_{t - t0} Z*_0.
* The inner correction phi lives on B_{2R} in the variable y = (x - xi)/mu0
  and is stored as v(y) J omega(y), J omega = (-omega_2, omega_1), so that
  phi . omega = 0 holds exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConsistencyError, InvalidArgument, NumericError, SignConditionError
from .grid import GridSpec, SphereMapField, TangentField, make_grid
from .linops import (
    LinearizedAt,
    coefficient_integrals,
    line_integral,
    linearized_vector,
    nonlinear_remainder,
    remainder_from_coefficients,
)
from .nonlocal_ops import (
    bilinear_form,
    composite_gauss,
    duhamel_step,
    half_laplacian_values,
    half_laplacian_vec,
    poisson_integral_values,
    poisson_values,
    tension_values,
)
from .profiles import BubbleParams, kernel_Z, omega, scaled_bubble
from .quadrature import adaptive_gauss, integrate_line

RATE_FACTOR = 12.0 / 13.0
LAMBDA_DAMPING = 10.0 / 3.0


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------


def _default_z2(eps: float, q: float) -> Callable:
    return lambda x: -eps * (np.asarray(x, dtype=float) - q) ** 2 / (1.0 + (np.asarray(x, dtype=float) - q) ** 2)


def sign_functional(z2: Callable, q: float, tol: float = 1e-12) -> float:
    """(1/pi) int (z2(s+q) - z2(q))/s * s^3/(s^2+1)^2 ds."""
    z0 = float(np.asarray(z2(np.array([q])))[0])

    def integrand(s):
        return (np.asarray(z2(s + q), dtype=float) - z0) * s * s / (s * s + 1.0) ** 2

    return float(integrate_line(integrand, tol)) / np.pi


@dataclass(frozen=True)
class NoiseSpec:
    """Far-field perturbation Z*_0 = (z1, z2).

    Default family: z1 = 0, z2 = -eps (x-q)^2 / (1 + (x-q)^2).  Custom
    profiles are given as callables; their half-heat evolution is then
    computed on the grid passed to :meth:`evolve`.
    """

    epsilon: float = 0.1
    q: float = 0.0
    z1: Callable | None = None
    z2: Callable | None = None

    def __post_init__(self):
        # a negative amplitude flips the profile; the sign check below rejects it
        if not (np.isfinite(self.epsilon) and self.epsilon != 0):
            raise InvalidArgument("noise amplitude must be nonzero")
        if not np.isfinite(self.q):
            raise InvalidArgument("noise center must be finite")
        val = sign_functional(self.profile2, self.q)
        if not val < -1e-14:
            raise SignConditionError(f"sign functional is {val:.6g}; it must be negative")

    @property
    def is_default(self) -> bool:
        return self.z1 is None and self.z2 is None

    @property
    def profile1(self) -> Callable:
        return self.z1 if self.z1 is not None else (lambda x: np.zeros_like(np.asarray(x, dtype=float)))

    @property
    def profile2(self) -> Callable:
        return self.z2 if self.z2 is not None else _default_z2(self.epsilon, self.q)

    def initial(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([np.asarray(self.profile1(x), dtype=float) * np.ones_like(x), np.asarray(self.profile2(x), dtype=float)])

    def evolve(self, x, tau: float, grid: GridSpec | None = None) -> np.ndarray:
        """Z*(x) after half-heat time tau >= 0."""
        x = np.asarray(x, dtype=float)
        if tau < 0:
            raise InvalidArgument("evolution time must be nonnegative")
        if tau == 0:
            return self.initial(x)
        if self.is_default:
            d = 1.0 + tau
            return np.stack([np.zeros_like(x), -self.epsilon + self.epsilon * d / ((x - self.q) ** 2 + d * d)])
        if grid is None:
            raise InvalidArgument("custom noise profiles need a grid to evolve")
        z = self.initial(grid.x)
        out = np.stack([poisson_values(z[c], grid, tau) for c in range(2)])
        return np.stack([np.interp(x, grid.x, out[c]) for c in range(2)])

    def evolve_rate(self, x, tau: float) -> np.ndarray:
        """d/dtau of :meth:`evolve` for the default family."""
        if not self.is_default:
            raise InvalidArgument("closed-form rate available for the default family only")
        x = np.asarray(x, dtype=float)
        d = 1.0 + tau
        r2 = (x - self.q) ** 2
        return np.stack([np.zeros_like(x), self.epsilon * (r2 - d * d) / (r2 + d * d) ** 2])


def kappa0(n: NoiseSpec, tol: float = 1e-10) -> float:
    """Blow-up rate -(12/13) * sign functional."""
    val = sign_functional(n.profile2, n.q, min(tol, 1e-12))
    if not val < 0:
        raise SignConditionError(f"sign functional is {val:.6g}; it must be negative")
    return -RATE_FACTOR * val


def seven_twentyfourths(b: float = np.inf, tol: float = 1e-14) -> float:
    """int_0^b (1+s)^2/(2+s)^4 ds, compactified with s = tan(theta)."""
    if not b >= 0:
        raise InvalidArgument("upper limit must be nonnegative")
    if b == 0:
        return 0.0
    top = 0.5 * np.pi if np.isinf(b) else float(np.arctan(b))

    def g(theta):
        s = np.tan(theta)
        c = np.cos(theta)
        return (1.0 + s) ** 2 / ((2.0 + s) ** 4 * c * c)

    return float(adaptive_gauss(g, 0.0, top, tol))


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamState:
    kappa0: float
    q: float = 0.0

    def __post_init__(self):
        # kappa0 = 0 is the static bubble, used for noise-free runs
        if not (np.isfinite(self.kappa0) and self.kappa0 >= 0):
            raise InvalidArgument("kappa0 must be nonnegative")

    def mu0(self, t):
        return np.exp(-self.kappa0 * np.asarray(t, dtype=float))

    def mu0_dot(self, t):
        return -self.kappa0 * self.mu0(t)

    @property
    def xi0(self) -> float:
        return self.q


@dataclass(frozen=True)
class ScalePath:
    """mu(s) = mu0(s) + lambda(s) with its derivative, for history integrals."""

    ps: ParamState
    lam: Callable = field(default=lambda s: 0.0 * np.asarray(s, dtype=float))
    lam_dot: Callable = field(default=lambda s: 0.0 * np.asarray(s, dtype=float))

    def mu(self, s):
        return self.ps.mu0(s) + self.lam(s)

    def mu_dot(self, s):
        return self.ps.mu0_dot(s) + self.lam_dot(s)


def exponential_path(kappa: float) -> ScalePath:
    return ScalePath(ParamState(kappa))


# ---------------------------------------------------------------------------
# Duhamel correction
# ---------------------------------------------------------------------------


def phi0_forcing(path: ScalePath, xi: float) -> Callable:
    """Source f(x, s) = -2 (x - xi) mu'(s) / ((x - xi)^2 + mu(s)^2) of the correction."""

    def f(x, s):
        r = np.asarray(x, dtype=float) - xi
        return -2.0 * r * path.mu_dot(s) / (r * r + path.mu(s) ** 2)

    return f


def correction_phi0(path: ScalePath, xi: float, t0: float, t: float, x) -> np.ndarray:
    """First component of Phi0: int_{t0}^t p(s) (x-xi)/((x-xi)^2 + (mu(s)+t-s)^2) ds, p = -2 mu'."""
    x = np.asarray(x, dtype=float)
    if t < t0:
        raise InvalidArgument("time precedes the initial time")
    if t == t0:
        return np.zeros_like(x)
    nodes, weights = composite_gauss(t0, t, duhamel_step(t - t0))
    r = x - xi
    acc = np.zeros_like(x)
    for s, w in zip(nodes, weights):
        p = -2.0 * path.mu_dot(s)
        c = path.mu(s) + t - s
        acc += w * p * r / (r * r + c * c)
    return acc


def _history_coefficients(path: ScalePath, t0: float, t: float, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Z3 and Z2 coefficients produced by the nonlocal part of L_U acting on Phi0.

    For one source time s the profile is (1/mu) y/(y^2+b^2),
    b = (mu(s)+t-s)/mu(t); its difference-quotient integrals are
    b^2/((b+1)^2 (b^2+y^2)) and -y/((b+1)^2 (b^2+y^2)).
    """
    if t <= t0:
        return np.zeros_like(y), np.zeros_like(y)
    nodes, weights = composite_gauss(t0, t, duhamel_step(t - t0))
    mu_t = float(path.mu(t))
    c3 = np.zeros_like(y)
    c2 = np.zeros_like(y)
    for s, w in zip(nodes, weights):
        p = -2.0 * float(path.mu_dot(s))
        b = (float(path.mu(s)) + t - s) / mu_t
        base = w * p / (mu_t * mu_t * (b + 1.0) ** 2 * (b * b + y * y))
        c3 += base * b * b
        c2 -= base * y
    return c3, c2


# ---------------------------------------------------------------------------
# error E*
# ---------------------------------------------------------------------------


def noise_coefficients(noise: NoiseSpec, mu: float, xi: float, tau: float, y, tol: float = 1e-10, grid=None) -> np.ndarray:
    """(C0..C3) of Z*(., tau) written in the bubble variable, shape (4, n)."""
    a_fn = lambda s: noise.evolve(xi + mu * np.asarray(s), tau, grid)[0]  # noqa: E731
    b_fn = lambda s: noise.evolve(xi + mu * np.asarray(s), tau, grid)[1]  # noqa: E731
    if noise.is_default:
        a_fn = lambda s: np.zeros_like(np.asarray(s, dtype=float))  # noqa: E731
        d = 1.0 + tau

        def b_fn(s):
            r = xi + mu * np.asarray(s, dtype=float) - noise.q
            return noise.epsilon * d / (r * r + d * d)

    return coefficient_integrals(a_fn, b_fn, np.atleast_1d(y), tol)


def _leading_profile(y: np.ndarray) -> np.ndarray:
    d = 1.0 + y * y
    return np.stack([-4.0 * y * (y * y - 1.0) / d**3, 8.0 * y * y / d**3])


@dataclass(frozen=True)
class ErrorParts:
    """Pieces of E* in the bubble variable; each has shape (2, n)."""

    y: np.ndarray
    base: np.ndarray  # terms from -U_t and the Phi0 source
    history: np.ndarray
    noise: np.ndarray
    coupling: np.ndarray  # (Phi*.U) U_t + (Phi*.U_t) U

    @property
    def total(self) -> np.ndarray:
        return self.base + self.history + self.noise + self.coupling


def error_star_parts(
    path: ScalePath,
    xi: float,
    xi_dot: float,
    noise: NoiseSpec | None,
    t0: float,
    t: float,
    y,
    include_phi0: bool = True,
    coef=None,
) -> ErrorParts:
    """E* = E0 + E1 + E2 at time t on bubble-variable nodes y."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mu = float(path.mu(t))
    mu_dot = float(path.mu_dot(t))
    Z2, Z3 = kernel_Z(2, y), kernel_Z(3, y)
    rate = mu_dot / mu
    if include_phi0:
        base = rate * _leading_profile(y) - (xi_dot / mu) * Z2
        c3, c2 = _history_coefficients(path, t0, t, y)
        history = c3 * Z3 + c2 * Z2
    else:
        base = -rate * Z3 - (xi_dot / mu) * Z2
        history = np.zeros_like(base)
    x = xi + mu * y
    phi_star = np.zeros((2, y.size))
    if include_phi0:
        phi_star[0] += correction_phi0(path, xi, t0, t, x)
    if noise is not None:
        if coef is None:
            coef = noise_coefficients(noise, mu, xi, t - t0, y)
        noise_part = remainder_from_coefficients(coef, y, mu)
        phi_star += noise.evolve(x, t - t0)
    else:
        noise_part = np.zeros_like(base)
    U = omega(y)
    Ut = rate * Z3 + (xi_dot / mu) * Z2
    coupling = np.sum(phi_star * U, axis=0) * Ut + np.sum(phi_star * Ut, axis=0) * U
    return ErrorParts(y, base, history, noise_part, coupling)


def error_star(ps: ParamState, lam, xi1, n: NoiseSpec | None, t: float, y=None, *, t0: float, lam_dot=0.0, xi1_dot=0.0, include_phi0: bool = True) -> np.ndarray:
    """E* as a (2, n) field in the bubble variable.

    ``lam`` and ``lam_dot`` may be constants or callables of time; the
    history integral uses them over [t0, t].
    """
    lam_fn = lam if callable(lam) else (lambda s, v=float(lam): v + 0.0 * np.asarray(s, dtype=float))
    lam_dot_fn = lam_dot if callable(lam_dot) else (lambda s, v=float(lam_dot): v + 0.0 * np.asarray(s, dtype=float))
    path = ScalePath(ps, lam_fn, lam_dot_fn)
    if y is None:
        y = np.linspace(-50.0, 50.0, 1001)
    return error_star_parts(path, ps.q + float(xi1), float(xi1_dot), n, t0, t, y, include_phi0).total


def perp_part(E: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pointwise component of E orthogonal to omega(y)."""
    U = omega(y)
    return E - np.sum(E * U, axis=0) * U


def project_modes(E: np.ndarray, j: int, y: np.ndarray, R: float | None = None) -> float:
    """int_{|y| <= 2R} E . Z_j dy by the trapezoid rule on the given nodes."""
    if j not in (2, 3):
        raise InvalidArgument("projection index must be 2 or 3")
    y = np.asarray(y, dtype=float)
    E = np.asarray(E, dtype=float)
    f = np.sum(E * kernel_Z(j, y), axis=0)
    if R is not None:
        keep = np.abs(y) <= 2.0 * R + 1e-12
        y, f = y[keep], f[keep]
    return float(np.trapezoid(f, y))


# ---------------------------------------------------------------------------
# parameter ODEs
# ---------------------------------------------------------------------------


def _tail_integral(h: Callable, t: float, tol: float = 1e-13, max_doublings: int = 40) -> float:
    """int_t^inf h, with divergence detection by doubling the cut."""
    span = 1.0
    total = float(adaptive_gauss(h, t, t + span, tol))
    prev_piece = None
    for _ in range(max_doublings):
        piece = float(adaptive_gauss(h, t + span, t + 2.0 * span, tol))
        total += piece
        span *= 2.0
        if abs(piece) <= tol * max(1.0, abs(total)):
            return total
        if prev_piece is not None and abs(piece) >= 0.9 * abs(prev_piece) and span > 64.0:
            raise InvalidArgument("tail integral of the forcing diverges")
        prev_piece = piece
    raise InvalidArgument("tail integral of the forcing did not converge")


@dataclass(frozen=True)
class ParamSolution:
    t: np.ndarray
    lam: np.ndarray
    xi: np.ndarray
    lam_rk4: np.ndarray
    xi_rk4: np.ndarray

    @property
    def max_difference(self) -> float:
        return float(max(np.max(np.abs(self.lam - self.lam_rk4)), np.max(np.abs(self.xi - self.xi_rk4))))


def _rk4(fun: Callable, y0: float, t: np.ndarray, substeps: int) -> np.ndarray:
    out = np.empty_like(t)
    out[0] = y = y0
    for i in range(1, t.size):
        a, b = t[i - 1], t[i]
        dt = (b - a) / substeps
        s = a
        for _ in range(substeps):
            k1 = fun(s, y)
            k2 = fun(s + 0.5 * dt, y + 0.5 * dt * k1)
            k3 = fun(s + 0.5 * dt, y + 0.5 * dt * k2)
            k4 = fun(s + dt, y + dt * k3)
            y = y + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            s += dt
        out[i] = y
    return out


def param_ode_solve(kappa0: float, h1: Callable, h2: Callable, d: float, t0: float, t_grid, q: float = 0.0, substeps: int = 200) -> ParamSolution:
    """lambda' + (10/3) kappa0 lambda = h1 and xi' = h2 with xi(inf) = q.

    Closed forms: lambda = e^{-c t}[d + int_{t0}^t e^{c s} h1], c = (10/3) kappa0,
    and xi(t) = q - int_t^inf h2.  RK4 runs from t0 with matching data.
    """
    if not kappa0 > 0:
        raise InvalidArgument("kappa0 must be positive")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 1 or t[0] < t0 or np.any(np.diff(t) <= 0):
        raise InvalidArgument("time grid must increase and start at or after t0")
    c = LAMBDA_DAMPING * kappa0
    tt = np.concatenate([[t0], t]) if t[0] > t0 else t
    lam = np.empty_like(tt)
    for i, ti in enumerate(tt):
        integral = float(adaptive_gauss(lambda s: np.exp(c * (s - ti)) * h1(s), t0, ti, 1e-14)) if ti > t0 else 0.0
        lam[i] = np.exp(-c * ti) * d + integral
    xi = np.array([q - _tail_integral(h2, ti) for ti in tt])
    lam_rk = _rk4(lambda s, v: -c * v + h1(s), lam[0], tt, substeps)
    xi_rk = _rk4(lambda s, v: h2(s), xi[0], tt, substeps)
    sl = slice(1, None) if t[0] > t0 else slice(None)
    return ParamSolution(t, lam[sl], xi[sl], lam_rk[sl], xi_rk[sl])


# ---------------------------------------------------------------------------
# cutoff
# ---------------------------------------------------------------------------


def _smooth_step(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def cutoff(s):
    """eta0: 1 for s <= 1, 0 for s >= 2, C-infinity in between."""
    s = np.asarray(s, dtype=float)
    a = _smooth_step(2.0 - s)
    b = _smooth_step(s - 1.0)
    return a / (a + b)


def cutoff_derivative(s):
    s = np.asarray(s, dtype=float)
    a = _smooth_step(2.0 - s)
    b = _smooth_step(s - 1.0)
    da = np.zeros_like(s)
    db = np.zeros_like(s)
    m = (2.0 - s) > 0
    da[m] = -a[m] / (2.0 - s[m]) ** 2
    m = (s - 1.0) > 0
    db[m] = b[m] / (s[m] - 1.0) ** 2
    den = (a + b) ** 2
    return (da * b - a * db) / den


# ---------------------------------------------------------------------------
# coupled inner-outer evolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GluingConfig:
    t0: float = 10.0
    rho: float = 0.1
    sigma: float = 0.1
    alpha: float = 0.5
    dt: float = 0.05
    t_end: float = 10.5
    L_outer: float = 200.0
    N_outer: int = 2**13
    R_floor: float = 10.0
    quad_tol: float = 1e-9
    proj_tol: float = 1e-12

    def __post_init__(self):
        if not (0 < self.rho < 1):
            raise InvalidArgument("rho must lie in (0, 1)")
        if not (0 < self.sigma <= 1):
            raise InvalidArgument("sigma must lie in (0, 1]")
        if not (0 < self.alpha < 1):
            raise InvalidArgument("alpha must lie in (0, 1)")
        if not (self.dt > 0 and self.t_end > self.t0):
            raise InvalidArgument("need dt > 0 and t_end > t0")
        if self.R < 10.0:
            raise InvalidArgument("cutoff radius must be at least 10")

    @property
    def R(self) -> float:
        return max(float(np.exp(self.rho * self.t0)), self.R_floor)

    @property
    def outer_grid(self) -> GridSpec:
        return make_grid(self.L_outer, self.N_outer)

    def inner_grid(self, mu0: float) -> GridSpec:
        R = self.R
        hy = min(self.outer_grid.h / mu0, 0.05 * R)
        n = int(np.ceil(4.0 * R / hy)) + 1
        n += (n + 1) % 2  # odd count keeps y = 0 on the grid
        return make_grid(2.0 * R, n)


@dataclass
class GluingState:
    t: float
    tau: float
    v: np.ndarray  # scalar amplitude of phi along J omega(y)
    psi: np.ndarray  # (2, N_outer)
    lam: float
    xi1: float
    lam_dot: float = 0.0
    xi1_dot: float = 0.0
    inner: GridSpec | None = None
    outer: GridSpec | None = None
    lam_times: list = field(default_factory=list)
    lam_values: list = field(default_factory=list)
    lam_rates: list = field(default_factory=list)
    proj: tuple = (0.0, 0.0)

    @property
    def phi_array(self) -> np.ndarray:
        return self.v * _J_omega(self.inner.x)

    @property
    def phi(self) -> TangentField:
        y = self.inner.x
        base = SphereMapField.from_array(self.inner, omega(y), renormalize=True)
        p = self.phi_array
        return TangentField(self.inner, p[0], p[1], base)


def _J_omega(y):
    w = omega(y)
    return np.stack([-w[1], w[0]])


def initial_state(cfg: GluingConfig, ps: ParamState, lam: float = 0.0, xi1: float = 0.0) -> GluingState:
    mu0 = float(ps.mu0(cfg.t0))
    inner = cfg.inner_grid(mu0)
    outer = cfg.outer_grid
    st = GluingState(
        t=cfg.t0,
        tau=0.0,
        v=np.zeros(inner.N),
        psi=np.zeros((2, outer.N)),
        lam=lam,
        xi1=xi1,
        inner=inner,
        outer=outer,
    )
    st.lam_times.append(cfg.t0)
    st.lam_values.append(lam)
    st.lam_rates.append(0.0)
    return st


def _path_from_state(st: GluingState, ps: ParamState, lam_dot_now: float) -> ScalePath:
    ts = np.array(st.lam_times + ([st.t] if st.t > st.lam_times[-1] else []))
    ls = np.array(st.lam_values + ([st.lam] if st.t > st.lam_times[-1] else []))
    rs = np.array(st.lam_rates[:-1] + [lam_dot_now] + ([lam_dot_now] if st.t > st.lam_times[-1] else []))
    rs = rs[: ts.size]

    def lam(s):
        return np.interp(s, ts, ls) if ts.size > 1 else ls[0] + 0.0 * np.asarray(s, dtype=float)

    def lam_dot(s):
        return np.interp(s, ts, rs) if ts.size > 1 else rs[0] + 0.0 * np.asarray(s, dtype=float)

    return ScalePath(ps, lam, lam_dot)


def _vec_bilinear(a: np.ndarray, U: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Componentwise (1/pi) int (a(x)-a(s))(U_c(x)-U_c(s))/(x-s)^2 ds."""
    return np.stack([bilinear_form(a, U[c], grid) for c in range(2)])


def _tangent_coupling(w: np.ndarray, U: np.ndarray, grid: GridSpec) -> np.ndarray:
    """T(U) w - Qv[w.U, U] + (Qv[w.U, U] . U) U."""
    tens = tension_values(U, grid, "spectral")
    qv = _vec_bilinear(np.sum(w * U, axis=0), U, grid)
    return tens * w - qv + np.sum(qv * U, axis=0) * U


def _interp_to(src_x: np.ndarray, vals: np.ndarray, dst_x: np.ndarray, fill: float = 0.0) -> np.ndarray:
    spl = CubicSpline(src_x, vals, axis=-1)
    out = spl(dst_x)
    outside = (dst_x < src_x[0]) | (dst_x > src_x[-1])
    out[..., outside] = fill
    return out


@dataclass(frozen=True)
class StepDiagnostics:
    proj_Z2: float
    proj_Z3: float
    drift: float


def _inner_forcing(st, cfg, ps, noise, path, xi, xi_dot, coef, psi_coupling_inner):
    """H on the inner grid, for given parameter rates encoded in ``path`` and xi_dot."""
    y = st.inner.x
    t = st.t
    mu0 = float(ps.mu0(t))
    mu = float(path.mu(t))
    r = mu0 / mu
    yb = r * y
    parts = error_star_parts(path, xi, xi_dot, noise, cfg.t0, t, yb, True, coef)
    H = mu0 * perp_part(parts.total, yb)
    # potential and nonlocal corrections from the scale mismatch mu0 != mu
    phi = st.phi_array
    w_mu = omega(yb)
    w_0 = omega(y)
    g = st.inner
    B1 = (2.0 * r / (1.0 + yb * yb) - 2.0 / (1.0 + y * y)) * phi
    q_mu = _vec_bilinear(np.sum(phi * w_mu, axis=0), w_mu, g)
    q_0 = _vec_bilinear(np.sum(phi * w_0, axis=0), w_0, g)
    B2 = -q_mu + q_0
    B3 = np.sum(q_mu * w_mu, axis=0) * w_mu - np.sum(q_0 * w_0, axis=0) * w_0
    return H + psi_coupling_inner + B1 + B2 + B3


def inner_outer_step(st: GluingState, cfg: GluingConfig, ps: ParamState, noise: NoiseSpec | None) -> tuple[GluingState, StepDiagnostics]:
    """Advance (phi, psi, lambda, xi1) by one outer step dt."""
    dt = cfg.dt
    t = st.t
    mu0 = float(ps.mu0(t))
    mu0_dot = float(ps.mu0_dot(t))
    xi = ps.q + st.xi1
    inner, outer = st.inner, st.outer
    y = inner.x
    x = outer.x
    R = cfg.R

    # psi-driven terms of H, computed on the outer grid and sampled at x = xi + mu0 y
    path0 = _path_from_state(st, ps, st.lam_dot)
    mu = float(path0.mu(t))
    U_out = scaled_bubble(BubbleParams(mu, xi), x)
    psi_perp = st.psi - np.sum(st.psi * U_out, axis=0) * U_out
    psi_terms = _tangent_coupling(psi_perp, U_out, outer)
    psi_inner = mu0 * _interp_to(x, psi_terms, xi + mu0 * y)

    coef = None
    if noise is not None:
        coef = noise_coefficients(noise, mu, xi, t - cfg.t0, (mu0 / mu) * y, cfg.quad_tol)

    def projections(lam_dot, xi_dot):
        path = _path_from_state(st, ps, lam_dot)
        Hh = _inner_forcing(st, cfg, ps, noise, path, xi, xi_dot, coef, psi_inner)
        return np.array([project_modes(Hh, 2, y, R), project_modes(Hh, 3, y, R)]), Hh

    p00, _ = projections(0.0, 0.0)
    p10, _ = projections(1.0, 0.0)
    p01, _ = projections(0.0, 1.0)
    M = np.column_stack([p10 - p00, p01 - p00])
    if not np.all(np.isfinite(M)) or abs(np.linalg.det(M)) < 1e-300:
        raise NumericError("singular orthogonality system for the parameter rates")
    # the conditions are mildly quadratic in the rates (Phi0 and U_t both
    # carry mu'), so the affine guess is refined by chord iterations
    rates = np.linalg.solve(M, -p00)
    proj, H = projections(*rates)
    for _ in range(20):
        if np.max(np.abs(proj)) <= cfg.proj_tol:
            break
        rates = rates - np.linalg.solve(M, proj)
        proj, H = projections(*rates)
    lam_dot, xi_dot = float(rates[0]), float(rates[1])
    path = _path_from_state(st, ps, lam_dot)

    # inner step on the scalar amplitude, d tau = dt / mu0
    dtau = dt / mu0
    Jw = _J_omega(y)
    w1 = 2.0 / (1.0 + y * y)
    avg = line_integral(st.v, 1.0 / (1.0 + y * y), inner, (0.0, 0.0))
    explicit = w1 * st.v - w1 * avg / np.pi + np.sum(Jw * H, axis=0)
    v_new = poisson_values(st.v, inner, dtau, (0.0, 0.0)) + poisson_integral_values(explicit, inner, dtau)
    phi_new = v_new * Jw
    drift = float(np.max(np.abs(np.sum(phi_new * omega(y), axis=0))))
    if drift > 1e-6:
        raise ConsistencyError(f"inner field left the tangent space: |phi.omega| = {drift:.3e}")

    # outer step
    eta_arg = np.abs(x - xi) / (R * mu0)
    eta = cutoff(eta_arg)
    yo = (x - xi) / mu0
    phi_out = _interp_to(y, st.phi_array, yo)
    dphi = np.gradient(st.phi_array, y, axis=-1)
    dphi_out = _interp_to(y, dphi, yo)
    U = U_out
    mu_dot = float(path.mu_dot(t))
    Ut = (mu_dot / mu) * kernel_Z(3, (x - xi) / mu) + (xi_dot / mu) * kernel_Z(2, (x - xi) / mu)

    phi0 = np.stack([correction_phi0(path, xi, cfg.t0, t, x), np.zeros_like(x)])
    zstar = noise.evolve(x, t - cfg.t0, outer) if noise is not None else np.zeros((2, x.size))
    total = phi0 + zstar + eta * phi_out + st.psi
    P = total - np.sum(total * U, axis=0) * U
    lin = LinearizedAt(BubbleParams(mu, xi), outer)
    NU = nonlinear_remainder(lin, P, Ut, "spectral")

    E_out = error_star_grid(path, xi, xi_dot, noise, cfg.t0, t, outer)
    E_perp = E_out - np.sum(E_out * U, axis=0) * U

    transport = eta * ((mu0_dot / mu0) * yo * dphi_out + (xi_dot / mu0) * dphi_out)
    deta_dt = cutoff_derivative(eta_arg) * (-np.sign(x - xi) * xi_dot / (R * mu0) - eta_arg * mu0_dot / mu0)
    lap_phi = half_laplacian_vec(phi_out, outer)
    lap_etaphi = half_laplacian_vec(eta * phi_out, outer)
    commutator = eta * lap_phi - lap_etaphi
    g = np.sum(phi_out * U, axis=0)
    cq = _vec_bilinear(eta * g, U, outer) - eta * _vec_bilinear(g, U, outer)
    omega_comm = -cq + np.sum(cq * U, axis=0) * U
    force = (
        (1.0 - eta) * psi_terms
        + transport
        + NU
        + (1.0 - eta) * E_perp
        + commutator
        - deta_dt * phi_out
        + omega_comm
    )
    psi_new = np.stack(
        [poisson_values(st.psi[c], outer, dt) + poisson_integral_values(force[c], outer, dt) for c in range(2)]
    )
    if not (np.all(np.isfinite(psi_new)) and np.all(np.isfinite(v_new))):
        raise NumericError("non-finite gluing state")

    new = replace(
        st,
        t=t + dt,
        tau=st.tau + dtau,
        v=v_new,
        psi=psi_new,
        lam=st.lam + dt * lam_dot,
        xi1=st.xi1 + dt * xi_dot,
        lam_dot=float(lam_dot),
        xi1_dot=float(xi_dot),
        lam_times=st.lam_times + [t + dt],
        lam_values=st.lam_values + [st.lam + dt * lam_dot],
        lam_rates=st.lam_rates[:-1] + [float(lam_dot), float(lam_dot)],
        proj=(float(proj[0]), float(proj[1])),
    )
    return new, StepDiagnostics(float(proj[0]), float(proj[1]), drift)


def error_star_grid(path: ScalePath, xi: float, xi_dot: float, noise: NoiseSpec | None, t0: float, t: float, grid: GridSpec) -> np.ndarray:
    """E* = -U_t - d/dt(Pi Phi*) + L_U[Pi Phi*] evaluated with grid operators in x."""
    x = grid.x
    mu = float(path.mu(t))
    mu_dot = float(path.mu_dot(t))
    yb = (x - xi) / mu
    U = omega(yb)
    Ut = (mu_dot / mu) * kernel_Z(3, yb) + (xi_dot / mu) * kernel_Z(2, yb)
    phi0 = np.stack([correction_phi0(path, xi, t0, t, x), np.zeros_like(x)])
    src = phi0_forcing(path, xi)(x, t)
    phi0_t = np.stack([-half_laplacian_values(phi0[0], grid) + src, np.zeros_like(x)])
    if noise is not None:
        z = noise.evolve(x, t - t0, grid)
        z_t = -half_laplacian_vec(z, grid)
    else:
        z = np.zeros_like(phi0)
        z_t = np.zeros_like(phi0)
    F, F_t = phi0 + z, phi0_t + z_t
    dot = np.sum(F * U, axis=0)
    P = F - dot * U
    P_t = F_t - (np.sum(F_t * U, axis=0) + np.sum(F * Ut, axis=0)) * U - dot * Ut
    lin = LinearizedAt(BubbleParams(mu, xi), grid)
    return -Ut - P_t + linearized_vector(lin, P, "spectral")


def reconstruct(st: GluingState, cfg: GluingConfig, ps: ParamState, noise: NoiseSpec | None) -> SphereMapField:
    """u = U + Pi[Phi0 + Z* + eta phi + psi] + a U on the outer grid."""
    x = st.outer.x
    xi = ps.q + st.xi1
    path = _path_from_state(st, ps, st.lam_dot)
    mu = float(path.mu(st.t))
    mu0 = float(ps.mu0(st.t))
    U = scaled_bubble(BubbleParams(mu, xi), x)
    phi0 = np.stack([correction_phi0(path, xi, cfg.t0, st.t, x), np.zeros_like(x)])
    zstar = noise.evolve(x, st.t - cfg.t0, st.outer) if noise is not None else np.zeros_like(phi0)
    eta = cutoff(np.abs(x - xi) / (cfg.R * mu0))
    phi_out = _interp_to(st.inner.x, st.phi_array, (x - xi) / mu0)
    total = phi0 + zstar + eta * phi_out + st.psi
    P = total - np.sum(total * U, axis=0) * U
    sq = np.sum(P * P, axis=0)
    if np.any(sq > 1.0):
        raise NumericError("perturbation exceeds unit length")
    a = -sq / (1.0 + np.sqrt(1.0 - sq))
    return SphereMapField.from_array(st.outer, U + P + a * U, renormalize=True)


GLUE_COLUMNS = ("t", "tau", "lambda", "xi1", "proj_Z2", "proj_Z3", "inner_sup", "outer_sup")


def glue_row(st: GluingState) -> tuple:
    return (
        st.t,
        st.tau,
        st.lam,
        st.xi1,
        st.proj[0],
        st.proj[1],
        float(np.max(np.abs(st.v))) if st.v.size else 0.0,
        float(np.max(np.abs(st.psi))),
    )


def run_gluing(cfg: GluingConfig, ps: ParamState, noise: NoiseSpec | None, on_row=None):
    """Step from t0 to t_end; returns the list of states (first and every step)."""
    st = initial_state(cfg, ps)
    states = [st]
    if on_row:
        on_row(glue_row(st))
    n = int(round((cfg.t_end - cfg.t0) / cfg.dt))
    for _ in range(n):
        st, _ = inner_outer_step(st, cfg, ps, noise)
        states.append(st)
        if on_row:
            on_row(glue_row(st))
    return states


def write_glue_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GLUE_COLUMNS)
        for r in rows:
            w.writerow([format(float(v), ".17g") for v in r])

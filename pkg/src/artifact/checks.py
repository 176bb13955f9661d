"""Identity checks run by ``verify``.

Every check yields a :class:`CheckResult` carrying the measured value,
its tolerance and the verdict.  Checks are grouped in suites; the order
of suites and of checks inside a suite is fixed, and random inputs come
from seeded generators, so two runs on the same settings produce the
same report byte for byte.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .diagnostics import energy, extract_bubble, fit_decay_rate
from .grid import GridSpec, ScalarField, SphereMapField, make_grid
from .linops import (
    LinearizedAt,
    decomposition_check,
    linearized_vector,
    normal_correction,
    project_tangent,
    scalar_reduced_apply,
)
from .nonlocal_ops import (
    DuhamelSource,
    duhamel_solve,
    extension_kernel,
    half_laplacian_values,
    half_laplacian_vec,
    poisson_values,
    tension_values,
)
from .profiles import (
    BubbleParams,
    MobiusSpec,
    MultiBubble,
    kernel_Z,
    mobius_trace,
    multi_bubble,
    omega,
    scaled_bubble,
    tension_coeff_omega,
    winding_number,
)
from .quadrature import integrate_line

SUITES = ("profiles", "nonlocal", "linops", "diagnostics", "gluing", "seven24")


@dataclass(frozen=True)
class VerifySettings:
    L: float = 200.0
    N: int = 2**14
    window: float = 50.0
    seed: int = 20240611
    random_fields: int = 5

    @property
    def grid(self) -> GridSpec:
        return make_grid(self.L, self.N)


@dataclass(frozen=True)
class CheckResult:
    suite: str
    check: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)

    def as_json(self) -> str:
        rec = {
            "suite": self.suite,
            "check": self.check,
            "value": float(format(self.value, ".17g")),
            "tolerance": float(format(self.tolerance, ".17g")),
            "pass": self.passed,
        }
        return json.dumps(rec, sort_keys=False)


def _sup(a) -> float:
    return float(np.max(np.abs(a)))


def _gaussian_field(rng: np.random.Generator, center: float, scale: float) -> Callable:
    """Smooth decaying 2-vector field: three Gaussians per component."""
    c = center + scale * rng.uniform(-2.0, 2.0, (2, 3))
    s = scale * rng.uniform(0.5, 2.0, (2, 3))
    A = rng.uniform(-0.5, 0.5, (2, 3))

    def fn(x):
        x = np.asarray(x, dtype=float)
        return np.stack([sum(A[i, k] * np.exp(-(((x - c[i, k]) / s[i, k]) ** 2)) for k in range(3)) for i in range(2)])

    return fn


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def _profiles(st: VerifySettings) -> Iterator[CheckResult]:
    S = "profiles"
    x = st.grid.x
    w = omega(x)
    yield CheckResult(S, "omega_unit_length", _sup(np.hypot(w[0], w[1]) - 1.0), 1e-15)
    yield CheckResult(S, "Z3_equals_y_Z2", _sup(kernel_Z(3, x) - x * kernel_Z(2, x)), 1e-12)
    yield CheckResult(S, "Z1_is_J_omega", _sup(kernel_Z(1, x) - np.stack([-w[1], w[0]])), 1e-15)
    z12 = np.sum(kernel_Z(2, x) * kernel_Z(1, x), axis=0)
    yield CheckResult(S, "Z2_dot_Z1", _sup(z12 + 2.0 / (1.0 + x * x)), 1e-15)
    for j in (2, 3):
        val = integrate_line(lambda s, j=j: np.sum(kernel_Z(j, s) ** 2, axis=0), 1e-12)
        yield CheckResult(S, f"Z{j}_norm_squared_2pi", abs(val - 2.0 * np.pi), 1e-9)
    for y0 in (0.0, 1.0, 3.0):
        dens = integrate_line(lambda s, y0=y0: _tension_integrand(s, y0), 1e-12)
        yield CheckResult(S, f"tension_closed_form_y{y0:g}", abs(dens / (2.0 * np.pi) - tension_coeff_omega(y0)), 1e-9)
    mob = MobiusSpec(2, 0.0, (1.0, 1.0), (-20.0, 20.0))
    yield CheckResult(S, "mobius_d2_winding", abs(winding_number(mobius_trace(mob, x)) - 2), 0.0)
    m1 = MobiusSpec(1, 0.0, (1.0,), (0.0,))
    yield CheckResult(S, "mobius_d1_is_rotated_omega", _sup(mobius_trace(m1, x) - np.stack([w[1], -w[0]])), 1e-14)


def _tension_integrand(s, y0):
    """|omega(y0) - omega(s)|^2 / (y0 - s)^2, the removable point filled by |omega'(y0)|^2."""
    s = np.asarray(s, dtype=float)
    diff = omega(s) - omega(y0)[:, None]
    gap = s - y0
    near = np.abs(gap) < 1e-6
    out = np.sum(diff * diff, axis=0) / np.where(near, 1.0, gap * gap)
    out[near] = 4.0 / (1.0 + y0 * y0) ** 2
    return out


def _nonlocal(st: VerifySettings) -> Iterator[CheckResult]:
    S = "nonlocal"
    g = st.grid
    x = g.x
    win = np.abs(x) <= st.window
    w = omega(x)
    lap = half_laplacian_vec(w, g, "spectral")
    yield CheckResult(S, "half_harmonic_identity", _sup((lap - tension_coeff_omega(x) * w)[:, win]), 1e-4)
    yield CheckResult(S, "tension_omega_pv", _sup(tension_values(w, g, "pv") - tension_coeff_omega(x)), 1e-4)
    yield CheckResult(S, "tension_omega_spectral", _sup(tension_values(w, g, "spectral") - tension_coeff_omega(x)), 1e-4)
    yield CheckResult(S, "constant_annihilated", _sup(half_laplacian_values(np.full_like(x, 3.0), g)), 1e-12)

    # backend agreement on the first bubble component, default and refined grid
    gaps = []
    for gg in (g, g.refined()):
        f = omega(gg.x)[0]
        gaps.append(_sup(half_laplacian_values(f, gg, backend="spectral") - half_laplacian_values(f, gg, backend="pv")))
    yield CheckResult(S, "backend_agreement", gaps[0], 1e-3)
    yield CheckResult(S, "backend_agreement_refined_below_default", gaps[1], gaps[0])

    # self-adjointness and positivity on smooth compact data
    f = np.exp(-((x - 1.0) ** 2)) * np.cos(2.0 * x)
    h2 = np.exp(-0.5 * (x + 0.5) ** 2)
    lf, lh = half_laplacian_values(f, g), half_laplacian_values(h2, g)
    yield CheckResult(S, "self_adjoint", abs(g.h * (np.dot(lf, h2) - np.dot(f, lh))), 1e-8)
    yield CheckResult(S, "positivity", max(0.0, -g.h * float(np.dot(lf, f))), 0.0)

    # Poisson semigroup
    yield CheckResult(S, "poisson_unit_mass", _sup(poisson_values(np.ones_like(x), g, 0.7) - 1.0), 1e-10)
    f = np.exp(-x * x) + 0.3 * w[0]
    lhs = poisson_values(poisson_values(f, g, 0.3), g, 0.4)
    yield CheckResult(S, "poisson_semigroup", _sup(lhs - poisson_values(f, g, 0.7)), 1e-6)
    a = 1.0
    cauchy = a / (np.pi * (a * a + x * x))
    for t in (0.5, 2.0):
        exact = (a + t) / (np.pi * ((a + t) ** 2 + x * x))
        yield CheckResult(S, f"cauchy_shift_t{t:g}", _sup(poisson_values(cauchy, g, t) - exact), 1e-6)

    # harmonic extension kernel: d/da k = -(-Delta)^(1/2) k
    for a in (0.5, 1.0, 2.0):
        d = 1e-4
        dk = (extension_kernel(x, a + d) - extension_kernel(x, a - d)) / (2.0 * d)
        res = dk + half_laplacian_values(extension_kernel(x, a), g)
        yield CheckResult(S, f"extension_kernel_a{a:g}", _sup(res), 1e-5)

    # Duhamel: spatially constant forcing integrates in time
    src = DuhamelSource(lambda xx, s: np.full_like(xx, np.cos(s)), 0.0, 1.0)
    yield CheckResult(S, "duhamel_constant_forcing", _sup(duhamel_solve(src, 1.0, g).values - np.sin(1.0)), 1e-10)


def _linops(st: VerifySettings) -> Iterator[CheckResult]:
    S = "linops"
    g = st.grid
    for mu, xi in ((1.0, 0.0), (0.5, 2.0)):
        L = LinearizedAt(BubbleParams(mu, xi), g)
        tens = tension_values(L.U, g, "spectral")
        for j in (1, 2, 3):
            r = linearized_vector(L, L.kernel(j), tension=tens)
            yield CheckResult(S, f"kernel_Z{j}_mu{mu:g}_xi{xi:g}", _sup(r), 1e-4)
    y = g.x
    for name, v in (("w1", 2.0 / (1.0 + y * y)), ("w2", 2.0 * y / (1.0 + y * y)), ("one", np.ones_like(y))):
        out = scalar_reduced_apply(ScalarField(g, v)).v.values
        yield CheckResult(S, f"scalar_reduction_{name}", _sup(out), 1e-6)

    # scalar and vector forms agree on v Z1
    rng = np.random.default_rng(st.seed)
    L = LinearizedAt(BubbleParams(1.0, 0.0), g)
    v = sum(rng.uniform(-1, 1) * np.exp(-(((y - rng.uniform(-2, 2)) / rng.uniform(0.5, 2)) ** 2)) for _ in range(3))
    lhs = scalar_reduced_apply(ScalarField(g, v)).v.values * kernel_Z(1, y)
    rhs = linearized_vector(L, v * kernel_Z(1, y))
    yield CheckResult(S, "scalar_vector_consistency", _sup(lhs - rhs), 1e-6)

    # projection and normal correction algebra
    phi = _gaussian_field(rng, 0.0, 1.0)(y)
    p1 = project_tangent(L, phi)
    p2 = project_tangent(L, p1.v)
    yield CheckResult(S, "projection_idempotent", _sup(p1.v - p2.v), 1e-14)
    a = normal_correction(p1).values
    unit = L.U + p1.v + a * L.U
    yield CheckResult(S, "normal_correction_unit", _sup(np.hypot(unit[0], unit[1]) - 1.0), 1e-14)

    # closed-form decomposition against the direct operator
    for mu, xi in ((1.0, 0.0), (0.5, 2.0)):
        L = LinearizedAt(BubbleParams(mu, xi), g)
        for k in range(st.random_fields):
            fn = _gaussian_field(rng, xi, mu)
            d = decomposition_check(L, fn, backend="spectral")["sup_difference"]
            yield CheckResult(S, f"decomposition_mu{mu:g}_xi{xi:g}_field{k}", d, 1e-6)


def _diagnostics(st: VerifySettings) -> Iterator[CheckResult]:
    S = "diagnostics"
    g = st.grid
    x = g.x
    yield CheckResult(S, "energy_bubble", abs(energy(SphereMapField.from_array(g, omega(x))) - np.pi), 1e-3)
    pair = multi_bubble(MultiBubble((BubbleParams(1.0, -50.0), BubbleParams(1.0, 50.0))), x)
    e2 = energy(SphereMapField.from_array(g, pair, renormalize=True))
    yield CheckResult(S, "energy_two_bubbles", abs(e2 - 2.0 * np.pi), 2e-2)
    mob = MobiusSpec(2, 0.0, (1.0, 1.0), (-20.0, 20.0))
    yield CheckResult(S, "energy_mobius_d2", abs(energy(SphereMapField.from_array(g, mobius_trace(mob, x))) - 2.0 * np.pi), 2e-2)
    const = SphereMapField.from_array(g, np.stack([np.zeros_like(x), np.ones_like(x)]))
    yield CheckResult(S, "energy_constant", abs(energy(const)), 1e-12)
    energies = [energy(SphereMapField.from_array(g, scaled_bubble(BubbleParams(m, 1.5), x))) for m in (0.5, 1.0, 2.0)]
    yield CheckResult(S, "energy_scale_invariance", max(energies) - min(energies), 2e-3)
    b = extract_bubble(SphereMapField.from_array(g, scaled_bubble(BubbleParams(0.5, 3.0), x)))
    yield CheckResult(S, "extract_bubble", max(abs(b.mu - 0.5), abs(b.xi - 3.0)), 2.0 * g.h)
    t = np.linspace(0.0, 30.0, 31)
    rate, r2 = fit_decay_rate(t, np.exp(-0.03 * t))
    yield CheckResult(S, "decay_fit_rate", abs(rate - 0.03), 1e-12)
    yield CheckResult(S, "decay_fit_r2", abs(r2 - 1.0), 1e-12)


def _gluing(st: VerifySettings) -> Iterator[CheckResult]:
    from . import gluing as G

    S = "gluing"
    for eps in (0.01, 0.1, 0.5):
        yield CheckResult(S, f"kappa0_eps{eps:g}", abs(G.kappa0(G.NoiseSpec(eps)) - 9.0 * eps / 26.0), 1e-8)
    yield CheckResult(S, "seven24_partial_b2", abs(G.seven_twentyfourths(2.0) - 19.0 / 192.0), 1e-12)

    g = st.grid
    kap = 0.2
    path = G.exponential_path(kap)
    t0, t1 = 1.0, 2.0
    a = G.correction_phi0(path, 0.0, t0, t1, g.x)
    b = duhamel_solve(DuhamelSource(G.phi0_forcing(path, 0.0), t0, t1), t1, g).values
    yield CheckResult(S, "phi0_two_formulas", _sup(a - b), 1e-5)
    yield CheckResult(S, "phi0_odd", _sup(a + a[::-1]), 1e-14)

    ps = G.ParamState(kap)
    y = np.linspace(-30.0, 30.0, 601)
    E = G.error_star(ps, 0.0, 0.0, None, t1, y, t0=t0, include_phi0=False)
    yield CheckResult(S, "error_reduces_to_dilation_mode", _sup(E - kap * kernel_Z(3, y)), 1e-12)

    R = 10.0
    yy = np.linspace(-2 * R, 2 * R, 4001)
    exact = 4.0 * (2 * R / (1 + 4 * R * R) + np.arctan(2 * R))
    yield CheckResult(S, "project_Z2_on_Z2", abs(G.project_modes(kernel_Z(2, yy), 2, yy, R) - exact), 1e-5)
    yield CheckResult(S, "project_Z3_on_Z2_parity", abs(G.project_modes(kernel_Z(3, yy), 2, yy, R)), 1e-14)

    k0 = 9.0 * 0.1 / 26.0
    sig = 0.1
    grid_t = np.linspace(10.0, 20.0, 11)
    zero = lambda s: 0.0 * np.asarray(s, dtype=float)  # noqa: E731
    sol = G.param_ode_solve(k0, zero, zero, 0.3, 10.0, grid_t, q=0.7)
    c = 10.0 / 3.0 * k0
    yield CheckResult(S, "lambda_free_decay", _sup(sol.lam - 0.3 * np.exp(-c * sol.t)), 1e-12)
    yield CheckResult(S, "xi_constant", _sup(sol.xi - 0.7), 1e-12)
    forcing = lambda s: np.exp(-k0 * (1.0 + sig) * np.asarray(s, dtype=float))  # noqa: E731
    sol = G.param_ode_solve(k0, forcing, forcing, 0.3, 10.0, grid_t)
    yield CheckResult(S, "param_ode_closed_vs_rk4", sol.max_difference, 1e-8)


def _seven24(st: VerifySettings) -> Iterator[CheckResult]:
    from . import gluing as G

    yield CheckResult("seven24", "seven24_limit", abs(G.seven_twentyfourths(np.inf) - 7.0 / 24.0), 1e-10)


_RUNNERS = {
    "profiles": _profiles,
    "nonlocal": _nonlocal,
    "linops": _linops,
    "diagnostics": _diagnostics,
    "gluing": _gluing,
    "seven24": _seven24,
}


def run_checks(settings: VerifySettings | None = None, suites=None) -> list[CheckResult]:
    """Run the named suites (all by default) in canonical order."""
    st = settings or VerifySettings()
    chosen = SUITES if not suites else tuple(s for s in SUITES if s in set(suites))
    out: list[CheckResult] = []
    for name in chosen:
        out.extend(_RUNNERS[name](st))
    return out

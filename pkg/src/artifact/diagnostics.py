"""Measurements on sphere maps and space-time fields: energy, bubble extraction,
decay-rate fits and weighted sup-norms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NoBubbleError, ResolutionError
from .grid import GridSpec, SphereMapField, tail_coefficients
from .nonlocal_ops import spectral_half_laplacian
from .profiles import BubbleParams

CORE_DEPTH = -0.9


def _component_energy(f: np.ndarray, grid: GridSpec) -> float:
    """<f - c0, (-Delta)^(1/2) f> over the line.

    The 1/x tail is carried by c1/2 * 2x/(1+x^2), whose pairing with
    itself (pi) and whose half-Laplacian 4x/(1+x^2)^2 are exact; only the
    faster-decaying remainder is paired on the grid.
    """
    h = grid.h
    if grid.periodic:
        lap = spectral_half_laplacian(f, grid)
        return float(h * np.dot(f - f.mean(), lap))
    x = grid.x
    c0, c1 = tail_coefficients(x, f, grid.L)
    r = f - c0 - 0.5 * c1 * 2.0 * x / (1.0 + x * x)
    lap_r = spectral_half_laplacian(r, grid, (0.0, 0.0))
    cross = h * np.dot(r, 4.0 * x / (1.0 + x * x) ** 2)
    return float(0.25 * c1 * c1 * np.pi + c1 * cross + h * np.dot(r, lap_r))


def energy(u: SphereMapField) -> float:
    """Half-Dirichlet energy (1/2) int |(-Delta)^(1/4) u|^2."""
    return 0.5 * sum(_component_energy(c, u.grid) for c in (u.u1, u.u2))


def extract_bubble(u: SphereMapField) -> BubbleParams:
    """Center from the minimum of the second component, scale from its zero crossings."""
    x, u2 = u.grid.x, u.u2
    i = int(np.argmin(u2))
    if u2[i] > CORE_DEPTH:
        raise NoBubbleError(f"min u2 = {u2[i]:.4f} is above {CORE_DEPTH}")
    xi = x[i]
    if 0 < i < len(x) - 1:
        fm, f0, fp = u2[i - 1], u2[i], u2[i + 1]
        curv = fm - 2.0 * f0 + fp
        if curv > 0:
            xi = x[i] + 0.5 * u.grid.h * (fm - fp) / curv
    right = np.flatnonzero(u2[i:] >= 0.0)
    left = np.flatnonzero(u2[: i + 1] >= 0.0)
    if right.size == 0 or left.size == 0:
        raise ResolutionError("zero crossings of u2 around the core not found")
    jr = i + int(right[0])
    jl = int(left[-1])

    def cross(j0, j1):
        a, b = u2[j0], u2[j1]
        return x[j0] + (x[j1] - x[j0]) * a / (a - b)

    xr = cross(jr - 1, jr)
    xl = cross(jl, jl + 1)
    mu = 0.5 * (xr - xl)
    if not mu > 0:
        raise ResolutionError("degenerate bubble width")
    return BubbleParams(float(mu), float(xi))


def fit_decay_rate(times, mus) -> tuple[float, float]:
    """Least squares of log mu against t; returns (rate, R^2)."""
    t = np.asarray(times, dtype=float)
    m = np.asarray(mus, dtype=float)
    if t.size < 10 or t.size != m.size:
        raise InvalidArgument("need at least 10 paired samples")
    if np.any(~(m > 0)):
        raise InvalidArgument("scales must be positive")
    logm = np.log(m)
    tc = t - t.mean()
    slope = float(np.dot(tc, logm - logm.mean()) / np.dot(tc, tc))
    resid = logm - logm.mean() - slope * tc
    ss_tot = float(np.dot(logm - logm.mean(), logm - logm.mean()))
    ss_res = float(np.dot(resid, resid))
    if ss_tot <= 1e-300 * max(1, t.size):
        r2 = 1.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    rate = -slope
    if rate == 0.0:
        rate = 0.0  # normalize -0.0
    return rate, r2


@dataclass(frozen=True)
class WeightedNormSpec:
    """Exponents of a weighted sup-norm.

    kind:
      ``star``     sup |f| (1+|y|^a) / mu0^(nu-1)            (a = 1+alpha)
      ``decay``    sup (|f| + (1+|y|)|f_y| chi_{|y|<=2R}) (1+|y|^a) / mu0^sigma
      ``inner``    sup tau^nu (1+|y|^a)(|h| + (1+|y|^eta) [h]_eta)  on |y| <= 2R
      ``time``     sup mu0^(-delta) |h|
    """

    kind: str
    a: float = 1.0
    nu: float = 0.0
    sigma: float = 0.0
    eta: float | None = None
    delta: float = 0.0
    R: float = np.inf

    def __post_init__(self):
        if self.kind not in ("star", "decay", "inner", "time"):
            raise InvalidArgument(f"unknown norm kind {self.kind!r}")
        if self.eta is not None and not (0.5 < self.eta < 1.0):
            raise InvalidArgument("Hölder exponent must lie in (1/2, 1)")
        if self.a < 0:
            raise InvalidArgument("spatial exponent must be nonnegative")


def _magnitude(f: np.ndarray) -> np.ndarray:
    """|f| for (n_t, n_y) scalar or (n_t, m, n_y) vector samples."""
    f = np.asarray(f, dtype=float)
    if f.ndim == 3:
        return np.sqrt(np.sum(f * f, axis=1))
    return np.abs(f)


def holder_seminorm(h: np.ndarray, y: np.ndarray, eta: float, R: float = np.inf, max_sep: float = 1.0) -> float:
    """max |h(y)-h(y')| / |y-y'|^eta over sampled pairs with |y-y'| <= max_sep inside |y| <= 2R."""
    inside = np.abs(y) <= 2.0 * R
    hv = np.asarray(h, dtype=float)
    if hv.ndim == 1:
        hv = hv[None, :]
    hv, yv = hv[:, inside], y[inside]
    best = 0.0
    dy = np.diff(yv)
    if dy.size == 0:
        return 0.0
    step = float(np.min(dy))
    kmax = max(1, int(np.floor(max_sep / step + 1e-9)))
    for k in range(1, min(kmax, yv.size - 1) + 1):
        sep = yv[k:] - yv[:-k]
        ok = sep <= max_sep + 1e-12
        if not np.any(ok):
            break
        diff = np.sqrt(np.sum((hv[:, k:] - hv[:, :-k]) ** 2, axis=0))
        best = max(best, float(np.max(diff[ok] / sep[ok] ** eta)))
    return best


def weighted_norm(f, spec: WeightedNormSpec, y=None, mu0=None, tau=None) -> float:
    """Discrete sup of the weighted quantity over all supplied samples.

    ``f`` has shape (n_t, n_y) or (n_t, m, n_y); ``mu0`` and ``tau`` are
    per-time arrays; ``y`` the spatial nodes.
    """
    if spec.kind == "time":
        h = np.abs(np.asarray(f, dtype=float))
        m0 = np.asarray(mu0, dtype=float)
        m0 = m0.reshape(m0.shape + (1,) * (h.ndim - m0.ndim))  # leading axis is time
        return float(np.max(m0 ** (-spec.delta) * h)) if h.size else 0.0
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        f = f[None, :]
    y = np.asarray(y, dtype=float)
    n_t = f.shape[0]
    mag = _magnitude(f)
    wy = 1.0 + np.abs(y) ** spec.a
    if spec.kind == "star":
        m0 = np.broadcast_to(np.asarray(1.0 if mu0 is None else mu0, dtype=float), (n_t,))
        return float(np.max(mag * wy[None, :] / m0[:, None] ** (spec.nu - 1.0)))
    if spec.kind == "decay":
        m0 = np.broadcast_to(np.asarray(1.0 if mu0 is None else mu0, dtype=float), (n_t,))
        grad = np.gradient(f, y, axis=-1)
        gm = _magnitude(grad)
        chi = (np.abs(y) <= 2.0 * spec.R).astype(float)
        q = mag + (1.0 + np.abs(y))[None, :] * gm * chi[None, :]
        return float(np.max(q * wy[None, :] / m0[:, None] ** spec.sigma))
    # inner norm on the ball
    taus = np.broadcast_to(np.asarray(1.0 if tau is None else tau, dtype=float), (n_t,))
    inside = np.abs(y) <= 2.0 * spec.R
    best = 0.0
    for n in range(n_t):
        snap = f[n]
        semi = 0.0
        if spec.eta is not None:
            semi = holder_seminorm(snap, y, spec.eta, spec.R)
        val = mag[n][inside] + (1.0 + np.abs(y[inside]) ** (spec.eta or 0.0)) * semi * (spec.eta is not None)
        best = max(best, float(np.max(taus[n] ** spec.nu * wy[inside] * val)))
    return best

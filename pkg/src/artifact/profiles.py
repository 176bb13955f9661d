"""Closed-form bubble profiles, kernel fields, multi-bubble ansatz and Möbius traces.

All functions are vectorized: scalar input gives a length-2 array, an
array of shape ``(n,)`` gives shape ``(2, n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

OMEGA_INF = np.array([0.0, 1.0])
SEPARATION_FACTOR = 10.0


@dataclass(frozen=True)
class BubbleParams:
    mu: float
    xi: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise InvalidArgument(f"bubble scale must be positive, got {self.mu}")
        if not np.isfinite(self.xi):
            raise InvalidArgument("bubble center must be finite")


@dataclass(frozen=True)
class MultiBubble:
    bubbles: tuple

    def __post_init__(self):
        bs = tuple(self.bubbles)
        if len(bs) < 1:
            raise InvalidArgument("need at least one bubble")
        for i in range(len(bs)):
            for j in range(i + 1, len(bs)):
                gap = abs(bs[i].xi - bs[j].xi)
                if gap <= SEPARATION_FACTOR * (bs[i].mu + bs[j].mu):
                    raise InvalidArgument(
                        f"bubbles {i} and {j} too close: |dxi|={gap} "
                        f"<= {SEPARATION_FACTOR}*(mu_i+mu_j)"
                    )
        object.__setattr__(self, "bubbles", bs)


@dataclass(frozen=True)
class MobiusSpec:
    degree: int
    theta: float = 0.0
    scales: tuple = field(default=())
    centers: tuple = field(default=())

    def __post_init__(self):
        sc, ce = tuple(self.scales), tuple(self.centers)
        if self.degree < 1:
            raise InvalidArgument("degree must be at least 1")
        if len(sc) != self.degree or len(ce) != self.degree:
            raise InvalidArgument("need one (scale, center) pair per degree")
        if any(not (s > 0) for s in sc):
            raise InvalidArgument("Möbius scales must be positive")
        object.__setattr__(self, "scales", sc)
        object.__setattr__(self, "centers", ce)


def omega(x):
    """The degree-one bubble ``(2x, x^2 - 1) / (x^2 + 1)``."""
    x = np.asarray(x, dtype=float)
    d = 1.0 + x * x
    return np.stack([2.0 * x / d, (x * x - 1.0) / d])


def scaled_bubble(p: BubbleParams, x):
    return omega((np.asarray(x, dtype=float) - p.xi) / p.mu)


def kernel_Z(j: int, y):
    """Kernel fields of the linearization at the bubble (rotation, translation, dilation)."""
    y = np.asarray(y, dtype=float)
    d = y * y + 1.0
    if j == 1:
        return np.stack([(1.0 - y * y) / d, 2.0 * y / d])
    if j == 2:
        return np.stack([2.0 * (y * y - 1.0) / d**2, -4.0 * y / d**2])
    if j == 3:
        return np.stack([2.0 * y * (y * y - 1.0) / d**2, -4.0 * y * y / d**2])
    raise InvalidArgument(f"kernel index must be 1, 2 or 3, got {j}")


def multi_bubble(mb: MultiBubble, x):
    """Superposition ansatz; not unit length in general."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((2,) + x.shape)
    out += OMEGA_INF.reshape((2,) + (1,) * x.ndim)
    for b in mb.bubbles:
        out += scaled_bubble(b, x) - OMEGA_INF.reshape((2,) + (1,) * x.ndim)
    return out


def mobius_trace(m: MobiusSpec, x):
    """Boundary values of a finite Blaschke-type product, as (Re, Im)."""
    z = np.asarray(x, dtype=float).astype(complex)
    w = np.exp(1j * m.theta) * np.ones_like(z)
    for lam, a in zip(m.scales, m.centers):
        s = lam * (z - a)
        w = w * (s - 1j) / (s + 1j)
    w = w / np.abs(w)
    return np.stack([w.real, w.imag])


def tension_coeff_omega(y):
    """Tension density of the bubble, ``2/(1+y^2)``."""
    y = np.asarray(y, dtype=float)
    return 2.0 / (1.0 + y * y)


def winding_number(u: np.ndarray) -> int:
    """Net number of turns of a sampled planar curve (unwrapped angle)."""
    ang = np.unwrap(np.arctan2(u[1], u[0]))
    return int(np.rint((ang[-1] - ang[0]) / (2.0 * np.pi)))

"""Globally adaptive Gauss-Legendre quadrature, vectorized over a batch of integrands.

The integrand callable receives a 1-D array of nodes and returns either
an array of the same length or a 2-D array ``(batch, nodes)``.  Panels
are bisected until the two-level error estimate on each panel is below
its share of the absolute tolerance, for every member of the batch.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import NumericError


@lru_cache(maxsize=8)
def _rule(order: int):
    return np.polynomial.legendre.leggauss(order)


def _panel_sums(f, lo, hi, order):
    """GL sums on each panel, shape (batch, panels)."""
    xg, wg = _rule(order)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    vals = np.asarray(f(nodes), dtype=float)
    squeeze = vals.ndim == 1
    vals = np.atleast_2d(vals).reshape(-1, lo.size, order)
    sums = np.einsum("bpk,k->bp", vals, wg) * half[None, :]
    return sums, squeeze


def adaptive_gauss(
    f: Callable,
    a: float,
    b: float,
    tol: float = 1e-10,
    order: int = 10,
    initial_panels: int = 8,
    max_panels: int = 200_000,
):
    """Integral of ``f`` over [a, b] to absolute tolerance ``tol`` (per batch member)."""
    edges = np.linspace(a, b, initial_panels + 1)
    lo, hi = edges[:-1], edges[1:]
    total = None
    squeeze = True
    width = b - a
    n_used = 0
    while lo.size:
        coarse, squeeze = _panel_sums(f, lo, hi, order)
        mid = 0.5 * (lo + hi)
        left, _ = _panel_sums(f, lo, mid, order)
        right, _ = _panel_sums(f, mid, hi, order)
        fine = left + right
        err = np.max(np.abs(fine - coarse), axis=0)
        share = tol * (hi - lo) / width
        done = err <= share
        if total is None:
            total = np.zeros(fine.shape[0])
        total += fine[:, done].sum(axis=1)
        n_used += lo.size
        if n_used > max_panels:
            raise NumericError("adaptive quadrature did not converge")
        keep = ~done
        lo, hi = np.concatenate([lo[keep], mid[keep]]), np.concatenate([mid[keep], hi[keep]])
    if not np.all(np.isfinite(total)):
        raise NumericError("non-finite quadrature result")
    return float(total[0]) if squeeze else total


def integrate_line(f: Callable, tol: float = 1e-10, **kw):
    """Integral over the whole line via s = tan(theta)."""

    def g(theta):
        s = np.tan(theta)
        c = np.cos(theta)
        return np.asarray(f(s)) / (c * c)

    return adaptive_gauss(g, -0.5 * np.pi, 0.5 * np.pi, tol, **kw)


def integrate_halfline(f: Callable, a: float = 0.0, tol: float = 1e-10, **kw):
    """Integral over [a, inf) via s = a + tan(theta)."""

    def g(theta):
        s = a + np.tan(theta)
        c = np.cos(theta)
        return np.asarray(f(s)) / (c * c)

    return adaptive_gauss(g, 0.0, 0.5 * np.pi, tol, **kw)


def difference_quotient(fn: Callable, s: np.ndarray, y: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """(fn(s) - fn(y)) / (s - y) for a batch of y (rows) and nodes s (columns).

    Near the diagonal the quotient is replaced by a centered difference.
    """
    s = np.asarray(s, dtype=float)[None, :]
    y = np.asarray(y, dtype=float)[:, None]
    fs = np.asarray(fn(s), dtype=float)
    fy = np.asarray(fn(y), dtype=float)
    ds = s - y
    near = np.abs(ds) < 1e-6 * (1.0 + np.abs(y))
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (fs - fy) / ds
    if np.any(near):
        yy = np.broadcast_to(y, near.shape)[near]
        q[near] = (fn(yy + step) - fn(yy - step)) / (2.0 * step)
    return q

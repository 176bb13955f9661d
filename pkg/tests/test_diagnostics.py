import numpy as np
import pytest

from artifact.diagnostics import WeightedNormSpec, energy, extract_bubble, fit_decay_rate, holder_seminorm, weighted_norm
from artifact.errors import InvalidArgument, NoBubbleError
from artifact.grid import SphereMapField, make_grid
from artifact.profiles import BubbleParams, MobiusSpec, MultiBubble, mobius_trace, multi_bubble, omega, scaled_bubble


def test_bubble_energy_is_pi(default_grid):
    g = default_grid
    assert energy(SphereMapField.from_array(g, omega(g.x))) == pytest.approx(np.pi, abs=1e-3)


def test_constant_map_has_no_energy(default_grid):
    g = default_grid
    assert abs(energy(SphereMapField(g, np.zeros(g.N), np.ones(g.N)))) < 1e-12


def test_two_bubbles_carry_two_quanta(default_grid):
    g = default_grid
    u = multi_bubble(MultiBubble((BubbleParams(1.0, -50.0), BubbleParams(1.0, 50.0))), g.x)
    assert energy(SphereMapField.from_array(g, u, renormalize=True)) == pytest.approx(2 * np.pi, abs=2e-2)


def test_degree_two_trace_energy(default_grid):
    g = default_grid
    u = mobius_trace(MobiusSpec(2, 0.0, (1.0, 1.0), (-20.0, 20.0)), g.x)
    assert energy(SphereMapField.from_array(g, u)) == pytest.approx(2 * np.pi, abs=2e-2)


def test_energy_on_periodic_grid():
    g = make_grid(np.pi, 256, periodic=True)
    # one full turn per period: |(-Delta)^(1/4) e^{ix}|^2 integrates to 2 pi, half of it is pi
    u = SphereMapField(g, np.cos(g.x), np.sin(g.x))
    assert energy(u) == pytest.approx(np.pi, rel=1e-12)


@pytest.mark.parametrize("mu,xi", [(0.5, 3.0), (1.0, 0.0), (2.0, -7.25)])
def test_extract_exact_bubble(default_grid, mu, xi):
    g = default_grid
    b = extract_bubble(SphereMapField.from_array(g, scaled_bubble(BubbleParams(mu, xi), g.x)))
    assert abs(b.mu - mu) <= 2 * g.h and abs(b.xi - xi) <= 2 * g.h


def test_extract_noisy_bubble(default_grid):
    g = default_grid
    x = g.x
    noise = 1e-3 * np.stack([np.sin(x) * np.exp(-x * x / 50), np.cos(2 * x) * np.exp(-x * x / 50)])
    b = extract_bubble(SphereMapField.from_array(g, omega(x) + noise, renormalize=True))
    assert abs(b.mu - 1.0) <= 1e-2 and abs(b.xi) <= 1e-2


def test_no_bubble_in_constant_map():
    g = make_grid(10, 101)
    with pytest.raises(NoBubbleError):
        extract_bubble(SphereMapField(g, np.zeros(g.N), np.ones(g.N)))


def test_decay_fit_exact_exponential():
    t = np.linspace(0, 30, 31)
    rate, r2 = fit_decay_rate(t, np.exp(-0.03 * t))
    assert rate == pytest.approx(0.03, abs=1e-14)
    assert r2 == pytest.approx(1.0, abs=1e-14)


def test_decay_fit_constant():
    assert fit_decay_rate(np.arange(12.0), np.full(12, 0.7)) == (0.0, 1.0)


def test_decay_fit_needs_samples():
    with pytest.raises(InvalidArgument):
        fit_decay_rate(np.arange(5.0), np.ones(5))
    with pytest.raises(InvalidArgument):
        fit_decay_rate(np.arange(12.0), np.r_[np.ones(11), -1.0])


def test_star_norm_of_its_profile_is_one():
    y = np.linspace(-50, 50, 1001)
    alpha, nu = 0.5, 0.3
    mu0 = np.exp(-0.1 * np.arange(5.0))
    f = mu0[:, None] ** (nu - 1) / (1 + np.abs(y)[None, :] ** (1 + alpha))
    spec = WeightedNormSpec("star", a=1 + alpha, nu=nu)
    assert weighted_norm(f, spec, y, mu0) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("kind", ["star", "decay", "inner", "time"])
def test_norm_of_zero(kind):
    y = np.linspace(-5, 5, 51)
    spec = WeightedNormSpec(kind, eta=0.7 if kind == "inner" else None, R=2.0)
    assert weighted_norm(np.zeros((3, 51)), spec, y, np.ones(3), np.ones(3)) == 0.0


def test_holder_seminorm_of_linear_function():
    y = np.linspace(-2, 2, 401)
    # |y - y'| / |y - y'|^eta is largest at the widest allowed gap
    assert holder_seminorm(2 * y, y, 0.75, max_sep=1.0) == pytest.approx(2.0, rel=1e-9)


def test_norm_spec_validation():
    with pytest.raises(InvalidArgument):
        WeightedNormSpec("l2")
    with pytest.raises(InvalidArgument):
        WeightedNormSpec("inner", eta=0.3)

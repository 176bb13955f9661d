import numpy as np
import pytest

from artifact.errors import InvalidArgument
from artifact.profiles import (
    OMEGA_INF,
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

# tension density of the bubble by 30-digit quadrature of its defining integral
TENSION_ORACLE = {0.0: 2.0, 1.0: 1.0, 2.0: 0.4}


def test_bubble_values():
    np.testing.assert_array_equal(omega(0.0), [0.0, -1.0])
    np.testing.assert_array_equal(omega(1.0), [1.0, 0.0])
    np.testing.assert_allclose(omega(1e9), OMEGA_INF, atol=3e-9)
    np.testing.assert_allclose(omega(-1e9), OMEGA_INF, atol=3e-9)


def test_bubble_is_unit_length(rng):
    x = rng.normal(scale=50.0, size=1000)
    w = omega(x)
    assert np.max(np.abs(np.hypot(w[0], w[1]) - 1.0)) <= 4.5e-16


def test_scaled_bubble():
    x = np.linspace(-5, 5, 11)
    np.testing.assert_array_equal(scaled_bubble(BubbleParams(1.0, 0.0), x), omega(x))
    for mu in (0.01, 1.0, 7.0):
        np.testing.assert_array_equal(scaled_bubble(BubbleParams(mu, 3.0), 3.0), [0.0, -1.0])
    np.testing.assert_array_equal(scaled_bubble(BubbleParams(2.0, 3.0), 5.0), [1.0, 0.0])


@pytest.mark.parametrize("mu", [0.0, -1.0, np.nan])
def test_bubble_scale_must_be_positive(mu):
    with pytest.raises(InvalidArgument):
        BubbleParams(mu, 0.0)


def test_kernel_values():
    np.testing.assert_array_equal(kernel_Z(1, 0.0), [1.0, 0.0])
    np.testing.assert_array_equal(kernel_Z(2, 0.0), [-2.0, 0.0])
    # 2y(y^2-1)/(y^2+1)^2 = 12/25 and -4y^2/(y^2+1)^2 = -16/25 at y = 2
    np.testing.assert_allclose(kernel_Z(3, 2.0), [12 / 25, -16 / 25], rtol=1e-15)
    np.testing.assert_allclose(2.0 * kernel_Z(2, 2.0), [12 / 25, -16 / 25], rtol=1e-15)
    with pytest.raises(InvalidArgument):
        kernel_Z(4, 0.0)


def test_kernel_fields_are_derivatives_of_the_family():
    y = np.linspace(-6, 6, 41)
    d = 1e-6
    w = omega(y)
    c, s = np.cos(d), np.sin(d)
    rot = (np.stack([c * w[0] - s * w[1], s * w[0] + c * w[1]]) - w) / d
    np.testing.assert_allclose(rot, kernel_Z(1, y), atol=1e-5)
    # translation and dilation modes carry the sign of -omega'
    dw = (omega(y + d) - omega(y - d)) / (2 * d)
    np.testing.assert_allclose(kernel_Z(2, y), -dw, atol=1e-8)
    np.testing.assert_allclose(kernel_Z(3, y), -y * dw, atol=1e-8)


def test_kernel_fields_tangent_to_bubble():
    y = np.linspace(-20, 20, 401)
    for j in (1, 2, 3):
        assert np.max(np.abs(np.sum(kernel_Z(j, y) * omega(y), axis=0))) < 1e-15


def test_single_bubble_ansatz_is_the_bubble():
    x = np.linspace(-10, 10, 21)
    b = BubbleParams(0.5, 1.0)
    np.testing.assert_allclose(multi_bubble(MultiBubble((b,)), x), scaled_bubble(b, x), atol=1e-15)


def test_two_bubble_ansatz():
    mb = MultiBubble((BubbleParams(1.0, -50.0), BubbleParams(1.0, 50.0)))
    far = multi_bubble(mb, np.array([-1e8, 1e8]))
    np.testing.assert_allclose(far, OMEGA_INF[:, None] * np.ones(2), atol=1e-6)
    for c in (-50.0, 50.0):
        x = np.linspace(c - 5, c + 5, 201)
        u = multi_bubble(mb, x)
        assert np.max(np.abs(np.hypot(u[0], u[1]) - 1.0)) <= 5e-2


def test_overlapping_bubbles_rejected():
    with pytest.raises(InvalidArgument, match="too close"):
        MultiBubble((BubbleParams(1.0, 0.0), BubbleParams(1.0, 15.0)))


def test_degree_one_trace_is_rotated_bubble():
    x = np.linspace(-30, 30, 301)
    m = MobiusSpec(1, 0.0, (1.0,), (0.0,))
    w = omega(x)
    np.testing.assert_allclose(mobius_trace(m, x), np.stack([w[1], -w[0]]), atol=1e-15)


def test_trace_has_unit_modulus(rng):
    for _ in range(5):
        d = int(rng.integers(1, 4))
        m = MobiusSpec(d, rng.uniform(0, 2 * np.pi), tuple(rng.uniform(0.2, 3, d)), tuple(rng.uniform(-10, 10, d)))
        u = mobius_trace(m, rng.uniform(-100, 100, 50))
        assert np.max(np.abs(np.hypot(u[0], u[1]) - 1.0)) <= 1e-15


def test_degree_two_winding():
    x = np.linspace(-200, 200, 2**14)
    m = MobiusSpec(2, 0.3, (1.0, 0.5), (-20.0, 20.0))
    assert winding_number(mobius_trace(m, x)) == 2
    assert winding_number(omega(x)) == 1


def test_mobius_spec_validation():
    with pytest.raises(InvalidArgument):
        MobiusSpec(0)
    with pytest.raises(InvalidArgument):
        MobiusSpec(2, 0.0, (1.0,), (0.0,))
    with pytest.raises(InvalidArgument):
        MobiusSpec(1, 0.0, (-1.0,), (0.0,))


@pytest.mark.parametrize("y0", sorted(TENSION_ORACLE))
def test_tension_closed_form_against_quadrature(y0):
    assert tension_coeff_omega(y0) == pytest.approx(TENSION_ORACLE[y0], rel=1e-15)


def test_tension_vanishes_at_infinity():
    assert tension_coeff_omega(1e8) < 1e-15

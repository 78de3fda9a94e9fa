import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import jv

from acstark.core import Grid, GridError, TWO_PI
from acstark.gratings import (
    ConditionUnachievable,
    GratingShape,
    GratingSpec,
    coefficient_power,
    discrete_coeffs,
    fourier_coeff,
    load_tabulated_profile,
    profile_value,
    render_mask,
    solve_equal_orders,
)

SHAPES = list(GratingShape)
AMPS = [0.3 * math.pi, math.pi, 1.16 * math.pi, 2 * math.pi]


def brute_coeff(shape, amp, zeta, n, m=200_000):
    # midpoint rule with many points: independent of the Gauss-Legendre path
    xi = (np.arange(m) + 0.5) * TWO_PI / m
    return np.mean(np.exp(1j * profile_value(shape, amp, xi - zeta) - 1j * n * xi))


def test_profile_examples():
    assert profile_value("triangle", TWO_PI, math.pi) == pytest.approx(TWO_PI)
    assert profile_value("square", math.pi, math.pi / 2) == pytest.approx(math.pi)
    assert profile_value("square", math.pi, 3 * math.pi / 2) == pytest.approx(0.0)
    assert profile_value("sine", 0.46 * math.pi, math.pi / 2) == pytest.approx(0.46 * math.pi)
    assert profile_value("saw", 1.0, math.pi) == pytest.approx(0.5)
    assert profile_value("sawr", 1.0, math.pi / 2) == pytest.approx(0.75)


@pytest.mark.parametrize("shape", SHAPES)
def test_profiles_are_periodic(shape):
    xi = np.linspace(-7, 7, 97) + 0.0123
    assert np.allclose(profile_value(shape, 2.3, xi + TWO_PI), profile_value(shape, 2.3, xi), atol=1e-12)


def test_unknown_shape():
    with pytest.raises(ValueError):
        profile_value("zigzag", 1.0, 0.0)
    with pytest.raises(ValueError):
        GratingShape.parse("hexagon")


def test_shape_aliases():
    assert GratingShape.parse("tri") is GratingShape.TRIANGLE
    assert GratingShape.parse("SAWR") is GratingShape.SAWTOOTH_REVERSED
    assert GratingShape.SQUARE.short == "square"


@pytest.mark.parametrize("amp", AMPS)
def test_closed_forms(amp):
    c0 = fourier_coeff("triangle", amp, 0.0, 0)
    assert abs(c0) == pytest.approx(abs(np.sinc(amp / 2 / math.pi)), abs=1e-12)
    if abs(c0) > 1e-6:
        expected = np.exp(1j * amp / 2) * np.sign(np.sinc(amp / 2 / math.pi))
        assert abs(c0 / abs(c0) - expected) < 1e-9
    sq = fourier_coeff("square", amp, 0.0, np.array([-1, 0, 1]))
    assert abs(sq[1]) == pytest.approx(abs(math.cos(amp / 2)), abs=1e-12)
    assert abs(sq[0]) == pytest.approx(2 / math.pi * abs(math.sin(amp / 2)), abs=1e-12)
    assert abs(sq[2]) == pytest.approx(2 / math.pi * abs(math.sin(amp / 2)), abs=1e-12)
    orders = np.arange(-6, 7)
    sine = fourier_coeff("sine", amp, 0.0, orders)
    assert np.allclose(np.abs(sine), np.abs(jv(orders, amp)), atol=1e-12)


@pytest.mark.parametrize("shape", SHAPES)
def test_against_brute_force_quadrature(shape):
    # zeta on a cell boundary keeps every jump between midpoints
    zeta = TWO_PI * 12_731 / 200_000
    for n in (-2, 0, 1, 3):
        ref = brute_coeff(shape, 1.3 * math.pi, zeta, n)
        assert abs(fourier_coeff(shape, 1.3 * math.pi, zeta, n) - ref) < 1e-8


def test_triangle_zero_order_vanishes_at_multiples_of_2pi():
    for m in (1, 2, 3):
        for zeta in (0.0, 0.7):
            assert abs(fourier_coeff("triangle", TWO_PI * m, zeta, 0)) < 1e-10


@pytest.mark.parametrize("shape", SHAPES)
@pytest.mark.parametrize("zeta", [0.1, 1.0, 2.5])
def test_shift_law(shape, zeta):
    n = np.arange(-8, 9)
    c0 = fourier_coeff(shape, 1.7, 0.0, n)
    cz = fourier_coeff(shape, 1.7, zeta, n)
    assert np.max(np.abs(cz - c0 * np.exp(-1j * n * zeta))) < 1e-8


@pytest.mark.parametrize("shape", SHAPES)
def test_parseval(shape):
    for amp in AMPS:
        assert coefficient_power(shape, amp, 0.3) == pytest.approx(1.0, abs=1e-9)


def test_order_bounds():
    with pytest.raises(ValueError):
        fourier_coeff("sine", 1.0, 0.0, 40)
    with pytest.raises(ValueError):
        fourier_coeff("sine", 1.0, 0.0, 0.5)


def test_damping_reduces_orders():
    plain = abs(fourier_coeff("triangle", math.pi, 0.0, 0))
    damped = abs(fourier_coeff("triangle", math.pi, 0.0, 0, gamma_acs=0.1))
    assert damped < plain


def test_discrete_coeffs_converge_for_sine():
    orders, c = discrete_coeffs("sine", 1.2, 0.3, 64)
    ref = fourier_coeff("sine", 1.2, 0.3, orders[(orders >= -20) & (orders <= 20)])
    assert np.allclose(c[(orders >= -20) & (orders <= 20)], ref, atol=1e-13)


def test_solve_triangle_equal_orders():
    sol = solve_equal_orders("triangle", "equal_012")
    assert sol.amplitude / math.pi == pytest.approx(1.16, abs=0.01)
    c = fourier_coeff("triangle", sol.amplitude, 0.0, np.array([-1, 0, 1]))
    assert np.ptp(np.abs(c)) < 1e-8


def test_solve_sine_matches_bessel_root():
    sol = solve_equal_orders("sine", "equal_012")
    assert sol.amplitude == pytest.approx(1.4347, abs=1e-4)
    assert jv(0, sol.amplitude) == pytest.approx(jv(1, sol.amplitude), abs=1e-8)
    assert sol.common_magnitude == pytest.approx(0.547, abs=0.005)


def test_solve_zero_c0():
    assert solve_equal_orders("triangle", "zero_c0").amplitude == pytest.approx(TWO_PI, abs=1e-8)
    assert solve_equal_orders("square", "zero_c0").amplitude == pytest.approx(math.pi, abs=1e-8)


def test_solve_square_antisym():
    sol = solve_equal_orders("square", "square_antisym")
    assert sol.amplitude / math.pi == pytest.approx(0.639, abs=1e-3)
    cm1, c0, c1 = fourier_coeff("square", sol.amplitude, sol.zeta, np.array([-1, 0, 1]))
    assert abs(cm1 - c0) < 1e-8 and abs(c0 + c1) < 1e-8


def test_solve_unachievable():
    with pytest.raises(ConditionUnachievable):
        solve_equal_orders("sawtooth", "equal_012")
    with pytest.raises(ValueError):
        solve_equal_orders("triangle", "nonsense")


def test_render_mask(grid):
    spec = GratingSpec("triangle", (0.0, 9.6), TWO_PI)
    mask = render_mask(spec, grid)
    assert mask.shape == grid.shape
    assert np.all(mask >= 0) and mask.max() <= TWO_PI + 1e-12
    assert not np.any(render_mask(GratingSpec("square", (0.0, 9.6), 0.0), grid))
    # period along z
    shifted = render_mask(spec, Grid(z_min=grid.z_min + TWO_PI / 9.6, z_max=grid.z_max + TWO_PI / 9.6))
    assert np.allclose(shifted, mask, atol=1e-9)


def test_render_mask_transverse_period():
    g = Grid(nz=16, nx=128, x_min=0.0, x_max=8 * TWO_PI / 75.4)
    mask = render_mask(GratingSpec("sine", (150.8, 0.0), 1.0), g)
    period = TWO_PI / 150.8
    assert period == pytest.approx(0.0417, abs=1e-4)
    assert np.allclose(mask[: g.nx // 2], mask[g.nx // 2:], atol=1e-12)


def test_render_mask_nyquist_error(grid):
    with pytest.raises(GridError, match="40"):
        render_mask(GratingSpec("saw", (0.0, 40.0), 1.0), grid)


def test_half_period_twin_cancels_triangle(grid):
    a = GratingSpec("triangle", (0.0, 9.6), TWO_PI, 0.3)
    total = render_mask(a, grid) + render_mask(a.shifted_half_period(), grid)
    assert np.allclose(total, TWO_PI, atol=1e-9)


def test_tabulated_profile(tmp_path):
    xi = TWO_PI * np.arange(256) / 256
    path = tmp_path / "tri.csv"
    np.savetxt(path, np.column_stack([xi, np.abs(2 * (xi / TWO_PI - np.floor(xi / TWO_PI + 0.5)))]), delimiter=",")
    prof = load_tabulated_profile(path)
    c_tab = fourier_coeff(prof, 1.16 * math.pi, 0.0, 0)
    c_ref = fourier_coeff("triangle", 1.16 * math.pi, 0.0, 0)
    assert abs(c_tab - c_ref) < 1e-4


@settings(max_examples=40, deadline=None)
@given(
    shape=st.sampled_from(SHAPES),
    amp=st.floats(0.0, 4 * math.pi),
    zeta=st.floats(-10, 10),
)
def test_parseval_property(shape, amp, zeta):
    # truncated sum never exceeds one and the smooth profiles are already converged
    orders = np.arange(-32, 33)
    power = np.sum(np.abs(fourier_coeff(shape, amp, zeta, orders)) ** 2)
    assert power <= 1 + 1e-12
    if shape in (GratingShape.SINE,):
        assert power == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(shape=st.sampled_from(SHAPES), amp=st.floats(0.0, 3 * math.pi), zeta=st.floats(0, TWO_PI))
def test_shift_law_property(shape, amp, zeta):
    n = np.arange(-4, 5)
    assert np.allclose(fourier_coeff(shape, amp, zeta, n), fourier_coeff(shape, amp, 0.0, n) * np.exp(-1j * n * zeta), atol=1e-9)

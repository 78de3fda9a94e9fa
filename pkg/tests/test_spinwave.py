import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acstark.core import TWO_PI, Grid, GridError, SpinWave
from acstark.gratings import GratingShape, GratingSpec, discrete_coeffs, fourier_coeff, render_mask
from acstark.spinwave import (
    apply_mask,
    from_kspace,
    readable_fraction,
    series_transform,
    to_kspace,
    write_kspace_csv,
)


def gaussian_wave(grid, width=4.0, k=0.0):
    z = grid.z
    return SpinWave(np.exp(-z**2 / (2 * width**2) + 1j * k * z), grid)


def commensurate_grid(k, per_period=8, periods=64):
    length = periods * TWO_PI / k
    return Grid(z_min=-length / 2, z_max=length / 2, nz=periods * per_period)


def test_constant_phase_is_global(grid):
    s = gaussian_wave(grid)
    out = apply_mask(s, np.full(grid.nz, 0.7))
    assert np.allclose(out.s, s.s * np.exp(0.7j))
    assert out.energy() == pytest.approx(s.energy(), rel=1e-12)


def test_damping_rule(grid):
    s = gaussian_wave(grid)
    out = apply_mask(s, np.full(grid.nz, TWO_PI), gamma_acs=0.1)
    assert np.allclose(np.abs(out.s), np.abs(s.s) * math.exp(-0.2 * math.pi))
    assert math.exp(-0.2 * math.pi) == pytest.approx(0.533, abs=1e-3)


def test_mask_grid_mismatch(grid):
    with pytest.raises(GridError):
        apply_mask(gaussian_wave(grid), np.zeros(grid.nz + 1))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.0, 100.0))
def test_pure_phase_preserves_norm(seed, scale):
    grid = Grid()
    s = gaussian_wave(grid)
    mask = scale * np.random.default_rng(seed).standard_normal(grid.nz)
    out = apply_mask(s, mask)
    assert out.energy() == pytest.approx(s.energy(), rel=1e-12)


def test_kspace_roundtrip_and_parseval():
    grid = Grid(nz=256, nx=8, x_min=-1, x_max=1)
    rng = np.random.default_rng(3)
    s = SpinWave(rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape), grid)
    view = to_kspace(s)
    assert view.energy() == pytest.approx(s.energy(), rel=1e-12)
    assert np.max(np.abs(from_kspace(view).s - s.s)) < 1e-12


def test_kspace_peaks(grid):
    flat = to_kspace(SpinWave(np.ones(grid.nz), grid))
    assert flat.peak() == (0.0, 0.0)
    view = to_kspace(gaussian_wave(grid, k=3.0))
    assert abs(view.peak()[1] - 3.0) <= view.dkz


def test_sawtooth_displaces_by_its_wavevector():
    grid = Grid(nz=1024)
    spec = GratingSpec("saw", (0.0, 22.0), TWO_PI)
    view = to_kspace(apply_mask(gaussian_wave(grid), render_mask(spec, grid)))
    assert abs(view.peak()[1] - 22.0) <= view.dkz


def test_identity_series(grid):
    view = to_kspace(gaussian_wave(grid))
    out = series_transform(view, {0: 1.0}, (0.0, 9.6))
    assert np.array_equal(out.s_k, view.s_k)


def _equivalence_error(shape, amp, k=9.6, per_period=8):
    grid = commensurate_grid(k, per_period)
    s = gaussian_wave(grid, width=5.0)
    spec = GratingSpec(shape, (0.0, k), amp)
    direct = to_kspace(apply_mask(s, render_mask(spec, grid)))
    orders, c = discrete_coeffs(shape, amp, 0.0, per_period)
    series = series_transform(to_kspace(s), (orders, c), (0.0, k))
    return np.linalg.norm(series.s_k - direct.s_k) / np.linalg.norm(direct.s_k)


@pytest.mark.parametrize("shape", list(GratingShape))
@pytest.mark.parametrize("amp", [math.pi, 1.16 * math.pi, 2 * math.pi])
def test_real_and_kspace_paths_agree(shape, amp):
    assert _equivalence_error(shape, amp) < 1e-8


def test_series_with_quadrature_coefficients_for_sine():
    # band-limited profile: quadrature orders equal the sampled orders
    grid = commensurate_grid(9.6, 16)
    s = gaussian_wave(grid, width=5.0)
    spec = GratingSpec("sine", (0.0, 9.6), 1.4347)
    direct = to_kspace(apply_mask(s, render_mask(spec, grid)))
    n = np.arange(-12, 13)
    series = series_transform(to_kspace(s), (n, fourier_coeff("sine", 1.4347, 0.0, n)), (0.0, 9.6))
    assert np.linalg.norm(series.s_k - direct.s_k) / np.linalg.norm(direct.s_k) < 1e-6


def test_square_pi_empties_zero_order():
    c = fourier_coeff("square", math.pi, 0.0, np.arange(-9, 10))
    assert abs(c[9]) < 1e-12
    assert np.all(np.abs(c[1::2]) < 1e-12)  # every even order vanishes


def test_fractional_shift_warns(grid):
    view = to_kspace(gaussian_wave(grid))
    with pytest.warns(UserWarning, match="non-integer"):
        out = series_transform(view, {1: 1.0}, (0.0, 1.2345 * view.dkz))
    assert out.energy() == pytest.approx(view.energy(), rel=1e-9)


def test_readable_fraction_stored_wave(params):
    grid = Grid()
    assert readable_fraction(gaussian_wave(grid, width=8.0), params) > 0.95
    assert readable_fraction(gaussian_wave(grid, width=8.0, k=2.0), params) < 0.01


def test_readable_fraction_after_triangle(params):
    grid = Grid()
    s = gaussian_wave(grid, width=8.0)
    a = GratingSpec("triangle", (0.0, 9.6), TWO_PI)
    shifted = apply_mask(s, render_mask(a, grid))
    assert readable_fraction(shifted, params) < 0.01
    restored = apply_mask(shifted, render_mask(a.shifted_half_period(), grid))
    assert readable_fraction(restored, params) >= 0.9 * readable_fraction(s, params)
    damped = apply_mask(apply_mask(s, render_mask(a, grid), 0.1), render_mask(a.shifted_half_period(), grid), 0.1)
    assert readable_fraction(damped, params) == pytest.approx(readable_fraction(s, params), rel=1e-9)


def test_readable_fraction_zero_wave(params, grid):
    assert readable_fraction(SpinWave.zeros(grid), params) == 0.0


def test_kspace_csv(tmp_path):
    grid = Grid(nz=16, nx=4, x_min=0, x_max=1)
    path = tmp_path / "snap.csv"
    write_kspace_csv(to_kspace(SpinWave(np.ones(grid.shape), grid)), path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("kx,") and lines[1].startswith("kz,")
    assert len(lines) == 2 + 4
    assert len(lines[2].split(",")) == 16

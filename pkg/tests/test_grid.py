import math

import numpy as np
import pytest

from hartreebox.errors import InvalidParameterError
from hartreebox.grid import (
    Grid,
    WaveFunction,
    gaussian_packet,
    inner,
    l2_norm,
    lp_norm,
    sobolev_norm,
    weighted_norm,
)

from oracles import random_wavefunction, sobolev_norm_dense, weighted_norm_direct


@pytest.fixture
def grid():
    return Grid(1, 256, 32.0)


def test_grid_validation():
    with pytest.raises(InvalidParameterError):
        Grid(4, 64, 32.0)
    with pytest.raises(InvalidParameterError):
        Grid(1, 48, 32.0)  # not a power of two
    with pytest.raises(InvalidParameterError):
        Grid(1, 4, 32.0)  # too small
    with pytest.raises(InvalidParameterError):
        Grid(1, 64, -1.0)


def test_lattice_conventions(grid):
    assert grid.axis_coords[0] == -16.0
    assert grid.dx == 32.0 / 256
    # Nyquist on the negative side
    k = grid.axis_wavenumbers
    assert k.min() == pytest.approx(-2 * np.pi * 128 / 32.0)
    assert k.max() == pytest.approx(2 * np.pi * 127 / 32.0)


def test_wavefunction_rejects_nan(grid):
    vals = np.ones(grid.shape, dtype=complex)
    vals[3] = np.nan
    with pytest.raises(InvalidParameterError):
        WaveFunction(grid, vals)


def test_l2_norm_constant_field(grid):
    psi = WaveFunction(grid, np.ones(grid.shape))
    assert l2_norm(psi) == pytest.approx(math.sqrt(32.0), rel=1e-13)


def test_l2_norm_zero(grid):
    assert l2_norm(WaveFunction(grid, np.zeros(grid.shape))) == 0.0


def test_l2_norm_homogeneity(grid):
    psi = gaussian_packet(grid, 2.0)
    scaled = WaveFunction(grid, 3.0 * psi.values / l2_norm(psi))
    assert l2_norm(scaled) == pytest.approx(3.0, rel=1e-12)


def test_sobolev_norm_s0_equals_l2(grid):
    rng = np.random.default_rng(0)
    psi = random_wavefunction(grid, rng)
    assert sobolev_norm(psi, 0.0) == pytest.approx(l2_norm(psi), rel=1e-12)


def test_sobolev_norm_plane_wave(grid):
    k0 = grid.axis_wavenumbers[12]
    psi = WaveFunction(grid, np.exp(1j * k0 * grid.axis_coords))
    expect = (1.0 + k0**2) * math.sqrt(32.0)
    assert sobolev_norm(psi, 2.0) == pytest.approx(expect, rel=1e-12)


def test_sobolev_norm_gaussian_dense_oracle(grid):
    psi = gaussian_packet(grid, 2.0, momentum=[0.7])
    assert sobolev_norm(psi, 1.0) == pytest.approx(
        sobolev_norm_dense(psi, 1.0), rel=1e-10
    )


def test_sobolev_rejects_negative_index(grid):
    psi = gaussian_packet(grid, 2.0)
    with pytest.raises(InvalidParameterError):
        sobolev_norm(psi, -0.5)


def test_weighted_norm_single_cell(grid):
    vals = np.zeros(grid.shape, dtype=complex)
    center = 128  # x = 0, <x> = 1
    vals[center] = 0.4
    psi = WaveFunction(grid, vals)
    assert weighted_norm(psi, 2.0) == pytest.approx(0.4 * math.sqrt(grid.cell_volume))


def test_weighted_norm_gamma0_and_oracle(grid):
    psi = gaussian_packet(grid, 2.0)
    assert weighted_norm(psi, 0.0) == pytest.approx(l2_norm(psi), rel=1e-13)
    assert weighted_norm(psi, 1.0) == pytest.approx(
        weighted_norm_direct(psi, 1.0), rel=1e-12
    )


def test_lp_norms(grid):
    psi = WaveFunction(grid, np.ones(grid.shape))
    assert lp_norm(psi, 4.0) == pytest.approx(32.0**0.25, rel=1e-13)
    vals = np.zeros(grid.shape, dtype=complex)
    vals[10] = 0.7
    assert lp_norm(WaveFunction(grid, vals), math.inf) == pytest.approx(0.7)
    rng = np.random.default_rng(1)
    psi = random_wavefunction(grid, rng)
    assert lp_norm(psi, 2.0) == pytest.approx(l2_norm(psi), rel=1e-13)
    with pytest.raises(InvalidParameterError):
        lp_norm(psi, 0.5)


def test_parseval(grid):
    rng = np.random.default_rng(2)
    for _ in range(5):
        psi = random_wavefunction(grid, rng)
        fourier_side = math.sqrt(
            grid.cell_volume
            * float(np.sum(np.abs(np.fft.fftn(psi.values)) ** 2))
            / grid.npoints
        )
        assert fourier_side == pytest.approx(l2_norm(psi), rel=1e-12)


def test_sobolev_monotonicity(grid):
    rng = np.random.default_rng(3)
    psi = random_wavefunction(grid, rng)
    values = [sobolev_norm(psi, s) for s in (0.0, 0.5, 1.0, 2.0)]
    assert all(a <= b * (1 + 1e-13) for a, b in zip(values, values[1:]))


def test_norm_homogeneity_all(grid):
    rng = np.random.default_rng(4)
    psi = random_wavefunction(grid, rng)
    scaled = WaveFunction(grid, 2.5 * psi.values)
    for fn in (
        l2_norm,
        lambda p: sobolev_norm(p, 1.5),
        lambda p: weighted_norm(p, 1.0),
        lambda p: lp_norm(p, 3.0),
    ):
        assert fn(scaled) == pytest.approx(2.5 * fn(psi), rel=1e-12)


def test_inner_product_and_2d_grid():
    g2 = Grid(2, 16, 8.0)
    rng = np.random.default_rng(5)
    a = random_wavefunction(g2, rng)
    b = random_wavefunction(g2, rng)
    ip = inner(a, b)
    assert inner(b, a) == pytest.approx(np.conj(ip))
    assert inner(a, a).real == pytest.approx(l2_norm(a) ** 2, rel=1e-12)

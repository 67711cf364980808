import math

import numpy as np
import pytest

from hartreebox.errors import InvalidParameterError
from hartreebox.grid import Grid, WaveFunction, gaussian_packet, inner, l2_norm
from hartreebox.operators import (
    HamiltonianOp,
    apply_hamiltonian,
    bound_state_check,
    hartree_energy,
    spectral_range,
)
from hartreebox.potentials import (
    ExternalPotentialSpec,
    PairPotentialSpec,
    evaluate_external,
)

from oracles import dense_hamiltonian, hartree_energy_quadrature, random_wavefunction


@pytest.fixture
def grid():
    return Grid(1, 256, 32.0)


@pytest.fixture
def free_h(grid):
    return HamiltonianOp(grid, np.zeros(grid.shape))


def test_plane_wave_eigenfunction(grid, free_h):
    k0 = grid.axis_wavenumbers[9]
    psi = WaveFunction(grid, np.exp(1j * k0 * grid.axis_coords))
    out = apply_hamiltonian(free_h, psi)
    assert np.abs(out.values - 0.5 * k0**2 * psi.values).max() < 1e-10

    const = WaveFunction(grid, np.ones(grid.shape))
    assert np.abs(apply_hamiltonian(free_h, const).values).max() < 1e-12

    h_shift = HamiltonianOp(grid, 0.7 * np.ones(grid.shape))
    out2 = apply_hamiltonian(h_shift, psi)
    assert np.abs(out2.values - (0.5 * k0**2 + 0.7) * psi.values).max() < 1e-10


def test_linearity_and_self_adjointness(grid):
    V = evaluate_external(ExternalPotentialSpec("gaussian_well", -0.4, width=2.0), grid)
    h = HamiltonianOp(grid, V)
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = random_wavefunction(grid, rng)
        b = random_wavefunction(grid, rng)
        lhs = inner(a, apply_hamiltonian(h, b))
        rhs = inner(apply_hamiltonian(h, a), b)
        assert abs(lhs - rhs) < 1e-10 * l2_norm(a) * l2_norm(b)
    # linearity over a random complex combination
    z1, z2 = 0.3 - 1.1j, -0.7 + 0.2j
    a, b = random_wavefunction(grid, rng), random_wavefunction(grid, rng)
    combo = WaveFunction(grid, z1 * a.values + z2 * b.values)
    direct = apply_hamiltonian(h, combo).values
    split = z1 * apply_hamiltonian(h, a).values + z2 * apply_hamiltonian(h, b).values
    assert np.abs(direct - split).max() < 1e-12 * np.abs(direct).max()


def test_hartree_energy_trivials(grid, free_h):
    zero = WaveFunction(grid, np.zeros(grid.shape))
    vz = PairPotentialSpec("zero")
    assert hartree_energy(free_h, vz, zero) == 0.0
    k0 = grid.axis_wavenumbers[5]
    psi = WaveFunction(grid, np.exp(1j * k0 * grid.axis_coords))
    assert hartree_energy(free_h, vz, psi) == pytest.approx(
        0.5 * k0**2 * 32.0, rel=1e-12
    )


def test_hartree_energy_quadrature_oracle(grid):
    V = evaluate_external(ExternalPotentialSpec("gaussian_well", -0.2, width=3.0), grid)
    h = HamiltonianOp(grid, V)
    vspec = PairPotentialSpec("gaussian", amplitude=0.8, width=1.3,
                              lq_index=1.0, smoothness_index=2.0)
    psi = gaussian_packet(grid, 2.0, momentum=[0.6])
    expected = hartree_energy_quadrature(
        h, lambda d: 0.8 * np.exp(-(d**2) / (2 * 1.3**2)), psi
    )
    assert hartree_energy(h, vspec, psi) == pytest.approx(expected, rel=1e-8)


def test_energy_reduces_to_sobolev_seminorm(grid, free_h):
    psi = gaussian_packet(grid, 1.5, momentum=[0.8])
    fhat = np.fft.fftn(psi.values)
    seminorm_sq = grid.cell_volume * float(
        np.sum(grid.k2 * np.abs(fhat) ** 2)
    ) / grid.npoints
    e = hartree_energy(free_h, PairPotentialSpec("zero"), psi)
    assert e == pytest.approx(0.5 * seminorm_sq, rel=1e-12)


def test_spectral_range_free(free_h, grid):
    sr = spectral_range(free_h, 1e-8)
    lam_max_expect = 0.5 * (math.pi * grid.n / grid.box_length) ** 2
    assert sr.lambda_max == pytest.approx(lam_max_expect, rel=0.01)
    assert abs(sr.lambda_min) < 1e-7
    assert sr.residual <= 1e-8


def test_spectral_range_constant_shift(grid, free_h):
    h1 = HamiltonianOp(grid, np.ones(grid.shape))
    a = spectral_range(free_h, 1e-7)
    b = spectral_range(h1, 1e-7)
    assert b.lambda_min == pytest.approx(a.lambda_min + 1.0, abs=1e-6)
    assert b.lambda_max == pytest.approx(a.lambda_max + 1.0, rel=1e-9)


def test_spectral_range_dense_oracle():
    grid = Grid(1, 128, 32.0)
    V = evaluate_external(ExternalPotentialSpec("gaussian_well", -0.5, width=2.0), grid)
    h = HamiltonianOp(grid, V)
    sr = spectral_range(h, 1e-8)
    evals = np.linalg.eigvalsh(dense_hamiltonian(h))
    assert sr.lambda_min == pytest.approx(evals[0], abs=1e-6)
    assert sr.lambda_max == pytest.approx(evals[-1], abs=1e-6)


def test_rayleigh_quotients_bracketed(grid):
    V = evaluate_external(ExternalPotentialSpec("gaussian_well", -0.3, width=2.0), grid)
    h = HamiltonianOp(grid, V)
    sr = spectral_range(h, 1e-7)
    rng = np.random.default_rng(1)
    for _ in range(20):
        psi = random_wavefunction(grid, rng)
        q = inner(psi, apply_hamiltonian(h, psi)).real / l2_norm(psi) ** 2
        assert sr.lambda_min - 1e-7 <= q <= sr.lambda_max + 1e-7


def test_bound_state_check(grid, free_h):
    assert bound_state_check(free_h)["has_negative_eigenvalue"] is False

    deep = HamiltonianOp(
        grid, evaluate_external(ExternalPotentialSpec("gaussian_well", -5.0, width=2.0), grid)
    )
    rep = bound_state_check(deep)
    assert rep["has_negative_eigenvalue"] is True
    small = Grid(1, 128, 32.0)
    deep_small = HamiltonianOp(
        small, evaluate_external(ExternalPotentialSpec("gaussian_well", -5.0, width=2.0), small)
    )
    evals = np.linalg.eigvalsh(dense_hamiltonian(deep_small))
    assert evals[0] < 0

    repulsive = HamiltonianOp(
        grid, evaluate_external(ExternalPotentialSpec("inverse_power", 0.5, decay_rate=4.0), grid)
    )
    assert bound_state_check(repulsive)["has_negative_eigenvalue"] is False


def test_spectral_range_rejects_bad_tol(free_h):
    with pytest.raises(InvalidParameterError):
        spectral_range(free_h, -1.0)

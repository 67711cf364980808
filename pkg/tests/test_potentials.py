import math

import numpy as np
import pytest

from hartreebox.errors import InvalidParameterError
from hartreebox.grid import Grid, WaveFunction, gaussian_packet
from hartreebox.potentials import (
    EffectivePotentialField,
    ExternalPotentialSpec,
    PairPotentialSpec,
    check_conditions,
    effective_potential,
    evaluate_external,
    nls_effective_potential,
    wt_norms,
)

from oracles import periodic_convolution_direct, random_wavefunction, sup_derivative_fd


@pytest.fixture
def grid():
    return Grid(1, 256, 32.0)


def gauss_pair(v0=1.0, w=1.2):
    return PairPotentialSpec("gaussian", amplitude=v0, width=w,
                             lq_index=1.0, smoothness_index=2.0)


def test_external_families(grid):
    assert np.all(evaluate_external(ExternalPotentialSpec("zero"), grid) == 0.0)
    v = evaluate_external(
        ExternalPotentialSpec("inverse_power", 1.0, decay_rate=2.0), grid
    )
    i0 = np.argmin(np.abs(grid.axis_coords))
    assert v[i0] == pytest.approx(1.0)
    # <sqrt(3)>^2 = 4; check the family formula at the nearest lattice point
    i3 = np.argmin(np.abs(grid.axis_coords - math.sqrt(3)))
    x3 = grid.axis_coords[i3]
    assert v[i3] == pytest.approx(1.0 / (1.0 + x3**2), rel=1e-13)
    assert v[i3] == pytest.approx(0.25, abs=5e-3)
    with pytest.raises(InvalidParameterError):
        ExternalPotentialSpec("coulomb")


def test_effective_potential_zero_state(grid):
    psi = WaveFunction(grid, np.zeros(grid.shape))
    w = effective_potential(gauss_pair(), psi)
    assert np.all(w.values == 0.0)


def test_effective_potential_narrow_kernel(grid):
    # near-delta kernel of unit mass reproduces the density
    w_kern = 2 * grid.dx
    mass = math.sqrt(2 * math.pi) * w_kern
    vspec = PairPotentialSpec("gaussian", amplitude=1.0 / mass, width=w_kern,
                              lq_index=1.0, smoothness_index=2.0)
    psi = gaussian_packet(grid, 3.0, momentum=[0.5])
    w = effective_potential(vspec, psi)
    density = np.abs(psi.values) ** 2
    assert np.abs(w.values - density).max() < 0.02 * density.max()


def test_effective_potential_gaussian_closed_form():
    grid = Grid(1, 512, 64.0)
    vspec = gauss_pair(1.0, 1.5)
    psi = gaussian_packet(grid, 2.0)
    w = effective_potential(vspec, psi)
    x = grid.coords[0]
    wr = 2.0 / math.sqrt(2)  # width of |psi|^2
    wc = math.sqrt(1.5**2 + wr**2)
    exact = math.sqrt(2 * math.pi) * (1.5 * wr / wc) * np.exp(-(x**2) / (2 * wc**2))
    assert np.abs(w.values - exact).max() / exact.max() < 1e-6


def test_effective_potential_direct_sum_oracle(grid):
    rng = np.random.default_rng(3)
    psi = random_wavefunction(grid, rng)
    vspec = gauss_pair(0.7, 1.2)
    w = effective_potential(vspec, psi)
    direct = periodic_convolution_direct(
        lambda d: 0.7 * np.exp(-(d**2) / (2 * 1.2**2)),
        np.abs(psi.values) ** 2,
        grid,
    )
    assert np.abs(w.values - direct).max() / np.abs(direct).max() < 1e-12


def test_effective_potential_translation_equivariance(grid):
    rng = np.random.default_rng(4)
    psi = random_wavefunction(grid, rng)
    shift = 17
    vspec = gauss_pair()
    w = effective_potential(vspec, psi)
    psi_shifted = WaveFunction(grid, np.roll(psi.values, shift))
    w_shifted = effective_potential(vspec, psi_shifted)
    assert np.abs(np.roll(w.values, shift) - w_shifted.values).max() < 1e-12


def test_effective_potential_quadratic_scaling(grid):
    psi = gaussian_packet(grid, 2.0)
    w1 = effective_potential(gauss_pair(), psi)
    w2 = effective_potential(gauss_pair(), WaveFunction(grid, 2.0 * psi.values))
    assert np.abs(w2.values - 4.0 * w1.values).max() < 1e-12 * w2.values.max()


def test_effective_potential_positivity_and_young(grid):
    rng = np.random.default_rng(5)
    for _ in range(3):
        psi = random_wavefunction(grid, rng)
        vspec = gauss_pair(0.9, 1.4)
        w = effective_potential(vspec, psi)
        assert w.values.min() >= -1e-12 * w.values.max()
        v_l1 = 0.9 * math.sqrt(2 * math.pi) * 1.4
        psi_sup = np.abs(psi.values).max()
        assert wt_norms(w)["linf"] <= v_l1 * psi_sup**2 * (1 + 1e-10)


def test_nls_effective_potential(grid):
    psi = gaussian_packet(grid, 2.0)
    w = nls_effective_potential(1.5, psi)
    assert np.abs(w.values - np.abs(psi.values) ** 3).max() < 1e-14


def test_check_conditions_arithmetic():
    ext = ExternalPotentialSpec("zero")
    pair = PairPotentialSpec("gaussian", amplitude=1.0, width=1.0,
                             lq_index=1.2, smoothness_index=1.5)
    rep = check_conditions(ext, pair, 3)
    assert rep["v_smoothness_margin"] == pytest.approx(1.5 - 3 / 2.4)
    assert rep["v_integrability"] is True
    assert rep["q_range"] is True

    rep2 = check_conditions(
        ExternalPotentialSpec("inverse_power", 1.0, decay_rate=7.0), pair, 3
    )
    assert rep2["V_decay"] is False  # needs sigma >= 7.5

    pair_q2 = PairPotentialSpec("gaussian", amplitude=1.0, width=1.0,
                                lq_index=2.0, smoothness_index=3.0)
    assert check_conditions(ext, pair_q2, 3)["q_range"] is False


def test_check_conditions_negative_part():
    attractive = ExternalPotentialSpec("gaussian_well", -0.01, width=2.0)
    rep = check_conditions(attractive, PairPotentialSpec("zero"), 3,
                           alpha=2.5, delta=0.1)
    assert rep["V_negative_part_small"] is True
    # closed-form sup matches a brute-force grid maximum
    r = np.linspace(0, 200, 400001)
    brute = float(np.max(0.01 * np.exp(-(r**2) / 8.0) * (1 + r**2) ** 1.25))
    assert rep["V_negative_part_sup"] == pytest.approx(brute, rel=1e-6)
    deep = ExternalPotentialSpec("gaussian_well", -5.0, width=2.0)
    rep2 = check_conditions(deep, PairPotentialSpec("zero"), 3)
    assert rep2["V_negative_part_small"] is False


def test_wt_norms_zero_and_cosine(grid):
    zero = EffectivePotentialField(grid, np.zeros(grid.shape))
    n0 = wt_norms(zero)
    assert n0["linf"] == 0.0 and n0["w1inf"] == 0.0 and n0["max_second"] == 0.0

    k0 = grid.axis_wavenumbers[6]
    w = EffectivePotentialField(grid, np.cos(k0 * grid.axis_coords))
    n = wt_norms(w)
    assert n["linf"] == pytest.approx(1.0, rel=1e-12)
    assert n["w1inf"] == pytest.approx(1.0 + abs(k0), rel=1e-10)
    assert n["max_second"] == pytest.approx(k0**2, rel=1e-10)


def test_wt_norms_gaussian_fd_oracle(grid):
    field = np.exp(-grid.coords[0] ** 2 / (2 * 2.0**2))
    w = EffectivePotentialField(grid, field)
    n = wt_norms(w)
    d1 = sup_derivative_fd(field, grid.dx, 1)
    d2 = sup_derivative_fd(field, grid.dx, 2)
    assert n["w1inf"] == pytest.approx(1.0 + d1, rel=1e-6)
    assert n["max_second"] == pytest.approx(max(d1, d2), rel=1e-6)

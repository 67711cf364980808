import numpy as np
import pytest

from hartreebox.errors import CoverageError, InvalidParameterError
from hartreebox.grid import Grid, WaveFunction, gaussian_packet, l2_norm
from hartreebox.operators import HamiltonianOp, hartree_energy
from hartreebox.potentials import ExternalPotentialSpec, PairPotentialSpec, evaluate_external
from hartreebox.propagators import (
    StepperConfig,
    WSeries,
    evolve_hartree,
    evolve_linear,
    evolve_nls,
    evolve_td_linear,
)

from oracles import free_gaussian_evolution


@pytest.fixture
def grid():
    return Grid(1, 256, 32.0)


@pytest.fixture
def free_h(grid):
    return HamiltonianOp(grid, np.zeros(grid.shape))


def pair(v0=0.4, w=1.5):
    return PairPotentialSpec("gaussian", amplitude=v0, width=w,
                             lq_index=1.0, smoothness_index=2.0)


def test_stepper_validation():
    with pytest.raises(InvalidParameterError):
        StepperConfig(dt=-0.1)
    with pytest.raises(InvalidParameterError):
        StepperConfig(dt=0.01, record_stride=0)
    with pytest.raises(InvalidParameterError):
        StepperConfig(dt=0.01, scheme="lie")


def test_kinetic_phase_sanity(grid, free_h):
    psi = gaussian_packet(grid, 2.0)
    # lambda_max = (pi n / L)^2 / 2 ~ 316, so dt = 0.1 wraps the phase
    with pytest.raises(InvalidParameterError):
        evolve_linear(free_h, psi, 1.0, StepperConfig(dt=0.1))


def test_record_stride_must_divide(grid, free_h):
    psi = gaussian_packet(grid, 2.0)
    with pytest.raises(InvalidParameterError):
        evolve_linear(free_h, psi, 1.0, StepperConfig(dt=0.005, record_stride=3))


def test_free_gaussian_closed_form():
    grid = Grid(1, 1024, 80.0)
    h = HamiltonianOp(grid, np.zeros(grid.shape))
    psi0 = gaussian_packet(grid, 2.0)
    traj = evolve_linear(h, psi0, 10.0, StepperConfig(dt=1e-3, record_stride=10000))
    exact = free_gaussian_evolution(grid, 2.0, 10.0)
    err = np.abs(traj.snapshots[-1].values - exact).max() / np.abs(exact).max()
    assert err < 1e-6


def test_linear_l2_conservation_and_reversal(grid):
    V = evaluate_external(ExternalPotentialSpec("gaussian_well", -0.3, width=2.0), grid)
    h = HamiltonianOp(grid, V)
    psi0 = gaussian_packet(grid, 2.0, momentum=[0.5])
    cfg = StepperConfig(dt=5e-3, record_stride=100)
    traj = evolve_linear(h, psi0, 5.0, cfg)
    for snap in traj.snapshots:
        assert abs(l2_norm(snap) / l2_norm(psi0) - 1.0) < 1e-12
    # reversal through the time-dependent stepper with zero W
    ws = WSeries.zero(grid, 0.0, 5.0)
    back = evolve_td_linear(h, ws, traj.snapshots[-1], 5.0, 0.0, cfg)
    assert np.abs(back.values - psi0.values).max() < 1e-10


def test_hartree_reduces_to_linear(grid, free_h):
    psi0 = gaussian_packet(grid, 2.0, momentum=[0.4])
    cfg = StepperConfig(dt=5e-3, record_stride=200)
    t_lin = evolve_linear(free_h, psi0, 3.0, cfg)
    t_har = evolve_hartree(free_h, PairPotentialSpec("zero"), psi0, 3.0, cfg)
    for a, b in zip(t_lin.snapshots, t_har.snapshots):
        assert np.abs(a.values - b.values).max() < 1e-12


def test_hartree_l2_and_energy(grid, free_h):
    vspec = pair()
    psi0 = gaussian_packet(grid, 2.0, amplitude=1.0)
    cfg = StepperConfig(dt=2e-3, record_stride=250)
    traj = evolve_hartree(free_h, vspec, psi0, 4.0, cfg)
    l2s = [l2_norm(s) for s in traj.snapshots]
    assert max(abs(x / l2s[0] - 1.0) for x in l2s) < 1e-12
    energies = [hartree_energy(free_h, vspec, s) for s in traj.snapshots]
    drift = max(abs(e - energies[0]) for e in energies)
    assert drift / abs(energies[0]) < 1e-6


def test_hartree_energy_richardson(grid, free_h):
    vspec = pair(0.8, 1.0)
    psi0 = gaussian_packet(grid, 2.0, momentum=[0.6])
    drifts = {}
    for dt in (4e-3, 2e-3):
        cfg = StepperConfig(dt=dt, record_stride=int(round(1.0 / dt)))
        traj = evolve_hartree(free_h, vspec, psi0, 4.0, cfg)
        es = [hartree_energy(free_h, vspec, s) for s in traj.snapshots]
        drifts[dt] = max(abs(e - es[0]) for e in es) / abs(es[0])
    ratio = drifts[4e-3] / drifts[2e-3]
    assert 3.5 <= ratio <= 4.5


def test_td_linear_replay_and_roundtrip(grid, free_h):
    vspec = pair(0.4, 1.5)
    psi0 = gaussian_packet(grid, 2.0, momentum=[0.5], amplitude=0.7)
    cfg = StepperConfig(dt=5e-3, record_stride=1)
    traj = evolve_hartree(free_h, vspec, psi0, 2.0, cfg)
    ws = traj.w_series()
    # the fixed-point identity: replaying the recorded potentials under the
    # linear stepper reproduces the nonlinear trajectory
    replay = evolve_td_linear(free_h, ws, psi0, 0.0, 2.0, cfg)
    assert np.abs(replay.values - traj.snapshots[-1].values).max() < 1e-12
    back = evolve_td_linear(free_h, ws, replay, 2.0, 0.0, cfg)
    assert np.abs(back.values - psi0.values).max() < 1e-10


def test_td_linear_replay_strided_self_convergence(grid, free_h):
    """With strided W recording the replay error is second order in dt."""
    vspec = pair(0.6, 1.5)
    psi0 = gaussian_packet(grid, 2.0, momentum=[0.5])
    errs = {}
    for dt in (8e-3, 4e-3):
        cfg = StepperConfig(dt=dt, record_stride=2)
        traj = evolve_hartree(free_h, vspec, psi0, 2.0, cfg)
        replay = evolve_td_linear(free_h, traj.w_series(), psi0, 0.0, 2.0,
                                  StepperConfig(dt=dt))
        errs[dt] = np.abs(replay.values - traj.snapshots[-1].values).max()
    ratio = errs[8e-3] / errs[4e-3]
    assert 2.5 <= ratio <= 6.0


def test_td_linear_coverage_error(grid, free_h):
    ws = WSeries.zero(grid, 0.0, 1.0)
    psi = gaussian_packet(grid, 2.0)
    with pytest.raises(CoverageError):
        evolve_td_linear(free_h, ws, psi, 0.0, 2.0, StepperConfig(dt=5e-3))


def test_nls_zero_state_and_conservation(grid, free_h):
    zero = WaveFunction(grid, np.zeros(grid.shape))
    cfg = StepperConfig(dt=5e-3, record_stride=100)
    traj = evolve_nls(free_h, 1.5, zero, 1.0, cfg)
    assert all(l2_norm(s) == 0.0 for s in traj.snapshots)

    psi0 = gaussian_packet(grid, 2.0, amplitude=0.5)
    traj2 = evolve_nls(free_h, 1.0, psi0, 2.0, cfg)
    l2s = [l2_norm(s) for s in traj2.snapshots]
    assert max(abs(x / l2s[0] - 1.0) for x in l2s) < 1e-12


def test_nls_small_amplitude_linear_limit(grid, free_h):
    cfg = StepperConfig(dt=5e-3, record_stride=400)
    gaps = []
    for amp in (0.2, 0.1):
        psi0 = gaussian_packet(grid, 2.0, amplitude=amp)
        t_nls = evolve_nls(free_h, 1.0, psi0, 2.0, cfg)
        t_lin = evolve_linear(free_h, psi0, 2.0, cfg)
        gaps.append(
            np.abs(t_nls.snapshots[-1].values - t_lin.snapshots[-1].values).max() / amp
        )
    # relative deviation shrinks ~ quadratically in amplitude (W ~ |psi|^2)
    assert gaps[1] < gaps[0] * 0.35


def test_unitarity_long_run(grid, free_h):
    psi0 = gaussian_packet(grid, 2.0)
    cfg = StepperConfig(dt=1e-3, record_stride=10000)
    traj = evolve_linear(free_h, psi0, 10.0, cfg)
    assert abs(l2_norm(traj.snapshots[-1]) / l2_norm(psi0) - 1.0) < 1e-10

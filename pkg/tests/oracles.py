"""Independent oracle implementations used to freeze expected values.

Each oracle deliberately avoids the code path it checks: norms by explicit
DFT sums, convolutions by O(n^2) direct summation, functional calculus by
dense eigendecomposition, free evolution by the closed-form Gaussian
solution, and derivatives by high-order finite differences.
"""

import numpy as np

from hartreebox.grid import Grid, WaveFunction


def random_wavefunction(grid: Grid, rng, normalize: bool = True) -> WaveFunction:
    vals = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    if normalize:
        vals /= np.sqrt(grid.cell_volume) * np.linalg.norm(vals)
    return WaveFunction(grid, vals)


def dft_matrix(n: int) -> np.ndarray:
    j = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(j, j) / n)


def sobolev_norm_dense(psi: WaveFunction, s: float) -> float:
    """H^s norm via an explicit DFT-matrix sum (1D only)."""
    grid = psi.grid
    assert grid.dim == 1
    F = dft_matrix(grid.n)
    coeffs = F @ psi.values
    k = grid.axis_wavenumbers
    weighted = (1.0 + k**2) ** s * np.abs(coeffs) ** 2
    return float(np.sqrt(grid.cell_volume * weighted.sum() / grid.n))


def weighted_norm_direct(psi: WaveFunction, gamma: float) -> float:
    grid = psi.grid
    total = 0.0
    flat_r = grid.radius.ravel()
    flat_v = psi.values.ravel()
    for r, v in zip(flat_r, flat_v):
        total += (1.0 + r * r) ** gamma * abs(v) ** 2
    return float(np.sqrt(grid.cell_volume * total))


def periodic_convolution_direct(kernel_1d, density: np.ndarray, grid: Grid) -> np.ndarray:
    """O(n^2) periodic convolution sum, 1D, with the cell-volume measure."""
    assert grid.dim == 1
    n, L = grid.n, grid.box_length
    xs = grid.axis_coords
    out = np.zeros(n)
    for i in range(n):
        d = xs[i] - xs
        d = (d + 0.5 * L) % L - 0.5 * L  # periodic displacement
        out[i] = np.sum(kernel_1d(d) * density) * grid.dx
    return out


def dense_hamiltonian(h) -> np.ndarray:
    """Columns of H assembled via the matrix-free application."""
    n = h.grid.npoints
    eye = np.eye(n, dtype=complex)
    cols = [h.apply_array(eye[:, j].reshape(h.grid.shape)).ravel() for j in range(n)]
    return np.column_stack(cols)


def dense_window_matrix(h, window) -> np.ndarray:
    hd = dense_hamiltonian(h)
    evals, evecs = np.linalg.eigh(hd)
    return (evecs * window.derivative(evals, 0)) @ evecs.conj().T


def dense_speed_bound(h, window) -> float:
    """Operator norm of |grad| g(H) via dense linear algebra."""
    gd = dense_window_matrix(h, window)
    n = h.grid.npoints
    F = np.fft.fft(np.eye(n), axis=0)
    Finv = np.conj(F.T) / n
    absk = np.abs(h.grid.axis_wavenumbers)
    grad_abs = Finv @ (absk[:, None] * F)
    return float(np.linalg.norm(grad_abs @ gd, ord=2))


def dense_commutator_norm(h, window, w_field: np.ndarray) -> float:
    gd = dense_window_matrix(h, window)
    W = np.diag(w_field.ravel())
    C = gd @ W - W @ gd
    return float(np.linalg.norm(C, ord=2))


def free_gaussian_evolution(grid: Grid, width: float, t: float, momentum=None) -> np.ndarray:
    """Closed-form free evolution of exp(-|x|^2/(2 w^2) + i k0 x).

    Solves i d_t psi = -(1/2) Lap psi on R^d; valid on the box while the
    wrapped tails are negligible.
    """
    momentum = np.zeros(grid.dim) if momentum is None else np.asarray(momentum, float)
    s = 1.0 + 1j * t / width**2
    out = np.ones(grid.shape, dtype=complex)
    for axis in range(grid.dim):
        x = grid.coords[axis] - momentum[axis] * t
        out = out * np.exp(-(x**2) / (2.0 * width**2 * s)) / np.sqrt(s)
    phase = sum(momentum[a] * grid.coords[a] for a in range(grid.dim))
    out = out * np.exp(1j * (phase - 0.5 * float(momentum @ momentum) * t))
    return out


def hartree_energy_quadrature(h, kernel_1d, psi: WaveFunction) -> float:
    """Direct-sum energy with a dense DFT gradient and O(n^2) convolution."""
    grid = psi.grid
    assert grid.dim == 1
    F = dft_matrix(grid.n)
    coeffs = F @ psi.values / grid.n
    k = grid.axis_wavenumbers
    grad = np.conj(F.T) @ (1j * k * coeffs)
    density = np.abs(psi.values) ** 2
    kinetic = 0.5 * grid.dx * float(np.sum(np.abs(grad) ** 2))
    external = grid.dx * float(np.sum(h.potential * density))
    conv = periodic_convolution_direct(kernel_1d, density, grid)
    interaction = 0.5 * grid.dx * float(np.sum(conv * density))
    return kinetic + external + interaction


def sup_derivative_fd(field: np.ndarray, dx: float, order: int) -> float:
    """Sup norm of the order-th derivative by 8th-order centered stencils (1D)."""
    if order == 1:
        stencil = np.array([3, -32, 168, -672, 0, 672, -168, 32, -3]) / (840.0 * dx)
    elif order == 2:
        stencil = np.array(
            [-9, 128, -1008, 8064, -14350, 8064, -1008, 128, -9]
        ) / (5040.0 * dx**2)
    else:
        raise ValueError("orders 1 and 2 only")
    n = field.size
    out = np.zeros(n)
    for shift, c in zip(range(-4, 5), stencil):
        out += c * np.roll(field, -shift)
    return float(np.abs(out).max())

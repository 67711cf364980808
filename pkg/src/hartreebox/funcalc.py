"""Functional calculus g(H), the propagation speed bound, and commutator
norm diagnostics.

Two interchangeable backends apply a smooth spectral window to a state:
a Chebyshev expansion (production path, matrix-free Clenshaw recurrence)
and a resolvent quadrature against an almost-analytic extension of the
window (kept for cross-validation; every resolvent solve is iterative and
matrix-free). Dense eigendecompositions exist only in the test suite.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.fft import dct

from .errors import ConvergenceError, InvalidParameterError, ToleranceNotMetError
from .grid import WaveFunction
from .operators import HamiltonianOp, SpectralRange, spectral_range

__all__ = [
    "smooth_step",
    "SpectralWindow",
    "make_window",
    "window_from_plateau",
    "ChebyshevWindow",
    "apply_window_cheb",
    "HsQuadSpec",
    "apply_window_hs",
    "SpeedBoundResult",
    "speed_bound",
    "commutator_norm",
]


# ---------------------------------------------------------------------------
# Smooth mollified step and spectral windows
# ---------------------------------------------------------------------------

# Derivatives of the logistic sigmoid as polynomials in s = sigmoid(y):
# d/dy sigma_n = P_n'(s) * s(1-s), seeded with P_1 = s(1-s).
_SIGMOID_POLYS = [None, np.array([0.0, 1.0, -1.0])]  # coefficients, ascending powers
while len(_SIGMOID_POLYS) < 6:
    p = _SIGMOID_POLYS[-1]
    dp = p[1:] * np.arange(1, p.size)
    nxt = np.convolve(dp, _SIGMOID_POLYS[1])
    _SIGMOID_POLYS.append(nxt)


def _sigmoid_derivatives(y: np.ndarray, max_order: int) -> list:
    """[sigma(y), sigma'(y), ..., sigma^(max_order)(y)], computed stably."""
    s = np.empty_like(y)
    pos = y >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-y[pos]))
    e = np.exp(y[~pos])
    s[~pos] = e / (1.0 + e)
    out = [s]
    for n in range(1, max_order + 1):
        out.append(np.polynomial.polynomial.polyval(s, _SIGMOID_POLYS[n]))
    return out


def smooth_step(u, order: int = 0):
    """C-infinity monotone step: 0 for u <= 0, 1 for u >= 1.

    Returns the order-th derivative (order in 0..5). The profile is the
    standard bump-quotient transition exp-flat at both ends, so all
    derivatives vanish at u = 0 and u = 1.
    """
    if not 0 <= order <= 5:
        raise InvalidParameterError("smooth_step supports derivative orders 0..5")
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    out = np.zeros_like(u)
    if order == 0:
        out[u >= 0.5] = 1.0  # overwritten on the interior band below
    # beyond this margin the transition is flat to double precision
    interior = (u > 1e-3) & (u < 1.0 - 1e-3)
    if np.any(interior):
        ui = u[interior]
        um = 1.0 - ui
        y = 1.0 / um - 1.0 / ui
        sig = _sigmoid_derivatives(y, order)
        if order == 0:
            out[interior] = sig[0]
        else:
            y1 = um**-2 + ui**-2
            y2 = 2.0 * um**-3 - 2.0 * ui**-3
            y3 = 6.0 * um**-4 + 6.0 * ui**-4
            y4 = 24.0 * um**-5 - 24.0 * ui**-5
            y5 = 120.0 * um**-6 + 120.0 * ui**-6
            s1, s2, s3, s4, s5 = (sig + [None] * 5)[1:6]
            if order == 1:
                val = s1 * y1
            elif order == 2:
                val = s2 * y1**2 + s1 * y2
            elif order == 3:
                val = s3 * y1**3 + 3 * s2 * y1 * y2 + s1 * y3
            elif order == 4:
                val = (
                    s4 * y1**4
                    + 6 * s3 * y1**2 * y2
                    + 3 * s2 * y2**2
                    + 4 * s2 * y1 * y3
                    + s1 * y4
                )
            else:
                val = (
                    s5 * y1**5
                    + 10 * s4 * y1**3 * y2
                    + 15 * s3 * y1 * y2**2
                    + 10 * s3 * y1**2 * y3
                    + 10 * s2 * y2 * y3
                    + 5 * s2 * y1 * y4
                    + s1 * y5
                )
            out[interior] = val
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class SpectralWindow:
    """Smooth energy window: 1 on the plateau, 0 outside (e1, e2).

    Both shoulders have the same width; the profile is the smooth_step
    transition, so the window is real, C-infinity, and valued in [0, 1].
    """

    e1: float
    e2: float
    shoulder: float
    n_samples: int = 2048

    def __post_init__(self):
        if not self.e1 < self.e2:
            raise InvalidParameterError("window interval is degenerate")
        if not 0 < self.shoulder <= 0.5 * (self.e2 - self.e1):
            raise InvalidParameterError("shoulder width must lie in (0, (e2-e1)/2]")

    @property
    def plateau(self) -> tuple:
        return (self.e1 + self.shoulder, self.e2 - self.shoulder)

    @property
    def support(self) -> tuple:
        return (self.e1, self.e2)

    def derivative(self, lam, order: int = 0):
        lam = np.asarray(lam, dtype=float)
        scalar = lam.ndim == 0
        lam = np.atleast_1d(lam)
        out = np.zeros_like(lam)
        w = self.shoulder
        p1, p2 = self.plateau
        left = (lam > self.e1) & (lam < p1)
        right = (lam > p2) & (lam < self.e2)
        if order == 0:
            out[(lam >= p1) & (lam <= p2)] = 1.0
        if np.any(left):
            out[left] = smooth_step((lam[left] - self.e1) / w, order) / w**order
        if np.any(right):
            out[right] = smooth_step((self.e2 - lam[right]) / w, order) * (-1.0 / w) ** order
        return float(out[0]) if scalar else out

    def __call__(self, lam):
        return self.derivative(lam, 0)

    @cached_property
    def samples(self) -> dict:
        """Tabulated values and derivatives up to order 3 across the support."""
        lam = np.linspace(self.e1, self.e2, self.n_samples)
        return {
            "energy": lam,
            "value": self.derivative(lam, 0),
            "d1": self.derivative(lam, 1),
            "d2": self.derivative(lam, 2),
            "d3": self.derivative(lam, 3),
        }


def make_window(e1: float, e2: float, plateau_fraction: float) -> SpectralWindow:
    """Window supported in (e1, e2) whose plateau covers the given fraction."""
    if not e1 < e2:
        raise InvalidParameterError("window interval is degenerate")
    if not 0.0 < plateau_fraction < 1.0:
        raise InvalidParameterError("plateau_fraction must lie in (0, 1)")
    shoulder = 0.5 * (1.0 - plateau_fraction) * (e2 - e1)
    return SpectralWindow(e1, e2, shoulder)


def window_from_plateau(p1: float, p2: float, shoulder: float) -> SpectralWindow:
    """Window whose plateau is exactly [p1, p2] with the given shoulder width."""
    if not p1 < p2:
        raise InvalidParameterError("plateau interval is degenerate")
    return SpectralWindow(p1 - shoulder, p2 + shoulder, shoulder)


# ---------------------------------------------------------------------------
# Chebyshev backend
# ---------------------------------------------------------------------------

_range_cache: "weakref.WeakKeyDictionary[HamiltonianOp, SpectralRange]" = (
    weakref.WeakKeyDictionary()
)


def _spectral_bounds(h: HamiltonianOp, tol: float = 1e-7) -> SpectralRange:
    sr = _range_cache.get(h)
    if sr is None or sr.residual > tol:
        sr = spectral_range(h, tol)
        _range_cache[h] = sr
    return sr


class ChebyshevWindow:
    """Reusable Chebyshev approximation of a window applied to H.

    Coefficients come from a DCT of the window sampled at Chebyshev nodes
    over [lambda_min, lambda_max]; the application is a Clenshaw recurrence
    with matrix-free H products. The truncation error bound is the absolute
    coefficient tail computed past the requested degree.
    """

    def __init__(
        self,
        h: HamiltonianOp,
        window: SpectralWindow,
        degree: int = None,
        *,
        bounds: SpectralRange = None,
        target_tail: float = 1e-9,
        extra: int = 96,
        max_degree: int = 65536,
    ):
        if degree is not None and degree < 8:
            raise InvalidParameterError("Chebyshev degree must be >= 8")
        self.h = h
        self.window = window
        sr = bounds if bounds is not None else _spectral_bounds(h)
        span = sr.lambda_max - sr.lambda_min
        margin = max(sr.residual, 1e-9 * max(span, 1.0))
        self.lo = sr.lambda_min - margin
        self.hi = sr.lambda_max + margin

        # one high-resolution coefficient table; the needed degree is read off
        # its absolute tail rather than grown by trial applications
        m_full = max_degree + 1 + extra
        theta = (np.arange(m_full) + 0.5) * np.pi / m_full
        lam = self.lo + (self.hi - self.lo) * 0.5 * (np.cos(theta) + 1.0)
        f = self.window.derivative(lam, 0)
        coeffs = dct(f, type=2) / m_full  # c_k = (2/m) sum f_j cos(k theta_j)
        abs_c = np.abs(coeffs)
        tail_from = np.cumsum(abs_c[::-1])[::-1]  # tail_from[k] = sum_{j>=k} |c_j|
        if degree is None:
            ok = np.nonzero(tail_from <= target_tail)[0]
            degree = int(min(max(64, ok[0] if ok.size else max_degree), max_degree))
        self._coeffs = coeffs[: degree + 1]
        tail = abs_c[degree + 1 : degree + 1 + max(extra, 8)]
        # coefficient tail plus a continuation allowance at the observed floor
        self.error_bound = float(
            tail_from[degree + 1] + 8.0 * tail[-8:].max(initial=0.0)
            if degree + 1 < m_full
            else 0.0
        )
        self.degree = degree

    def _scaled_apply(self, values: np.ndarray) -> np.ndarray:
        alpha = 2.0 / (self.hi - self.lo)
        beta = -(self.hi + self.lo) / (self.hi - self.lo)
        return alpha * self.h.apply_array(values) + beta * values

    def apply_array(self, values: np.ndarray) -> np.ndarray:
        c = self._coeffs
        bk1 = np.zeros_like(values)
        bk2 = np.zeros_like(values)
        for k in range(self.degree, 0, -1):
            bk = 2.0 * self._scaled_apply(bk1) - bk2 + c[k] * values
            bk2 = bk1
            bk1 = bk
        return self._scaled_apply(bk1) - bk2 + 0.5 * c[0] * values

    def apply(self, psi: WaveFunction) -> WaveFunction:
        self.h.grid.check_same(psi.grid)
        return WaveFunction(psi.grid, self.apply_array(psi.values))


@dataclass(frozen=True)
class ChebApplyResult:
    state: WaveFunction
    error_bound: float
    degree: int


def apply_window_cheb(
    h: HamiltonianOp,
    window: SpectralWindow,
    psi: WaveFunction,
    degree: int = None,
    *,
    tol: float = None,
    bounds: SpectralRange = None,
) -> ChebApplyResult:
    """Apply g(H) to psi via Chebyshev expansion.

    With degree=None the degree is grown until the coefficient tail is
    negligible. If tol is given and the achieved tail bound exceeds it,
    a ToleranceNotMetError reports the achieved bound.
    """
    applier = ChebyshevWindow(h, window, degree, bounds=bounds)
    if tol is not None and applier.error_bound > tol:
        raise ToleranceNotMetError(
            f"Chebyshev tail bound {applier.error_bound:.3e} exceeds tol {tol:.3e} "
            f"at degree {applier.degree}",
            achieved=applier.error_bound,
            requested=tol,
        )
    return ChebApplyResult(applier.apply(psi), applier.error_bound, applier.degree)


# ---------------------------------------------------------------------------
# Resolvent-quadrature backend
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HsQuadSpec:
    """Quadrature plan for the resolvent representation of g(H).

    order is the almost-analytic extension order (2..4). nx is the base
    Gauss-Legendre node count per spectral panel; rows close to the real
    axis automatically densify their x-nodes to resolve the resolvent,
    whose spectral width equals the distance to the axis. ny is the node
    count per logarithmic panel in the imaginary direction. The strip
    |Im z| < y_min is dropped and certified from the bottom-row solves;
    y0 is the vertical extent (both default to fractions of the shoulder).
    """

    order: int = 3
    nx: int = 48
    ny: int = 20
    y0: float = None
    y_min: float = None
    solver_tol: float = 1e-8
    solver_maxiter: int = 4096
    refine: float = 0.7

    def __post_init__(self):
        if self.order not in (2, 3, 4):
            raise InvalidParameterError("extension order must be 2, 3 or 4")
        if self.nx < 4 or self.ny < 4:
            raise InvalidParameterError("node counts must be >= 4")
        if not 0.3 <= self.refine < 1.0:
            raise InvalidParameterError("refine fraction must lie in [0.3, 1)")


@dataclass(frozen=True)
class HsApplyResult:
    state: WaveFunction
    quad_error: float
    solver_error: float
    error_bound: float
    nodes: int


def _cut(y: np.ndarray, y0: float, order: int = 0) -> np.ndarray:
    """Even C-infinity cutoff: 1 for |y| <= y0/2, 0 for |y| >= y0."""
    u = (y0 - np.abs(y)) / (0.5 * y0)
    if order == 0:
        return smooth_step(u, 0)
    # d/dy = -sign(y) * (2/y0) * d/du
    return -np.sign(y) * (2.0 / y0) * smooth_step(u, 1)


@lru_cache(maxsize=256)
def _leggauss_cached(n: int) -> tuple:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _gauss_panel(a: float, b: float, n: int) -> tuple:
    x, w = _leggauss_cached(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


class _ShiftedResolventSolver:
    """Matrix-free iterative solves of (z - H) phi = psi for many shifts z.

    All shifts share one right-hand side, so a single Lanczos space of H
    (with full reorthogonalization) serves every solve: phi_z ~ Q y_z with
    (z I - T_m) y_z = ||psi|| e1. The per-shift residual is certified from
    the recurrence, beta_{m+1} |y_z[m-1]|, plus the algebraic residual of
    the tridiagonal solve; the space grows until every shift meets tol.
    """

    def __init__(self, h: HamiltonianOp, rhs: np.ndarray, tol: float, max_m: int = 4096):
        self.h = h
        self.shape = h.grid.shape
        self.n = h.grid.npoints
        self.tol = tol
        self.max_m = min(max_m, self.n)
        b = rhs.ravel().astype(np.complex128)
        self.b_norm = float(np.linalg.norm(b))
        self._Q = np.empty((min(160, self.max_m), self.n), dtype=np.complex128)
        self._alphas = np.empty(self._Q.shape[0])
        self._betas = np.empty(self._Q.shape[0])
        self.m = 0
        self._exhausted = False
        if self.b_norm > 0:
            self._q = b / self.b_norm
            self._grow(min(96, self.max_m))

    def _grow(self, m_target: int):
        while self.m < m_target and not self._exhausted:
            if self.m >= self._Q.shape[0]:
                extra = min(self._Q.shape[0], self.max_m - self._Q.shape[0])
                if extra > 0:
                    self._Q = np.vstack([self._Q, np.empty((extra, self.n), complex)])
                    self._alphas = np.append(self._alphas, np.empty(extra))
                    self._betas = np.append(self._betas, np.empty(extra))
            i = self.m
            self._Q[i] = self._q
            r = self.h.apply_array(self._q.reshape(self.shape)).ravel()
            self._alphas[i] = np.vdot(self._q, r).real
            r -= self._alphas[i] * self._q
            if i > 0:
                r -= self._betas[i - 1] * self._Q[i - 1]
            r -= self._Q[: i + 1].T @ (self._Q[: i + 1].conj() @ r)
            beta = float(np.linalg.norm(r))
            self._betas[i] = beta
            self.m = i + 1
            if beta < 1e-12 or self.m >= self.max_m:
                self._exhausted = True
            else:
                self._q = r / beta

    def _solve_tridiag(self, shifts: np.ndarray, m: int) -> tuple:
        """Vectorized Thomas elimination of (z I - T_m) y = ||b|| e1 per shift.

        Works in (m, K) layout so each elimination step touches contiguous
        rows. Returns y as (K, m) plus the certified residual per shift.
        """
        K = shifts.size
        a = self._alphas[:m]
        bet = self._betas[: m - 1] if m > 1 else np.empty(0)
        diag = shifts[None, :] - a[:, None]  # (m, K)
        c_prime = np.empty((m, K), dtype=np.complex128)
        d_prime = np.empty((m, K), dtype=np.complex128)
        c_prime[0] = (bet[0] / diag[0]) if m > 1 else 0.0
        d_prime[0] = self.b_norm / diag[0]
        for j in range(1, m):
            denom = diag[j] - bet[j - 1] * c_prime[j - 1]
            if j < m - 1:
                c_prime[j] = bet[j] / denom
            d_prime[j] = (bet[j - 1] * d_prime[j - 1]) / denom
        y = np.empty((m, K), dtype=np.complex128)
        y[m - 1] = d_prime[m - 1]
        for j in range(m - 2, -1, -1):
            y[j] = d_prime[j] + c_prime[j] * y[j + 1]
        # algebraic residual of the tridiagonal system, plus Krylov truncation
        res0 = np.abs(diag[0] * y[0] + (-bet[0] * y[1] if m > 1 else 0.0) - self.b_norm)
        if m > 1:
            res_sq = res0**2
            res_sq += np.abs(-bet[m - 2] * y[m - 2] + diag[m - 1] * y[m - 1]) ** 2
            for j in range(1, m - 1):
                res_sq += np.abs(
                    -bet[j - 1] * y[j - 1] + diag[j] * y[j] - bet[j] * y[j + 1]
                ) ** 2
            res_alg = np.sqrt(res_sq)
        else:
            res_alg = res0
        res_krylov = self._betas[m - 1] * np.abs(y[m - 1])
        return np.ascontiguousarray(y.T), res_krylov + res_alg

    def solve_all(self, shifts: np.ndarray) -> tuple:
        """Solve every shift; returns (y (K, m), Q (m, n), residuals (K,))."""
        if self.b_norm == 0.0:
            return (
                np.zeros((shifts.size, 1), complex),
                np.zeros((1, self.n), complex),
                np.zeros(shifts.size),
            )
        target = self.tol * self.b_norm
        while True:
            y, resid = self._solve_tridiag(shifts, self.m)
            if resid.max(initial=0.0) <= target or self._exhausted or self.m >= self.max_m:
                break
            self._grow(min(self.max_m, int(self.m * 1.6) + 16))
        if resid.max(initial=0.0) > target and not self._exhausted:
            raise ConvergenceError(
                f"shifted resolvent solves stalled at m={self.m} "
                f"(worst residual {resid.max():.3e})",
                residual=float(resid.max()),
                iterations=self.m,
            )
        return y, self._Q[: self.m], resid


def _hs_nodes(window, quad, scale):
    """Quadrature nodes (z, weight*coefficient) at a node-density scale.

    Returns (shifts, coefficients, bottom_mask, bottom_data) where the
    bottom row (|Im z| = y_min) also feeds the dropped-strip certificate.
    """
    w = window
    n_ord = quad.order
    delta = w.shoulder
    y0 = quad.y0 if quad.y0 is not None else delta
    y_min = quad.y_min if quad.y_min is not None else 0.005 * delta
    if not 0 < y_min < y0:
        raise InvalidParameterError("y_min must lie in (0, y0)")
    nfact = math.factorial(n_ord)

    nx = max(8, int(round(quad.nx * scale)))
    ny = max(4, int(round(quad.ny * scale)))

    p1, p2 = w.plateau
    shoulders = [(w.e1, p1), (p2, w.e2)]

    zs, cs, bottom = [], [], []

    # series-remainder term (1/2) g^(n+1)(x) (iy)^n/n! cut(y) over y_min<|y|<y0;
    # Gauss-Legendre in log|y| accumulates rows toward the axis, and each
    # row refines its x-nodes to resolve the resolvent width |Im z|
    t_nodes, t_wts = _gauss_panel(math.log(y_min), math.log(y0), 2 * ny)
    order_rows = np.argsort(t_nodes)
    for sign in (1, -1):
        for idx, row in enumerate(order_rows):
            y = math.exp(t_nodes[row])
            wy = t_wts[row] * y  # dy = y dlog(y)
            cut_val = _cut(np.array([y]), y0, 0)[0]
            if cut_val == 0.0:
                continue
            nx_row = max(nx, min(int(4.0 * delta / y) + 8, 1600))
            nx_row = ((nx_row + 15) // 16) * 16
            for a, b in shoulders:
                xn, xw = _gauss_panel(a, b, nx_row)
                dg = w.derivative(xn, n_ord + 1)
                keep = dg != 0.0
                coeff = (
                    xw[keep] * wy * 0.5 * dg[keep]
                    * (1j * sign * y) ** n_ord / nfact * cut_val
                )
                for xi, cj, wxi, gi in zip(xn[keep], coeff, xw[keep], dg[keep]):
                    zs.append(complex(xi, sign * y))
                    cs.append(cj)
                    # strip certificate data: weight * |g^(n+1)| for bottom row
                    bottom.append(wxi * abs(gi) if idx == 0 else 0.0)

    # cutoff term (i/2) [sum_k g^(k)(x)(iy)^k/k!] cut'(y) over y0/2<|y|<y0
    x_panels_all = [(w.e1, p1), (p1, p2), (p2, w.e2)]
    for sign in (1, -1):
        yn, yw = _gauss_panel(0.5 * y0, y0, max(ny, 6))
        yn = sign * yn
        cutp = _cut(yn, y0, 1)
        for a, b in x_panels_all:
            xn, xw = _gauss_panel(a, b, nx)
            derivs = [w.derivative(xn, k) for k in range(n_ord + 1)]
            for i, (xi, wxi) in enumerate(zip(xn, xw)):
                series = sum(
                    derivs[k][i] * (1j * yn) ** k / math.factorial(k)
                    for k in range(n_ord + 1)
                )
                coeffs = 0.5j * series * cutp
                for yj, wyj, cj in zip(yn, np.abs(yw), coeffs):
                    if cj != 0.0:
                        zs.append(complex(xi, yj))
                        cs.append(wxi * wyj * cj)
                        bottom.append(0.0)

    return (
        np.asarray(zs, dtype=np.complex128),
        np.asarray(cs, dtype=np.complex128),
        np.asarray(bottom),
        y_min,
    )


def apply_window_hs(
    h: HamiltonianOp,
    window: SpectralWindow,
    psi: WaveFunction,
    quad: HsQuadSpec = HsQuadSpec(),
) -> HsApplyResult:
    """Apply g(H) to psi via resolvent quadrature.

    The window is extended off the real axis through its derivative series
    of the configured order times an even cutoff in the imaginary direction.
    All resolvent solves share one Krylov space (shifted-system Lanczos).
    The reported bound combines a coarse-vs-fine quadrature estimate, a
    certified bound for the dropped near-axis strip (obtained from the
    bottom-row resolvent norms, since ||R(x+iy) psi|| grows at most like
    y_min/y below the bottom row), and the accumulated solve residuals.
    """
    h.grid.check_same(psi.grid)
    grid = psi.grid
    zf, cf, bottom_f, y_min = _hs_nodes(window, quad, 1.0)
    zc, cc, _, _ = _hs_nodes(window, quad, quad.refine)
    solver = _ShiftedResolventSolver(h, psi.values, quad.solver_tol, quad.solver_maxiter)
    y_all, q_basis, resid = solver.solve_all(np.concatenate([zf, zc]))
    yf, yc = y_all[: zf.size], y_all[zf.size :]
    rf = resid[: zf.size]

    fine = ((cf @ yf) @ q_basis).reshape(grid.shape) * (-1.0 / np.pi)
    coarse = ((cc @ yc) @ q_basis).reshape(grid.shape) * (-1.0 / np.pi)

    sq = math.sqrt(grid.cell_volume)
    solver_err = float(np.sum(np.abs(cf) * rf / np.abs(zf.imag)) / np.pi) * sq
    # dropped strip: (1/(2 pi n!)) * (y_min^(n+1)/n) * int |g^(n+1)| ||R(x+-iy_min)psi|| dx
    nb = bottom_f > 0
    phi_norms = np.linalg.norm(yf[nb], axis=1) if np.any(nb) else np.zeros(0)
    strip_cert = float(
        np.sum(bottom_f[nb] * phi_norms)
        * y_min ** (quad.order + 1)
        / (2.0 * np.pi * math.factorial(quad.order) * quad.order)
    ) * sq
    quad_err = float(np.sqrt(grid.cell_volume * np.sum(np.abs(fine - coarse) ** 2)))
    bound = 3.0 * quad_err + solver_err + strip_cert + 1e-12
    return HsApplyResult(
        WaveFunction(grid, fine), quad_err, solver_err, bound, int(zf.size)
    )


# ---------------------------------------------------------------------------
# Speed bound and commutator norms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpeedBoundResult:
    """Largest group speed supported by an energy window."""

    k_i: float
    window: SpectralWindow
    iterations: int
    residual: float


def _power_iteration(apply_m, n_total, rng, tol, maxiter, stagnation: int = 0):
    """Largest eigenvalue of a PSD operator on flat vectors; returns
    (eigenvalue, residual, iterations).

    Stops when the eigenvector residual reaches tol, or (if stagnation > 0)
    when the Rayleigh quotient changes by less than tol over that many
    consecutive iterations; the final residual is reported either way, so
    a stagnation exit on a clustered spectrum stays honest.
    """
    v = rng.standard_normal(n_total) + 1j * rng.standard_normal(n_total)
    v /= np.linalg.norm(v)
    lam = 0.0
    res = math.inf
    flat = 0
    for it in range(1, maxiter + 1):
        w = apply_m(v)
        new_lam = float(np.vdot(v, w).real)
        res = float(np.linalg.norm(w - new_lam * v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, 0.0, it
        v = w / nw
        if abs(new_lam - lam) <= tol * max(abs(new_lam), 1e-300):
            flat += 1
        else:
            flat = 0
        lam = new_lam
        if res <= tol * max(abs(lam), 1e-300):
            return lam, res, it
        if stagnation and flat >= stagnation:
            return lam, res, it
    return lam, res, maxiter


def speed_bound(
    h: HamiltonianOp,
    window: SpectralWindow,
    tol: float,
    *,
    degree: int = None,
    maxiter: int = 2000,
    restarts: int = 2,
    seed: int = 11,
) -> SpeedBoundResult:
    """Operator norm of |grad| g(H), via power iteration on g(H)(-Lap)g(H).

    The returned residual combines the eigenvalue residual with the
    Chebyshev backend error so the certified bracket is honest.
    """
    if tol <= 0:
        raise InvalidParameterError("tolerance must be positive")
    # backend tail sized so the operator-approximation error stays below tol
    k2max_grid = float(h.grid.k2.max())
    tail = max(min(tol / (8.0 * max(k2max_grid, 1.0)), 1e-8), 1e-13)
    applier = ChebyshevWindow(h, window, degree, target_tail=tail)
    grid = h.grid
    shape, k2 = grid.shape, grid.k2

    def apply_m(vec):
        a = applier.apply_array(vec.reshape(shape))
        b = np.fft.ifftn(k2 * np.fft.fftn(a))
        return applier.apply_array(b).ravel()

    rng = np.random.default_rng(seed)
    best_lam, best_res, iters = 0.0, math.inf, 0
    for _ in range(max(1, restarts)):
        lam, res, it = _power_iteration(
            apply_m, grid.npoints, rng, tol, maxiter, stagnation=4
        )
        iters += it
        if lam > best_lam:
            best_lam, best_res = lam, res
    if not math.isfinite(best_res):
        raise ConvergenceError(
            f"speed-bound power iteration stalled (residual {best_res:.3e})",
            best_estimate=math.sqrt(max(best_lam, 0.0)),
            residual=best_res,
            iterations=iters,
        )
    k2max = float(k2.max())
    op_err = 2.0 * applier.error_bound * k2max + applier.error_bound**2 * k2max
    lam_resid = best_res + op_err
    k_i = math.sqrt(max(best_lam, 0.0))
    residual = lam_resid / (2.0 * k_i) if k_i > 0 else lam_resid
    return SpeedBoundResult(k_i, window, iters, float(residual))


def commutator_norm(
    h: HamiltonianOp,
    window: SpectralWindow,
    w_field: np.ndarray,
    probes: int = 16,
    *,
    restarts: int = 8,
    maxiter: int = 60,
    tol: float = 1e-5,
    degree: int = None,
    seed: int = 13,
) -> float:
    """Estimate || [g(H), W] || for a real multiplication field W.

    Uses random probes for a certified lower bound plus power iteration on
    the (PSD) square of the commutator, restarted from several random
    directions; every Rayleigh quotient along the way is itself a lower
    bound, so the reported value is the largest estimate found and the
    iteration stops on relative stagnation of the estimate.
    """
    if probes < 1:
        raise InvalidParameterError("need at least one probe vector")
    grid = h.grid
    w_arr = np.ascontiguousarray(w_field, dtype=np.float64)
    if w_arr.shape != grid.shape:
        raise InvalidParameterError("field shape does not match grid")
    applier = ChebyshevWindow(h, window, degree, target_tail=1e-7)
    shape = grid.shape

    def comm(vec):
        v = vec.reshape(shape)
        out = applier.apply_array(w_arr * v) - w_arr * applier.apply_array(v)
        return out.ravel()

    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(max(1, probes)):
        v = rng.standard_normal(grid.npoints) + 1j * rng.standard_normal(grid.npoints)
        v /= np.linalg.norm(v)
        best = max(best, float(np.linalg.norm(comm(v))))
    for _ in range(max(1, restarts)):
        v = rng.standard_normal(grid.npoints) + 1j * rng.standard_normal(grid.npoints)
        v /= np.linalg.norm(v)
        prev = 0.0
        for _ in range(maxiter):
            # [g(H), W] is anti-selfadjoint, so C*C = -C^2
            w = -comm(comm(v))
            lam = float(np.vdot(v, w).real)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            v = w / nw
            if lam > 0 and abs(lam - prev) <= tol * lam:
                prev = lam
                break
            prev = lam
        if prev > 0:
            best = max(best, math.sqrt(prev))
    return best

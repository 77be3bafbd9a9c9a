"""Per-step complex linear systems.

Every time step solves, for each field, a system of the form

    Avg(shift * I + diag(weights)) + scale * T

where ``T`` is the discrete fractional Laplacian and ``Avg`` is either the
identity or the compact average operator.  Small systems go through LAPACK
LU; large ones through restarted GMRES with FFT matvecs and a Strang
circulant preconditioner.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
import scipy.linalg

from cfgle.fracops import FracOperator, apply_average, average_matrix

__all__ = [
    "StepSystem",
    "SystemFactorization",
    "SingularSystemError",
    "KrylovConvergenceError",
    "SolveInfo",
    "assemble_dense",
    "factor_dense",
    "build_preconditioner",
    "system_matvec",
    "solve_krylov",
    "gmres",
]

SINGULAR_RTOL = 1e-14


class SingularSystemError(np.linalg.LinAlgError):
    """Raised when LU hits a pivot below ``SINGULAR_RTOL * max|A|``."""


class KrylovConvergenceError(RuntimeError):
    def __init__(self, best_residual: float, iterations: int, tol: float):
        self.best_residual = best_residual
        self.iterations = iterations
        self.tol = tol
        super().__init__(
            f"GMRES did not reach relative residual {tol:.1e} in {iterations} "
            f"iterations (best {best_residual:.3e})")


@dataclass(frozen=True)
class StepSystem:
    scalar_shift: complex
    toeplitz_scale: complex
    diag_weights: np.ndarray
    uses_average: bool = False

    def __post_init__(self):
        if self.toeplitz_scale.real <= 0:
            raise ValueError(
                f"Toeplitz coefficient must have positive real part, got {self.toeplitz_scale}")

    @property
    def size(self) -> int:
        return len(self.diag_weights)


@dataclass(frozen=True)
class SystemFactorization:
    mode: Literal["dense-LU", "krylov"]
    size: int
    lu_data: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)
    precond: np.ndarray | None = field(default=None, repr=False)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.mode != "dense-LU":
            raise TypeError("only dense factorizations solve directly")
        return scipy.linalg.lu_solve(self.lu_data, rhs, check_finite=False)

    def apply_preconditioner(self, r: np.ndarray) -> np.ndarray:
        if self.precond is None:
            raise TypeError("no circulant preconditioner attached")
        return np.fft.ifft(np.fft.fft(r) / self.precond)


def _check_sizes(sys: StepSystem, op: FracOperator) -> None:
    if sys.size != op.m_interior:
        raise ValueError(
            f"system has {sys.size} diagonal weights but operator has {op.m_interior} nodes")


def assemble_dense(sys: StepSystem, op: FracOperator) -> np.ndarray:
    _check_sizes(sys, op)
    n = sys.size
    local = np.diag(sys.scalar_shift + np.asarray(sys.diag_weights, dtype=complex))
    if sys.uses_average:
        local = average_matrix(op.alpha, n) @ local
    return local + sys.toeplitz_scale * op.matrix


def factor_dense(matrix: np.ndarray) -> SystemFactorization:
    """Partial-pivoting LU; rejects numerically singular matrices."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        raise ValueError(f"need a non-empty square matrix, got shape {matrix.shape}")
    scale = np.abs(matrix).max()
    with warnings.catch_warnings():
        # singularity is reported below with our own threshold
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(matrix, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if scale == 0 or pivots.min() < SINGULAR_RTOL * scale:
        raise SingularSystemError(
            f"pivot {pivots.min():.3e} below {SINGULAR_RTOL:g} x max|A| = {scale:.3e}")
    return SystemFactorization(mode="dense-LU", size=matrix.shape[0], lu_data=(lu, piv))


def system_matvec(sys: StepSystem, op: FracOperator) -> Callable[[np.ndarray], np.ndarray]:
    weights = sys.scalar_shift + np.asarray(sys.diag_weights, dtype=complex)
    scale = sys.toeplitz_scale
    if sys.uses_average:
        alpha = op.alpha
        return lambda x: apply_average(alpha, weights * x) + scale * op.apply(x)
    return lambda x: weights * x + scale * op.apply(x)


def _strang_symbol(col: np.ndarray) -> np.ndarray:
    n = len(col)
    s = col.copy()
    k = np.arange(n)
    upper = k > n // 2
    s[upper] = col[n - k[upper]]
    return np.fft.fft(s).real


def build_preconditioner(sys: StepSystem, op: FracOperator) -> SystemFactorization:
    """Strang circulant of the Toeplitz part plus the mean local coefficient."""
    _check_sizes(sys, op)
    n = sys.size
    mean_local = sys.scalar_shift + np.mean(sys.diag_weights)
    local_symbol = np.ones(n)
    if sys.uses_average and n > 1:
        col = np.zeros(n)
        col[0] = 1.0 - op.alpha / 12.0
        col[1] = op.alpha / 24.0
        local_symbol = _strang_symbol(col)
    spectrum = sys.toeplitz_scale * _strang_symbol(op.first_column) + mean_local * local_symbol
    if np.any(np.abs(spectrum) == 0.0):
        raise SingularSystemError("circulant preconditioner has a zero eigenvalue")
    return SystemFactorization(mode="krylov", size=n, precond=spectrum)


@dataclass
class SolveInfo:
    iterations: int = 0
    residual: float = 0.0


def gmres(matvec, precond, b, tol=1e-10, restart=30, max_iter=1000, x0=None, norm_a=0.0):
    """Left-preconditioned restarted GMRES.

    Convergence is judged on the true relative residual ``|b - Ax| / |b|``,
    re-evaluated at every restart.  When ``norm_a`` (an estimate of ``|A|``)
    is given, the target is never set below the attainable floor
    ``eps |A| |x| / |b|`` of a floating-point matvec.
    Returns ``(x, iterations, rel_residual)``.
    """
    b = np.asarray(b, dtype=complex)
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n, dtype=complex), 0, 0.0
    x = np.zeros(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    total = 0
    best_rel, best_x = np.inf, x.copy()
    while True:
        r = b - matvec(x)
        rel = np.linalg.norm(r) / bnorm
        if rel < best_rel:
            best_rel, best_x = rel, x.copy()
        floor = np.finfo(float).eps * norm_a * np.linalg.norm(x) / bnorm
        if rel <= max(tol, floor):
            return x, total, rel
        if total >= max_iter:
            raise KrylovConvergenceError(best_rel, total, tol)

        z = precond(r)
        beta = np.linalg.norm(z)
        # shrink the preconditioned residual by the factor still needed, with margin
        target = 0.5 * beta * tol / rel
        m = min(restart, max_iter - total)
        V = np.zeros((m + 1, n), dtype=complex)
        H = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        V[0] = z / beta
        g[0] = beta
        k = 0
        for j in range(m):
            w = precond(matvec(V[j]))
            for _ in range(2):  # classical Gram-Schmidt, reorthogonalized once
                hj = V[: j + 1].conj() @ w
                w -= V[: j + 1].T @ hj
                H[: j + 1, j] += hj
            H[j + 1, j] = np.linalg.norm(w)
            breakdown = H[j + 1, j].real <= 1e-14 * beta
            if not breakdown:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                a, c = H[i, j], H[i + 1, j]
                H[i, j] = cs[i] * a + sn[i] * c
                H[i + 1, j] = -np.conj(sn[i]) * a + cs[i] * c
            a, c = H[j, j], H[j + 1, j]
            d = np.hypot(abs(a), abs(c))
            if abs(a) == 0.0:
                cs[j], sn[j] = 0.0, 1.0
            else:
                cs[j] = abs(a) / d
                sn[j] = (a / abs(a)) * np.conj(c) / d
            H[j, j] = cs[j] * a + sn[j] * c
            H[j + 1, j] = 0.0
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            k = j + 1
            total += 1
            if abs(g[j + 1]) <= target or breakdown:
                break
        y = scipy.linalg.solve_triangular(H[:k, :k], g[:k], check_finite=False)
        x = x + V[:k].T @ y


def solve_krylov(sys: StepSystem, op: FracOperator, rhs: np.ndarray, tol: float = 1e-10,
                 max_iter: int = 1000, restart: int = 30,
                 info: SolveInfo | None = None) -> np.ndarray:
    if tol <= 0:
        raise ValueError("tol must be positive")
    _check_sizes(sys, op)
    if op.fft_plan is None:
        raise ValueError("Krylov path needs an operator with an FFT plan")
    pre = build_preconditioner(sys, op)
    norm_a = (abs(sys.toeplitz_scale) * np.abs(op.fft_plan).max()
              + np.abs(sys.scalar_shift + np.asarray(sys.diag_weights)).max())
    x, its, res = gmres(system_matvec(sys, op), pre.apply_preconditioner, rhs,
                        tol=tol, restart=restart, max_iter=max_iter, norm_a=norm_a)
    if info is not None:
        info.iterations, info.residual = its, res
    return x

"""Fractional centered differences on a truncated uniform grid.

The discrete fractional Laplacian acting on grid functions that vanish outside
the interior nodes ``1..M-1`` is the symmetric Toeplitz matrix
``T[j, k] = c_{|j-k|} / h**alpha``.  It approximates ``(-Delta)^(alpha/2)``
to second order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import gamma

import numpy as np
import scipy.linalg

__all__ = [
    "FracCoefficients",
    "FracOperator",
    "OperatorSymmetryError",
    "build_coefficients",
    "build_operator",
    "apply_dense",
    "apply_fft",
    "apply_average",
    "average_matrix",
    "seminorm_quadratic",
    "circulant_size",
]


class OperatorSymmetryError(ArithmeticError):
    """The quadratic form of a supposedly symmetric operator had an imaginary part."""


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (1.0 < alpha <= 2.0):
        raise ValueError(f"alpha must lie in (1, 2], got {alpha}")
    return alpha


@dataclass(frozen=True)
class FracCoefficients:
    """Half stencil ``c_0 .. c_K`` of the fractional centered difference."""

    alpha: float
    stencil: np.ndarray
    h_pow_alpha: float = 1.0

    @property
    def K(self) -> int:
        return len(self.stencil) - 1


def build_coefficients(alpha: float, K: int, h: float = 1.0) -> FracCoefficients:
    """Coefficients ``c_k`` for ``k = 0..K``.

    ``c_0 = Gamma(alpha+1) / Gamma(alpha/2+1)**2`` and the rest follow from the
    ratio recurrence, which stays exact at ``alpha = 2`` where the closed Gamma
    form hits poles.
    """
    alpha = _check_alpha(alpha)
    K = int(K)
    if K < 1:
        raise ValueError(f"stencil half-width K must be >= 1, got {K}")
    c = np.empty(K + 1)
    # arguments stay in (1.5, 3]: no overflow, and Gamma is exact at the integers
    c[0] = gamma(alpha + 1.0) / gamma(alpha / 2.0 + 1.0) ** 2
    for k in range(1, K + 1):
        c[k] = (1.0 - (alpha + 1.0) / (alpha / 2.0 + k)) * c[k - 1]
    c.setflags(write=False)
    return FracCoefficients(alpha=alpha, stencil=c, h_pow_alpha=float(h) ** alpha)


def circulant_size(n: int) -> int:
    """Smallest power of two >= 2n."""
    size = 1
    while size < 2 * n:
        size *= 2
    return size


@dataclass(frozen=True)
class FracOperator:
    """Discrete fractional Laplacian on ``m_interior = M - 1`` interior nodes.

    ``fft_plan`` holds the (real) eigenvalues of the circulant embedding of
    the Toeplitz matrix, already divided by ``h**alpha``.
    """

    coeffs: FracCoefficients
    m_interior: int
    h: float
    fft_plan: np.ndarray | None = field(default=None, repr=False)

    @property
    def alpha(self) -> float:
        return self.coeffs.alpha

    @property
    def first_column(self) -> np.ndarray:
        """First column of ``T`` (scaled by ``1/h**alpha``), length ``m_interior``."""
        col = np.zeros(self.m_interior)
        k = min(self.m_interior, len(self.coeffs.stencil))
        col[:k] = self.coeffs.stencil[:k]
        return col / self.coeffs.h_pow_alpha

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense symmetric Toeplitz matrix ``T``."""
        mat = scipy.linalg.toeplitz(self.first_column)
        mat.setflags(write=False)
        return mat

    def apply(self, field: np.ndarray) -> np.ndarray:
        """Fastest available application of ``T``."""
        if self.fft_plan is not None and self.m_interior > 64:
            return apply_fft(self, field)
        return apply_dense(self, field)


def build_operator(alpha: float, h: float, M: int, fft: bool = True) -> FracOperator:
    """Operator for mesh width ``h`` and ``M`` subintervals (``M - 1`` unknowns)."""
    M = int(M)
    if M < 2:
        raise ValueError(f"need M >= 2 subintervals, got {M}")
    if h <= 0:
        raise ValueError(f"mesh width must be positive, got {h}")
    # K = M - 2 is all the offsets the truncated operator ever sees; keep at
    # least one off-diagonal so M = 2 still has a valid stencil.
    coeffs = build_coefficients(alpha, max(M - 2, 1), h)
    op = FracOperator(coeffs=coeffs, m_interior=M - 1, h=float(h))
    if fft:
        op = FracOperator(coeffs=coeffs, m_interior=M - 1, h=float(h),
                          fft_plan=_circulant_symbol(op.first_column))
    return op


def _circulant_symbol(col: np.ndarray) -> np.ndarray:
    n = len(col)
    size = circulant_size(n)
    emb = np.zeros(size)
    emb[:n] = col
    emb[size - n + 1:] = col[1:][::-1]
    # real symmetric circulant -> real spectrum
    symbol = np.fft.fft(emb).real
    symbol.setflags(write=False)
    return symbol


def _check_field(op: FracOperator, field: np.ndarray) -> np.ndarray:
    field = np.asarray(field)
    if field.ndim != 1 or field.shape[0] != op.m_interior:
        raise ValueError(
            f"field has shape {field.shape}, operator expects ({op.m_interior},)")
    return field


def apply_dense(op: FracOperator, field: np.ndarray) -> np.ndarray:
    """``(Delta_h^alpha field)_j = h^-alpha * sum_k c_{j-k} field_k`` by explicit matrix product."""
    field = _check_field(op, field)
    return op.matrix @ field


def apply_fft(op: FracOperator, field: np.ndarray) -> np.ndarray:
    """Same as :func:`apply_dense` in ``O(M log M)`` via circulant embedding."""
    if op.fft_plan is None:
        raise ValueError("operator was built without an FFT plan")
    field = _check_field(op, field)
    n = op.m_interior
    size = len(op.fft_plan)
    out = np.fft.ifft(op.fft_plan * np.fft.fft(field, size))[:n]
    if not np.iscomplexobj(field):
        out = out.real
    return out


def apply_average(alpha: float, field: np.ndarray) -> np.ndarray:
    """Compact average ``(a/24) U_{j-1} + (1 - a/12) U_j + (a/24) U_{j+1}``.

    Neighbours outside the array are the (zero) Dirichlet boundary values.
    """
    alpha = _check_alpha(alpha)
    field = np.asarray(field)
    side = alpha / 24.0
    out = (1.0 - alpha / 12.0) * field
    out[1:] += side * field[:-1]
    out[:-1] += side * field[1:]
    return out


def average_matrix(alpha: float, n: int) -> np.ndarray:
    alpha = _check_alpha(alpha)
    side = alpha / 24.0
    return (np.diag(np.full(n, 1.0 - alpha / 12.0))
            + np.diag(np.full(n - 1, side), 1) + np.diag(np.full(n - 1, side), -1))


def seminorm_quadratic(op: FracOperator, field: np.ndarray, rtol: float = 1e-12) -> float:
    """``sqrt(Re(h * sum_j (T U)_j conj(U_j)))``, the energy seminorm of ``U``.

    Raises :class:`OperatorSymmetryError` if the inner product has an
    imaginary part above ``rtol`` relative to its natural scale.
    """
    field = _check_field(op, field)
    tu = apply_dense(op, field)
    q = op.h * np.vdot(field, tu)  # vdot conjugates its first argument
    scale = op.h * np.linalg.norm(tu) * np.linalg.norm(field)
    if abs(q.imag) > rtol * max(scale, np.finfo(float).tiny):
        raise OperatorSymmetryError(
            f"Im(TU, U) = {q.imag:.3e} exceeds {rtol:g} x {scale:.3e}")
    return float(np.sqrt(max(q.real, 0.0)))

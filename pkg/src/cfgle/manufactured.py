"""Manufactured polynomial solution on (0, 1) and its exact source terms.

The spatial profile ``P(x) = x^4 (1-x)^4`` is extended by zero outside
``[0, 1]``.  Its fractional Laplacian follows from the left Riemann-Liouville
derivative of monomials,

    D_{0,x}^alpha x^p = Gamma(p+1) / Gamma(p+1-alpha) * x^(p-alpha),

and the symmetry ``P(x) = P(1-x)``, which turns the right-sided derivative
into the left one evaluated at ``1 - x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import cos, lgamma, exp, pi

import numpy as np

__all__ = [
    "PolySolution",
    "EXAMPLE1",
    "riesz_monomial_left",
    "riesz_derivative_poly",
    "example1_sources",
]


def _exp_decay(t):
    return np.exp(-t)


def _cubic_growth(t):
    return (t + 1.0) ** 3


@dataclass(frozen=True)
class PolySolution:
    """``u = time_factor_u(t) P(x)``, ``v = time_factor_v(t) P(x)``.

    ``spatial_coeffs`` maps monomial degree to coefficient.
    """

    spatial_coeffs: dict = field(
        default_factory=lambda: {4: 1.0, 5: -4.0, 6: 6.0, 7: -4.0, 8: 1.0})
    time_factor_u: object = _exp_decay
    time_factor_v: object = _cubic_growth

    def profile(self, x):
        x = np.asarray(x, dtype=float)
        return sum(a * x**p for p, a in self.spatial_coeffs.items())

    def profile_dxx(self, x):
        x = np.asarray(x, dtype=float)
        return sum(a * p * (p - 1) * x ** (p - 2) for p, a in self.spatial_coeffs.items())

    def u(self, x, t):
        return self.time_factor_u(t) * self.profile(x)

    def v(self, x, t):
        return self.time_factor_v(t) * self.profile(x)

    def u_t(self, x, t):
        return -self.u(x, t)

    def v_t(self, x, t):
        return 3.0 * (t + 1.0) ** 2 * self.profile(x)


EXAMPLE1 = PolySolution()


def riesz_monomial_left(p: int, alpha: float, x):
    """Left Riemann-Liouville derivative of ``x^p`` from 0, evaluated at ``x``."""
    if p < 4:
        raise ValueError(f"degree must be >= 4, got {p}")
    if not (1.0 < alpha <= 2.0):
        raise ValueError(f"alpha must lie in (1, 2], got {alpha}")
    x = np.asarray(x, dtype=float)
    # endpoints are fine: p > alpha makes x^(p-alpha) continuous at 0
    if np.any((x < 0.0) | (x > 1.0)):
        raise ValueError("x must lie in [0, 1]")
    return exp(lgamma(p + 1.0) - lgamma(p + 1.0 - alpha)) * x ** (p - alpha)


def _left_sum(sol: PolySolution, alpha: float, x):
    return sum(a * riesz_monomial_left(p, alpha, x) for p, a in sol.spatial_coeffs.items())


def riesz_derivative_poly(sol: PolySolution, alpha: float, x):
    """``(-Delta)^(alpha/2)`` of the zero-extended profile at ``x`` in [0, 1]."""
    x = np.asarray(x, dtype=float)
    if alpha == 2.0:
        classical = -sol.profile_dxx(x)
        rl = (_left_sum(sol, 2.0, x) + _left_sum(sol, 2.0, 1.0 - x)) / (2.0 * cos(pi))
        assert np.allclose(rl, classical, rtol=1e-12, atol=1e-12), \
            "Riemann-Liouville and classical branches disagree at alpha = 2"
        return classical
    return (_left_sum(sol, alpha, x) + _left_sum(sol, alpha, 1.0 - x)) / (2.0 * cos(pi * alpha / 2.0))


def example1_sources(alpha: float, x, t, sol: PolySolution = EXAMPLE1):
    """Source terms ``(f, g)`` making ``sol`` the exact solution of Example 1."""
    u = sol.u(x, t)
    v = sol.v(x, t)
    lap = riesz_derivative_poly(sol, alpha, x)
    uu, vv = u * u, v * v  # u, v are real here
    f = (sol.u_t(x, t) + (1 + 1j) * sol.time_factor_u(t) * lap
         + ((-1 - 1j) * uu + (1 + 1j) * vv) * u - u)
    g = (sol.v_t(x, t) + (1 - 1j) * sol.time_factor_v(t) * lap
         + ((1 + 1j) * uu + (1 - 1j) * vv) * v + v)
    return f, g

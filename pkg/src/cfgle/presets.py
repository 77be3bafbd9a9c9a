"""Built-in problem instances: the manufactured polynomial case and the
sech-soliton case on [-15, 15]."""

from __future__ import annotations

import math
from functools import partial

import numpy as np

from cfgle.manufactured import EXAMPLE1, example1_sources
from cfgle.scheme import FieldCoefficients, ProblemSpec

EXAMPLE1_U = FieldCoefficients(upsilon=1.0, eta=1.0, kappa=-1.0, zeta=-1.0,
                               delta=1.0, beta=1.0, gamma=1.0)
EXAMPLE1_V = FieldCoefficients(upsilon=1.0, eta=-1.0, kappa=1.0, zeta=1.0,
                               delta=1.0, beta=-1.0, gamma=-1.0)


def soliton_kappa(upsilon: float) -> float:
    """``-ups (3 sqrt(1 + 4 ups^2) - 1) / (2 (2 + 9 ups^2))``."""
    return -upsilon * (3.0 * math.sqrt(1.0 + 4.0 * upsilon**2) - 1.0) / (2.0 * (2.0 + 9.0 * upsilon**2))


def example2_coefficients(upsilon: float, eta: float, zeta: float = -1.0) -> FieldCoefficients:
    k = soliton_kappa(upsilon)
    return FieldCoefficients(upsilon=upsilon, eta=eta, kappa=k, zeta=zeta,
                             delta=k, beta=zeta, gamma=0.0)


def _example1_initial(x):
    u0 = EXAMPLE1.u(x, 0.0)
    return u0, EXAMPLE1.v(x, 0.0)


def example1(alpha: float) -> ProblemSpec:
    return ProblemSpec(alpha=alpha, u_coeffs=EXAMPLE1_U, v_coeffs=EXAMPLE1_V,
                       domain=(0.0, 1.0), T=1.0, initial_data=_example1_initial,
                       source_terms=partial(example1_sources, alpha), label="example1")


def sech_wave(x, amplitude=1.0, wavenumber=2.0, center=0.0):
    x = np.asarray(x, dtype=float)
    return amplitude / np.cosh(x - center) * np.exp(1j * wavenumber * (x - center))


def _example2_initial(x):
    return sech_wave(x), sech_wave(x)


def example2(alpha: float, u_upsilon: float = 0.3, v_upsilon: float = 0.3) -> ProblemSpec:
    return ProblemSpec(alpha=alpha,
                       u_coeffs=example2_coefficients(u_upsilon, 0.5),
                       v_coeffs=example2_coefficients(v_upsilon, 0.6),
                       domain=(-15.0, 15.0), T=1.0, initial_data=_example2_initial,
                       label="example2")


def exact_example1(x, t):
    return EXAMPLE1.u(x, t), EXAMPLE1.v(x, t)

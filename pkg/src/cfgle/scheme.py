"""Three-level linearized implicit time stepping for the coupled system

    u_t + (ups1 + i eta1) (-Delta)^{a/2} u + ((kap1 + i zet1)|u|^2 + (del1 + i bet1)|v|^2) u - gam1 u = f
    v_t + (ups2 + i eta2) (-Delta)^{a/2} v + ((kap2 + i zet2)|u|^2 + (del2 + i bet2)|v|^2) v - gam2 v = g

with homogeneous Dirichlet data on [a, b].  Nonlinear weights are frozen at
level n and the unknowns enter through the average of levels n-1 and n+1, so
each step is two independent linear solves.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from cfgle.fracops import FracOperator, apply_average, build_operator
from cfgle.linalg import (
    SolveInfo,
    StepSystem,
    assemble_dense,
    factor_dense,
    solve_krylov,
)

log = logging.getLogger(__name__)

__all__ = [
    "FieldCoefficients",
    "ProblemSpec",
    "Mesh",
    "FieldPair",
    "SolverConfig",
    "SolverStats",
    "TrajectoryResult",
    "initial_fields",
    "bootstrap",
    "step",
    "step_fourth",
    "step_systems",
    "run",
    "richardson",
    "run_extrapolated",
    "solvability_bound",
]


@dataclass(frozen=True)
class FieldCoefficients:
    """Coefficients of one equation.

    ``kappa``/``zeta`` multiply ``|u|^2`` and ``delta``/``beta`` multiply
    ``|v|^2`` in both equations.
    """

    upsilon: float
    eta: float = 0.0
    kappa: float = 0.0
    zeta: float = 0.0
    delta: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not self.upsilon > 0:
            raise ValueError(f"υ must be positive (got upsilon = {self.upsilon})")

    @property
    def diffusion(self) -> complex:
        return complex(self.upsilon, self.eta)

    def weights(self, uu: np.ndarray, vv: np.ndarray) -> np.ndarray:
        return complex(self.kappa, self.zeta) * uu + complex(self.delta, self.beta) * vv


@dataclass(frozen=True)
class ProblemSpec:
    alpha: float
    u_coeffs: FieldCoefficients
    v_coeffs: FieldCoefficients
    domain: tuple[float, float]
    T: float
    initial_data: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    source_terms: Callable[[np.ndarray, float], tuple[np.ndarray, np.ndarray]] | None = None
    label: str = "custom"

    def __post_init__(self):
        if not (1.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha must lie in (1, 2], got {self.alpha}")
        a, b = self.domain
        if not a < b:
            raise ValueError(f"domain must satisfy a < b, got {self.domain}")
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")

    def describe(self) -> dict:
        return {
            "label": self.label,
            "alpha": self.alpha,
            "u": asdict(self.u_coeffs),
            "v": asdict(self.v_coeffs),
            "domain": list(self.domain),
            "T": self.T,
            "has_sources": self.source_terms is not None,
        }

    def spec_hash(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class Mesh:
    M: int
    N: int
    a: float
    b: float
    T: float

    def __post_init__(self):
        if self.M < 2 or self.N < 2:
            raise ValueError(f"need M >= 2 and N >= 2, got M={self.M}, N={self.N}")

    @classmethod
    def for_problem(cls, spec: ProblemSpec, M: int, N: int) -> "Mesh":
        return cls(int(M), int(N), float(spec.domain[0]), float(spec.domain[1]), float(spec.T))

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.M

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def node_x(self) -> np.ndarray:
        return self.a + np.arange(self.M + 1) * self.h

    @property
    def interior(self) -> np.ndarray:
        return self.node_x[1:-1]


@dataclass
class FieldPair:
    """Interior values of ``U`` and ``V`` at time level ``level``."""

    u: np.ndarray
    v: np.ndarray
    level: int = 0

    def max_abs(self) -> tuple[float, float]:
        return float(np.abs(self.u).max(initial=0.0)), float(np.abs(self.v).max(initial=0.0))

    @staticmethod
    def averaged(prev: "FieldPair", nxt: "FieldPair") -> "FieldPair":
        return FieldPair((prev.u + nxt.u) / 2, (prev.v + nxt.v) / 2, (prev.level + nxt.level) // 2)

    @staticmethod
    def central_difference(prev: "FieldPair", nxt: "FieldPair", tau: float) -> "FieldPair":
        return FieldPair((nxt.u - prev.u) / (2 * tau), (nxt.v - prev.v) / (2 * tau),
                         (prev.level + nxt.level) // 2)


@dataclass(frozen=True)
class SolverConfig:
    mode: Literal["auto", "dense", "krylov"] = "auto"
    tol: float = 1e-12
    max_iter: int = 2000
    restart: int = 30
    dense_cutoff: int = 1024
    residual_warn: float = 1e-8

    def use_krylov(self, n: int) -> bool:
        if self.mode == "auto":
            return n > self.dense_cutoff
        return self.mode == "krylov"


@dataclass
class SolverStats:
    solves: int = 0
    iterations: int = 0
    warnings: list[str] = field(default_factory=list)

    def warn(self, msg: str) -> None:
        log.warning(msg)
        self.warnings.append(msg)


@dataclass
class TrajectoryResult:
    final: FieldPair
    max_magnitude_history: np.ndarray
    snapshots: list[tuple[int, FieldPair]] = field(default_factory=list)
    solver_warnings: list[str] = field(default_factory=list)
    iterations: int = 0


def _abs2(z: np.ndarray) -> np.ndarray:
    return z.real * z.real + z.imag * z.imag


def _sources(spec: ProblemSpec, mesh: Mesh, t: float, average: bool = False):
    """Source values at interior nodes, optionally passed through the compact average.

    The averaged source uses the true boundary values of ``f``: for a nonlocal
    operator the source need not vanish on the boundary even though ``u`` does.
    """
    if spec.source_terms is None:
        return 0.0, 0.0
    if not average:
        f, g = spec.source_terms(mesh.interior, t)
        return np.asarray(f, dtype=complex), np.asarray(g, dtype=complex)
    side = spec.alpha / 24.0
    centre = 1.0 - spec.alpha / 12.0
    out = []
    for full in spec.source_terms(mesh.node_x, t):
        full = np.asarray(full, dtype=complex)
        out.append(centre * full[1:-1] + side * (full[:-2] + full[2:]))
    return out[0], out[1]


def initial_fields(spec: ProblemSpec, mesh: Mesh) -> FieldPair:
    u0, v0 = spec.initial_data(mesh.interior)
    u0 = np.asarray(u0, dtype=complex) * np.ones(mesh.M - 1)
    v0 = np.asarray(v0, dtype=complex) * np.ones(mesh.M - 1)
    if not (np.all(np.isfinite(u0)) and np.all(np.isfinite(v0))):
        raise ValueError("initial data is not finite on the mesh")
    return FieldPair(u0, v0, 0)


def bootstrap(spec: ProblemSpec, mesh: Mesh, op: FracOperator, init: FieldPair | None = None) -> FieldPair:
    """Explicit first step ``U^1 = U^0 - tau * (PDE operator)(U^0) + tau * f(x, 0)``."""
    if init is None:
        init = initial_fields(spec, mesh)
    tau = mesh.tau
    uu, vv = _abs2(init.u), _abs2(init.v)
    f, g = _sources(spec, mesh, 0.0)
    out = []
    for c, x, src in ((spec.u_coeffs, init.u, f), (spec.v_coeffs, init.v, g)):
        rate = c.diffusion * op.apply(x) + c.weights(uu, vv) * x - c.gamma * x
        out.append(x - tau * rate + tau * src)
    return FieldPair(out[0], out[1], init.level + 1)


def solvability_bound(c: FieldCoefficients, bound: float) -> float:
    """Largest step for which unique solvability is guaranteed at field bound ``C``."""
    denom = abs(c.gamma) + (abs(c.kappa) + abs(c.delta)) * bound**2
    return math.inf if denom == 0 else 1.0 / denom


def _field_system(c: FieldCoefficients, weights, x_prev, src, op: FracOperator, tau: float,
                  average: bool) -> tuple[StepSystem, np.ndarray]:
    inv = 1.0 / (2.0 * tau)
    scale = c.diffusion / 2.0
    system = StepSystem(scalar_shift=complex(inv - c.gamma / 2.0), toeplitz_scale=scale,
                        diag_weights=weights / 2.0, uses_average=average)
    # src arrives already averaged in the fourth-order scheme
    local = (inv + c.gamma / 2.0 - weights / 2.0) * x_prev
    if average:
        local = apply_average(op.alpha, local)
    return system, local + src - scale * op.apply(x_prev)


def _solve_system(system: StepSystem, rhs: np.ndarray, op: FracOperator,
                  config: SolverConfig, stats: SolverStats) -> np.ndarray:
    stats.solves += 1
    if config.use_krylov(op.m_interior):
        info = SolveInfo()
        x = solve_krylov(system, op, rhs, tol=config.tol, max_iter=config.max_iter,
                         restart=config.restart, info=info)
        stats.iterations += info.iterations
        residual = info.residual
    else:
        mat = assemble_dense(system, op)
        x = factor_dense(mat).solve(rhs)
        rnorm = np.linalg.norm(rhs)
        residual = np.linalg.norm(mat @ x - rhs) / rnorm if rnorm > 0 else 0.0
    if residual > config.residual_warn:
        stats.warn(f"linear solve residual {residual:.2e} exceeds {config.residual_warn:.0e}")
    return x


def step_systems(spec: ProblemSpec, mesh: Mesh, op: FracOperator, prev: FieldPair,
                 curr: FieldPair, average: bool = False) -> list[tuple[StepSystem, np.ndarray]]:
    """The ``(system, rhs)`` pairs for U and V that one step would solve."""
    tau = mesh.tau
    uu, vv = _abs2(curr.u), _abs2(curr.v)
    f, g = _sources(spec, mesh, curr.level * tau, average)
    return [_field_system(spec.u_coeffs, spec.u_coeffs.weights(uu, vv), prev.u, f, op, tau, average),
            _field_system(spec.v_coeffs, spec.v_coeffs.weights(uu, vv), prev.v, g, op, tau, average)]


def _advance(spec, mesh, op, prev, curr, config, average, stats):
    if prev.level != curr.level - 1:
        raise ValueError(f"levels must be consecutive, got {prev.level} and {curr.level}")
    if config is None:
        config = SolverConfig()
    if stats is None:
        stats = SolverStats()
    tau = mesh.tau
    bound = max(curr.max_abs())
    for name, c in (("u", spec.u_coeffs), ("v", spec.v_coeffs)):
        limit = solvability_bound(c, bound)
        if tau >= limit:
            stats.warn(f"level {curr.level}: tau = {tau:.3e} exceeds the {name}-field "
                       f"solvability bound {limit:.3e}")
    (su, ru), (sv, rv) = step_systems(spec, mesh, op, prev, curr, average)
    u_next = _solve_system(su, ru, op, config, stats)
    v_next = _solve_system(sv, rv, op, config, stats)
    return FieldPair(u_next, v_next, curr.level + 1)


def step(spec: ProblemSpec, mesh: Mesh, op: FracOperator, prev: FieldPair, curr: FieldPair,
         config: SolverConfig | None = None, stats: SolverStats | None = None) -> FieldPair:
    """Second-order step from levels ``n-1``, ``n`` to ``n+1``."""
    return _advance(spec, mesh, op, prev, curr, config, False, stats)


def step_fourth(spec: ProblemSpec, mesh: Mesh, op: FracOperator, prev: FieldPair,
                curr: FieldPair, config: SolverConfig | None = None,
                stats: SolverStats | None = None) -> FieldPair:
    """Step with all local terms (time difference, nonlinearity, damping, source)
    wrapped in the compact average; fourth order in space."""
    return _advance(spec, mesh, op, prev, curr, config, True, stats)


def run(spec: ProblemSpec, mesh: Mesh, order: int = 2, config: SolverConfig | None = None,
        snapshot_levels: Sequence[int] = (), op: FracOperator | None = None) -> TrajectoryResult:
    if order not in (2, 4):
        raise ValueError(f"order must be 2 or 4, got {order}")
    config = config or SolverConfig()
    if op is None:
        op = build_operator(spec.alpha, mesh.h, mesh.M, fft=True)
    stats = SolverStats()
    advance = step if order == 2 else step_fourth
    wanted = set(snapshot_levels)
    history = np.zeros((mesh.N + 1, 2))
    snapshots = []

    prev = initial_fields(spec, mesh)
    curr = bootstrap(spec, mesh, op, prev)
    for pair in (prev, curr):
        history[pair.level] = pair.max_abs()
        if pair.level in wanted:
            snapshots.append((pair.level, pair))
    for _ in range(1, mesh.N):
        prev, curr = curr, advance(spec, mesh, op, prev, curr, config, stats)
        history[curr.level] = curr.max_abs()
        if curr.level in wanted:
            snapshots.append((curr.level, curr))
        if not np.all(np.isfinite(history[curr.level])):
            raise FloatingPointError(f"solution became non-finite at level {curr.level}")
    return TrajectoryResult(final=curr, max_magnitude_history=history, snapshots=snapshots,
                            solver_warnings=stats.warnings, iterations=stats.iterations)


def richardson(final_fine: FieldPair, final_coarse: FieldPair) -> FieldPair:
    """``(4 fine - coarse) / 3``: cancels the leading ``tau^2`` error term."""
    if final_fine.u.shape != final_coarse.u.shape or final_fine.v.shape != final_coarse.v.shape:
        raise ValueError("Richardson inputs live on different spatial meshes")
    return FieldPair((4 * final_fine.u - final_coarse.u) / 3,
                     (4 * final_fine.v - final_coarse.v) / 3, final_fine.level)


def run_extrapolated(spec: ProblemSpec, mesh: Mesh, order: int = 4,
                     config: SolverConfig | None = None,
                     op: FracOperator | None = None) -> tuple[FieldPair, int, list[str]]:
    """Runs with ``N`` and ``N/2`` steps and extrapolates the final fields.

    Returns the extrapolated pair, the total Krylov iterations and the warnings.
    """
    if mesh.N % 2:
        raise ValueError(f"Richardson extrapolation needs an even step count, got N={mesh.N}")
    if op is None:
        op = build_operator(spec.alpha, mesh.h, mesh.M, fft=True)
    fine = run(spec, mesh, order, config, op=op)
    coarse = run(spec, Mesh(mesh.M, mesh.N // 2, mesh.a, mesh.b, mesh.T), order, config, op=op)
    return (richardson(fine.final, coarse.final), fine.iterations + coarse.iterations,
            fine.solver_warnings + coarse.solver_warnings)

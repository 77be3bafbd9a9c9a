"""Convergence studies, fine-mesh references and fixed-step sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from cfgle import presets
from cfgle.fracops import build_operator, seminorm_quadratic
from cfgle.scheme import (
    FieldPair,
    Mesh,
    ProblemSpec,
    SolverConfig,
    run,
    run_extrapolated,
)

__all__ = [
    "StudyPlan",
    "ReportRow",
    "ConvergenceReport",
    "StudyError",
    "observed_order",
    "run_study",
    "ReferenceSnapshot",
    "build_reference",
    "save_reference",
    "load_reference",
    "fixed_tau_sweep",
    "CSV_HEADER",
]

CSV_HEADER = ["alpha", "tau", "h", "err_u_inf", "order_u", "err_v_inf", "order_v",
              "wall_ms", "solver_iters"]

ExactFn = Callable[[np.ndarray, float], tuple[np.ndarray, np.ndarray]]


class StudyError(RuntimeError):
    """A cell of a study failed; ``cell`` is ``(alpha, M, N)``."""

    def __init__(self, cell, cause):
        self.cell = cell
        self.cause = cause
        super().__init__(f"study cell alpha={cell[0]}, M={cell[1]}, N={cell[2]} failed: {cause}")


def observed_order(err_coarse: float, err_fine: float) -> float:
    """``log2`` of the error ratio between consecutive halvings."""
    return math.log2(err_coarse / err_fine)


@dataclass
class StudyPlan:
    case: str = "example1"
    scheme_order: int = 2
    alphas: Sequence[float] = (1.5,)
    resolutions: Sequence[tuple[int, int]] = ((32, 32), (64, 64))
    reference: str = "exact"
    reference_mesh: tuple[int, int] | None = None
    reference_order: int = 2
    norms: Sequence[str] = ("max",)
    solver: SolverConfig = field(default_factory=SolverConfig)
    workers: int = 1
    problem: Callable[[float], ProblemSpec] | None = None
    exact: ExactFn | None = None

    def __post_init__(self):
        self.resolutions = [tuple(int(v) for v in r) for r in self.resolutions]
        if list(self.resolutions) != sorted(self.resolutions):
            raise ValueError("resolutions must be sorted ascending")
        if self.scheme_order not in (2, 4):
            raise ValueError(f"scheme_order must be 2 or 4, got {self.scheme_order}")
        if self.scheme_order == 4 and any(N % 2 for _, N in self.resolutions):
            raise ValueError("Richardson extrapolation needs even N in every resolution")
        unknown = set(self.norms) - {"max", "l2", "seminorm"}
        if unknown:
            raise ValueError(f"unknown norms: {sorted(unknown)}")
        if self.reference == "fine-mesh":
            if self.reference_mesh is None:
                raise ValueError("fine-mesh reference needs reference_mesh = (M_ref, N_ref)")
            M_ref, N_ref = self.reference_mesh
            for M, N in self.resolutions:
                if M_ref < M or N_ref < N:
                    raise ValueError(f"reference mesh {self.reference_mesh} is not finer than {(M, N)}")
                if M_ref % M:
                    raise ValueError(f"study mesh M={M} does not divide reference M={M_ref}")
            if self.reference_order == 4 and N_ref % 2:
                raise ValueError("fourth-order reference needs an even N_ref")
        elif self.reference != "exact":
            raise ValueError(f"reference must be 'exact' or 'fine-mesh', got {self.reference!r}")

    def problem_for(self, alpha: float) -> ProblemSpec:
        if self.problem is not None:
            return self.problem(alpha)
        if self.case == "example1":
            return presets.example1(alpha)
        if self.case == "example2":
            return presets.example2(alpha)
        raise ValueError("custom case needs a problem factory")

    def exact_solution(self) -> ExactFn | None:
        if self.exact is not None:
            return self.exact
        if self.case == "example1":
            return presets.exact_example1
        return None

    def reference_description(self) -> str:
        if self.reference == "exact":
            return "exact solution"
        M_ref, N_ref = self.reference_mesh
        return f"fine mesh M={M_ref} N={N_ref} order {self.reference_order}"


@dataclass
class ReportRow:
    alpha: float
    tau: float
    h: float
    err_u_inf: float
    err_v_inf: float
    order_u: float | None = None
    order_v: float | None = None
    wall_ms: float = 0.0
    solver_iters: int = 0
    extra: dict = field(default_factory=dict)


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{x:.5e}"


@dataclass
class ConvergenceReport:
    rows: list[ReportRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def fill_orders(self) -> None:
        prev = None
        for row in self.rows:
            if prev is not None and prev.alpha == row.alpha:
                row.order_u = _safe_order(prev.err_u_inf, row.err_u_inf)
                row.order_v = _safe_order(prev.err_v_inf, row.err_v_inf)
            else:
                row.order_u = row.order_v = None
            prev = row

    def for_alpha(self, alpha: float) -> list[ReportRow]:
        return [r for r in self.rows if r.alpha == alpha]

    def to_csv(self, timing: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([
                _fmt(r.alpha), _fmt(r.tau), _fmt(r.h),
                _fmt(r.err_u_inf), _fmt(r.order_u), _fmt(r.err_v_inf), _fmt(r.order_v),
                _fmt(r.wall_ms if timing else 0.0), str(r.solver_iters),
            ])
        return buf.getvalue()

    def write(self, out_dir: Path, timing: bool = True) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.csv").write_text(self.to_csv(timing))
        (out_dir / "report.json").write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + "\n")


def _safe_order(coarse: float, fine: float) -> float | None:
    if coarse > 0 and fine > 0:
        return observed_order(coarse, fine)
    return None


@dataclass
class ReferenceSnapshot:
    field: FieldPair
    meta: dict


def build_reference(spec: ProblemSpec, M_ref: int, N_ref: int, scheme_order: int = 2,
                    solver: SolverConfig | None = None) -> ReferenceSnapshot:
    """Final-time solution on a fine mesh, extrapolated when ``scheme_order`` is 4."""
    mesh = Mesh.for_problem(spec, M_ref, N_ref)
    if scheme_order == 4:
        final, _, _ = run_extrapolated(spec, mesh, 4, solver)
    else:
        final = run(spec, mesh, 2, solver).final
    a, b = spec.domain
    meta = {"alpha": spec.alpha, "a": a, "b": b, "T": spec.T, "M": int(M_ref), "N": int(N_ref),
            "scheme_order": int(scheme_order), "spec_hash": spec.spec_hash()}
    return ReferenceSnapshot(field=final, meta=meta)


def save_reference(path: str | Path, snap: ReferenceSnapshot) -> None:
    """One JSON metadata line, then little-endian float64 ``(re, im)`` pairs for U then V."""
    data = np.concatenate([snap.field.u, snap.field.v]).astype("<c16")
    with open(path, "wb") as fh:
        fh.write(json.dumps(snap.meta, sort_keys=True).encode() + b"\n")
        fh.write(data.view("<f8").tobytes())


def load_reference(path: str | Path) -> ReferenceSnapshot:
    with open(path, "rb") as fh:
        meta = json.loads(fh.readline())
        raw = np.frombuffer(fh.read(), dtype="<f8")
    z = raw[0::2] + 1j * raw[1::2]
    n = meta["M"] - 1
    if z.shape[0] != 2 * n:
        raise ValueError(f"snapshot holds {z.shape[0]} values, expected {2 * n}")
    return ReferenceSnapshot(field=FieldPair(z[:n].copy(), z[n:].copy(), meta["N"]), meta=meta)


def _restrict(ref: FieldPair, M_ref: int, M: int) -> FieldPair:
    stride = M_ref // M
    return FieldPair(ref.u[stride - 1::stride], ref.v[stride - 1::stride], ref.level)


def _errors(final: FieldPair, target: FieldPair, mesh: Mesh, alpha: float, norms) -> dict:
    eu, ev = final.u - target.u, final.v - target.v
    out = {"err_u_inf": float(np.abs(eu).max()), "err_v_inf": float(np.abs(ev).max())}
    if "l2" in norms:
        out["err_u_l2"] = float(np.sqrt(mesh.h) * np.linalg.norm(eu))
        out["err_v_l2"] = float(np.sqrt(mesh.h) * np.linalg.norm(ev))
    if "seminorm" in norms:
        op = build_operator(alpha, mesh.h, mesh.M, fft=False)
        out["err_u_semi"] = seminorm_quadratic(op, eu)
        out["err_v_semi"] = seminorm_quadratic(op, ev)
    return out


def _solve_cell(spec: ProblemSpec, M: int, N: int, order: int, solver: SolverConfig):
    mesh = Mesh.for_problem(spec, M, N)
    if order == 4:
        final, iters, _ = run_extrapolated(spec, mesh, 4, solver)
    else:
        res = run(spec, mesh, 2, solver)
        final, iters = res.final, res.iterations
    return mesh, final, iters


def run_study(plan: StudyPlan, references: dict[float, ReferenceSnapshot] | None = None) -> ConvergenceReport:
    """Error table for every ``(alpha, M, N)`` in the plan.

    ``references`` may supply prebuilt fine-mesh snapshots keyed by alpha.
    """
    references = dict(references or {})
    exact = plan.exact_solution()
    if plan.reference == "exact" and exact is None:
        raise ValueError(f"case {plan.case!r} has no exact solution; use a fine-mesh reference")

    ref_meta = {}
    if plan.reference == "fine-mesh":
        M_ref, N_ref = plan.reference_mesh
        for alpha in plan.alphas:
            if alpha not in references:
                references[alpha] = build_reference(plan.problem_for(alpha), M_ref, N_ref,
                                                    plan.reference_order, plan.solver)
            ref_meta[str(alpha)] = references[alpha].meta

    def cell(alpha, M, N):
        spec = plan.problem_for(alpha)
        t0 = time.perf_counter()
        try:
            mesh, final, iters = _solve_cell(spec, M, N, plan.scheme_order, plan.solver)
        except Exception as exc:  # re-raised with the failing cell attached
            raise StudyError((alpha, M, N), exc) from exc
        wall = (time.perf_counter() - t0) * 1e3
        if plan.reference == "exact":
            u, v = exact(mesh.interior, spec.T)
            target = FieldPair(np.asarray(u, dtype=complex), np.asarray(v, dtype=complex))
        else:
            target = _restrict(references[alpha].field, plan.reference_mesh[0], M)
        errs = _errors(final, target, mesh, alpha, plan.norms)
        extra = {k: v for k, v in errs.items() if k not in ("err_u_inf", "err_v_inf")}
        return ReportRow(alpha=alpha, tau=mesh.tau, h=mesh.h, err_u_inf=errs["err_u_inf"],
                         err_v_inf=errs["err_v_inf"], wall_ms=wall, solver_iters=iters, extra=extra)

    cells = [(a, M, N) for a in plan.alphas for M, N in plan.resolutions]
    if plan.workers > 1:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            rows = list(pool.map(lambda c: cell(*c), cells))
    else:
        rows = [cell(*c) for c in cells]

    first = plan.problem_for(plan.alphas[0])
    report = ConvergenceReport(rows=rows, metadata={
        "case": plan.case,
        "scheme_order": plan.scheme_order,
        "richardson": plan.scheme_order == 4,
        "reference": plan.reference_description(),
        "reference_snapshots": ref_meta,
        "spec_hash": {str(a): plan.problem_for(a).spec_hash() for a in plan.alphas},
        "domain": list(first.domain),
        "T": first.T,
        "solver": {"mode": plan.solver.mode, "tol": plan.solver.tol,
                   "dense_cutoff": plan.solver.dense_cutoff},
    })
    report.fill_orders()
    return report


def fixed_tau_sweep(spec: ProblemSpec, tau_fixed: float, h_list: Sequence[float], order: int = 2,
                    exact: ExactFn | None = None, solver: SolverConfig | None = None) -> list[dict]:
    """Errors at fixed time step while the mesh width shrinks.

    Each row is ``{"h", "M", "err_u_inf", "err_v_inf"}``.  ``exact`` defaults to
    the manufactured solution when ``spec`` is the polynomial case.
    """
    if exact is None:
        if spec.label != "example1":
            raise ValueError("fixed-tau sweep needs an exact solution")
        exact = presets.exact_example1
    N = int(round(spec.T / tau_fixed))
    if not math.isclose(N * tau_fixed, spec.T, rel_tol=1e-9):
        raise ValueError(f"tau = {tau_fixed} does not divide T = {spec.T}")
    length = spec.domain[1] - spec.domain[0]
    rows = []
    for h in h_list:
        M = int(round(length / h))
        mesh, final, _ = _solve_cell(spec, M, N, order, solver or SolverConfig())
        u, v = exact(mesh.interior, spec.T)
        rows.append({"h": mesh.h, "M": M,
                     "err_u_inf": float(np.abs(final.u - u).max()),
                     "err_v_inf": float(np.abs(final.v - v).max())})
    return rows


def sweep_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write("h,err_u_inf,err_v_inf\n")
    for r in rows:
        buf.write(f"{_fmt(r['h'])},{_fmt(r['err_u_inf'])},{_fmt(r['err_v_inf'])}\n")
    return buf.getvalue()

"""Command-line driver.

    cfgle --config run.json [--out DIR] [--workers N] [--solver dense|krylov|auto] [--tol X]

The JSON config selects one command (``solve``, ``study``, ``reference`` or
``sweep``) and describes the problem; see README.md for the schema.  Exit
status is 0 on success, 1 on invalid input and 2 when a linear solve fails.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from cfgle import harness, presets
from cfgle.linalg import KrylovConvergenceError, SingularSystemError
from cfgle.scheme import (
    FieldCoefficients,
    Mesh,
    ProblemSpec,
    SolverConfig,
    run,
    run_extrapolated,
)

COMMANDS = ("solve", "study", "reference", "sweep")
CASES = ("example1", "example2", "custom")
INITIAL_TYPES = ("sech", "gaussian", "zero")


class ConfigError(ValueError):
    pass


@dataclass
class ProblemConfig:
    case: str = "example1"
    alpha: float | None = None
    u: dict | None = None
    v: dict | None = None
    domain: list[float] | None = None
    T: float | None = None
    initial: dict | None = None


@dataclass
class MeshConfig:
    M: int = 64
    N: int = 64


@dataclass
class OutputConfig:
    dir: str = "out"
    snapshot_levels: list[int] = field(default_factory=list)
    timing: bool = True


@dataclass
class StudyConfig:
    alphas: list[float] | None = None
    resolutions: list[list[int]] = field(default_factory=lambda: [[32, 32], [64, 64], [128, 128]])
    reference: str = "exact"
    reference_mesh: list[int] | None = None
    reference_order: int = 2
    norms: list[str] = field(default_factory=lambda: ["max"])


@dataclass
class SweepConfig:
    tau: float = 0.01
    h_list: list[float] = field(default_factory=lambda: [1 / 16, 1 / 32, 1 / 64])


@dataclass
class RunConfig:
    command: str
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    scheme_order: int = 2
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    study: StudyConfig = field(default_factory=StudyConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    workers: int = 1


_SECTIONS = {"problem": ProblemConfig, "mesh": MeshConfig, "solver": SolverConfig,
             "output": OutputConfig, "study": StudyConfig, "sweep": SweepConfig}
_SEPTET = tuple(f.name for f in dataclasses.fields(FieldCoefficients))


def _build_section(name: str, cls, data: Any):
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{name}: unknown keys {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def parse_config(raw: bytes | str) -> RunConfig:
    """Validate a JSON config document into a :class:`RunConfig`."""
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown keys {', '.join(unknown)}")
    if "command" not in doc:
        raise ConfigError("command: missing (one of solve, study, reference, sweep)")
    kwargs = {k: v for k, v in doc.items() if k not in _SECTIONS}
    for name, cls in _SECTIONS.items():
        if name in doc:
            kwargs[name] = _build_section(name, cls, doc[name])
    cfg = RunConfig(**kwargs)
    _validate(cfg)
    return cfg


def serialize_config(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def _validate(cfg: RunConfig) -> None:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command: must be one of {', '.join(COMMANDS)}, got {cfg.command!r}")
    if cfg.scheme_order not in (2, 4):
        raise ConfigError(f"scheme_order: must be 2 or 4, got {cfg.scheme_order}")
    if cfg.solver.mode not in ("auto", "dense", "krylov"):
        raise ConfigError(f"solver.mode: must be auto, dense or krylov, got {cfg.solver.mode!r}")
    if not cfg.solver.tol > 0:
        raise ConfigError("solver.tol: must be positive")
    if cfg.mesh.M < 2 or cfg.mesh.N < 2:
        raise ConfigError("mesh: M and N must be at least 2")
    if cfg.scheme_order == 4 and cfg.command in ("solve", "reference") and cfg.mesh.N % 2:
        raise ConfigError("mesh.N: must be even for the fourth-order scheme (Richardson)")
    if cfg.workers < 1:
        raise ConfigError("workers: must be at least 1")
    p = cfg.problem
    if p.case not in CASES:
        raise ConfigError(f"problem.case: must be one of {', '.join(CASES)}, got {p.case!r}")
    if p.case == "example1" and (p.u or p.v or p.domain or p.T or p.initial):
        raise ConfigError("problem: example1 fixes coefficients, domain, T and initial data; "
                          "only alpha may be set")
    if p.case == "example2" and (p.domain or p.T or p.initial):
        raise ConfigError("problem: example2 fixes domain, T and initial data")
    if p.case == "custom":
        for key in ("u", "v", "domain", "T", "initial"):
            if getattr(p, key) is None:
                raise ConfigError(f"problem.{key}: required for a custom problem")
    if cfg.command in ("solve", "reference", "sweep") and p.alpha is None:
        raise ConfigError("problem.alpha: required")
    if cfg.command == "study" and p.alpha is None and not cfg.study.alphas:
        raise ConfigError("study.alphas: required when problem.alpha is not set")
    if cfg.command == "sweep" and p.case != "example1":
        raise ConfigError("sweep: needs the example1 case (exact solution)")
    # build everything once so coefficient errors surface here
    for alpha in _alphas(cfg):
        problem_spec(p, alpha)
    if cfg.command == "study":
        study_plan(cfg)


def _alphas(cfg: RunConfig) -> list[float]:
    if cfg.command == "study" and cfg.study.alphas:
        return [float(a) for a in cfg.study.alphas]
    return [] if cfg.problem.alpha is None else [float(cfg.problem.alpha)]


def _field(name: str, data: dict | None, case: str) -> FieldCoefficients | None:
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError(f"problem.{name}: expected an object")
    unknown = sorted(set(data) - set(_SEPTET))
    if unknown:
        raise ConfigError(f"problem.{name}: unknown keys {', '.join(unknown)}")
    try:
        if case == "example2":
            extra = sorted(set(data) - {"upsilon", "eta"})
            if extra:
                raise ConfigError(f"problem.{name}: example2 derives {', '.join(extra)} from upsilon")
            default_eta = 0.5 if name == "u" else 0.6
            return presets.example2_coefficients(float(data.get("upsilon", 0.3)),
                                                 float(data.get("eta", default_eta)))
        if "upsilon" not in data:
            raise ConfigError(f"problem.{name}.upsilon: required")
        return FieldCoefficients(**{k: float(v) for k, v in data.items()})
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"problem.{name}.upsilon: {exc}") from exc


def _initial_profile(name: str, desc: dict):
    if not isinstance(desc, dict) or desc.get("type") not in INITIAL_TYPES:
        raise ConfigError(f"problem.initial.{name}.type: must be one of {', '.join(INITIAL_TYPES)}")
    kind = desc["type"]
    params = {k: float(v) for k, v in desc.items() if k != "type"}
    allowed = {"amplitude", "wavenumber", "center", "width"}
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise ConfigError(f"problem.initial.{name}: unknown keys {', '.join(unknown)}")
    amp = params.get("amplitude", 1.0)
    k = params.get("wavenumber", 0.0)
    c = params.get("center", 0.0)
    w = params.get("width", 1.0)
    if kind == "zero":
        return lambda x: np.zeros_like(x, dtype=complex)
    if kind == "sech":
        return lambda x: amp / np.cosh((x - c) / w) * np.exp(1j * k * (x - c))
    return lambda x: amp * np.exp(-(((x - c) / w) ** 2)) * np.exp(1j * k * (x - c))


def problem_spec(p: ProblemConfig, alpha: float) -> ProblemSpec:
    try:
        if p.case == "example1":
            return presets.example1(alpha)
        u = _field("u", p.u or {}, p.case) if p.case == "example2" else _field("u", p.u, p.case)
        v = _field("v", p.v or {}, p.case) if p.case == "example2" else _field("v", p.v, p.case)
        if p.case == "example2":
            base = presets.example2(alpha)
            return dataclasses.replace(base, u_coeffs=u, v_coeffs=v)
        init = p.initial
        if not isinstance(init, dict) or set(init) != {"u", "v"}:
            raise ConfigError("problem.initial: needs exactly the keys u and v")
        fu, fv = _initial_profile("u", init["u"]), _initial_profile("v", init["v"])
        if not (isinstance(p.domain, list) and len(p.domain) == 2):
            raise ConfigError("problem.domain: expected [a, b]")
        return ProblemSpec(alpha=float(alpha), u_coeffs=u, v_coeffs=v,
                           domain=(float(p.domain[0]), float(p.domain[1])), T=float(p.T),
                           initial_data=lambda x: (fu(x), fv(x)),
                           label="custom:" + json.dumps(init, sort_keys=True))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from exc


def study_plan(cfg: RunConfig) -> harness.StudyPlan:
    s = cfg.study
    try:
        return harness.StudyPlan(
            case=cfg.problem.case, scheme_order=cfg.scheme_order, alphas=_alphas(cfg),
            resolutions=[tuple(r) for r in s.resolutions], reference=s.reference,
            reference_mesh=tuple(s.reference_mesh) if s.reference_mesh else None,
            reference_order=s.reference_order, norms=tuple(s.norms), solver=cfg.solver,
            workers=cfg.workers, problem=lambda a: problem_spec(cfg.problem, a))
    except ValueError as exc:
        raise ConfigError(f"study: {exc}") from exc


def _cmd_solve(cfg: RunConfig, out: Path) -> None:
    alpha = float(cfg.problem.alpha)
    spec = problem_spec(cfg.problem, alpha)
    mesh = Mesh.for_problem(spec, cfg.mesh.M, cfg.mesh.N)
    summary = {"alpha": alpha, "M": mesh.M, "N": mesh.N, "h": mesh.h, "tau": mesh.tau,
               "scheme_order": cfg.scheme_order, "spec_hash": spec.spec_hash()}
    result = run(spec, mesh, cfg.scheme_order, cfg.solver, snapshot_levels=cfg.output.snapshot_levels)
    final = result.final
    warnings = list(result.solver_warnings)
    if cfg.scheme_order == 4:
        final, _, more = run_extrapolated(spec, mesh, 4, cfg.solver)
        warnings += more
        summary["richardson"] = True
    np.savetxt(out / "history.csv", np.column_stack([np.arange(mesh.N + 1), result.max_magnitude_history]),
               delimiter=",", header="level,max_abs_u,max_abs_v", comments="", fmt=["%d", "%.5e", "%.5e"])
    meta = {"alpha": alpha, "a": mesh.a, "b": mesh.b, "T": mesh.T, "M": mesh.M, "N": mesh.N,
            "scheme_order": cfg.scheme_order, "spec_hash": spec.spec_hash()}
    harness.save_reference(out / "final.bin", harness.ReferenceSnapshot(final, meta))
    for level, pair in result.snapshots:
        harness.save_reference(out / f"snapshot_{level:06d}.bin",
                               harness.ReferenceSnapshot(pair, dict(meta, N=level)))
    if cfg.problem.case == "example1":
        u, v = presets.exact_example1(mesh.interior, spec.T)
        summary["err_u_inf"] = float(np.abs(final.u - u).max())
        summary["err_v_inf"] = float(np.abs(final.v - v).max())
    summary["warnings"] = warnings
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))


def _cmd_study(cfg: RunConfig, out: Path) -> None:
    report = harness.run_study(study_plan(cfg))
    report.write(out, timing=cfg.output.timing)
    sys.stdout.write(report.to_csv(timing=cfg.output.timing))


def _cmd_reference(cfg: RunConfig, out: Path) -> None:
    alpha = float(cfg.problem.alpha)
    spec = problem_spec(cfg.problem, alpha)
    snap = harness.build_reference(spec, cfg.mesh.M, cfg.mesh.N, cfg.scheme_order, cfg.solver)
    path = out / f"reference_alpha{alpha:g}_M{cfg.mesh.M}_N{cfg.mesh.N}_o{cfg.scheme_order}.bin"
    harness.save_reference(path, snap)
    print(path)


def _cmd_sweep(cfg: RunConfig, out: Path) -> None:
    spec = problem_spec(cfg.problem, float(cfg.problem.alpha))
    rows = harness.fixed_tau_sweep(spec, cfg.sweep.tau, cfg.sweep.h_list, cfg.scheme_order,
                                   solver=cfg.solver)
    text = harness.sweep_to_csv(rows)
    (out / "sweep.csv").write_text(text)
    sys.stdout.write(text)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cfgle", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    parser.add_argument("--workers", type=int, help="parallel study cells")
    parser.add_argument("--solver", choices=["dense", "krylov", "auto"], help="linear solver mode")
    parser.add_argument("--tol", type=float, help="Krylov relative residual tolerance")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        parser.print_usage(sys.stderr)
        print("cfgle: error: --config is required", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(args.config.read_bytes())
        overrides = {}
        if args.solver:
            overrides["mode"] = args.solver
        if args.tol is not None:
            overrides["tol"] = args.tol
        if overrides:
            cfg.solver = dataclasses.replace(cfg.solver, **overrides)
        if args.workers is not None:
            cfg.workers = args.workers
        _validate(cfg)
    except OSError as exc:
        print(f"cfgle: cannot read config: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"cfgle: invalid config: {exc}", file=sys.stderr)
        return 1

    out = args.out or Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    handler = {"solve": _cmd_solve, "study": _cmd_study,
               "reference": _cmd_reference, "sweep": _cmd_sweep}[cfg.command]
    try:
        handler(cfg, out)
    except ConfigError as exc:
        print(f"cfgle: invalid config: {exc}", file=sys.stderr)
        return 1
    except (KrylovConvergenceError, SingularSystemError, FloatingPointError,
            harness.StudyError) as exc:
        cause = getattr(exc, "cause", exc)
        if isinstance(cause, KrylovConvergenceError):
            print(f"cfgle: solver failure: {exc} (best residual {cause.best_residual:.3e})",
                  file=sys.stderr)
        else:
            print(f"cfgle: solver failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""GMRES iteration counts on soliton-case step systems; appends to results/benchmark_krylov.md.

    python3 scripts/benchmark_krylov.py
"""

import argparse
import datetime
import platform
import time
from pathlib import Path

import numpy as np

from cfgle import presets
from cfgle.fracops import build_operator
from cfgle.linalg import SolveInfo, StepSystem, solve_krylov, system_matvec


def system_at(alpha, M, tau, average):
    spec = presets.example2(alpha)
    h = 30.0 / M
    x = -15.0 + h * np.arange(1, M)
    u0 = presets.sech_wave(x)
    c = spec.u_coeffs
    w = c.weights(np.abs(u0) ** 2, np.abs(u0) ** 2)
    sys = StepSystem(scalar_shift=complex(1 / (2 * tau)), toeplitz_scale=c.diffusion / 2,
                     diag_weights=w / 2, uses_average=average)
    return sys, build_operator(alpha, h, M), u0


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("results/benchmark_krylov.md"))
    parser.add_argument("--tol", type=float, default=1e-10)
    args = parser.parse_args()
    lines = [f"\n## {datetime.date.today().isoformat()} ({platform.machine()}, numpy {np.__version__}, tol {args.tol:g})\n",
             "| alpha | M | tau | averaged | iterations | rel. residual | ms |",
             "|---|---|---|---|---|---|---|"]
    for alpha in (1.2, 1.5, 1.8, 2.0):
        for M, tau in ((3840, 1 / 128), (7680, 1 / 256)):
            for average in (False, True):
                sys, op, u0 = system_at(alpha, M, tau, average)
                b = system_matvec(sys, op)(u0)
                info = SolveInfo()
                t0 = time.perf_counter()
                solve_krylov(sys, op, b, tol=args.tol, info=info)
                ms = (time.perf_counter() - t0) * 1e3
                lines.append(f"| {alpha} | {M} | 1/{round(1 / tau)} | {average} | {info.iterations} "
                             f"| {info.residual:.1e} | {ms:.0f} |")
    text = "\n".join(lines) + "\n"
    args.out.parent.mkdir(parents=True, exist_ok=True)
    if not args.out.exists():
        args.out.write_text("# GMRES benchmark log\n\nCircularly preconditioned restarted GMRES(30) on one "
                            "step system of the soliton case, initial data as the nonlinear weights.\n")
    with open(args.out, "a") as fh:
        fh.write(text)
    print(text)


if __name__ == "__main__":
    main()

"""Regenerate the eight convergence tables as CSV under results/tables/.

    python3 scripts/reproduce_tables.py [--only example1|example2] [--reference-order 2|4]

Example 2 references are cached under results/references/ and reused.
"""

import argparse
import json
from pathlib import Path

from cfgle import presets
from cfgle.harness import StudyPlan, build_reference, load_reference, run_study, save_reference
from cfgle.scheme import SolverConfig

ALPHAS = (1.2, 1.5, 1.8, 2.0)
EX1_ROWS = [(2**k, 2**k) for k in range(5, 10)]
EX2_ROWS = [(30 * k, k) for k in (8, 16, 32, 64)]
EX2_REF = (7680, 256)
KRYLOV = SolverConfig(mode="krylov", tol=1e-12)


def cached_reference(alpha, order, cache: Path):
    path = cache / f"example2_alpha{alpha:g}_M{EX2_REF[0]}_N{EX2_REF[1]}_o{order}.bin"
    if path.exists():
        return load_reference(path)
    snap = build_reference(presets.example2(alpha), *EX2_REF, order, KRYLOV)
    save_reference(path, snap)
    return snap


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--only", choices=["example1", "example2"])
    parser.add_argument("--reference-order", type=int, choices=[2, 4], default=2)
    parser.add_argument("--out", type=Path, default=Path("results"))
    args = parser.parse_args()
    tables = args.out / "tables"
    cache = args.out / "references"
    tables.mkdir(parents=True, exist_ok=True)
    cache.mkdir(parents=True, exist_ok=True)

    if args.only in (None, "example1"):
        for order, rows in ((2, EX1_ROWS), (4, EX1_ROWS[:4])):
            rep = run_study(StudyPlan(case="example1", scheme_order=order, alphas=ALPHAS, resolutions=rows))
            rep.write(tables / f"example1_order{order}", timing=False)
            print(f"example1 order {order}\n{rep.to_csv(timing=False)}")

    if args.only in (None, "example2"):
        refs = {a: cached_reference(a, args.reference_order, cache) for a in ALPHAS}
        for order in (2, 4):
            plan = StudyPlan(case="example2", scheme_order=order, alphas=ALPHAS, resolutions=EX2_ROWS,
                             reference="fine-mesh", reference_mesh=EX2_REF,
                             reference_order=args.reference_order, solver=KRYLOV)
            rep = run_study(plan, references=refs)
            name = f"example2_order{order}_ref{args.reference_order}"
            rep.write(tables / name)
            print(f"{name}\n{rep.to_csv()}")
            print(json.dumps(rep.metadata["reference"]))


if __name__ == "__main__":
    main()

"""Fixed-step error sweeps behind the two stability figures.

    python3 scripts/stability_sweeps.py [--alphas 1.5 2.0]

Writes results/sweeps/order{2,4}_alpha{a}.csv with columns h,err_u_inf,err_v_inf.
"""

import argparse
from pathlib import Path

from cfgle import presets
from cfgle.harness import fixed_tau_sweep, sweep_to_csv
from cfgle.scheme import SolverConfig

# (scheme order, fixed tau, h list): the second-order list starts where the
# spatial error has fallen below the temporal one
SWEEPS = {
    2: (0.01, [2.0**-k for k in range(3, 15)]),
    4: (0.001, [2.0**-k for k in range(3, 13)]),
}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--alphas", type=float, nargs="+", default=[1.5, 2.0])
    parser.add_argument("--orders", type=int, nargs="+", default=[2, 4])
    parser.add_argument("--out", type=Path, default=Path("results/sweeps"))
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    solver = SolverConfig(mode="krylov", tol=1e-12)
    for order in args.orders:
        tau, h_list = SWEEPS[order]
        for alpha in args.alphas:
            rows = fixed_tau_sweep(presets.example1(alpha), tau, h_list, order, solver=solver)
            text = sweep_to_csv(rows)
            (args.out / f"order{order}_alpha{alpha:g}.csv").write_text(text)
            print(f"order {order}, tau {tau}, alpha {alpha}\n{text}")


if __name__ == "__main__":
    main()

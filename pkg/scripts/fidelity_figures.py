"""Full-scale layer-fidelity sweeps: R_b/a axis at n = 8 and qubit-count
axis at R_b/a = 0.87, 500 noise draws per point, written as CSV + PPM.

Runtime: tens of minutes (the n = 10 points dominate).
"""
import argparse
from pathlib import Path

import numpy as np

from daql.noise import fidelity_sweep
from daql.persist import write_csv, write_metadata_sidecar


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/fidelity")
    parser.add_argument("--samples", type=int, default=500)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rba_values = np.round(np.linspace(0.78, 0.99, 15), 4).tolist()
    rows = fidelity_sweep("rba", rba_values, n=8, n_noise=args.samples, seed=args.seed)
    path = out / "fidelity_rba_n8.csv"
    write_csv(path, ["axis_value", "mean_fidelity", "std_fidelity", "scheme", "n",
                     "samples", "seed"], rows)
    write_metadata_sidecar(path, {"axis": "rba", "n": 8, "samples": args.samples,
                                  "seed": args.seed})
    print(f"wrote {path}")

    rows = fidelity_sweep("n", [4, 6, 8, 10], n_noise=args.samples, seed=args.seed)
    path = out / "fidelity_vs_n_rba087.csv"
    write_csv(path, ["axis_value", "mean_fidelity", "std_fidelity", "scheme", "n",
                     "samples", "seed"], rows)
    write_metadata_sidecar(path, {"axis": "n", "rb_over_a": 0.87,
                                  "samples": args.samples, "seed": args.seed})
    print(f"wrote {path}")


if __name__ == "__main__":
    main()

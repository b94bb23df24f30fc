"""Full-scale digit-classification grids: every digit pair at fixed depth,
for digital-analog (three R_b/a values) and digital circuits, noiseless and
noisy, plus a quench-time x depth grid for one pair.

This is the long-running reproduction mode (hours to days at 50 restarts);
trim --restarts / --pairs for smaller passes.  Requires the four IDX files.
"""
import argparse
from pathlib import Path

from daql.mnist import ClassifierConfig, accuracy_grid, all_digit_pairs, load_dataset
from daql.persist import write_csv, write_metadata_sidecar

FIELDS = ["pair", "ansatz", "layers", "t", "phi", "noise",
          "accuracy_mean", "accuracy_std", "train_accuracy_mean", "config_hash"]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--train-images", required=True)
    parser.add_argument("--train-labels", required=True)
    parser.add_argument("--test-images", required=True)
    parser.add_argument("--test-labels", required=True)
    parser.add_argument("--out", default="results/digits")
    parser.add_argument("--cache-dir", default="results/digits/cache")
    parser.add_argument("--restarts", type=int, default=50)
    parser.add_argument("--layers", type=int, default=12)
    parser.add_argument("--pairs", type=int, default=45, help="number of digit pairs")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    train_ds = load_dataset(args.train_images, args.train_labels, "train")
    test_ds = load_dataset(args.test_images, args.test_labels, "test")
    pairs = all_digit_pairs()[: args.pairs]

    def run(name, cells):
        rows = accuracy_grid(cells, train_ds, test_ds, cache_dir=args.cache_dir)
        path = out / f"{name}.csv"
        write_csv(path, FIELDS, rows)
        write_metadata_sidecar(path, {"cells": len(cells), "restarts": args.restarts,
                                      "seed": args.seed})
        print(f"wrote {path}")

    common = dict(n=8, layers=args.layers, restarts=args.restarts, seed=args.seed)
    for rba in (0.80, 0.87, 0.98):
        for noise in (False, True):
            cells = [ClassifierConfig(digits=p, ansatz="da", rb_over_a=rba,
                                      noise=noise, **common) for p in pairs]
            run(f"allpairs_da_rba{rba}_{'noisy' if noise else 'noiseless'}", cells)
    for noise in (False, True):
        cells = [ClassifierConfig(digits=p, ansatz="digital", noise=noise, **common)
                 for p in pairs]
        run(f"allpairs_digital_{'noisy' if noise else 'noiseless'}", cells)

    # quench-time x depth grid for the 3 vs 8 pair
    t_values = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45]
    cells = [ClassifierConfig(digits=(3, 8), ansatz="da", layers=layers, t=t,
                              n=8, restarts=args.restarts, seed=args.seed)
             for layers in (4, 8, 12) for t in t_values]
    run("grid_t_by_depth_3v8", cells)


if __name__ == "__main__":
    main()

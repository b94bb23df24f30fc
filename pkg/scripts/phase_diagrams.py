"""Full-scale phase-learning reproduction: XXZ learned diagrams at the four
training points, the Rydberg entropy/learned maps, and sharpness vs depth.

The 13-qubit Rydberg mesh at 45x45 nodes is hours-scale; the default here
is the desk-scale 9-qubit 21x21 mesh.  Pass --full-rydberg for n = 13.
"""
import argparse
from pathlib import Path

import numpy as np

from daql.circuits import DAHyperparams
from daql.persist import config_hash, write_csv, write_metadata_sidecar
from daql.phase import (
    build_mesh,
    entropy_map,
    order_parameter_map,
    rydberg_mesh_spec,
    sharpness_vs_depth,
    train_anomaly_detector,
    xxz_mesh_spec,
)
from daql.rng import RngStream

XXZ_TRAINING_POINTS = {
    "zafm": (0.01, 0.2184),
    "qzafm": (0.01, 0.9479),
    "xy_qlro": (1.8447, 0.1663),
    "vbs": (1.5826, 0.6353),
}
RYDBERG_Z2_POINT = (2.5, 1.3538)
RYDBERG_DISORDERED_POINT = (0.6, 1.3)


def grid_rows(spec, grid):
    xs, ys = spec.axis_x.values(), spec.axis_y.values()
    return [{"x": xs[ix], "y": ys[iy], "value": grid[ix, iy]}
            for ix in range(xs.size) for iy in range(ys.size)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/phase")
    parser.add_argument("--cache-dir", default="results/phase/cache")
    parser.add_argument("--runs", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--full-rydberg", action="store_true",
                        help="13 qubits on a 45x45 mesh (hours)")
    parser.add_argument("--sharpness-depths", default="2,6,10,14")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache = Path(args.cache_dir)
    cache.mkdir(parents=True, exist_ok=True)

    def mesh_for(spec):
        return build_mesh(spec, cache_path=cache / f"mesh_{config_hash(spec.header())[:16]}.bin",
                          processes=args.workers)

    # XXZ: order parameters and the four learned diagrams
    xxz = mesh_for(xxz_mesh_spec(n=8))
    for name, grid in order_parameter_map(xxz).items():
        path = out / f"xxz_orderparams_{name}.csv"
        write_csv(path, ["x", "y", "value"], grid_rows(xxz.spec, grid))
    for name, point in XXZ_TRAINING_POINTS.items():
        node = xxz.nearest_node(*point)
        diagram = train_anomaly_detector(
            xxz, node, DAHyperparams(n=8, layers=2), runs=args.runs,
            rng=RngStream(args.seed), processes=args.workers)
        path = out / f"xxz_learned_{name}.csv"
        write_csv(path, ["x", "y", "value"], grid_rows(xxz.spec, diagram.losses))
        write_metadata_sidecar(path, {"training_point": point, "node": list(node),
                                      "training_node_loss": diagram.training_node_loss(),
                                      "spread": diagram.spread(), "runs": args.runs})
        print(f"{name}: training-node loss {diagram.training_node_loss():.4f}, "
              f"spread {diagram.spread():.4f}")

    # Rydberg: entropy map plus learned maps at depth 5 and depth 0
    spec = rydberg_mesh_spec(n=13, count_x=45, count_y=45) if args.full_rydberg \
        else rydberg_mesh_spec()
    ryd = mesh_for(spec)
    path = out / "rydberg_entropy.csv"
    write_csv(path, ["x", "y", "value"], grid_rows(spec, entropy_map(ryd)))
    for name, point, layers in (("z2_l5", RYDBERG_Z2_POINT, 5),
                                ("disordered_l0", RYDBERG_DISORDERED_POINT, 0)):
        diagram = train_anomaly_detector(
            ryd, ryd.nearest_node(*point), DAHyperparams(n=spec.n, layers=layers),
            runs=args.runs, rng=RngStream(args.seed + 1), processes=args.workers)
        path = out / f"rydberg_learned_{name}.csv"
        write_csv(path, ["x", "y", "value"], grid_rows(spec, diagram.losses))
        write_metadata_sidecar(path, {"training_point": point, "layers": layers,
                                      "training_node_loss": diagram.training_node_loss(),
                                      "spread": diagram.spread()})
        print(f"rydberg {name}: loss {diagram.training_node_loss():.4f}, "
              f"spread {diagram.spread():.4f}")

    # noisy sharpness comparison over depth (slowest part)
    depths = [int(v) for v in args.sharpness_depths.split(",")]
    rows = sharpness_vs_depth(
        xxz, xxz.nearest_node(*XXZ_TRAINING_POINTS["zafm"]),
        schemes=[("da", 0.87), ("da", 0.98), ("digital", np.pi / 8)],
        layer_values=depths, repeats=5, runs=args.runs,
        rng=RngStream(args.seed + 2), noisy=True, processes=args.workers)
    path = out / "xxz_sharpness_vs_depth.csv"
    write_csv(path, ["scheme", "scheme_value", "layers", "sharpness_mean",
                     "sharpness_std", "repeats", "runs", "seed"], rows)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()

"""Command-line entry point: fidelity sweeps, digit classification, phase
learning, and heatmap rendering, with full-config provenance on every output.

Exit codes: 0 success, 1 runtime or data failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .circuits import DAHyperparams, DigitalHyperparams, save_trained_params
from .mnist import (
    ClassifierConfig,
    accuracy_grid,
    all_digit_pairs,
    load_dataset,
    save_pca,
    train_classifier,
)
from .noise import calibrate_digital_sigma, fidelity_sweep
from .persist import (
    config_hash,
    default_cache_root,
    read_grid_csv,
    render_heatmap_ppm,
    write_csv,
    write_json,
    write_metadata_sidecar,
)
from .phase import (
    CONTOUR_PERCENT,
    MeshAxis,
    MeshSpec,
    build_mesh,
    entropy_map,
    load_mesh,
    order_parameter_map,
    sharpness,
    train_anomaly_detector,
    xxz_mesh_spec,
    rydberg_mesh_spec,
)
from .rng import RngStream

log = logging.getLogger("daql")


class DataError(RuntimeError):
    """Missing or malformed input data; maps to exit code 1."""


def parse_values(text: str) -> list[float]:
    """Either 'lo:hi:count' (inclusive linspace) or a comma list."""
    if ":" in text:
        lo, hi, count = text.split(":")
        return np.linspace(float(lo), float(hi), int(count)).tolist()
    return [float(v) for v in text.split(",")]


def parse_int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",")]


def parse_nodes(text: str) -> tuple[int, int]:
    nx, ny = text.lower().split("x")
    return int(nx), int(ny)


@dataclass
class RunConfig:
    task: str
    options: dict
    seed: int

    def metadata(self) -> dict:
        return {"tool": "daql", "version": __version__, "task": self.task,
                "seed": self.seed, "options": self.options,
                "config_hash": self.hash()}

    def hash(self) -> str:
        return config_hash({"task": self.task, "seed": self.seed, "options": self.options})


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cache_dir(args) -> Path:
    root = Path(args.cache_dir) if args.cache_dir else default_cache_root()
    root.mkdir(parents=True, exist_ok=True)
    return root


def cmd_fidelity(args) -> int:
    if args.calibrate_sigma:
        sigma = calibrate_digital_sigma(args.target)
        print(f"sigma = {sigma:.6f} for single-gate fidelity {args.target}")
        return 0
    if args.axis is None:
        raise DataError("--axis is required unless --calibrate-sigma is given")
    values = parse_values(args.values) if args.values else (
        [0.80, 0.84, 0.87, 0.90, 0.94, 0.98] if args.axis == "rba" else [4, 6, 8, 10])
    config = RunConfig("fidelity", {
        "axis": args.axis, "values": values, "n": args.n, "phi": args.phi,
        "samples": args.samples}, args.seed)
    rows = fidelity_sweep(args.axis, values, n=args.n, phi=args.phi,
                          n_noise=args.samples, seed=args.seed)
    out = _out_dir(args) / f"fidelity_{args.axis}.csv"
    write_csv(out, ["axis_value", "mean_fidelity", "std_fidelity", "scheme", "n",
                    "samples", "seed"], rows)
    write_metadata_sidecar(out, config.metadata())
    print(f"wrote {out}")
    return 0


def _load_corpus(args):
    for name in ("train_images", "train_labels", "test_images", "test_labels"):
        path = getattr(args, name)
        if path is None:
            raise DataError(f"missing --{name.replace('_', '-')}")
        if not Path(path).exists():
            raise DataError(f"data file not found: {path}")
    train = load_dataset(args.train_images, args.train_labels, "train")
    test = load_dataset(args.test_images, args.test_labels, "test")
    return train, test


def _classifier_config(args, digits, **overrides) -> ClassifierConfig:
    base = dict(
        digits=tuple(digits), ansatz=args.ansatz, n=args.n, layers=args.layers,
        rb_over_a=args.rba, t=args.t, phi=args.phi, noise=args.noise == "on",
        epochs=args.epochs, batch_size=args.batch, restarts=args.restarts,
        seed=args.seed,
    )
    base.update(overrides)
    return ClassifierConfig(**base)


def cmd_mnist_train(args) -> int:
    train_ds, test_ds = _load_corpus(args)
    digits = parse_int_list(args.digits)
    if len(digits) != 2:
        raise DataError(f"--digits needs exactly two values, got {args.digits!r}")
    config = _classifier_config(args, digits)
    run = RunConfig("mnist-train", config.to_dict(), args.seed)
    result = train_classifier(config, train_ds, test_ds)
    out = _out_dir(args)

    summary = result.summary()
    row = {"pair": f"{digits[0]}v{digits[1]}",
           "accuracy_mean": summary["test_accuracy_mean"],
           "accuracy_std": summary["test_accuracy_std"],
           "config_hash": run.hash()}
    csv_path = out / "accuracy.csv"
    write_csv(csv_path, ["pair", "accuracy_mean", "accuracy_std", "config_hash"], [row])
    write_metadata_sidecar(csv_path, run.metadata())
    write_json(out / "result.json", {**summary, "config": run.metadata()})
    save_pca(out / "pca.bin", result.pca)
    best = int(np.argmax(result.test_accuracies))
    save_trained_params(out / "trained_params.json", config.ansatz,
                        config.hyperparams(), result.restarts[best].params, args.seed)
    with open(out / "train_records.jsonl", "w") as fh:
        for r in result.restarts:
            fh.write(r.record.to_jsonl())
    print(f"test accuracy {summary['test_accuracy_mean']:.4f} "
          f"+- {summary['test_accuracy_std']:.4f} over {config.restarts} restart(s)")
    return 0


def cmd_mnist_grid(args) -> int:
    train_ds, test_ds = _load_corpus(args)
    cells = []
    if args.sweep == "t":
        values = parse_values(args.values)
        layer_list = parse_int_list(args.layers_list or str(args.layers))
        digits = parse_int_list(args.digits)
        for layers in layer_list:
            for t in values:
                cells.append(_classifier_config(args, digits, layers=layers, t=t))
    elif args.sweep == "phi":
        values = parse_values(args.values)
        digits = parse_int_list(args.digits)
        for phi in values:
            cells.append(_classifier_config(args, digits, phi=phi, ansatz="digital"))
    elif args.sweep == "pairs":
        pairs = all_digit_pairs() if args.pairs == "all" else [
            tuple(parse_int_list(p)) for p in args.pairs.split(";")]
        for pair in pairs:
            cells.append(_classifier_config(args, pair))
    else:
        raise DataError(f"unknown sweep {args.sweep!r}")

    run = RunConfig("mnist-grid", {"sweep": args.sweep, "cells": [c.to_dict() for c in cells]},
                    args.seed)
    rows = accuracy_grid(cells, train_ds, test_ds, cache_dir=_cache_dir(args))
    out = _out_dir(args) / f"grid_{args.sweep}.csv"
    write_csv(out, ["pair", "ansatz", "layers", "t", "phi", "noise",
                    "accuracy_mean", "accuracy_std", "train_accuracy_mean",
                    "config_hash"], rows)
    write_metadata_sidecar(out, run.metadata())
    print(f"wrote {out} ({len(rows)} cells)")
    return 0


def _mesh_spec_from_args(args) -> MeshSpec:
    nx, ny = parse_nodes(args.nodes)
    if args.model == "xxz":
        spec = xxz_mesh_spec(args.n, nx, ny)
    else:
        spec = rydberg_mesh_spec(args.n, nx, ny)
    if args.x_range:
        lo, hi = (float(v) for v in args.x_range.split(":"))
        spec = MeshSpec(spec.model, spec.n, MeshAxis(spec.axis_x.name, lo, hi, nx), spec.axis_y)
    if args.y_range:
        lo, hi = (float(v) for v in args.y_range.split(":"))
        spec = MeshSpec(spec.model, spec.n, spec.axis_x, MeshAxis(spec.axis_y.name, lo, hi, ny))
    return spec


def _mesh_cache_path(args, spec: MeshSpec) -> Path:
    return _cache_dir(args) / f"mesh_{config_hash(spec.header())[:16]}.bin"


def _require_mesh(args, spec: MeshSpec):
    path = _mesh_cache_path(args, spec)
    if not path.exists():
        raise DataError(
            f"no ground-state cache for this mesh config at {path}; run 'daql phase mesh' first")
    return load_mesh(path)


def _grid_rows(spec: MeshSpec, grid: np.ndarray) -> list[dict]:
    xs, ys = spec.axis_x.values(), spec.axis_y.values()
    return [{"x": xs[ix], "y": ys[iy], "value": grid[ix, iy]}
            for ix in range(xs.size) for iy in range(ys.size)]


def cmd_phase(args) -> int:
    spec = _mesh_spec_from_args(args)
    out = _out_dir(args)

    if args.subaction == "mesh":
        path = _mesh_cache_path(args, spec)
        mesh = build_mesh(spec, cache_path=path, processes=args.workers)
        print(f"mesh ready at {path} ({mesh.solves_performed} eigensolves)")
        return 0

    mesh = _require_mesh(args, spec)

    if args.subaction == "orderparams":
        maps = order_parameter_map(mesh)
        run = RunConfig("phase-orderparams", spec.header(), args.seed)
        for name, grid in maps.items():
            csv_path = out / f"orderparams_{name}.csv"
            write_csv(csv_path, ["x", "y", "value"], _grid_rows(spec, grid))
            write_metadata_sidecar(csv_path, {**run.metadata(),
                                              "contour_top_percent": CONTOUR_PERCENT[name]})
        print(f"wrote order-parameter maps to {out}")
        return 0

    if args.subaction == "map":
        grid = entropy_map(mesh)
        run = RunConfig("phase-map", spec.header(), args.seed)
        csv_path = out / "entropy_map.csv"
        write_csv(csv_path, ["x", "y", "value"], _grid_rows(spec, grid))
        write_metadata_sidecar(csv_path, run.metadata())
        print(f"wrote {csv_path}")
        return 0

    if args.subaction == "train":
        x, y = (float(v) for v in args.point.split(","))
        node = mesh.nearest_node(x, y)
        if args.ansatz == "da":
            hp = DAHyperparams(n=spec.n, layers=args.layers, rb_over_a=args.rba)
        else:
            phi = args.phi if args.phi is not None else (
                np.pi / 8 if args.noise == "on" else np.pi / 4)
            hp = DigitalHyperparams(n=spec.n, layers=args.layers, phi=phi)
        options = {"mesh": spec.header(), "point": [x, y], "node": list(node),
                   "ansatz": args.ansatz, "layers": args.layers, "runs": args.runs,
                   "noise": args.noise == "on", "rba": args.rba, "phi": args.phi,
                   "epochs": args.epochs}
        run = RunConfig("phase-train", options, args.seed)
        diagram = train_anomaly_detector(
            mesh, node, hp, runs=args.runs, epochs=args.epochs,
            rng=RngStream(args.seed), noisy=args.noise == "on", processes=args.workers)
        csv_path = out / "diagram.csv"
        write_csv(csv_path, ["x", "y", "value"], _grid_rows(spec, diagram.losses))
        write_metadata_sidecar(csv_path, {
            **run.metadata(),
            "training_node": list(diagram.training_node),
            "training_node_loss": diagram.training_node_loss(),
            "loss_spread": diagram.spread(),
            "training_failed": diagram.training_failed,
            "central_site_convention": 2,
        })
        print(f"wrote {csv_path}; training-node loss {diagram.training_node_loss():.4f}, "
              f"spread {diagram.spread():.4f}")
        if diagram.training_failed:
            print("warning: training loss never dropped below 0.2 in any run", file=sys.stderr)
        return 0

    raise DataError(f"unknown phase subaction {args.subaction!r}")


def cmd_phase_sharpness(args) -> int:
    xs, ys, grid = read_grid_csv(args.infile)
    value = sharpness(grid, xs, ys)
    print(f"sharpness = {value!r}")
    results = Path(args.infile).with_suffix(".sharpness.csv")
    exists = results.exists()
    with open(results, "a", newline="\n") as fh:
        if not exists:
            fh.write("source,sharpness\n")
        fh.write(f"{Path(args.infile).name},{value!r}\n")
    print(f"appended to {results}")
    return 0


def cmd_render(args) -> int:
    xs, ys, grid = read_grid_csv(args.infile)
    meta = render_heatmap_ppm(xs, ys, grid, args.outfile, scale=args.scale)
    print(f"wrote {args.outfile} ({meta['nx']}x{meta['ny']} grid, scale {meta['scale']})")
    return 0


def _add_common(parser, cache=False):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="daql-out", help="output directory")
    parser.add_argument("--workers", type=int, default=1)
    if cache:
        parser.add_argument("--cache-dir", default=None,
                            help="cache root (default $DAQL_CACHE_DIR or ~/.cache/daql)")


def _add_data_flags(parser):
    for name in ("train-images", "train-labels", "test-images", "test-labels"):
        parser.add_argument(f"--{name}", default=None, help=f"IDX path for {name}")


def _add_classifier_flags(parser):
    parser.add_argument("--digits", default="3,8")
    parser.add_argument("--ansatz", choices=["da", "digital"], default="da")
    parser.add_argument("--layers", type=int, default=12)
    parser.add_argument("--n", type=int, default=8)
    parser.add_argument("--noise", choices=["on", "off"], default="off")
    parser.add_argument("--epochs", type=int, default=70)
    parser.add_argument("--batch", type=int, default=100)
    parser.add_argument("--restarts", type=int, default=1)
    parser.add_argument("--t", type=float, default=None, help="quench time in us")
    parser.add_argument("--rba", type=float, default=0.87, help="R_b / a")
    parser.add_argument("--phi", type=float, default=None, help="digital entangler angle")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="daql",
                                     description="digital-analog quantum learning toolkit")
    parser.add_argument("--version", action="version", version=f"daql {__version__}")
    parser.add_argument("--config", default=None,
                        help="JSON file of flag defaults; explicit flags override")
    sub = parser.add_subparsers(dest="command", required=True)

    fid = sub.add_parser("fidelity", help="layer-fidelity sweeps and sigma calibration")
    fid.add_argument("--axis", choices=["rba", "n"], default=None)
    fid.add_argument("--n", type=int, default=8)
    fid.add_argument("--samples", type=int, default=500)
    fid.add_argument("--values", default=None, help="lo:hi:count or comma list")
    fid.add_argument("--phi", type=float, default=np.pi / 8)
    fid.add_argument("--calibrate-sigma", action="store_true")
    fid.add_argument("--target", type=float, default=0.99)
    _add_common(fid)
    fid.set_defaults(func=cmd_fidelity)

    mnist = sub.add_parser("mnist", help="binary digit classification")
    mnist_sub = mnist.add_subparsers(dest="subaction", required=True)
    mtrain = mnist_sub.add_parser("train", help="train one digit-pair classifier")
    _add_classifier_flags(mtrain)
    _add_data_flags(mtrain)
    _add_common(mtrain, cache=True)
    mtrain.set_defaults(func=cmd_mnist_train)
    mgrid = mnist_sub.add_parser("grid", help="accuracy over a sweep grid")
    mgrid.add_argument("--sweep", choices=["t", "phi", "pairs"], required=True)
    mgrid.add_argument("--values", default=None)
    mgrid.add_argument("--layers-list", default=None, help="comma list of depths for t sweeps")
    mgrid.add_argument("--pairs", default="all", help="'all' or e.g. '3,8;1,9'")
    _add_classifier_flags(mgrid)
    _add_data_flags(mgrid)
    _add_common(mgrid, cache=True)
    mgrid.set_defaults(func=cmd_mnist_grid)

    phase = sub.add_parser("phase", help="phase-boundary learning")
    phase_sub = phase.add_subparsers(dest="subaction", required=True)
    for name, helptext in [("mesh", "build/cache ground states"),
                           ("orderparams", "order-parameter maps"),
                           ("map", "entanglement-entropy map"),
                           ("train", "train anomaly detector, emit learned diagram")]:
        p = phase_sub.add_parser(name, help=helptext)
        p.add_argument("--model", choices=["xxz", "rydberg"], required=True)
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--nodes", default=None, help="e.g. 20x20")
        p.add_argument("--x-range", default=None, help="lo:hi override")
        p.add_argument("--y-range", default=None, help="lo:hi override")
        if name == "train":
            p.add_argument("--point", required=True, help="training coordinates x,y")
            p.add_argument("--ansatz", choices=["da", "digital"], default="da")
            p.add_argument("--layers", type=int, default=2)
            p.add_argument("--runs", type=int, default=20)
            p.add_argument("--noise", choices=["on", "off"], default="off")
            p.add_argument("--epochs", type=int, default=None)
            p.add_argument("--rba", type=float, default=0.87)
            p.add_argument("--phi", type=float, default=None)
        _add_common(p, cache=True)
        p.set_defaults(func=cmd_phase, subaction=name)

    psharp = phase_sub.add_parser("sharpness", help="sharpness of a diagram CSV")
    psharp.add_argument("--in", dest="infile", required=True)
    _add_common(psharp)
    psharp.set_defaults(func=cmd_phase_sharpness)

    render = sub.add_parser("render", help="render x,y,value CSV to a PPM heatmap")
    render.add_argument("--in", dest="infile", required=True)
    render.add_argument("--out", dest="outfile", required=True)
    render.add_argument("--scale", type=int, default=None)
    render.set_defaults(func=cmd_render)

    return parser


def _apply_phase_defaults(args) -> None:
    if getattr(args, "command", None) == "phase" and args.subaction != "sharpness":
        if args.n is None:
            args.n = 8 if args.model == "xxz" else 9
        if args.nodes is None:
            args.nodes = "20x20" if args.model == "xxz" else "21x21"


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config is not None:
        # config file supplies values for flags not given explicitly on the line
        if not Path(args.config).exists():
            print(f"config file not found: {args.config}", file=sys.stderr)
            return 1
        for key, value in json.loads(Path(args.config).read_text()).items():
            flag = "--" + key.replace("_", "-")
            if flag not in argv and hasattr(args, key):
                setattr(args, key, value)
    _apply_phase_defaults(args)
    try:
        return args.func(args)
    except (DataError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

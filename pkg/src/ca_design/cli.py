"""Command-line entry point: design, evaluate, gradcheck, simulate, export."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import data_io, metrics
from .aperture import CodedApertureSet, expand, quantize_for_export, transmittances
from .datasets import build_dataset, load_mnist_idx
from .decoder import forward, predict_classes
from .runs import build_run, build_sensing
from .sensing import CASSI, SPC, add_measurement_noise
from .trainer import gradient_check, train_e2e


def _write_csv(path, rows) -> None:
    Path(path).write_text("\n".join(",".join(r) for r in rows) + "\n")


def cmd_design(args) -> int:
    cfg = data_io.load_config(args.config)
    run = build_run(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    param, net, history = train_e2e(
        run.config, run.train, run.param, run.sensing, run.net
    )
    for epoch in range(len(history)):
        rho_str = " ".join(
            f"rho[{k}]={v:.3g}" for k, v in history.rho[epoch].items()
        )
        print(
            f"epoch {epoch}: loss={history.task_loss[epoch]:.6g} {rho_str} "
            f"mean_transmittance={np.mean(history.transmittance[epoch]):.4f}"
        )
    s = cfg["sensing"]
    dims = (s["shots"], s["rows"], s["cols"], s["planes"] if run.sensing_kind == "cassi" else 1)
    data_io.save_checkpoint(
        out / "checkpoint.bin", param, net, run.sensing_kind, run.config.task, dims
    )
    _write_csv(out / "history.csv", history.csv_rows())
    ca = expand(param)
    data_io.save_ca_raw(out / "ca.raw", ca)
    data_io.save_ca_pgm(out, ca)
    return 0


def _evaluate(param, net, sensing, task, test):
    ca = expand(param)
    measurements = sensing.forward_batch(ca.values, np.asarray(test.scenes))
    out, _ = forward(net, measurements)
    report = {"compression_ratio": sensing.compression_ratio()}
    report["binarization_residual"] = metrics.binarization_residual(ca, [0.0, 1.0])
    if ca.shots >= 2:
        report["correlation_value"] = metrics.correlation_value(ca)
    for s, t in enumerate(transmittances(ca)):
        report[f"transmittance_{s}"] = t
    if task == "classification":
        report["accuracy"] = metrics.accuracy(predict_classes(out), test.targets)
    else:
        targets = np.asarray(test.targets, dtype=np.float64).reshape(out.shape)
        report["psnr_db"] = metrics.psnr(targets, out, peak=1.0)
    return report


def cmd_evaluate(args) -> int:
    param, net, sensing_kind, task, dims = data_io.load_checkpoint(args.checkpoint)
    shots, rows, cols, planes = dims
    sensing = (
        SPC(shots, rows, cols)
        if sensing_kind == "spc"
        else CASSI(shots, rows, cols, planes)
    )
    dataset_path = Path(args.dataset)
    if dataset_path.suffix == ".json":
        import json

        spec = json.loads(dataset_path.read_text())
    else:
        spec = {"kind": args.dataset}
    rng = np.random.default_rng(args.seed)
    _, test = build_dataset(spec, rng)
    if task == "reconstruction":
        test = type(test)(test.scenes, test.scenes.reshape(len(test), -1))
    report = _evaluate(param, net, sensing, task, test)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "metrics.csv", metrics.report_csv_rows(report))
    for key, value in sorted(report.items()):
        print(f"{key}: {value:.6g}")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = data_io.load_config(args.config)
    run = build_run(cfg)
    n_params = run.param.trainables.size + run.net.parameter_count()
    if n_params > 5000:
        print(
            f"refusing finite differences over {n_params} parameters; "
            "use a smaller config",
            file=sys.stderr,
        )
        return 1
    batch = min(4, len(run.train))
    scenes = np.asarray(run.train.scenes[:batch])
    targets = np.asarray(run.train.targets[:batch])
    report = gradient_check(
        run.param, run.net, run.sensing, scenes, targets, run.config
    )
    worst = max(report.values())
    for group, err in report.items():
        print(f"{group}: max relative error {err:.3e}")
    return 0 if worst <= 1e-4 else 1


def cmd_simulate(args) -> int:
    ca = data_io.load_ca_raw(args.ca)
    scene = np.loadtxt(args.scene, delimiter=",", dtype=np.float64)
    if args.model == "cassi":
        planes = args.planes
        scene = scene.reshape(ca.rows, ca.cols, planes)
        model = CASSI(ca.shots, ca.rows, ca.cols, planes)
    else:
        scene = scene.ravel()
        model = SPC(ca.shots, ca.rows, ca.cols)
    g = model.forward(ca, scene).stacked
    snr = None if args.snr == "none" else float(args.snr)
    g = add_measurement_noise(g, snr, np.random.default_rng(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "measurements.csv",
        [[format(v, ".17g")] for v in g],
    )
    import struct

    (out / "measurements.raw").write_bytes(
        b"MEAS" + struct.pack("<I", g.size) + g.astype("<f8").tobytes()
    )
    return 0


def cmd_export(args) -> int:
    param, net, sensing_kind, task, dims = data_io.load_checkpoint(args.checkpoint)
    levels = [float(v) for v in args.levels.split(",")]
    ca = quantize_for_export(expand(param), levels)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data_io.save_ca_raw(out, ca)
    data_io.save_ca_pgm(out.parent, ca)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ca-design",
        description="End-to-end coded-aperture and decoder co-design",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="train a mask + decoder per config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("evaluate", help="metric report on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("simulate", help="apply a saved mask to a scene")
    p.add_argument("--ca", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--snr", default="none")
    p.add_argument("--model", choices=("spc", "cassi"), default="spc")
    p.add_argument("--planes", type=int, default=1)
    p.add_argument("--out", default=".")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export", help="quantize and export a trained mask")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--levels", default="0,1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def run(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return args.func(args)
    except Exception as exc:  # runtime failure contract: message + exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

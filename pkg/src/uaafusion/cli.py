"""Command-line surface: gen-data, train, fuse, attribute, eval, sweep."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import checkpoint, metrics, pgmio
from .data import gen_synthetic
from .errors import DataError, FusionError, NumericAbort
from .fusion import AblationFlags, infer
from .trainer import TrainConfig, train, write_log_csv

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _save_figure(fig, path):
    fig.savefig(path, dpi=120, bbox_inches="tight")


def _loss_figure(log, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    iters = [row[0] for row in log]
    fig, ax = plt.subplots(figsize=(7, 4))
    for idx, label in ((3, "intensity"), (4, "gradient"), (5, "segmentation"), (6, "total")):
        ax.plot(iters, [row[idx] for row in log], label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    _save_figure(fig, path)
    plt.close(fig)


def _sweep_figure(param, rows, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    values = [r[0] for r in rows]
    names = ("en", "sf", "cc", "qabf", "ssim")
    fig, axes = plt.subplots(1, len(names), figsize=(3 * len(names), 3))
    for ax, name, idx in zip(axes, names, range(1, 6)):
        ax.plot(values, [r[idx] for r in rows], marker="o")
        ax.set_xlabel(param)
        ax.set_title(name)
    fig.tight_layout()
    _save_figure(fig, path)
    plt.close(fig)


def _load_dataset(data_dir):
    from .data import SceneSample

    ir_files = sorted(f for f in os.listdir(data_dir) if f.endswith("_ir.pgm"))
    if not ir_files:
        raise DataError(f"no *_ir.pgm files in {data_dir}")
    samples = []
    for ir_name in ir_files:
        stem = ir_name[:-len("_ir.pgm")]
        ir = pgmio.read_pgm(os.path.join(data_dir, ir_name))[0]
        vi = pgmio.read_pgm(os.path.join(data_dir, f"{stem}_vi.pgm"))[0]
        mask = pgmio.read_mask_pgm(os.path.join(data_dir, f"{stem}_mask.pgm"))[0]
        samples.append(SceneSample(ir=ir, vi=vi, mask=mask))
    return samples


def _format_report(report):
    body = ", ".join(f'"{k}": {report[k]:.6f}' for k in ("en", "sf", "cc", "qabf", "ssim"))
    return "{" + body + "}"


def cmd_gen_data(args):
    os.makedirs(args.out, exist_ok=True)
    samples = gen_synthetic(args.count, args.size, args.classes, args.seed)
    for i, s in enumerate(samples):
        pgmio.write_pgm(os.path.join(args.out, f"{i:03d}_ir.pgm"), s.ir)
        pgmio.write_pgm(os.path.join(args.out, f"{i:03d}_vi.pgm"), s.vi)
        pgmio.write_mask_pgm(os.path.join(args.out, f"{i:03d}_mask.pgm"), s.mask)
    meta = [s.meta for s in samples]
    with open(os.path.join(args.out, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)
    return EXIT_OK


def _train_config(args):
    return TrainConfig(stages=args.stages, channels=args.channels,
                       seg_channels=args.seg_channels, num_classes=args.classes,
                       ig_steps=args.ig_steps, lam=args.lam, mu=args.mu,
                       lr=args.lr, epochs=args.epochs, batch=args.batch,
                       seed=args.seed,
                       ablate=AblationFlags.from_names(args.ablate.split(","))
                       if args.ablate else AblationFlags())


def _run_training(config, dataset, ckpt_path):
    try:
        model, log = train(config, dataset)
    except NumericAbort as exc:
        checkpoint.save_model(ckpt_path, exc.model)
        raise
    checkpoint.save_model(ckpt_path, model)
    write_log_csv(ckpt_path + ".log.csv", log)
    if log:
        _loss_figure(log, ckpt_path + ".loss.png")
    return model


def cmd_train(args):
    dataset = _load_dataset(args.data)
    _run_training(_train_config(args), dataset, args.out)
    return EXIT_OK


def cmd_fuse(args):
    model = checkpoint.load_model(args.ckpt, ig_steps=args.ig_steps)
    ir = pgmio.read_pgm(args.ir)
    vi = pgmio.read_pgm(args.vi)
    traj, _, _ = infer(model, ir, vi)
    pgmio.write_pgm(args.out, traj.fused[-1].data)
    if args.dump_stages:
        os.makedirs(args.dump_stages, exist_ok=True)
        for k, fused in enumerate(traj.fused):
            pgmio.write_pgm(os.path.join(args.dump_stages, f"stage_{k:02d}.pgm"), fused.data)
    return EXIT_OK


def cmd_attribute(args):
    model = checkpoint.load_model(args.ckpt, ig_steps=args.ig_steps)
    ir = pgmio.read_pgm(args.ir)
    vi = pgmio.read_pgm(args.vi)
    traj, weights, _ = infer(model, ir, vi)
    os.makedirs(args.out, exist_ok=True)
    pgmio.write_pgm(os.path.join(args.out, "w1.pgm"), weights.w1)
    pgmio.write_pgm(os.path.join(args.out, "w2.pgm"), weights.w2)
    for k, att in enumerate(traj.attention, start=1):
        gate = 1.0 / (1.0 + np.exp(-att))
        pgmio.write_pgm(os.path.join(args.out, f"att_{k:02d}.pgm"), gate)
    return EXIT_OK


def cmd_eval(args):
    fused = pgmio.read_pgm(args.fused)
    ir = pgmio.read_pgm(args.ir)
    vi = pgmio.read_pgm(args.vi)
    report = metrics.metric_report(fused, ir, vi)
    text = _format_report(report)
    print(text)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def cmd_sweep(args):
    dataset = _load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    dest = {"stages": "stages", "channels": "channels", "ig-steps": "ig_steps",
            "lambda": "lam", "mu": "mu"}[args.param]
    rows = []
    for raw in args.values.split(","):
        value = int(raw) if dest in ("stages", "channels", "ig_steps") else float(raw)
        config = _train_config(args)
        setattr(config, dest, value)
        ckpt = os.path.join(args.out, f"{args.param}_{raw.strip()}.ckpt")
        model = _run_training(config, dataset, ckpt)
        scores = []
        for s in dataset:
            traj, _, _ = infer(model, s.ir[None], s.vi[None], mask=s.mask[None])
            fused = np.clip(traj.fused[-1].data, 0.0, 1.0)
            scores.append([metrics.entropy(fused),
                           metrics.spatial_frequency(fused),
                           metrics.correlation_coefficient(fused, s.ir, s.vi),
                           metrics.qabf(fused, s.ir, s.vi),
                           metrics.ssim_fusion(fused, s.ir, s.vi)])
        rows.append([value] + list(np.mean(scores, axis=0)))
    csv_path = os.path.join(args.out, "sweep.csv")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{args.param},en,sf,cc,qabf,ssim\n")
        for row in rows:
            fh.write(f"{row[0]}," + ",".join(f"{v:.6f}" for v in row[1:]) + "\n")
    _sweep_figure(args.param, rows, os.path.join(args.out, "sweep.png"))
    return EXIT_OK


def _add_train_options(p):
    p.add_argument("--stages", type=int, default=5)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--seg-channels", type=int, default=16)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=0.1)
    p.add_argument("--ig-steps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ablate", default="",
                   help="comma-separated flags: " + ",".join(AblationFlags.NAMES))


def build_parser():
    parser = argparse.ArgumentParser(prog="uaafusion")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a fusion model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_train_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fuse", help="fuse an infrared/visible pair")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--ir", required=True)
    p.add_argument("--vi", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-stages")
    p.add_argument("--ig-steps", type=int, default=5)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("attribute", help="export weight and attention maps")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--ir", required=True)
    p.add_argument("--vi", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ig-steps", type=int, default=5)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("eval", help="fusion quality metrics")
    p.add_argument("--fused", required=True)
    p.add_argument("--ir", required=True)
    p.add_argument("--vi", required=True)
    p.add_argument("--json", help="also write the JSON report to this path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train and evaluate over a parameter range")
    p.add_argument("--param", required=True,
                   choices=["stages", "channels", "ig-steps", "lambda", "mu"])
    p.add_argument("--values", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_train_options(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FusionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

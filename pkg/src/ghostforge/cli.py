"""Command-line entry point: ``ghostforge <command> [options]``.

Exit codes: 0 success, 2 configuration/contract error, 3 I/O error,
4 numeric abort during training, 5 gradient audit failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, echo_config, load_config

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_GRADCHECK = 0, 2, 3, 4, 5

log = logging.getLogger("ghostforge")


class CommandError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class Outputs:
    """Tracks files written under a run directory and lists them on close."""

    def __init__(self, out_dir):
        self.root = Path(out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(name)
        return p

    def add(self, p):
        self.files.append(str(Path(p).relative_to(self.root)))

    def close(self):
        (self.root / "outputs.json").write_text(
            json.dumps({"files": sorted(set(self.files))}, indent=2) + "\n", encoding="utf-8")


# ------------------------------------------------------------------ commands

def _objects(spec, cfg, n_objects):
    from .imaging import load_image
    from .optics import builtin_shapes

    if spec.startswith("builtin:"):
        kind = spec.split(":", 1)[1]
        if kind != "shapes":
            raise CommandError(f"unknown builtin object source {spec!r}", EXIT_CONFIG)
        return builtin_shapes(n_objects, cfg.sim.image_size, cfg.seed)
    src = Path(spec)
    if not src.is_dir():
        raise CommandError(f"object directory not found: {src}", EXIT_IO)
    files = sorted(src.glob("*.pgm"))
    if not files:
        raise CommandError(f"no .pgm objects in {src}", EXIT_CONFIG)
    return [load_image(f) for f in files]


def cmd_gen_data(args, cfg):
    from .optics import generate_dataset

    n_objects = args.n_objects if args.n_objects is not None else cfg.data.n_objects
    objects = _objects(args.objects, cfg, n_objects)
    out = Outputs(args.out)
    manifest = generate_dataset(cfg.sim, objects, out.root, cfg.data.split_ratio)
    for e in manifest.entries:
        for name in (e.clean_path, e.degraded_path, e.bucket_path, e.recon_path):
            out.files.append(name)
    out.files.append("manifest.json")
    out.add(echo_config(cfg, out.root))
    out.close()
    n_train, n_test = len(manifest.split("train")), len(manifest.split("test"))
    print(f"manifest: {out.root / 'manifest.json'}")
    print(f"train={n_train} test={n_test}")


def cmd_reconstruct(args, cfg):
    from .imaging import BucketSeries, compare, load_image, save_image
    from .optics import make_patterns
    from .recon import ReconConfig, reconstruct

    try:
        buckets = BucketSeries.load(args.buckets)
    except FileNotFoundError:
        raise CommandError(f"bucket file not found: {args.buckets}", EXIT_IO) from None
    except ValueError as exc:
        raise CommandError(str(exc), EXIT_CONFIG) from None
    sim = replace(cfg.sim, seed=args.patterns_seed)
    if len(buckets) != sim.n_measurements:
        raise CommandError(
            f"count mismatch: bucket file holds {len(buckets)} values, "
            f"configuration yields {sim.n_measurements} patterns", EXIT_CONFIG)
    image = reconstruct(buckets, make_patterns(sim), replace(cfg.recon, normalize="minmax")
                        if cfg.recon.normalize == "none" else cfg.recon)
    out = Outputs(args.out)
    save_image(image, out.path("recon.pgm"))
    if args.truth:
        try:
            truth = load_image(args.truth)
        except FileNotFoundError:
            raise CommandError(f"truth image not found: {args.truth}", EXIT_IO) from None
        # score the image as written, i.e. after 8-bit quantization
        report = compare(load_image(out.root / "recon.pgm"), truth)
        out.path("report.json").write_text(report.to_json() + "\n", encoding="utf-8")
        print(report.to_json())
    out.add(echo_config(cfg, out.root))
    out.close()
    print(f"image: {out.root / 'recon.pgm'}")


def cmd_train(args, cfg):
    from .msgan import TrainingAborted, train
    from .optics import DatasetManifest

    tcfg = cfg.train
    if args.iterations is not None:
        tcfg = replace(tcfg, iterations=args.iterations)
    cfg = replace(cfg, train=tcfg)
    try:
        manifest = DatasetManifest.load(args.manifest)
    except FileNotFoundError:
        raise CommandError(f"manifest not found: {args.manifest}", EXIT_IO) from None
    out = Outputs(args.out)
    out.add(echo_config(cfg, out.root))
    try:
        result = train(manifest, cfg.generator, cfg.discriminator, tcfg, cfg.loss, out.root)
    except TrainingAborted as exc:
        out.close()
        raise CommandError(str(exc), EXIT_NUMERIC) from None
    out.files.append("history.jsonl")
    out.files.append("discriminator.ckpt")
    for p in result.checkpoints:
        out.add(p)
    out.close()
    if result.history:
        last = result.history[-1]
        print(" ".join(f"{k}={last[k]:.6g}" for k in ("l_total", "l_mse", "l_perc", "l_adv_g", "l_adv_d")))
    print(f"checkpoint: {out.root / 'generator.ckpt'}")


def cmd_eval(args, cfg):
    from .imaging import compare, load_image, save_image
    from .msgan import ArchitectureMismatch, load_generator, restore
    from .optics import DatasetManifest
    from .tensor import CheckpointError

    try:
        manifest = DatasetManifest.load(args.manifest)
    except FileNotFoundError:
        raise CommandError(f"manifest not found: {args.manifest}", EXIT_IO) from None
    entries = manifest.split(args.split)
    if not entries:
        raise CommandError(f"split {args.split!r} of {args.manifest} is empty", EXIT_CONFIG)
    try:
        gen = load_generator(args.checkpoint)
    except FileNotFoundError:
        raise CommandError(f"checkpoint not found: {args.checkpoint}", EXIT_IO) from None
    except (ArchitectureMismatch, CheckpointError) as exc:
        raise CommandError(f"incompatible checkpoint: {exc}", EXIT_CONFIG) from None

    out = Outputs(args.out)
    rows, missing = [], []
    with open(out.path("metrics.jsonl"), "w", encoding="utf-8") as fh:
        for e in entries:
            src = e.degraded_path if args.source == "degraded" else e.recon_path
            try:
                clean = load_image(manifest.resolve(e.clean_path))
                degraded = load_image(manifest.resolve(src))
            except FileNotFoundError as exc:
                missing.append(str(exc.filename))
                print(f"missing: {exc.filename}", file=sys.stderr)
                continue
            restored = restore(degraded, gen)
            row = {
                "clean_path": e.clean_path,
                "degraded": compare(degraded, clean).to_dict(),
                "restored": compare(restored, clean).to_dict(),
            }
            rows.append(row)
            fh.write(json.dumps(row) + "\n")
            if cfg.report.triptychs:
                stem = Path(e.clean_path).stem.replace("_clean", "")
                save_image(np.hstack([clean.data, degraded.data, restored.data]),
                           out.path(f"triptychs/{stem}.pgm"))

    def stats(key, metric):
        vals = np.array([float(r[key][metric]) for r in rows])
        finite = vals[np.isfinite(vals)]
        if not len(vals):
            return {"mean": None, "std": None}
        if len(finite) < len(vals):
            return {"mean": "inf", "std": None}
        return {"mean": float(vals.mean()), "std": float(vals.std())}

    summary = {
        "split": args.split,
        "count": len(rows),
        "missing": missing,
        "degraded": {"ssim": stats("degraded", "ssim"), "psnr_db": stats("degraded", "psnr_db")},
        "restored": {"ssim": stats("restored", "ssim"), "psnr_db": stats("restored", "psnr_db")},
    }
    if rows:
        summary["ssim_gain"] = summary["restored"]["ssim"]["mean"] - summary["degraded"]["ssim"]["mean"]
    out.path("summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    out.add(echo_config(cfg, out.root))
    out.close()
    print(json.dumps(summary))
    if missing:
        raise CommandError(f"{len(missing)} entries missing", EXIT_IO)


def cmd_gradcheck(args, cfg):
    from .audit import run_audit

    items = run_audit(args.scope, cfg.seed)
    print(f"{'scope':<13} {'item':<34} {'kind':<11} {'max_rel_err':>10} {'limit':>8} status")
    for it in items:
        print(it.row())
    failed = [it for it in items if not it.passed]
    if failed:
        names = ", ".join(f"{it.scope}:{it.name}" for it in failed)
        raise CommandError(f"gradient check failed for {names}", EXIT_GRADCHECK)
    print(f"all {len(items)} checks passed")


# -------------------------------------------------------------------- parser

def build_parser():
    parser = argparse.ArgumentParser(prog="ghostforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="overrides GHOSTFORGE_SEED and the config seed")
        if out:
            p.add_argument("--out", type=Path, required=True, help="run directory for outputs")

    p = sub.add_parser("gen-data", help="synthesize a clean/degraded/bucket dataset")
    common(p)
    p.add_argument("--objects", default="builtin:shapes", help="directory of .pgm files or builtin:shapes")
    p.add_argument("--n-objects", type=int, help="number of builtin objects")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("reconstruct", help="correlation reconstruction from a bucket file")
    common(p)
    p.add_argument("--buckets", type=Path, required=True)
    p.add_argument("--patterns-seed", type=int, required=True)
    p.add_argument("--truth", type=Path, help="ground-truth image for a metric report")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("train", help="adversarial training on a dataset manifest")
    common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="restore a split and report SSIM/PSNR")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--source", default="degraded", choices=("degraded", "recon"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    common(p, out=False)
    p.add_argument("--scope", default="all",
                   choices=("all", "ops", "mafe", "fusion", "generator", "discriminator", "loss"))
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
        args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

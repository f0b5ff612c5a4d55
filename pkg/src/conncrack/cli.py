"""Command-line entry point.

Subcommands: geometry, encode-maps, synth, train, detect, eval, gradcheck.
Every run writes a run_meta.json echoing the fully resolved configuration, and
all output files are written atomically (temp file + rename), so a failed run
leaves no partial outputs.

Exit codes: 0 success, 2 usage error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

# Cap BLAS pools before numpy loads; one thread keeps results reproducible
# across machines.  CONNCRACK_THREADS overrides.
if "numpy" not in sys.modules:
    _threads = os.environ.get("CONNCRACK_THREADS", "1")
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import numpy as np

from . import __version__
from .errors import ConnCrackError
from .ioutil import write_text_atomic


def _write_run_meta(out_dir: Path, command: str, args: argparse.Namespace) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "tool": "conncrack",
        "version": __version__,
        "command": command,
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
    }
    write_text_atomic(out_dir / "run_meta.json", json.dumps(meta, indent=2, default=str) + "\n")


def _parse_fractions(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip() != ""]


# ---------------------------------------------------------------- geometry


def cmd_geometry(args) -> int:
    from .geometry import MountConfig, profile_csv, resolution_profile

    config = MountConfig(args.height_m, args.alpha_deg, args.fov_deg, args.vpix)
    profile = resolution_profile(config, _parse_fractions(args.fractions))
    csv_text = profile_csv(profile)
    if args.out:
        out = Path(args.out)
        write_text_atomic(out, csv_text)
        _write_run_meta(out.parent, "geometry", args)
    sys.stdout.write(csv_text)
    return 0


# -------------------------------------------------------------- encode-maps


def cmd_encode_maps(args) -> int:
    from .connmaps import DIRECTION_NAMES, encode, save_maps
    from .data import load_mask, save_pgm

    mask = load_mask(args.mask)
    maps = encode(mask)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, name in enumerate(DIRECTION_NAMES):
        save_pgm(out / f"map_{k + 1}_{name}.pgm", maps[k] * 255)
    save_maps(out / "maps.cmap", maps.astype(np.float32))
    _write_run_meta(out, "encode-maps", args)
    print(f"wrote 8 map images and maps.cmap to {out}")
    return 0


# -------------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    from .data import SynthSpec, generate_synthetic_dataset

    spec = SynthSpec(seed=args.seed)
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        for key in ("crack_count", "walk_steps", "thickness"):
            if key in doc:
                doc[key] = tuple(doc[key])
        spec = SynthSpec(**{**doc, "seed": args.seed})
    spec.validate()
    out = Path(args.out_dir)
    manifest = generate_synthetic_dataset(spec, args.count, out)
    _write_run_meta(out, "synth", args)
    counts = {s: len(manifest.for_split(s)) for s in ("train", "val", "test")}
    print(f"wrote {args.count} synthetic pairs to {out} (splits: {counts})")
    return 0


# -------------------------------------------------------------------- train


def _load_configs(path: str | None):
    from .models import CriticConfig, GeneratorConfig, load_model_configs

    if path:
        return load_model_configs(path)
    return GeneratorConfig.desk(), CriticConfig.desk()


def cmd_train(args) -> int:
    from .data import load_manifest, patch_dataset
    from .models import build_critic, build_generator, configs_to_json
    from .training import TrainConfig, train

    gen_cfg, crit_cfg = _load_configs(args.config)
    cfg = TrainConfig(
        lr_generator=args.lr_generator, lr_critic=args.lr_critic, lam=args.lam,
        reduction=args.reduction, clip_c=args.clip_c, n_critic=args.n_critic,
        iterations=args.iters, seed=args.seed, patch_size=args.patch,
        batch_size=args.batch_size, checkpoint_interval=args.checkpoint_interval,
    ).validate()

    manifest = load_manifest(args.data_manifest)
    dataset = list(patch_dataset(manifest, cfg.patch_size, stride=args.stride,
                                 keep_rule=args.keep_rule, split="train"))
    generator = build_generator(gen_cfg, seed=cfg.seed)
    critic = build_critic(crit_cfg, seed=cfg.seed + 1)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_text_atomic(out / "model_config.json",
                      json.dumps(configs_to_json(gen_cfg, crit_cfg), indent=2) + "\n")
    _write_run_meta(out, "train", args)
    log = train(dataset, generator, critic, cfg, out_dir=out)
    if log.rows:
        last = log.rows[-1]
        print(f"trained {cfg.iterations} iterations on {len(dataset)} patches; "
              f"final content={last[1]:.4f} g_wgan={last[2]:.4f} d_wgan={last[3]:.4f}")
    else:
        print("0 iterations requested; parameters unchanged")
    return 0


# ------------------------------------------------------------------- detect


def cmd_detect(args) -> int:
    from .data import load_image, save_mask
    from .models import build_generator
    from .nn.graph import load_checkpoint
    from .pipeline import DetectParams, detect

    gen_cfg, _ = _load_configs(args.config)
    generator = build_generator(gen_cfg, seed=0)
    generator.load_state_dict(load_checkpoint(args.ckpt))
    image = load_image(args.image)
    params = DetectParams(patch_size=args.patch, overlap=args.overlap,
                          tau=args.tau, min_area=args.min_area)
    result = detect(image, generator, params)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_mask(out, result.mask)
    sidecar = {
        "image": args.image, "checkpoint": args.ckpt,
        "patch": args.patch, "overlap": args.overlap, "tau": args.tau,
        "min_area": args.min_area,
        "components_total": result.components_total,
        "components_kept": result.components_kept,
        "component_areas": result.areas,
        "crack_pixels": int(result.mask.sum()),
    }
    write_text_atomic(out.with_suffix(out.suffix + ".json"),
                      json.dumps(sidecar, indent=2) + "\n")
    _write_run_meta(out.parent, "detect", args)
    print(f"wrote {out} ({result.components_kept}/{result.components_total} "
          f"components kept, {sidecar['crack_pixels']} crack pixels)")
    return 0


# --------------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    from .data import load_mask
    from .metrics import (MetricsReport, region_grid, region_grid_csv,
                          report_table, tolerance_metrics)

    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    mask_exts = (".pgm", ".ppm", ".pnm", ".png")
    names = sorted(p.name for p in pred_dir.iterdir()
                   if p.is_file() and p.suffix.lower() in mask_exts)
    if not names:
        raise ConnCrackError(f"no prediction mask files in {pred_dir}")
    rows = []
    tp = fp = fn = 0
    for name in names:
        gt_path = gt_dir / name
        if not gt_path.exists():
            raise ConnCrackError(f"missing ground truth for {name} in {gt_dir}")
        pred = load_mask(pred_dir / name)
        gt = load_mask(gt_path)
        rep = tolerance_metrics(pred, gt, args.tol)
        rows.append((name, rep, 0.0))
        tp, fp, fn = tp + rep.tp, fp + rep.fp, fn + rep.fn
        if args.grid:
            grid = region_grid(pred, gt, tol=args.tol)
            write_text_atomic(Path(args.grid) / f"{name}.grid.csv", region_grid_csv(grid))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    rows.append(("OVERALL", MetricsReport(tp, fp, fn, precision, recall, f1, args.tol), 0.0))
    table = report_table(rows)
    out = Path(args.out)
    write_text_atomic(out, table)
    _write_run_meta(out.parent, "eval", args)
    sys.stdout.write(table)
    return 0


# ----------------------------------------------------------------- gradcheck


def cmd_gradcheck(args) -> int:
    from .nn.gradcheck import layer_kind_report

    report = layer_kind_report(seed=args.seed)
    worst = max(report.values())
    for kind, err in report.items():
        print(f"{kind:18s} max rel err {err:.3e}")
    print(f"worst: {worst:.3e} (threshold {args.threshold:g})")
    return 0 if worst < args.threshold else 1


# ------------------------------------------------------------------ dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conncrack",
        description="Pixel-level crack detection: train, detect, evaluate, plan camera geometry.",
    )
    parser.add_argument("--version", action="version", version=f"conncrack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geometry", help="spatial-resolution table for a camera mount")
    p.add_argument("--height-m", type=float, required=True, dest="height_m")
    p.add_argument("--alpha-deg", type=float, required=True, dest="alpha_deg")
    p.add_argument("--fov-deg", type=float, required=True, dest="fov_deg")
    p.add_argument("--vpix", type=int, default=1080)
    p.add_argument("--fractions", default="0,0.25,0.5,0.75,1")
    p.add_argument("--out", default=None, help="also write the CSV here")
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("encode-maps", help="encode a mask image into 8 connectivity maps")
    p.add_argument("--mask", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.set_defaults(func=cmd_encode_maps)

    p = sub.add_parser("synth", help="generate a synthetic crack dataset")
    p.add_argument("--spec", default=None, help="JSON file of SynthSpec overrides")
    p.add_argument("--count", type=int, default=80)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="adversarial training on a manifest dataset")
    p.add_argument("--config", default=None, help="model config JSON (default: desk-scale)")
    p.add_argument("--data-manifest", required=True, dest="data_manifest")
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--patch", type=int, default=256)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--keep-rule", default="all", choices=("all", "crack-only"), dest="keep_rule")
    p.add_argument("--lr-generator", type=float, default=1e-5, dest="lr_generator")
    p.add_argument("--lr-critic", type=float, default=1e-5, dest="lr_critic")
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--reduction", default="mean", choices=("mean", "sum"))
    p.add_argument("--clip-c", type=float, default=0.01, dest="clip_c")
    p.add_argument("--n-critic", type=int, default=1, dest="n_critic")
    p.add_argument("--batch-size", type=int, default=1, dest="batch_size")
    p.add_argument("--checkpoint-interval", type=int, default=0, dest="checkpoint_interval")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="whole-image crack detection")
    p.add_argument("--image", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config", default=None, help="model config JSON used at training time")
    p.add_argument("--patch", type=int, default=64)
    p.add_argument("--overlap", type=int, default=0)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--min-area", type=int, default=200, dest="min_area")
    p.add_argument("--out", required=True, help="output mask (PNG or PGM)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="tolerance metrics for prediction/GT mask directories")
    p.add_argument("--pred-dir", required=True, dest="pred_dir")
    p.add_argument("--gt-dir", required=True, dest="gt_dir")
    p.add_argument("--tol", type=float, default=5.0)
    p.add_argument("--grid", default=None, help="directory for per-region CSV heat-grids")
    p.add_argument("--out", default="report.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer kind")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=1e-3)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except ConnCrackError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

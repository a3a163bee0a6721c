"""Command-line entry point.

Subcommands: synthesize, train-exposure, train, infer, evaluate, report.
Progress goes to stderr as line-oriented JSON; human summaries go to stdout.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt_io
from .config import (
    TrainConfig,
    env_seed,
    from_dict,
    load_config_file,
    model_preset,
    to_dict,
    train_preset,
)
from .degradation import (
    ExposureConfig,
    SequenceLibrary,
    load_frame,
    save_frame,
    synthesize_dataset,
)
from .errors import ConfigError, DataError, NumericError
from .evaluation import (
    aggregate_reports,
    split_report,
    write_report_csv,
    write_report_summary,
)
from .exposure import train_extractor
from .model import build_model
from .training import WindowDataset, train_joint


def emit(record: dict) -> None:
    print(json.dumps(record), file=sys.stderr, flush=True)


def _parse_exposures(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad exposure list {text!r}") from exc
    if not values:
        raise ConfigError("exposure list is empty")
    return values


def _train_config(args, stage: str) -> TrainConfig:
    if getattr(args, "config", None):
        data = load_config_file(args.config)
        cfg = from_dict(TrainConfig, data)
    else:
        cfg = train_preset(args.preset, stage)
    overrides = {}
    for key in ("lr", "batch", "epochs", "steps_per_epoch", "crop", "seed"):
        value = getattr(args, key.replace("steps_per_epoch", "steps"), None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "exposure_set", None):
        overrides["exposure_set"] = tuple(_parse_exposures(args.exposure_set))
    model_over = {}
    if getattr(args, "shutter", None):
        model_over["shutter"] = args.shutter
    if getattr(args, "window", None):
        model_over["window"] = args.window
    if getattr(args, "exposure_mode", None):
        model_over["exposure_mode"] = args.exposure_mode
    if getattr(args, "adapt_mode", None):
        model_over["adapt_mode"] = args.adapt_mode
    if getattr(args, "no_intra_motion", False):
        model_over["use_intra"] = False
    if getattr(args, "no_inter_motion", False):
        model_over["use_inter"] = False
    if getattr(args, "no_motion_refine", False):
        model_over["use_refine"] = False
    if model_over:
        overrides["model"] = model_preset(cfg.preset, **{**to_dict(cfg.model), **model_over})
    merged = {**to_dict(cfg), **{k: v for k, v in overrides.items() if k != "model"}}
    if "model" in overrides:
        merged["model"] = to_dict(overrides["model"])
    cfg = from_dict(TrainConfig, merged)
    return from_dict(TrainConfig, {**to_dict(cfg), "seed": env_seed(cfg.seed)})


def cmd_synthesize(args) -> int:
    exposures = _parse_exposures(args.exposure)
    shutter = args.shutter
    for e in exposures:
        ExposureConfig(shutter=shutter, exposure=e, window=args.window)  # validate
    run_config = {
        "command": "synthesize",
        "root": str(args.root),
        "out": str(args.out),
        "shutter": shutter,
        "exposure": exposures,
        "window": args.window,
    }
    manifest = synthesize_dataset(
        args.root, args.out, shutter, exposures, window=args.window, run_config=run_config
    )
    emit({"event": "synthesized", "manifest": str(manifest)})
    print(f"wrote blurred dataset and manifest to {args.out}")
    return 0


def cmd_train_exposure(args) -> int:
    cfg = _train_config(args, stage="exposure")
    library = SequenceLibrary.from_directory(args.data)
    dataset = WindowDataset(
        library, cfg.model.shutter, cfg.model.window, exposures=cfg.exposure_set
    )
    result = train_extractor(dataset, cfg, log=emit)
    out = Path(args.out)
    ckpt_io.save_checkpoint(
        out,
        ckpt_io.state_arrays(result.extractor),
        {
            "model": to_dict(cfg.model),
            "train": to_dict(cfg),
            "preset": cfg.preset,
            "stage": "exposure",
        },
    )
    print(f"exposure extractor trained for {len(result.losses)} steps -> {out}")
    print(f"final loss {result.losses[-1]:.4f}")
    return 0


def cmd_train(args) -> int:
    cfg = _train_config(args, stage="joint")
    model = build_model(cfg.model)
    if cfg.model.exposure_mode == "contrastive":
        if not args.exposure_ckpt:
            raise ConfigError("--exposure-ckpt is required for contrastive models")
        ext = ckpt_io.load_checkpoint(args.exposure_ckpt)
        found = ext.config.get("preset")
        if found is not None and found != cfg.preset:
            raise ConfigError(
                f"exposure checkpoint preset {found!r} does not match {cfg.preset!r}"
            )
        ckpt_io.load_into_module(model.extractor, ext.params)
    library = SequenceLibrary.from_directory(args.data)
    dataset = WindowDataset(
        library, cfg.model.shutter, cfg.model.window, exposures=cfg.exposure_set
    )
    out_dir = Path(args.out)
    result = train_joint(dataset, model, cfg, log=emit, checkpoint_dir=out_dir)
    print(f"joint training finished: {len(result.train_losses)} steps")
    print(f"final train MAE {result.train_losses[-1]:.4f}, "
          f"val MAE {result.val_losses[-1]:.4f}")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def cmd_infer(args) -> int:
    model = ckpt_io.load_model_checkpoint(args.ckpt)
    spec = model.spec
    if args.shutter is not None and args.shutter != spec.shutter:
        raise ConfigError(
            f"checkpoint was trained for shutter {spec.shutter}, got --shutter {args.shutter}"
        )
    if len(args.frames) != spec.window:
        raise ConfigError(f"model expects {spec.window} frames, got {len(args.frames)}")
    for f in args.frames:
        if not Path(f).is_file():
            raise DataError(f"input frame {f} not found")
    frames = np.stack([load_frame(f) for f in args.frames])
    known = args.known_exposure
    if known is not None and spec.exposure_mode != "known":
        raise ConfigError(
            "--known-exposure requires a checkpoint trained with exposure_mode='known'"
        )
    with torch.no_grad():
        out = model(
            torch.from_numpy(frames)[None],
            known_exposure=known,
            return_motion=bool(args.dump_motion),
        )
    if args.dump_motion:
        out, bundle = out
        _dump_motion(Path(args.dump_motion), bundle)
    result = out[0].clamp(0, 1).numpy()
    out_dir = Path(args.out)
    for i, frame in enumerate(result):
        save_frame(out_dir / f"{i:06d}.png", frame)
    if not torch.isfinite(out).all():
        raise NumericError("model produced non-finite values")
    emit({"event": "inferred", "frames": len(result), "out": str(out_dir)})
    print(f"wrote {len(result)} reconstructed frames to {out_dir}")
    return 0


def _dump_motion(out_dir: Path, bundle) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    arrays = {
        "offsets_start": bundle.o_start[0],
        "offsets_end": bundle.o_end[0],
        "intra_motion": bundle.m[0],
        "inter_motion": bundle.n[0],
    }
    for name, tensor in arrays.items():
        arr = tensor.detach().cpu().numpy()
        np.save(out_dir / f"{name}.npy", arr)
        flat = arr.reshape(-1, *arr.shape[-2:])
        span = max(float(np.abs(flat).max()), 1e-6)
        for i, plane in enumerate(flat):
            img = np.clip(plane / (2 * span) + 0.5, 0, 1)
            save_frame(out_dir / f"{name}_{i:03d}.png", np.repeat(img[None], 3, axis=0))


def cmd_evaluate(args) -> int:
    model = ckpt_io.load_model_checkpoint(args.ckpt, expect_preset=args.preset)
    spec = model.spec
    if args.shutter is not None and args.shutter != spec.shutter:
        raise ConfigError(
            f"checkpoint was trained for shutter {spec.shutter}, got --shutter {args.shutter}"
        )
    config = ExposureConfig(
        shutter=spec.shutter, exposure=args.exposure, window=spec.window
    )
    if config.exposure % 2 == 0 and args.strict:
        raise ConfigError("evaluation expects an odd exposure (pass --no-strict to override)")
    library = SequenceLibrary.from_directory(args.data)
    reports = []
    known = config.exposure if spec.exposure_mode == "known" else None
    with torch.no_grad():
        for seq_index, start in library.sample_starts(config):
            if args.max_samples and len(reports) >= args.max_samples:
                break
            sample = library.make_sample(config, seq_index, start)
            pred = model(torch.from_numpy(sample.blurred)[None], known_exposure=known)
            reports.append(
                split_report(
                    pred[0].clamp(0, 1).numpy(),
                    sample.sharp_targets,
                    config,
                    strict=args.strict,
                    quantize=args.quantize,
                    metadata={"sequence": sample.source_id, "start": start},
                )
            )
            emit({"event": "evaluated", "sequence": sample.source_id, "start": start})
    if not reports:
        raise DataError("no full samples available for evaluation")
    write_report_csv(args.report, reports)
    run_config = {
        "command": "evaluate",
        "ckpt": str(args.ckpt),
        "data": str(args.data),
        "shutter": spec.shutter,
        "exposure": config.exposure,
        "quantize": bool(args.quantize),
    }
    summary = write_report_summary(
        Path(args.report).with_suffix(".json"), reports, run_config
    )
    agg = summary["aggregates"]
    print(
        f"deblurring {agg['deblur_psnr']:.2f} dB / {agg['deblur_ssim']:.4f}  "
        f"interpolation {agg['interp_psnr']:.2f} dB / {agg['interp_ssim']:.4f}  "
        f"avg {agg['avg_psnr']:.2f} dB / {agg['avg_ssim']:.4f}"
    )
    return 0


def cmd_report(args) -> int:
    import csv as _csv

    rows = []
    for path in args.inputs:
        p = Path(path)
        if not p.is_file():
            raise DataError(f"report input {p} not found")
        with p.open() as fh:
            rows.extend(list(_csv.DictReader(fh)))
    if not rows:
        raise DataError("no rows found in report inputs")
    by_kind = {"deblur": [], "interp": []}
    for row in rows:
        if row["kind"] not in by_kind:
            raise DataError(f"unknown frame kind {row['kind']!r}")
        by_kind[row["kind"]].append((float(row["psnr"]), float(row["ssim"])))
    every = by_kind["deblur"] + by_kind["interp"]

    def agg(pairs):
        if not pairs:
            return float("nan"), float("nan")
        return (
            float(np.mean([p for p, _ in pairs])),
            float(np.mean([s for _, s in pairs])),
        )

    summary = {
        "deblurring": agg(by_kind["deblur"]),
        "interpolation": agg(by_kind["interp"]),
        "avg": agg(every),
        "frames": len(every),
    }
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(summary, indent=2))
    for kind in ("deblurring", "interpolation", "avg"):
        p, s = summary[kind]
        print(f"{kind:>13}: {p:.2f} dB / {s:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidue",
        description="Joint multi-frame video interpolation and deblurring "
        "under unknown exposure time",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="materialize blurred datasets from sharp frames")
    p.add_argument("--root", required=True, help="high-framerate dataset root")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--shutter", type=int, required=True)
    p.add_argument("--exposure", required=True, help="comma-separated exposure lengths")
    p.add_argument("--window", type=int, default=4)
    p.set_defaults(fn=cmd_synthesize)

    def train_common(p):
        p.add_argument("--preset", choices=("micro", "small", "paper"), default="micro")
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--lr", type=float)
        p.add_argument("--batch", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--steps", type=int, help="steps per epoch")
        p.add_argument("--crop", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--shutter", type=int)
        p.add_argument("--window", type=int)
        p.add_argument("--exposure-set", dest="exposure_set")

    p = sub.add_parser("train-exposure", help="contrastive training of the exposure extractor")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    train_common(p)
    p.set_defaults(fn=cmd_train_exposure)

    p = sub.add_parser("train", help="joint training of motion analysis and reconstruction")
    p.add_argument("--data", required=True)
    p.add_argument("--exposure-ckpt", dest="exposure_ckpt")
    p.add_argument("--out", required=True, help="checkpoint directory")
    train_common(p)
    p.add_argument("--exposure-mode", dest="exposure_mode",
                   choices=("contrastive", "known", "agnostic"))
    p.add_argument("--adapt-mode", dest="adapt_mode", choices=("econv", "se", "plain"))
    p.add_argument("--no-intra-motion", dest="no_intra_motion", action="store_true")
    p.add_argument("--no-inter-motion", dest="no_inter_motion", action="store_true")
    p.add_argument("--no-motion-refine", dest="no_motion_refine", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="reconstruct sharp frames from a blurred window")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--frames", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--shutter", type=int)
    p.add_argument("--known-exposure", dest="known_exposure", type=int)
    p.add_argument("--dump-motion", dest="dump_motion")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("evaluate", help="score a checkpoint on a sharp dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--shutter", type=int)
    p.add_argument("--exposure", type=int, required=True)
    p.add_argument("--report", required=True, help="CSV output path")
    p.add_argument("--preset")
    p.add_argument("--quantize", action="store_true",
                   help="round to 8-bit before computing metrics")
    p.add_argument("--no-strict", dest="strict", action="store_false")
    p.add_argument("--max-samples", dest="max_samples", type=int, default=0)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate evaluation CSVs into one summary")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)
    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as exc:
        emit({"event": "error", "kind": "config", "message": str(exc)})
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError, IndexError) as exc:
        emit({"event": "error", "kind": "data", "message": str(exc)})
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        emit({"event": "error", "kind": "numeric", "message": str(exc)})
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

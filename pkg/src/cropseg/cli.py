"""Command line entry point: ``cropseg <subcommand> ...``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure
during training. ``CROPSEG_DEVICE`` selects the torch device (default cpu).
"""
import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import torch

from . import config as cfgmod
from . import imagery, netbuilder, predictor, tracker, trainer
from .config import ConfigError

log = logging.getLogger("cropseg")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(Exception):
    pass


def _device():
    name = os.environ.get("CROPSEG_DEVICE", "cpu")
    if name != "cpu" and not (name.startswith("cuda") and torch.cuda.is_available()):
        raise InputError(f"device {name!r} requested through CROPSEG_DEVICE is not available")
    return torch.device(name)


def _load_net(path):
    p = Path(path)
    if not (p.with_suffix(".json").exists() or Path(str(p) + ".json").exists()):
        raise InputError(f"checkpoint {path} not found")
    if p.suffix not in (".pt", ".json"):
        p = Path(str(p) + ".pt")
    net, meta = netbuilder.load_checkpoint(p)
    return net.to(_device()), meta


def _out_dir(args, cfg, default):
    out = args.out or (cfg or {}).get("output_dir") or default
    out = Path(out) if args.out or cfg is None else cfgmod.resolve(cfg, out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seeded(args):
    torch.manual_seed(args.seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_train(args):
    cfg = cfgmod.load_config(args.config)
    net_cfg = cfgmod.network_config(cfg)
    tc = cfgmod.train_config(cfg, max_epochs=args.epochs, tag=args.tag)
    samples = cfgmod.load_samples(cfg, net_cfg.input_side)
    train_set, val_set = cfgmod.split(cfg, samples)
    extra_val = cfgmod.load_samples(cfg, net_cfg.input_side, key="val_synthetic")
    if extra_val:
        val_set = extra_val
    out = _out_dir(args, cfg, "runs/train")
    _device()
    init_seed = int(cfg.get("init_seed", args.seed))
    net = netbuilder.build_network(net_cfg, init_seed)
    res = trainer.train(net, train_set, val_set, tc, out_dir=out)
    print(json.dumps({"best_epoch": res.best_epoch, "best_val_iou": res.best_val_iou,
                      "checkpoint": str(res.checkpoint), "seconds": round(res.wall_time, 1)}))
    return EXIT_OK


def cmd_finetune(args):
    cfg = cfgmod.load_config(args.config)
    ckpt = args.checkpoint or cfg.get("checkpoint")
    if ckpt is None:
        raise ConfigError("finetune needs a checkpoint (--checkpoint or 'checkpoint' key)")
    ckpt_path = Path(ckpt) if args.checkpoint else cfgmod.resolve(cfg, ckpt)
    net, _ = _load_net(ckpt_path)
    expected = cfgmod.network_config(cfg) if cfg.get("network") else None
    if expected is not None and expected != net.config:
        raise ConfigError(f"checkpoint architecture {net.config} does not match configured {expected}")
    d = dict(cfg.get("training") or {})
    d.setdefault("learning_rate", 1e-4)
    cfg["training"] = d
    tc = cfgmod.train_config(cfg, max_epochs=args.epochs, tag=args.tag)
    samples = cfgmod.load_samples(cfg, net.config.input_side)
    train_set, val_set = cfgmod.split(cfg, samples)
    out = _out_dir(args, cfg, "runs/finetune")
    res = trainer.fine_tune(net, train_set, val_set, tc, out_dir=out)
    print(json.dumps({"best_epoch": res.best_epoch, "best_val_iou": res.best_val_iou,
                      "checkpoint": str(res.checkpoint)}))
    return EXIT_OK


def cmd_eval(args):
    cfg = cfgmod.load_config(args.config)
    net, _ = _load_net(args.checkpoint)
    samples = cfgmod.load_samples(cfg, net.config.input_side)
    if args.split == "val":
        samples = cfgmod.split(cfg, samples)[1]
    elif args.split == "train":
        samples = cfgmod.split(cfg, samples)[0]
    res = trainer.evaluate(net, samples, augmented=args.augmented, seed=args.seed, use_d4=args.d4)
    out = _out_dir(args, None, "runs/eval")
    with open(out / "eval.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["source_id", "iou"])
        for s, v in zip(samples, res.per_sample):
            w.writerow([s.source_id, repr(v)])
    print(json.dumps({"mean_iou": res.mean_iou, "samples": len(samples)}))
    return EXIT_OK


def cmd_ablate(args):
    cfg = cfgmod.load_config(args.config)
    ab = cfg.get("ablation") or {}
    samples = cfgmod.load_samples(cfg, imagery.SCENE_PRESETS["hard"].width if not cfg.get("data", {}).get("synthetic")
                                  else cfgmod.scene_spec(cfg["data"]["synthetic"]).width)
    kw = {}
    for name in ("deep", "shallow"):
        if ab.get(name):
            kw[name] = netbuilder.NetworkConfig(**ab[name])
    out = _out_dir(args, cfg, "runs/ablation")
    aug = imagery.AugmentationConfig(**cfg["augmentation"]) if cfg.get("augmentation") else None
    rows = trainer.run_depth_ablation(
        samples, seeds=tuple(ab.get("seeds", (0, 1, 2))), max_epochs=int(ab.get("max_epochs", 60)),
        eval_every=int(ab.get("eval_every", 5)), deep_batch=int(ab.get("deep_batch", 14)),
        shallow_batch=int(ab.get("shallow_batch", 6)), augmentation=aug, out_dir=out, **kw)
    for seed, margin in trainer.ablation_margins(rows).items():
        print(f"seed {seed}: deep - shallow = {margin:+.4f}")
    return EXIT_OK


def cmd_segment(args):
    net, _ = _load_net(args.checkpoint)
    try:
        photo = imagery.load_image(args.image)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read image {args.image}: {exc}") from exc
    side = net.config.input_side
    crop, _ = imagery.crop_resize(photo, imagery.center_crop_window(photo), side)
    net.forward_batches = net.forward_samples = 0
    prob = predictor.predict_averaged(net, crop, use_d4=not args.no_d4, average=args.average)
    mask = predictor.binarize(prob, args.threshold)
    out = Path(args.out) if args.out else Path(args.image).parent
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.image).stem
    imagery.save_image(out / f"{stem}_overlay.png", predictor.render_overlay(crop, mask, args.alpha))
    imagery.save_probability_png(out / f"{stem}_prob.png", prob)
    imagery.save_mask(out / f"{stem}_mask.png", mask)
    print(json.dumps({"foreground_pixels": int(mask.sum()), "forward_batches": net.forward_batches,
                      "forward_samples": net.forward_samples, "out": str(out)}))
    return EXIT_OK


def _parse_center(text):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise InputError(f"--center must be 'x,y', got {text!r}") from exc
    return x, y


def cmd_track(args):
    cfg = cfgmod.load_config(args.config) if args.config else {}
    tcfg = cfg.get("tracking") or {}
    net, _ = _load_net(args.checkpoint)
    manifest = Path(args.manifest)
    if not manifest.exists():
        raise InputError(f"manifest {manifest} not found")
    entries = tracker.read_manifest(manifest)
    if not entries:
        raise InputError(f"manifest {manifest} lists no photos")
    center = _parse_center(args.center) if args.center else tcfg.get("center")
    if center is None:
        raise InputError("a target center is required (--center x,y)")
    try:
        first = entries[0].load()
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read first photo: {exc}") from exc
    h, w = first.shape[:2]
    if not (0 <= center[0] <= w and 0 <= center[1] <= h):
        raise InputError(f"center {center} lies outside the first {w}x{h} photo")
    window = args.window if args.window is not None else tcfg.get("window")
    cap = args.cap if args.cap is not None else tcfg.get("cap", tracker.DEFAULT_CAP)
    use_d4 = (not args.no_d4) and tcfg.get("use_d4", True)
    seg = tracker.NetworkSegmenter(net, use_d4=use_d4, threshold=args.threshold or tcfg.get("threshold", 0.5))
    out = _out_dir(args, None, "runs/track")
    t0 = time.perf_counter()
    series = tracker.track(seg, entries, center, base_window=window,
                           window_factor=tcfg.get("window_factor", args.window_factor), out_dir=out)
    tracker.write_track_csv(series, out / "track_raw.csv")
    clamped = tracker.clamp_outliers(series, cap)
    tracker.write_track_csv(clamped, out / "track_clamped.csv")
    tracker.report(clamped, out / "report")
    (out / "track_manifest.json").write_text(json.dumps({"config": clamped.config, "photos": clamped.manifest},
                                                        indent=2), encoding="utf-8")
    flagged = sum(r.clamped or r.low_confidence for r in clamped.records)
    print(f"frames processed: {len(series.records)}  flagged: {flagged}  "
          f"wall time: {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


def cmd_report(args):
    path = Path(args.csv)
    if not path.exists():
        raise InputError(f"{path} not found")
    series = tracker.read_track_csv(path)
    if args.cap is not None:
        series = tracker.clamp_outliers(series, args.cap)
    out = _out_dir(args, None, str(path.parent / "report"))
    highlight = []
    for span in args.highlight or ():
        a, b = span.split(":")
        highlight.append((int(a), int(b)))
    files = tracker.report(series, out, highlight=highlight)
    print(json.dumps({k: [str(p) for p in v] for k, v in files.items()}))
    return EXIT_OK


def cmd_synth(args):
    out = _out_dir(args, None, "synthetic")
    if args.config:
        cfg = cfgmod.load_config(args.config)
        syn = (cfg.get("data") or {}).get("synthetic") or {}
    else:
        syn = {"preset": args.preset}
    spec = cfgmod.scene_spec(syn)
    if args.sequence:
        frames = imagery.generate_track_sequence(args.count, seed=args.seed)
        with open(out / "manifest.csv", "w", newline="", encoding="utf-8") as fh, \
                open(out / "truth.csv", "w", newline="", encoding="utf-8") as th:
            mw, tw = csv.writer(fh), csv.writer(th)
            mw.writerow(["photo_id", "path"])
            tw.writerow(["photo_id", "cx", "cy", "area"])
            for i, fr in enumerate(frames):
                name = f"photo_{i:04d}.png"
                imagery.save_image(out / name, fr.photo)
                mw.writerow([i, name])
                tw.writerow([i, repr(fr.center[0]), repr(fr.center[1]), repr(fr.area)])
        print(json.dumps({"frames": len(frames), "first_center": frames[0].center, "out": str(out)}))
        return EXIT_OK
    for i in range(args.count):
        scene = imagery.generate_synthetic_scene(spec, seed=[args.seed, i])
        name = f"scene_{i:04d}"
        imagery.save_image(out / f"{name}.png", scene.image)
        imagery.save_mask(out / f"{name}_mask.png", scene.mask)
        p = scene.params
        t = np.linspace(0, 2 * np.pi, 96, endpoint=False)
        a, b, th = p["radius"], p["radius"] * p["aspect"], p["theta"]
        xs = p["cx"] + a * np.cos(t) * np.cos(th) - b * np.sin(t) * np.sin(th)
        ys = p["cy"] + a * np.cos(t) * np.sin(th) + b * np.sin(t) * np.cos(th)
        ann = imagery.PolygonAnnotation(list(zip(xs.tolist(), ys.tolist())), "fruit", spec.width, spec.height)
        imagery.write_annotation(out / f"{name}.json", ann, f"{name}.png")
    print(json.dumps({"scenes": args.count, "out": str(out)}))
    return EXIT_OK


def cmd_probe(args):
    try:
        photo = imagery.load_image(args.image)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read image {args.image}: {exc}") from exc
    h, w = photo.shape[:2]
    cols = args.columns
    cell = w / cols
    rows = max(1, int(round(h / cell)))
    gray = photo.mean(axis=2)
    ramp = " .:-=+*#%@"
    print(f"{w}x{h} photo, one character = {cell:.1f} px; column/row labels give pixel coordinates")
    print("      " + "".join(str(int(c * cell) // 100 % 10) if c % 5 == 0 else " " for c in range(cols)))
    for r in range(rows):
        y0, y1 = int(r * h / rows), max(int((r + 1) * h / rows), int(r * h / rows) + 1)
        line = ""
        for c in range(cols):
            x0, x1 = int(c * cell), max(int((c + 1) * cell), int(c * cell) + 1)
            v = gray[y0:y1, x0:x1].mean()
            line += ramp[min(int(v * len(ramp)), len(ramp) - 1)]
        print(f"{y0:5d} {line}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="cropseg", description=__doc__.split("\n")[0])
    p.add_argument("--seed", type=int, default=0, help="global random seed")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="train a network from a run config")
    s.add_argument("config")
    s.add_argument("--out")
    s.add_argument("--epochs", type=int, help="override training.max_epochs")
    s.add_argument("--tag")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("finetune", help="continue training a checkpoint on new data")
    s.add_argument("config")
    s.add_argument("--checkpoint")
    s.add_argument("--out")
    s.add_argument("--epochs", type=int)
    s.add_argument("--tag")
    s.set_defaults(func=cmd_finetune)

    s = sub.add_parser("eval", help="mean IoU of a checkpoint on a dataset")
    s.add_argument("checkpoint")
    s.add_argument("config")
    s.add_argument("--split", choices=("all", "train", "val"), default="all")
    s.add_argument("--augmented", action="store_true")
    s.add_argument("--d4", action="store_true", help="average over the 8 square symmetries")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", help="deep vs shallow comparison")
    s.add_argument("config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("segment", help="segment the central object of one image")
    s.add_argument("checkpoint")
    s.add_argument("image")
    s.add_argument("--no-d4", action="store_true")
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--alpha", type=float, default=0.4)
    s.add_argument("--average", choices=("probability", "logit"), default="probability")
    s.add_argument("--out")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("track", help="follow one fruit through a photo series")
    s.add_argument("checkpoint")
    s.add_argument("manifest", help="photo directory or photo_id,path[,timestamp] CSV")
    s.add_argument("--center", help="target position x,y in the first photo")
    s.add_argument("--window", type=float, help="base crop window side in pixels")
    s.add_argument("--window-factor", type=float, default=3.0)
    s.add_argument("--cap", type=float)
    s.add_argument("--threshold", type=float)
    s.add_argument("--no-d4", action="store_true")
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("report", help="plots and summary CSVs from a track CSV")
    s.add_argument("csv")
    s.add_argument("--cap", type=float)
    s.add_argument("--highlight", action="append", help="photo-id span a:b to highlight")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("synth", help="write synthetic scenes or a synthetic photo series")
    s.add_argument("--config")
    s.add_argument("--preset", default="default", choices=sorted(imagery.SCENE_PRESETS))
    s.add_argument("--count", type=int, default=10)
    s.add_argument("--sequence", action="store_true", help="write a drifting, growing time series")
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("probe", help="print a coarse coordinate grid of a photo")
    s.add_argument("image")
    s.add_argument("--columns", type=int, default=64)
    s.set_defaults(func=cmd_probe)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _seeded(args)
    try:
        return args.func(args)
    except trainer.TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, InputError, imagery.AnnotationError, netbuilder.ConfigurationError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

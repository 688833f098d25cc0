"""Training, fine-tuning, evaluation and the depth ablation."""
import copy
import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import imagery, netbuilder, objectives

log = logging.getLogger(__name__)

CURVE_FIELDS = ("epoch", "train_loss", "val_loss", "train_iou", "val_iou")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 14
    max_epochs: int = 300
    eval_every: int = 10
    augmentation: imagery.AugmentationConfig = None
    seed: int = 0
    threshold: float = 0.5
    tag: str = "run"
    betas: tuple = (0.9, 0.999)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")
        if isinstance(self.augmentation, dict):
            self.augmentation = imagery.AugmentationConfig(**self.augmentation)
        self.betas = tuple(self.betas)

    def to_dict(self):
        d = asdict(self)
        d["augmentation"] = None if self.augmentation is None else asdict(self.augmentation)
        return d


@dataclass
class TrainingRecord:
    epoch: int
    train_loss: float
    val_loss: float
    train_iou: float
    val_iou: float


@dataclass
class TrainResult:
    net: torch.nn.Module          # network holding the best parameters, eval mode
    best_epoch: int
    best_val_iou: float
    records: list
    checkpoint: Path = None
    wall_time: float = 0.0


@dataclass
class EvalResult:
    mean_iou: float
    per_sample: list = field(default_factory=list)


def _stack_images(images):
    return torch.from_numpy(np.stack([np.asarray(im, dtype=np.float32).transpose(2, 0, 1) for im in images]))


def _stack_masks(masks):
    return torch.from_numpy(np.stack([np.asarray(m, dtype=np.float32) for m in masks])[:, None])


def dataset_hash(samples):
    h = hashlib.sha256()
    for s in samples:
        h.update(np.ascontiguousarray(s.image, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(s.mask, dtype=np.uint8).tobytes())
    return h.hexdigest()


def _check_side(net, samples, what):
    side = net.config.input_side
    for s in samples:
        if s.image.shape[:2] != (side, side):
            raise netbuilder.ConfigurationError(
                f"{what} sample {s.source_id!r} is {s.image.shape[1]}x{s.image.shape[0]}, "
                f"network expects {side}x{side}")


def _eval_metrics(net, samples, threshold, batch=16):
    """Mean soft-dice loss and mean IoU in evaluation mode."""
    losses, ious = [], []
    net.eval()
    with torch.no_grad():
        for i in range(0, len(samples), batch):
            chunk = samples[i:i + batch]
            # double precision so the 0.5 cut agrees with predictor.binarize
            p = torch.sigmoid(net(_stack_images([s.image for s in chunk])).double()).numpy()[:, 0]
            for k, s in enumerate(chunk):
                losses.append(objectives.soft_dice_loss(p[k], s.mask))
                ious.append(objectives.iou(p[k] >= threshold, s.mask))
    return math.fsum(losses) / len(losses), math.fsum(ious) / len(ious)


def train(net, train_set, val_set, config, out_dir=None):
    """Adam on the soft dice loss, keeping the parameters with the best validation IoU.

    One epoch is a full shuffled pass over ``train_set`` (the last batch may
    be short). Metrics are recorded every ``config.eval_every`` epochs and at
    the final epoch. When ``val_set`` is empty the last evaluated parameters
    are kept and the validation columns hold training-set metrics measured
    without augmentation.
    """
    train_set = list(train_set)
    val_set = list(val_set)
    if not train_set:
        raise ValueError("training set is empty")
    _check_side(net, train_set, "training")
    _check_side(net, val_set, "validation")

    rng = np.random.default_rng(config.seed)
    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate, betas=config.betas)
    records = []
    best_iou, best_epoch, best_state = -1.0, 0, None
    t_start = time.perf_counter()
    n = len(train_set)

    for epoch in range(1, config.max_epochs + 1):
        net.train()
        order = rng.permutation(n)
        batch_losses, batch_sizes, train_ious = [], [], []
        for b, start in enumerate(range(0, n, config.batch_size)):
            chunk = [train_set[i] for i in order[start:start + config.batch_size]]
            if config.augmentation is not None:
                chunk = [imagery.augment(s, config.augmentation, rng) for s in chunk]
            x = _stack_images([s.image for s in chunk])
            t = _stack_masks([s.mask for s in chunk])
            probs = torch.sigmoid(net(x))
            loss = objectives.soft_dice_loss_torch(probs, t)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, batch {b}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            batch_losses.append(loss.item())
            batch_sizes.append(len(chunk))
            pred = (probs.detach().numpy()[:, 0] >= config.threshold)
            train_ious.extend(objectives.iou(p, s.mask) for p, s in zip(pred, chunk))

        if epoch % config.eval_every and epoch != config.max_epochs:
            continue
        train_loss = math.fsum(l * k for l, k in zip(batch_losses, batch_sizes)) / n
        val_loss, val_iou = _eval_metrics(net, val_set or train_set, config.threshold)
        rec = TrainingRecord(epoch, train_loss, val_loss, math.fsum(train_ious) / n, val_iou)
        records.append(rec)
        log.info("epoch %d loss %.4f val_loss %.4f val_iou %.4f", epoch, train_loss, val_loss, val_iou)
        if not all(math.isfinite(v) for v in asdict(rec).values()):
            raise TrainingDivergedError(f"non-finite metrics at epoch {epoch}")
        if (val_set and val_iou > best_iou) or not val_set:
            best_iou, best_epoch = val_iou, epoch
            best_state = copy.deepcopy(net.state_dict())

    net.load_state_dict(best_state)
    net.eval()
    result = TrainResult(net, best_epoch, best_iou, records, wall_time=time.perf_counter() - t_start)
    if out_dir is not None:
        result.checkpoint = write_run_outputs(result, train_set, val_set, config, out_dir)
    return result


def fine_tune(checkpoint, train_set, val_set, config=None, expected_config=None, out_dir=None):
    """Continue training from a checkpoint (path or network) at the fine-tuning rate."""
    if config is None:
        config = TrainConfig(learning_rate=1e-4)
    if isinstance(checkpoint, torch.nn.Module):
        net = copy.deepcopy(checkpoint)
        if expected_config is not None and net.config != expected_config:
            raise netbuilder.ConfigurationError(
                f"checkpoint architecture {net.config} does not match requested {expected_config}")
    else:
        net, _ = netbuilder.load_checkpoint(checkpoint, expected_config)
    return train(net, train_set, val_set, config, out_dir=out_dir)


def evaluate(net, dataset, augmented=False, augmentation=None, seed=0, use_d4=False, threshold=0.5):
    """Per-sample IoU of binarized predictions against the ground truth."""
    from .predictor import binarize, predict_many

    if isinstance(net, (str, Path)):
        net, _ = netbuilder.load_checkpoint(net)
    dataset = list(dataset)
    if not dataset:
        raise ValueError("evaluation dataset is empty")
    if augmented:
        cfg = augmentation or imagery.AugmentationConfig(seed=seed)
        dataset = [imagery.augment(s, cfg, i) for i, s in enumerate(dataset)]
    probs = predict_many(net, [s.image for s in dataset], use_d4=use_d4)
    per = [objectives.iou(binarize(p, threshold), s.mask) for p, s in zip(probs, dataset)]
    return EvalResult(math.fsum(per) / len(per), per)


# --------------------------------------------------------------------------
# run artifacts
# --------------------------------------------------------------------------

def write_curves_csv(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_FIELDS)
        for r in records:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.train_iou), repr(r.val_iou)])


def read_curves_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [TrainingRecord(int(row["epoch"]), float(row["train_loss"]), float(row["val_loss"]),
                               float(row["train_iou"]), float(row["val_iou"]))
                for row in csv.DictReader(fh)]


def plot_curves(records, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    epochs = np.array([r.epoch for r in records])
    paths = []
    for metric in ("loss", "iou"):
        tr = np.array([getattr(r, f"train_{metric}") for r in records])
        va = np.array([getattr(r, f"val_{metric}") for r in records])
        for view, sel in (("full", slice(None)), ("last_half", slice(len(records) // 2, None))):
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.plot(epochs[sel], tr[sel], label="train")
            ax.plot(epochs[sel], va[sel], label="validation")
            ax.set_xlabel("epoch")
            ax.set_ylabel(metric)
            ax.legend()
            fig.tight_layout()
            p = out_dir / f"{metric}_{view}.png"
            fig.savefig(p, dpi=80)
            plt.close(fig)
            paths.append(p)
    return paths


def write_run_outputs(result, train_set, val_set, config, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_curves_csv(result.records, out_dir / "curves.csv")
    plot_curves(result.records, out_dir)
    extra = {"tag": config.tag}
    netbuilder.save_checkpoint(result.net, out_dir, "best", result.best_epoch, result.best_val_iou, extra)
    name = netbuilder.checkpoint_name(config.tag, result.best_epoch)
    path = netbuilder.save_checkpoint(result.net, out_dir, name, result.best_epoch, result.best_val_iou, extra)
    manifest = {
        "train_config": config.to_dict(),
        "network": asdict(result.net.config),
        "train_samples": len(train_set),
        "val_samples": len(val_set),
        "train_hash": dataset_hash(train_set),
        "val_hash": dataset_hash(val_set),
        "best_epoch": result.best_epoch,
        "best_val_iou": result.best_val_iou,
        "checkpoint": path.name,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


# --------------------------------------------------------------------------
# depth ablation
# --------------------------------------------------------------------------

DESK_DEEP = netbuilder.NetworkConfig(depth=5, base_width=4, input_side=96)
DESK_SHALLOW = netbuilder.NetworkConfig(depth=2, base_width=16, input_side=96)


@dataclass
class AblationRow:
    variant: str
    seed: int
    depth: int
    base_width: int
    parameters: int
    best_epoch: int
    best_val_iou: float


def run_depth_ablation(samples, seeds=(0, 1, 2), deep=DESK_DEEP, shallow=DESK_SHALLOW,
                       max_epochs=60, eval_every=5, deep_batch=14, shallow_batch=6,
                       learning_rate=1e-3, augmentation=None, out_dir=None):
    """Train both variants per seed under the same loss, optimizer and learning rate.

    Each seed draws its own train/validation partition, initialization and
    batch order. Returns a list of :class:`AblationRow`.
    """
    samples = list(samples)
    rows = []
    for seed in seeds:
        train_set, val_set = imagery.split_dataset(samples, 0.8, seed)
        for variant, cfg, bs in (("deep", deep, deep_batch), ("shallow", shallow, shallow_batch)):
            net = netbuilder.build_network(cfg, init_seed=seed)
            tc = TrainConfig(learning_rate=learning_rate, batch_size=bs, max_epochs=max_epochs,
                             eval_every=eval_every, augmentation=augmentation, seed=seed,
                             tag=f"{variant}_s{seed}")
            sub = None if out_dir is None else Path(out_dir) / f"{variant}_seed{seed}"
            res = train(net, train_set, val_set, tc, out_dir=sub)
            rows.append(AblationRow(variant, seed, cfg.depth, cfg.base_width,
                                    netbuilder.parameter_count(net), res.best_epoch, res.best_val_iou))
            log.info("ablation %s seed %d: best IoU %.4f @ %d", variant, seed, res.best_val_iou, res.best_epoch)
    if out_dir is not None:
        write_ablation_table(rows, Path(out_dir) / "ablation.csv")
    return rows


def write_ablation_table(rows, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "seed", "depth", "base_width", "parameters", "best_epoch", "best_val_iou"])
        for r in rows:
            w.writerow([r.variant, r.seed, r.depth, r.base_width, r.parameters, r.best_epoch, repr(r.best_val_iou)])


def ablation_margins(rows):
    """Deep minus shallow best IoU for each seed."""
    by = {(r.variant, r.seed): r.best_val_iou for r in rows}
    seeds = sorted({r.seed for r in rows})
    return {s: by[("deep", s)] - by[("shallow", s)] for s in seeds}

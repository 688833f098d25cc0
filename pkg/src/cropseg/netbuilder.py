"""Encoder-decoder segmentation network with strided-conv downsampling.

One recipe covers the full-size network (depth 7, base width 16), the shallow
variant (depth 4, base width 64) and the small desk-scale variants used for
training on CPU.
"""
import datetime
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    depth: int = 7
    base_width: int = 16
    input_side: int = 512
    use_batch_norm: bool = True
    batch_norm_affine: bool = False

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}")
        if self.base_width < 1:
            raise ConfigurationError(f"base_width must be >= 1, got {self.base_width}")
        if self.input_side < 1 or self.input_side % (2 ** self.depth):
            raise ConfigurationError(
                f"input_side {self.input_side} is not divisible by 2**depth = {2 ** self.depth}")

    def widths(self):
        """Channel count per resolution level, stem first."""
        return [self.base_width * 2 ** i for i in range(self.depth + 1)]


CROP_CONFIG = NetworkConfig(depth=7, base_width=16, input_side=512)
SHALLOW_CONFIG = NetworkConfig(depth=4, base_width=64, input_side=512)


class ConvUnit(nn.Sequential):
    """conv -> [batch norm] -> ReLU"""

    def __init__(self, conv, channels, cfg):
        layers = [conv]
        if cfg.use_batch_norm:
            layers.append(nn.BatchNorm2d(channels, affine=cfg.batch_norm_affine))
        layers.append(nn.ReLU(inplace=True))
        super().__init__(*layers)


def _conv3(cin, cout, cfg):
    return ConvUnit(nn.Conv2d(cin, cout, 3, padding=1), cout, cfg)


class CropNet(nn.Module):
    """The segmentation network; outputs one logit channel per pixel."""

    def __init__(self, config):
        super().__init__()
        self.config = config
        w = config.widths()
        b = config.base_width
        self.stem = nn.Sequential(_conv3(3, b, config), _conv3(b, b, config))
        self.down = nn.ModuleList()
        for i in range(1, config.depth + 1):
            self.down.append(nn.Sequential(
                ConvUnit(nn.Conv2d(w[i - 1], w[i], 2, stride=2), w[i], config),
                _conv3(w[i], w[i], config),
                _conv3(w[i], w[i], config),
            ))
        # decoder stages ordered bottom-up: stage for level i brings w[i] -> w[i-1]
        self.up = nn.ModuleList()
        self.merge = nn.ModuleList()
        for i in range(config.depth, 0, -1):
            self.up.append(ConvUnit(nn.ConvTranspose2d(w[i], w[i - 1], 2, stride=2), w[i - 1], config))
            self.merge.append(nn.Sequential(
                _conv3(2 * w[i - 1], w[i - 1], config),
                _conv3(w[i - 1], w[i - 1], config),
            ))
        self.head = nn.Sequential(
            _conv3(2 * b, b, config),
            _conv3(b, b, config),
            nn.Conv2d(b, 1, 3, padding=1),
        )
        self.trace = None  # set to a list to record (stage, shape) pairs
        self.forward_batches = 0
        self.forward_samples = 0

    def _record(self, stage, x):
        if self.trace is not None:
            self.trace.append((stage, tuple(x.shape)))

    def forward(self, x):
        side = self.config.input_side
        if x.dim() != 4 or x.shape[1] != 3 or x.shape[2] != side or x.shape[3] != side:
            raise ValueError(f"expected input of shape (B, 3, {side}, {side}), got {tuple(x.shape)}")
        self.forward_batches += 1
        self.forward_samples += int(x.shape[0])
        stem = self.stem(x)
        self._record("stem", stem)
        skips = [stem]
        h = stem
        for i, block in enumerate(self.down, start=1):
            h = block(h)
            self._record(f"enc{i}", h)
            skips.append(h)
        for k, (up, merge) in enumerate(zip(self.up, self.merge)):
            level = self.config.depth - k - 1
            h = up(h)
            h = merge(torch.cat([skips[level], h], dim=1))
            self._record(f"dec{level}", h)
        return self.head(torch.cat([stem, h], dim=1))


def _init_parameters(net, seed):
    gen = torch.Generator().manual_seed(int(seed))
    for m in net.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            bound = math.sqrt(6.0 / fan_in)
            with torch.no_grad():
                m.weight.uniform_(-bound, bound, generator=gen)
                m.bias.zero_()


def build_network(config, init_seed=0):
    net = CropNet(config)
    _init_parameters(net, init_seed)
    return net


def build_crop(init_seed=0):
    return build_network(CROP_CONFIG, init_seed)


def build_shallow(init_seed=0):
    return build_network(SHALLOW_CONFIG, init_seed)


def parameter_count(net):
    return sum(p.numel() for p in net.parameters() if p.requires_grad)


def closed_form_parameter_count(config):
    """Trainable scalars of :class:`CropNet` computed from the recipe alone."""
    def conv(cin, cout, k):
        return cin * cout * k * k + cout

    bn = 2 if (config.use_batch_norm and config.batch_norm_affine) else 0
    w = config.widths()
    b = config.base_width
    total = conv(3, b, 3) + conv(b, b, 3) + 2 * bn * b
    for i in range(1, config.depth + 1):
        c, prev = w[i], w[i - 1]
        total += conv(prev, c, 2) + 2 * conv(c, c, 3) + 3 * bn * c
        total += conv(c, prev, 2) + conv(2 * prev, prev, 3) + conv(prev, prev, 3) + 3 * bn * prev
    total += conv(2 * b, b, 3) + conv(b, b, 3) + conv(b, 1, 3) + 2 * bn * b
    return total


def forward(net, batch):
    """Run the network; numpy in gives numpy out, tensors stay tensors.

    Gradients are tracked only for tensor input while the network is in
    training mode.
    """
    if isinstance(batch, torch.Tensor):
        return net(batch)
    x = torch.as_tensor(np.asarray(batch, dtype=np.float32))
    with torch.no_grad():
        return net(x).numpy()


# --------------------------------------------------------------------------
# checkpoints ("network dictionaries")
# --------------------------------------------------------------------------

def checkpoint_name(tag, epoch):
    return f"net_dic_{tag}_{int(epoch):05d}"


def save_checkpoint(net, directory, name, epoch=0, validation_iou=None, extra=None):
    """Write ``<name>.pt`` (state dict) and ``<name>.json`` (sidecar)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(net.state_dict(), directory / f"{name}.pt")
    meta = {
        "name": name,
        "config": asdict(net.config),
        "epoch": int(epoch),
        "validation_iou": None if validation_iou is None else float(validation_iou),
        "creation_date": datetime.date.today().isoformat(),
    }
    if extra:
        meta.update(extra)
    (directory / f"{name}.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return directory / f"{name}.pt"


def load_checkpoint(path, config=None):
    """Load a checkpoint written by :func:`save_checkpoint`.

    ``path`` may point at the ``.pt`` file, the ``.json`` sidecar or omit the
    suffix. With ``config`` given, a mismatch with the stored recipe raises
    :class:`ConfigurationError`.
    """
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".pt", ".json") else path
    meta = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    stored = NetworkConfig(**meta["config"])
    if config is not None and config != stored:
        raise ConfigurationError(f"checkpoint architecture {stored} does not match requested {config}")
    net = CropNet(stored)
    net.load_state_dict(torch.load(stem.with_suffix(".pt"), map_location="cpu", weights_only=True))
    net.eval()
    return net, meta

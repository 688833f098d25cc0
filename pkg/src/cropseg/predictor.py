"""Inference with averaging over the eight symmetries of the square."""
from itertools import product
from typing import NamedTuple

import numpy as np
import torch


class D4Element(NamedTuple):
    """Horizontal reflection (if ``reflected``) followed by ``rotation`` quarter turns."""
    rotation: int = 0
    reflected: bool = False

    def compose(self, other):
        """Element equal to applying ``other`` first, then ``self``."""
        k = (self.rotation + (-other.rotation if self.reflected else other.rotation)) % 4
        return D4Element(k, self.reflected != other.reflected)

    def inverse(self):
        if self.reflected:
            return self
        return D4Element((-self.rotation) % 4, False)


IDENTITY = D4Element(0, False)
D4 = tuple(D4Element(k, r) for r, k in product((False, True), range(4)))


def apply_d4(arr, g, axes=(0, 1)):
    """Permute the pixels of a square array (numpy or torch) by ``g``.

    ``axes`` names the (row, column) axes; use ``(2, 3)`` for NCHW batches.
    """
    r_ax, c_ax = axes
    if arr.shape[r_ax] != arr.shape[c_ax]:
        raise ValueError(f"D4 needs a square input, got {arr.shape[r_ax]}x{arr.shape[c_ax]}")
    if isinstance(arr, torch.Tensor):
        out = torch.flip(arr, dims=(c_ax,)) if g.reflected else arr
        return torch.rot90(out, g.rotation, dims=(r_ax, c_ax)) if g.rotation else out
    out = np.flip(arr, axis=c_ax) if g.reflected else arr
    if g.rotation:
        out = np.rot90(out, g.rotation, axes=(r_ax, c_ax))
    return np.ascontiguousarray(out)


def _to_batch(images):
    x = np.stack([np.asarray(im, dtype=np.float32).transpose(2, 0, 1) for im in images])
    return torch.from_numpy(x)


def predict_many(net, images, use_d4=True, average="probability", chunk=88):
    """Probability maps for a list of ``(S, S, 3)`` images.

    With ``use_d4`` every image is expanded into its 8 transformed copies,
    the network runs on all of them (``chunk`` images per forward batch) and
    the inverse-transformed predictions are averaged, in probability space by
    default or in logit space with ``average="logit"``.
    """
    if average not in ("probability", "logit"):
        raise ValueError(f"average must be 'probability' or 'logit', got {average!r}")
    side = net.config.input_side
    for im in images:
        if im.shape[:2] != (side, side):
            raise ValueError(f"image is {im.shape[1]}x{im.shape[0]}, network expects {side}x{side}")
    group = D4 if use_d4 else (IDENTITY,)
    inputs = [apply_d4(im, g) for im in images for g in group]
    was_training = net.training
    net.eval()
    outs = []
    with torch.no_grad():
        for i in range(0, len(inputs), chunk):
            outs.append(net(_to_batch(inputs[i:i + chunk]))[:, 0].double().numpy())
    net.train(was_training)
    logits = np.concatenate(outs).reshape(len(images), len(group), side, side)

    results = []
    for per_image in logits:
        acc = np.zeros((side, side))
        for g, z in zip(group, per_image):
            v = z if average == "logit" else 1.0 / (1.0 + np.exp(-z))
            acc += apply_d4(v, g.inverse())
        acc /= len(group)
        results.append(1.0 / (1.0 + np.exp(-acc)) if average == "logit" else acc)
    return results


def predict_averaged(net, image, use_d4=True, average="probability"):
    return predict_many(net, [image], use_d4=use_d4, average=average)[0]


def binarize(prob, threshold=0.5):
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return (np.asarray(prob) >= threshold).astype(np.uint8)


OBJECT_TINT = np.array([1.0, 0.0, 0.0])
REST_TINT = np.array([1.0, 1.0, 0.0])


def render_overlay(image, mask, alpha=0.4):
    """Blend red over the object and yellow over everything else."""
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask)
    if image.shape[:2] != mask.shape:
        raise ValueError(f"image {image.shape[:2]} and mask {mask.shape} differ in size")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    tint = np.where(mask[..., None] > 0, OBJECT_TINT, REST_TINT)
    return (1.0 - alpha) * image + alpha * tint

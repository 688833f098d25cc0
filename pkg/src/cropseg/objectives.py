"""Segmentation losses and the IoU metric.

The numpy functions work on whole arrays of any shape in float64 and come
with analytic gradients; :func:`soft_dice_loss_torch` is the batched version
used by the training loop.
"""
import numpy as np
import torch

CE_EPS = 1e-7


def _check(x, t):
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if x.shape != t.shape:
        raise ValueError(f"prediction shape {x.shape} != target shape {t.shape}")
    return x, t


def soft_dice_loss(x, t):
    """``1 - 2 sum(x t) / (sum(x^2) + sum(t^2))``; 0 when both maps are empty."""
    x, t = _check(x, t)
    denom = np.sum(x * x) + np.sum(t * t)
    if denom == 0.0:
        return 0.0
    return float(1.0 - 2.0 * np.sum(x * t) / denom)


def soft_dice_grad(x, t):
    x, t = _check(x, t)
    denom = np.sum(x * x) + np.sum(t * t)
    if denom == 0.0:
        return np.zeros_like(x)
    inter = np.sum(x * t)
    return -2.0 * t / denom + 4.0 * inter * x / denom ** 2


def cross_entropy_loss(x, t, eps=CE_EPS):
    """Pixel-wise binary cross entropy, summed; ``x`` is clamped to ``[eps, 1 - eps]``."""
    x, t = _check(x, t)
    xc = np.clip(x, eps, 1.0 - eps)
    return float(np.sum(-t * np.log(xc) - (1.0 - t) * np.log(1.0 - xc)))


def cross_entropy_grad(x, t, eps=CE_EPS):
    x, t = _check(x, t)
    xc = np.clip(x, eps, 1.0 - eps)
    g = -t / xc + (1.0 - t) / (1.0 - xc)
    return np.where((x > eps) & (x < 1.0 - eps), g, 0.0)


def lp_loss(x, t, p=2.0):
    """``sum |x - t|^p`` for ``p >= 1``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    x, t = _check(x, t)
    return float(np.sum(np.abs(x - t) ** p))


def lp_grad(x, t, p=2.0):
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    x, t = _check(x, t)
    d = x - t
    return p * np.abs(d) ** (p - 1.0) * np.sign(d)


def iou(a, b):
    """Jaccard index of two binary masks; two empty masks score 1."""
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def soft_dice_loss_torch(probs, targets):
    """Soft dice per sample of a ``(B, ...)`` batch, averaged over the batch."""
    dims = tuple(range(1, probs.dim()))
    inter = (probs * targets).sum(dims)
    denom = (probs * probs).sum(dims) + (targets * targets).sum(dims)
    # test for an exact zero so NaN propagates instead of scoring as empty/empty
    empty = denom == 0
    safe = torch.where(empty, torch.ones_like(denom), denom)
    loss = torch.where(empty, torch.zeros_like(denom), 1.0 - 2.0 * inter / safe)
    return loss.mean()


def batch_iou(pred, target):
    """Per-sample IoU for ``(B, H, W)`` binary arrays."""
    return np.array([iou(p, t) for p, t in zip(pred, target)])

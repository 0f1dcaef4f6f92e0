"""Tiny convolutional per-pixel classifier used as the segmentation branch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DomainError, ShapeError
from .tensor import Tensor


def he_uniform(rng, shape):
    """Fan-in scaled uniform init for a conv kernel [Cout,Cin,kh,kw]."""
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class SegNetParams:
    """Three same-padded 3x3 conv layers, ReLU between, logits out."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w3: Tensor
    b3: Tensor

    @classmethod
    def init(cls, rng, hidden=16, num_classes=4):
        return cls(
            w1=Tensor(he_uniform(rng, (hidden, 1, 3, 3)), requires_grad=True),
            b1=Tensor(np.zeros(hidden), requires_grad=True),
            w2=Tensor(he_uniform(rng, (hidden, hidden, 3, 3)), requires_grad=True),
            b2=Tensor(np.zeros(hidden), requires_grad=True),
            w3=Tensor(he_uniform(rng, (num_classes, hidden, 3, 3)), requires_grad=True),
            b3=Tensor(np.zeros(num_classes), requires_grad=True),
        )

    @property
    def num_classes(self):
        return self.w3.shape[0]

    def named_parameters(self, prefix="segnet"):
        for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
            yield f"{prefix}.{name}", getattr(self, name)

    def detached(self):
        """Constant copy: attribution differentiates inputs, not the classifier."""
        return SegNetParams(*(getattr(self, n).detach()
                              for n in ("w1", "b1", "w2", "b2", "w3", "b3")))


def seg_forward(image, params):
    """Per-pixel class logits [N,C_cls,H,W] for a grayscale image [N,1,H,W]."""
    if image.data.ndim != 4 or image.shape[1] != 1:
        raise ShapeError(f"seg_forward expects [N,1,H,W], got {image.shape}")
    x = T.relu(T.conv2d(image, params.w1, params.b1))
    x = T.relu(T.conv2d(x, params.w2, params.b2))
    return T.conv2d(x, params.w3, params.b3)


def one_hot(mask, num_classes):
    """Class-id mask [N,H,W] -> one-hot float array [N,C_cls,H,W]."""
    mask = np.asarray(mask)
    if mask.ndim == 2:
        mask = mask[None]
    if mask.min() < 0 or mask.max() >= num_classes:
        raise DomainError(f"mask class ids outside [0, {num_classes})")
    n, h, w = mask.shape
    oh = np.zeros((n, num_classes, h, w))
    nn, ii, jj = np.meshgrid(np.arange(n), np.arange(h), np.arange(w), indexing="ij")
    oh[nn, mask, ii, jj] = 1.0
    return oh


def cross_entropy(logits, mask):
    """Mean per-pixel -log softmax(logits)[true class], via log-sum-exp."""
    oh = Tensor(one_hot(mask, logits.shape[1]))
    lse = T.logsumexp(logits)
    picked = T.sum_(T.mul(logits, oh), axes=1, keepdims=True)
    return T.mean(T.sub(lse, picked))

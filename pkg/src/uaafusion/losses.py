"""Composite training objective: intensity, gradient, and segmentation terms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import NumericAbort, ShapeError
from .segnet import cross_entropy, seg_forward
from .tensor import Tensor


@dataclass
class LossBreakdown:
    l_int: Tensor
    l_grad: Tensor
    l_seg: Tensor
    l_total: Tensor
    lam: float
    mu: float

    def as_floats(self):
        return (float(self.l_int.data), float(self.l_grad.data),
                float(self.l_seg.data), float(self.l_total.data))


def intensity_loss(fused, image_ir, image_vi, w1, w2):
    """Weighted squared intensity deviation from each source, mean per pixel."""
    if fused.shape != image_ir.shape or fused.shape != image_vi.shape:
        raise ShapeError("intensity_loss shape mismatch")
    d_ir = T.square(T.sub(fused, image_ir))
    d_vi = T.square(T.sub(fused, image_vi))
    return T.mean(T.add(T.mul(w1, d_ir), T.mul(w2, d_vi)))


def gradient_loss(fused, image_ir, image_vi):
    """L1 distance of |Sobel(fused)| to the per-direction max of the sources."""
    gx_f, gy_f = T.sobel(fused)
    gx_ir, gy_ir = T.sobel(image_ir)
    gx_vi, gy_vi = T.sobel(image_vi)
    loss_x = T.mean(T.absolute(T.sub(T.absolute(gx_f),
                                     T.maximum(T.absolute(gx_ir), T.absolute(gx_vi)))))
    loss_y = T.mean(T.absolute(T.sub(T.absolute(gy_f),
                                     T.maximum(T.absolute(gy_ir), T.absolute(gy_vi)))))
    return T.mul(T.add(loss_x, loss_y), 0.5)


def seg_loss(segnet, image_ir, image_vi, fused, mask, fused_only=False):
    """Mean cross-entropy over the three images (or fused only, ablation VIII)."""
    ce_f = cross_entropy(seg_forward(fused, segnet), mask)
    if fused_only:
        return ce_f
    ce_ir = cross_entropy(seg_forward(image_ir.detach(), segnet), mask)
    ce_vi = cross_entropy(seg_forward(image_vi.detach(), segnet), mask)
    return T.mul(T.add(T.add(ce_ir, ce_vi), ce_f), 1.0 / 3.0)


def total_loss(l_int, l_grad, l_seg, lam=1.0, mu=0.1):
    for name, part in (("l_int", l_int), ("l_grad", l_grad), ("l_seg", l_seg)):
        if not np.isfinite(part.data).all():
            raise NumericAbort(f"non-finite loss component {name}")
    l_total = T.add(T.add(l_int, T.mul(l_grad, lam)), T.mul(l_seg, mu))
    return LossBreakdown(l_int=l_int, l_grad=l_grad, l_seg=l_seg,
                         l_total=l_total, lam=lam, mu=mu)


def compute_losses(model, trajectory, image_ir, image_vi, w1, w2, mask, lam=1.0, mu=0.1):
    """Assemble the full objective for a recorded trajectory."""
    flags = model.config.ablate
    fused = trajectory.fused[-1]
    w1 = w1 if isinstance(w1, Tensor) else Tensor(w1)
    w2 = w2 if isinstance(w2, Tensor) else Tensor(w2)
    zero = Tensor(np.float64(0.0))
    l_int = zero if flags.no_l_int else intensity_loss(fused, image_ir, image_vi,
                                                       w1.detach(), w2.detach())
    l_grad = zero if flags.no_l_grad else gradient_loss(fused, image_ir, image_vi)
    l_seg = seg_loss(model.segnet, image_ir, image_vi, fused, mask,
                     fused_only=flags.seg_loss_fused_only)
    return total_loss(l_int, l_grad, l_seg, lam=lam, mu=mu)

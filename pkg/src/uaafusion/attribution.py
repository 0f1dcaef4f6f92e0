"""Integrated-gradients machinery.

Two consumers: class-wise source weights (straight-line path from a zero
image) and the per-stage attention map (piecewise-linear path through the
intermediate fused images of the unrolled network).  All gradients are
taken w.r.t. the image under a frozen copy of the classifier, so nothing
here leaks gradient into the segmentation parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, EmptyClassRegion
from .segnet import one_hot, seg_forward
from .tensor import Tensor


@dataclass
class AttributionWeights:
    w1: np.ndarray  # [N,1,H,W]
    w2: np.ndarray
    per_class_scores: dict = field(default_factory=dict)  # class -> (sum S_ir, sum S_vi)


@dataclass
class AttributionMap:
    values: np.ndarray  # [N,1,H,W]
    stage_index: int
    endpoint_scores: tuple  # (Score at path start, Score at path end)


def _as_array(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _forward(segnet, x):
    """Logits for image tensor x under a frozen classifier.

    Any object with a `forward(image) -> Tensor` method is accepted, which
    lets tests substitute exactly-linear score models.
    """
    if hasattr(segnet, "forward"):
        return segnet.forward(x)
    return seg_forward(x, segnet.detached())


def path_increments(states):
    """Per-segment increments of the piecewise-linear path.

    The last increment absorbs the accumulated rounding of the earlier
    ones, so summing the increments left to right reproduces
    states[-1] - states[0] bitwise (differs from the naive last difference
    by float rounding noise only).
    """
    if len(states) < 2:
        raise ContractError("attribution path needs at least two fused states")
    increments = [states[j] - states[j - 1] for j in range(1, len(states) - 1)]
    partial = np.zeros_like(states[0])
    for d in increments:
        partial = partial + d
    increments.append((states[-1] - states[0]) - partial)
    return increments


def class_score(logits, mask, c):
    """Mean class-c logit over the pixels labelled c (differentiable)."""
    mask = np.asarray(mask)
    if mask.ndim == 2:
        mask = mask[None]
    region = (mask == c)
    count = int(region.sum())
    if count == 0:
        raise EmptyClassRegion(f"class {c} has no pixels in the mask")
    indicator = Tensor(region[:, None].astype(np.float64))
    logit_c = T.slice_axis(logits, c, c + 1, axis=1)
    return T.mul(T.sum_(T.mul(logit_c, indicator)), 1.0 / count)


def _input_gradient(segnet, image_data, score_fn):
    x = Tensor(image_data, requires_grad=True)
    score = score_fn(_forward(segnet, x))
    T.backward(score)
    return x.grad, float(score.data)


def class_integrated_gradients(segnet, image, mask, c, steps):
    """Riemann-sum IG of the class score along the straight path from zero."""
    if steps < 1:
        raise ContractError("integrated gradients needs at least one step")
    img = _as_array(image)
    acc = np.zeros_like(img)
    for m in range(1, steps + 1):
        grad, _ = _input_gradient(segnet, (m / steps) * img,
                                  lambda lg: class_score(lg, mask, c))
        acc += grad
    return acc * img / steps


def attribution_weights(segnet, image_ir, image_vi, mask, steps, eps=1e-8):
    """Per-class source weights w1/w2 with the ReLU-positive-part rule."""
    mask = np.asarray(mask)
    if mask.ndim == 2:
        mask = mask[None]
    ir = _as_array(image_ir)
    w1 = np.zeros_like(ir)
    scores = {}
    for c in np.unique(mask):
        c = int(c)
        region = (mask == c)[:, None]
        s_ir = float(class_integrated_gradients(segnet, image_ir, mask, c, steps)[region].sum())
        s_vi = float(class_integrated_gradients(segnet, image_vi, mask, c, steps)[region].sum())
        scores[c] = (s_ir, s_vi)
        n_ir, n_vi = max(s_ir, 0.0), max(s_vi, 0.0)
        w1[region] = (n_ir + eps) / (n_ir + n_vi + 2.0 * eps)
    return AttributionWeights(w1=w1, w2=1.0 - w1, per_class_scores=scores)


def image_score(logits, mask):
    """Mean over all pixels of the logit at each pixel's mask class."""
    oh = Tensor(one_hot(np.asarray(mask), logits.shape[1]))
    n_pixels = oh.data.shape[0] * oh.data.shape[2] * oh.data.shape[3]
    return T.mul(T.sum_(T.mul(logits, oh)), 1.0 / n_pixels)


def unfolding_attribution_map(segnet, fused_states, mask):
    """Attention map along the piecewise-linear path through the stage outputs."""
    states = [_as_array(s) for s in fused_states]
    increments = path_increments(states)
    values = np.zeros_like(states[0])
    score_fn = lambda lg: image_score(lg, mask)
    score_end = None
    for j in range(1, len(states)):
        grad, score_end = _input_gradient(segnet, states[j], score_fn)
        values += grad * increments[j - 1]
    _, score_start = _input_gradient(segnet, states[0], score_fn)
    return AttributionMap(values=values, stage_index=len(states) - 1,
                          endpoint_scores=(score_start, score_end))


def grad_attribution_map(segnet, fused, mask):
    """Single-point gradient variant (ablation: IG -> Grad)."""
    data = _as_array(fused)
    grad, score = _input_gradient(segnet, data, lambda lg: image_score(lg, mask))
    return AttributionMap(values=grad, stage_index=0, endpoint_scores=(score, score))


def predict_mask(segnet, image_ir, image_vi):
    """Inference-time mask: argmax of the averaged per-pixel class probabilities."""
    p_ir = T.softmax(_forward(segnet, Tensor(_as_array(image_ir))))
    p_vi = T.softmax(_forward(segnet, Tensor(_as_array(image_vi))))
    return np.argmax(0.5 * (p_ir.data + p_vi.data), axis=1)

"""Synthetic aligned (infrared, visible, mask) scene generator.

Shapes carry a class-dependent thermal intensity in the infrared channel
and a sinusoidal texture in the visible channel; a random subset of the
shapes is rendered at near-background contrast in the visible image so
each modality sees structure the other misses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError

_BG_THERMAL = 0.12


@dataclass
class SceneSample:
    ir: np.ndarray  # [1,H,W] in [0,1]
    vi: np.ndarray  # [1,H,W] in [0,1]
    mask: np.ndarray  # [H,W] int class ids, 0 = background
    meta: list = field(default_factory=list)


def class_thermal(class_id, num_classes):
    """Fixed class -> infrared intensity map, well above background."""
    return 0.45 + 0.5 * (class_id - 1) / max(num_classes - 2, 1)


def _shape_region(kind, size, rng):
    yy, xx = np.mgrid[0:size, 0:size]
    if kind == "disk":
        r = rng.integers(size // 8, size // 3 + 1)
        cy, cx = rng.integers(r, size - r + 1, size=2)
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r, {"r": int(r), "cy": int(cy), "cx": int(cx)}
    h = rng.integers(size // 6, size // 2 + 1)
    w = rng.integers(size // 6, size // 2 + 1)
    y0 = rng.integers(0, size - h + 1)
    x0 = rng.integers(0, size - w + 1)
    return ((yy >= y0) & (yy < y0 + h) & (xx >= x0) & (xx < x0 + w),
            {"y0": int(y0), "x0": int(x0), "h": int(h), "w": int(w)})


def generate_sample(size, classes, rng):
    mask = np.zeros((size, size), dtype=np.int64)
    ir = np.full((size, size), _BG_THERMAL)
    yy, xx = np.mgrid[0:size, 0:size]
    theta = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(theta) * xx + np.sin(theta) * yy) / size
    vi = 0.35 + 0.25 * ramp
    meta = []

    for _ in range(int(rng.integers(1, 5))):
        kind = "disk" if rng.random() < 0.5 else "rect"
        region, geom = _shape_region(kind, size, rng)
        class_id = int(rng.integers(1, classes))
        thermal = class_thermal(class_id, classes)
        freq = rng.uniform(0.08, 0.3, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        faint = bool(rng.random() < 0.35)
        amp = 0.015 if faint else rng.uniform(0.15, 0.3)
        texture = 0.5 + amp * np.sin(2 * np.pi * (freq[0] * xx + freq[1] * yy) + phase)
        mask[region] = class_id
        ir[region] = thermal
        vi[region] = texture[region]
        meta.append({"kind": kind, "class": class_id, "thermal": thermal,
                     "faint": faint, "amp": float(amp), **geom})

    ir = gaussian_filter(ir, sigma=1.0) + rng.normal(0.0, 0.02, ir.shape)
    return SceneSample(ir=np.clip(ir, 0.0, 1.0)[None],
                       vi=np.clip(vi, 0.0, 1.0)[None],
                       mask=mask, meta=meta)


def gen_synthetic(count, size, classes, seed):
    """Deterministic list of scene samples for a given seed."""
    if size < 8:
        raise ConfigError("sample size must be at least 8")
    if classes < 2:
        raise ConfigError("need at least 2 classes (background + 1)")
    rng = np.random.default_rng(seed)
    return [generate_sample(size, classes, rng) for _ in range(count)]

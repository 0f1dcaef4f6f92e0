"""Fusion quality metrics: EN, SF, CC, SSIM, Qabf.

Pure numpy, no autodiff: these score finished images.  All functions take
2-d float arrays in [0,1].
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeError


def _as_image(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 4:
        img = img[0, 0]
    elif img.ndim == 3:
        img = img[0]
    if img.ndim != 2:
        raise ShapeError(f"expected a 2-d image, got ndim={img.ndim}")
    return img


def entropy(img):
    """Shannon entropy of the 256-level quantized histogram, in bits."""
    img = _as_image(img)
    levels = np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.int64)
    counts = np.bincount(levels.ravel(), minlength=256)
    p = counts[counts > 0] / levels.size
    return float(-(p * np.log2(p)).sum())


def spatial_frequency(img):
    """sqrt(RF^2 + CF^2) of first differences, on the 0-255 scale."""
    img = _as_image(img) * 255.0
    h, w = img.shape
    if h < 2 or w < 2:
        raise ShapeError("spatial_frequency needs at least 2x2")
    rf = np.sqrt(np.mean(np.diff(img, axis=1) ** 2))
    cf = np.sqrt(np.mean(np.diff(img, axis=0) ** 2))
    return float(np.sqrt(rf * rf + cf * cf))


def _pearson(a, b):
    a = a.ravel() - a.mean()
    b = b.ravel() - b.mean()
    va, vb = (a * a).sum(), (b * b).sum()
    if va == 0.0 or vb == 0.0:
        raise DomainError("correlation undefined for zero-variance image")
    return float((a * b).sum() / np.sqrt(va * vb))


def correlation_coefficient(fused, image_ir, image_vi):
    """Mean Pearson correlation of the fused image with each source."""
    f = _as_image(fused)
    return 0.5 * (_pearson(f, _as_image(image_ir)) + _pearson(f, _as_image(image_vi)))


def _gaussian_window(size=11, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax * ax) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def _windowed_mean(img, kernel):
    """Valid-mode 2-d correlation with the window kernel."""
    kh, kw = kernel.shape
    h, w = img.shape
    out = np.zeros((h - kh + 1, w - kw + 1))
    for i in range(kh):
        for j in range(kw):
            out += kernel[i, j] * img[i:i + h - kh + 1, j:j + w - kw + 1]
    return out


def _ssim_pair(x, y, k1=0.01, k2=0.03, data_range=1.0):
    if x.shape[0] < 11 or x.shape[1] < 11:
        raise ShapeError("ssim needs images of at least 11x11")
    win = _gaussian_window()
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    mu_x, mu_y = _windowed_mean(x, win), _windowed_mean(y, win)
    sxx = _windowed_mean(x * x, win) - mu_x * mu_x
    syy = _windowed_mean(y * y, win) - mu_y * mu_y
    sxy = _windowed_mean(x * y, win) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim_fusion(fused, image_ir, image_vi):
    """Mean SSIM of the fused image against each source (11x11 Gaussian window)."""
    f = _as_image(fused)
    return 0.5 * (_ssim_pair(f, _as_image(image_ir)) + _ssim_pair(f, _as_image(image_vi)))


# Xydeas-Petrovic sigmoid constants
_GAMMA_G, _KAPPA_G, _SIGMA_G = 0.9994, -15.0, 0.5
_GAMMA_A, _KAPPA_A, _SIGMA_A = 0.9879, -22.0, 0.8
_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])


def _sobel_strength_angle(img):
    h, w = img.shape
    pad = np.pad(img, 1, mode="edge")
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    for i in range(3):
        for j in range(3):
            gx += _SOBEL_X[i, j] * pad[i:i + h, j:j + w]
            gy += _SOBEL_X.T[i, j] * pad[i:i + h, j:j + w]
    strength = np.sqrt(gx * gx + gy * gy)
    # squash accumulation residue on flat regions to an exact zero
    strength = np.where(strength < 1e-12, 0.0, strength)
    angle = np.arctan2(gy, np.where(gx == 0.0, 1e-10, gx))
    # fold into (-pi/2, pi/2] so opposite-sign edges compare as aligned
    angle = np.where(angle > np.pi / 2, angle - np.pi, angle)
    angle = np.where(angle <= -np.pi / 2, angle + np.pi, angle)
    return strength, angle


def _edge_preservation(g_src, a_src, g_f, a_f):
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(g_src > g_f,
                         np.divide(g_f, g_src, out=np.zeros_like(g_f), where=g_src != 0),
                         np.divide(g_src, g_f, out=np.zeros_like(g_f), where=g_f != 0))
    ratio = np.where((g_src == 0) & (g_f == 0), 1.0, ratio)
    align = 1.0 - np.abs(a_src - a_f) * 2.0 / np.pi
    qg = _GAMMA_G / (1.0 + np.exp(_KAPPA_G * (ratio - _SIGMA_G)))
    qa = _GAMMA_A / (1.0 + np.exp(_KAPPA_A * (align - _SIGMA_A)))
    # normalize by the unity-input ceiling so perfect transfer scores 1
    qg_max = _GAMMA_G / (1.0 + np.exp(_KAPPA_G * (1.0 - _SIGMA_G)))
    qa_max = _GAMMA_A / (1.0 + np.exp(_KAPPA_A * (1.0 - _SIGMA_A)))
    return (qg / qg_max) * (qa / qa_max)


def qabf(fused, image_ir, image_vi):
    """Edge-transfer quality, weighted by source edge strength; 0 when edgeless."""
    f = _as_image(fused)
    a, b = _as_image(image_ir), _as_image(image_vi)
    if f.shape[0] < 3 or f.shape[1] < 3:
        raise ShapeError("qabf needs images of at least 3x3")
    g_f, ang_f = _sobel_strength_angle(f)
    g_a, ang_a = _sobel_strength_angle(a)
    g_b, ang_b = _sobel_strength_angle(b)
    q_af = _edge_preservation(g_a, ang_a, g_f, ang_f)
    q_bf = _edge_preservation(g_b, ang_b, g_f, ang_f)
    denom = (g_a + g_b).sum()
    if denom == 0.0:
        return 0.0
    return float((q_af * g_a + q_bf * g_b).sum() / denom)


def metric_report(fused, image_ir, image_vi):
    """All implemented metrics for one fused image."""
    return {
        "en": entropy(fused),
        "sf": spatial_frequency(fused),
        "cc": correlation_coefficient(fused, image_ir, image_vi),
        "qabf": qabf(fused, image_ir, image_vi),
        "ssim": ssim_fusion(fused, image_ir, image_vi),
    }

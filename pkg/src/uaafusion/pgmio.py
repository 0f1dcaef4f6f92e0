"""Binary PGM (P5) images, grayscale, maxval 255."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def _read_token(buf, pos):
    """Next whitespace-delimited header token, skipping # comments."""
    n = len(buf)
    while pos < n:
        ch = buf[pos:pos + 1]
        if ch == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise DataError("truncated PGM header")
    return buf[start:pos], pos


def read_pgm(path):
    """Load a P5 PGM as floats in [0,1], shaped [1,1,H,W]."""
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, pos = _read_token(buf, 0)
    if magic != b"P5":
        raise DataError(f"{path}: bad magic {magic!r}, expected P5")
    fields = []
    for name in ("width", "height", "maxval"):
        tok, pos = _read_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise DataError(f"{path}: non-numeric {name} field {tok!r}") from None
    width, height, maxval = fields
    if maxval != 255:
        raise DataError(f"{path}: maxval {maxval}, only 255 is supported")
    pos += 1  # single whitespace byte after maxval
    payload = buf[pos:pos + width * height]
    if len(payload) != width * height:
        raise DataError(f"{path}: truncated payload, expected {width * height} bytes")
    img = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return (img / 255.0)[None, None]


def write_pgm(path, img):
    """Save floats in [0,1] (clamped, round-half-up) as a P5 PGM."""
    img = np.asarray(img, dtype=np.float64)
    while img.ndim > 2:
        if img.shape[0] != 1:
            raise DataError(f"cannot write multi-image array of shape {img.shape}")
        img = img[0]
    levels = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    h, w = levels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(levels.tobytes())


def read_mask_pgm(path):
    """Mask PGM: gray levels are class ids directly; returns [1,H,W] ints."""
    with open(path, "rb") as fh:
        buf = fh.read()
    img = read_pgm(path)
    return np.floor(img[0, 0] * 255.0 + 0.5).astype(np.int64)[None]


def write_mask_pgm(path, mask):
    mask = np.asarray(mask)
    if mask.ndim == 3:
        mask = mask[0]
    write_pgm(path, mask / 255.0)

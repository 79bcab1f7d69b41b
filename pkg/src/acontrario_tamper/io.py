"""File formats: ACHM heatmaps, images, masks and label maps.

ACHM layout (all little-endian)::

    b"ACHM"  u16 version  u8 channel  u32 image_w  u32 image_h
    u16 patch_size  u16 stride  u32 hm_w  u32 hm_h
    f32[hm_h * hm_w]  row-major confidences

Every writer here is atomic: data goes to a temporary file in the target
directory which is then renamed over the destination.
"""

from __future__ import annotations

import io as _io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core import CHANNELS, Heatmap, HeatmapGeometry
from .exceptions import DomainError, FormatError, ImageTooSmall
from .validation import to_luminance

ACHM_MAGIC = b"ACHM"
ACHM_VERSION = 1
_ACHM_HEADER = struct.Struct("<4sHBIIHHII")


def atomic_write_bytes(path, data):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def encode_heatmap(hm):
    g = hm.geometry
    header = _ACHM_HEADER.pack(ACHM_MAGIC, ACHM_VERSION, CHANNELS.index(hm.channel),
                               g.image_width, g.image_height, g.patch_size, g.stride,
                               g.hm_width, g.hm_height)
    return header + np.ascontiguousarray(hm.values, dtype="<f4").tobytes()


def decode_heatmap(data):
    if len(data) < _ACHM_HEADER.size:
        raise FormatError("truncated ACHM header")
    magic, version, ch, iw, ih, ps, st, hw, hh = _ACHM_HEADER.unpack_from(data)
    if magic != ACHM_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {ACHM_MAGIC!r}")
    if version != ACHM_VERSION:
        raise FormatError(f"unsupported ACHM version {version}")
    if ch >= len(CHANNELS):
        raise FormatError(f"unknown channel id {ch}")
    try:
        geom = HeatmapGeometry(iw, ih, ps, st)
    except (DomainError, ImageTooSmall) as exc:
        raise FormatError(f"invalid geometry in header: {exc}") from None
    if (geom.hm_width, geom.hm_height) != (hw, hh):
        raise FormatError(f"header heatmap dims {hw}x{hh} inconsistent with geometry "
                          f"{geom.hm_width}x{geom.hm_height}")
    payload = data[_ACHM_HEADER.size:]
    if len(payload) != 4 * hw * hh:
        raise FormatError(f"expected {4 * hw * hh} payload bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype="<f4").reshape(hh, hw)
    try:
        return Heatmap(CHANNELS[ch], geom, values)
    except DomainError as exc:
        raise FormatError(str(exc)) from None


def write_heatmap(path, hm):
    atomic_write_bytes(path, encode_heatmap(hm))


def read_heatmap(path):
    return decode_heatmap(Path(path).read_bytes())


def _open_image(path):
    try:
        with Image.open(path) as im:
            im.load()
            return im.copy()
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise FormatError(f"cannot read image {path}: {exc}") from None


def read_image(path):
    """Load an image file as float64 luminance in [0, 1]."""
    im = _open_image(path)
    if im.mode in ("I;16", "I;16B", "I;16L"):
        arr = np.asarray(im, dtype=np.float64) / 65535.0
    elif im.mode == "I":
        arr = np.asarray(im, dtype=np.float64)
        arr = arr / (65535.0 if arr.max(initial=0) > 255 else 255.0)
    elif im.mode == "F":
        arr = np.asarray(im, dtype=np.float64)
    elif im.mode == "1":
        arr = np.asarray(im, dtype=np.float64)
    elif im.mode == "L":
        arr = np.asarray(im, dtype=np.float64) / 255.0
    else:
        arr = to_luminance(np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0)
    return np.clip(arr, 0.0, 1.0)


def _encode_gray8(arr, path):
    fmt = "PPM" if Path(path).suffix.lower() in (".pgm", ".pnm") else "PNG"
    buf = _io.BytesIO()
    Image.fromarray(np.ascontiguousarray(arr, dtype=np.uint8), mode="L").save(buf, format=fmt)
    return buf.getvalue()


def write_image(path, gray):
    """Save a [0, 1] luminance grid as 8-bit PNG (or binary PGM for ``.pgm``)."""
    arr = np.round(np.clip(np.asarray(gray, dtype=np.float64), 0, 1) * 255.0)
    atomic_write_bytes(path, _encode_gray8(arr, path))


def write_mask(path, mask):
    """Save a {0, 1} mask as 0/255 8-bit PNG or PGM."""
    atomic_write_bytes(path, _encode_gray8((np.asarray(mask) > 0) * 255, path))


def read_mask(path):
    """Boolean mask of pixels equal to 255."""
    return np.asarray(_open_image(path)) == 255


def read_label_map(path):
    """Integer label map from a 16-bit PNG or PGM (ASCII or binary); 0 = background."""
    im = _open_image(path)
    if im.mode not in ("L", "I", "I;16", "I;16B", "I;16L", "P"):
        raise FormatError(f"label map {path} must be single-channel, got mode {im.mode}")
    if im.mode == "P":
        im = Image.fromarray(np.asarray(im))
    return np.asarray(im).astype(np.int64)


def write_label_map(path, labels):
    """Save integer labels (< 65536) as a 16-bit PNG, or ASCII PGM for ``.pgm``."""
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 65535:
        raise DomainError("labels must lie in [0, 65535]")
    if Path(path).suffix.lower() == ".pgm":
        h, w = labels.shape
        rows = "\n".join(" ".join(str(int(v)) for v in row) for row in labels)
        atomic_write_text(path, f"P2\n{w} {h}\n65535\n{rows}\n")
        return
    buf = _io.BytesIO()
    Image.fromarray(labels.astype(np.uint16)).save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())

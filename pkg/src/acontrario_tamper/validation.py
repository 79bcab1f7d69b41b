"""Input validation helpers, in the spirit of ``sklearn.utils.validation``."""

import numpy as np
from sklearn.utils.validation import check_array

from .core import PATCH_SIZE
from .exceptions import DomainError, ImageTooSmall, ShapeError

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_luminance(image):
    """Collapse an ``(H, W, C)`` color array to luminance; 2-D input passes through."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] in (3, 4):
        return image[..., :3] @ LUMA_WEIGHTS
    if image.ndim == 3 and image.shape[2] == 1:
        return image[..., 0]
    raise ShapeError(f"expected a 2-D gray or (H, W, 3|4) color image, got shape {image.shape}")


def check_image(image, min_size=PATCH_SIZE):
    """Validate an image and return it as a float64 luminance grid in [0, 1].

    Color input is converted with the BT.601 luma weights.  Values must
    already be scaled to [0, 1]; use :func:`acontrario_tamper.io.read_image`
    for 8/16-bit files.
    """
    image = check_array(image, ensure_2d=False, allow_nd=True, dtype=np.float64,
                        ensure_all_finite=True, input_name="image")
    gray = to_luminance(image)
    if gray.min() < 0 or gray.max() > 1:
        raise DomainError("image values must lie in [0, 1]")
    h, w = gray.shape
    if min_size and (h < min_size or w < min_size):
        raise ImageTooSmall(f"image {w}x{h} is smaller than one {min_size}x{min_size} patch")
    return gray


def check_patch(patch, patch_size=PATCH_SIZE):
    patch = np.asarray(patch, dtype=np.float64)
    if patch.shape[-2:] != (patch_size, patch_size):
        raise ShapeError(f"patch must be {patch_size}x{patch_size}, got {patch.shape}")
    if not np.all(np.isfinite(patch)):
        raise DomainError("patch contains non-finite values")
    return patch


def check_probability(value, name, open_interval=False):
    value = float(value)
    ok = 0 < value < 1 if open_interval else 0 <= value <= 1
    if not ok:
        bounds = "(0, 1)" if open_interval else "[0, 1]"
        raise DomainError(f"{name}={value} must lie in {bounds}")
    return value


def check_rect(rect, width, height, min_size=1):
    """Validate ``(x, y, w, h)`` against an image or grid of ``width x height``."""
    try:
        x, y, w, h = (int(v) for v in rect)
    except (TypeError, ValueError):
        raise DomainError(f"rectangle must be four integers (x, y, w, h), got {rect!r}") from None
    if w < min_size or h < min_size:
        raise DomainError(f"rectangle {w}x{h} smaller than {min_size}x{min_size}")
    if x < 0 or y < 0 or x + w > width or y + h > height:
        raise DomainError(f"rectangle {(x, y, w, h)} exceeds bounds {width}x{height}")
    return x, y, w, h

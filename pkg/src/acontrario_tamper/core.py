"""Shared domain types and the heatmap-cell <-> image-patch geometry.

Grids are stored row-major as ``values[v, u]`` where ``u`` is the column
(x) and ``v`` the row (y).  Cell coordinates are always written ``(u, v)``.
All containers are frozen and their arrays are flagged read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DomainError, ImageTooSmall, ShapeError

CHANNELS = (
    "rescale_up",
    "rescale_down",
    "rotate_cw",
    "rotate_ccw",
    "shear",
    "jpeg_q85",
)
RESAMPLING_CHANNELS = CHANNELS[:5]

PATCH_SIZE = 64
STRIDE = 9

REGION_SOURCES = ("level_set_upper", "level_set_lower", "external", "synthetic")


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def channel_index(channel):
    try:
        return CHANNELS.index(channel)
    except ValueError:
        raise DomainError(f"unknown channel {channel!r}; expected one of {CHANNELS}") from None


@dataclass(frozen=True)
class HeatmapGeometry:
    image_width: int
    image_height: int
    patch_size: int = PATCH_SIZE
    stride: int = STRIDE
    hm_width: int = field(init=False)
    hm_height: int = field(init=False)

    def __post_init__(self):
        if self.patch_size < 1 or self.stride < 1:
            raise DomainError("patch_size and stride must be positive")
        if self.image_width < self.patch_size or self.image_height < self.patch_size:
            raise ImageTooSmall(
                f"image {self.image_width}x{self.image_height} is smaller than one "
                f"{self.patch_size}x{self.patch_size} patch"
            )
        object.__setattr__(self, "hm_width", (self.image_width - self.patch_size) // self.stride + 1)
        object.__setattr__(self, "hm_height", (self.image_height - self.patch_size) // self.stride + 1)

    @property
    def hm_shape(self):
        """Heatmap array shape, ``(hm_height, hm_width)``."""
        return (self.hm_height, self.hm_width)

    @property
    def image_shape(self):
        return (self.image_height, self.image_width)

    @property
    def n_cells(self):
        return self.hm_width * self.hm_height

    def patch_origins(self):
        """Top-left pixel of every patch as two ``(hm_height, hm_width)`` arrays (x, y)."""
        v, u = np.indices(self.hm_shape)
        return u * self.stride, v * self.stride

    def patch_centers(self):
        x, y = self.patch_origins()
        half = self.patch_size // 2
        return x + half, y + half


def geometry_for(image_width, image_height, patch_size=PATCH_SIZE, stride=STRIDE):
    """Heatmap geometry for an image of the given size.

    Raises :class:`ImageTooSmall` if not even one patch fits.
    """
    return HeatmapGeometry(int(image_width), int(image_height), int(patch_size), int(stride))


def cell_to_patch(cell, geom):
    """Image rectangle ``(x, y, width, height)`` analysed for heatmap ``cell = (u, v)``."""
    u, v = (int(c) for c in cell)
    if not (0 <= u < geom.hm_width and 0 <= v < geom.hm_height):
        raise DomainError(f"cell {(u, v)} outside heatmap {geom.hm_width}x{geom.hm_height}")
    return (geom.stride * u, geom.stride * v, geom.patch_size, geom.patch_size)


@dataclass(frozen=True, eq=False)
class Heatmap:
    channel: str
    geometry: HeatmapGeometry
    values: np.ndarray

    def __post_init__(self):
        channel_index(self.channel)
        values = _frozen(self.values, np.float32)
        if values.shape != self.geometry.hm_shape:
            raise ShapeError(f"heatmap values {values.shape} != geometry {self.geometry.hm_shape}")
        if not np.all(np.isfinite(values)) or values.min(initial=0) < 0 or values.max(initial=0) > 1:
            raise DomainError("heatmap confidences must be finite and within [0, 1]")
        object.__setattr__(self, "values", values)

    def __eq__(self, other):
        if not isinstance(other, Heatmap):
            return NotImplemented
        return (
            self.channel == other.channel
            and self.geometry == other.geometry
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BinaryMask:
    geometry: HeatmapGeometry
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.shape != self.geometry.hm_shape:
            raise ShapeError(f"mask {bits.shape} != geometry {self.geometry.hm_shape}")
        if not np.isin(bits, (0, 1)).all():
            raise DomainError("binary mask must contain only 0 and 1")
        object.__setattr__(self, "bits", _frozen(bits, np.uint8))

    @property
    def ones(self):
        return int(self.bits.sum(dtype=np.int64))


@dataclass(frozen=True, eq=False)
class Region:
    """A candidate event: heatmap cells ``(u, v)`` in row-major order, no repeats."""

    id: int
    source: str
    cells: np.ndarray
    pixel_area: int

    def __post_init__(self):
        if self.source not in REGION_SOURCES:
            raise DomainError(f"unknown region source {self.source!r}")
        cells = np.asarray(self.cells, dtype=np.int64)
        if cells.ndim != 2 or cells.shape[1] != 2 or len(cells) == 0:
            raise ShapeError("region cells must be a non-empty (k, 2) array of (u, v)")
        if cells.min() < 0:
            raise DomainError("negative cell coordinate")
        # strict row-major order: by v, then u
        key = cells[:, 1] * (int(cells[:, 0].max()) + 1) + cells[:, 0]
        if len(key) > 1 and not np.all(np.diff(key) > 0):
            raise DomainError("region cells must be strictly sorted in row-major order")
        object.__setattr__(self, "cells", _frozen(cells))

    @classmethod
    def from_flat(cls, id, source, flat, geom, pixel_area):
        """Build a region from flat row-major cell indices (any order, repeats allowed)."""
        flat = np.unique(np.asarray(flat, dtype=np.int64))
        v, u = np.divmod(flat, geom.hm_width)
        return cls(int(id), source, np.column_stack([u, v]), int(pixel_area))

    @property
    def n(self):
        return len(self.cells)

    def flat_indices(self, geom):
        self.check_bounds(geom)
        return self.cells[:, 1] * geom.hm_width + self.cells[:, 0]

    def check_bounds(self, geom):
        u, v = self.cells[:, 0], self.cells[:, 1]
        if u.max() >= geom.hm_width or v.max() >= geom.hm_height:
            raise DomainError(f"region {self.id} has cells outside the {geom.hm_width}x{geom.hm_height} heatmap")

    def same_cells(self, other):
        return np.array_equal(self.cells, other.cells)


@dataclass(frozen=True)
class NfaRecord:
    region_id: int
    n: int
    r: int
    p: float
    tail: float
    nfa: float
    meaningful: bool
    # natural log of nfa; stays finite when nfa underflows
    log_nfa: float

    def __post_init__(self):
        if not 0 <= self.r <= self.n:
            raise DomainError(f"r={self.r} outside [0, n={self.n}]")
        if not 0 < self.p < 1:
            raise DomainError(f"p={self.p} outside (0, 1)")
        if not 0 <= self.tail <= 1:
            raise DomainError(f"tail={self.tail} outside [0, 1]")
        if bool(self.meaningful) != (self.nfa < 1):
            raise DomainError("meaningful must equal (nfa < 1)")


@dataclass(frozen=True)
class ChannelResult:
    channel: str
    score: float
    detections: tuple  # ((Region, NfaRecord), ...), pairwise cell-disjoint
    all_records: tuple
    p: Optional[float] = None
    min_nfa: Optional[float] = None
    geometry: Optional[HeatmapGeometry] = None

    @property
    def regions(self):
        return [region for region, _ in self.detections]


@dataclass(frozen=True, eq=False)
class FusionResult:
    channel_scores: tuple
    final_score: float
    union_mask: np.ndarray
    channel_results: tuple = ()

    def __post_init__(self):
        if len(self.channel_scores) != len(CHANNELS):
            raise ShapeError(f"expected {len(CHANNELS)} channel scores")
        object.__setattr__(self, "channel_scores", tuple(float(s) for s in self.channel_scores))
        object.__setattr__(self, "union_mask", _frozen(self.union_mask, np.uint8))

"""Candidate regions for the a-contrario test.

Regions come from connected components of quantized upper/lower level sets
of the image (a light-weight stand-in for a full tree of shapes), from
externally supplied segmentation label maps, or from a synthetic window grid.
Image-domain pixel sets are mapped to heatmap cells by patch centre.

Pixel sets are passed around as ``(k, 2)`` integer arrays of ``(x, y)``
coordinates in scanline order; functions taking one also accept a boolean
image-shaped mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import chain

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator

from .core import Region, geometry_for
from .exceptions import ConfigError, DomainError, ShapeError
from .validation import check_image

_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}
_POLARITIES = {"upper": ("upper",), "lower": ("lower",), "both": ("upper", "lower")}


@dataclass(frozen=True)
class ProposalConfig:
    n_levels: int = 32
    connectivity: int = 8
    min_cells: int = 4
    max_area_frac: float = 0.9
    polarity: str = "both"

    def __post_init__(self):
        if self.n_levels < 2:
            raise ConfigError("n_levels must be at least 2")
        if self.connectivity not in _STRUCTURES:
            raise ConfigError("connectivity must be 4 or 8")
        if self.min_cells < 1:
            raise ConfigError("min_cells must be at least 1")
        if not 0 < self.max_area_frac <= 1:
            raise ConfigError("max_area_frac must lie in (0, 1]")
        if self.polarity not in _POLARITIES:
            raise ConfigError(f"polarity must be one of {sorted(_POLARITIES)}")


@dataclass(frozen=True)
class RegionProposalSet:
    regions: tuple = ()

    @property
    def candidate_count(self):
        return len(self.regions)

    def __len__(self):
        return len(self.regions)

    def __iter__(self):
        return iter(self.regions)


def _bilevel(image, level, polarity):
    if polarity == "upper":
        return image >= level
    if polarity == "lower":
        return image <= level
    raise ConfigError(f"polarity must be 'upper' or 'lower', got {polarity!r}")


def _label(mask, connectivity):
    try:
        structure = _STRUCTURES[connectivity]
    except KeyError:
        raise ConfigError("connectivity must be 4 or 8") from None
    return ndimage.label(mask, structure=structure)


def level_set_components(image, level, polarity="upper", connectivity=8):
    """Connected components of ``{image >= level}`` (upper) or ``{image <= level}`` (lower).

    Components are returned in scanline order of their first pixel, each as
    a ``(k, 2)`` array of ``(x, y)``.
    """
    image = check_image(image, min_size=1)
    if not 0 <= level <= 1:
        raise DomainError(f"level {level} outside [0, 1]")
    labels, count = _label(_bilevel(image, level, polarity), connectivity)
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(1, count + 2))
    width = image.shape[1]
    out = []
    for k in range(count):
        idx = order[bounds[k]:bounds[k + 1]]
        y, x = np.divmod(idx, width)
        out.append(np.column_stack([x, y]))
    return out


def _as_pixel_mask(pixel_set, shape):
    arr = np.asarray(pixel_set)
    if arr.dtype == bool:
        if arr.shape != shape:
            raise ShapeError(f"pixel mask {arr.shape} does not match image {shape}")
        return arr
    arr = arr.reshape(-1, 2).astype(np.int64)
    h, w = shape
    if len(arr) and (arr.min() < 0 or arr[:, 0].max() >= w or arr[:, 1].max() >= h):
        raise DomainError("pixel set extends outside the image")
    mask = np.zeros(shape, dtype=bool)
    mask[arr[:, 1], arr[:, 0]] = True
    return mask


def rasterize_region(pixel_set, geom):
    """Heatmap cells ``(u, v)`` whose patch centre lies in ``pixel_set``.

    The result is row-major sorted and may be empty.
    """
    mask = _as_pixel_mask(pixel_set, geom.image_shape)
    cx, cy = geom.patch_centers()
    v, u = np.nonzero(mask[cy, cx])
    return np.column_stack([u, v]).astype(np.int64)


def _quantile_levels(image, n_levels):
    return np.quantile(image, np.linspace(0.0, 1.0, n_levels))


def _level_set_candidates(image, geom, cfg):
    """Yield ``(source, flat_cells, pixel_area)`` in (level, polarity, scanline) order."""
    cx, cy = geom.patch_centers()
    # duplicate levels can only repeat earlier candidates
    for level in np.unique(_quantile_levels(image, cfg.n_levels)):
        for polarity in _POLARITIES[cfg.polarity]:
            labels, count = _label(_bilevel(image, level, polarity), cfg.connectivity)
            if count == 0:
                continue
            areas = np.bincount(labels.ravel(), minlength=count + 1)
            at_centers = labels[cy, cx].ravel()
            hit = np.nonzero(at_centers)[0]
            if len(hit) == 0:
                continue
            order = np.argsort(at_centers[hit], kind="stable")
            hit = hit[order]
            ids, starts = np.unique(at_centers[hit], return_index=True)
            for lab, cells in zip(ids, np.split(hit, starts[1:])):
                yield f"level_set_{polarity}", cells, int(areas[lab])


def collect_proposals(image, geom, cfg=None, external=()):
    """Assemble the deduplicated candidate set for one image.

    Level-set candidates come first, ordered by (level, polarity, scanline),
    then external pixel sets in the given order.  With ``image=None`` only
    the external sets are used.  Candidates with fewer than
    ``min_cells`` cells or covering more than ``max_area_frac`` of the image
    are dropped; of identical cell sets only the first is kept.
    """
    cfg = cfg or ProposalConfig()
    if image is not None:
        image = check_image(image)
        if image.shape != geom.image_shape:
            raise ShapeError(f"image {image.shape} does not match geometry {geom.image_shape}")
    max_area = cfg.max_area_frac * geom.image_width * geom.image_height

    def external_candidates():
        for pixels in external:
            mask = _as_pixel_mask(pixels, geom.image_shape)
            cells = rasterize_region(mask, geom)
            yield "external", cells[:, 1] * geom.hm_width + cells[:, 0], int(mask.sum())

    seen = set()
    regions = []
    level_sets = _level_set_candidates(image, geom, cfg) if image is not None else ()
    for source, flat, area in chain(level_sets, external_candidates()):
        if len(flat) < cfg.min_cells or area > max_area:
            continue
        flat = np.sort(flat)
        key = flat.tobytes()
        if key in seen:
            continue
        seen.add(key)
        regions.append(Region.from_flat(len(regions), source, flat, geom, area))
    return RegionProposalSet(tuple(regions))


def grid_proposals(geom, sizes=(8, 12, 16), step=4):
    """Square cell windows of each size on a regular grid over the heatmap.

    Used for synthetic experiments where proposals must not depend on the
    data.  ``pixel_area`` is the image area covered by the window's patches.
    """
    regions = []
    for size in sizes:
        if size > min(geom.hm_width, geom.hm_height):
            continue
        side = (size - 1) * geom.stride + geom.patch_size
        for v0 in range(0, geom.hm_height - size + 1, step):
            for u0 in range(0, geom.hm_width - size + 1, step):
                v, u = np.mgrid[v0:v0 + size, u0:u0 + size]
                regions.append(Region(len(regions), "synthetic",
                                      np.column_stack([u.ravel(), v.ravel()]), side * side))
    return RegionProposalSet(tuple(regions))


def merge_proposals(*sets):
    """Concatenate proposal sets, dropping repeated cell sets and renumbering ids."""
    seen = set()
    regions = []
    for region in chain.from_iterable(sets):
        key = region.cells.tobytes()
        if key in seen:
            continue
        seen.add(key)
        regions.append(Region(len(regions), region.source, region.cells, region.pixel_area))
    return RegionProposalSet(tuple(regions))


def proposals_from_cells(cell_sets, geom, source="synthetic"):
    """Wrap explicit ``(u, v)`` cell collections as a proposal set (no filtering)."""
    regions = []
    for cells in cell_sets:
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        flat = cells[:, 1] * geom.hm_width + cells[:, 0]
        region = Region.from_flat(len(regions), source, flat, geom, len(np.unique(flat)) * geom.stride ** 2)
        region.check_bounds(geom)
        regions.append(region)
    return RegionProposalSet(tuple(regions))


def label_map_to_pixel_sets(labels):
    """One ``(x, y)`` pixel set per nonzero label, in increasing label order."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ShapeError(f"label map must be 2-D, got shape {labels.shape}")
    flat = labels.ravel()
    nz = np.nonzero(flat)[0]
    order = nz[np.argsort(flat[nz], kind="stable")]
    values, starts = np.unique(flat[order], return_index=True)
    width = labels.shape[1]
    out = []
    for idx in np.split(order, starts[1:]) if len(order) else []:
        y, x = np.divmod(np.sort(idx), width)
        out.append(np.column_stack([x, y]))
    return out


def load_external_proposals(path, image_shape=None):
    """Read a label map (16-bit PNG or PGM, 0 = background) into pixel sets.

    ``image_shape`` is ``(height, width)``; a mismatch raises :class:`ShapeError`.
    """
    from .io import read_label_map

    labels = read_label_map(path)
    if image_shape is not None and labels.shape != tuple(image_shape):
        raise ShapeError(f"label map {labels.shape} does not match image {tuple(image_shape)}")
    return label_map_to_pixel_sets(labels)


class LevelSetProposer(BaseEstimator):
    """Estimator wrapper around :func:`collect_proposals`.

    ``transform(image, external=())`` returns a :class:`RegionProposalSet`
    rasterized on the heatmap grid of the image.
    """

    def __init__(self, n_levels=32, connectivity=8, min_cells=4, max_area_frac=0.9,
                 polarity="both", patch_size=64, stride=9):
        self.n_levels = n_levels
        self.connectivity = connectivity
        self.min_cells = min_cells
        self.max_area_frac = max_area_frac
        self.polarity = polarity
        self.patch_size = patch_size
        self.stride = stride

    def _config(self):
        return ProposalConfig(self.n_levels, self.connectivity, self.min_cells,
                              self.max_area_frac, self.polarity)

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        return self

    def transform(self, X, external=()):
        image = check_image(X, self.patch_size)
        geom = geometry_for(image.shape[1], image.shape[0], self.patch_size, self.stride)
        self.geometry_ = geom
        return collect_proposals(image, geom, self._config(), external)

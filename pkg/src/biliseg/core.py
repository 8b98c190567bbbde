"""Grid geometry: scalar volumes, binary masks, connectivity, component labeling.

Conventions used throughout the package:

* grids are indexed ``(ix, iy, iz)`` with dims ``(nx, ny, nz)``,
* the linear index runs x fastest, then y, then z,
* voxel centers sit on a regular anisotropic lattice, voxel ``(ix, iy, iz)``
  is at ``(ix*dx, iy*dy, iz*dz)`` millimetres.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from itertools import product

import numpy as np
from scipy import ndimage

from .errors import BoundsError, ConfigError, DegenerateInputError, GeometryError


@dataclass(frozen=True)
class Spacing:
    """Physical voxel size in mm along x, y, z. Anisotropy (dz != dx) is allowed."""

    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        for name in ("dx", "dy", "dz"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v > 0):
                raise GeometryError(f"spacing {name} must be positive and finite, got {v!r}")
            object.__setattr__(self, name, v)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.dx, self.dy, self.dz)


class Connectivity(IntEnum):
    """Neighborhood definitions.

    EDGE4 and VERTEX8 are in-slice (2D) neighborhoods: they never couple
    voxels across slices. FACE6, EDGE18 and VERTEX26 are volumetric.
    """

    EDGE4 = 4
    FACE6 = 6
    VERTEX8 = 8
    EDGE18 = 18
    VERTEX26 = 26

    @property
    def in_slice(self) -> bool:
        return self in (Connectivity.EDGE4, Connectivity.VERTEX8)

    def offsets(self) -> np.ndarray:
        """Neighbor offsets as an (n, 3) int array of (dx, dy, dz) steps."""
        offs = []
        for d in product((-1, 0, 1), repeat=3):
            if d == (0, 0, 0):
                continue
            ax, ay, az = (abs(c) for c in d)
            keep = {
                Connectivity.EDGE4: az == 0 and ax + ay == 1,
                Connectivity.FACE6: ax + ay + az == 1,
                Connectivity.VERTEX8: az == 0,
                Connectivity.EDGE18: ax + ay + az <= 2,
                Connectivity.VERTEX26: True,
            }[self]
            if keep:
                offs.append(d)
        return np.array(offs, dtype=np.int64)

    def structure(self) -> np.ndarray:
        """3x3x3 boolean structuring element (for scipy.ndimage.label)."""
        s = np.zeros((3, 3, 3), dtype=bool)
        s[1, 1, 1] = True
        for ox, oy, oz in self.offsets():
            s[1 + ox, 1 + oy, 1 + oz] = True
        return s


def _prepare_grid(data, dtype) -> np.ndarray:
    arr = np.asarray(data)
    if arr.ndim != 3:
        raise GeometryError(f"expected a 3D grid, got shape {arr.shape}")
    if any(n < 1 for n in arr.shape):
        raise GeometryError(f"every grid dimension must be >= 1, got {arr.shape}")
    arr = arr.astype(dtype) if arr.dtype != dtype else arr.view()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Volume:
    """3D scalar image. Intensities are finite float32, shape (nx, ny, nz)."""

    data: np.ndarray
    spacing: Spacing

    def __post_init__(self):
        arr = _prepare_grid(self.data, np.float32)
        if not np.isfinite(arr).all():
            raise GeometryError("volume intensities must be finite (no NaN/Inf)")
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class Mask:
    """3D binary grid sharing the geometry of the volume it was derived from."""

    data: np.ndarray
    spacing: Spacing

    def __post_init__(self):
        object.__setattr__(self, "data", _prepare_grid(self.data, bool))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def count(self) -> int:
        """Number of foreground voxels."""
        return int(self.data.sum())


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Connected-component labels, 0 = background, components are 1..num_components."""

    data: np.ndarray
    spacing: Spacing
    num_components: int

    def __post_init__(self):
        arr = _prepare_grid(self.data, np.int32)
        if arr.min() < 0:
            raise GeometryError("labels must be non-negative")
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def component_sizes(self) -> np.ndarray:
        """Voxel count per label, index 0 = label 1."""
        return np.bincount(self.data.ravel(), minlength=self.num_components + 1)[1:]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned voxel box, both corners inclusive."""

    lo: tuple[int, int, int]
    hi: tuple[int, int, int]

    def __post_init__(self):
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise GeometryError(f"degenerate box: lo {self.lo} exceeds hi {self.hi}")

    def slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(l, h + 1) for l, h in zip(self.lo, self.hi))

    def shape(self) -> tuple[int, int, int]:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))


def in_bounds(index, dims) -> bool:
    return all(0 <= i < n for i, n in zip(index, dims))


def require_in_bounds(index, dims) -> tuple[int, int, int]:
    index = tuple(int(i) for i in index)
    if len(index) != 3 or not in_bounds(index, dims):
        raise BoundsError(f"index {index} outside grid dims {tuple(dims)}")
    return index


def voxel_to_world(index, spacing: Spacing, dims=None) -> tuple[float, float, float]:
    """Map a voxel index to the mm coordinates of its center.

    When ``dims`` are given the index is bounds-checked; negative indices are
    always rejected.
    """
    if dims is not None:
        require_in_bounds(index, dims)
    elif any(i < 0 for i in index):
        raise BoundsError(f"negative voxel index {tuple(index)}")
    ix, iy, iz = index
    return (ix * spacing.dx, iy * spacing.dy, iz * spacing.dz)


def linear_index(index, dims) -> int:
    """x-fastest linear index of a voxel."""
    ix, iy, iz = require_in_bounds(index, dims)
    nx, ny, _ = dims
    return ix + nx * (iy + ny * iz)


def index_from_linear(lin: int, dims) -> tuple[int, int, int]:
    nx, ny, nz = dims
    if not 0 <= lin < nx * ny * nz:
        raise BoundsError(f"linear index {lin} outside grid of {nx * ny * nz} voxels")
    ix = lin % nx
    iy = (lin // nx) % ny
    iz = lin // (nx * ny)
    return (ix, iy, iz)


def same_geometry(a, b) -> None:
    """Raise GeometryError unless a and b share dims and spacing."""
    if a.dims != b.dims:
        raise GeometryError(f"grid dims differ: {a.dims} vs {b.dims}")
    if a.spacing != b.spacing:
        raise GeometryError(f"voxel spacing differs: {a.spacing} vs {b.spacing}")


def connected_components(mask: Mask, connectivity: Connectivity = Connectivity.VERTEX26) -> LabelMap:
    """Label connected foreground components.

    Two foreground voxels share a label iff a foreground path under
    ``connectivity`` joins them. Labels are ordered by decreasing component
    size; ties break on the smallest x-fastest linear index of a member voxel,
    so the labeling does not depend on any traversal order.
    """
    raw, k = ndimage.label(mask.data, structure=connectivity.structure())
    if k == 0:
        return LabelMap(np.zeros(mask.dims, dtype=np.int32), mask.spacing, 0)
    flat = raw.ravel(order="F")  # F-order ravel == x-fastest linear index
    sizes = np.bincount(flat, minlength=k + 1)[1:]
    fg_pos = np.flatnonzero(flat)
    uniq, first_pos = np.unique(flat[fg_pos], return_index=True)
    first_linear = np.empty(k, dtype=np.int64)
    first_linear[uniq - 1] = fg_pos[first_pos]
    order = np.lexsort((first_linear, -sizes))
    relabel = np.zeros(k + 1, dtype=np.int32)
    relabel[order + 1] = np.arange(1, k + 1, dtype=np.int32)
    return LabelMap(relabel[raw], mask.spacing, int(k))


def bbox_of(mask: Mask, margin: int = 0) -> BBox:
    """Smallest box containing all foreground, expanded by ``margin`` voxels
    and clamped to the grid."""
    if margin < 0:
        raise ConfigError(f"margin must be >= 0, got {margin}")
    if not mask.data.any():
        raise DegenerateInputError("cannot compute the bounding box of an empty mask")
    lo, hi = [], []
    for axis in range(3):
        other = tuple(a for a in range(3) if a != axis)
        occupied = np.flatnonzero(mask.data.any(axis=other))
        lo.append(max(int(occupied[0]) - margin, 0))
        hi.append(min(int(occupied[-1]) + margin, mask.dims[axis] - 1))
    return BBox(tuple(lo), tuple(hi))

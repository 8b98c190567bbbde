"""Segmentation methods: dual thresholding, seeded flood fill, adaptive
region growing, plus component-filtering post-processing.

All methods are pure functions of (volume, config) and deterministic. Flood
fill and region growing share one frontier-based growth engine whose result is
the unique maximal set reachable from the seed through voxels satisfying the
method's acceptance predicate, so it does not depend on traversal order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Connectivity, Mask, Volume, connected_components, require_in_bounds
from .errors import ConfigError, DegenerateInputError

SeedPoint = tuple[int, int, int]


# ---------------------------------------------------------------------------
# configs

@dataclass(frozen=True)
class ThresholdConfig:
    """Band threshold: keep intensities strictly above t_min and at most t_max.

    ``per_slice_overrides`` replaces the (t_min, t_max) pair on individual
    slices, mirroring acquisitions whose usable band drifts slice to slice.
    """

    t_min: float
    t_max: float
    per_slice_overrides: dict[int, tuple[float, float]] | None = None

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ConfigError(f"need t_min < t_max, got ({self.t_min}, {self.t_max})")
        if self.per_slice_overrides:
            for z, (lo, hi) in self.per_slice_overrides.items():
                if not lo < hi:
                    raise ConfigError(f"override for slice {z} needs t_min < t_max, got ({lo}, {hi})")


@dataclass(frozen=True)
class FloodFillConfig:
    """Seeded fill of the connected region within ``tolerance`` of the seed intensity."""

    seed: SeedPoint
    tolerance: float
    connectivity: Connectivity = Connectivity.FACE6

    def __post_init__(self):
        if self.tolerance < 0:
            raise ConfigError(f"tolerance must be >= 0, got {self.tolerance}")
        object.__setattr__(self, "connectivity", Connectivity(self.connectivity))


@dataclass(frozen=True)
class RegionGrowConfig:
    """Single-seed adaptive growth.

    A candidate voxel is accepted when its intensity reaches the local
    adaptive threshold computed on its slice (``window`` x ``window``
    neighborhood, sensitivity ``k``, scale ``R``). Growth spreads in-slice
    under ``in_slice_connectivity``; with ``propagate_slices`` every accepted
    voxel also seeds the same (x, y) position on the adjacent slices, so one
    seed can cover the whole stack.
    """

    seed: SeedPoint
    k: float = 0.3
    R: float = 100.0
    window: int = 3
    in_slice_connectivity: Connectivity = Connectivity.EDGE4
    propagate_slices: bool = True

    def __post_init__(self):
        if not 0.0 < self.k < 1.0:
            raise ConfigError(f"k must be in (0, 1), got {self.k}")
        if self.R <= 0:
            raise ConfigError(f"R must be > 0, got {self.R}")
        if self.window < 3 or self.window % 2 == 0:
            raise ConfigError(f"window must be an odd integer >= 3, got {self.window}")
        conn = Connectivity(self.in_slice_connectivity)
        if not conn.in_slice:
            raise ConfigError(f"in-slice connectivity must be EDGE4 or VERTEX8, got {conn.name}")
        object.__setattr__(self, "in_slice_connectivity", conn)


@dataclass(frozen=True)
class KeepLargest:
    """Keep only the largest connected component."""


@dataclass(frozen=True)
class KeepSeeded:
    """Keep components containing at least one of the given seeds."""

    seeds: tuple[SeedPoint, ...]


@dataclass(frozen=True)
class MinSize:
    """Drop components with fewer than ``voxels`` members."""

    voxels: int

    def __post_init__(self):
        if self.voxels < 1:
            raise ConfigError(f"minimum component size must be >= 1, got {self.voxels}")


PostprocessPolicy = KeepLargest | KeepSeeded | MinSize


# ---------------------------------------------------------------------------
# methods

def dual_threshold(volume: Volume, cfg: ThresholdConfig) -> Mask:
    """Voxel is foreground iff t_min < intensity <= t_max (per-slice pairs
    where an override exists)."""
    data = volume.data
    out = (data > cfg.t_min) & (data <= cfg.t_max)
    if cfg.per_slice_overrides:
        nz = volume.dims[2]
        for z, (lo, hi) in sorted(cfg.per_slice_overrides.items()):
            if not 0 <= z < nz:
                raise ConfigError(f"per-slice override references slice {z}, volume has {nz} slices")
            out[:, :, z] = (data[:, :, z] > lo) & (data[:, :, z] <= hi)
    return Mask(out, volume.spacing)


def grow_from_seed(allowed: np.ndarray, seed: SeedPoint, offsets: np.ndarray) -> np.ndarray:
    """Voxels reachable from ``seed`` through ``allowed`` voxels, stepping by
    ``offsets``. The seed is always included. Frontier-at-a-time expansion;
    the reachable set is unique, so the result is traversal-order independent.
    """
    nx, ny, nz = allowed.shape
    reached = np.zeros(allowed.shape, dtype=bool)
    reached[seed] = True
    frontier = np.array([seed], dtype=np.int64)
    while frontier.size:
        cand = (frontier[:, None, :] + offsets[None, :, :]).reshape(-1, 3)
        inb = (
            (cand[:, 0] >= 0) & (cand[:, 0] < nx)
            & (cand[:, 1] >= 0) & (cand[:, 1] < ny)
            & (cand[:, 2] >= 0) & (cand[:, 2] < nz)
        )
        cand = cand[inb]
        if cand.size == 0:
            break
        flat = np.unique((cand[:, 0] * ny + cand[:, 1]) * nz + cand[:, 2])
        cx, cy, cz = np.unravel_index(flat, allowed.shape)
        keep = allowed[cx, cy, cz] & ~reached[cx, cy, cz]
        cx, cy, cz = cx[keep], cy[keep], cz[keep]
        if cx.size == 0:
            break
        reached[cx, cy, cz] = True
        frontier = np.stack([cx, cy, cz], axis=1)
    return reached


def flood_fill(volume: Volume, cfg: FloodFillConfig) -> Mask:
    """Maximal connected region around the seed whose members stay within
    ``tolerance`` of the seed intensity."""
    seed = require_in_bounds(cfg.seed, volume.dims)
    seed_value = float(volume.data[seed])
    allowed = np.abs(volume.data.astype(np.float64) - seed_value) <= cfg.tolerance
    reached = grow_from_seed(allowed, seed, cfg.connectivity.offsets())
    return Mask(reached, volume.spacing)


def sauvola_threshold(slice_values: np.ndarray, x: int, y: int,
                      k: float = 0.3, R: float = 100.0, window: int = 3) -> float:
    """Local adaptive threshold at one pixel of a 2D slice.

    T = m * (1 + k * (s / R - 1)) with m, s the mean and population standard
    deviation over the window centered at (x, y), clipped to the slice bounds.
    """
    a = np.asarray(slice_values, dtype=np.float64)
    if a.ndim != 2:
        raise ConfigError(f"expected a 2D slice, got shape {a.shape}")
    nx, ny = a.shape
    if not (0 <= x < nx and 0 <= y < ny):
        raise ConfigError(f"pixel ({x}, {y}) outside slice shape {a.shape}")
    h = window // 2
    w = a[max(0, x - h):min(nx, x + h + 1), max(0, y - h):min(ny, y + h + 1)]
    m = float(w.mean())
    s = float(w.std())
    return m * (1.0 + k * (s / R - 1.0))


def sauvola_threshold_field(slice_values: np.ndarray, k: float = 0.3,
                            R: float = 100.0, window: int = 3) -> np.ndarray:
    """Adaptive threshold at every pixel of a 2D slice.

    Window sums come from summed-area tables; border windows are clipped, and
    each pixel's mean/std covers exactly the in-bounds part of its window.
    """
    a = np.asarray(slice_values, dtype=np.float64)
    nx, ny = a.shape
    h = window // 2
    S = np.zeros((nx + 1, ny + 1))
    S2 = np.zeros((nx + 1, ny + 1))
    S[1:, 1:] = a.cumsum(axis=0).cumsum(axis=1)
    S2[1:, 1:] = (a * a).cumsum(axis=0).cumsum(axis=1)

    x0 = np.clip(np.arange(nx) - h, 0, nx)
    x1 = np.clip(np.arange(nx) + h + 1, 0, nx)
    y0 = np.clip(np.arange(ny) - h, 0, ny)
    y1 = np.clip(np.arange(ny) + h + 1, 0, ny)

    def rect(table):
        return (table[np.ix_(x1, y1)] - table[np.ix_(x0, y1)]
                - table[np.ix_(x1, y0)] + table[np.ix_(x0, y0)])

    count = (x1 - x0)[:, None] * (y1 - y0)[None, :]
    m = rect(S) / count
    var = np.maximum(rect(S2) / count - m * m, 0.0)
    s = np.sqrt(var)
    return m * (1.0 + k * (s / R - 1.0))


def region_grow(volume: Volume, cfg: RegionGrowConfig) -> Mask:
    """Single-seed adaptive region growing over a stack of slices.

    Expects intensities normalized to [0, 255] (run the percentile stretch
    first); the default scale R = 100 presumes that range. The seed is always
    part of the result even if it misses its own threshold, so a user-chosen
    seed never yields an empty mask.
    """
    seed = require_in_bounds(cfg.seed, volume.dims)
    data = volume.data
    if float(data.min()) < 0.0 or float(data.max()) > 255.0:
        raise ConfigError("region growing expects intensities in [0, 255]; normalize first")

    allowed = np.empty(volume.dims, dtype=bool)
    for z in range(volume.dims[2]):
        field_z = sauvola_threshold_field(data[:, :, z], cfg.k, cfg.R, cfg.window)
        allowed[:, :, z] = data[:, :, z].astype(np.float64) >= field_z

    offsets = cfg.in_slice_connectivity.offsets()
    if cfg.propagate_slices:
        offsets = np.concatenate([offsets, [[0, 0, 1], [0, 0, -1]]], axis=0)
    reached = grow_from_seed(allowed, seed, offsets)
    return Mask(reached, volume.spacing)


def postprocess(mask: Mask, policies, connectivity: Connectivity = Connectivity.VERTEX26) -> Mask:
    """Apply component-filtering policies in order. The result is always a
    subset of the input mask."""
    out = mask
    for policy in policies:
        labels = connected_components(out, connectivity)
        k = labels.num_components
        keep = np.zeros(k + 1, dtype=bool)
        if isinstance(policy, KeepLargest):
            if k >= 1:
                keep[1] = True
        elif isinstance(policy, MinSize):
            if k >= 1:
                keep[1:] = labels.component_sizes() >= policy.voxels
        elif isinstance(policy, KeepSeeded):
            hit = {int(labels.data[require_in_bounds(s, out.dims)]) for s in policy.seeds}
            hit.discard(0)
            if not hit:
                raise DegenerateInputError("no seed lies inside a foreground component")
            keep[sorted(hit)] = True
        else:
            raise ConfigError(f"unknown post-processing policy {policy!r}")
        out = Mask(keep[labels.data], mask.spacing)
    return out

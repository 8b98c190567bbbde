"""Shared test helpers: independent file-format and labeling oracles."""
from __future__ import annotations

import struct

import numpy as np


def raw_nifti_bytes(array_xyz: np.ndarray, pixdim, datatype_code: int, *,
                    endian: str = "<", scl=(0.0, 0.0), magic: bytes = b"n+1\x00",
                    vox_offset: int = 352, dim0: int = 3, bitpix: int | None = None) -> bytes:
    """Build a single-file NIfTI-1 byte string with struct.pack, independently
    of the package writer. Data is laid out x fastest."""
    bitpix_map = {2: 8, 4: 16, 512: 16, 16: 32}
    np_map = {2: np.uint8, 4: np.int16, 512: np.uint16, 16: np.float32}
    nx, ny, nz = array_xyz.shape
    bitpix = bitpix if bitpix is not None else bitpix_map[datatype_code]

    hdr = bytearray(348)
    struct.pack_into(endian + "i", hdr, 0, 348)
    struct.pack_into(endian + "8h", hdr, 40, dim0, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into(endian + "h", hdr, 70, datatype_code)
    struct.pack_into(endian + "h", hdr, 72, bitpix)
    struct.pack_into(endian + "8f", hdr, 76, 1.0, pixdim[0], pixdim[1], pixdim[2], 0, 0, 0, 0)
    struct.pack_into(endian + "f", hdr, 108, float(vox_offset))
    struct.pack_into(endian + "f", hdr, 112, float(scl[0]))
    struct.pack_into(endian + "f", hdr, 116, float(scl[1]))
    hdr[344:348] = magic

    payload = array_xyz.astype(np.dtype(np_map[datatype_code]).newbyteorder(endian))
    body = payload.ravel(order="F").tobytes()
    return bytes(hdr) + b"\x00" * (vox_offset - 348) + body


def union_find_components(mask: np.ndarray, offsets) -> list[frozenset]:
    """Brute-force connected components of a boolean grid via union-find."""
    coords = [tuple(p) for p in np.argwhere(mask)]
    index = {p: i for i, p in enumerate(coords)}
    parent = list(range(len(coords)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for p in coords:
        for off in offsets:
            q = (p[0] + off[0], p[1] + off[1], p[2] + off[2])
            j = index.get(q)
            if j is not None:
                ri, rj = find(index[p]), find(j)
                if ri != rj:
                    parent[ri] = rj

    groups: dict[int, set] = {}
    for p, i in index.items():
        groups.setdefault(find(i), set()).add(p)
    return [frozenset(g) for g in groups.values()]


def flood_fill_bfs(data: np.ndarray, seed, tolerance: float, offsets) -> set:
    """Reference flood fill: plain queue-based breadth-first search."""
    from collections import deque

    dims = data.shape
    seed = tuple(seed)
    seed_value = float(data[seed])
    seen = {seed}
    queue = deque([seed])
    while queue:
        p = queue.popleft()
        for off in offsets:
            q = (p[0] + off[0], p[1] + off[1], p[2] + off[2])
            if not all(0 <= c < n for c, n in zip(q, dims)):
                continue
            if q in seen:
                continue
            if abs(float(data[q]) - seed_value) <= tolerance:
                seen.add(q)
                queue.append(q)
    return seen


def hausdorff_brute(a: np.ndarray, b: np.ndarray, spacing) -> tuple[float, float, float]:
    """All-pairs max-min distances: (directed a->b, directed b->a, symmetric)."""
    sp = np.asarray(spacing, dtype=np.float64)
    pa = np.argwhere(a) * sp
    pb = np.argwhere(b) * sp
    d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
    ab = float(np.sqrt(d2.min(axis=1)).max())
    ba = float(np.sqrt(d2.min(axis=0)).max())
    return ab, ba, max(ab, ba)


def random_mask(rng: np.random.Generator, dims, p: float = 0.35, nonempty: bool = True) -> np.ndarray:
    while True:
        m = rng.random(dims) < p
        if not nonempty or m.any():
            return m

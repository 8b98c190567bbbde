import numpy as np
import pytest

from biliseg import (BoundsError, ConfigError, Connectivity, DegenerateInputError,
                     FloodFillConfig, KeepLargest, KeepSeeded, Mask, MinSize,
                     RegionGrowConfig, Spacing, ThresholdConfig, Volume,
                     dual_threshold, flood_fill, postprocess, region_grow,
                     sauvola_threshold, sauvola_threshold_field)
from biliseg.phantom import CenterlineTree, PhantomParams, TubeSegment, rasterize_tree, render_intensities
from conftest import flood_fill_bfs

SP = Spacing(1.0, 1.0, 1.0)


def vol(data, spacing=SP):
    return Volume(np.asarray(data, np.float32), spacing)


class TestDualThreshold:
    def test_band_semantics(self):
        v = vol(np.array([40.0, 50.0, 60.0, 60.5]).reshape(4, 1, 1))
        m = dual_threshold(v, ThresholdConfig(40.0, 60.0))
        # strict lower bound, inclusive upper bound
        assert m.data[:, 0, 0].tolist() == [False, True, True, False]

    def test_matches_per_voxel_band_check(self):
        rng = np.random.default_rng(20)
        # intensities drawn from a small integer set so thresholds hit values exactly
        for _ in range(50):
            data = rng.integers(0, 12, (8, 8, 2)).astype(np.float32) * 10.0
            t_min, t_max = sorted(rng.choice(np.arange(0, 121, 10.0), 2, replace=False))
            v = vol(data)
            m = dual_threshold(v, ThresholdConfig(float(t_min), float(t_max)))
            for ix in range(8):
                for iy in range(8):
                    for iz in range(2):
                        f = data[ix, iy, iz]
                        assert m.data[ix, iy, iz] == (t_min < f <= t_max)

    def test_per_slice_override(self):
        data = np.full((2, 2, 3), 50.0, np.float32)
        cfg = ThresholdConfig(40.0, 60.0, per_slice_overrides={1: (55.0, 70.0)})
        m = dual_threshold(vol(data), cfg)
        assert m.data[:, :, 0].all() and m.data[:, :, 2].all()
        assert not m.data[:, :, 1].any()  # 50 <= 55 on the overridden slice

    def test_override_out_of_range_slice(self):
        cfg = ThresholdConfig(40.0, 60.0, per_slice_overrides={7: (41.0, 61.0)})
        with pytest.raises(ConfigError):
            dual_threshold(vol(np.zeros((2, 2, 3))), cfg)

    def test_invalid_band(self):
        with pytest.raises(ConfigError):
            ThresholdConfig(60.0, 40.0)
        with pytest.raises(ConfigError):
            ThresholdConfig(0.0, 10.0, per_slice_overrides={0: (5.0, 5.0)})


class TestFloodFill:
    def test_unique_seed_tolerance_zero(self):
        data = np.arange(27, dtype=np.float32).reshape(3, 3, 3)
        m = flood_fill(vol(data), FloodFillConfig(seed=(1, 1, 1), tolerance=0.0))
        assert m.count() == 1 and m.data[1, 1, 1]

    def test_saturating_tolerance_fills_grid(self):
        rng = np.random.default_rng(21)
        data = rng.uniform(0, 100, (5, 6, 4)).astype(np.float32)
        m = flood_fill(vol(data), FloodFillConfig(seed=(0, 0, 0), tolerance=200.0))
        assert m.count() == 5 * 6 * 4

    def test_seed_out_of_bounds(self):
        with pytest.raises(BoundsError):
            flood_fill(vol(np.zeros((4, 4, 4))), FloodFillConfig(seed=(4, 0, 0), tolerance=1.0))

    def test_negative_tolerance_rejected(self):
        with pytest.raises(ConfigError):
            FloodFillConfig(seed=(0, 0, 0), tolerance=-1.0)

    @pytest.mark.parametrize("dims", [(16, 16, 1), (8, 8, 4)])
    @pytest.mark.parametrize("conn", [Connectivity.FACE6, Connectivity.VERTEX26])
    def test_matches_bfs_oracle(self, dims, conn):
        rng = np.random.default_rng(hash((dims, int(conn))) % 2**32)
        offsets = [tuple(o) for o in conn.offsets()]
        for _ in range(50):
            data = rng.integers(0, 8, dims).astype(np.float32) * 10.0
            seed = tuple(int(rng.integers(0, n)) for n in dims)
            tol = float(rng.choice([0.0, 10.0, 20.0, 35.0]))
            got = flood_fill(vol(data), FloodFillConfig(seed=seed, tolerance=tol, connectivity=conn))
            expected = flood_fill_bfs(data, seed, tol, offsets)
            assert {tuple(p) for p in np.argwhere(got.data)} == expected
            self._assert_invariants(got, data, seed, tol, offsets)

    @staticmethod
    def _assert_invariants(mask, data, seed, tol, offsets):
        dims = data.shape
        sv = float(data[seed])
        # (a) seed belongs
        assert mask.data[seed]
        # (b) connected under the fill connectivity
        from conftest import union_find_components
        groups = union_find_components(mask.data, offsets)
        assert len(groups) == 1
        # (c) all members within tolerance of the seed intensity
        assert (np.abs(data[mask.data].astype(np.float64) - sv) <= tol).all()
        # (d) maximality: no unfilled neighbor of the region qualifies
        for p in map(tuple, np.argwhere(mask.data)):
            for off in offsets:
                q = tuple(p[i] + off[i] for i in range(3))
                if all(0 <= c < n for c, n in zip(q, dims)) and not mask.data[q]:
                    assert abs(float(data[q]) - sv) > tol

    def test_in_slice_connectivity_restricts_to_one_slice(self):
        data = np.zeros((4, 4, 3), np.float32)
        m = flood_fill(vol(data), FloodFillConfig(seed=(1, 1, 1), tolerance=5.0,
                                                  connectivity=Connectivity.EDGE4))
        assert m.data[:, :, 1].all()
        assert not m.data[:, :, 0].any() and not m.data[:, :, 2].any()


class TestSauvola:
    def test_uniform_window_exact(self):
        s = np.full((5, 5), 100.0)
        t = sauvola_threshold(s, 2, 2, k=0.3, R=100.0)
        assert t == 100.0 * (1.0 - 0.3)

    def test_single_bright_center(self):
        s = np.zeros((3, 3))
        s[1, 1] = 255.0
        t = sauvola_threshold(s, 1, 1, k=0.3, R=100.0)
        m = 255.0 / 9.0
        var = (8 * m ** 2 + (255.0 - m) ** 2) / 9.0
        expected = m * (1.0 + 0.3 * (np.sqrt(var) / 100.0 - 1.0))
        assert t == pytest.approx(expected, abs=1e-6)

    def test_k_zero_returns_window_mean(self):
        rng = np.random.default_rng(22)
        s = rng.uniform(0, 255, (7, 7))
        t = sauvola_threshold(s, 3, 3, k=0.0)
        assert t == pytest.approx(float(s[2:5, 2:5].mean()), rel=1e-12)

    def test_border_window_clipped(self):
        s = np.arange(16, dtype=np.float64).reshape(4, 4)
        t = sauvola_threshold(s, 0, 0, k=0.3, R=100.0)
        w = s[0:2, 0:2]
        expected = w.mean() * (1.0 + 0.3 * (w.std() / 100.0 - 1.0))
        assert t == pytest.approx(expected, rel=1e-12)

    def test_field_matches_scalar_everywhere(self):
        rng = np.random.default_rng(23)
        for window in (3, 5):
            s = rng.uniform(0, 255, (9, 6))
            field = sauvola_threshold_field(s, 0.3, 100.0, window)
            for x in range(9):
                for y in range(6):
                    assert field[x, y] == pytest.approx(
                        sauvola_threshold(s, x, y, 0.3, 100.0, window), abs=1e-9)

    def test_pixel_out_of_slice(self):
        with pytest.raises(ConfigError):
            sauvola_threshold(np.zeros((3, 3)), 3, 0)


def straight_tube_case(dims=(24, 24, 8), spacing=Spacing(1, 1, 1.5), radius=3.0,
                       fg=200.0, bg=10.0):
    cx = (dims[0] - 1) / 2.0 * spacing.dx
    cy = (dims[1] - 1) / 2.0 * spacing.dy
    z_top = dims[2] * spacing.dz + 2.0
    tree = CenterlineTree((TubeSegment((cx, cy, -2.0), (cx, cy, z_top), radius, -1),))
    truth = rasterize_tree(tree, dims, spacing)
    params = PhantomParams(dims=dims, spacing=spacing, root=(cx, cy, -2.0),
                           root_direction=(0, 0, 1), segment_length=z_top + 2.0,
                           radius_root=radius, fg_mean=fg, bg_mean=bg,
                           noise_std=0.0, rng_seed=1)
    volume = render_intensities(truth, params)
    seed = (dims[0] // 2, dims[1] // 2, dims[2] // 2)
    assert truth.data[seed]
    return volume, truth, seed


class TestRegionGrow:
    def test_saturated_volume_fills_grid(self):
        v = vol(np.full((6, 6, 3), 255.0))
        m = region_grow(v, RegionGrowConfig(seed=(2, 2, 1)))
        assert m.count() == 6 * 6 * 3

    def test_tube_recovered_across_slices(self):
        volume, truth, seed = straight_tube_case()
        m = region_grow(volume, RegionGrowConfig(seed=seed))
        assert (m.data == truth.data).all()
        for z in range(truth.dims[2]):
            assert m.data[:, :, z].any()

    def test_propagation_switch_confines_to_seed_slice(self):
        volume, truth, seed = straight_tube_case()
        m = region_grow(volume, RegionGrowConfig(seed=seed, propagate_slices=False))
        off_slice = m.data.copy()
        off_slice[:, :, seed[2]] = False
        assert not off_slice.any()
        assert (m.data[:, :, seed[2]] == truth.data[:, :, seed[2]]).all()

    def test_seed_always_included(self):
        # checkerboard: dark cells sit below their local threshold, yet the
        # dark seed must be in the mask
        x, y = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
        board = np.where((x + y) % 2 == 0, 0.0, 255.0)[:, :, None].astype(np.float32)
        v = vol(board)
        seed = (2, 2, 0)
        assert board[seed] == 0.0
        m = region_grow(v, RegionGrowConfig(seed=seed, propagate_slices=False))
        assert m.data[seed]
        # growth continues through the bright neighbors only
        assert m.data[1, 2, 0] and m.data[3, 2, 0] and m.data[2, 1, 0] and m.data[2, 3, 0]
        assert not m.data[0, 0, 0]

    def test_requires_normalized_range(self):
        v = vol(np.full((4, 4, 2), 300.0))
        with pytest.raises(ConfigError):
            region_grow(v, RegionGrowConfig(seed=(0, 0, 0)))

    def test_deterministic(self):
        volume, _, seed = straight_tube_case()
        a = region_grow(volume, RegionGrowConfig(seed=seed))
        b = region_grow(volume, RegionGrowConfig(seed=seed))
        assert (a.data == b.data).all()

    def test_matches_slicewise_fixpoint_reference(self):
        rng = np.random.default_rng(24)
        for case in range(6):
            data = _smooth_random_volume(rng, (10, 9, 5))
            seed = tuple(int(rng.integers(0, n)) for n in data.shape)
            propagate = case % 2 == 0
            cfg = RegionGrowConfig(seed=seed, propagate_slices=propagate)
            got = region_grow(vol(data), cfg)
            want = _region_grow_reference(data, seed, 0.3, 100.0, 3, propagate)
            assert (got.data == want).all()

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            RegionGrowConfig(seed=(0, 0, 0), k=0.0)
        with pytest.raises(ConfigError):
            RegionGrowConfig(seed=(0, 0, 0), R=0.0)
        with pytest.raises(ConfigError):
            RegionGrowConfig(seed=(0, 0, 0), window=4)
        with pytest.raises(ConfigError):
            RegionGrowConfig(seed=(0, 0, 0), in_slice_connectivity=Connectivity.FACE6)


def _smooth_random_volume(rng, dims):
    """Blobby test volume in [0, 255]: random bright boxes on a dark floor."""
    data = np.full(dims, 20.0)
    for _ in range(3):
        x, y, z = (int(rng.integers(0, d)) for d in dims)
        dx, dy, dz = (int(rng.integers(2, 5)) for _ in range(3))
        data[x:x + dx, y:y + dy, z:z + dz] = float(rng.uniform(150, 250))
    return data.astype(np.float32)


def _shift2d(arr, ox, oy):
    out = np.zeros_like(arr)
    src_x = slice(max(0, -ox), arr.shape[0] - max(0, ox))
    src_y = slice(max(0, -oy), arr.shape[1] - max(0, oy))
    dst_x = slice(max(0, ox), arr.shape[0] - max(0, -ox))
    dst_y = slice(max(0, oy), arr.shape[1] - max(0, -oy))
    out[dst_x, dst_y] = arr[src_x, src_y]
    return out


def _region_grow_reference(data, seed, k, R, window, propagate):
    """Literal slice-by-slice fixpoint: grow each slice to convergence, then
    hand accepted voxels to the adjacent slices; repeat until nothing changes.
    Acceptance thresholds are recomputed per pixel with plain numpy calls."""
    nx, ny, nz = data.shape
    h = window // 2
    acc = np.zeros(data.shape, bool)
    for z in range(nz):
        sl = data[:, :, z].astype(np.float64)
        for x in range(nx):
            for y in range(ny):
                w = sl[max(0, x - h):min(nx, x + h + 1), max(0, y - h):min(ny, y + h + 1)]
                t = w.mean() * (1.0 + k * (w.std() / R - 1.0))
                acc[x, y, z] = sl[x, y] >= t
    mask = np.zeros(data.shape, bool)
    mask[seed] = True
    offsets2d = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    changed = True
    while changed:
        changed = False
        for z in reversed(range(nz)):  # deliberately a different order
            while True:
                cur = mask[:, :, z]
                dil = np.zeros_like(cur)
                for ox, oy in offsets2d:
                    dil |= _shift2d(cur, ox, oy)
                new = dil & acc[:, :, z] & ~cur
                if not new.any():
                    break
                mask[:, :, z] |= new
                changed = True
        if propagate:
            for z in range(nz):
                for dz in (-1, 1):
                    zn = z + dz
                    if 0 <= zn < nz:
                        new = mask[:, :, z] & acc[:, :, zn] & ~mask[:, :, zn]
                        if new.any():
                            mask[:, :, zn] |= new
                            changed = True
    return mask


class TestPostprocess:
    def make_components(self):
        # sizes 100, 5, 3 in one 12x12x3 grid
        m = np.zeros((12, 12, 3), bool)
        m[0:10, 0:10, 0] = True                  # 100 voxels
        m[0:5, 0, 2] = True                      # 5 voxels
        m[8:11, 11, 2] = True                    # 3 voxels
        return Mask(m, SP)

    def test_keep_largest(self):
        out = postprocess(self.make_components(), [KeepLargest()])
        assert out.count() == 100
        assert out.data[:, :, 0].sum() == 100

    def test_min_size(self):
        out = postprocess(self.make_components(), [MinSize(4)])
        assert out.count() == 105

    def test_keep_seeded(self):
        out = postprocess(self.make_components(), [KeepSeeded(seeds=((0, 0, 2),))])
        assert out.count() == 5

    def test_keep_seeded_background_rejected(self):
        with pytest.raises(DegenerateInputError):
            postprocess(self.make_components(), [KeepSeeded(seeds=((11, 0, 1),))])

    def test_policies_compose_in_order(self):
        out = postprocess(self.make_components(), [MinSize(4), KeepLargest()])
        assert out.count() == 100

    def test_result_is_subset(self):
        rng = np.random.default_rng(25)
        for policy in ([KeepLargest()], [MinSize(3)], [MinSize(2), KeepLargest()]):
            data = rng.random((8, 8, 4)) < 0.3
            if not data.any():
                continue
            m = Mask(data, SP)
            out = postprocess(m, policy)
            assert (out.data <= m.data).all()

    def test_min_size_validation(self):
        with pytest.raises(ConfigError):
            MinSize(0)

    def test_empty_policy_list_is_identity(self):
        m = self.make_components()
        assert (postprocess(m, []).data == m.data).all()


class TestDeterminism:
    def test_same_volume_same_config_identical_masks(self):
        rng = np.random.default_rng(26)
        data = rng.uniform(0, 255, (10, 10, 4)).astype(np.float32)
        v = vol(data)
        pairs = [
            lambda: dual_threshold(v, ThresholdConfig(50.0, 200.0)),
            lambda: flood_fill(v, FloodFillConfig(seed=(5, 5, 2), tolerance=40.0)),
            lambda: region_grow(v, RegionGrowConfig(seed=(5, 5, 2))),
        ]
        for run in pairs:
            assert (run().data == run().data).all()

import json

import numpy as np
import pytest

from mapprior.occupancy import (MapError, OccupancyMap, crop, load_map,
                                save_map, segment_hits_obstacle,
                                traverse_cells)


def write_pgm(path, width, height, pixels, maxval=255, meta=None):
    header = f"P5\n{width} {height}\n{maxval}\n".encode()
    path.write_bytes(header + bytes(pixels))
    meta = meta or {"resolution_m_per_px": 0.25, "origin_x_m": 0.0, "origin_y_m": 0.0}
    path.with_suffix(".json").write_text(json.dumps(meta))


class TestLoadMap:
    def test_threshold_splits_free_and_occupied(self, tmp_path):
        p = tmp_path / "m.pgm"
        write_pgm(p, 2, 2, [255, 255, 0, 255])
        occ = load_map(p)
        assert occ.free.sum() == 3
        assert not occ.free[1, 0]
        assert occ.resolution == 0.25

    def test_all_white_is_all_free(self, tmp_path):
        p = tmp_path / "m.pgm"
        write_pgm(p, 3, 2, [255] * 6)
        assert load_map(p).free.all()

    def test_payload_length_mismatch(self, tmp_path):
        p = tmp_path / "m.pgm"
        write_pgm(p, 3, 3, [255] * 8)  # one byte short
        with pytest.raises(MapError, match="payload"):
            load_map(p)

    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "m.pgm"
        p.write_bytes(b"P2\n2 2\n255\n....")
        p.with_suffix(".json").write_text(json.dumps(
            {"resolution_m_per_px": 1, "origin_x_m": 0, "origin_y_m": 0}))
        with pytest.raises(MapError, match="P5"):
            load_map(p)

    def test_nonpositive_resolution(self, tmp_path):
        p = tmp_path / "m.pgm"
        write_pgm(p, 2, 2, [255] * 4,
                  meta={"resolution_m_per_px": 0.0, "origin_x_m": 0, "origin_y_m": 0})
        with pytest.raises(MapError, match="resolution"):
            load_map(p)

    def test_header_comments_ok(self, tmp_path):
        p = tmp_path / "m.pgm"
        p.write_bytes(b"P5\n# a comment\n2 2\n255\n" + bytes([255, 0, 255, 0]))
        p.with_suffix(".json").write_text(json.dumps(
            {"resolution_m_per_px": 0.5, "origin_x_m": 1.0, "origin_y_m": 2.0}))
        occ = load_map(p)
        assert occ.free.sum() == 2
        assert occ.origin == (1.0, 2.0)

    def test_save_load_round_trip(self, tmp_path, rooms_map):
        p = tmp_path / "m.pgm"
        save_map(rooms_map, p)
        loaded = load_map(p)
        assert np.array_equal(loaded.free, rooms_map.free)
        assert loaded.resolution == rooms_map.resolution


class TestIsFree:
    def test_center_of_free_cell(self, small_map):
        assert small_map.is_free(small_map.cell_center(3, 3))

    def test_out_of_bounds_is_occupied(self, small_map):
        assert not small_map.is_free((-1.0, 0.5))
        assert not small_map.is_free((1e6, 1e6))

    def test_shared_edge_uses_floor(self):
        occ = OccupancyMap(np.array([[True, False]]), resolution=1.0)
        # x = 1.0 is the shared edge between cells 0 and 1; floor puts it in 1.
        assert not occ.is_free((1.0, 0.5))
        assert occ.is_free((1.0 - 1e-9, 0.5))

    def test_matches_stored_cells_exhaustively(self, rooms_map):
        for iy in range(rooms_map.height):
            for ix in range(rooms_map.width):
                point = rooms_map.cell_center(ix, iy)
                assert rooms_map.is_free(point) == rooms_map.free[iy, ix]

    def test_world_cell_round_trip(self, rooms_map):
        rng = np.random.default_rng(0)
        for _ in range(200):
            ix = int(rng.integers(rooms_map.width))
            iy = int(rng.integers(rooms_map.height))
            assert rooms_map.world_to_cell(rooms_map.cell_center(ix, iy)) == (ix, iy)


class TestCrop:
    def test_interior_crop(self, rooms_map):
        c = crop(rooms_map, (24, 24), 16)
        assert c.map.free.shape == (16, 16)
        assert c.offset == (16, 16)

    def test_corner_crop_is_clamped(self, rooms_map):
        c = crop(rooms_map, (0, 0), 16)
        assert c.offset == (0, 0)
        assert c.map.free.shape == (16, 16)
        c2 = crop(rooms_map, (47, 47), 16)
        assert c2.offset == (48 - 16, 48 - 16)

    def test_full_size_is_identity(self, rooms_map):
        c = crop(rooms_map, (10, 3), 48)
        assert c.offset == (0, 0)
        assert np.array_equal(c.map.free, rooms_map.free)

    def test_oversize_raises(self, rooms_map):
        with pytest.raises(MapError, match="exceeds"):
            crop(rooms_map, (5, 5), 49)

    def test_crop_cells_match_parent(self, rooms_map):
        rng = np.random.default_rng(1)
        for _ in range(20):
            center = (int(rng.integers(48)), int(rng.integers(48)))
            c = crop(rooms_map, center, 8)
            ox, oy = c.offset
            for iy in range(8):
                for ix in range(8):
                    assert c.map.free[iy, ix] == rooms_map.free[oy + iy, ox + ix]

    def test_crop_world_frame_consistent(self, rooms_map):
        c = crop(rooms_map, (20, 11), 12)
        point = c.map.cell_center(3, 4)
        assert c.map.is_free(point) == rooms_map.is_free(point)


class TestTraversal:
    def test_straight_segment_cells(self, small_map):
        cells = traverse_cells(small_map, (0.5, 0.5), (3.5, 0.5))
        assert cells[0] == (2, 2) and cells[-1] == (14, 2)
        xs = [c[0] for c in cells]
        assert xs == sorted(xs)

    def test_wall_is_detected(self):
        free = np.ones((5, 5), dtype=bool)
        free[:, 2] = False
        occ = OccupancyMap(free, resolution=1.0)
        assert segment_hits_obstacle(occ, (0.5, 2.5), (4.5, 2.5))
        assert not segment_hits_obstacle(occ, (0.5, 0.5), (1.5, 4.5))

    def test_leaving_map_counts_as_hit(self, small_map):
        assert segment_hits_obstacle(small_map, (1.5, 1.5), (-2.0, 1.5))


class TestInvariants:
    def test_grid_is_immutable(self, small_map):
        with pytest.raises(ValueError):
            small_map.free[0, 0] = True

    def test_invalid_geometry_rejected(self):
        with pytest.raises(MapError):
            OccupancyMap(np.ones((0, 3), dtype=bool), 0.25)
        with pytest.raises(MapError):
            OccupancyMap(np.ones((3, 3), dtype=bool), -1.0)

import numpy as np
from scipy import ndimage

from mapprior import synthmaps


def connected_free_fraction(occ) -> float:
    labels, n = ndimage.label(occ.free, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return 0.0
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    return counts.max() / occ.free.sum()


class TestGenerators:
    def test_all_layouts_have_walled_borders(self):
        for occ in (synthmaps.open_box(), synthmaps.corridor(),
                    synthmaps.corridor_rooms(), synthmaps.office_floor(),
                    synthmaps.warren(), synthmaps.random_building(3),
                    synthmaps.hallway_with_rooms()):
            assert not occ.free[0].any() and not occ.free[-1].any()
            assert not occ.free[:, 0].any() and not occ.free[:, -1].any()

    def test_free_space_is_connected(self):
        for occ in (synthmaps.corridor_rooms(), synthmaps.office_floor(),
                    synthmaps.warren(), synthmaps.random_building(1),
                    synthmaps.random_building(9)):
            assert connected_free_fraction(occ) == 1.0

    def test_random_building_deterministic_per_seed(self):
        a = synthmaps.random_building(5)
        b = synthmaps.random_building(5)
        c = synthmaps.random_building(6)
        assert np.array_equal(a.free, b.free)
        assert not np.array_equal(a.free, c.free)

    def test_random_building_has_rooms_and_corridors(self):
        occ = synthmaps.random_building(1, width_cells=128, height_cells=128)
        assert 0.15 < occ.free.mean() < 0.8
        assert occ.width == 128 and occ.height == 128

    def test_resolution_propagates(self):
        occ = synthmaps.corridor_rooms(resolution=0.5)
        assert occ.resolution == 0.5

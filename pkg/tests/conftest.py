import numpy as np
import pytest

from mapprior import synthmaps
from mapprior.occupancy import OccupancyMap


@pytest.fixture(scope="session")
def small_map() -> OccupancyMap:
    return synthmaps.open_box(12, 12)


@pytest.fixture(scope="session")
def rooms_map() -> OccupancyMap:
    return synthmaps.corridor_rooms()


@pytest.fixture(scope="session")
def hallway_map() -> OccupancyMap:
    return synthmaps.hallway_with_rooms()


def random_map(rng: np.random.Generator, h: int, w: int,
               p_free: float = 0.7, resolution: float = 0.25) -> OccupancyMap:
    return OccupancyMap(rng.random((h, w)) < p_free, resolution)

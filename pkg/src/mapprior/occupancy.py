"""2D occupancy grids: PGM loading, world/cell conversion, feasibility queries, crops."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FREE_THRESHOLD = 128


class MapError(ValueError):
    """Malformed map file or invalid map geometry."""


@dataclass(frozen=True)
class OccupancyMap:
    """Binary occupancy grid.

    free[iy, ix] is True where the cell is free space.  Row iy=0 corresponds
    to the first PGM row.  The world position of the corner of cell (0, 0) is
    `origin`, and cell (ix, iy) covers the square
    [origin_x + ix*res, origin_x + (ix+1)*res) x [origin_y + iy*res, ...).
    """

    free: np.ndarray
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        free = np.asarray(self.free, dtype=bool)
        if free.ndim != 2 or free.shape[0] < 1 or free.shape[1] < 1:
            raise MapError(f"grid must be 2D and nonempty, got shape {free.shape}")
        if not self.resolution > 0:
            raise MapError(f"resolution must be > 0, got {self.resolution}")
        free.flags.writeable = False
        object.__setattr__(self, "free", free)

    @property
    def height(self) -> int:
        return self.free.shape[0]

    @property
    def width(self) -> int:
        return self.free.shape[1]

    def world_to_cell(self, point) -> tuple[int, int]:
        """Cell (ix, iy) containing a world point; floor convention on edges."""
        x, y = float(point[0]), float(point[1])
        ix = int(np.floor((x - self.origin[0]) / self.resolution))
        iy = int(np.floor((y - self.origin[1]) / self.resolution))
        return ix, iy

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin[0] + (ix + 0.5) * self.resolution,
            self.origin[1] + (iy + 0.5) * self.resolution,
        )

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def is_free(self, point) -> bool:
        """Free/occupied state of the containing cell; out-of-bounds counts as occupied."""
        ix, iy = self.world_to_cell(point)
        if not self.in_bounds(ix, iy):
            return False
        return bool(self.free[iy, ix])

    def is_free_cell(self, ix: int, iy: int) -> bool:
        if not self.in_bounds(ix, iy):
            return False
        return bool(self.free[iy, ix])

    def free_cells(self) -> np.ndarray:
        """(n, 2) array of (ix, iy) indices of free cells."""
        ys, xs = np.nonzero(self.free)
        return np.stack([xs, ys], axis=1)

    @property
    def extent_m(self) -> tuple[float, float]:
        return self.width * self.resolution, self.height * self.resolution


@dataclass(frozen=True)
class MapCrop:
    """A square window of a parent map; `offset` is the (ix, iy) of its corner cell."""

    offset: tuple[int, int]
    map: OccupancyMap


def crop(parent: OccupancyMap, center_cell, size_cells: int) -> MapCrop:
    """Size x size crop centered near center_cell, clamped to stay inside the parent.

    The crop's origin is shifted so world coordinates agree with the parent.
    """
    size = int(size_cells)
    if size < 1:
        raise MapError(f"crop size must be >= 1, got {size}")
    if size > parent.width or size > parent.height:
        raise MapError(
            f"crop size {size} exceeds map dimensions {parent.width}x{parent.height}"
        )
    cx, cy = int(center_cell[0]), int(center_cell[1])
    x0 = min(max(cx - size // 2, 0), parent.width - size)
    y0 = min(max(cy - size // 2, 0), parent.height - size)
    sub = parent.free[y0 : y0 + size, x0 : x0 + size].copy()
    origin = (
        parent.origin[0] + x0 * parent.resolution,
        parent.origin[1] + y0 * parent.resolution,
    )
    return MapCrop(offset=(x0, y0), map=OccupancyMap(sub, parent.resolution, origin))


def _read_pgm_tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    """First `count` whitespace-separated header tokens, skipping # comments.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the last token.
    """
    tokens: list[bytes] = []
    i = 0
    n = len(raw)
    while len(tokens) < count:
        while i < n and raw[i : i + 1].isspace():
            i += 1
        if i < n and raw[i : i + 1] == b"#":
            while i < n and raw[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not raw[i : i + 1].isspace():
            i += 1
        if start == i:
            raise MapError("truncated PGM header")
        tokens.append(raw[start:i])
        i += 1  # consume exactly one whitespace byte after the token
    return tokens, i


def load_map(pgm_path, meta_path=None, threshold: int = FREE_THRESHOLD) -> OccupancyMap:
    """Load a binary P5 PGM plus its JSON sidecar into an OccupancyMap.

    Pixels >= threshold are free, the rest occupied.  The sidecar must provide
    resolution_m_per_px and the world origin of pixel (0, 0).
    """
    pgm_path = Path(pgm_path)
    if meta_path is None:
        meta_path = pgm_path.with_suffix(".json")
    raw = pgm_path.read_bytes()
    if not raw.startswith(b"P5"):
        raise MapError(f"{pgm_path}: not a binary (P5) PGM")
    try:
        tokens, offset = _read_pgm_tokens(raw, 4)
    except MapError as exc:
        raise MapError(f"{pgm_path}: {exc}") from None
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise MapError(f"{pgm_path}: non-numeric PGM header fields") from None
    if width < 1 or height < 1:
        raise MapError(f"{pgm_path}: invalid dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise MapError(f"{pgm_path}: unsupported maxval {maxval} (need 1..255)")
    payload = raw[offset:]
    if len(payload) != width * height:
        raise MapError(
            f"{pgm_path}: payload has {len(payload)} bytes, header implies {width * height}"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)

    meta = json.loads(Path(meta_path).read_text())
    try:
        resolution = float(meta["resolution_m_per_px"])
        origin = (float(meta["origin_x_m"]), float(meta["origin_y_m"]))
    except KeyError as exc:
        raise MapError(f"{meta_path}: missing sidecar key {exc}") from None
    if not resolution > 0:
        raise MapError(f"{meta_path}: nonpositive resolution {resolution}")
    return OccupancyMap(pixels >= threshold, resolution, origin)


def save_map(occ: OccupancyMap, pgm_path, meta_path=None) -> None:
    """Write an OccupancyMap as P5 PGM (free=255, occupied=0) + JSON sidecar."""
    pgm_path = Path(pgm_path)
    if meta_path is None:
        meta_path = pgm_path.with_suffix(".json")
    header = f"P5\n{occ.width} {occ.height}\n255\n".encode()
    pixels = np.where(occ.free, 255, 0).astype(np.uint8)
    pgm_path.write_bytes(header + pixels.tobytes())
    meta = {
        "resolution_m_per_px": occ.resolution,
        "origin_x_m": occ.origin[0],
        "origin_y_m": occ.origin[1],
    }
    Path(meta_path).write_text(json.dumps(meta, indent=2) + "\n")


def traverse_cells(occ: OccupancyMap, p0, p1):
    """Grid cells crossed by the segment p0 -> p1 (world coords), in order.

    Amanatides-Woo voxel traversal; includes the cells containing both
    endpoints.  Cells outside the grid are reported as (ix, iy) anyway so the
    caller can treat them as occupied.
    """
    x0 = (float(p0[0]) - occ.origin[0]) / occ.resolution
    y0 = (float(p0[1]) - occ.origin[1]) / occ.resolution
    x1 = (float(p1[0]) - occ.origin[0]) / occ.resolution
    y1 = (float(p1[1]) - occ.origin[1]) / occ.resolution
    ix, iy = int(np.floor(x0)), int(np.floor(y0))
    ix1, iy1 = int(np.floor(x1)), int(np.floor(y1))
    cells = [(ix, iy)]
    dx, dy = x1 - x0, y1 - y0
    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1
    t_max_x = ((ix + (step_x > 0)) - x0) / dx if dx != 0 else np.inf
    t_max_y = ((iy + (step_y > 0)) - y0) / dy if dy != 0 else np.inf
    t_delta_x = abs(1.0 / dx) if dx != 0 else np.inf
    t_delta_y = abs(1.0 / dy) if dy != 0 else np.inf
    # Bounded by the Manhattan cell distance; guards against float stalls.
    for _ in range(abs(ix1 - ix) + abs(iy1 - iy)):
        if abs(t_max_x - t_max_y) < 1e-12:
            # Exact corner crossing: conservatively include both side cells so
            # the visited set is independent of traversal direction.
            cells.append((ix + step_x, iy))
            cells.append((ix, iy + step_y))
            ix += step_x
            iy += step_y
            t_max_x += t_delta_x
            t_max_y += t_delta_y
        elif t_max_x < t_max_y:
            ix += step_x
            t_max_x += t_delta_x
        else:
            iy += step_y
            t_max_y += t_delta_y
        cells.append((ix, iy))
        if ix == ix1 and iy == iy1:
            break
    return cells


def segment_hits_obstacle(occ: OccupancyMap, p0, p1) -> bool:
    """True if the straight segment from p0 to p1 crosses any occupied cell."""
    for ix, iy in traverse_cells(occ, p0, p1):
        if not occ.is_free_cell(ix, iy):
            return True
    return False

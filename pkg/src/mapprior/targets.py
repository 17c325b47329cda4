"""Training targets: trajectory kernels, map cross-correlation, feasibility weighting.

A trajectory window is rasterized into a normalized kernel, slid over the map
to measure free-space overlap T_bar in [0, 1], and exponentially reweighted so
fully feasible end locations dominate.  Feasible connected regions receive
inverse-area loss weights so small rooms are not drowned out by large ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .occupancy import OccupancyMap

TARGET_SCALE = 1e-6
TARGET_GAIN = 14.0
FEASIBLE_EPS = 1e-6

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class TrajectoryKernel:
    """Normalized rasterized trajectory with the end cell as alignment anchor.

    grid[ky, kx] holds nonnegative weights summing to 1 on a tight bounding
    box; anchor = (ax, ay) is the end position's cell within the grid.
    """

    grid: np.ndarray
    anchor: tuple[int, int]

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]


@dataclass(frozen=True)
class TargetMap:
    """Per-cell regression target with feasibility mask and loss weights."""

    values: np.ndarray        # TARGET_SCALE * exp(GAIN * overlap)
    feasible_mask: np.ndarray
    loss_weights: np.ndarray  # mean 1 over the map
    overlap: np.ndarray       # raw T_bar in [0, 1]


def _bresenham(c0: tuple[int, int], c1: tuple[int, int]):
    """Integer cells on the line from c0 to c1, endpoints included."""
    x0, y0 = c0
    x1, y1 = c1
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    cells = []
    while True:
        cells.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return cells
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def rasterize_kernel(window_xy: np.ndarray, resolution: float,
                     dilate: int = 0) -> TrajectoryKernel:
    """Rasterize a relative trajectory window onto the cell grid.

    Consecutive positions are connected with Bresenham lines; visited cells get
    uniform weight normalized to sum 1.  dilate > 0 thickens the path by that
    many cells (8-connected).
    """
    window_xy = np.asarray(window_xy, dtype=np.float64).reshape(-1, 2)
    if len(window_xy) == 0:
        raise ValueError("window must contain at least one position")
    cells_f = np.floor(window_xy / resolution).astype(int)
    visited: set[tuple[int, int]] = set()
    for i in range(len(cells_f) - 1):
        visited.update(_bresenham(tuple(cells_f[i]), tuple(cells_f[i + 1])))
    visited.add(tuple(cells_f[0]))
    end = tuple(cells_f[-1])

    xs = np.array([c[0] for c in visited])
    ys = np.array([c[1] for c in visited])
    x_min, y_min = int(xs.min()), int(ys.min())
    mask = np.zeros((int(ys.max()) - y_min + 1, int(xs.max()) - x_min + 1), dtype=bool)
    mask[ys - y_min, xs - x_min] = True
    anchor = (int(end[0]) - x_min, int(end[1]) - y_min)
    if dilate > 0:
        pad = dilate
        mask = np.pad(mask, pad)
        mask = ndimage.binary_dilation(mask, _EIGHT_CONNECTED, iterations=dilate)
        anchor = (anchor[0] + pad, anchor[1] + pad)
    grid = mask.astype(np.float64)
    grid /= grid.sum()
    return TrajectoryKernel(grid=grid, anchor=anchor)


def cross_correlate(occ: OccupancyMap, kernel: TrajectoryKernel) -> np.ndarray:
    """Free-space overlap T_bar(x) for the trajectory ending at each cell x.

    T_bar(x) = sum_k grid[k] * free(x - anchor + k), with zero contribution
    outside map bounds.  Accumulation runs in kernel row-major order so the
    result is bit-identical to a scalar per-placement sum in the same order.
    """
    kh, kw = kernel.grid.shape
    h, w = occ.free.shape
    if kh > h or kw > w:
        raise ValueError(f"kernel {kh}x{kw} larger than map {h}x{w}")
    free = occ.free.astype(np.float64)
    ax, ay = kernel.anchor
    out = np.zeros((h, w), dtype=np.float64)
    for ky in range(kh):
        for kx in range(kw):
            wgt = kernel.grid[ky, kx]
            if wgt == 0.0:
                continue
            dy, dx = ky - ay, kx - ax
            ys0, ys1 = max(0, -dy), min(h, h - dy)
            xs0, xs1 = max(0, -dx), min(w, w - dx)
            if ys0 >= ys1 or xs0 >= xs1:
                continue
            out[ys0:ys1, xs0:xs1] += wgt * free[ys0 + dy : ys1 + dy,
                                                xs0 + dx : xs1 + dx]
    return out


def make_target(occ: OccupancyMap, window_xy: np.ndarray,
                dilate: int = 0) -> TargetMap:
    """Full training target for a trajectory window on a map (or crop)."""
    kernel = rasterize_kernel(window_xy, occ.resolution, dilate=dilate)
    t_bar = cross_correlate(occ, kernel)
    values = TARGET_SCALE * np.exp(TARGET_GAIN * t_bar)
    feasible = t_bar >= 1.0 - FEASIBLE_EPS

    weights = np.ones_like(t_bar)
    labels, n_comp = ndimage.label(feasible, structure=_EIGHT_CONNECTED)
    for comp in range(1, n_comp + 1):
        region = labels == comp
        weights[region] = 1.0 / region.sum()
    weights /= weights.mean()
    return TargetMap(values=values, feasible_mask=feasible,
                     loss_weights=weights, overlap=t_bar)


def dump_target_pgm(target: TargetMap, path) -> None:
    """Linear 0-255 visualization of the target values, for eyeballing."""
    v = target.values
    lo, hi = float(v.min()), float(v.max())
    scaled = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    pixels = np.round(scaled * 255).astype(np.uint8)
    header = f"P5\n{v.shape[1]} {v.shape[0]}\n255\n".encode()
    Path(path).write_bytes(header + pixels.tobytes())

"""Grid navigation over the 1x1 occupancy discretization of a layout.

Distance fields are BFS step counts over the 4-neighbor cell graph with
wall-blocked edges, cached per (layout, source). Used for planner cost
heuristics and occupancy bookkeeping.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .scene import GRID_H, GRID_W, Layout, wall_edge_blocks

UNREACHABLE = 10_000.0


def cell_of(x: float, y: float) -> int:
    cx = min(GRID_W - 1, max(0, int(x)))
    cy = min(GRID_H - 1, max(0, int(y)))
    return cy * GRID_W + cx


def cell_center(cell: int) -> tuple[float, float]:
    return (cell % GRID_W + 0.5, cell // GRID_W + 0.5)


def _edge_clearances(walls: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Max passage clearance over each cell-to-cell edge.

    An entity of radius r can cross an edge iff the clearance exceeds r:
    the crossing point can slide along the shared cell boundary, so we take
    the best of several sample points.
    """
    samples = (0.1, 0.3, 0.5, 0.7, 0.9)

    def clearance_at(px: float, py: float) -> float:
        best = 1e18
        for w in range(walls.shape[0]):
            d2, _, _ = kernels.seg_point_dist2(
                walls[w, 0], walls[w, 1], walls[w, 2], walls[w, 3], px, py
            )
            best = min(best, d2)
        return np.sqrt(best)

    ch = np.zeros((GRID_H, GRID_W - 1))
    for y in range(GRID_H):
        for x in range(GRID_W - 1):
            bx = float(x + 1)
            ch[y, x] = max(clearance_at(bx, y + s) for s in samples)
    cv = np.zeros((GRID_H - 1, GRID_W))
    for y in range(GRID_H - 1):
        for x in range(GRID_W):
            by = float(y + 1)
            cv[y, x] = max(clearance_at(x + s, by) for s in samples)
    return ch, cv


class LayoutGrids:
    """Per-layout navigation caches, radius-aware."""

    CLEARANCE_MARGIN = 0.05

    def __init__(self, layout: Layout):
        self.layout = layout
        self.blocked_h, self.blocked_v = wall_edge_blocks(layout)
        self.walls = layout.wall_array(include_bounds=True)
        self._clear_h, self._clear_v = _edge_clearances(self.walls)
        self._blocked_for: dict = {}
        self._fields: dict = {}
        self._landmark_masks: dict = {}

    def _radius_key(self, radius: float) -> float:
        return round(radius, 2)

    def blocked_for(self, radius: float) -> tuple[np.ndarray, np.ndarray]:
        key = self._radius_key(radius)
        got = self._blocked_for.get(key)
        if got is None:
            lim = radius + self.CLEARANCE_MARGIN
            bh = (self._clear_h < lim).astype(np.uint8)
            bv = (self._clear_v < lim).astype(np.uint8)
            got = (bh, bv)
            self._blocked_for[key] = got
        return got

    def landmark_mask(self, landmark_id: str) -> np.ndarray:
        mask = self._landmark_masks.get(landmark_id)
        if mask is None:
            lm = self.layout.landmark_by_id(landmark_id)
            mask = np.zeros(GRID_W * GRID_H, dtype=np.uint8)
            for cell in range(GRID_W * GRID_H):
                cx, cy = cell_center(cell)
                if lm.contains(cx, cy):
                    mask[cell] = 1
            self._landmark_masks[landmark_id] = mask
        return mask

    def _field(self, key, src_mask: np.ndarray, radius: float) -> np.ndarray:
        key = (key, self._radius_key(radius))
        field = self._fields.get(key)
        if field is None:
            bh, bv = self.blocked_for(radius)
            dist = np.empty(GRID_W * GRID_H, dtype=np.int64)
            kernels.bfs_grid(bh, bv, GRID_W, GRID_H, src_mask, dist)
            field = dist.astype(np.float64)
            field[field < 0] = UNREACHABLE
            self._fields[key] = field
        return field

    def field_from_cell(self, cell: int, radius: float = 0.0) -> np.ndarray:
        src = np.zeros(GRID_W * GRID_H, dtype=np.uint8)
        src[cell] = 1
        return self._field(("cell", cell), src, radius)

    def field_from_landmark(self, landmark_id: str,
                            radius: float = 0.0) -> np.ndarray:
        return self._field(
            ("lm", landmark_id), self.landmark_mask(landmark_id), radius
        )

    def travel_distance(self, from_xy, to_xy, radius: float = 0.0) -> float:
        """BFS cell distance between two points, in world units."""
        return float(
            self.field_from_cell(cell_of(*to_xy), radius)[cell_of(*from_xy)]
        )

    def distance_to_landmark(self, from_xy, landmark_id: str,
                             radius: float = 0.0) -> float:
        return float(
            self.field_from_landmark(landmark_id, radius)[cell_of(*from_xy)]
        )

    def reachable(self, from_xy, to_xy, radius: float) -> bool:
        return self.travel_distance(from_xy, to_xy, radius) < UNREACHABLE

    def landmark_reachable(self, from_xy, landmark_id: str,
                           radius: float) -> bool:
        return self.distance_to_landmark(from_xy, landmark_id,
                                         radius) < UNREACHABLE


_GRIDS_CACHE: dict[str, LayoutGrids] = {}


def grids_for(layout: Layout) -> LayoutGrids:
    g = _GRIDS_CACHE.get(layout.layout_id)
    if g is None or g.layout is not layout:
        g = LayoutGrids(layout)
        _GRIDS_CACHE[layout.layout_id] = g
    return g

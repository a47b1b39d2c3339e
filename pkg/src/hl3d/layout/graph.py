"""Scene graph: rooms as nodes, doors / openings / stairs as edges."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import shapely
from shapely.geometry import Polygon

from ..geometry import plane_basis

log = logging.getLogger(__name__)

DOOR_MAX_WIDTH = 1.5
EDGE_KINDS = ("door", "opening", "stairs")


@dataclass
class Shell:
    """Closed room surface: shared vertices plus polygonal faces."""

    vertices: np.ndarray
    faces: list[tuple[int, ...]]
    kinds: list[str]

    def edge_incidence(self) -> dict[tuple[int, int], int]:
        counts: dict[tuple[int, int], int] = {}
        for f in self.faces:
            for a, b in zip(f, f[1:] + f[:1]):
                key = (a, b) if a < b else (b, a)
                counts[key] = counts.get(key, 0) + 1
        return counts

    def is_watertight(self) -> bool:
        counts = self.edge_incidence()
        return bool(counts) and all(c == 2 for c in counts.values())

    def faces_of(self, kind: str) -> list[np.ndarray]:
        return [self.vertices[list(f)] for f, k in zip(self.faces, self.kinds) if k == kind]


@dataclass
class LevelInfo:
    id: int
    height: float


@dataclass
class RoomNode:
    id: int
    level_id: int
    floor: np.ndarray
    walls: list[np.ndarray] = field(default_factory=list)
    ceilings: list[np.ndarray] = field(default_factory=list)
    windows: list[np.ndarray] = field(default_factory=list)
    floor_holes: list[np.ndarray] = field(default_factory=list)
    shell: Optional[Shell] = None

    def footprint(self) -> Polygon:
        return Polygon(self.floor[:, :2], [h[:, :2] for h in self.floor_holes])


@dataclass
class GraphEdge:
    kind: str
    room_a: int
    room_b: int
    geometry: np.ndarray
    width: float


@dataclass
class SceneGraph:
    levels: list[LevelInfo] = field(default_factory=list)
    rooms: list[RoomNode] = field(default_factory=list)
    edges: list[GraphEdge] = field(default_factory=list)

    def room(self, room_id: int) -> RoomNode:
        for r in self.rooms:
            if r.id == room_id:
                return r
        raise KeyError(room_id)

    def validate(self) -> None:
        """Raise ValueError naming the first entity that breaks an invariant."""
        level_ids = {l.id for l in self.levels}
        room_level = {}
        for r in self.rooms:
            if r.level_id not in level_ids:
                raise ValueError(f"room {r.id}: unknown level {r.level_id}")
            if r.id in room_level:
                raise ValueError(f"room {r.id}: duplicate id")
            room_level[r.id] = r.level_id
        for i, e in enumerate(self.edges):
            if e.kind not in EDGE_KINDS:
                raise ValueError(f"edge {i}: unknown kind {e.kind!r}")
            for rid in (e.room_a, e.room_b):
                if rid not in room_level:
                    raise ValueError(f"edge {i}: unknown room {rid}")
            if e.kind == "door" and not e.width < DOOR_MAX_WIDTH:
                raise ValueError(f"edge {i}: door width {e.width:.3f} >= {DOOR_MAX_WIDTH}")
            if e.kind == "opening" and e.width < DOOR_MAX_WIDTH:
                raise ValueError(f"edge {i}: opening width {e.width:.3f} < {DOOR_MAX_WIDTH}")
            if e.kind == "stairs" and room_level[e.room_a] == room_level[e.room_b]:
                raise ValueError(f"edge {i}: stairs must connect different levels")


def _wall_frame(wall: np.ndarray):
    """In-plane frame of a vertical wall polygon: origin, u (horizontal), v (up)."""
    c = wall.mean(axis=0)
    d = wall[np.argmax(np.linalg.norm(wall[:, :2] - wall[0, :2], axis=1)), :2] - wall[0, :2]
    n = np.array([d[1], -d[0], 0.0])
    n /= np.linalg.norm(n)
    u, v = plane_basis(n)
    return c, u, v


def cut_door(wall: np.ndarray, door: np.ndarray) -> list[np.ndarray]:
    """Split a wall polygon around a rectangular door hole.

    The door rectangle is clamped to the wall's horizontal extent. Returns up
    to four pieces: left, right, above and below the hole.
    """
    c, u, v = _wall_frame(wall)
    w2 = np.stack([(wall - c) @ u, (wall - c) @ v], axis=1)
    d2 = np.stack([(door - c) @ u, (door - c) @ v], axis=1)
    wpoly = Polygon(w2)
    u0, u1 = d2[:, 0].min(), d2[:, 0].max()
    v0, v1 = d2[:, 1].min(), d2[:, 1].max()
    wu0, wv0, wu1, wv1 = wpoly.bounds
    if u0 < wu0 - 1e-6 or u1 > wu1 + 1e-6:
        log.warning("door wider than its host wall; clamping to the wall extent")
    u0, u1 = max(u0, wu0), min(u1, wu1)
    big = 1e3
    boxes = [
        shapely.box(wu0 - big, wv0 - big, u0, wv1 + big),
        shapely.box(u1, wv0 - big, wu1 + big, wv1 + big),
        shapely.box(u0, v1, u1, wv1 + big),
        shapely.box(u0, wv0 - big, u1, v0),
    ]
    pieces = []
    for box in boxes:
        part = wpoly.intersection(box)
        for g in getattr(part, "geoms", [part]):
            if isinstance(g, Polygon) and g.area > 1e-6:
                ring = np.asarray(g.exterior.coords)[:-1]
                pieces.append(c + ring[:, 0:1] * u + ring[:, 1:2] * v)
    return pieces

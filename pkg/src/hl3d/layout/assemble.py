"""Layout graph stage: levels, rooms, openings, extrusion, windows and stairs."""

from __future__ import annotations

import logging
from typing import Callable, Optional, Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon

from ..config import GraphConfig
from ..prototype.types import PrototypeSet
from ..scene_io import CameraFrame, LabeledMesh
from ..semantics import SemanticClass
from .extrude import CeilingCandidate, ExtrudedRoom, extrude_room
from .graph import GraphEdge, LevelInfo, RoomNode, SceneGraph, cut_door
from .levels import build_floorplan, detect_levels
from .rooms import Opening, classify_opening, opening_rectangle, segment_rooms
from .stairs import RoomFootprint, detect_stairs
from .windows import detect_windows

log = logging.getLogger(__name__)

HOST_WALL_DISTANCE = 0.15
HOST_WALL_COS = np.cos(np.radians(10.0))


def ceiling_height_at(room: ExtrudedRoom, xy: np.ndarray) -> float:
    """Height of the room ceiling over (or nearest to) ``xy``."""
    pt = shapely.Point(float(xy[0]), float(xy[1]))
    best, best_d = None, np.inf
    for f in room.shell.faces_of("ceiling"):
        d = Polygon(f[:, :2]).distance(pt)
        if d < best_d:
            best, best_d = f, d
    if best is None:
        return float(room.floor[0, 2])
    # barycentric interpolation inside the nearest ceiling triangle
    a, b, c = best[:3]
    m = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
    try:
        s, t = np.linalg.solve(m, np.asarray(xy[:2], dtype=float) - a[:2])
    except np.linalg.LinAlgError:
        return float(best[:, 2].mean())
    return float(a[2] + s * (b[2] - a[2]) + t * (c[2] - a[2]))


def host_wall(walls: Sequence[np.ndarray], door: np.ndarray) -> Optional[int]:
    """Index of the wall whose base line carries the door, if any."""
    mid = door.mean(axis=0)[:2]
    d = door[1, :2] - door[0, :2]
    d /= np.linalg.norm(d)
    best, best_dist = None, HOST_WALL_DISTANCE
    for k, w in enumerate(walls):
        base = w[np.argsort(w[:, 2], kind="stable")[:2], :2]
        e = base[1] - base[0]
        if np.linalg.norm(e) < 1e-9:
            continue
        if abs(e @ d) / np.linalg.norm(e) < HOST_WALL_COS:
            continue
        dist = LineString(base).distance(shapely.Point(mid))
        if dist < best_dist:
            best, best_dist = k, dist
    return best


def opening_edges(
    openings: Sequence[Opening], room_ids: Sequence[int], extruded: Sequence[ExtrudedRoom], floor_z: float, cfg: GraphConfig
) -> list[GraphEdge]:
    """Doors (narrower than the limit) and wide openings as graph edges."""
    edges = []
    for op in openings:
        kind = classify_opening(op.width, cfg.door_max_width)
        mid = 0.5 * (op.p0 + op.p1)
        ceiling = min(ceiling_height_at(extruded[op.room_a], mid), ceiling_height_at(extruded[op.room_b], mid))
        geom = opening_rectangle(op, floor_z, ceiling, cfg.door_height)
        edges.append(GraphEdge(kind, room_ids[op.room_a], room_ids[op.room_b], geom, op.width))
    return edges


def build_scene_graph(
    proto: PrototypeSet,
    frames: Sequence[CameraFrame] = (),
    stairs_mesh: Optional[LabeledMesh] = None,
    cfg: GraphConfig = GraphConfig(),
    map_fn: Callable = map,
) -> SceneGraph:
    """Parse the layout prototype into a validated scene graph.

    ``map_fn`` runs the per-room extrusion; it must preserve input order.
    """
    levels = detect_levels(proto, cfg.h_merge, cfg.min_floor_area)
    walls3d = [proto.coords(k) for k in proto.of_class(SemanticClass.WALL)]
    graph = SceneGraph(levels=[LevelInfo(l.id, l.height) for l in levels])
    footprints: list[RoomFootprint] = []
    for lev in levels:
        plan = build_floorplan(lev, proto)
        rooms2d, openings = segment_rooms(
            plan,
            walls3d,
            lev.height,
            cell=cfg.cell_size,
            wall_thickness=cfg.wall_thickness,
            seed_clearance=cfg.seed_clearance,
            min_opening_width=cfg.min_opening_width,
        )
        cands = []
        for k in lev.ceilings:
            try:
                cands.append(CeilingCandidate.from_coords(proto.coords(k), proto.hole_coords(k)))
            except ValueError:
                continue

        def extrude(fp: Polygon) -> ExtrudedRoom:
            return extrude_room(fp, cands, lev.height, max_ceilings=cfg.max_ceilings, default_height=cfg.default_ceiling_height)

        extruded = list(map_fn(extrude, rooms2d))
        ids = []
        for fp, ex in zip(rooms2d, extruded):
            rid = len(graph.rooms)
            ids.append(rid)
            graph.rooms.append(
                RoomNode(rid, lev.id, ex.floor, list(ex.walls), list(ex.ceilings), [], list(ex.floor_holes), ex.shell)
            )
            footprints.append(RoomFootprint(rid, lev.id, fp))
        graph.edges += opening_edges(openings, ids, extruded, lev.height, cfg)
        log.info("level %d at %.2f m: %d rooms, %d openings", lev.id, lev.height, len(rooms2d), len(openings))

    for e in graph.edges:
        if e.kind != "door":
            continue
        for rid in (e.room_a, e.room_b):
            room = graph.room(rid)
            k = host_wall(room.walls, e.geometry)
            if k is None:
                log.warning("door between rooms %d and %d has no host wall in room %d", e.room_a, e.room_b, rid)
                continue
            room.walls[k : k + 1] = cut_door(room.walls[k], e.geometry)

    if frames:
        all_walls, owner = [], []
        for r in graph.rooms:
            all_walls += r.walls
            owner += [r.id] * len(r.walls)
        found = detect_windows(
            frames,
            all_walls,
            stride=cfg.window_pixel_stride,
            lof_neighbors=cfg.window_lof_neighbors,
            lof_threshold=cfg.window_lof_threshold,
            eps=cfg.window_eps,
            min_samples=cfg.window_min_samples,
            min_points=cfg.window_min_points,
            min_size=cfg.window_min_size,
        )
        for k in sorted(found):
            graph.room(owner[k]).windows += found[k]

    graph.edges += detect_stairs(stairs_mesh, footprints, [l.height for l in levels], cfg.stairs_min_vertices)
    graph.validate()
    return graph

"""Polygon baselines for the per-stage ablation: triangle meshes turned into
polygon sets by greedy merging of adjacent triangles with similar normals."""

from __future__ import annotations

from collections import deque

import numpy as np
import shapely

from .geometry import Plane, as_polygons
from .scene_io import LabeledMesh
from .semantics import N_CLASSES, SemanticClass
from .skeleton import triangle_adjacency

CLASS_NAMES = {SemanticClass.WALL: "wall", SemanticClass.FLOOR: "floor", SemanticClass.CEILING: "ceiling"}


def merge_triangles(mesh: LabeledMesh, angle_deg: float = 20.0, min_area: float = 0.01) -> list[tuple[str, np.ndarray]]:
    """Greedy region growing from the largest triangle; a neighbour joins when
    its normal is within ``angle_deg`` of the region seed. Each region becomes
    one polygon per connected outline, labeled by its majority class."""
    if len(mesh.triangles) == 0:
        return []
    normals = mesh.triangle_normals()
    areas = mesh.triangle_areas()
    adj = triangle_adjacency(mesh.triangles)
    cos_max = np.cos(np.radians(angle_deg))
    region = np.full(len(mesh.triangles), -1, dtype=np.int64)
    out = []
    for seed in np.argsort(-areas, kind="stable"):
        if region[seed] >= 0:
            continue
        rid = int(seed)
        region[seed] = rid
        members, queue = [int(seed)], deque([int(seed)])
        while queue:
            t = queue.popleft()
            for s in adj[t]:
                if region[s] < 0 and normals[s] @ normals[seed] >= cos_max:
                    region[s] = rid
                    members.append(s)
                    queue.append(s)
        idx = np.asarray(members)
        w = areas[idx]
        n = (normals[idx] * w[:, None]).sum(axis=0)
        if np.linalg.norm(n) < 1e-12:
            continue
        tri = mesh.vertices[mesh.triangles[idx]]
        plane = Plane.through(n, (tri.reshape(-1, 3) * np.repeat(w, 3)[:, None]).sum(axis=0) / (3 * w.sum()))
        flat = plane.to_2d(tri)
        merged = shapely.union_all(shapely.polygons(flat[w > 1e-12]), grid_size=1e-7)
        labels = mesh.labels[mesh.triangles[idx].ravel()]
        cls = SemanticClass(int(np.argmax(np.bincount(labels, minlength=N_CLASSES))))
        name = CLASS_NAMES.get(cls)
        if name is None:
            continue
        for part in as_polygons(merged):
            if part.area < min_area:
                continue
            ring = np.asarray(part.exterior.coords)[:-1]
            out.append((name, plane.from_2d(ring)))
    return out

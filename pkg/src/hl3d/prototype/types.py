"""Layout prototype state: a shared vertex pool and planar polygons indexing it."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..geometry import Plane, Polygon3, plane_basis, ring_is_simple
from ..semantics import SemanticClass

EPS_FIT = 1e-4


@dataclass
class PrototypeSet:
    pool: np.ndarray
    polygons: list[Polygon3] = field(default_factory=list)

    def __post_init__(self):
        self.pool = np.asarray(self.pool, dtype=float).reshape(-1, 3)

    def __len__(self) -> int:
        return len(self.polygons)

    def copy(self) -> "PrototypeSet":
        return PrototypeSet(self.pool.copy(), list(self.polygons))

    def normals(self) -> np.ndarray:
        return np.array([p.plane.normal for p in self.polygons]).reshape(-1, 3)

    def offsets(self) -> np.ndarray:
        return np.array([p.plane.offset for p in self.polygons], dtype=float)

    def loops(self) -> list[list[np.ndarray]]:
        return [[np.asarray(l, dtype=np.int64) for l in p.loops] for p in self.polygons]

    def owners(self) -> list[list[int]]:
        """Polygons referencing each pool vertex (sorted, without repeats)."""
        out: list[set] = [set() for _ in range(len(self.pool))]
        for k, p in enumerate(self.polygons):
            for v in p.vertex_ids():
                out[v].add(k)
        return [sorted(s) for s in out]

    def with_planes(self, normals: np.ndarray, offsets: np.ndarray) -> "PrototypeSet":
        polys = [replace(p, plane=Plane(n, d)) for p, n, d in zip(self.polygons, normals, offsets)]
        return PrototypeSet(self.pool, polys)

    def coords(self, k: int) -> np.ndarray:
        return self.polygons[k].coords(self.pool)

    def hole_coords(self, k: int) -> list[np.ndarray]:
        return [self.pool[list(h)] for h in self.polygons[k].holes]

    def of_class(self, cls: SemanticClass) -> list[int]:
        return [k for k, p in enumerate(self.polygons) if p.cls == cls]

    def plane_residual(self) -> float:
        """Largest distance of a vertex from any plane that owns it."""
        worst = 0.0
        for p in self.polygons:
            ids = p.vertex_ids()
            if ids:
                worst = max(worst, float(np.max(np.abs(p.plane.signed_distance(self.pool[ids])))))
        return worst

    def rings_simple(self) -> bool:
        for p in self.polygons:
            u, v = plane_basis(p.plane.normal)
            for loop in p.loops:
                x = self.pool[list(loop)]
                if not ring_is_simple(np.stack([x @ u, x @ v], axis=1)):
                    return False
        return True

    def referenced(self) -> np.ndarray:
        used = np.zeros(len(self.pool), dtype=bool)
        for p in self.polygons:
            used[p.vertex_ids()] = True
        return used

    def compact(self) -> "PrototypeSet":
        """Drop unreferenced pool vertices and re-index the rings."""
        used = self.referenced()
        remap = np.cumsum(used) - 1
        polys = []
        for p in self.polygons:
            ring = tuple(int(remap[i]) for i in p.ring)
            holes = tuple(tuple(int(remap[i]) for i in h) for h in p.holes)
            polys.append(replace(p, ring=ring, holes=holes))
        return PrototypeSet(self.pool[used], polys)

    def n_vertices(self) -> int:
        return int(self.referenced().sum())


def prototype_to_dict(proto: PrototypeSet) -> dict:
    return {
        "vertex_pool": [[round(float(c), 9) + 0.0 for c in x] for x in proto.pool],
        "polygons": [
            {
                "ring": list(p.ring),
                "holes": [list(h) for h in p.holes],
                "class": p.cls.name.lower(),
                "normal": [round(float(c), 12) + 0.0 for c in p.plane.normal],
                "offset": round(p.plane.offset, 12) + 0.0,
            }
            for p in proto.polygons
        ],
    }


def prototype_from_dict(data: dict) -> PrototypeSet:
    polys = []
    for rec in data["polygons"]:
        n = np.asarray(rec["normal"], dtype=float)
        n = n / np.linalg.norm(n)
        polys.append(
            Polygon3(
                Plane(n, float(rec["offset"])),
                tuple(int(i) for i in rec["ring"]),
                SemanticClass[rec["class"].upper()],
                tuple(tuple(int(i) for i in h) for h in rec.get("holes", [])),
            )
        )
    return PrototypeSet(np.asarray(data["vertex_pool"], dtype=float), polys)


def write_prototype(proto: PrototypeSet, path) -> None:
    Path(path).write_text(json.dumps(prototype_to_dict(proto), indent=1) + "\n")


def read_prototype(path) -> PrototypeSet:
    return prototype_from_dict(json.loads(Path(path).read_text()))


def project_vertices(
    pool: np.ndarray,
    normals: np.ndarray,
    offsets: np.ndarray,
    owners: Sequence[Sequence[int]],
    eps: float = EPS_FIT,
) -> tuple[np.ndarray, float]:
    """Move each vertex the least distance onto all of its owning planes.

    One owner: orthogonal projection. Two: onto the intersection line. Three
    or more: least-squares point of the owning planes. Returns the projected
    pool and the largest remaining plane residual.
    """
    out = np.array(pool, dtype=float, copy=True)
    worst = 0.0
    for v, own in enumerate(owners):
        if not own:
            continue
        x = out[v]
        if len(own) == 1:
            k = own[0]
            out[v] = x - (normals[k] @ x - offsets[k]) * normals[k]
            continue
        N = normals[own]
        r = offsets[own] - N @ x
        dx = np.linalg.lstsq(N, r, rcond=1e-8)[0]
        out[v] = x + dx
        worst = max(worst, float(np.max(np.abs(N @ out[v] - offsets[own]))))
    return out, worst

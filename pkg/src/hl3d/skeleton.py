"""Label transfer onto the mesh, superpoint refinement and the category split."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Plane, fit_plane
from .scene_io import CameraFrame, LabeledMesh, LabeledPoints, backproject_labeled_pixels
from .semantics import CATEGORY_LUT, N_CLASSES, Category, SemanticClass

log = logging.getLogger(__name__)


@dataclass
class Superpoint:
    id: int
    vertex_ids: np.ndarray
    triangle_ids: np.ndarray
    plane: Plane
    label: SemanticClass = SemanticClass.UNKNOWN


@dataclass
class SkeletonBundle:
    structural: LabeledMesh
    objects: LabeledMesh
    stairs: LabeledMesh
    inaccurate: LabeledMesh
    # superpoint id of every structural vertex
    structural_superpoints: np.ndarray

    def parts(self) -> dict[str, LabeledMesh]:
        return {
            "structural": self.structural,
            "objects": self.objects,
            "stairs": self.stairs,
            "inaccurate": self.inaccurate,
        }


def _plurality(counts: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum, i.e. the lowest class id on ties
    return np.argmax(counts, axis=1).astype(np.uint8)


def vote_vertex_labels(vertices: np.ndarray, points: LabeledPoints) -> np.ndarray:
    """Per-vertex plurality label of the back-projected points nearest to it."""
    vertices = np.asarray(vertices, dtype=float)
    labels = np.zeros(len(vertices), dtype=np.uint8)
    if len(points) == 0 or len(vertices) == 0:
        return labels
    _, nearest = cKDTree(vertices).query(points.positions)
    counts = np.zeros((len(vertices), N_CLASSES), dtype=np.int64)
    np.add.at(counts, (nearest, points.labels.astype(np.int64)), 1)
    voted = counts.sum(axis=1) > 0
    labels[voted] = _plurality(counts[voted])
    return labels


def triangle_adjacency(triangles: np.ndarray) -> list[list[int]]:
    """Neighbors through shared edges; non-manifold edges link all incident faces."""
    m = len(triangles)
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e.sort(axis=1)
    owner = np.tile(np.arange(m), 3)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e, owner = e[order], owner[order]
    same = np.all(e[1:] == e[:-1], axis=1)
    # runs of identical edges; manifold edges are runs of length 2
    starts = np.flatnonzero(np.concatenate([[True], ~same]))
    lengths = np.diff(np.append(starts, len(e)))
    pairs = [owner[starts[lengths == 2]], owner[starts[lengths == 2] + 1]]
    src = [pairs[0], pairs[1]]
    dst = [pairs[1], pairs[0]]
    for s, ln in zip(starts[lengths > 2].tolist(), lengths[lengths > 2].tolist()):
        g = owner[s : s + ln]
        ii, jj = np.meshgrid(g, g, indexing="ij")
        off = ii != jj
        src.append(ii[off])
        dst.append(jj[off])
    src = np.concatenate(src)
    dst = np.concatenate(dst)
    order = np.argsort(src, kind="stable")
    src, dst = src[order], dst[order]
    bounds = np.searchsorted(src, np.arange(m + 1))
    dl = dst.tolist()
    return [dl[bounds[i] : bounds[i + 1]] for i in range(m)]


def compute_superpoints(
    mesh: LabeledMesh,
    angle_deg: float = 20.0,
    max_offset: float = 0.05,
    min_vertices: int = 10,
) -> list[Superpoint]:
    """Greedy planar region growing over triangle adjacency.

    Seeds are taken in order of decreasing triangle area. A triangle joins the
    growing region when its normal is within ``angle_deg`` of the region's
    running normal and its vertices are within ``max_offset`` of the running
    plane.
    """
    tris = mesh.triangles
    m = len(tris)
    n_vert = mesh.n_vertices
    if m == 0:
        return []
    normals = mesh.triangle_normals()
    areas = mesh.triangle_areas()
    cents = mesh.vertices[tris].mean(axis=1)
    adj = triangle_adjacency(tris)
    cos_max = float(np.cos(np.radians(angle_deg)))

    nl = normals.tolist()
    al = areas.tolist()
    cl = cents.tolist()
    vl = mesh.vertices.tolist()
    tl = tris.tolist()

    region = [-1] * m
    n_regions = 0
    for seed in np.argsort(-areas, kind="stable").tolist():
        if region[seed] != -1:
            continue
        rid = n_regions
        n_regions += 1
        region[seed] = rid
        a = al[seed]
        sn = [nl[seed][k] * a for k in range(3)]
        sc = [cl[seed][k] * a for k in range(3)]
        sa = a
        queue = deque([seed])
        rn = tuple(nl[seed])
        off = rn[0] * cl[seed][0] + rn[1] * cl[seed][1] + rn[2] * cl[seed][2]
        while queue:
            t = queue.popleft()
            for nb in adj[t]:
                if region[nb] != -1:
                    continue
                tn = nl[nb]
                if rn[0] * tn[0] + rn[1] * tn[1] + rn[2] * tn[2] < cos_max:
                    continue
                ok = True
                for vid in tl[nb]:
                    p = vl[vid]
                    if abs(rn[0] * p[0] + rn[1] * p[1] + rn[2] * p[2] - off) > max_offset:
                        ok = False
                        break
                if not ok:
                    continue
                region[nb] = rid
                a = al[nb]
                for k in range(3):
                    sn[k] += tn[k] * a
                    sc[k] += cl[nb][k] * a
                sa += a
                norm = (sn[0] ** 2 + sn[1] ** 2 + sn[2] ** 2) ** 0.5
                if norm > 0.0:
                    rn = (sn[0] / norm, sn[1] / norm, sn[2] / norm)
                    off = (rn[0] * sc[0] + rn[1] * sc[1] + rn[2] * sc[2]) / sa
                queue.append(nb)

    tri_region = np.asarray(region, dtype=np.int64)
    tri_region = _merge_small_regions(tri_region, tris, normals, areas, adj, n_vert, min_vertices)
    return _build_superpoints(mesh, tri_region, normals)


def _vertex_regions(tri_region: np.ndarray, tris: np.ndarray, n_vert: int) -> np.ndarray:
    vreg = np.full(n_vert, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(vreg, tris.ravel(), np.repeat(tri_region, 3))
    vreg[vreg == np.iinfo(np.int64).max] = -1
    return vreg


def _merge_small_regions(tri_region, tris, normals, areas, adj, n_vert, min_vertices):
    while True:
        vreg = _vertex_regions(tri_region, tris, n_vert)
        ids, counts = np.unique(vreg[vreg >= 0], return_counts=True)
        size = dict(zip(ids.tolist(), counts.tolist()))
        # regions that own no vertex at all are also too small
        for r in np.unique(tri_region).tolist():
            size.setdefault(r, 0)
        small = sorted((s, r) for r, s in size.items() if s < min_vertices)
        if not small:
            return tri_region
        n_reg = int(tri_region.max()) + 1
        rn = np.zeros((n_reg, 3))
        np.add.at(rn, tri_region, normals * areas[:, None])
        rn /= np.maximum(np.linalg.norm(rn, axis=1, keepdims=True), 1e-300)
        order = np.argsort(tri_region, kind="stable")
        starts = np.searchsorted(tri_region[order], np.arange(n_reg + 1))
        changed = False
        for _, r in small:
            members = order[starts[r] : starts[r + 1]]
            members = members[tri_region[members] == r]
            if len(members) == 0:
                continue
            nbrs = {int(tri_region[j]) for t in members.tolist() for j in adj[t]} - {r}
            if not nbrs:
                continue
            best = max(sorted(nbrs), key=lambda q: rn[q] @ rn[r])
            tri_region[members] = best
            changed = True
        if not changed:
            return tri_region


def _build_superpoints(mesh: LabeledMesh, tri_region: np.ndarray, normals: np.ndarray) -> list[Superpoint]:
    n_vert = mesh.n_vertices
    vreg = _vertex_regions(tri_region, mesh.triangles, n_vert)
    orphans = np.flatnonzero(vreg < 0)
    if len(orphans):
        owned = np.flatnonzero(vreg >= 0)
        if len(owned):
            _, nn = cKDTree(mesh.vertices[owned]).query(mesh.vertices[orphans])
            vreg[orphans] = vreg[owned[nn]]
    uniq = np.unique(tri_region)
    remap = {int(r): i for i, r in enumerate(uniq.tolist())}
    out = []
    for r, i in remap.items():
        tids = np.flatnonzero(tri_region == r)
        vids = np.flatnonzero(vreg == r)
        pts = mesh.vertices[np.unique(mesh.triangles[tids])]
        try:
            plane = fit_plane(pts, normals[tids])
        except ValueError:
            n = normals[tids].sum(axis=0)
            n = n / (np.linalg.norm(n) or 1.0)
            plane = Plane(n if np.linalg.norm(n) > 0 else np.array([0.0, 0.0, 1.0]), float(n @ pts.mean(axis=0)))
        out.append(Superpoint(i, vids, tids, plane))
    return out


def superpoint_index(superpoints: Sequence[Superpoint], n_vertices: int) -> np.ndarray:
    idx = np.full(n_vertices, -1, dtype=np.int64)
    for sp in superpoints:
        idx[sp.vertex_ids] = sp.id
    return idx


def refine_labels(labels: np.ndarray, superpoints: Sequence[Superpoint]) -> np.ndarray:
    """Give every vertex the plurality label of its superpoint.

    Unknown votes only count when the superpoint is entirely unknown.
    """
    labels = np.asarray(labels, dtype=np.uint8)
    out = labels.copy()
    for sp in superpoints:
        counts = np.bincount(labels[sp.vertex_ids], minlength=N_CLASSES)
        counts[SemanticClass.UNKNOWN] = 0
        lab = SemanticClass.UNKNOWN if counts.sum() == 0 else SemanticClass(int(np.argmax(counts)))
        sp.label = lab
        out[sp.vertex_ids] = lab
    return out


def triangle_categories(mesh: LabeledMesh) -> np.ndarray:
    """Majority coarse category of each triangle's vertices (lowest class id on ties)."""
    lut = np.asarray(CATEGORY_LUT, dtype=np.int64)
    labs = mesh.labels[mesh.triangles].astype(np.int64)
    cats = lut[labs]
    counts = np.stack([(cats == c).sum(axis=1) for c in range(len(Category))], axis=1)
    out = np.argmax(counts, axis=1)
    three_way = counts.max(axis=1) == 1
    if np.any(three_way):
        out[three_way] = lut[labs[three_way].min(axis=1)]
    return out


def split_by_category(mesh: LabeledMesh, superpoints: Optional[Sequence[Superpoint]] = None) -> SkeletonBundle:
    cat = triangle_categories(mesh)
    parts = {}
    used_ids = {}
    for c in Category:
        parts[c], used_ids[c] = mesh.submesh(cat == c)
    if superpoints is not None:
        sp_idx = superpoint_index(superpoints, mesh.n_vertices)[used_ids[Category.STRUCTURAL]]
    else:
        sp_idx = np.zeros(parts[Category.STRUCTURAL].n_vertices, dtype=np.int64)
    return SkeletonBundle(
        structural=parts[Category.STRUCTURAL],
        objects=parts[Category.OBJECT],
        stairs=parts[Category.STAIRS],
        inaccurate=parts[Category.INACCURATE],
        structural_superpoints=sp_idx,
    )


def extract_skeleton(
    mesh: LabeledMesh,
    frames: Sequence[CameraFrame] = (),
    *,
    pixels_per_frame: int = 5000,
    angle_deg: float = 20.0,
    max_offset: float = 0.05,
    min_vertices: int = 10,
    seed: int = 0,
) -> SkeletonBundle:
    """Full skeleton stage.

    Pixel labels from ``frames`` are voted onto the mesh; vertices whose
    superpoint received no usable vote fall back to the labels stored in the
    mesh file.
    """
    rng = np.random.default_rng(seed)
    labelled = [f for f in frames if f.labels is not None and f.depth is not None]
    if labelled:
        pts = LabeledPoints.concat(
            [backproject_labeled_pixels(f, pixels_per_frame, rng, k) for k, f in enumerate(labelled)]
        )
        voted = vote_vertex_labels(mesh.vertices, pts)
    else:
        voted = mesh.labels.copy()
    superpoints = compute_superpoints(mesh, angle_deg, max_offset, min_vertices)
    refined = refine_labels(voted, superpoints)
    missing = refined == SemanticClass.UNKNOWN
    if np.any(missing) and labelled:
        log.info("%d vertices without votes fall back to mesh labels", int(missing.sum()))
        fallback = mesh.labels.copy()
        fallback[~missing] = refined[~missing]
        refined = refine_labels(fallback, superpoints)
    labeled_mesh = LabeledMesh(mesh.vertices, mesh.triangles, refined)
    return split_by_category(labeled_mesh, superpoints)

"""Independent brute-force reference implementations used by the tests."""

import itertools

import numpy as np
from matplotlib.path import Path as MplPath


def sample_polygon_surface(coords, n=1_000_000, rng=None, edge_step=1e-4):
    """Uniform samples inside a planar polygon plus dense samples on its edges."""
    rng = np.random.default_rng(rng)
    coords = np.asarray(coords, dtype=float)
    c = coords.mean(axis=0)
    _, _, vt = np.linalg.svd(coords - c)
    u, v = vt[0], vt[1]
    uv = np.stack([(coords - c) @ u, (coords - c) @ v], axis=1)
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    cand = rng.uniform(lo, hi, size=(n, 2))
    inside = MplPath(uv).contains_points(cand)
    cand = cand[inside]
    pts = [c + cand[:, :1] * u + cand[:, 1:] * v]
    for a, b in zip(coords, np.roll(coords, -1, axis=0)):
        k = max(2, int(np.linalg.norm(b - a) / edge_step))
        t = np.linspace(0, 1, k)[:, None]
        pts.append(a + t * (b - a))
    return np.vstack(pts)


def dense_point_polygon_distance(p, coords, n=1_000_000, rng=None):
    samples = sample_polygon_surface(coords, n, rng)
    return float(np.min(np.linalg.norm(samples - np.asarray(p, dtype=float), axis=1)))


def shoelace(ring2d):
    r = np.asarray(ring2d, dtype=float)
    return 0.5 * abs(np.sum(r[:, 0] * np.roll(r[:, 1], -1) - np.roll(r[:, 0], -1) * r[:, 1]))


def svd_plane(points):
    pts = np.asarray(points, dtype=float)
    c = pts.mean(axis=0)
    n = np.linalg.svd(pts - c)[2][2]
    return n, float(n @ c)


def brute_force_f1(dist, tau):
    """Best matching by enumerating every partial injection (small instances only).

    Among the matchings with the maximum number of pairs within ``tau`` it
    returns that count, which fixes TP and hence F1.
    """
    n_pred, n_gt = dist.shape
    best = 0
    for k in range(min(n_pred, n_gt), -1, -1):
        for preds in itertools.combinations(range(n_pred), k):
            for gts in itertools.permutations(range(n_gt), k):
                if all(dist[p, g] <= tau for p, g in zip(preds, gts)):
                    best = k
                    break
            if best == k:
                break
        if best == k:
            break
    tp = best
    fp = n_pred - tp
    fn = n_gt - tp
    if tp == fp == fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def ray_cast_depth(triangles, frame):
    """Per-pixel Moller-Trumbore against every triangle; returns z-depth, 0 = miss."""
    tris = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    vv, uu = np.mgrid[0 : frame.height, 0 : frame.width]
    dirs = frame.ray_directions(uu.ravel(), vv.ravel())
    origin = frame.center
    best = np.full(len(dirs), np.inf)
    for tri in tris:
        e1 = tri[1] - tri[0]
        e2 = tri[2] - tri[0]
        pvec = np.cross(dirs, e2)
        det = pvec @ e1
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = origin - tri[0]
        u = (pvec @ tvec) * inv
        qvec = np.cross(tvec, e1)
        v = (dirs * qvec).sum(axis=1) * inv
        t = (qvec @ e2) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-3)
        best = np.where(hit & (t < best), t, best)
    best[~np.isfinite(best)] = 0.0
    return best.reshape(frame.height, frame.width)


def central_difference(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g

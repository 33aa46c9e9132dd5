"""Deterministic triangulation of convex polygons.

Meshes are built from concentric rings: the boundary ring is the input
polygon (long edges subdivided), and each inner ring is a copy of the
boundary shrunk toward the vertex mean, resampled more coarsely as it moves
inward.  Consecutive rings are stitched by a merge on their arc-length
parameters and the innermost ring is closed with a centre vertex.

The construction is split into a :class:`MeshTemplate` (topology plus a
sparse linear map from polygon vertices to mesh vertices) and its
application to a concrete polygon.  The flow builds one template from the
initial body and re-applies it every step, so mesh vertices depend linearly
on the support function and the discrete torsion functional is a smooth
function of the body.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError

GRADE = 0.3  # growth of the local edge length per unit distance from the boundary
LAYERS = 1  # inner rings that keep the boundary's node count


@dataclass(frozen=True)
class BodyMesh:
    vertices: np.ndarray  # (V, 2)
    triangles: np.ndarray  # (T, 3), counter-clockwise
    boundary: np.ndarray  # mesh vertex of each polygon vertex (angle node)
    ring: np.ndarray  # all boundary vertices in counter-clockwise order

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.ring] = False
        return mask

    def max_boundary_edge(self) -> float:
        pts = self.vertices[self.ring]
        return float(np.max(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)))


def _check_polygon(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise DomainError("polygon needs at least three planar points")
    edges = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    if np.any(edges <= 1e-14 * max(1.0, edges.max())):
        raise DomainError("polygon has repeated vertices")
    c = pts.mean(axis=0)
    ang = np.unwrap(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]))
    if np.any(np.diff(ang) <= 0) or ang[-1] - ang[0] >= 2 * np.pi:
        raise DomainError("polygon is not simple, positively oriented and star-shaped about its vertex mean")
    return pts


def _stitch(outer, inner, a, b):
    """Triangulate the annulus between two rings given their parameters in [0, 1)."""
    m, n = len(a), len(b)
    j0 = int(np.argmin(np.abs((b - a[0] + 0.5) % 1.0 - 0.5)))
    bb = np.roll(b, -j0)
    bb = bb + np.concatenate([[0], np.cumsum(np.diff(bb) < 0)])
    bb = bb + np.round(a[0] - bb[0])
    aa = np.append(a, a[0] + 1.0)
    bb = np.append(bb, bb[0] + 1.0)
    inner = np.roll(inner, -j0)
    tris = []
    i = j = 0
    while i < m or j < n:
        if j >= n or (i < m and aa[i + 1] <= bb[j + 1]):
            tris.append((outer[i % m], outer[(i + 1) % m], inner[j % n]))
            i += 1
        else:
            tris.append((inner[(j + 1) % n], inner[j % n], outer[i % m]))
            j += 1
    return tris


class MeshTemplate:
    """Mesh topology plus the linear map polygon vertices -> mesh vertices."""

    def __init__(self, points, target_edge: float, grade: float = GRADE, layers: int = LAYERS):
        if not target_edge > 0:
            raise ValueError("target_edge must be positive")
        pts = _check_polygon(points)
        npoly = len(pts)
        self.n_polygon = npoly
        self.target_edge = float(target_edge)

        rows, cols, vals = [], [], []

        def add(vertex, weights):
            for col, w in weights:
                rows.append(vertex)
                cols.append(col)
                vals.append(w)

        # boundary ring: polygon vertices plus subdivision points
        lengths = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        counts = np.maximum(1, np.ceil(lengths / target_edge - 1e-9).astype(int))
        ring_weights = []  # per ring vertex: ((col, w), ...)
        boundary = np.empty(npoly, dtype=int)
        for j in range(npoly):
            boundary[j] = len(ring_weights)
            jn = (j + 1) % npoly
            for k in range(counts[j]):
                w = k / counts[j]
                ring_weights.append(((j, 1.0 - w),) if k == 0 else ((j, 1.0 - w), (jn, w)))
        m0 = len(ring_weights)
        ring_pts = np.array([sum(w * pts[c] for c, w in rw) for rw in ring_weights])
        seg = np.linalg.norm(np.roll(ring_pts, -1, axis=0) - ring_pts, axis=1)
        perimeter = float(seg.sum())
        tau = np.concatenate([[0.0], np.cumsum(seg)[:-1]]) / perimeter

        for v, rw in enumerate(ring_weights):
            add(v, rw)

        # the centroid is carried as one extra column so the map stays sparse
        center_w = [(npoly, 1.0)]
        center = pts.mean(axis=0)
        rbar = float(np.mean(np.linalg.norm(ring_pts - center, axis=1)))
        e_b = perimeter / m0

        def ring_point_weights(t, s):
            # c + s (P(t) - c), P piecewise linear in the ring vertices
            t = t % 1.0
            k = int(np.searchsorted(tau, t, side="right") - 1)
            t0 = tau[k]
            t1 = tau[k + 1] if k + 1 < m0 else 1.0
            w = (t - t0) / (t1 - t0)
            acc = {}
            for col, cw in ring_weights[k]:
                acc[col] = acc.get(col, 0.0) + s * (1.0 - w) * cw
            for col, cw in ring_weights[(k + 1) % m0]:
                acc[col] = acc.get(col, 0.0) + s * w * cw
            for col, cw in center_w:
                acc[col] = acc.get(col, 0.0) + (1.0 - s) * cw
            return sorted(acc.items())

        tris = []
        nverts = m0
        prev_idx = np.arange(m0)
        prev_par = tau.copy()
        s = 1.0
        parity = 0
        layer = 0
        while True:
            structured = layer < layers
            ell = e_b if structured else min(target_edge, e_b + grade * (1.0 - s) * rbar)
            s_new = s - ell * np.sqrt(3.0) / 2.0 / rbar
            ell_new = min(target_edge, e_b + grade * (1.0 - s_new) * rbar)
            if s_new * rbar < 0.75 * ell_new:
                break
            # the first rings copy the boundary sampling so the boundary layer is regular
            mk = m0 if structured else max(6, int(round(s_new * perimeter / ell_new)))
            layer += 1
            parity ^= 1
            if structured:
                nxt = np.append(tau[1:], 1.0)
                par = tau + 0.5 * parity * (nxt - tau)
            else:
                par = (np.arange(mk) + 0.5 * parity) / mk
            idx = np.arange(nverts, nverts + mk)
            for v, t in zip(idx, par):
                add(v, ring_point_weights(t, s_new))
            tris.extend(_stitch(prev_idx, idx, prev_par, par))
            nverts += mk
            prev_idx, prev_par, s = idx, par, s_new

        add(nverts, center_w)
        mk = len(prev_idx)
        for k in range(mk):
            tris.append((prev_idx[k], prev_idx[(k + 1) % mk], nverts))
        nverts += 1

        self._local = sp.csr_matrix((vals, (rows, cols)), shape=(nverts, npoly + 1))
        self.weights = spla.LinearOperator((nverts, npoly), matvec=self._map, matmat=self._map, dtype=float)
        self.triangles = np.array(tris, dtype=np.int64)
        self.boundary = boundary
        self.ring = np.arange(m0)

    @property
    def n_vertices(self) -> int:
        return self.weights.shape[0]

    def _map(self, pts):
        pts = np.asarray(pts, dtype=float)
        centroid = pts.mean(axis=0, keepdims=True)
        return self._local @ np.concatenate([pts, centroid], axis=0)

    def apply(self, points) -> BodyMesh:
        pts = np.asarray(points, dtype=float)
        if pts.shape != (self.n_polygon, 2):
            raise ValueError(f"template expects {self.n_polygon} polygon points, got {pts.shape}")
        verts = self._map(pts)
        mesh = BodyMesh(verts, self.triangles, self.boundary, self.ring)
        areas = mesh.triangle_areas()
        if areas.min() <= 0:
            raise DomainError(f"mesh has an inverted triangle (min area {areas.min():.3e})")
        return mesh


def triangulate(points, target_edge: float) -> BodyMesh:
    """Mesh the polygon ``points`` (counter-clockwise, convex) with the given edge target."""
    pts = getattr(points, "points", points)
    return MeshTemplate(pts, target_edge).apply(pts)

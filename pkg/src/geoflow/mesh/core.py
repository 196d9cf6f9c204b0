"""Triangulated surface container and per-element geometry."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    """Base class for invalid-mesh conditions."""


class MeshTopologyError(MeshError):
    pass


class DegenerateElementError(MeshError):
    def __init__(self, message, triangles=()):
        super().__init__(message)
        self.triangles = np.asarray(triangles, dtype=np.int64)


class BoundaryError(MeshError):
    pass


AREA_EPS = 1e-14


def _readonly(a):
    a.setflags(write=False)
    return a


class SurfaceMesh:
    """Immutable triangulated surface.

    Triangles are vertex-index triples ordered counterclockwise seen from the
    exterior.  Boundary loops are extracted from the triangle-induced boundary
    orientation, which for an outward-oriented film on the substrate runs
    counterclockwise seen from +z.

    Parameters
    ----------
    vertices : (N, 3) array_like
    triangles : (F, 3) array_like of int
    check_degenerate : bool
        Raise :class:`DegenerateElementError` if any triangle area falls below
        the degeneracy threshold.  Disable to inspect bad meshes.
    """

    def __init__(self, vertices, triangles, *, check_degenerate=True):
        v = np.array(vertices, dtype=np.float64, copy=True)
        t = np.array(triangles, dtype=np.int64, copy=True)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must have shape (N, 3), got {v.shape}")
        if t.size == 0:
            t = t.reshape(0, 3)
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError(f"triangles must have shape (F, 3), got {t.shape}")
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinates")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle index out of range")
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise MeshError("triangle with repeated vertex")
        self._v = _readonly(v)
        self._t = _readonly(t)
        self._loops = _extract_boundary_loops(t, len(v))
        if check_degenerate and len(t):
            bad = np.flatnonzero(self.areas <= self.area_threshold)
            if bad.size:
                raise DegenerateElementError(
                    f"{bad.size} degenerate triangle(s), first index {bad[0]}", bad
                )

    @property
    def vertices(self):
        return self._v

    @property
    def triangles(self):
        return self._t

    @property
    def boundary_loops(self):
        return self._loops

    @property
    def n_vertices(self):
        return self._v.shape[0]

    @property
    def n_triangles(self):
        return self._t.shape[0]

    @property
    def is_closed(self):
        return len(self._loops) == 0

    def __repr__(self):
        return (
            f"SurfaceMesh(n_vertices={self.n_vertices}, n_triangles={self.n_triangles}, "
            f"boundary_loops={len(self._loops)})"
        )

    @cached_property
    def _cross(self):
        p = self._v[self._t]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def areas(self):
        return _readonly(0.5 * np.linalg.norm(self._cross, axis=1))

    @cached_property
    def face_normals(self):
        nrm = np.linalg.norm(self._cross, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            n = self._cross / nrm[:, None]
        return _readonly(n)

    @cached_property
    def area_threshold(self):
        """Degeneracy threshold, ``AREA_EPS`` times the squared bounding-box diagonal."""
        if self.n_vertices == 0:
            return 0.0
        span = self._v.max(axis=0) - self._v.min(axis=0)
        return AREA_EPS * float(span @ span)

    @cached_property
    def boundary_vertices(self):
        if not self._loops:
            return np.zeros(0, dtype=np.int64)
        return _readonly(np.unique(np.concatenate(self._loops)))

    @cached_property
    def edges(self):
        """Unique undirected edges as sorted (E, 2) array."""
        t = self._t
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return _readonly(np.unique(np.sort(e, axis=1), axis=0))

    def with_vertices(self, vertices, *, check_degenerate=True):
        """Same connectivity, new positions."""
        return SurfaceMesh(vertices, self._t, check_degenerate=check_degenerate)

    def flipped(self):
        return SurfaceMesh(self._v, self._t[:, ::-1], check_degenerate=False)


def _extract_boundary_loops(t, n_vertices):
    if len(t) == 0:
        return ()
    he = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    n = np.int64(max(n_vertices, 1))
    key = he[:, 0] * n + he[:, 1]
    uniq, counts = np.unique(key, return_counts=True)
    if np.any(counts > 1):
        k = uniq[counts > 1][0]
        raise MeshTopologyError(
            f"edge ({k // n}, {k % n}) traversed twice in the same direction: "
            "inconsistent orientation or non-manifold edge"
        )
    rkey = he[:, 1] * n + he[:, 0]
    is_bnd = ~np.isin(rkey, key)
    bnd = he[is_bnd]
    if len(bnd) == 0:
        return ()
    nxt = {}
    for a, b in bnd.tolist():
        if a in nxt:
            raise MeshTopologyError(f"non-manifold boundary vertex {a}")
        nxt[a] = b
    loops = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = nxt[start]
        while cur != start:
            if cur in seen or cur not in nxt:
                raise MeshTopologyError("boundary edges do not form closed loops")
            loop.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        loops.append(_readonly(np.array(loop, dtype=np.int64)))
    return tuple(loops)


def face_normal_and_area(mesh, k):
    """Unit outward normal and area of triangle ``k``."""
    area = float(mesh.areas[k])
    if area <= mesh.area_threshold:
        raise DegenerateElementError(f"triangle {k} is degenerate", [k])
    return mesh.face_normals[k].copy(), area


def vertex_triangle_incidence(mesh):
    """Sparse (N, F) incidence matrix with unit entries."""
    from scipy import sparse

    t = mesh.triangles
    rows = t.ravel()
    cols = np.repeat(np.arange(len(t)), 3)
    return sparse.csr_matrix(
        (np.ones(rows.size), (rows, cols)), shape=(mesh.n_vertices, len(t))
    )


def lumped_mass_vector(mesh):
    """Per-vertex lumped mass, sum of |K|/3 over incident triangles."""
    m = np.zeros(mesh.n_vertices)
    np.add.at(m, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return m


def lumped_normal_vector(mesh):
    """Per-vertex sum of (|K|/3) n_K over incident triangles."""
    w = (mesh.areas / 3.0)[:, None] * mesh.face_normals
    out = np.zeros((mesh.n_vertices, 3))
    for j in range(3):
        np.add.at(out, mesh.triangles[:, j], w)
    return out


def averaged_vertex_normals(mesh):
    """Area-weighted average of incident face normals (not renormalized)."""
    m = lumped_mass_vector(mesh)
    if np.any(m == 0.0):
        iso = np.flatnonzero(m == 0.0)
        raise MeshTopologyError(f"isolated vertex {iso[0]} has no incident triangle")
    return lumped_normal_vector(mesh) / m[:, None]


def unit_vertex_normals(mesh):
    """Renormalized averaged normals; for visualization only."""
    n = averaged_vertex_normals(mesh)
    return n / np.linalg.norm(n, axis=1)[:, None]


def surface_area(mesh):
    return float(np.sum(mesh.areas))


def signed_volume(mesh):
    """Enclosed volume via the divergence theorem; positive for outward closed meshes."""
    p = mesh.vertices[mesh.triangles]
    return float(np.einsum("ij,ij->", p[:, 0], np.cross(p[:, 1], p[:, 2])) / 6.0)


def shoelace_area(points):
    """Signed area of a planar polygon from its (x, y) coordinates."""
    p = np.asarray(points, dtype=np.float64)
    if len(p) < 3:
        raise BoundaryError("polygon needs at least 3 vertices")
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class AdmissibilityReport:
    a1: bool
    a2: bool
    min_area: float
    normal_rank: int
    singular_values: tuple
    zero_normal_vertices: tuple

    @property
    def ok(self):
        return self.a1 and self.a2


def check_admissible(mesh, *, rank_tol=1e-10):
    """Evaluate the nondegeneracy (A1) and normal-span (A2) conditions."""
    min_area = float(mesh.areas.min()) if mesh.n_triangles else 0.0
    a1 = bool(mesh.n_triangles) and min_area > mesh.area_threshold
    m = lumped_mass_vector(mesh)
    nvec = lumped_normal_vector(mesh)
    with np.errstate(invalid="ignore", divide="ignore"):
        nhat = nvec / m[:, None]
    nhat[m == 0.0] = 0.0
    nhat = np.nan_to_num(nhat)
    mag = np.linalg.norm(nhat, axis=1)
    zero = tuple(np.flatnonzero(mag <= 1e-12).tolist())
    s = np.linalg.svd(nhat.T, compute_uv=False) if len(nhat) else np.zeros(3)
    rank = int(np.sum(s > rank_tol * s[0])) if s[0] > 0 else 0
    return AdmissibilityReport(
        a1=a1,
        a2=(rank == 3 and not zero),
        min_area=min_area,
        normal_rank=rank,
        singular_values=tuple(float(x) for x in s),
        zero_normal_vertices=zero,
    )


def update_positions(mesh, displacement):
    """Return the mesh moved by ``displacement``; raises on degenerate output."""
    d = np.asarray(displacement, dtype=np.float64)
    if d.shape != mesh.vertices.shape:
        raise MeshError(f"displacement shape {d.shape} != {mesh.vertices.shape}")
    if not np.all(np.isfinite(d)):
        raise MeshError("non-finite displacement")
    return mesh.with_vertices(mesh.vertices + d)


def orient_outward(mesh):
    """Apply a single global flip if needed so normals point outward.

    Closed meshes are flipped when their signed volume is negative.  Open
    meshes are flipped when the boundary loop of largest projected area runs
    clockwise seen from +z.
    """
    if mesh.n_triangles == 0:
        return mesh
    if mesh.is_closed:
        flip = signed_volume(mesh) < 0.0
    else:
        areas = [shoelace_area(mesh.vertices[lp]) for lp in mesh.boundary_loops if len(lp) >= 3]
        flip = bool(areas) and areas[int(np.argmax(np.abs(areas)))] < 0.0
    if not flip:
        return mesh
    return SurfaceMesh(mesh.vertices, mesh.triangles[:, ::-1])

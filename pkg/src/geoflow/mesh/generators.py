"""Benchmark geometries: icosphere, dumbbell, cuboids, spherical caps."""
from __future__ import annotations

import numpy as np

from .core import MeshError, SurfaceMesh


def gen_icosphere(subdivisions=0, radius=1.0):
    """Subdivided icosahedron with every vertex on the sphere of ``radius``."""
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")
    g = (1.0 + 5.0**0.5) / 2.0
    v = [
        (-1, g, 0), (1, g, 0), (-1, -g, 0), (1, -g, 0),
        (0, -1, g), (0, 1, g), (0, -1, -g), (0, 1, -g),
        (g, 0, -1), (g, 0, 1), (-g, 0, -1), (-g, 0, 1),
    ]
    f = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in v]
    faces = np.array(f, dtype=np.int64)
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            idx = cache.get(key)
            if idx is None:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                idx = cache[key] = len(verts) - 1
            return idx

        new = []
        for a, b, c in faces.tolist():
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.array(new, dtype=np.int64)
    pts = np.array(verts)
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    return SurfaceMesh(radius * pts, faces)


def dumbbell_point(theta, phi):
    """Dumbbell parameterization; poles at (+-1, 0, 0)."""
    r = (0.6 * np.cos(phi) ** 2 + 0.4) * np.sin(phi)
    return np.stack(
        np.broadcast_arrays(np.cos(phi), r * np.cos(theta), r * np.sin(theta)), axis=-1
    )


def dumbbell_counts(n_theta, n_phi):
    """(vertices, triangles) produced by :func:`gen_dumbbell`."""
    return n_theta * (n_phi - 1) + 2, 2 * n_theta * (n_phi - 1)


def dumbbell_grid_for_vertices(target_vertices, *, aspect=1.2, max_skew=1.5):
    """Grid (n_theta, n_phi) whose vertex count is closest to ``target_vertices``.

    Only grids with ``n_theta / (n_phi - 1)`` within a factor ``max_skew`` of
    ``aspect`` are considered; ties go to the grid nearest ``aspect``.
    """
    best = None
    for n_theta in range(3, target_vertices):
        rings = max(1, round((target_vertices - 2) / n_theta))
        if abs(np.log(n_theta / rings / aspect)) > np.log(max_skew):
            continue
        nv, _ = dumbbell_counts(n_theta, rings + 1)
        score = (abs(nv - target_vertices), abs(np.log(n_theta / rings / aspect)))
        if best is None or score < best[0]:
            best = (score, n_theta, rings + 1)
    return best[1], best[2]


def gen_dumbbell(n_theta=43, n_phi=26):
    """Uniform (theta, phi) sampling of the dumbbell with fanned poles."""
    if n_theta < 3 or n_phi < 2:
        raise MeshError("dumbbell grid needs n_theta >= 3 and n_phi >= 2")
    th = 2.0 * np.pi * np.arange(n_theta) / n_theta
    ph = np.pi * np.arange(1, n_phi) / n_phi
    T, P = np.meshgrid(th, ph)
    ring = dumbbell_point(T, P).reshape(-1, 3)
    verts = np.vstack([[1.0, 0.0, 0.0], ring, [-1.0, 0.0, 0.0]])
    south = len(verts) - 1

    def vid(j, i):
        return 1 + j * n_theta + (i % n_theta)

    tris = []
    for i in range(n_theta):
        tris.append((0, vid(0, i), vid(0, i + 1)))
    for j in range(n_phi - 2):
        for i in range(n_theta):
            a, b = vid(j, i), vid(j, i + 1)
            c, d = vid(j + 1, i), vid(j + 1, i + 1)
            tris += [(a, c, d), (a, d, b)]
    for i in range(n_theta):
        tris.append((south, vid(n_phi - 2, i + 1), vid(n_phi - 2, i)))
    tris = np.array(tris, dtype=np.int64)
    mesh = SurfaceMesh(verts, tris)
    from .core import signed_volume

    if signed_volume(mesh) < 0:
        mesh = SurfaceMesh(verts, tris[:, ::-1])
    return mesh


def _divisions(length, h):
    return max(1, int(round(length / h)))


def gen_cuboid(lx, ly, lz, target_h, open_bottom=False):
    """Axis-aligned box triangulated on per-face structured grids.

    Closed boxes are centred at the origin.  With ``open_bottom`` the face
    z = 0 is omitted, the box occupies z in [0, lz] with its footprint centred
    at the origin, and the single boundary loop lies in z = 0.
    """
    if min(lx, ly, lz) <= 0 or target_h <= 0:
        raise ValueError("box dimensions and target_h must be positive")
    n = np.array([_divisions(lx, target_h), _divisions(ly, target_h), _divisions(lz, target_h)])
    size = np.array([lx, ly, lz], dtype=np.float64)
    origin = -0.5 * size
    if open_bottom:
        origin[2] = 0.0

    index = {}
    verts = []

    def vid(ijk):
        key = tuple(int(x) for x in ijk)
        idx = index.get(key)
        if idx is None:
            idx = index[key] = len(verts)
            verts.append(origin + size * np.array(key, dtype=np.float64) / n)
        return idx

    tris = []
    for axis in range(3):
        u, w = [a for a in range(3) if a != axis]
        for side in (0, 1):
            if open_bottom and axis == 2 and side == 0:
                continue
            outward = np.zeros(3)
            outward[axis] = 1.0 if side else -1.0
            for i in range(n[u]):
                for j in range(n[w]):
                    corners = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        ijk = np.zeros(3, dtype=np.int64)
                        ijk[axis] = side * n[axis]
                        ijk[u] = i + di
                        ijk[w] = j + dj
                        corners.append(vid(ijk))
                    a, b, c, d = corners
                    quad = [(a, b, c), (a, c, d)] if (i + j) % 2 == 0 else [(a, b, d), (b, c, d)]
                    for tri in quad:
                        p = np.array([verts[k] for k in tri])
                        nrm = np.cross(p[1] - p[0], p[2] - p[0])
                        tris.append(tri if nrm @ outward > 0 else tri[::-1])
    return SurfaceMesh(np.array(verts), np.array(tris, dtype=np.int64))


def gen_spherical_cap(n_rings, contact_angle=np.pi / 2, radius=1.0):
    """Spherical cap resting on z = 0 and meeting it at ``contact_angle``.

    Ring ``j`` (polar angle ``j * contact_angle / n_rings``) carries ``6 j``
    vertices, giving a quasi-uniform triangulation.
    """
    if n_rings < 1:
        raise ValueError("n_rings must be >= 1")
    if not 0.0 < contact_angle < np.pi:
        raise ValueError("contact_angle must lie in (0, pi)")
    z0 = radius * np.cos(contact_angle)
    verts = [np.array([0.0, 0.0, radius - z0])]
    rings = [[0]]
    for j in range(1, n_rings + 1):
        alpha = contact_angle * j / n_rings
        phis = 2.0 * np.pi * np.arange(6 * j) / (6 * j)
        ids = []
        for ph in phis:
            p = np.array([np.sin(alpha) * np.cos(ph), np.sin(alpha) * np.sin(ph), np.cos(alpha)])
            p *= radius
            p[2] -= z0
            if j == n_rings:
                p[2] = 0.0
            ids.append(len(verts))
            verts.append(p)
        rings.append(ids)
    tris = []
    for j in range(1, n_rings + 1):
        inner, outer = rings[j - 1], rings[j]
        if len(inner) == 1:
            for i in range(len(outer)):
                tris.append((inner[0], outer[i], outer[(i + 1) % len(outer)]))
            continue
        ni, no = len(inner), len(outer)
        a = b = 0
        while a < ni or b < no:
            # advance whichever next vertex has the smaller azimuth fraction
            if b < no and (a >= ni or (b + 1) / no <= (a + 1) / ni):
                tris.append((inner[a % ni], outer[b % no], outer[(b + 1) % no]))
                b += 1
            else:
                tris.append((inner[a % ni], outer[b % no], inner[(a + 1) % ni]))
                a += 1
    return SurfaceMesh(np.array(verts), np.array(tris, dtype=np.int64))


def gen_flat_patch(nx=4, ny=4, size=1.0):
    """Planar square grid in z = 0 with upward normals."""
    xs = np.linspace(0.0, size, nx + 1)
    ys = np.linspace(0.0, size, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    tris = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b, c, d = a + 1, a + nx + 2, a + nx + 1
            tris += [(a, b, c), (a, c, d)]
    return SurfaceMesh(verts, np.array(tris, dtype=np.int64))


def _open_box(dims, h):
    return gen_cuboid(*dims, h, open_bottom=True)


def _closed_box(dims, h):
    return gen_cuboid(*dims, h)


GENERATORS = {
    "icosphere": lambda subdivisions=4, radius=1.0: gen_icosphere(subdivisions, radius),
    "dumbbell": lambda n_theta=43, n_phi=26: gen_dumbbell(n_theta, n_phi),
    "cuboid": lambda dims=(1.0, 1.0, 8.0), h=0.2: _closed_box(dims, h),
    "openbox": lambda dims=(1.0, 6.0, 1.0), h=0.2: _open_box(dims, h),
    "cap": lambda n_rings=8, contact_angle_degrees=90.0, radius=1.0: gen_spherical_cap(
        n_rings, np.radians(contact_angle_degrees), radius
    ),
    "flat": lambda nx=4, ny=4, size=1.0: gen_flat_patch(nx, ny, size),
}


def generate(name, **parameters):
    """Build a benchmark mesh by generator name; see ``GENERATORS``."""
    try:
        fn = GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown generator {name!r}; expected one of {sorted(GENERATORS)}") from None
    try:
        return fn(**parameters)
    except TypeError as exc:
        raise ValueError(f"bad parameters for generator {name!r}: {exc}") from None

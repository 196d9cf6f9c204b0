"""OFF / OBJ / legacy-VTK readers and writers for triangle meshes."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import MeshError, SurfaceMesh, orient_outward


class MeshParseError(MeshError):
    def __init__(self, message, path=None, line=None):
        loc = f"{path}:{line}: " if line is not None else ""
        super().__init__(loc + message)
        self.path = path
        self.line = line


FORMATS = ("off", "obj", "vtk")


def _format_of(path, fmt):
    if fmt is None:
        fmt = Path(path).suffix.lstrip(".")
    fmt = fmt.lower()
    if fmt not in FORMATS:
        raise MeshError(f"unsupported mesh format {fmt!r}")
    return fmt


def _content_lines(path):
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def _read_off(path):
    lines = _content_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise MeshParseError("empty file", path, 1) from None
    rest = ""
    if header.startswith("OFF"):
        rest = header[3:].strip()
    else:
        raise MeshParseError("missing OFF header", path, lineno)
    if not rest:
        try:
            lineno, rest = next(lines)
        except StopIteration:
            raise MeshParseError("missing counts line", path, lineno) from None
    try:
        nv, nf = (int(x) for x in rest.split()[:2])
    except ValueError:
        raise MeshParseError(f"bad counts line {rest!r}", path, lineno) from None
    verts = np.empty((nv, 3))
    for i in range(nv):
        try:
            lineno, line = next(lines)
            verts[i] = [float(x) for x in line.split()[:3]]
        except StopIteration:
            raise MeshParseError("unexpected end of file in vertex list", path, lineno) from None
        except ValueError:
            raise MeshParseError(f"bad vertex line {line!r}", path, lineno) from None
    tris = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshParseError("unexpected end of file in face list", path, lineno) from None
        parts = line.split()
        try:
            k = int(parts[0])
            idx = [int(x) for x in parts[1 : 1 + k]]
        except (ValueError, IndexError):
            raise MeshParseError(f"bad face line {line!r}", path, lineno) from None
        if k != 3 or len(idx) != 3:
            raise MeshParseError(f"face with {k} vertices; only triangles supported", path, lineno)
        tris[i] = idx
    return verts, tris


def _obj_index(tok, nv, path, lineno):
    i = int(tok.split("/")[0])
    if i < 0:
        i = nv + i
    else:
        i -= 1
    if not 0 <= i < nv:
        raise MeshParseError(f"face index {tok} out of range", path, lineno)
    return i


def _read_obj(path):
    verts, tris = [], []
    for lineno, line in _content_lines(path):
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif tag == "f":
                if len(parts) != 4:
                    raise MeshParseError(
                        f"face with {len(parts) - 1} vertices; only triangles supported",
                        path,
                        lineno,
                    )
                tris.append([_obj_index(t, len(verts), path, lineno) for t in parts[1:]])
        except ValueError:
            raise MeshParseError(f"bad line {line!r}", path, lineno) from None
    return np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(tris, dtype=np.int64).reshape(-1, 3)


def load_mesh(path, format=None):
    """Read a triangle mesh and orient it outward with at most one global flip.

    Raises :class:`MeshParseError` for malformed files,
    :class:`~geoflow.mesh.core.MeshTopologyError` for non-manifold or
    inconsistently oriented input and
    :class:`~geoflow.mesh.core.DegenerateElementError` for zero-area triangles.
    """
    fmt = _format_of(path, format)
    if fmt == "off":
        v, t = _read_off(path)
    elif fmt == "obj":
        v, t = _read_obj(path)
    else:
        raise MeshError("VTK is an export-only format")
    if len(t) == 0:
        raise MeshParseError("mesh has no triangles", path)
    return orient_outward(SurfaceMesh(v, t))


def _fmt(x):
    return f"{x:.17g}"


def save_mesh(mesh, path, format=None, point_data=None):
    """Write ``mesh``; VTK output may carry per-vertex ``point_data`` arrays."""
    fmt = _format_of(path, format)
    if mesh.n_triangles == 0:
        raise MeshError("refusing to write an empty mesh")
    v, t = mesh.vertices, mesh.triangles
    out = []
    if fmt == "off":
        out.append("OFF")
        out.append(f"{len(v)} {len(t)} 0")
        out += [" ".join(map(_fmt, p)) for p in v.tolist()]
        out += [f"3 {a} {b} {c}" for a, b, c in t.tolist()]
    elif fmt == "obj":
        out += ["v " + " ".join(map(_fmt, p)) for p in v.tolist()]
        out += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in t.tolist()]
    else:
        out += [
            "# vtk DataFile Version 3.0",
            "geoflow surface",
            "ASCII",
            "DATASET UNSTRUCTURED_GRID",
            f"POINTS {len(v)} double",
        ]
        out += [" ".join(map(_fmt, p)) for p in v.tolist()]
        out.append(f"CELLS {len(t)} {4 * len(t)}")
        out += [f"3 {a} {b} {c}" for a, b, c in t.tolist()]
        out.append(f"CELL_TYPES {len(t)}")
        out += ["5"] * len(t)
        if point_data:
            out.append(f"POINT_DATA {len(v)}")
            for name, arr in point_data.items():
                a = np.asarray(arr, dtype=np.float64)
                if a.shape[0] != len(v):
                    raise MeshError(f"point data {name!r} has wrong length")
                if a.ndim == 1:
                    out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                    out += [_fmt(x) for x in a.tolist()]
                else:
                    out.append(f"VECTORS {name} double")
                    out += [" ".join(map(_fmt, p)) for p in a.tolist()]
    Path(path).write_text("\n".join(out) + "\n", encoding="ascii")

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MeshQualityReport:
    sigma_max: float
    min_area: float
    per_triangle_ratio: np.ndarray
    degenerate: np.ndarray  # indices of triangles whose ratio is infinite
    mesh_size: float  # largest circumdiameter


def triangle_ratios(vertices, triangles):
    """Circumdiameter over incircle diameter, per triangle.

    With side lengths a, b, c, area A and semiperimeter s the circumradius is
    abc / (4A) and the inradius A / s, so the ratio is abc s / (4 A^2).
    """
    p = np.asarray(vertices)[np.asarray(triangles)]
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    s = 0.5 * (a + b + c)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = a * b * c * s / (4.0 * area**2)
        circumdiam = a * b * c / (2.0 * area)
    bad = ~(area > 0) | ~np.isfinite(ratio)
    ratio = np.where(bad, np.inf, ratio)
    circumdiam = np.where(bad, np.inf, circumdiam)
    return ratio, circumdiam, area


def mesh_quality(mesh):
    ratio, circumdiam, area = triangle_ratios(mesh.vertices, mesh.triangles)
    bad = np.flatnonzero(~np.isfinite(ratio) | (area <= mesh.area_threshold))
    ratio = ratio.copy()
    ratio[bad] = np.inf
    return MeshQualityReport(
        sigma_max=float(ratio.max()) if ratio.size else float("nan"),
        min_area=float(area.min()) if area.size else float("nan"),
        per_triangle_ratio=ratio,
        degenerate=bad,
        mesh_size=float(circumdiam.max()) if circumdiam.size else float("nan"),
    )

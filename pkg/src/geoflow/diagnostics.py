"""Per-step measurements, convergence-order fits and pinch-off detection."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .assembly import contact_cosine, mesh_substrate_area
from .mesh.core import surface_area as _surface_area
from .mesh.quality import mesh_quality

CSV_HEADER = (
    "step", "time", "area", "substrate_area", "energy", "area_delta",
    "sigma_max", "min_area", "lambda_inf", "residual", "status",
)
AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class DiagnosticsRecord:
    step: int
    time: float
    surface_area: float
    sigma_max: float
    min_triangle_area: float
    substrate_area: float | None = None
    energy: float | None = None
    area_delta: float | None = None
    lambda_inf_norm: float | None = None
    residual: float | None = None
    status: str = "ok"
    # relative error of the contact-line identity for the step leaving this state
    identity_error: float | None = None
    neck: float | None = None

    def csv_row(self):
        def fmt(x):
            return "" if x is None else repr(float(x))

        energy = self.energy if self.substrate_area is not None else None
        return [
            str(self.step), fmt(self.time), fmt(self.surface_area), fmt(self.substrate_area),
            fmt(energy), fmt(self.area_delta), fmt(self.sigma_max), fmt(self.min_triangle_area),
            fmt(self.lambda_inf_norm), fmt(self.residual), self.status,
        ]


class DiagnosticsCsvWriter:
    """Append-only CSV sink, flushed after every row."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", newline="", encoding="ascii")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(CSV_HEADER)
        self._fh.flush()

    def write(self, record):
        self._w.writerow(record.csv_row())
        self._fh.flush()

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def surface_area(mesh):
    return _surface_area(mesh)


def dewetting_energy(mesh, theta):
    """Free energy |surface| - cos(theta) |substrate patch|; ``theta`` in radians."""
    return surface_area(mesh) - contact_cosine(theta) * mesh_substrate_area(mesh)


def sphere_radius(t):
    if t >= 0.25:
        raise ValueError("the shrinking unit sphere vanishes at t = 0.25")
    return math.sqrt(1.0 - 4.0 * t)


def sphere_error(mesh, t):
    """Max over vertices of | |x_j| - sqrt(1 - 4t) |."""
    r = sphere_radius(t)
    return float(np.max(np.abs(np.linalg.norm(mesh.vertices, axis=1) - r)))


def estimate_order(errors, parameters):
    """Least-squares slope of log(error) against log(parameter)."""
    e = np.asarray(errors, dtype=np.float64)
    p = np.asarray(parameters, dtype=np.float64)
    if e.shape != p.shape or e.size < 3:
        raise ValueError("need at least three (error, parameter) pairs")
    if np.any(e <= 0) or np.any(p <= 0):
        raise ValueError("errors and parameters must be positive")
    slope, _ = np.polyfit(np.log(p), np.log(e), 1)
    return float(slope)


def lambda_inf_norm(lam):
    if lam is None:
        return None
    return float(np.max(np.linalg.norm(np.asarray(lam), axis=1))) if len(lam) else 0.0


@dataclass
class PinchOffEvent:
    kind: str  # "degenerate-element" or "neck"
    triangle: int | None = None
    neck: float | None = None
    position: float | None = None
    time: float | None = None
    step: int | None = None


def neck_profile(mesh, axis="x", n_slabs=200):
    """Cross-section size along a coordinate axis.

    For each of ``n_slabs`` planes normal to ``axis`` the surface is cut along
    its edges, and the largest distance of a cut point from the axis line is
    recorded.  The axis line runs through the vertex centroid, dropped into
    the substrate plane z = 0 for open surfaces.  Returns ``(positions,
    radii)``; planes that miss the surface get radius 0.
    """
    k = AXES[axis] if isinstance(axis, str) else int(axis)
    x = mesh.vertices
    center = x.mean(axis=0)
    if not mesh.is_closed:
        center[2] = 0.0
    e = mesh.edges
    s = x[:, k]
    lo, hi = s.min(), s.max()
    pos = lo + (hi - lo) * (np.arange(n_slabs) + 0.5) / n_slabs
    sa, sb = s[e[:, 0]], s[e[:, 1]]
    radii = np.zeros(n_slabs)
    other = [c for c in range(3) if c != k]
    for i, p in enumerate(pos):
        # half-open test so planes through a vertex layer still cut the surface
        hit = ((sa <= p) & (sb > p)) | ((sb <= p) & (sa > p))
        if not np.any(hit):
            continue
        a, b = e[hit, 0], e[hit, 1]
        w = ((p - sa[hit]) / (sb[hit] - sa[hit]))[:, None]
        pts = x[a] + w * (x[b] - x[a])
        d = pts[:, other] - center[other]
        radii[i] = np.sqrt((d**2).sum(axis=1)).max()
    return pos, radii


def neck_measure(mesh, axis="x", n_slabs=200):
    """Smallest cross-section radius at an interior valley of the profile.

    A slab counts as a valley when wider sections exist on both sides; the
    tapering ends of a convex body therefore never register.  Returns
    ``(radius, position)`` or ``(None, None)`` without a valley.
    """
    pos, r = neck_profile(mesh, axis, n_slabs)
    left = np.maximum.accumulate(r)
    right = np.maximum.accumulate(r[::-1])[::-1]
    valley = np.zeros(len(r), dtype=bool)
    valley[1:-1] = (left[:-2] > r[1:-1]) & (right[2:] > r[1:-1]) & (r[1:-1] > 0)
    if not np.any(valley):
        return None, None
    idx = np.flatnonzero(valley)
    j = idx[np.argmin(r[idx])]
    return float(r[j]), float(pos[j])


def detect_pinch_off(mesh, *, neck_axis=None, neck_threshold=None, n_slabs=200):
    """Report a degenerate triangle or, when configured, a collapsed neck."""
    bad = mesh_quality(mesh).degenerate
    if bad.size:
        return PinchOffEvent("degenerate-element", triangle=int(bad[np.argmin(mesh.areas[bad])]))
    if neck_axis is not None and neck_threshold is not None:
        r, p = neck_measure(mesh, neck_axis, n_slabs)
        if r is not None and r < neck_threshold:
            return PinchOffEvent("neck", neck=r, position=p)
    return None


def state_record(mesh, step, time, theta=None):
    """Record of the geometric quantities of one state; step fields left empty."""
    q = mesh_quality(mesh)
    area = surface_area(mesh)
    rec = DiagnosticsRecord(
        step=step, time=time, surface_area=area,
        sigma_max=float(q.sigma_max), min_triangle_area=float(q.min_area), energy=area,
    )
    if not mesh.is_closed:
        rec.substrate_area = float(mesh_substrate_area(mesh))
        c = 0.0 if theta is None else contact_cosine(theta)
        rec.energy = area - c * rec.substrate_area
    return rec

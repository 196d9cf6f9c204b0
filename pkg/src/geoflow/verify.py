"""Self-check suites behind ``geoflow verify``."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .assembly import (
    TangentialForm,
    boundary_conormal_terms,
    mesh_substrate_area,
    stiffness_matrix,
    tangential_form,
)
from .mesh import check_admissible, gen_cuboid, gen_flat_patch, gen_icosphere
from .schemes import FlowConfig, RunStatus, homogeneous_solution, run_flow
from .solver import solve


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _perturbed_sphere(subdivisions, amplitude, rng):
    m = gen_icosphere(subdivisions)
    x = m.vertices * (1.0 + amplitude * rng.uniform(-1, 1, size=(m.n_vertices, 1)))
    return m.with_vertices(x)


def check_stiffness_identities(rng):
    m = _perturbed_sphere(2, 0.05, rng)
    A = stiffness_matrix(m)
    rows = float(np.abs(A @ np.ones(m.n_vertices)).max())
    sym = float(abs(A - A.T).max())
    ok = rows < 1e-12 and sym < 1e-14
    return ok, f"row sums {rows:.1e}, asymmetry {sym:.1e}"


def check_rigid_kernel(rng):
    m = _perturbed_sphere(2, 0.05, rng)
    G = tangential_form(m, TangentialForm.SYMMETRIC_GRADIENT)
    w, b = rng.normal(size=3), rng.normal(size=3)
    rigid = (np.cross(w, m.vertices) + b).ravel()
    r = float(np.abs(G @ rigid).max())
    return r < 1e-12, f"|G r|_inf = {r:.1e} for a rigid motion"


def check_substrate_identity(rng):
    m = gen_cuboid(1.0, 2.0, 1.0, 0.25, open_bottom=True)
    load, coupling = boundary_conormal_terms(m)
    d = np.zeros_like(m.vertices)
    bv = m.boundary_vertices
    d[bv, :2] = 0.05 * rng.normal(size=(len(bv), 2))
    d[~np.isin(np.arange(m.n_vertices), bv)] = 0.05 * rng.normal(size=(m.n_vertices - len(bv), 3))
    pred = load.ravel() @ d.ravel() + 0.5 * d.ravel() @ (coupling @ d.ravel())
    s0 = mesh_substrate_area(m)
    actual = mesh_substrate_area(m.with_vertices(m.vertices + d)) - s0
    err = abs(pred - actual) / abs(s0)
    return err < 1e-12, f"relative mismatch {err:.1e}"


def check_homogeneous_uniqueness(rng):
    worst = 0.0
    for _ in range(3):
        m = _perturbed_sphere(2, 0.1, rng)
        u = homogeneous_solution("DualMDR-MCF", m, 1e-2, seed=int(rng.integers(1 << 30)))
        worst = max(worst, float(np.abs(u).max()))
    flat = check_admissible(gen_flat_patch(3, 3))
    ok = worst <= 1e-9 and not flat.ok
    return ok, f"max |u| = {worst:.1e}; flat patch flagged: {not flat.ok}"


def check_dense_oracle(rng):
    n = 120
    A = rng.normal(size=(n, n)) + n * np.eye(n)
    A[rng.random((n, n)) < 0.8] = 0.0
    np.fill_diagonal(A, n + rng.random(n))
    b = rng.normal(size=n)
    x, rep = solve(sparse.csr_matrix(A), b)
    ref = np.linalg.solve(A, b)
    err = float(np.abs(x - ref).max() / np.abs(ref).max())
    return err < 1e-10 and not rep.singular, f"relative deviation {err:.1e}"


def _monotone(values, rel=1e-9):
    v = np.asarray(values)
    return bool(np.all(v[1:] <= v[:-1] + rel * np.abs(v[:-1])))


def check_mcf_energy(rng):
    r = run_flow(FlowConfig("DualMDR-MCF", _perturbed_sphere(2, 0.05, rng), 1e-3, 0.01))
    areas = [x.surface_area for x in r.records]
    ok = r.status is RunStatus.COMPLETED and _monotone(areas)
    return ok, f"{len(areas) - 1} steps, area {areas[0]:.4f} -> {areas[-1]:.4f}"


def check_sd_energy(rng):
    r = run_flow(FlowConfig("DualMDR-SD", gen_cuboid(1, 1, 2, 0.25), 1e-3, 0.01))
    areas = [x.surface_area for x in r.records]
    ok = r.status is RunStatus.COMPLETED and _monotone(areas)
    return ok, f"{len(areas) - 1} steps, area {areas[0]:.4f} -> {areas[-1]:.4f}"


def check_dewetting_energy(rng):
    box = gen_cuboid(1, 2, 1, 0.25, open_bottom=True)
    r = run_flow(FlowConfig("DualMDR-Dewet", box, 1e-3, 0.01, theta_degrees=120))
    energy = [x.energy for x in r.records]
    ident = max(x.identity_error or 0.0 for x in r.records)
    ok = r.status is RunStatus.COMPLETED and _monotone(energy) and ident < 1e-10
    return ok, f"energy {energy[0]:.4f} -> {energy[-1]:.4f}, identity error {ident:.1e}"


def check_cuboid_pinch_off(rng):
    cfg = FlowConfig(
        "DualMDR-SD", {"generator": "cuboid", "parameters": {"dims": [1, 1, 8], "h": 0.2}},
        1e-3, 0.45, neck_axis="z", neck_threshold=0.12, reuse_factorization=True,
    )
    r = run_flow(cfg)
    t = None if r.event is None else r.event.time
    ok = r.status is RunStatus.PINCH_OFF and t is not None and 0.33 <= t <= 0.40
    areas = [x.surface_area for x in r.records]
    ok = ok and _monotone(areas)
    return ok, f"status {r.status.value}, event time {t}"


FAST = [
    ("stiffness row sums and symmetry", check_stiffness_identities),
    ("symmetric-gradient rigid kernel", check_rigid_kernel),
    ("substrate-area identity", check_substrate_identity),
    ("homogeneous-system uniqueness", check_homogeneous_uniqueness),
    ("sparse solve vs dense oracle", check_dense_oracle),
    ("mean curvature flow area decay", check_mcf_energy),
    ("surface diffusion area decay", check_sd_energy),
    ("dewetting energy decay", check_dewetting_energy),
]
FULL = FAST + [("1:1:8 cuboid pinch-off time", check_cuboid_pinch_off)]


def run_suite(name="fast", seed=0):
    checks = {"fast": FAST, "full": FULL}[name]
    rng = np.random.default_rng(seed)
    results = []
    for label, fn in checks:
        t0 = time.perf_counter()
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(label, bool(ok), detail, time.perf_counter() - t0))
    return results


def format_table(results):
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  time     detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.seconds:6.1f}s  {r.detail}")
    return "\n".join(lines)

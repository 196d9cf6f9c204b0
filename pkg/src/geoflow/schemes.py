"""One-step solvers for the curvature flows and the outer time loop.

Every step works on the current mesh, assembles one linear block system in
the nodal unknowns, solves it once and returns the velocity ``v`` together
with whatever auxiliary fields the formulation carries (curvature ``H``, dual
multiplier ``lam``, Lagrange multiplier ``kappa``).
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .assembly import (
    TangentialForm,
    assemble_operators,
    contact_cosine,
    lumped_normal_operator,
    mass_matrix,
    mdr_constraint_row,
    mesh_substrate_area,
    vectorize,
)
from .diagnostics import (
    DiagnosticsCsvWriter,
    PinchOffEvent,
    detect_pinch_off,
    lambda_inf_norm,
    state_record,
)
from .mesh.core import DegenerateElementError, SurfaceMesh, update_positions
from .mesh.generators import generate
from .mesh.io import load_mesh, save_mesh
from .solver import LinearSolver, SolveReport, SolverError, lu_factor

logger = logging.getLogger("geoflow")


class SchemeKind(str, enum.Enum):
    DZIUK_MCF = "Dziuk-MCF"
    BGN_MCF = "BGN-MCF"
    MDR_MCF = "MDR-MCF"
    DUAL_MDR_MCF = "DualMDR-MCF"
    BGN_SD = "BGN-SD"
    DUAL_MDR_SD = "DualMDR-SD"
    MDR_DEWET = "MDR-Dewet"
    DUAL_MDR_DEWET = "DualMDR-Dewet"
    BGN_DEWET = "BGN-Dewet"

    @property
    def is_dewetting(self):
        return self.value.endswith("Dewet")

    @property
    def uses_tangential_form(self):
        return self.value.startswith(("MDR", "DualMDR"))


class SingularSystemError(RuntimeError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass
class StepSolution:
    v: np.ndarray
    report: SolveReport
    H: np.ndarray | None = None
    lam: np.ndarray | None = None
    kappa: np.ndarray | None = None
    # the reduced linear system and the unknown layout, kept for inspection
    matrix: sparse.spmatrix | None = field(default=None, repr=False)
    rhs: np.ndarray | None = field(default=None, repr=False)
    blocks: dict | None = field(default=None, repr=False)


def _solve_checked(K, rhs, solver):
    solver = solver or LinearSolver()
    x, rep = solver.solve(K, rhs)
    if rep.singular or not np.all(np.isfinite(x)):
        raise SingularSystemError(
            f"singular block system ({rep.message or f'residual {rep.residual:.2e}'})", rep
        )
    return x, rep


def _ops(mesh, ops, form):
    if ops is None:
        return assemble_operators(mesh, form)
    return ops


def _constrained_v_dofs(mesh):
    """Third component at boundary vertices: fixed to zero in X_h."""
    return 3 * mesh.boundary_vertices + 2


class _Layout:
    """Ordered unknown blocks with optional eliminated (constrained) dofs."""

    def __init__(self, sizes):
        self.names = list(sizes)
        self.offsets = {}
        off = 0
        for name, n in sizes.items():
            self.offsets[name] = (off, off + n)
            off += n
        self.size = off
        self.removed = np.zeros(0, dtype=np.int64)

    def remove(self, name, local):
        self.removed = np.union1d(self.removed, self.offsets[name][0] + np.asarray(local, dtype=np.int64))

    @property
    def keep(self):
        mask = np.ones(self.size, dtype=bool)
        mask[self.removed] = False
        return np.flatnonzero(mask)

    def reduce(self, K, rhs):
        if self.removed.size == 0:
            return sparse.csc_matrix(K), rhs
        k = self.keep
        K = sparse.csr_matrix(K)[k][:, k]
        return sparse.csc_matrix(K), rhs[k]

    def expand(self, x):
        full = np.zeros(self.size)
        full[self.keep] = x
        return full

    def part(self, full, name):
        a, b = self.offsets[name]
        return full[a:b]

    def slices(self):
        return {n: slice(*self.offsets[n]) for n in self.names}


def _finish(layout, K, rhs, solver, *, vector=("v", "lam")):
    Kr, br = layout.reduce(K, rhs)
    x, rep = _solve_checked(Kr, br, solver)
    full = layout.expand(x)
    out = {}
    for name in layout.names:
        val = layout.part(full, name)
        out[name] = val.reshape(-1, 3) if name in vector else val.copy()
    return out, rep, Kr, br


# ---------------------------------------------------------------- block systems


def dziuk_system(mesh, tau, ops):
    """(M + tau A3) v = -A3 x with the consistent vector mass matrix."""
    K = vectorize(mass_matrix(mesh)) + tau * ops.stiffness3
    return _Layout({"v": 3 * mesh.n_vertices}), K, -ops.rhs_geometry.ravel()


def bgn_mcf_system(mesh, tau, ops, normal_blocks="vertex"):
    """(N + tau A3) v = -A3 x.

    ``normal_blocks="vertex"`` pairs the interpolated normal velocity
    ``I_h(v . n)`` against ``eta . n`` (per-vertex rank-one blocks), which makes
    the one-step map discretely harmonic against nodally tangential fields.
    ``"face"`` uses the corner-wise products ``(v . n_K)(eta . n_K)``.
    """
    if normal_blocks == "vertex":
        N = ops.bgn_vertex_blocks
    elif normal_blocks == "face":
        N = ops.bgn_normal_blocks
    else:
        raise ValueError(f"unknown normal_blocks {normal_blocks!r}")
    return _Layout({"v": 3 * mesh.n_vertices}), N + tau * ops.stiffness3, -ops.rhs_geometry.ravel()


def mdr_mcf_system(mesh, tau, ops):
    """(v, kappa): G v - B kappa = 0 and (C + tau D) v = -D x."""
    C, D = mdr_constraint_row(mesh, ops.n_hat)
    n = mesh.n_vertices
    K = sparse.bmat([[ops.tangential_form, -ops.B], [C + tau * D, None]], format="csr")
    rhs = np.concatenate([np.zeros(3 * n), -(D @ mesh.vertices.ravel())])
    return _Layout({"v": 3 * n, "kappa": n}), K, rhs


def dual_system(mesh, tau, ops, *, flow="mcf", theta=None, with_dual=True):
    """Assemble the dual-MDR block system (or its BGN reduction) over ``mesh``.

    Unknowns and test rows are ordered ``v, H, lam, kappa``::

        [ tau A3 - c tau/2 C   -B     -G     0  ] [v  ]   [ -A3 x + c L ]
        [ B^T                  S      0      0  ] [H  ] = [ 0           ]
        [ G                    0      0     -B  ] [lam]   [ 0           ]
        [ 0                    0      B^T    0  ] [kap]   [ 0           ]

    with ``S`` the lumped mass (mean curvature flow) or the stiffness (surface
    diffusion), ``c = cos(theta)`` and ``L, C`` the contact-line load and
    coupling (open surfaces only).  ``with_dual=False`` drops ``lam`` and
    ``kappa`` and yields the BGN-type system.  On open surfaces the third
    components of ``v`` and ``lam`` at boundary vertices are eliminated
    together with the matching test rows.
    """
    n = mesh.n_vertices
    B = ops.B
    A3 = ops.stiffness3
    if flow == "mcf":
        S = sparse.diags(ops.lumped_mass)
    elif flow == "sd":
        S = ops.stiffness
    else:
        raise ValueError(f"unknown flow {flow!r}")
    Kvv = tau * A3
    rhs_v = -ops.rhs_geometry.ravel()
    open_surface = not mesh.is_closed
    c = 0.0 if theta is None else contact_cosine(theta)
    if open_surface and c != 0.0:
        Kvv = Kvv - (0.5 * tau * c) * ops.boundary_coupling
        rhs_v = rhs_v + c * ops.boundary_load.ravel()
    if with_dual:
        G = ops.tangential_form
        lay = _Layout({"v": 3 * n, "H": n, "lam": 3 * n, "kappa": n})
        K = sparse.bmat(
            [
                [Kvv, -B, -G, None],
                [B.T, S, None, None],
                [G, None, None, -B],
                [None, None, B.T, None],
            ],
            format="csr",
        )
        rhs = np.concatenate([rhs_v, np.zeros(5 * n)])
    else:
        lay = _Layout({"v": 3 * n, "H": n})
        K = sparse.bmat([[Kvv, -B], [B.T, S]], format="csr")
        rhs = np.concatenate([rhs_v, np.zeros(n)])
    if open_surface:
        fixed = _constrained_v_dofs(mesh)
        lay.remove("v", fixed)
        if with_dual:
            lay.remove("lam", fixed)
    return lay, K, rhs


def _boundary_edge_weights(mesh):
    """Per-vertex half lengths of incident contact-line edges."""
    w = np.zeros(mesh.n_vertices)
    for lp in mesh.boundary_loops:
        q = np.roll(lp, -1)
        ell = np.linalg.norm(mesh.vertices[q] - mesh.vertices[lp], axis=1)
        np.add.at(w, lp, 0.5 * ell)
        np.add.at(w, q, 0.5 * ell)
    return w


def mdr_dewetting_system(mesh, tau, ops, theta):
    """MDR dewetting system in (v, H, kappa).

    The curvature row is tested with ``w = psi n_hat``::

        -M H + D (x + tau v) - cos(theta) [L + tau/2 C v] . (psi n_hat)
             + sin(theta) int_{contact line} (e3 . n_hat) psi = 0

    followed by the surface-diffusion row and the tangential-form row.
    """
    n = mesh.n_vertices
    _, D = mdr_constraint_row(mesh, ops.n_hat)
    W = lumped_normal_operator(ops.n_hat)  # psi -> psi n_hat
    c, s = contact_cosine(theta), float(np.sin(theta))
    sin_term = s * _boundary_edge_weights(mesh) * ops.n_hat[:, 2]
    curv_v = tau * D - (0.5 * tau * c) * (W.T @ ops.boundary_coupling)
    curv_rhs = -(D @ mesh.vertices.ravel()) + c * (W.T @ ops.boundary_load.ravel()) - sin_term
    M = sparse.diags(ops.lumped_mass)
    lay = _Layout({"v": 3 * n, "H": n, "kappa": n})
    # row blocks: eta (tangential form), psi (curvature), phi (normal velocity)
    K = sparse.bmat(
        [
            [ops.tangential_form, None, -ops.B],
            [curv_v, -M, None],
            [ops.B.T, ops.stiffness, None],
        ],
        format="csr",
    )
    rhs = np.concatenate([np.zeros(3 * n), curv_rhs, np.zeros(n)])
    lay.remove("v", _constrained_v_dofs(mesh))
    return lay, K, rhs


def _require_open(mesh):
    if mesh.is_closed:
        raise ValueError("dewetting schemes need an open surface with a contact line")


def build_system(kind, mesh, tau, ops, *, theta=None, normal_blocks="vertex"):
    """Unreduced block system ``(layout, K, rhs)`` of one step of ``kind``."""
    kind = SchemeKind(kind)
    if kind.is_dewetting:
        _require_open(mesh)
        if theta is None:
            raise ValueError("dewetting schemes need a contact angle")
    if kind is SchemeKind.DZIUK_MCF:
        return dziuk_system(mesh, tau, ops)
    if kind is SchemeKind.BGN_MCF:
        return bgn_mcf_system(mesh, tau, ops, normal_blocks)
    if kind is SchemeKind.MDR_MCF:
        return mdr_mcf_system(mesh, tau, ops)
    if kind is SchemeKind.MDR_DEWET:
        return mdr_dewetting_system(mesh, tau, ops, theta)
    flow = "mcf" if kind is SchemeKind.DUAL_MDR_MCF else "sd"
    with_dual = kind in (SchemeKind.DUAL_MDR_MCF, SchemeKind.DUAL_MDR_SD, SchemeKind.DUAL_MDR_DEWET)
    return dual_system(mesh, tau, ops, flow=flow, theta=theta if kind.is_dewetting else None, with_dual=with_dual)


def step(kind, mesh, tau, *, theta=None, form=TangentialForm.FULL_GRADIENT, ops=None, solver=None,
         normal_blocks="vertex"):
    """One step of scheme ``kind``; ``theta`` in radians for dewetting."""
    kind = SchemeKind(kind)
    form = TangentialForm(form) if kind.uses_tangential_form else TangentialForm.FULL_GRADIENT
    if ops is None:
        ops = assemble_operators(mesh, form)
    lay, K, rhs = build_system(kind, mesh, tau, ops, theta=theta, normal_blocks=normal_blocks)
    out, rep, Kr, br = _finish(lay, K, rhs, solver)
    H = out.get("H")
    if kind is SchemeKind.BGN_MCF:
        # curvature implied by the normal-velocity pairing
        H = -(ops.lumped_normal * out["v"]).sum(axis=1) / ops.lumped_mass
    return StepSolution(
        v=out["v"], H=H, lam=out.get("lam"), kappa=out.get("kappa"),
        report=rep, matrix=Kr, rhs=br, blocks=lay.slices(),
    )


def step_dziuk_mcf(mesh, tau, *, ops=None, solver=None):
    return step(SchemeKind.DZIUK_MCF, mesh, tau, ops=ops, solver=solver)


def step_bgn_mcf(mesh, tau, *, ops=None, solver=None, normal_blocks="vertex"):
    return step(SchemeKind.BGN_MCF, mesh, tau, ops=ops, solver=solver, normal_blocks=normal_blocks)


def step_mdr_mcf(mesh, tau, form=TangentialForm.FULL_GRADIENT, *, ops=None, solver=None):
    return step(SchemeKind.MDR_MCF, mesh, tau, form=form, ops=ops, solver=solver)


def step_dual_mdr_mcf(mesh, tau, form=TangentialForm.FULL_GRADIENT, *, ops=None, solver=None):
    return step(SchemeKind.DUAL_MDR_MCF, mesh, tau, form=form, ops=ops, solver=solver)


def step_bgn_sd(mesh, tau, *, ops=None, solver=None):
    return step(SchemeKind.BGN_SD, mesh, tau, ops=ops, solver=solver)


def step_dual_mdr_sd(mesh, tau, form=TangentialForm.FULL_GRADIENT, *, ops=None, solver=None):
    return step(SchemeKind.DUAL_MDR_SD, mesh, tau, form=form, ops=ops, solver=solver)


def step_mdr_dewetting(mesh, tau, theta, form=TangentialForm.FULL_GRADIENT, *, ops=None, solver=None):
    return step(SchemeKind.MDR_DEWET, mesh, tau, theta=theta, form=form, ops=ops, solver=solver)


def step_dual_mdr_dewetting(mesh, tau, theta, form=TangentialForm.FULL_GRADIENT, *, ops=None, solver=None):
    return step(SchemeKind.DUAL_MDR_DEWET, mesh, tau, theta=theta, form=form, ops=ops, solver=solver)


def step_bgn_dewetting(mesh, tau, theta, *, ops=None, solver=None):
    return step(SchemeKind.BGN_DEWET, mesh, tau, theta=theta, ops=ops, solver=solver)


def homogeneous_solution(kind, mesh, tau, *, theta=None, form=TangentialForm.FULL_GRADIENT, seed=0, sweeps=3):
    """Solve the step system with the geometric data replaced by zero.

    A plain solve with zero data returns zero trivially, so instead a random
    iterate ``u`` is corrected ``sweeps`` times by ``u <- u - K^{-1} K u``.
    Each sweep shrinks ``u`` by roughly cond(K) * eps when the system is
    uniquely solvable, while any kernel component of the start survives
    untouched.  Raises SingularSystemError when the factorization fails.
    """
    kind = SchemeKind(kind)
    ops = assemble_operators(mesh, form if kind.uses_tangential_form else TangentialForm.FULL_GRADIENT)
    lay, K, rhs = build_system(kind, mesh, tau, ops, theta=theta)
    Kr, _ = lay.reduce(K, rhs)
    try:
        lu = lu_factor(Kr)
    except SolverError as exc:
        raise SingularSystemError(str(exc), exc.report) from None
    u = np.random.default_rng(seed).uniform(-1.0, 1.0, Kr.shape[0])
    for _ in range(sweeps):
        u = u - lu.solve(Kr @ u)
    return u


# ---------------------------------------------------------------- time loop


class RunStatus(str, enum.Enum):
    COMPLETED = "completed"
    PINCH_OFF = "pinch-off"
    SOLVER_FAILURE = "solver-failure"


@dataclass
class FlowConfig:
    """Everything one run needs.

    ``mesh`` is a :class:`SurfaceMesh`, a ``{"generator": name, "parameters":
    {...}}`` mapping or a ``{"file": path}`` mapping.
    """

    scheme: SchemeKind
    mesh: object
    tau: float
    t_end: float
    theta_degrees: float | None = None
    tangential_form: TangentialForm = TangentialForm.FULL_GRADIENT
    solver_method: str = "DirectLU"
    solver_tol: float = 1e-10
    reuse_factorization: bool = False
    output_dir: str | None = None
    csv_name: str = "diagnostics.csv"
    snapshot_every: int = 0
    snapshot_format: str = "vtk"
    deterministic: bool = True
    threads: int = 1
    neck_axis: str | None = None
    neck_threshold: float | None = None

    def __post_init__(self):
        self.scheme = SchemeKind(self.scheme)
        self.tangential_form = TangentialForm(self.tangential_form)
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise ValueError("tau must be positive")
        if not (self.t_end >= 0 and np.isfinite(self.t_end)):
            raise ValueError("t_end must be non-negative")
        if self.scheme.is_dewetting:
            if self.theta_degrees is None or not 0.0 < self.theta_degrees < 180.0:
                raise ValueError("dewetting needs theta_degrees in (0, 180)")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")

    @property
    def theta(self):
        return None if self.theta_degrees is None else float(np.radians(self.theta_degrees))

    @property
    def n_steps(self):
        return int(np.floor(self.t_end / self.tau + 1e-9))


@dataclass
class RunResult:
    status: RunStatus
    records: list
    final_mesh: SurfaceMesh
    event: PinchOffEvent | None = None
    message: str = ""
    last_solution: StepSolution | None = field(default=None, repr=False)
    factorizations: int = 0


def resolve_mesh(source):
    if isinstance(source, SurfaceMesh):
        return source
    if isinstance(source, dict):
        if "file" in source:
            return load_mesh(source["file"])
        if "generator" in source:
            return generate(source["generator"], **dict(source.get("parameters", {})))
    raise ValueError(f"cannot build a mesh from {source!r}")


def _identity_error(mesh, new_mesh, ops, v, tau):
    """Mismatch of the exact substrate-area identity for one step, relative."""
    d = tau * v.ravel()
    pairing = ops.boundary_load.ravel() @ d + 0.5 * d @ (ops.boundary_coupling @ d)
    s0 = mesh_substrate_area(mesh)
    change = mesh_substrate_area(new_mesh) - s0
    return abs(pairing - change) / max(abs(s0), 1e-300)


def _snapshot(out_dir, fmt, name, mesh, sol=None):
    data = {}
    if sol is not None:
        data["velocity"] = sol.v
        for key in ("H", "lam", "kappa"):
            val = getattr(sol, key)
            if val is not None:
                data[key] = val
    save_mesh(mesh, Path(out_dir) / f"{name}.{fmt}", fmt, point_data=data if fmt == "vtk" else None)


def run_flow(config, *, callback=None):
    """Evolve the configured mesh until ``t_end``, pinch-off or solver failure.

    Record ``m`` holds the state at ``t_m`` together with the outcome of the
    step leaving it (area decrease, multiplier norm, residual); the last record
    has those fields empty.  With an output directory every record is appended
    to the CSV as soon as it is complete, and the last valid mesh is always
    written as ``final.<format>``.
    """
    cfg = config
    mesh = resolve_mesh(cfg.mesh)
    theta = cfg.theta
    threads = 1 if cfg.deterministic else max(1, int(cfg.threads))
    solver = LinearSolver(cfg.solver_method, cfg.solver_tol, reuse_factorization=cfg.reuse_factorization)
    out_dir = None
    writer = None
    if cfg.output_dir is not None:
        out_dir = Path(cfg.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        writer = DiagnosticsCsvWriter(out_dir / cfg.csv_name)
    records = []

    def emit(rec):
        records.append(rec)
        if writer is not None:
            writer.write(rec)
        if callback is not None:
            callback(rec)

    status, event, message, sol = RunStatus.COMPLETED, None, "", None
    rec = state_record(mesh, 0, 0.0, theta)
    try:
        n_steps = cfg.n_steps
        m = 0
        while True:
            if m == n_steps:
                rec.status = status.value
                emit(rec)
                break
            try:
                ops = assemble_operators(mesh, cfg.tangential_form, threads=threads)
                sol = step(cfg.scheme, mesh, cfg.tau, theta=theta, form=cfg.tangential_form, ops=ops, solver=solver)
            except SingularSystemError as exc:
                status, message = RunStatus.SOLVER_FAILURE, str(exc)
                rec.residual = exc.report.residual
                rec.status = status.value
                emit(rec)
                break
            except DegenerateElementError as exc:
                status, message = RunStatus.PINCH_OFF, str(exc)
                event = PinchOffEvent("degenerate-element", triangle=int(exc.triangles[0]), time=rec.time, step=m)
                rec.status = status.value
                emit(rec)
                break
            rec.residual = sol.report.residual
            rec.lambda_inf_norm = lambda_inf_norm(sol.lam)
            if out_dir is not None and cfg.snapshot_every and m % cfg.snapshot_every == 0:
                _snapshot(out_dir, cfg.snapshot_format, f"surf_{m:06d}", mesh, sol)
            t_next = (m + 1) * cfg.tau
            try:
                new_mesh = update_positions(mesh, cfg.tau * sol.v)
            except DegenerateElementError as exc:
                status, message = RunStatus.PINCH_OFF, str(exc)
                event = PinchOffEvent("degenerate-element", triangle=int(exc.triangles[0]), time=t_next, step=m + 1)
                rec.status = status.value
                emit(rec)
                break
            if not mesh.is_closed:
                rec.identity_error = _identity_error(mesh, new_mesh, ops, sol.v, cfg.tau)
            nxt = state_record(new_mesh, m + 1, t_next, theta)
            rec.area_delta = rec.surface_area - nxt.surface_area
            emit(rec)
            mesh, rec, m = new_mesh, nxt, m + 1
            ev = detect_pinch_off(mesh, neck_axis=cfg.neck_axis, neck_threshold=cfg.neck_threshold)
            if ev is not None:
                ev.time, ev.step = t_next, m
                rec.neck = ev.neck
                status, event = RunStatus.PINCH_OFF, ev
                message = f"pinch-off ({ev.kind}) at t = {t_next:.6g}"
                rec.status = status.value
                emit(rec)
                break
    finally:
        if writer is not None:
            writer.close()
        if out_dir is not None:
            _snapshot(out_dir, cfg.snapshot_format, "final", mesh, None)
    if message:
        logger.info(message)
    return RunResult(status, records, mesh, event, message, sol, solver.factorizations)

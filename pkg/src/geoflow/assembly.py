"""Finite-element operators for continuous piecewise-linear fields on a triangulated surface.

Vector fields are stored interleaved: the component ``c`` of the value at
vertex ``i`` lives at flat index ``3 * i + c``.
"""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .mesh.core import (
    BoundaryError,
    DegenerateElementError,
    lumped_mass_vector,
    lumped_normal_vector,
    shoelace_area,
)

E3 = np.array([0.0, 0.0, 1.0])


class TangentialForm(str, enum.Enum):
    FULL_GRADIENT = "FullGradient"
    SYMMETRIC_GRADIENT = "SymmetricGradient"


def element_gradients(mesh):
    """Surface gradients of the three hat functions on every triangle, shape (F, 3, 3).

    ``grads[K, k]`` is the constant gradient of the basis function of local
    vertex ``k``: the rotated opposite edge ``n x e_k / (2|K|)``.
    """
    p = mesh.vertices[mesh.triangles]
    opp = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    n = mesh.face_normals
    twice = 2.0 * mesh.areas
    return np.cross(n[:, None, :], opp) / twice[:, None, None]


def _check_nondegenerate(mesh):
    bad = np.flatnonzero(mesh.areas <= mesh.area_threshold)
    if bad.size:
        raise DegenerateElementError(f"degenerate triangle {bad[0]}", bad)


def _scatter(rows, cols, vals, shape):
    return sparse.csr_matrix(
        (vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape
    )


def _element_pairs(tri):
    """Global (row, col) index arrays for every local (k, l) pair, shape (F, 3, 3)."""
    return (
        np.broadcast_to(tri[:, :, None], (len(tri), 3, 3)),
        np.broadcast_to(tri[:, None, :], (len(tri), 3, 3)),
    )


def _stiffness_chunk(mesh, sel):
    g = element_gradients(mesh)[sel]
    a = mesh.areas[sel]
    ke = a[:, None, None] * np.einsum("fkd,fld->fkl", g, g)
    r, c = _element_pairs(mesh.triangles[sel])
    return _scatter(r, c, ke, (mesh.n_vertices,) * 2)


def _chunked(mesh, kernel, threads):
    if threads <= 1 or mesh.n_triangles < 2 * threads:
        return kernel(mesh, slice(None))
    bounds = np.linspace(0, mesh.n_triangles, threads + 1).astype(int)
    sels = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda s: kernel(mesh, s), sels))
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


def stiffness_matrix(mesh, threads=1):
    """Scalar stiffness, entries integral of grad(phi_i) . grad(phi_j)."""
    _check_nondegenerate(mesh)
    return _chunked(mesh, _stiffness_chunk, threads).tocsr()


def mass_matrix(mesh):
    """Consistent P1 mass matrix, |K|/12 (1 + delta_kl) per element."""
    a = mesh.areas
    me = a[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))
    r, c = _element_pairs(mesh.triangles)
    return _scatter(r, c, me, (mesh.n_vertices,) * 2)


def vectorize(scalar_op):
    """Lift a scalar N x N operator to interleaved 3N x 3N acting component-wise."""
    return sparse.kron(scalar_op, sparse.identity(3), format="csr")


def _symgrad_chunk(mesh, sel):
    g = element_gradients(mesh)[sel]
    a = mesh.areas[sel]
    n = mesh.face_normals[sel]
    proj = np.eye(3)[None] - n[:, :, None] * n[:, None, :]
    gg = np.einsum("fkd,fld->fkl", g, g)
    # a(v, w) = 1/2 int (P grad v P + ...) : (...), see tangential_form
    ke = proj[:, None, :, None, :] * gg[:, :, None, :, None]
    ke = ke + np.einsum("fkd,flc->fkcld", g, g)
    ke *= a[:, None, None, None, None]
    tri = mesh.triangles[sel]
    dof = 3 * tri[:, :, None] + np.arange(3)[None, None, :]
    rows = np.broadcast_to(dof[:, :, :, None, None], ke.shape)
    cols = np.broadcast_to(dof[:, None, None, :, :], ke.shape)
    return _scatter(rows, cols, ke, (3 * mesh.n_vertices,) * 2)


def tangential_form(mesh, form=TangentialForm.FULL_GRADIENT, threads=1, stiffness=None):
    """Matrix of the bilinear form that selects the tangential motion.

    FullGradient is the component-wise stiffness.  SymmetricGradient realizes
    ``1/2 int E(v) : E(w)`` with ``E(v) = P (grad v + grad v^T) P``; the
    tangential projection ``P`` puts every infinitesimal rigid motion in its
    kernel.
    """
    form = TangentialForm(form)
    if form is TangentialForm.FULL_GRADIENT:
        if stiffness is None:
            stiffness = stiffness_matrix(mesh, threads)
        return vectorize(stiffness)
    _check_nondegenerate(mesh)
    return _chunked(mesh, _symgrad_chunk, threads).tocsr()


def lumped_normal_operator(nvec):
    """3N x N matrix B with ``B[3i + c, i] = nvec[i, c]``.

    ``w . (B H)`` is the lumped integral of ``H n . w``; ``phi . (B^T v)`` the
    lumped integral of ``(v . n) phi``.
    """
    n = len(nvec)
    rows = np.arange(3 * n)
    cols = np.repeat(np.arange(n), 3)
    return sparse.csr_matrix((nvec.ravel(), (rows, cols)), shape=(3 * n, n))


def _block_diagonal(blocks):
    n = len(blocks)
    rows = np.broadcast_to(3 * np.arange(n)[:, None, None] + np.arange(3)[None, :, None], blocks.shape)
    cols = np.broadcast_to(3 * np.arange(n)[:, None, None] + np.arange(3)[None, None, :], blocks.shape)
    return _scatter(rows, cols, blocks, (3 * n, 3 * n))


def bgn_face_blocks(mesh):
    """Block-diagonal 3N x 3N: per vertex, sum over incident K of (|K|/3) n_K n_K^T."""
    w = (mesh.areas / 3.0)[:, None, None] * (
        mesh.face_normals[:, :, None] * mesh.face_normals[:, None, :]
    )
    blocks = np.zeros((mesh.n_vertices, 3, 3))
    for j in range(3):
        np.add.at(blocks, mesh.triangles[:, j], w)
    return _block_diagonal(blocks)


def bgn_vertex_blocks(lumped_mass, lumped_normal):
    """Block-diagonal 3N x 3N: per vertex, N_i N_i^T / M_i.

    This is the lumped pairing of ``I_h(v . n)`` against ``eta . n``; its image
    at each vertex is parallel to the averaged normal.
    """
    blocks = lumped_normal[:, :, None] * lumped_normal[:, None, :] / lumped_mass[:, None, None]
    return _block_diagonal(blocks)


def mass_lumped_integral(mesh, integrand):
    """Lumped quadrature: sum over K of |K|/3 times the three corner values.

    ``integrand`` has shape (F, 3): the value on triangle K at its local
    corner j.  Values may differ between triangles sharing a vertex.
    """
    vals = np.asarray(integrand, dtype=np.float64)
    if vals.shape != (mesh.n_triangles, 3):
        raise ValueError(f"integrand must have shape ({mesh.n_triangles}, 3)")
    return float(np.sum(mesh.areas / 3.0 * vals.sum(axis=1)))


def mdr_constraint_row(mesh, n_hat=None):
    """Operators of the MDR normal-velocity constraint row.

    Returns ``(C, D)``, both N x 3N.  ``phi . (C v)`` is the lumped integral of
    ``(v . n_hat) phi``; ``phi . (D X)`` is the integral of
    ``grad X : grad(phi n_hat)``.  The second integrand is affine per element
    (constant ``grad X`` times an affine factor), so the centroid rule is exact.
    """
    m = lumped_mass_vector(mesh)
    if n_hat is None:
        n_hat = lumped_normal_vector(mesh) / m[:, None]
    n_hat = np.asarray(n_hat, dtype=np.float64)
    mag = np.linalg.norm(n_hat, axis=1)
    if np.any(mag <= 1e-14):
        raise BoundaryError(f"vanishing averaged normal at vertex {np.argmin(mag)}")
    _check_nondegenerate(mesh)
    n = mesh.n_vertices
    C = lumped_normal_operator(m[:, None] * n_hat).T.tocsr()

    tri = mesh.triangles
    g = element_gradients(mesh)
    a = mesh.areas
    gg = np.einsum("fkd,fld->fkl", g, g)  # G[j, i] = g_j . g_i
    nloc = n_hat[tri]  # (F, 3 local k, 3 comp)
    nbar = nloc.mean(axis=1)  # value at the centroid
    # De[f, i, j, c] = |K| (nbar_c G_ji + 1/3 sum_k nloc_kc G_jk)
    de = nbar[:, None, None, :] * gg.transpose(0, 2, 1)[:, :, :, None]
    de = de + np.einsum("fjk,fkc->fjc", gg, nloc)[:, None, :, :] / 3.0
    de *= a[:, None, None, None]
    rows = np.broadcast_to(tri[:, :, None, None], de.shape)
    cols = np.broadcast_to(3 * tri[:, None, :, None] + np.arange(3), de.shape)
    D = _scatter(rows, cols, de, (n, 3 * n))
    return C, D


def contact_cosine(theta):
    """cos(theta), with the rounding residue at a right angle mapped to exactly 0."""
    c = float(np.cos(theta))
    return 0.0 if abs(c) < 1e-15 else c


def _loop_edges(mesh):
    edges = []
    for lp in mesh.boundary_loops:
        edges.append(np.column_stack([lp, np.roll(lp, -1)]))
    if not edges:
        return np.zeros((0, 2), dtype=np.int64)
    return np.vstack(edges)


def boundary_conormal_terms(mesh, theta=None, *, z_tol=0.0):
    """Contact-line terms built from the conormal ``1/2 (d_s id + d_s X) x e3``.

    With ``X = id + tau v`` the boundary integral of the conormal against a
    test field ``w`` equals ``load . w + (tau / 2) w . (coupling v)``.  Edge
    integrals use the trapezoid rule, exact for the affine integrands.

    Returns ``(load, coupling)`` with ``load`` of shape (N, 3) and
    ``coupling`` a 3N x 3N sparse matrix.  Both are multiplied by
    ``cos(theta)`` when ``theta`` is given.
    """
    v = mesh.vertices
    bv = mesh.boundary_vertices
    if bv.size and np.max(np.abs(v[bv, 2])) > z_tol:
        raise BoundaryError("boundary vertex off the substrate plane z = 0")
    n = mesh.n_vertices
    ed = _loop_edges(mesh)
    load = np.zeros((n, 3))
    if len(ed) == 0:
        return load, sparse.csr_matrix((3 * n, 3 * n))
    p, q = ed[:, 0], ed[:, 1]
    t = np.cross(v[q] - v[p], E3)
    np.add.at(load, p, 0.5 * t)
    np.add.at(load, q, 0.5 * t)
    # (a x e3) = (a_y, -a_x, 0) with a = v_q - v_p; paired with (w_p + w_q) / 2
    rows, cols, vals = [], [], []
    for wnode in (p, q):
        for vnode, sgn in ((q, 1.0), (p, -1.0)):
            rows += [3 * wnode, 3 * wnode + 1]
            cols += [3 * vnode + 1, 3 * vnode]
            vals += [np.full(len(p), 0.5 * sgn), np.full(len(p), -0.5 * sgn)]
    coupling = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(3 * n, 3 * n),
    )
    if theta is not None:
        c = contact_cosine(theta)
        load, coupling = c * load, c * coupling
    return load, coupling


def substrate_area(loop_positions):
    """Signed area enclosed by a contact line; positive when counterclockwise from +z."""
    pts = np.asarray(loop_positions, dtype=np.float64)
    if pts.ndim == 2 and pts.shape[1] == 3 and np.any(pts[:, 2] != 0.0):
        raise BoundaryError("contact line must lie in z = 0")
    return shoelace_area(pts)


def mesh_substrate_area(mesh):
    return sum(substrate_area(mesh.vertices[lp]) for lp in mesh.boundary_loops)


@dataclass(frozen=True)
class OperatorSet:
    """Operators assembled once per mesh and time step."""

    n_vertices: int
    form: TangentialForm
    lumped_mass: np.ndarray
    lumped_normal: np.ndarray
    stiffness: sparse.csr_matrix
    tangential_form: sparse.csr_matrix
    bgn_normal_blocks: sparse.csr_matrix
    rhs_geometry: np.ndarray
    boundary_load: np.ndarray | None = None
    boundary_coupling: sparse.csr_matrix | None = None

    @cached_property
    def B(self):
        return lumped_normal_operator(self.lumped_normal)

    @cached_property
    def stiffness3(self):
        return vectorize(self.stiffness)

    @cached_property
    def n_hat(self):
        return self.lumped_normal / self.lumped_mass[:, None]

    @cached_property
    def bgn_vertex_blocks(self):
        return bgn_vertex_blocks(self.lumped_mass, self.lumped_normal)


def assemble_operators(mesh, form=TangentialForm.FULL_GRADIENT, *, threads=1):
    """Assemble every operator the schemes need on ``mesh``.

    ``threads > 1`` splits the element loops across worker threads; the
    summation order then differs from the sequential (bit-reproducible) mode.
    """
    _check_nondegenerate(mesh)
    form = TangentialForm(form)
    A = stiffness_matrix(mesh, threads)
    G = tangential_form(mesh, form, threads, stiffness=A)
    load = coupling = None
    if not mesh.is_closed:
        load, coupling = boundary_conormal_terms(mesh)
    return OperatorSet(
        n_vertices=mesh.n_vertices,
        form=form,
        lumped_mass=lumped_mass_vector(mesh),
        lumped_normal=lumped_normal_vector(mesh),
        stiffness=A,
        tangential_form=G,
        bgn_normal_blocks=bgn_face_blocks(mesh),
        rhs_geometry=A @ mesh.vertices,
        boundary_load=load,
        boundary_coupling=coupling,
    )

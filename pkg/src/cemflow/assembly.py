"""Bilinear Q1 assembly of all global and per-coarse-element forms.

Conventions: for a matrix Op, ``v @ Op @ w`` is the bilinear form with trial
function w and test function v, i.e. Op[p, q] = form(N_q, N_p). Quadrature is
2x2 Gauss per cell and 2-point Gauss per boundary edge, exact for Q1 products
on axis-aligned rectangles. Dirichlet dofs are never eliminated here; solvers
restrict with masks.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .fields import KappaTilde, MediumField, VelocityField, kappa_tilde
from .grid import BoundaryPartition, GridPair


class AssemblyError(ValueError):
    pass


_G = 1.0 / np.sqrt(3.0)
# reference square [-1,1]^2, nodes counterclockwise from (-1,-1)
_REF_NODES = np.array([(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)])
_GAUSS_2D = np.array([(-_G, -_G), (_G, -_G), (_G, _G), (-_G, _G)])
_GAUSS_1D = np.array([-_G, _G])


def _shape_vals(xi, eta):
    """(npts, 4) Q1 shape values."""
    xi = np.asarray(xi)[:, None]
    eta = np.asarray(eta)[:, None]
    r = _REF_NODES[None, :, :]
    return 0.25 * (1 + r[:, :, 0] * xi) * (1 + r[:, :, 1] * eta)


def _shape_grads(xi, eta):
    """(npts, 4, 2) reference gradients."""
    xi = np.asarray(xi)[:, None]
    eta = np.asarray(eta)[:, None]
    r = _REF_NODES[None, :, :]
    gx = 0.25 * r[:, :, 0] * (1 + r[:, :, 1] * eta)
    gy = 0.25 * r[:, :, 1] * (1 + r[:, :, 0] * xi)
    return np.stack([gx, gy], axis=-1)


@dataclass(frozen=True)
class QuadratureRule:
    cell_points: np.ndarray    # (4, 2) reference coordinates
    cell_weights: np.ndarray   # (4,)
    edge_points: np.ndarray    # (2,) reference coordinates on [-1, 1]
    edge_weights: np.ndarray   # (2,)


DEFAULT_QUADRATURE = QuadratureRule(
    cell_points=_GAUSS_2D,
    cell_weights=np.ones(4),
    edge_points=_GAUSS_1D,
    edge_weights=np.ones(2),
)


def q1_reference_stiffness() -> np.ndarray:
    """Unit-coefficient stiffness of a square cell (independent of h)."""
    return (1.0 / 6.0) * np.array([
        [4.0, -1.0, -2.0, -1.0],
        [-1.0, 4.0, -1.0, -2.0],
        [-2.0, -1.0, 4.0, -1.0],
        [-1.0, -2.0, -1.0, 4.0],
    ])


def q1_reference_mass(hx: float, hy: float) -> np.ndarray:
    return (hx * hy / 36.0) * np.array([
        [4.0, 2.0, 1.0, 2.0],
        [2.0, 4.0, 2.0, 1.0],
        [1.0, 2.0, 4.0, 2.0],
        [2.0, 1.0, 2.0, 4.0],
    ])


class _NeumannEdges:
    """Flattened Γ_N edge data: nodes, gauss points, normals, owning coarse element."""

    def __init__(self, grids: GridPair, bp: BoundaryPartition):
        fine = grids.fine
        cell_owner = grids.coarse.cell_to_element()
        nodes, gpts, normals, lengths, owners = [], [], [], [], []
        for edges, mask in bp.neumann_edges():
            en = edges.nodes[mask]
            mid = edges.midpoints[mask]
            L = edges.length
            tang = 0.5 * L * _GAUSS_1D  # offsets along the edge
            if edges.side in ("bottom", "top"):
                gx = mid[:, 0:1] + tang[None, :]
                gy = np.broadcast_to(mid[:, 1:2], gx.shape)
            else:
                gy = mid[:, 1:2] + tang[None, :]
                gx = np.broadcast_to(mid[:, 0:1], gy.shape)
            nodes.append(en)
            gpts.append(np.stack([gx, gy], axis=-1))
            normals.append(np.broadcast_to(edges.normal, (len(en), 2)).copy())
            lengths.append(np.full(len(en), L))
            owners.append(cell_owner[edges.cells[mask]])
        if nodes:
            self.nodes = np.concatenate(nodes)
            self.gauss = np.concatenate(gpts)       # (nE, 2, 2)
            self.normals = np.concatenate(normals)  # (nE, 2)
            self.lengths = np.concatenate(lengths)
            self.owners = np.concatenate(owners)
        else:
            self.nodes = np.zeros((0, 2), dtype=int)
            self.gauss = np.zeros((0, 2, 2))
            self.normals = np.zeros((0, 2))
            self.lengths = np.zeros(0)
            self.owners = np.zeros(0, dtype=int)
        self.n = len(self.nodes)
        # edge shape values at the 2 gauss points: (2 gauss, 2 nodes)
        self.phi = np.column_stack([(1 - _GAUSS_1D) / 2, (1 + _GAUSS_1D) / 2])


@dataclass
class ElementForms:
    """Local matrices of one coarse element on its closure dofs."""

    element: int
    closure: np.ndarray       # global node ids (sorted)
    A: sp.csr_matrix          # element-restricted 𝒜-form (diffusion+convection+Γ_N)
    a_sym: sp.csr_matrix      # element-restricted a-form (no convection)
    M: sp.csr_matrix          # element mass
    S: sp.csr_matrix          # element s-form (κ̃ mass)

    def apply_global(self, op: sp.csr_matrix, v: np.ndarray) -> np.ndarray:
        """Embed op @ v[closure] as a full fine vector."""
        out = np.zeros(len(v))
        out[self.closure] = op @ v[self.closure]
        return out


class AssembledForms:
    """All global sparse operators plus per-element local assembly access."""

    def __init__(self, grids: GridPair, medium: MediumField, velocity: VelocityField,
                 bp: BoundaryPartition, b_field=None, C: float = 24.0,
                 floor_beta: bool = False):
        self.grids = grids
        self.medium = medium
        self.velocity = velocity
        self.bp = bp
        self.b_field = b_field if b_field is not None else (lambda x, y: np.zeros_like(x))
        self.ktilde: KappaTilde = kappa_tilde(medium, velocity, grids.H, C, floor_beta)
        fine = grids.fine
        if medium.kappa.shape != (fine.ny, fine.nx):
            raise AssemblyError(
                f"medium shape {medium.kappa.shape} does not match grid ({fine.ny},{fine.nx})")
        self.n = fine.n_nodes
        self._edges = _NeumannEdges(grids, bp)
        self._assemble_cells()
        self._assemble_edges()

    # -- cell integrals ------------------------------------------------------

    def _cell_quadrature(self, cells):
        """Gauss point coords (ncell, 4, 2) for the given cells."""
        fine = self.grids.fine
        centers = fine.cell_centers(cells)
        offs = 0.5 * np.array([fine.hx, fine.hy]) * _GAUSS_2D
        return centers[:, None, :] + offs[None, :, :]

    def _cell_blocks(self, cells):
        """(K_e, C_e, M_e, S_e) stacks of 4x4 blocks for the given cells."""
        fine = self.grids.fine
        hx, hy, jac = fine.hx, fine.hy, fine.hx * fine.hy / 4.0
        N = _shape_vals(_GAUSS_2D[:, 0], _GAUSS_2D[:, 1])          # (4g, 4)
        G = _shape_grads(_GAUSS_2D[:, 0], _GAUSS_2D[:, 1])         # (4g, 4, 2)
        Gx, Gy = G[:, :, 0] * (2 / hx), G[:, :, 1] * (2 / hy)
        kap = self.medium.per_cell()[cells]
        K_ref = jac * np.einsum("ga,gb->ab", Gx, Gx) + jac * np.einsum("ga,gb->ab", Gy, Gy)
        M_ref = jac * np.einsum("ga,gb->ab", N, N)
        pts = self._cell_quadrature(cells)
        bx, by = self.velocity(pts[..., 0], pts[..., 1])           # (ncell, 4g)
        # κ̃ = C H^-2 κ(x) max(|β|²,1): κ per cell, β at quadrature points
        kt = self.ktilde.scale * kap[:, None] * self.ktilde.beta_sq(pts[..., 0], pts[..., 1])
        K_e = kap[:, None, None] * K_ref[None]
        C_e = jac * (np.einsum("cg,ga,gb->cab", bx, N, Gx)
                     + np.einsum("cg,ga,gb->cab", by, N, Gy))
        M_e = np.broadcast_to(M_ref, (len(cells), 4, 4))
        S_e = jac * np.einsum("cg,ga,gb->cab", kt, N, N)
        return K_e, C_e, M_e, S_e

    def _assemble_cells(self):
        fine = self.grids.fine
        cells = np.arange(fine.n_cells)
        conn = fine.cell_nodes(cells)
        K_e, C_e, M_e, S_e = self._cell_blocks(cells)
        rows = np.repeat(conn, 4, axis=1).ravel()
        cols = np.tile(conn, (1, 4)).ravel()
        shape = (self.n, self.n)

        def build(blocks):
            # block[c, a, b] couples test node a with trial node b
            m = sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=shape)
            return m.tocsr()

        self.K_diff = build(K_e)
        self.C_conv = build(C_e)
        self.M_mass = build(M_e)
        self.S_form = build(S_e)

    # -- boundary integrals ---------------------------------------------------

    def _edge_blocks(self, weight_vals, sel=None):
        """2x2 mass-type blocks per Γ_N edge with pointwise weights at gauss pts."""
        e = self._edges
        idx = slice(None) if sel is None else sel
        phi = e.phi                                       # (2g, 2)
        jac = 0.5 * e.lengths[idx]
        return jac[:, None, None] * np.einsum("eg,ga,gb->eab", weight_vals, phi, phi)

    def _edge_matrix(self, blocks, nodes):
        rows = np.repeat(nodes, 2, axis=1).ravel()
        cols = np.tile(nodes, (1, 2)).ravel()
        m = sp.coo_matrix((blocks.ravel(), (rows, cols)),
                          shape=(self.n, self.n))
        return m.tocsr()

    def _assemble_edges(self):
        e = self._edges
        if e.n == 0:
            z = sp.csr_matrix((self.n, self.n))
            self.R_full, self.R_half, self.M_bnd = z, z.copy(), z.copy()
            self.robin_violation = 0.0
            return
        bvals = self.b_field(e.gauss[..., 0], e.gauss[..., 1])
        beta = np.stack(self.velocity(e.gauss[..., 0], e.gauss[..., 1]), axis=-1)
        bn = np.einsum("egd,ed->eg", beta, e.normals)
        self.R_full = self._edge_matrix(self._edge_blocks(bvals - bn), e.nodes)
        self.R_half = self._edge_matrix(self._edge_blocks(bvals - 0.5 * bn), e.nodes)
        self.M_bnd = self._edge_matrix(self._edge_blocks(np.ones_like(bn)), e.nodes)
        # inflow-assumption diagnostic: ∫ max(0, β·ν - b) dσ over Γ_N
        viol = np.maximum(bn - bvals, 0.0)
        self.robin_violation = float(np.sum(0.5 * e.lengths[:, None] * viol))

    # -- composite forms -------------------------------------------------------

    @cached_property
    def A_cal(self) -> sp.csr_matrix:
        """Full 𝒜-form: diffusion + Γ_N boundary + convection."""
        return (self.K_diff + self.R_full + self.C_conv).tocsr()

    @cached_property
    def a_form(self) -> sp.csr_matrix:
        """Symmetric a-form: diffusion + Γ_N boundary."""
        return (self.K_diff + self.R_full).tocsr()

    @cached_property
    def quasi(self) -> sp.csr_matrix:
        """Quasi-norm form: diffusion + half-weighted Γ_N boundary."""
        return (self.K_diff + self.R_half).tocsr()

    # -- per-element assembly ---------------------------------------------------

    def element_forms(self, i: int) -> ElementForms:
        coarse = self.grids.coarse
        closure = coarse.element_closure_nodes(i)
        cells = coarse.element_cells(i)
        conn = self.grids.fine.cell_nodes(cells)
        local = np.searchsorted(closure, conn)
        K_e, C_e, M_e, S_e = self._cell_blocks(cells)
        nl = len(closure)
        rows = np.repeat(local, 4, axis=1).ravel()
        cols = np.tile(local, (1, 4)).ravel()

        def build(blocks):
            return sp.coo_matrix(
                (blocks.ravel(), (rows, cols)), shape=(nl, nl)).tocsr()

        K, C, M, S = build(K_e), build(C_e), build(M_e), build(S_e)
        R = sp.csr_matrix((nl, nl))
        e = self._edges
        sel = np.nonzero(e.owners == i)[0]
        if sel.size:
            bvals = self.b_field(e.gauss[sel, :, 0], e.gauss[sel, :, 1])
            beta = np.stack(self.velocity(e.gauss[sel, :, 0], e.gauss[sel, :, 1]), axis=-1)
            bn = np.einsum("egd,ed->eg", beta, e.normals[sel])
            blocks = 0.5 * e.lengths[sel][:, None, None] * np.einsum(
                "eg,ga,gb->eab", bvals - bn, e.phi, e.phi)
            ln = np.searchsorted(closure, e.nodes[sel])
            R = sp.coo_matrix(
                (blocks.ravel(),
                 (np.repeat(ln, 2, axis=1).ravel(), np.tile(ln, (1, 2)).ravel())),
                shape=(nl, nl)).tocsr()
        return ElementForms(i, closure, (K + C + R).tocsr(), (K + R).tocsr(), M, S)

    def element_boundary_load(self, i: int, q, t: float = 0.0) -> np.ndarray:
        """Load vector of ∫_{∂K_i ∩ Γ_N} q v dσ in global numbering."""
        e = self._edges
        out = np.zeros(self.n)
        sel = np.nonzero(e.owners == i)[0]
        if sel.size:
            qv = q(e.gauss[sel, :, 0], e.gauss[sel, :, 1], t)
            vals = 0.5 * e.lengths[sel][:, None] * np.einsum("eg,ga->ea", qv, e.phi)
            np.add.at(out, e.nodes[sel].ravel(), vals.ravel())
        return out


def assemble_forms(grids: GridPair, medium: MediumField, velocity: VelocityField,
                   bp: BoundaryPartition, b_field=None, C: float = 24.0,
                   floor_beta: bool = False) -> AssembledForms:
    return AssembledForms(grids, medium, velocity, bp, b_field, C, floor_beta)


def interpolate(fn, grid, t: float = 0.0) -> np.ndarray:
    """Nodal interpolant of fn(x, y[, t]) on the fine grid."""
    pts = grid.node_coords()
    try:
        vals = np.asarray(fn(pts[:, 0], pts[:, 1], t), dtype=float)
    except TypeError:
        vals = np.asarray(fn(pts[:, 0], pts[:, 1]), dtype=float)
    vals = np.broadcast_to(vals, (grid.n_nodes,)).astype(float)
    if not np.all(np.isfinite(vals)):
        raise AssemblyError("non-finite value in nodal interpolation")
    return vals


def boundary_load(q, bp: BoundaryPartition, grids: GridPair, t: float = 0.0) -> np.ndarray:
    """Global load (q, v)_{Γ_N} with edge-wise 2-point Gauss."""
    edges = _NeumannEdges(grids, bp)
    out = np.zeros(grids.fine.n_nodes)
    if edges.n:
        qv = q(edges.gauss[..., 0], edges.gauss[..., 1], t)
        vals = 0.5 * edges.lengths[:, None] * np.einsum("eg,ga->ea", qv, edges.phi)
        np.add.at(out, edges.nodes.ravel(), vals.ravel())
    return out


def restrict(op: sp.spmatrix, dofs: np.ndarray) -> sp.csr_matrix:
    """Principal submatrix of op on the given dofs, in local ordering."""
    dofs = np.asarray(dofs)
    if dofs.size and (dofs.min() < 0 or dofs.max() >= op.shape[0]):
        raise AssemblyError("dof index out of range")
    return op.tocsr()[dofs][:, dofs]

"""Structured fine/coarse rectangular meshes, dof maps, oversampling, boundary tags.

Fine nodes are numbered row-major: node (ix, iy) -> iy*(nx+1) + ix. Fine cells
row-major as well: cell (cx, cy) -> cy*nx + cx. Coarse elements row-major:
element (ex, ey) -> ey*Nx + ex. All orderings are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIRICHLET = "dirichlet"
NEUMANN = "neumann_robin"

SIDES = ("left", "right", "bottom", "top")

_SIDE_NORMALS = {
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "bottom": (0.0, -1.0),
    "top": (0.0, 1.0),
}


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class DomainSpec:
    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise GridError("domain bounds must satisfy x_min < x_max, y_min < y_max")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


@dataclass(frozen=True)
class BoundaryEdges:
    """Boundary edges of one side, in increasing order along the side.

    nodes[k] = (n0, n1) are endpoint node ids of edge k; midpoints/lengths are
    used for data evaluation and interval matching.
    """

    side: str
    nodes: np.ndarray          # (n_edges, 2) int
    midpoints: np.ndarray      # (n_edges, 2) float
    length: float              # uniform edge length along this side
    normal: np.ndarray         # (2,) outward unit normal
    cells: np.ndarray          # (n_edges,) adjacent fine cell id


class FineGrid:
    """Uniform tensor grid of nx*ny bilinear (Q1) cells on a rectangle."""

    def __init__(self, domain: DomainSpec, nx: int, ny: int):
        if nx < 1 or ny < 1:
            raise GridError("cell counts must be >= 1")
        self.domain = domain
        self.nx = int(nx)
        self.ny = int(ny)
        self.hx = domain.width / nx
        self.hy = domain.height / ny
        self.x = np.linspace(domain.x_min, domain.x_max, nx + 1)
        self.y = np.linspace(domain.y_min, domain.y_max, ny + 1)
        self.n_nodes = (nx + 1) * (ny + 1)
        self.n_cells = nx * ny

    def node_id(self, ix, iy):
        return np.asarray(iy) * (self.nx + 1) + np.asarray(ix)

    def node_coords(self) -> np.ndarray:
        """(n_nodes, 2) coordinates, row-major."""
        X, Y = np.meshgrid(self.x, self.y)
        return np.column_stack([X.ravel(), Y.ravel()])

    def cell_nodes(self, cells=None) -> np.ndarray:
        """(n_cells, 4) node ids per cell, counterclockwise from bottom-left."""
        if cells is None:
            cells = np.arange(self.n_cells)
        cells = np.asarray(cells)
        cx = cells % self.nx
        cy = cells // self.nx
        bl = cy * (self.nx + 1) + cx
        return np.column_stack([bl, bl + 1, bl + self.nx + 2, bl + self.nx + 1])

    def cell_centers(self, cells=None) -> np.ndarray:
        if cells is None:
            cells = np.arange(self.n_cells)
        cells = np.asarray(cells)
        cx = cells % self.nx
        cy = cells // self.nx
        return np.column_stack(
            [self.domain.x_min + (cx + 0.5) * self.hx,
             self.domain.y_min + (cy + 0.5) * self.hy]
        )

    def side_edges(self, side: str) -> BoundaryEdges:
        nx, ny = self.nx, self.ny
        if side == "left":
            iy = np.arange(ny)
            nodes = np.column_stack([self.node_id(0, iy), self.node_id(0, iy + 1)])
            mid = np.column_stack([np.full(ny, self.x[0]), 0.5 * (self.y[iy] + self.y[iy + 1])])
            length, cells = self.hy, iy * nx
        elif side == "right":
            iy = np.arange(ny)
            nodes = np.column_stack([self.node_id(nx, iy), self.node_id(nx, iy + 1)])
            mid = np.column_stack([np.full(ny, self.x[-1]), 0.5 * (self.y[iy] + self.y[iy + 1])])
            length, cells = self.hy, iy * nx + nx - 1
        elif side == "bottom":
            ix = np.arange(nx)
            nodes = np.column_stack([self.node_id(ix, 0), self.node_id(ix + 1, 0)])
            mid = np.column_stack([0.5 * (self.x[ix] + self.x[ix + 1]), np.full(nx, self.y[0])])
            length, cells = self.hx, ix
        elif side == "top":
            ix = np.arange(nx)
            nodes = np.column_stack([self.node_id(ix, ny), self.node_id(ix + 1, ny)])
            mid = np.column_stack([0.5 * (self.x[ix] + self.x[ix + 1]), np.full(nx, self.y[-1])])
            length, cells = self.hx, (ny - 1) * nx + ix
        else:
            raise GridError(f"unknown side {side!r}")
        return BoundaryEdges(side, nodes, mid, length, np.array(_SIDE_NORMALS[side]), cells)


class CoarseGrid:
    """Conforming coarse partition; each coarse element is a block of fine cells."""

    def __init__(self, fine: FineGrid, Nx: int, Ny: int):
        if Nx < 1 or Ny < 1:
            raise GridError("coarse counts must be >= 1")
        if fine.nx % Nx or fine.ny % Ny:
            raise GridError(
                f"fine cells ({fine.nx}x{fine.ny}) not divisible by coarse elements ({Nx}x{Ny})"
            )
        self.fine = fine
        self.Nx = int(Nx)
        self.Ny = int(Ny)
        self.ncx = fine.nx // Nx   # fine cells per coarse element, x
        self.ncy = fine.ny // Ny
        self.H = max(fine.hx * self.ncx, fine.hy * self.ncy)
        self.n_elements = Nx * Ny

    def element_xy(self, i: int) -> tuple[int, int]:
        return i % self.Nx, i // self.Nx

    def element_cells(self, i: int) -> np.ndarray:
        """Fine cell ids of coarse element i."""
        ex, ey = self.element_xy(i)
        cx = np.arange(ex * self.ncx, (ex + 1) * self.ncx)
        cy = np.arange(ey * self.ncy, (ey + 1) * self.ncy)
        return (cy[:, None] * self.fine.nx + cx[None, :]).ravel()

    def element_closure_nodes(self, i: int) -> np.ndarray:
        """Fine node ids in the closure of coarse element i, sorted."""
        ex, ey = self.element_xy(i)
        ix = np.arange(ex * self.ncx, (ex + 1) * self.ncx + 1)
        iy = np.arange(ey * self.ncy, (ey + 1) * self.ncy + 1)
        return (iy[:, None] * (self.fine.nx + 1) + ix[None, :]).ravel()

    def cell_to_element(self) -> np.ndarray:
        """(n_cells,) coarse element id of every fine cell."""
        cx = np.arange(self.fine.n_cells) % self.fine.nx
        cy = np.arange(self.fine.n_cells) // self.fine.nx
        return (cy // self.ncy) * self.Nx + (cx // self.ncx)


@dataclass(frozen=True)
class GridPair:
    fine: FineGrid
    coarse: CoarseGrid

    @property
    def H(self) -> float:
        return self.coarse.H


def build_grids(domain: DomainSpec, nx: int, ny: int, Nx: int, Ny: int) -> GridPair:
    fine = FineGrid(domain, nx, ny)
    return GridPair(fine, CoarseGrid(fine, Nx, Ny))


@dataclass(frozen=True)
class OversampleRegion:
    """Coarse-element window K^m_i, clipped to the domain."""

    element: int
    m: int
    ex0: int
    ex1: int   # inclusive coarse index ranges
    ey0: int
    ey1: int
    coarse: CoarseGrid = field(repr=False)

    @property
    def elements(self) -> np.ndarray:
        ex = np.arange(self.ex0, self.ex1 + 1)
        ey = np.arange(self.ey0, self.ey1 + 1)
        return (ey[:, None] * self.coarse.Nx + ex[None, :]).ravel()

    @property
    def saturated(self) -> bool:
        return (self.ex0 == 0 and self.ey0 == 0
                and self.ex1 == self.coarse.Nx - 1 and self.ey1 == self.coarse.Ny - 1)

    def node_window(self) -> tuple[np.ndarray, np.ndarray]:
        """(ix range, iy range) of fine node indices in the closure of the window."""
        c = self.coarse
        ix = np.arange(self.ex0 * c.ncx, (self.ex1 + 1) * c.ncx + 1)
        iy = np.arange(self.ey0 * c.ncy, (self.ey1 + 1) * c.ncy + 1)
        return ix, iy

    def closure_nodes(self) -> np.ndarray:
        ix, iy = self.node_window()
        return (iy[:, None] * (self.coarse.fine.nx + 1) + ix[None, :]).ravel()


def oversample_region(coarse: CoarseGrid, i: int, m: int) -> OversampleRegion:
    if not (0 <= i < coarse.n_elements):
        raise GridError(f"element index {i} out of range")
    if m < 0:
        raise GridError("layer count m must be >= 0")
    ex, ey = coarse.element_xy(i)
    return OversampleRegion(
        element=i, m=m,
        ex0=max(ex - m, 0), ex1=min(ex + m, coarse.Nx - 1),
        ey0=max(ey - m, 0), ey1=min(ey + m, coarse.Ny - 1),
        coarse=coarse,
    )


class BoundaryPartition:
    """Tag per fine boundary edge (Dirichlet vs Neumann/Robin) with outward normals."""

    def __init__(self, fine: FineGrid, edge_tags: dict[str, np.ndarray]):
        self.fine = fine
        self.edge_tags = edge_tags   # side -> (n_edges,) array of DIRICHLET/NEUMANN
        nset: set[int] = set()
        dset: set[int] = set()
        self._neumann = {}
        for side in SIDES:
            edges = fine.side_edges(side)
            tags = edge_tags[side]
            keep = tags == NEUMANN
            self._neumann[side] = keep
            nset.update(edges.nodes[keep].ravel().tolist())
            dset.update(edges.nodes[~keep].ravel().tolist())
        # a node touching any Dirichlet edge is constrained
        self.dirichlet_nodes = np.array(sorted(dset), dtype=int)
        self.neumann_nodes = np.array(sorted(nset - dset), dtype=int)

    @property
    def has_neumann(self) -> bool:
        return any(tags.any() for tags in self._neumann.values())

    @property
    def has_dirichlet(self) -> bool:
        return self.dirichlet_nodes.size > 0

    def neumann_edges(self):
        """Yield (BoundaryEdges, mask) per side; mask selects Γ_N edges."""
        for side in SIDES:
            mask = self._neumann[side]
            if mask.any():
                yield self.fine.side_edges(side), mask

    def free_dofs(self) -> np.ndarray:
        """Global free dofs of V (all nodes minus Γ_D nodes)."""
        free = np.ones(self.fine.n_nodes, dtype=bool)
        free[self.dirichlet_nodes] = False
        return np.nonzero(free)[0]


def classify_boundary(fine: FineGrid, spec: dict) -> BoundaryPartition:
    """Tag boundary edges per side.

    ``spec[side]`` is either a tag string or a list of ``(lo, hi, tag)`` intervals
    in boundary coordinate (x along bottom/top, y along left/right). Intervals
    must align with fine edges, cover the side exactly once, and not overlap.
    """
    tol = 1e-12 * max(fine.domain.width, fine.domain.height)
    edge_tags = {}
    for side in SIDES:
        edges = fine.side_edges(side)
        n = len(edges.nodes)
        coord = edges.midpoints[:, 0] if side in ("bottom", "top") else edges.midpoints[:, 1]
        entry = spec.get(side, DIRICHLET)
        if isinstance(entry, str):
            tag = _check_tag(entry)
            edge_tags[side] = np.full(n, tag, dtype=object)
            continue
        tags = np.full(n, "", dtype=object)
        grid_pts = fine.x if side in ("bottom", "top") else fine.y
        for lo, hi, tag in entry:
            tag = _check_tag(tag)
            if not (_on_grid(lo, grid_pts, tol) and _on_grid(hi, grid_pts, tol)):
                raise GridError(f"interval [{lo},{hi}] on side {side!r} not aligned to fine edges")
            sel = (coord > lo) & (coord < hi)
            if (tags[sel] != "").any():
                raise GridError(f"overlapping intervals on side {side!r}")
            tags[sel] = tag
        if (tags == "").any():
            raise GridError(f"side {side!r} not fully covered by intervals")
        edge_tags[side] = tags
    return BoundaryPartition(fine, edge_tags)


def _check_tag(tag: str) -> str:
    if tag not in (DIRICHLET, NEUMANN):
        raise GridError(f"unknown boundary tag {tag!r}")
    return tag


def _on_grid(v, pts, tol):
    return bool(np.any(np.abs(pts - v) <= tol))


def local_dof_mask(region: OversampleRegion, bp: BoundaryPartition) -> np.ndarray:
    """Free dofs realizing V^m_i: closure nodes of K^m_i minus ∂K^m_i∩Ω minus Γ_D.

    Nodes on ∂K^m_i that lie on Γ_N stay free; nodes touching a Dirichlet edge
    are always constrained.
    """
    fine = region.coarse.fine
    ix, iy = region.node_window()
    IX, IY = np.meshgrid(ix, iy)
    free = np.ones(IX.shape, dtype=bool)
    # window sides interior to Ω are constrained; sides on ∂Ω stay (Γ_D handled below)
    if ix[0] != 0:
        free[:, 0] = False
    if ix[-1] != fine.nx:
        free[:, -1] = False
    if iy[0] != 0:
        free[0, :] = False
    if iy[-1] != fine.ny:
        free[-1, :] = False
    nodes = (IY * (fine.nx + 1) + IX)[free]
    if bp.dirichlet_nodes.size:
        nodes = nodes[~np.isin(nodes, bp.dirichlet_nodes)]
    return np.sort(nodes)

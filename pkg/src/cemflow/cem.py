"""Relaxed-CEM multiscale basis and Dirichlet/Neumann boundary correctors.

Every local problem has the form (base + QᵀQ)|mask x = rhs|mask, where base is
the 𝒜-form (or a-form, or M/τ + either) and QᵀQ is the s(π·,π·) penalty. The
penalty blocks are dense per coarse element, so the system is solved through
the sparse bordered factorization

    [[base_mm, Qmᵀ], [-Qm, I]] [x; y] = [b; 0]  =>  y = Qm x,
    base_mm x + Qmᵀ y = b      =>  (base_mm + QmᵀQm) x = b,

one LU per patch, reused across all right sides and time steps of that patch.
m=None realizes the global (m = infinity) problems on all free dofs of V.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._lu import FactorizationError, GuardedLU
from .assembly import AssembledForms
from .cache import cache_load, cache_store
from .grid import BoundaryPartition, local_dof_mask, oversample_region
from .spectral import AuxSpace


class LocalSolveError(RuntimeError):
    pass


def element_mask(forms: AssembledForms, bp: BoundaryPartition, i: int,
                 m: int | None) -> np.ndarray:
    """Free dofs of V^m_i (or of V when m is None)."""
    if m is None:
        return bp.free_dofs()
    region = oversample_region(forms.grids.coarse, i, m)
    return local_dof_mask(region, bp)


class PatchFactor:
    """Bordered LU of (base + QᵀQ) restricted to a dof mask."""

    def __init__(self, base: sp.spmatrix, aux: AuxSpace, mask: np.ndarray,
                 element: int | None = None):
        self.mask = mask
        self.n_mask = len(mask)
        base_mm = base.tocsr()[mask][:, mask]
        Qm = aux.Q.tocsc()[:, mask].tocsr()
        keep = np.nonzero(np.diff(Qm.indptr))[0]
        Qk = Qm[keep]
        k = len(keep)
        ident = sp.identity(k, format="csr")
        system = sp.bmat([[base_mm, Qk.T], [-Qk, ident]], format="csc")
        try:
            self.lu = GuardedLU(system, label=f"element {element}")
        except FactorizationError as exc:
            raise LocalSolveError(f"singular local system (element {element}): {exc}") from exc
        self.k = k
        self._n_global = base.shape[0]

    def solve_local(self, rhs_local: np.ndarray) -> np.ndarray:
        if rhs_local.ndim == 1:
            b = np.concatenate([rhs_local, np.zeros(self.k)])
            return self.lu.solve(b)[: self.n_mask]
        b = np.vstack([rhs_local, np.zeros((self.k, rhs_local.shape[1]))])
        return self.lu.solve(b)[: self.n_mask]

    def solve(self, rhs_global: np.ndarray) -> np.ndarray:
        out = np.zeros(self._n_global)
        out[self.mask] = self.solve_local(rhs_global[self.mask])
        return out


@dataclass
class MultiscaleSpace:
    """Basis matrix P of V^m_ms; column (i, j) = ψ^{j,m}_i in global numbering."""

    P: sp.csc_matrix
    m: int | None
    l_m: int

    @property
    def n_columns(self) -> int:
        return self.P.shape[1]

    def column(self, i: int, j: int) -> np.ndarray:
        return self.P[:, i * self.l_m + j].toarray().ravel()


@dataclass
class CorrectorSet:
    """Assembled boundary correctors on the fine grid."""

    D: np.ndarray
    N: np.ndarray
    D_locals: dict[int, np.ndarray] = field(default_factory=dict, repr=False)
    N_locals: dict[int, np.ndarray] = field(default_factory=dict, repr=False)


def _neumann_elements(forms: AssembledForms) -> set[int]:
    return set(np.unique(forms._edges.owners).tolist())


def build_ms_basis(forms: AssembledForms, aux: AuxSpace, bp: BoundaryPartition,
                   m: int | None, cache_key: str | None = None) -> MultiscaleSpace:
    """Solve 𝒜(ψ,v) + s(πψ,πv) = s(φ_i^j, πv) on V^m_i for every (i, j)."""
    n = forms.grids.fine.n_nodes
    l_m = aux.l_m
    tag = None if cache_key is None else f"{cache_key}-m{m}"
    cached = cache_load("basis", tag)
    if cached is not None:
        P = sp.csc_matrix((cached["data"], cached["indices"], cached["indptr"]),
                          shape=tuple(cached["shape"]))
        return MultiscaleSpace(P, m, l_m)
    cols = []
    QT = aux.Q.T.tocsc()
    shared = None   # m=None: every element solves on the same global mask
    for i in range(forms.grids.coarse.n_elements):
        if m is None and shared is not None:
            mask, factor = shared
        else:
            mask = element_mask(forms, bp, i, m)
            factor = PatchFactor(forms.A_cal, aux, mask, element=i)
            if m is None:
                shared = (mask, factor)
        rhs = QT[:, i * l_m:(i + 1) * l_m].toarray()[mask, :]
        sol = factor.solve_local(rhs)
        for j in range(l_m):
            v = sp.csc_matrix((sol[:, j], (mask, np.zeros(len(mask), dtype=int))),
                              shape=(n, 1))
            cols.append(v)
    P = sp.hstack(cols, format="csc")
    if tag is not None:
        cache_store("basis", tag, data=P.data, indices=P.indices, indptr=P.indptr,
                    shape=np.array(P.shape))
    return MultiscaleSpace(P, m, l_m)


def dirichlet_corrector(forms: AssembledForms, aux: AuxSpace, bp: BoundaryPartition,
                        m: int | None, g_vec: np.ndarray,
                        keep_locals: bool = False):
    """𝒟ᵐ g̃ = Σ_i 𝒟ᵐ_i g̃ with 𝒜(𝒟_i g̃,v) + s(π𝒟_i g̃,πv) = 𝒜_{(K_i)}(g̃,v)."""
    n = forms.grids.fine.n_nodes
    out = np.zeros(n)
    locals_ = {}
    shared = None
    for i in range(forms.grids.coarse.n_elements):
        if m is None and shared is not None:
            mask, factor = shared
        else:
            mask = element_mask(forms, bp, i, m)
            factor = PatchFactor(forms.A_cal, aux, mask, element=i)
            if m is None:
                shared = (mask, factor)
        ef = forms.element_forms(i)
        rhs = ef.apply_global(ef.A, g_vec)
        sol = factor.solve_local(rhs[mask])
        out[mask] += sol
        if keep_locals:
            locals_[i] = sol
    return (out, locals_) if keep_locals else out


def neumann_corrector(forms: AssembledForms, aux: AuxSpace, bp: BoundaryPartition,
                      m: int | None, q, t: float = 0.0,
                      keep_locals: bool = False):
    """𝒩ᵐ q = Σ_i 𝒩ᵐ_i q; only elements touching Γ_N contribute."""
    if not bp.has_neumann:
        raise LocalSolveError("Neumann corrector requested but Γ_N is empty")
    n = forms.grids.fine.n_nodes
    out = np.zeros(n)
    locals_ = {}
    shared = None
    for i in sorted(_neumann_elements(forms)):
        if m is None and shared is not None:
            mask, factor = shared
        else:
            mask = element_mask(forms, bp, i, m)
            factor = PatchFactor(forms.A_cal, aux, mask, element=i)
            if m is None:
                shared = (mask, factor)
        rhs = forms.element_boundary_load(i, q, t)
        sol = factor.solve_local(rhs[mask])
        out[mask] += sol
        if keep_locals:
            locals_[i] = sol
    return (out, locals_) if keep_locals else out


# ---------------------------------------------------------------------------
# transient correctors


@dataclass
class ElementCorrectorStepper:
    """Backward Euler update machinery of one element's corrector.

    CD scheme: (1/τ)(Dⁿ⁺¹−Dⁿ, v) + 𝒜(Dⁿ⁺¹,v) + s(πDⁿ⁺¹,πv) = rhs(t_{n+1});
    D-approach replaces 𝒜 by the symmetric a-form in the update (the init is
    the shared 𝒜-based static solve).
    """

    forms: AssembledForms
    aux: AuxSpace
    bp: BoundaryPartition
    element: int
    m: int | None
    scheme: str
    tau: float
    step_base: sp.spmatrix | None = None   # precomputed M/τ + (𝒜 or a)

    def __post_init__(self):
        if self.scheme not in ("CD", "Dapp"):
            raise LocalSolveError(f"unknown scheme {self.scheme!r}")
        if self.tau <= 0:
            raise LocalSolveError("tau must be positive")
        self.mask = element_mask(self.forms, self.bp, self.element, self.m)
        self.ef = self.forms.element_forms(self.element)
        M = self.forms.M_mass
        if self.step_base is None:
            base = self.forms.A_cal if self.scheme == "CD" else self.forms.a_form
            self.step_base = (M / self.tau + base).tocsr()
        self._M_mm = M.tocsr()[self.mask][:, self.mask]
        self._init_factor = PatchFactor(self.forms.A_cal, self.aux, self.mask, self.element)
        self._step_factor = PatchFactor(self.step_base, self.aux, self.mask, self.element)

    def dirichlet_rhs(self, g_vec: np.ndarray, dg_vec: np.ndarray | None) -> np.ndarray:
        op = self.ef.A if self.scheme == "CD" else self.ef.a_sym
        rhs = self.ef.apply_global(op, g_vec)
        if dg_vec is not None:
            rhs += self.ef.apply_global(self.ef.M, dg_vec)
        return rhs[self.mask]

    def neumann_rhs(self, q, t: float) -> np.ndarray:
        return self.forms.element_boundary_load(self.element, q, t)[self.mask]

    def init(self, rhs_static_local: np.ndarray) -> np.ndarray:
        """ℬ(D(·,0), v) = static right side at t=0 (no mass term)."""
        return self._init_factor.solve_local(rhs_static_local)

    def step(self, prev_local: np.ndarray, rhs_local: np.ndarray) -> np.ndarray:
        return self._step_factor.solve_local(self._M_mm @ prev_local / self.tau + rhs_local)


def transient_corrector_init(forms, aux, bp, i, m, kind: str, data, t0: float = 0.0,
                             scheme: str = "CD", tau: float = 1.0) -> np.ndarray:
    """Static-type local solve at t=t0 for one element; returns local values."""
    stepper = ElementCorrectorStepper(forms, aux, bp, i, m, scheme, tau)
    rhs = _static_rhs(stepper, kind, data, t0, init=True)
    return stepper.init(rhs)


def transient_corrector_step(stepper: ElementCorrectorStepper, kind: str, prev_local,
                             t_next: float, data) -> np.ndarray:
    rhs = _static_rhs(stepper, kind, data, t_next, init=False)
    return stepper.step(prev_local, rhs)


def _static_rhs(stepper, kind, data, t, init):
    from .assembly import interpolate
    grid = stepper.forms.grids.fine
    if kind == "D":
        g_vec = interpolate(data.g, grid, t)
        dg = None
        if not init:
            dg = interpolate(data.dg_dt, grid, t) if data.dg_dt is not None else None
        if init:
            # init uses the 𝒜-based element form regardless of scheme
            ef = stepper.ef
            return ef.apply_global(ef.A, g_vec)[stepper.mask]
        return stepper.dirichlet_rhs(g_vec, dg)
    if kind == "N":
        return stepper.neumann_rhs(data.q, t)
    raise LocalSolveError(f"unknown corrector kind {kind!r}")


def corrector_series(forms, aux, bp, m, scheme, tau, n_steps, data,
                     kinds=("D",), t0: float = 0.0,
                     backward_difference_dg: bool = False) -> dict[str, np.ndarray]:
    """Per-element transient corrector trajectories, summed to global vectors.

    Returns {kind: (n_steps+1, n_fine)}. Elements are processed sequentially:
    the two patch factorizations live only while that element is stepped
    through all time levels. When the analytic ∂t g is unavailable,
    backward_difference_dg=True uses (g̃ⁿ⁺¹ − g̃ⁿ)/τ.
    """
    from .assembly import interpolate
    n = forms.grids.fine.n_nodes
    grid = forms.grids.fine
    out = {k: np.zeros((n_steps + 1, n)) for k in kinds}
    neumann_owner = _neumann_elements(forms) if "N" in kinds else set()
    times = t0 + tau * np.arange(n_steps + 1)
    g_vecs = dg_vecs = None
    if "D" in kinds:
        g_vecs = [interpolate(data.g, grid, t) for t in times]
        if backward_difference_dg or data.dg_dt is None:
            dg_vecs = [None] + [(g_vecs[k + 1] - g_vecs[k]) / tau for k in range(n_steps)]
        else:
            dg_vecs = [interpolate(data.dg_dt, grid, t) for t in times]
    base = forms.A_cal if scheme == "CD" else forms.a_form
    step_base = (forms.M_mass / tau + base).tocsr()
    for i in range(forms.grids.coarse.n_elements):
        wanted = [k for k in kinds if k == "D" or i in neumann_owner]
        if not wanted:
            continue
        stepper = ElementCorrectorStepper(forms, aux, bp, i, m, scheme, tau,
                                          step_base=step_base)
        ef = stepper.ef
        for kind in wanted:
            if kind == "D":
                cur = stepper.init(ef.apply_global(ef.A, g_vecs[0])[stepper.mask])
            else:
                cur = stepper.init(stepper.neumann_rhs(data.q, times[0]))
            out[kind][0][stepper.mask] += cur
            for k in range(1, n_steps + 1):
                if kind == "D":
                    rhs = stepper.dirichlet_rhs(g_vecs[k], dg_vecs[k])
                else:
                    rhs = stepper.neumann_rhs(data.q, times[k])
                cur = stepper.step(cur, rhs)
                out[kind][k][stepper.mask] += cur
    return out


def static_correctors(forms, aux, bp, m, g_vec=None, q=None, t: float = 0.0,
                      keep_locals: bool = False, scheme: str = "CD") -> CorrectorSet:
    """𝒟ᵐg̃ and 𝒩ᵐq in one patch sweep (one factorization per element).

    The CD scheme's static corrector solves with the 𝒜-form; the D-approach's
    with the a-form (each is the exact fixed point of its own transient update
    for time-invariant data, so "pre-computed once" correctors stay exact).
    """
    n = forms.grids.fine.n_nodes
    D = np.zeros(n)
    N = np.zeros(n)
    D_locals, N_locals = {}, {}
    base = forms.A_cal if scheme == "CD" else forms.a_form
    neumann_owner = _neumann_elements(forms) if q is not None else set()
    shared = None
    for i in range(forms.grids.coarse.n_elements):
        need_D = g_vec is not None
        need_N = i in neumann_owner
        if not (need_D or need_N):
            continue
        if m is None and shared is not None:
            mask, factor = shared
        else:
            mask = element_mask(forms, bp, i, m)
            factor = PatchFactor(base, aux, mask, element=i)
            if m is None:
                shared = (mask, factor)
        if need_D:
            ef = forms.element_forms(i)
            op = ef.A if scheme == "CD" else ef.a_sym
            loc = factor.solve_local(ef.apply_global(op, g_vec)[mask])
            D[mask] += loc
            if keep_locals:
                D_locals[i] = loc
        if need_N:
            loc = factor.solve_local(forms.element_boundary_load(i, q, t)[mask])
            N[mask] += loc
            if keep_locals:
                N_locals[i] = loc
    return CorrectorSet(D, N, D_locals, N_locals)


def build_static_components(forms, aux, bp, m, g_vec=None, q=None, t: float = 0.0,
                            cache_key: str | None = None,
                            keep_locals: bool = False):
    """Basis + static correctors in one patch sweep (shared factorizations)."""
    n = forms.grids.fine.n_nodes
    l_m = aux.l_m
    tag = None if cache_key is None else f"{cache_key}-m{m}"
    cached = cache_load("basis", tag)
    QT = aux.Q.T.tocsc()
    cols = [] if cached is None else None
    D = np.zeros(n)
    N = np.zeros(n)
    D_locals, N_locals = {}, {}
    neumann_owner = _neumann_elements(forms) if q is not None else set()
    shared = None
    for i in range(forms.grids.coarse.n_elements):
        need_basis = cached is None
        need_D = g_vec is not None
        need_N = i in neumann_owner
        if not (need_basis or need_D or need_N):
            continue
        if m is None and shared is not None:
            mask, factor = shared
        else:
            mask = element_mask(forms, bp, i, m)
            factor = PatchFactor(forms.A_cal, aux, mask, element=i)
            if m is None:
                shared = (mask, factor)
        if need_basis:
            rhs = QT[:, i * l_m:(i + 1) * l_m].toarray()[mask, :]
            sol = factor.solve_local(rhs)
            for j in range(l_m):
                cols.append(sp.csc_matrix(
                    (sol[:, j], (mask, np.zeros(len(mask), dtype=int))), shape=(n, 1)))
        if need_D:
            ef = forms.element_forms(i)
            loc = factor.solve_local(ef.apply_global(ef.A, g_vec)[mask])
            D[mask] += loc
            if keep_locals:
                D_locals[i] = loc
        if need_N:
            loc = factor.solve_local(forms.element_boundary_load(i, q, t)[mask])
            N[mask] += loc
            if keep_locals:
                N_locals[i] = loc
    if cached is not None:
        P = sp.csc_matrix((cached["data"], cached["indices"], cached["indptr"]),
                          shape=tuple(cached["shape"]))
    else:
        P = sp.hstack(cols, format="csc")
        if tag is not None:
            cache_store("basis", tag, data=P.data, indices=P.indices, indptr=P.indptr,
                        shape=np.array(P.shape))
    space = MultiscaleSpace(P, m, l_m)
    return space, CorrectorSet(D, N, D_locals, N_locals)

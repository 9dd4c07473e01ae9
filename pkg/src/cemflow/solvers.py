"""Steady and transient multiscale solves, Strang splitting, fine references.

The multiscale unknown w lives in V^m_ms (columns of P); reduced systems
PᵀOpP are factorized sparsely once per run. Solutions are assembled as
u_ms = P c − 𝒟ᵐg̃ + 𝒩ᵐq + g̃ at each time level.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._lu import FactorizationError, GuardedLU
from .assembly import AssembledForms, boundary_load, interpolate
from .cem import (CorrectorSet, MultiscaleSpace, corrector_series,
                  static_correctors)
from .fields import BoundaryData, TransientData
from .grid import BoundaryPartition, GridPair
from .spectral import AuxSpace, lambda_stats


class SolverError(RuntimeError):
    pass


@dataclass
class Discretization:
    """One assembled multiscale discretization (grids through basis)."""

    grids: GridPair
    bp: BoundaryPartition
    forms: AssembledForms
    aux: AuxSpace
    ms: MultiscaleSpace
    m: int | None

    @property
    def P(self) -> sp.csc_matrix:
        return self.ms.P


@dataclass
class SchemeConfig:
    tau: float
    T: float
    scheme: str = "CD"
    ode_substeps: int = 10

    def __post_init__(self):
        if self.tau <= 0:
            raise SolverError("tau must be positive")
        steps = self.T / self.tau
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise SolverError(f"T={self.T} is not an integer multiple of tau={self.tau}")
        if self.scheme not in ("CD", "Dapp"):
            raise SolverError(f"unknown scheme {self.scheme!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))


@dataclass
class SteadySolution:
    coeffs: np.ndarray
    u_ms: np.ndarray
    correctors: CorrectorSet
    diagnostics: dict = field(default_factory=dict)


@dataclass
class TransientResult:
    times: np.ndarray
    u_ms: np.ndarray            # (n_steps+1, n) assembled solutions
    w: np.ndarray               # (n_steps+1, n) P c trajectory
    scheme: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.u_ms[-1]


def _reduced(P: sp.csc_matrix, op: sp.spmatrix) -> sp.csc_matrix:
    return (P.T @ (op @ P)).tocsc()


def _factor(mat: sp.csc_matrix):
    try:
        return GuardedLU(mat, label="reduced system")
    except FactorizationError as exc:
        raise SolverError(f"singular reduced system: {exc}") from exc


def _solve_reduced(mat: sp.csc_matrix, rhs: np.ndarray) -> np.ndarray:
    """Direct solve with a least-squares fallback for rank-deficient bases.

    With l_m at the full local dimension the ψ columns become linearly
    dependent; the Galerkin system is then singular but consistent, and any
    least-squares solution yields the same P c.
    """
    try:
        c = _factor(mat).solve(rhs)
        res = np.linalg.norm(rhs - mat @ c)
        if res <= 1e-8 * (np.linalg.norm(rhs) + 1e-300):
            return c
    except SolverError:
        pass
    c, *_ = np.linalg.lstsq(mat.toarray(), rhs, rcond=None)
    return c


# ---------------------------------------------------------------------------
# steady


def steady_solve(disc: Discretization, correctors: CorrectorSet, bd: BoundaryData,
                 f=None, t: float = 0.0) -> SteadySolution:
    """𝒜(w,v) = (f,v) − 𝒜(g̃,v) + (q,v)_{Γ_N} + 𝒜(𝒟g̃,v) − 𝒜(𝒩q,v) on V^m_ms."""
    forms, P = disc.forms, disc.P
    t0 = time.perf_counter()
    g_vec = interpolate(bd.g, disc.grids.fine, t)
    rhs = forms.A_cal @ (correctors.D - g_vec - correctors.N)
    if f is not None:
        rhs += forms.M_mass @ interpolate(f, disc.grids.fine, t)
    if disc.bp.has_neumann:
        rhs += boundary_load(bd.q, disc.bp, disc.grids, t)
    c = _solve_reduced(_reduced(P, forms.A_cal), P.T @ rhs)
    u_ms = P @ c - correctors.D + correctors.N + g_vec
    lam, lamp = lambda_stats(disc.aux)
    return SteadySolution(c, u_ms, correctors,
                          {"Lambda": lam, "LambdaPrime": lamp,
                           "solve_s": time.perf_counter() - t0})


# ---------------------------------------------------------------------------
# transient


def transient_init(disc: Discretization, correctors0: CorrectorSet, td: TransientData,
                   g0_vec: np.ndarray) -> np.ndarray:
    """L²-project u_init − g̃(0) + 𝒟g̃(0) − 𝒩q(0) onto V^m_ms."""
    forms, P = disc.forms, disc.P
    target = interpolate(td.u_init, disc.grids.fine) - g0_vec + correctors0.D - correctors0.N
    return _solve_reduced(_reduced(P, forms.M_mass), P.T @ (forms.M_mass @ target))


def prepare_correctors(disc: Discretization, config: SchemeConfig, bd: BoundaryData,
                       time_dependent_bc: bool):
    """Corrector trajectories at every time level, (n_steps+1, n) per kind.

    Time-invariant data admits the static correctors at every level (the update
    is then an exact fixed point), so one static sweep suffices.
    """
    kinds = ["D"] + (["N"] if disc.bp.has_neumann else [])
    n_steps = config.n_steps
    if not time_dependent_bc:
        g_vec = interpolate(bd.g, disc.grids.fine, 0.0)
        cset = static_correctors(
            disc.forms, disc.aux, disc.bp, disc.m, g_vec=g_vec,
            q=bd.q if disc.bp.has_neumann else None, scheme=config.scheme)
        traj = {"D": np.tile(cset.D, (n_steps + 1, 1))}
        if disc.bp.has_neumann:
            traj["N"] = np.tile(cset.N, (n_steps + 1, 1))
        return traj
    series = corrector_series(disc.forms, disc.aux, disc.bp, disc.m, config.scheme,
                              config.tau, n_steps, bd, kinds=tuple(kinds))
    return series


def transient_solve(disc: Discretization, config: SchemeConfig, bd: BoundaryData,
                    td: TransientData, corrector_traj: dict[str, np.ndarray],
                    t0: float = 0.0) -> TransientResult:
    """Backward Euler in the CD- or D-variant over exactly T/τ steps."""
    forms, P = disc.forms, disc.P
    fine = disc.grids.fine
    n_steps, tau = config.n_steps, config.tau
    times = t0 + tau * np.arange(n_steps + 1)
    Dt = corrector_traj.get("D")
    Nt = corrector_traj.get("N")
    zero = np.zeros(fine.n_nodes)

    g_vecs = [interpolate(bd.g, fine, t) for t in times]
    if bd.dg_dt is not None:
        dg_vecs = [interpolate(bd.dg_dt, fine, t) for t in times]
    else:
        dg_vecs = [zero] + [(g_vecs[k + 1] - g_vecs[k]) / tau for k in range(n_steps)]

    cset0 = CorrectorSet(Dt[0] if Dt is not None else zero,
                         Nt[0] if Nt is not None else zero)
    c = transient_init(disc, cset0, td, g_vecs[0])

    M = forms.M_mass
    form = forms.A_cal if config.scheme == "CD" else forms.a_form
    red = _factor(_reduced(P, (M / tau + form)))
    PtM = (P.T @ M).tocsr()

    w_traj = np.zeros((n_steps + 1, fine.n_nodes))
    u_traj = np.zeros((n_steps + 1, fine.n_nodes))
    w_traj[0] = P @ c
    u_traj[0] = w_traj[0] - cset0.D + cset0.N + g_vecs[0]

    for k in range(1, n_steps + 1):
        t = times[k]
        Dk = Dt[k] if Dt is not None else zero
        Dp = Dt[k - 1] if Dt is not None else zero
        Nk = Nt[k] if Nt is not None else zero
        Np = Nt[k - 1] if Nt is not None else zero
        rhs = M @ (interpolate(td.f, fine, t) - dg_vecs[k]
                   + (Dk - Dp) / tau - (Nk - Np) / tau)
        rhs += form @ (Dk - g_vecs[k] - Nk)
        if config.scheme == "Dapp":
            rhs -= forms.C_conv @ u_traj[k - 1]
        if disc.bp.has_neumann:
            rhs += boundary_load(bd.q, disc.bp, disc.grids, t)
        c = red.solve(P.T @ rhs + PtM @ w_traj[k - 1] / tau)
        w_traj[k] = P @ c
        u_traj[k] = w_traj[k] - Dk + Nk + g_vecs[k]
        if not np.all(np.isfinite(u_traj[k])):
            raise SolverError(f"non-finite transient state at step {k}")

    lam, lamp = lambda_stats(disc.aux)
    return TransientResult(times, u_traj, w_traj, config.scheme,
                           {"Lambda": lam, "LambdaPrime": lamp})


# ---------------------------------------------------------------------------
# Strang splitting


def nonlinear_substep(w: np.ndarray, z: np.ndarray, tau_half: float, f,
                      substeps: int = 10) -> np.ndarray:
    """Pointwise RK4 for ∂t w = f(w+z) − f(z) over tau_half."""
    if tau_half <= 0:
        raise SolverError("tau_half must be positive")
    fz = f(z)
    h = tau_half / substeps
    for _ in range(substeps):
        k1 = f(w + z) - fz
        k2 = f(w + 0.5 * h * k1 + z) - fz
        k3 = f(w + 0.5 * h * k2 + z) - fz
        k4 = f(w + h * k3 + z) - fz
        w = w + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(w)):
        raise SolverError("nonlinear substep diverged (non-finite values)")
    return w


@dataclass
class StrangStepper:
    """One Strang step: half reaction, full linear CD Backward Euler, half reaction.

    The lifting z(t) = g̃(t) − 𝒟ᵐg̃(t) + 𝒩ᵐq(t) keeps z|Γ_D = g; the linear
    substep sees the source f(z) − 𝒜z − ∂t z plus the Γ_N load.
    """

    disc: Discretization
    config: SchemeConfig
    bd: BoundaryData
    f: callable
    z_of_t: callable            # t -> fine lifting vector

    def __post_init__(self):
        forms, P = self.disc.forms, self.disc.P
        tau = self.config.tau
        self._red = _factor(_reduced(P, forms.M_mass / tau + forms.A_cal))
        self._PtM = (P.T @ forms.M_mass).tocsr()

    def step(self, u: np.ndarray, t: float) -> np.ndarray:
        disc, cfg = self.disc, self.config
        forms, P = disc.forms, disc.P
        tau = cfg.tau
        z_n = self.z_of_t(t)
        z_next = self.z_of_t(t + tau)
        w = nonlinear_substep(u - z_n, z_n, tau / 2.0, self.f, cfg.ode_substeps)
        dz = (z_next - z_n) / tau if z_next is not z_n else None
        src = forms.M_mass @ self.f(z_n) - forms.A_cal @ z_n
        if dz is not None:
            src -= forms.M_mass @ dz
        if disc.bp.has_neumann:
            src += boundary_load(self.bd.q, disc.bp, disc.grids, t + tau)
        c = self._red.solve(P.T @ src + self._PtM @ w / tau)
        v = P @ c
        w = nonlinear_substep(v, z_n, tau / 2.0, self.f, cfg.ode_substeps)
        return w + z_next


def strang_step(stepper: StrangStepper, u: np.ndarray, t: float) -> np.ndarray:
    return stepper.step(u, t)


def strang_solve(disc: Discretization, config: SchemeConfig, bd: BoundaryData,
                 td: TransientData, f, correctors: CorrectorSet,
                 t0: float = 0.0) -> TransientResult:
    """Strang splitting with time-invariant boundary data and static correctors."""
    fine = disc.grids.fine
    g_vec = interpolate(bd.g, fine, t0)
    z = g_vec - correctors.D + correctors.N
    stepper = StrangStepper(disc, config, bd, f, lambda t: z)
    n_steps = config.n_steps
    times = t0 + config.tau * np.arange(n_steps + 1)
    u_traj = np.zeros((n_steps + 1, fine.n_nodes))
    c0 = transient_init(disc, correctors, td, g_vec)
    u_traj[0] = disc.P @ c0 - correctors.D + correctors.N + g_vec
    for k in range(n_steps):
        u_traj[k + 1] = stepper.step(u_traj[k], times[k])
    return TransientResult(times, u_traj, u_traj - z, "strang")


# ---------------------------------------------------------------------------
# fine-scale references


def reference_solve(grids: GridPair, forms: AssembledForms, bp: BoundaryPartition,
                    bd: BoundaryData, f=None, t: float = 0.0) -> np.ndarray:
    """Direct fine steady solve with Dirichlet elimination."""
    fine = grids.fine
    free = bp.free_dofs()
    g_vec = interpolate(bd.g, fine, t)
    rhs = np.zeros(fine.n_nodes)
    if f is not None:
        rhs += forms.M_mass @ interpolate(f, fine, t)
    if bp.has_neumann:
        rhs += boundary_load(bd.q, bp, grids, t)
    rhs -= forms.A_cal @ g_vec
    A_ff = forms.A_cal.tocsr()[free][:, free].tocsc()
    u0 = np.zeros(fine.n_nodes)
    u0[free] = _factor(A_ff).solve(rhs[free])
    return u0 + g_vec


def reference_transient(grids: GridPair, forms: AssembledForms, bp: BoundaryPartition,
                        bd: BoundaryData, td: TransientData, tau: float, n_steps: int,
                        keep_every: int = 1, nonlinear_f=None, fp_tol: float = 1e-11,
                        fp_maxit: int = 100, t0: float = 0.0):
    """Backward Euler fine reference; nonlinear reaction via fixed-point iteration.

    Returns (times_kept, states) with states[k] the solution at the kept levels
    (every ``keep_every``-th step, always including t0 and the final time).
    """
    fine = grids.fine
    free = bp.free_dofs()
    n = fine.n_nodes
    M = forms.M_mass
    A = forms.A_cal
    sys = (M / tau + A).tocsr()
    lu = _factor(sys[free][:, free].tocsc())

    def solve_level(base, g_vec):
        # substitute u = u0 + g̃ with u0 zero on Γ_D
        u_new = g_vec.copy()
        u_new[free] += lu.solve(base[free] - (sys @ g_vec)[free])
        return u_new

    u = interpolate(td.u_init, fine, t0)
    kept = [u.copy()]
    kept_t = [t0]
    for k in range(1, n_steps + 1):
        t = t0 + k * tau
        g_vec = interpolate(bd.g, fine, t)
        base = M @ (u / tau + interpolate(td.f, fine, t))
        if bp.has_neumann:
            base += boundary_load(bd.q, bp, grids, t)
        if nonlinear_f is None:
            u_new = solve_level(base, g_vec)
        else:
            cur = u.copy()
            for _ in range(fp_maxit):
                u_new = solve_level(base + M @ nonlinear_f(cur), g_vec)
                delta = np.max(np.abs(u_new - cur))
                cur = u_new
                if delta <= fp_tol * max(1.0, np.max(np.abs(cur))):
                    break
            else:
                raise SolverError("nonlinear reference fixed-point did not converge")
        u = u_new
        if k % keep_every == 0 or k == n_steps:
            kept.append(u.copy())
            kept_t.append(t)
    return np.array(kept_t), np.array(kept)

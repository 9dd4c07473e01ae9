"""Norms, relative errors, and convergence tables for the experiment reports.

Norm kinds map to fixed assembled quadratic forms:
L2 -> M_mass, a -> K_diff + R_full, Acal -> K_diff + R_half, s -> S_form,
B -> Acal + s(π·, π·), E -> final-time L2 plus a left-endpoint Riemann sum of
squared B-norms over the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import AssembledForms
from .spectral import AuxSpace

NORM_KINDS = ("L2", "a", "Acal", "s", "B", "E")


class MetricsError(ValueError):
    pass


class NormEngine:
    """Evaluates the spec's norm kinds against one assembled instance."""

    def __init__(self, forms: AssembledForms, aux: AuxSpace | None = None):
        self.forms = forms
        self.aux = aux

    def _quadratic(self, kind: str, v: np.ndarray) -> float:
        f = self.forms
        if kind == "L2":
            return v @ (f.M_mass @ v)
        if kind == "a":
            return v @ (f.a_form @ v)
        if kind == "Acal":
            return v @ (f.quasi @ v)
        if kind == "s":
            return v @ (f.S_form @ v)
        if kind == "B":
            if self.aux is None:
                raise MetricsError("B-norm requires the auxiliary space")
            c = self.aux.Q @ v
            return v @ (f.quasi @ v) + c @ c
        raise MetricsError(f"unknown norm kind {kind!r}")

    def norm(self, kind: str, v: np.ndarray, trajectory: np.ndarray | None = None,
             tau: float | None = None) -> float:
        """√(vᵀQv); the E kind needs the full trajectory and the timestep."""
        if kind == "E":
            if trajectory is None or tau is None:
                raise MetricsError("E-norm requires a trajectory and tau")
            total = self._checked(self._quadratic("L2", trajectory[-1]), trajectory[-1])
            for vn in trajectory[:-1]:
                total += tau * self._checked(self._quadratic("B", vn), vn)
            return float(np.sqrt(total))
        v = np.asarray(v)
        return float(np.sqrt(self._checked(self._quadratic(kind, v), v)))

    def _checked(self, q: float, v: np.ndarray) -> float:
        if q >= 0:
            return q
        scale = v @ (self.forms.K_diff @ v) + float(v @ v) + 1.0
        if q < -1e-10 * scale:
            raise MetricsError(f"quadratic form negative beyond tolerance: {q:.3e}")
        return 0.0

    def relative(self, kind: str, u_ms: np.ndarray, u_ref: np.ndarray) -> float:
        den = self.norm(kind, u_ref)
        if den == 0.0:
            raise MetricsError("zero reference norm")
        return self.norm(kind, u_ms - u_ref) / den


def compute_norm(engine: NormEngine, kind: str, v, trajectory=None, tau=None) -> float:
    return engine.norm(kind, v, trajectory, tau)


def relative_error(engine: NormEngine, kind: str, u_ms, u_ref) -> float:
    return engine.relative(kind, u_ms, u_ref)


def relative_or_absolute(engine: NormEngine, kind: str, u_ms, u_ref) -> float:
    """Relative error, falling back to the absolute norm for zero references."""
    den = engine.norm(kind, u_ref)
    diff = engine.norm(kind, np.asarray(u_ms) - np.asarray(u_ref))
    return diff / den if den > 0 else diff


def prolongate(v: np.ndarray, grids_from, grids_to) -> np.ndarray:
    """Q1 interpolation of a nodal field onto another grid of the same domain."""
    gf, gt = grids_from.fine, grids_to.fine
    V = np.asarray(v).reshape(gf.ny + 1, gf.nx + 1)
    pts = gt.node_coords()
    sx = np.clip((pts[:, 0] - gf.domain.x_min) / gf.hx, 0, gf.nx - 1e-12)
    sy = np.clip((pts[:, 1] - gf.domain.y_min) / gf.hy, 0, gf.ny - 1e-12)
    ix = np.minimum(sx.astype(int), gf.nx - 1)
    iy = np.minimum(sy.astype(int), gf.ny - 1)
    tx = sx - ix
    ty = sy - iy
    out = (V[iy, ix] * (1 - tx) * (1 - ty) + V[iy, ix + 1] * tx * (1 - ty)
           + V[iy + 1, ix] * (1 - tx) * ty + V[iy + 1, ix + 1] * tx * ty)
    return out


@dataclass
class ErrorReport:
    command: str = ""
    H: float = 0.0
    Nov: int = 0
    lm: int = 0
    contrast: float = 1.0
    cflow: float = 0.0
    scheme: str = ""
    tau: float = 0.0
    Lambda: float = float("nan")
    LambdaPrime: float = float("nan")
    E_a: float = float("nan")
    E_L: float = float("nan")
    D_a: float = float("nan")
    D_L: float = float("nan")
    N_a: float = float("nan")
    N_L: float = float("nan")
    wall_s: float = 0.0
    extra: dict = field(default_factory=dict)

    CSV_COLUMNS = ("command,H,Nov,lm,contrast,cflow,scheme,tau,Lambda,LambdaPrime,"
                   "E_a,E_L,D_a,D_L,N_a,N_L,wall_s")

    def csv_row(self) -> str:
        cols = self.CSV_COLUMNS.split(",")
        vals = []
        for c in cols:
            v = getattr(self, c)
            if isinstance(v, float):
                vals.append(repr(v))
            else:
                vals.append(str(v))
        return ",".join(vals)


def convergence_table(reports: list[dict], error_keys=("E_a", "E_L")) -> list[dict]:
    """Annotate per-refinement ratios (percent of the previous row's error)."""
    rows = []
    prev = None
    for rep in reports:
        row = dict(rep)
        for key in error_keys:
            if prev is not None and key in rep and key in prev and prev[key] != 0:
                row[f"{key}_ratio"] = 100.0 * rep[key] / prev[key]
            else:
                row[f"{key}_ratio"] = None
        rows.append(row)
        prev = rep
    return rows

"""Coefficient fields: medium κ, velocity β, boundary data g/q/b, sources, κ̃.

The medium is piecewise constant per fine cell (row 0 = bottom). Velocities are
closed-form evaluators valid on the closed domain. Boundary/source data come
from a fixed catalog of named closed forms so runs are reproducible without an
expression parser.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np


class FieldError(ValueError):
    pass


# ---------------------------------------------------------------------------
# medium


class MediumField:
    """Positive scalar κ per fine cell; A = κ I."""

    def __init__(self, kappa: np.ndarray):
        kappa = np.asarray(kappa, dtype=float)
        if kappa.ndim != 2:
            raise FieldError("kappa must be a (ny, nx) array")
        if not np.all(kappa > 0):
            raise FieldError("kappa must be positive everywhere")
        self.kappa = kappa
        self.kappa0 = float(kappa.min())
        self.kappa1 = float(kappa.max())

    @property
    def contrast(self) -> float:
        return self.kappa1 / self.kappa0

    def per_cell(self) -> np.ndarray:
        """Flat (n_cells,) values in row-major cell order."""
        return self.kappa.ravel()

    @classmethod
    def uniform(cls, nx: int, ny: int, value: float = 1.0) -> "MediumField":
        return cls(np.full((ny, nx), value))

    @classmethod
    def from_file(cls, path: str | Path) -> "MediumField":
        """Plain-text grid: first line "nx ny", then ny rows of nx reals (row 0 = bottom).

        A ``.csv`` file is the comma-separated variant without the header line.
        """
        path = Path(path)
        if path.suffix == ".csv":
            rows = np.loadtxt(path, delimiter=",", ndmin=2)
            return cls(rows)
        with open(path) as fh:
            first = fh.readline().split()
            if len(first) != 2:
                raise FieldError(f"{path}: expected 'nx ny' header")
            nx, ny = int(first[0]), int(first[1])
            rows = np.loadtxt(fh, ndmin=2)
        if rows.shape != (ny, nx):
            raise FieldError(f"{path}: got shape {rows.shape}, header says {(ny, nx)}")
        return cls(rows)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        ny, nx = self.kappa.shape
        with open(path, "w") as fh:
            fh.write(f"{nx} {ny}\n")
            np.savetxt(fh, self.kappa, fmt="%.17g")

    def resample(self, nx: int, ny: int) -> "MediumField":
        """Piecewise-constant resampling by cell-center lookup."""
        sy, sx = self.kappa.shape
        cy = np.minimum(((np.arange(ny) + 0.5) * sy / ny).astype(int), sy - 1)
        cx = np.minimum(((np.arange(nx) + 0.5) * sx / nx).astype(int), sx - 1)
        return MediumField(self.kappa[np.ix_(cy, cx)])


def builtin_medium(nx: int, ny: int, contrast: float, pattern: str = "inclusions",
                   seed: int = 0) -> MediumField:
    """Two-valued high-contrast medium: background 1, inclusions = contrast."""
    if contrast < 1:
        raise FieldError("contrast must be >= 1")
    if contrast == 1 or pattern == "uniform":
        return MediumField.uniform(nx, ny, 1.0)
    rng = np.random.default_rng(seed)
    mask = np.zeros((ny, nx), dtype=bool)
    if pattern == "inclusions":
        _add_lattice_inclusions(mask, rng)
    elif pattern == "blobs":
        _add_blobs(mask, rng, count=max(8, nx * ny // 320))
    elif pattern == "channels":
        _add_channels(mask, rng, count=max(4, ny // 16))
    else:
        raise FieldError(f"unknown medium pattern {pattern!r}")
    # keep both values present so kappa1/kappa0 == contrast exactly
    if not mask.any():
        mask[ny // 2, nx // 2] = True
    if mask.all():
        mask[0, 0] = False
    kappa = np.where(mask, float(contrast), 1.0)
    return MediumField(kappa)


def _add_lattice_inclusions(mask, rng):
    """A few long channels plus well-separated blobs (classic sparse layout).

    Feature count and spacing are chosen so that no 0.1-sized box ever meets
    more than two high-κ components: the per-element spectral problems then
    keep an O(1) gap after a handful of modes at every coarse resolution.
    """
    ny, nx = mask.shape
    thick = max(2, ny // 100)
    channel_rows = []
    diag = None
    if ny >= 80:
        for frac in (0.3, 0.65):
            y0 = int(frac * ny) + int(rng.integers(0, max(ny // 16, 1)))
            x0 = int(rng.integers(0, nx // 5))
            length = int(rng.integers(int(0.5 * nx), int(0.8 * nx)))
            mask[y0:y0 + thick, x0:min(x0 + length, nx)] = True
            channel_rows.append(y0)
        # one staircase diagonal: unresolved at every coarse resolution
        dx0 = int(rng.integers(nx // 10, nx // 4))
        dy0 = int(rng.integers(ny // 12, ny // 6))
        dlen = int(rng.integers(int(0.45 * nx), int(0.6 * nx)))
        diag = (dx0, dy0)
        for k in range(dlen):
            xx, yy = dx0 + k, dy0 + k
            if xx >= nx or yy >= ny:
                break
            mask[yy:min(yy + thick, ny), xx:min(xx + thick, nx)] = True
    S = max(nx // 6, 16)
    guard = max(int(0.08 * ny), 2 * thick)
    for ty in range(ny // S):
        for tx in range(nx // S):
            if rng.random() > 0.85:
                continue
            w = int(rng.integers(4, min(10, max(S // 3, 5))))
            h = int(rng.integers(4, min(10, max(S // 3, 5))))
            lo_x = tx * S + int(0.3 * S)
            lo_y = ty * S + int(0.3 * S)
            span_x = max(int(0.4 * S) - w, 1)
            span_y = max(int(0.4 * S) - h, 1)
            x0 = lo_x + int(rng.integers(0, span_x))
            y0 = lo_y + int(rng.integers(0, span_y))
            if any(abs(y0 + h // 2 - yc) < guard for yc in channel_rows):
                continue
            if diag is not None and abs((y0 - diag[1]) - (x0 - diag[0])) < guard:
                continue
            mask[y0:min(y0 + h, ny), x0:min(x0 + w, nx)] = True


def _add_blobs(mask, rng, count):
    ny, nx = mask.shape
    wmax = max(2, nx // 24)
    for _ in range(count):
        w = int(rng.integers(2, wmax + 1))
        h = int(rng.integers(2, wmax + 1))
        x0 = int(rng.integers(0, max(nx - w, 1)))
        y0 = int(rng.integers(0, max(ny - h, 1)))
        mask[y0:y0 + h, x0:x0 + w] = True


def _add_channels(mask, rng, count):
    ny, nx = mask.shape
    t = max(1, ny // 64)
    for _ in range(count):
        y0 = int(rng.integers(0, ny - t))
        x0 = int(rng.integers(0, nx // 3))
        length = int(rng.integers(nx // 3, nx - x0))
        mask[y0:y0 + t, x0:x0 + length] = True


# ---------------------------------------------------------------------------
# velocity

_VORTEX_K = 18.0 * math.pi


def _vortex(x, y):
    return (np.cos(_VORTEX_K * y) * np.sin(_VORTEX_K * x),
            -np.cos(_VORTEX_K * x) * np.sin(_VORTEX_K * y))


class VelocityField:
    """Closed-form velocity evaluator β(x); builtin modes are divergence-free."""

    def __init__(self, mode: str, c_flow: float = 0.0,
                 fn: Callable[[np.ndarray, np.ndarray], tuple] | None = None):
        if mode not in ("vortex", "inflow", "outflow", "custom"):
            raise FieldError(f"unknown velocity mode {mode!r}")
        if mode == "custom" and fn is None:
            raise FieldError("custom velocity requires an evaluator")
        self.mode = mode
        self.c_flow = float(c_flow)
        self._fn = fn

    def __call__(self, x, y):
        """Component arrays (βx, βy) broadcast over x, y."""
        x = np.asarray(x)
        y = np.asarray(y)
        if self.mode == "custom":
            bx, by = self._fn(x, y)
            return np.broadcast_to(bx, x.shape).astype(float), \
                np.broadcast_to(by, x.shape).astype(float)
        bx, by = _vortex(x, y)
        if self.mode == "vortex":
            return bx, by
        # inflow perturbation c*(1/2 - x, y); outflow is its negation
        px = self.c_flow * (0.5 - x)
        py = self.c_flow * y
        if self.mode == "inflow":
            return bx + px, by + py
        return -(bx + px), -(by + py)

    def magnitude_sq(self, x, y):
        bx, by = self(x, y)
        return bx * bx + by * by


def builtin_velocity(mode: str, c_flow: float = 0.0) -> VelocityField:
    return VelocityField(mode, c_flow)


class KappaTilde:
    """s-form weight κ̃(x) = C·H⁻²·κ(x)·max(|β(x)|², 1).

    κ(x) is the pointwise upper eigenvalue of A(x) (= the medium value for
    A = κI), the weight that keeps the per-element spectral gap contrast-robust.
    The floor keeps the s-form nondegenerate at velocity stagnation points
    (the analysis assumes inf|β| >= 1).
    """

    def __init__(self, medium: MediumField, velocity: VelocityField, H: float,
                 C: float = 24.0, floor: bool = False):
        if H <= 0:
            raise FieldError("H must be positive")
        self.medium = medium
        self.velocity = velocity
        self.H = float(H)
        self.C = float(C)
        self.floor = floor
        self.scale = self.C * self.H ** -2

    def beta_sq(self, x, y):
        b2 = self.velocity.magnitude_sq(x, y)
        return np.maximum(b2, 1.0) if self.floor else b2

    def __call__(self, x, y, grid=None):
        """Pointwise evaluation; κ sampled in the containing fine cell."""
        b2 = self.beta_sq(x, y)
        kap = self._kappa_at(np.asarray(x, dtype=float), np.asarray(y, dtype=float), grid)
        return self.scale * kap * b2

    def _kappa_at(self, x, y, grid):
        ny, nx = self.medium.kappa.shape
        if grid is not None:
            d = grid.domain
            cx = np.clip(((x - d.x_min) / grid.hx).astype(int), 0, nx - 1)
            cy = np.clip(((y - d.y_min) / grid.hy).astype(int), 0, ny - 1)
        else:
            cx = np.clip((x * nx).astype(int), 0, nx - 1)
            cy = np.clip((y * ny).astype(int), 0, ny - 1)
        return self.medium.kappa[cy, cx]


def kappa_tilde(medium: MediumField, velocity: VelocityField, H: float,
                C: float = 24.0, floor: bool = False) -> KappaTilde:
    return KappaTilde(medium, velocity, H, C, floor)


# ---------------------------------------------------------------------------
# boundary / transient data


@dataclass
class BoundaryData:
    """Dirichlet value g (closed form on the whole domain), flux q, Robin b.

    g must be defined on all of the closure of Ω; its nodal interpolant is the
    lifting. dg_dt is the analytic time derivative when available.
    """

    g: Callable = None            # g(x, y, t) -> array
    dg_dt: Callable | None = None
    q: Callable = None            # q(x, y, t) on Γ_N
    b: Callable = None            # b(x, y) >= 0 on Γ_N

    def __post_init__(self):
        if self.g is None:
            self.g = lambda x, y, t: np.zeros_like(np.asarray(x, dtype=float))
            self.dg_dt = lambda x, y, t: np.zeros_like(np.asarray(x, dtype=float))
        if self.q is None:
            self.q = lambda x, y, t: np.zeros_like(np.asarray(x, dtype=float))
        if self.b is None:
            self.b = lambda x, y: np.zeros_like(np.asarray(x, dtype=float))


@dataclass
class TransientData:
    f: Callable = None         # f(x, y, t)
    u_init: Callable = None    # u_init(x, y)

    def __post_init__(self):
        if self.f is None:
            self.f = lambda x, y, t: np.zeros_like(np.asarray(x, dtype=float))
        if self.u_init is None:
            self.u_init = lambda x, y: np.zeros_like(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# expression catalog (fixed named closed forms; no runtime expression parser)

def _const(c):
    return lambda x, y, t=0.0: np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(c))


_CATALOG_SPACETIME = {
    "zero": (_const(0.0), _const(0.0)),
    "one": (_const(1.0), _const(0.0)),
    "minus_one": (_const(-1.0), _const(0.0)),
    "x1": (lambda x, y, t=0.0: np.asarray(x, dtype=float) + 0.0 * np.asarray(y), _const(0.0)),
    "x2": (lambda x, y, t=0.0: np.asarray(y, dtype=float) + 0.0 * np.asarray(x), _const(0.0)),
    # x1^2 + e^{x1 x2}: the Dirichlet data used throughout the experiments
    "x1sq_plus_exp": (lambda x, y, t=0.0: np.asarray(x) ** 2 + np.exp(np.asarray(x) * np.asarray(y)),
                      _const(0.0)),
    # (x1^2 + e^{x1 x2}) e^{-t}: its time-decaying variant
    "decay_exp": (lambda x, y, t=0.0: (np.asarray(x) ** 2 + np.exp(np.asarray(x) * np.asarray(y))) * math.exp(-t),
                  lambda x, y, t=0.0: -(np.asarray(x) ** 2 + np.exp(np.asarray(x) * np.asarray(y))) * math.exp(-t)),
    "sin_pi_xy": (lambda x, y, t=0.0: np.sin(np.pi * np.asarray(x)) * np.sin(np.pi * np.asarray(y)),
                  _const(0.0)),
    # q = 1 on the right half of the bottom side, 0 on the left half
    "step_half": (lambda x, y, t=0.0: (np.asarray(x) > 0.5).astype(float), _const(0.0)),
}

_CATALOG_NONLINEAR = {
    # Ginzburg-Landau style reaction f(u) = u - u^3
    "cubic_gl": (lambda u: u - u ** 3, lambda u: 1.0 - 3.0 * u ** 2),
    "zero": (lambda u: np.zeros_like(u), lambda u: np.zeros_like(u)),
}


def catalog_fn(name: str) -> Callable:
    try:
        return _CATALOG_SPACETIME[name][0]
    except KeyError:
        raise FieldError(f"unknown catalog expression {name!r}") from None


def catalog_dt(name: str) -> Callable:
    try:
        return _CATALOG_SPACETIME[name][1]
    except KeyError:
        raise FieldError(f"unknown catalog expression {name!r}") from None


def catalog_nonlinear(name: str):
    """(f, f') pair for pointwise reaction terms."""
    try:
        return _CATALOG_NONLINEAR[name]
    except KeyError:
        raise FieldError(f"unknown nonlinear term {name!r}") from None


def robin_coefficient(name: str, medium: MediumField, grid) -> Callable:
    """Robin b(x) for Γ_N; "kappa" samples the medium in the adjacent cell."""
    if name == "kappa":
        def b(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            d = grid.domain
            cx = np.clip(((x - d.x_min) / grid.hx).astype(int), 0, grid.nx - 1)
            cy = np.clip(((y - d.y_min) / grid.hy).astype(int), 0, grid.ny - 1)
            return medium.kappa[cy, cx]
        return b
    return catalog_fn(name)

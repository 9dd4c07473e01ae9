import numpy as np
import pytest

from cemflow import assembly, fields, spectral
from cemflow.grid import (DIRICHLET, NEUMANN, DomainSpec, build_grids,
                          classify_boundary)

EXAMPLE2_LAYOUT = {"left": NEUMANN, "right": NEUMANN, "bottom": NEUMANN, "top": DIRICHLET}


def example2_flux():
    """q = -1 on the left, 1 on the right, step on the bottom."""
    def q(x, y, t=0.0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        out = np.where(np.abs(x) < 1e-12, -1.0, out)
        out = np.where(np.abs(x - 1) < 1e-12, 1.0, out)
        on_bottom = np.abs(y) < 1e-12
        out = np.where(on_bottom, (x > 0.5).astype(float), out)
        return out
    return q


class InstanceBundle:
    def __init__(self, grids, bp, medium, velocity, forms, aux=None):
        self.grids = grids
        self.bp = bp
        self.medium = medium
        self.velocity = velocity
        self.forms = forms
        self.aux = aux


def make_instance(nx=40, Nx=5, contrast=100.0, mode="vortex", c_flow=0.0,
                  layout=None, l_m=2, seed=7, robin_b="kappa", symmetrize=False,
                  with_aux=True, floor_beta=False):
    grids = build_grids(DomainSpec(), nx, nx, Nx, Nx)
    bp = classify_boundary(grids.fine, layout or {})
    medium = fields.builtin_medium(nx, nx, contrast, seed=seed)
    velocity = fields.builtin_velocity(mode, c_flow)
    b = fields.robin_coefficient(robin_b, medium, grids.fine) if bp.has_neumann else None
    forms = assembly.assemble_forms(grids, medium, velocity, bp, b, floor_beta=floor_beta)
    aux = spectral.build_aux_space(forms, l_m, symmetrize=symmetrize) if with_aux else None
    return InstanceBundle(grids, bp, medium, velocity, forms, aux)


@pytest.fixture(scope="session")
def dirichlet_instance():
    """40x40 fine, 5x5 coarse, contrast-100 medium, vortex velocity, all-Dirichlet."""
    return make_instance()


@pytest.fixture(scope="session")
def mixed_instance():
    """Example-2 style layout with inflow velocity and Robin b = kappa."""
    return make_instance(nx=40, Nx=5, contrast=1000.0, mode="inflow", c_flow=2.0,
                         layout=EXAMPLE2_LAYOUT, l_m=3)

import numpy as np
import pytest

from cemflow import assembly, cem, fields
from cemflow.cem import (ElementCorrectorStepper, PatchFactor, build_ms_basis,
                         corrector_series, dirichlet_corrector, element_mask,
                         neumann_corrector, static_correctors,
                         transient_corrector_init)
from cemflow.grid import oversample_region

from conftest import make_instance


@pytest.fixture(scope="module")
def small():
    return make_instance(nx=16, Nx=4, contrast=100.0, mode="inflow", c_flow=0.5,
                         layout={"left": "neumann_robin", "right": "neumann_robin",
                                 "bottom": "neumann_robin", "top": "dirichlet"},
                         l_m=2, seed=1)


@pytest.fixture(scope="module")
def gvec(small):
    return assembly.interpolate(fields.catalog_fn("x1sq_plus_exp"), small.grids.fine)


def _b_norm(inst, v):
    c = inst.aux.Q @ v
    return np.sqrt(max(v @ (inst.forms.quasi @ v), 0.0) + c @ c)


def test_basis_support(small):
    ms = build_ms_basis(small.forms, small.aux, small.bp, m=1)
    for i in range(small.grids.coarse.n_elements):
        mask = set(element_mask(small.forms, small.bp, i, 1).tolist())
        for j in range(small.aux.l_m):
            col = ms.column(i, j)
            outside = np.setdiff1d(np.nonzero(col)[0], list(mask))
            assert outside.size == 0


def test_zero_rhs_gives_zero(small):
    mask = element_mask(small.forms, small.bp, 5, 1)
    pf = PatchFactor(small.forms.A_cal, small.aux, mask)
    assert np.all(pf.solve_local(np.zeros(len(mask))) == 0)


def test_saturated_matches_global(small, gvec):
    ms4 = build_ms_basis(small.forms, small.aux, small.bp, m=4)
    msg = build_ms_basis(small.forms, small.aux, small.bp, m=None)
    diff = abs(ms4.P - msg.P)
    assert diff.max() if diff.nnz else 0.0 <= 1e-12
    D4 = dirichlet_corrector(small.forms, small.aux, small.bp, 4, gvec)
    Dg = dirichlet_corrector(small.forms, small.aux, small.bp, None, gvec)
    assert _b_norm(small, D4 - Dg) <= 1e-9 * max(_b_norm(small, Dg), 1e-30)
    q = small.forms  # Neumann flux: use constant 1
    N4 = neumann_corrector(small.forms, small.aux, small.bp, 4, fields.catalog_fn("one"))
    Ng = neumann_corrector(small.forms, small.aux, small.bp, None, fields.catalog_fn("one"))
    assert _b_norm(small, N4 - Ng) <= 1e-9 * max(_b_norm(small, Ng), 1e-30)


def test_corrector_zero_data(small):
    n = small.grids.fine.n_nodes
    D = dirichlet_corrector(small.forms, small.aux, small.bp, 2, np.zeros(n))
    assert np.max(np.abs(D)) == 0.0
    N = neumann_corrector(small.forms, small.aux, small.bp, 2, fields.catalog_fn("zero"))
    assert np.max(np.abs(N)) == 0.0


def test_corrector_linearity(small, gvec):
    D1 = dirichlet_corrector(small.forms, small.aux, small.bp, 2, gvec)
    D3 = dirichlet_corrector(small.forms, small.aux, small.bp, 2, 3.0 * gvec)
    assert np.max(np.abs(D3 - 3.0 * D1)) <= 1e-12 * np.max(np.abs(D1)) * 3


def test_neumann_interior_elements_vanish(small):
    _, locals_ = neumann_corrector(small.forms, small.aux, small.bp, 1,
                                   fields.catalog_fn("one"), keep_locals=True)
    # coarse 4x4: elements 5, 6, 9, 10 have no boundary contact at all;
    # top-middle elements touch only the Dirichlet side
    for i in (5, 6, 9, 10, 13, 14):
        assert i not in locals_


def test_corrector_decay_in_m():
    inst = make_instance(nx=40, Nx=8, contrast=1000.0, mode="inflow", c_flow=2.0,
                         layout={"left": "neumann_robin", "right": "neumann_robin",
                                 "bottom": "neumann_robin", "top": "dirichlet"},
                         l_m=3, seed=2)
    gv = assembly.interpolate(fields.catalog_fn("x1sq_plus_exp"), inst.grids.fine)
    Dglo = dirichlet_corrector(inst.forms, inst.aux, inst.bp, None, gv)
    den = _b_norm(inst, Dglo)
    errs = []
    for m in range(1, 6):
        Dm = dirichlet_corrector(inst.forms, inst.aux, inst.bp, m, gv)
        errs.append(_b_norm(inst, Dm - Dglo) / den)
    for k in range(1, len(errs)):
        assert errs[k] <= 0.6 * errs[k - 1] or errs[k] < 1e-11


def test_basis_decay_outside_growing_patch():
    """The global ψ's tail beyond K^m shrinks with m, and the localized ψ^m
    converges to it (the θ^m localization decay)."""
    inst = make_instance(nx=40, Nx=8, contrast=1000.0, l_m=2, seed=3)
    i = 3 * 8 + 3
    msg = build_ms_basis(inst.forms, inst.aux, inst.bp, m=None)
    col_glo = msg.column(i, 0)
    tails = []
    loc_errs = []
    for m in range(1, 6):
        region = oversample_region(inst.grids.coarse, i, m)
        outside = np.setdiff1d(np.arange(inst.grids.fine.n_nodes), region.closure_nodes())
        tails.append(np.linalg.norm(col_glo[outside]) / np.linalg.norm(col_glo))
        ms = build_ms_basis(inst.forms, inst.aux, inst.bp, m=m)
        diff = ms.column(i, 0) - col_glo
        loc_errs.append(_b_norm(inst, diff) / _b_norm(inst, col_glo))
    assert all(tails[k] <= tails[k - 1] + 1e-12 for k in range(1, len(tails)))
    assert tails[-1] <= 0.2 * tails[0]
    for k in range(1, len(loc_errs)):
        assert loc_errs[k] <= 0.7 * loc_errs[k - 1] or loc_errs[k] < 1e-11


def test_global_space_orthogonality():
    """𝒜(ψ_glo, v') = 0 whenever πv' = 0 (test with deflated random vectors)."""
    inst = make_instance(nx=16, Nx=4, contrast=100.0, l_m=2, seed=4)
    msg = build_ms_basis(inst.forms, inst.aux, inst.bp, m=None)
    free = inst.bp.free_dofs()
    Qf = inst.aux.Q.toarray()[:, free]
    rng = np.random.default_rng(5)
    A = inst.forms.A_cal
    # deflate within V: v' = r - Qf^T (Qf Qf^T)^{-1} Qf r has zero aux coefficients
    G = Qf @ Qf.T
    for _ in range(50):
        r = rng.standard_normal(len(free))
        vf = r - Qf.T @ np.linalg.solve(G, Qf @ r)
        v = np.zeros(inst.grids.fine.n_nodes)
        v[free] = vf
        assert np.max(np.abs(inst.aux.Q @ v)) <= 1e-9
        for col in (0, 7, 21):
            psi = msg.P[:, col].toarray().ravel()
            val = v @ (A @ psi)
            assert abs(val) <= 1e-9 * (np.linalg.norm(psi) + 1) * (np.linalg.norm(v) + 1)


def test_transient_init_equals_static_for_invariant_data(small, gvec):
    bd = fields.BoundaryData(g=fields.catalog_fn("x1sq_plus_exp"),
                             dg_dt=fields.catalog_dt("x1sq_plus_exp"),
                             q=fields.catalog_fn("one"))
    _, locals_ = dirichlet_corrector(small.forms, small.aux, small.bp, 2, gvec,
                                     keep_locals=True)
    loc0 = transient_corrector_init(small.forms, small.aux, small.bp, 3, 2, "D", bd)
    assert np.allclose(loc0, locals_[3], atol=1e-12)


def test_transient_step_fixed_point(small, gvec):
    stepper = ElementCorrectorStepper(small.forms, small.aux, small.bp, 3, 2, "CD", 0.05)
    ef = stepper.ef
    static = stepper.init(ef.apply_global(ef.A, gvec)[stepper.mask])
    nxt = cem.transient_corrector_step(
        stepper, "D", static, 0.05,
        fields.BoundaryData(g=fields.catalog_fn("x1sq_plus_exp"),
                            dg_dt=fields.catalog_dt("x1sq_plus_exp")))
    assert np.max(np.abs(nxt - static)) <= 1e-10 * (1 + np.max(np.abs(static)))


def test_transient_step_geometric_convergence(small, gvec):
    """From zero, constant-data updates converge geometrically to the static value."""
    stepper = ElementCorrectorStepper(small.forms, small.aux, small.bp, 3, 2, "CD", 0.5)
    ef = stepper.ef
    static = stepper.init(ef.apply_global(ef.A, gvec)[stepper.mask])
    rhs = stepper.dirichlet_rhs(gvec, None)
    cur = np.zeros_like(static)
    gaps = []
    for _ in range(12):
        cur = stepper.step(cur, rhs)
        gaps.append(np.linalg.norm(cur - static))
    assert gaps[-1] <= 1e-6 * gaps[0]
    ratios = [gaps[k + 1] / gaps[k] for k in range(4)]
    assert max(ratios) < 0.9


def test_transient_step_zero_data(small):
    stepper = ElementCorrectorStepper(small.forms, small.aux, small.bp, 1, 2, "CD", 0.1)
    zero = np.zeros(stepper.mask.shape[0])
    out = stepper.step(zero, zero)
    assert np.all(out == 0)


def test_corrector_series_matches_static_for_invariant_data(small, gvec):
    bd = fields.BoundaryData(g=fields.catalog_fn("x1sq_plus_exp"),
                             dg_dt=fields.catalog_dt("x1sq_plus_exp"),
                             q=fields.catalog_fn("one"))
    series = corrector_series(small.forms, small.aux, small.bp, 2, "CD", 0.1, 3, bd,
                              kinds=("D", "N"))
    cset = static_correctors(small.forms, small.aux, small.bp, 2, g_vec=gvec,
                             q=bd.q)
    for k in range(4):
        assert np.allclose(series["D"][k], cset.D, atol=1e-10)
        assert np.allclose(series["N"][k], cset.N, atol=1e-10)


def test_build_static_components_consistency(small, gvec):
    ms, cset = cem.build_static_components(small.forms, small.aux, small.bp, 2,
                                           g_vec=gvec, q=fields.catalog_fn("one"))
    ms_ref = build_ms_basis(small.forms, small.aux, small.bp, 2)
    assert abs(ms.P - ms_ref.P).max() <= 1e-14
    D_ref = dirichlet_corrector(small.forms, small.aux, small.bp, 2, gvec)
    N_ref = neumann_corrector(small.forms, small.aux, small.bp, 2, fields.catalog_fn("one"))
    assert np.allclose(cset.D, D_ref, atol=1e-14)
    assert np.allclose(cset.N, N_ref, atol=1e-14)


def test_basis_cache_roundtrip(tmp_path, monkeypatch, small):
    monkeypatch.setenv("CEMFLOW_CACHE_DIR", str(tmp_path))
    ms1 = build_ms_basis(small.forms, small.aux, small.bp, m=2, cache_key="x")
    ms2 = build_ms_basis(small.forms, small.aux, small.bp, m=2, cache_key="x")
    assert abs(ms1.P - ms2.P).max() <= 0.0
    assert (tmp_path / "basis-x-m2.npz").exists()

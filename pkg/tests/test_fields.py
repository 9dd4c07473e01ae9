import math

import numpy as np
import pytest

from cemflow import fields
from cemflow.grid import DomainSpec, build_grids


def test_builtin_medium_homogeneous_limit():
    med = fields.builtin_medium(16, 16, 1.0)
    assert np.all(med.kappa == 1.0)


def test_builtin_medium_contrast_exact():
    med = fields.builtin_medium(200, 200, 1e4, seed=0)
    assert med.kappa0 == 1.0
    assert med.kappa1 == 1e4
    assert med.contrast == pytest.approx(1e4)
    assert set(np.unique(med.kappa)) == {1.0, 1e4}


def test_builtin_medium_deterministic():
    a = fields.builtin_medium(64, 64, 100.0, seed=5)
    b = fields.builtin_medium(64, 64, 100.0, seed=5)
    assert np.array_equal(a.kappa, b.kappa)
    c = fields.builtin_medium(64, 64, 100.0, seed=6)
    assert not np.array_equal(a.kappa, c.kappa)


def test_medium_file_roundtrip(tmp_path):
    med = fields.builtin_medium(8, 6, 10.0, seed=1)
    p = tmp_path / "kappa.txt"
    med.save(p)
    back = fields.MediumField.from_file(p)
    assert np.array_equal(med.kappa, back.kappa)
    # csv variant: no header, comma separated
    pcsv = tmp_path / "kappa.csv"
    np.savetxt(pcsv, med.kappa, delimiter=",")
    back_csv = fields.MediumField.from_file(pcsv)
    assert np.allclose(back_csv.kappa, med.kappa)


def test_medium_positive_required():
    with pytest.raises(fields.FieldError):
        fields.MediumField(np.array([[1.0, -2.0]]))


def test_medium_resample():
    med = fields.builtin_medium(16, 16, 50.0, seed=2)
    up = med.resample(32, 32)
    assert up.kappa.shape == (32, 32)
    assert np.array_equal(up.kappa[::2, ::2], med.kappa)


def test_vortex_stagnation_point():
    # cos(4.5π) = 0 exactly, so (0.25, 0.25) is a stagnation point
    v = fields.builtin_velocity("vortex")
    bx, by = v(0.25, 0.25)
    assert abs(bx) < 1e-12 and abs(by) < 1e-12


def test_vortex_closed_form_random_points():
    v = fields.builtin_velocity("vortex")
    rng = np.random.default_rng(0)
    x, y = rng.random(20), rng.random(20)
    bx, by = v(x, y)
    k = 18 * math.pi
    assert np.allclose(bx, np.cos(k * y) * np.sin(k * x), atol=1e-14)
    assert np.allclose(by, -np.cos(k * x) * np.sin(k * y), atol=1e-14)


def test_inflow_zero_perturbation_is_vortex():
    v0 = fields.builtin_velocity("vortex")
    vin = fields.builtin_velocity("inflow", 0.0)
    rng = np.random.default_rng(1)
    x, y = rng.random(10), rng.random(10)
    assert np.allclose(v0(x, y), vin(x, y), atol=1e-15)


def test_outflow_is_negated_inflow():
    vin = fields.builtin_velocity("inflow", 3.0)
    vout = fields.builtin_velocity("outflow", 3.0)
    rng = np.random.default_rng(2)
    x, y = rng.random(10), rng.random(10)
    bi = np.stack(vin(x, y))
    bo = np.stack(vout(x, y))
    assert np.allclose(bo, -bi, atol=1e-15)


@pytest.mark.parametrize("mode,c", [("vortex", 0.0), ("inflow", 2.0), ("outflow", 4.0)])
def test_divergence_free_central_difference(mode, c):
    v = fields.builtin_velocity(mode, c)
    rng = np.random.default_rng(3)
    pts = 0.05 + 0.9 * rng.random((100, 2))
    d = 4e-7
    bxp, _ = v(pts[:, 0] + d, pts[:, 1])
    bxm, _ = v(pts[:, 0] - d, pts[:, 1])
    _, byp = v(pts[:, 0], pts[:, 1] + d)
    _, bym = v(pts[:, 0], pts[:, 1] - d)
    div = (bxp - bxm) / (2 * d) + (byp - bym) / (2 * d)
    scale = 1.0 + max(np.max(np.abs(np.stack(v(pts[:, 0], pts[:, 1])))), 1.0)
    assert np.max(np.abs(div)) <= 1e-8 * scale


def test_inflow_condition_on_gamma_n():
    """β_in·ν <= 0 on the Example-3 Γ_N (left, right, bottom)."""
    v = fields.builtin_velocity("inflow", 2.0)
    t = np.linspace(0, 1, 201)
    bx, _ = v(np.zeros_like(t), t)
    assert np.all(-bx <= 1e-14)           # ν = (-1, 0)
    bx, _ = v(np.ones_like(t), t)
    assert np.all(bx <= 1e-14)            # ν = (1, 0)
    _, by = v(t, np.zeros_like(t))
    assert np.all(-by <= 1e-14)           # ν = (0, -1)


def test_unknown_mode():
    with pytest.raises(fields.FieldError):
        fields.builtin_velocity("swirl")


def test_kappa_tilde_constant_beta():
    med = fields.MediumField.uniform(4, 4, 1.0)
    v = fields.VelocityField("custom", fn=lambda x, y: (np.ones_like(x), np.zeros_like(x)))
    kt = fields.kappa_tilde(med, v, H=0.1)
    x = np.array([0.3, 0.7])
    assert np.allclose(kt(x, x), 2400.0)


def test_kappa_tilde_h_scaling():
    med = fields.MediumField.uniform(4, 4, 2.0)
    v = fields.VelocityField("custom", fn=lambda x, y: (np.ones_like(x) * 2, np.zeros_like(x)))
    k1 = fields.kappa_tilde(med, v, H=0.1)(0.5, 0.5)
    k2 = fields.kappa_tilde(med, v, H=0.2)(0.5, 0.5)
    assert k2 == pytest.approx(k1 / 4.0)


def test_kappa_tilde_floor_at_stagnation():
    med = fields.MediumField.uniform(4, 4, 3.0)
    v = fields.builtin_velocity("vortex")
    kt = fields.kappa_tilde(med, v, H=0.5, floor=True)
    # stagnation point: |β|² = 0 floored to 1
    assert kt(0.25, 0.25) == pytest.approx(24.0 * 4.0 * 3.0)
    rng = np.random.default_rng(4)
    vals = kt(rng.random(100), rng.random(100))
    assert np.all(vals > 0)
    # without the floor the weight vanishes at the stagnation point
    kt0 = fields.kappa_tilde(med, v, H=0.5, floor=False)
    assert kt0(0.25, 0.25) == pytest.approx(0.0, abs=1e-20)


def test_kappa_tilde_invalid_h():
    med = fields.MediumField.uniform(2, 2, 1.0)
    with pytest.raises(fields.FieldError):
        fields.kappa_tilde(med, fields.builtin_velocity("vortex"), H=0.0)


def test_catalog_dirichlet_data():
    g = fields.catalog_fn("x1sq_plus_exp")
    assert g(1.0, 1.0) == pytest.approx(1.0 + math.e)
    gd = fields.catalog_fn("decay_exp")
    assert gd(1.0, 1.0, 0.0) == pytest.approx(1.0 + math.e)
    assert gd(1.0, 1.0, 1.0) == pytest.approx((1.0 + math.e) * math.exp(-1.0))
    dt = fields.catalog_dt("decay_exp")
    assert dt(1.0, 1.0, 0.5) == pytest.approx(-(1.0 + math.e) * math.exp(-0.5))
    with pytest.raises(fields.FieldError):
        fields.catalog_fn("nope")


def test_robin_kappa_samples_medium():
    grids = build_grids(DomainSpec(), 8, 8, 4, 4)
    med = fields.builtin_medium(8, 8, 100.0, seed=3)
    b = fields.robin_coefficient("kappa", med, grids.fine)
    # boundary midpoint on the left edge lies in cell (0, row)
    val = b(np.array([0.0]), np.array([0.3125]))
    assert val[0] == med.kappa[2, 0]


def test_nonlinear_catalog():
    f, df = fields.catalog_nonlinear("cubic_gl")
    u = np.array([0.0, 1.0, 2.0])
    assert np.allclose(f(u), u - u ** 3)
    assert np.allclose(df(u), 1 - 3 * u ** 2)

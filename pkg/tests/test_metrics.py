import numpy as np
import pytest

from cemflow import assembly, fields
from cemflow.grid import DomainSpec, build_grids, classify_boundary
from cemflow.metrics import (ErrorReport, MetricsError, NormEngine,
                             convergence_table, prolongate)

UNIT = DomainSpec()


@pytest.fixture(scope="module")
def plain():
    grids = build_grids(UNIT, 16, 16, 4, 4)
    bp = classify_boundary(grids.fine, {})
    med = fields.MediumField.uniform(16, 16, 1.0)
    vel = fields.VelocityField("custom", fn=lambda x, y: (np.zeros_like(x), np.zeros_like(x)))
    forms = assembly.assemble_forms(grids, med, vel, bp)
    return grids, forms


def test_unit_l2_norm(plain):
    grids, forms = plain
    eng = NormEngine(forms)
    ones = np.ones(grids.fine.n_nodes)
    assert eng.norm("L2", ones) == pytest.approx(1.0, abs=1e-13)


def test_linear_energy_norm(plain):
    grids, forms = plain
    eng = NormEngine(forms)
    v = assembly.interpolate(lambda x, y, t: x, grids.fine)
    assert eng.norm("a", v) == pytest.approx(1.0, abs=1e-13)
    assert eng.norm("Acal", v) == pytest.approx(1.0, abs=1e-13)


def test_zero_vector_all_kinds(plain, mixed_instance):
    grids, forms = plain
    eng = NormEngine(forms)
    z = np.zeros(grids.fine.n_nodes)
    for kind in ("L2", "a", "Acal", "s"):
        assert eng.norm(kind, z) == 0.0
    engb = NormEngine(mixed_instance.forms, mixed_instance.aux)
    zb = np.zeros(mixed_instance.grids.fine.n_nodes)
    assert engb.norm("B", zb) == 0.0
    assert engb.norm("E", None, trajectory=np.zeros((3, len(zb))), tau=0.1) == 0.0


def test_relative_error_trivials(plain):
    grids, forms = plain
    eng = NormEngine(forms)
    u = assembly.interpolate(lambda x, y, t: x + y, grids.fine)
    assert eng.relative("L2", u, u) == 0.0
    assert eng.relative("L2", 1.01 * u, u) == pytest.approx(0.01, abs=1e-12)
    with pytest.raises(MetricsError):
        eng.relative("L2", u, np.zeros_like(u))


def test_norm_axioms_random(mixed_instance):
    eng = NormEngine(mixed_instance.forms, mixed_instance.aux)
    rng = np.random.default_rng(0)
    n = mixed_instance.grids.fine.n_nodes
    for kind in ("L2", "a", "s", "B"):
        for _ in range(5):
            v, w = rng.standard_normal(n), rng.standard_normal(n)
            nv, nw, nvw = eng.norm(kind, v), eng.norm(kind, w), eng.norm(kind, v + w)
            assert nvw <= nv + nw + 1e-12 * (nv + nw)
            assert eng.norm(kind, 3.0 * v) == pytest.approx(3.0 * nv, rel=1e-12)


def test_quasi_below_full_energy_norm_under_inflow(mixed_instance):
    """‖v‖_Acal <= ‖v‖_a when β·ν <= 0 on Γ_N (R_half <= R_full there)."""
    eng = NormEngine(mixed_instance.forms)
    rng = np.random.default_rng(1)
    n = mixed_instance.grids.fine.n_nodes
    for _ in range(100):
        v = rng.standard_normal(n)
        assert eng.norm("Acal", v) <= eng.norm("a", v) * (1 + 1e-12)


def test_b_dominates_quasi(mixed_instance):
    eng = NormEngine(mixed_instance.forms, mixed_instance.aux)
    rng = np.random.default_rng(2)
    n = mixed_instance.grids.fine.n_nodes
    for _ in range(20):
        v = rng.standard_normal(n)
        gap = eng.norm("B", v) ** 2 - eng.norm("Acal", v) ** 2
        pi_s = np.linalg.norm(mixed_instance.aux.Q @ v) ** 2
        assert gap >= -1e-12
        assert gap == pytest.approx(pi_s, rel=1e-10)


def test_energy_time_norm_left_endpoint(mixed_instance):
    eng = NormEngine(mixed_instance.forms, mixed_instance.aux)
    n = mixed_instance.grids.fine.n_nodes
    rng = np.random.default_rng(3)
    traj = rng.standard_normal((3, n))
    tau = 0.25
    expect = eng.norm("L2", traj[-1]) ** 2
    for k in (0, 1):
        expect += tau * eng.norm("B", traj[k]) ** 2
    assert eng.norm("E", None, trajectory=traj, tau=tau) == pytest.approx(
        np.sqrt(expect), rel=1e-12)


def test_prolongate_bilinear_exact():
    g1 = build_grids(UNIT, 8, 8, 2, 2)
    g2 = build_grids(UNIT, 32, 32, 2, 2)
    v = assembly.interpolate(lambda x, y, t: 2 * x + 3 * y + x * y, g1.fine)
    up = prolongate(v, g1, g2)
    expect = assembly.interpolate(lambda x, y, t: 2 * x + 3 * y + x * y, g2.fine)
    assert np.max(np.abs(up - expect)) <= 5e-12


def test_convergence_table():
    rows = convergence_table([{"E_a": 4e-4}, {"E_a": 1e-4}], error_keys=("E_a",))
    assert rows[0]["E_a_ratio"] is None
    assert rows[1]["E_a_ratio"] == pytest.approx(25.0)
    single = convergence_table([{"E_a": 1.0}], error_keys=("E_a",))
    assert single[0]["E_a_ratio"] is None
    paper = convergence_table([{"E_L": 1.49e-4}, {"E_L": 3.10e-5}, {"E_L": 6.00e-6}],
                              error_keys=("E_L",))
    assert paper[1]["E_L_ratio"] == pytest.approx(20.8, abs=0.05)
    assert paper[2]["E_L_ratio"] == pytest.approx(19.4, abs=0.05)


def test_error_report_csv_row():
    rep = ErrorReport(command="steady", H=0.1, Nov=3, lm=3, contrast=1e4,
                      E_a=3.6e-4, E_L=6e-6, wall_s=1.25)
    row = rep.csv_row()
    cols = ErrorReport.CSV_COLUMNS.split(",")
    vals = row.split(",")
    assert len(vals) == len(cols)
    assert vals[0] == "steady"
    assert float(vals[cols.index("E_a")]) == pytest.approx(3.6e-4)

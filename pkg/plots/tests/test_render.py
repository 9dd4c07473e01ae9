import hashlib
import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

import render  # noqa: E402

HEADER = ("command,H,Nov,lm,contrast,cflow,scheme,tau,Lambda,LambdaPrime,"
          "E_a,E_L,D_a,D_L,N_a,N_L,wall_s")


def sweep_csv(tmp_path, name="results.csv"):
    """Synthetic 9-cell sweep in the documented results.csv format."""
    rows = [HEADER]
    for H in (0.1, 0.05, 0.025):
        for k, nov in enumerate((3, 4, 5)):
            e = 1e-2 * H * 2.0 ** (-k)
            rows.append(f"sweep:steady,{H},{nov},3,10000.0,0.0,CD,0.1,"
                        f"2.3,0.4,{e},{e / 10},nan,nan,nan,nan,1.0")
    p = tmp_path / name
    p.write_text("\n".join(rows) + "\n")
    return p


def snapshot_files(tmp_path):
    mat = np.fromfunction(lambda i, j: np.sin(i / 7.0) * np.cos(j / 9.0), (41, 41))
    snap = tmp_path / "solution_steady_Nx10_Nov3.txt"
    np.savetxt(snap, mat, fmt="%.17g")
    (tmp_path / "manifest.json").write_text(
        json.dumps({"domain": [0.0, 1.0, 0.0, 1.0], "fine": [40, 40]}))
    return snap


def test_sweep_error_plot(tmp_path):
    csv = sweep_csv(tmp_path)
    out = tmp_path / "fig.png"
    assert render.main(["--csv", str(csv), "--kind", "error_vs_Nov_log",
                        "--out", str(out)]) == 0
    assert out.exists() and out.stat().st_size > 1000


def test_loglog_h_plot(tmp_path):
    csv = sweep_csv(tmp_path)
    out = tmp_path / "figh.png"
    assert render.main(["--csv", str(csv), "--kind", "error_vs_H_loglog",
                        "--column", "E_a", "--out", str(out)]) == 0
    assert out.exists()


def test_single_row_no_crash(tmp_path):
    p = tmp_path / "one.csv"
    p.write_text(HEADER + "\n" + "steady,0.1,3,3,1.0,0.0,CD,0.1,1,1,1e-3,1e-4,"
                 "nan,nan,nan,nan,0.5\n")
    out = tmp_path / "single.png"
    assert render.main(["--csv", str(p), "--kind", "error_vs_Nov_log",
                        "--out", str(out)]) == 0
    assert out.exists()


def test_two_csv_overlay(tmp_path):
    a = sweep_csv(tmp_path, "inflow.csv")
    b = sweep_csv(tmp_path, "outflow.csv")
    out = tmp_path / "cmp.png"
    assert render.main(["--csv", str(a), "--csv", str(b), "--label", "inflow",
                        "--label", "outflow", "--kind", "error_vs_Nov_log",
                        "--out", str(out)]) == 0
    assert out.exists()


def test_heatmap(tmp_path):
    snap = snapshot_files(tmp_path)
    out = tmp_path / "heat.png"
    assert render.main(["--snapshot", str(snap), "--kind", "heatmap",
                        "--out", str(out)]) == 0
    assert out.exists()


def test_deterministic_output(tmp_path):
    csv = sweep_csv(tmp_path)
    hashes = []
    for name in ("r1.png", "r2.png"):
        out = tmp_path / name
        assert render.main(["--csv", str(csv), "--kind", "error_vs_Nov_log",
                            "--out", str(out)]) == 0
        hashes.append(hashlib.sha256(out.read_bytes()).hexdigest())
    assert hashes[0] == hashes[1]
    snap = snapshot_files(tmp_path)
    hh = []
    for name in ("h1.png", "h2.png"):
        out = tmp_path / name
        assert render.main(["--snapshot", str(snap), "--kind", "heatmap",
                            "--out", str(out)]) == 0
        hh.append(hashlib.sha256(out.read_bytes()).hexdigest())
    assert hh[0] == hh[1]


def test_missing_column_rejected(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    assert render.main(["--csv", str(p), "--kind", "error_vs_Nov_log",
                        "--out", str(tmp_path / "x.png")]) == 1


def test_empty_csv_rejected(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text(HEADER + "\n")
    assert render.main(["--csv", str(p), "--kind", "error_vs_Nov_log",
                        "--out", str(tmp_path / "x.png")]) == 1


def test_end_to_end_sweep_and_heatmap(tmp_path):
    """Drive the solver CLI as an external process and render its artifacts."""
    import subprocess
    import sys as _sys
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text("""
fine.nx = 16
fine.ny = 16
coarse.Nx = 2,4
space.N_ov = 1,2,3
space.l_m = 2
medium.contrast = 100
medium.seed = 3
data.g = x1sq_plus_exp
data.f = one
""")
    out = tmp_path / "run"
    proc = subprocess.run([_sys.executable, "-m", "cemflow.cli", "sweep",
                           "--config", str(cfg), "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    fig1 = tmp_path / "sweep.png"
    assert render.main(["--csv", str(out / "results.csv"),
                        "--kind", "error_vs_Nov_log", "--out", str(fig1)]) == 0
    snaps = sorted(out.glob("solution_*.txt"))
    assert snaps
    fig2 = tmp_path / "heat.png"
    assert render.main(["--snapshot", str(snaps[0]), "--kind", "heatmap",
                        "--out", str(fig2)]) == 0
    assert fig1.exists() and fig2.exists()

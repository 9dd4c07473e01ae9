"""Experiment driver: config parsing, runs, CSV/manifest/snapshot artifacts.

Config files are flat ``key = value`` lines with dotted sections; unknown and
duplicate keys are rejected. Boundary and source data are chosen from the
named catalog in cemflow.fields, never parsed as expressions.

Exit codes: 0 ok, 2 config/schema error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import __version__, assembly, cem, fields, metrics, solvers, spectral
from .cache import instance_key
from .grid import DIRICHLET, NEUMANN, SIDES, DomainSpec, build_grids, classify_boundary
from .metrics import ErrorReport, NormEngine, prolongate, relative_or_absolute


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "domain.x_min": (float, 0.0), "domain.x_max": (float, 1.0),
    "domain.y_min": (float, 0.0), "domain.y_max": (float, 1.0),
    "fine.nx": (int, 40), "fine.ny": (int, 40),
    "coarse.Nx": (str, "4"), "coarse.Ny": (str, ""),
    "space.l_m": (int, 3), "space.N_ov": (str, "2"),
    "sform.C": (float, 24.0), "sform.floor_beta": (bool, False),
    "spectral.symmetrize": (bool, False),
    "medium.pattern": (str, "inclusions"), "medium.contrast": (float, 1.0),
    "medium.seed": (int, 0), "medium.file": (str, ""),
    "velocity.mode": (str, "vortex"), "velocity.c_flow": (float, 0.0),
    "boundary.left": (str, DIRICHLET), "boundary.right": (str, DIRICHLET),
    "boundary.bottom": (str, DIRICHLET), "boundary.top": (str, DIRICHLET),
    "boundary.left.q": (str, "zero"), "boundary.right.q": (str, "zero"),
    "boundary.bottom.q": (str, "zero"), "boundary.top.q": (str, "zero"),
    "boundary.bottom.segments": (str, ""), "boundary.top.segments": (str, ""),
    "boundary.left.segments": (str, ""), "boundary.right.segments": (str, ""),
    "boundary.b": (str, "zero"),
    "data.g": (str, "zero"), "data.f": (str, "zero"), "data.u_init": (str, "g0"),
    "time.T": (float, 1.0), "time.tau": (float, 0.1), "time.scheme": (str, "CD"),
    "nonlinear.f": (str, "cubic_gl"), "nonlinear.ode_substeps": (int, 10),
    "reference.nx": (int, 0), "reference.ny": (int, 0), "reference.steps": (int, 0),
    "errors.correctors": (bool, False),
    "sweep.command": (str, "steady"),
    "output.dir": (str, "out"), "output.snapshots": (bool, True),
}

_TIME_DEPENDENT_G = {"decay_exp"}


@dataclass
class ExperimentConfig:
    values: dict
    raw_text: str = ""
    path: str = ""

    def __getitem__(self, key):
        return self.values[key]

    def coarse_list(self) -> list[tuple[int, int]]:
        Nxs = [int(v) for v in str(self.values["coarse.Nx"]).split(",") if v.strip()]
        Nys_raw = str(self.values["coarse.Ny"]).strip()
        Nys = [int(v) for v in Nys_raw.split(",") if v.strip()] if Nys_raw else Nxs
        if len(Nys) != len(Nxs):
            raise ConfigError("coarse.Ny list length must match coarse.Nx")
        return list(zip(Nxs, Nys))

    def nov_list(self) -> list[int]:
        return [int(v) for v in str(self.values["space.N_ov"]).split(",") if v.strip()]


def _parse_scalar(key: str, text: str):
    typ, _ = _SCHEMA[key]
    text = text.strip()
    if typ is bool:
        if text.lower() in ("true", "1", "yes", "on"):
            return True
        if text.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected boolean, got {text!r}")
    if typ is int:
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{key}: expected integer, got {text!r}") from None
    if typ is float:
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{key}: expected number, got {text!r}") from None
    return text


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    values = {k: d for k, (_, d) in _SCHEMA.items()}
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = stripped.partition("=")
        key = key.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        values[key] = _parse_scalar(key, val)
    cfg = ExperimentConfig(values, text, str(path))
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    v = cfg.values
    nx, ny = v["fine.nx"], v["fine.ny"]
    if nx < 1 or ny < 1:
        raise ConfigError("fine.nx and fine.ny must be >= 1")
    for Nx, Ny in cfg.coarse_list():
        if Nx < 1 or Ny < 1 or nx % Nx or ny % Ny:
            raise ConfigError(
                f"fine grid {nx}x{ny} not divisible by coarse {Nx}x{Ny}")
    if v["time.scheme"] not in ("CD", "Dapp"):
        raise ConfigError("time.scheme must be CD or Dapp")
    for side in SIDES:
        tag = v[f"boundary.{side}"]
        if tag not in (DIRICHLET, NEUMANN):
            raise ConfigError(f"boundary.{side} must be dirichlet or neumann_robin")
    for name in ("data.g", "data.f"):
        fields.catalog_fn(v[name])
    if v["data.u_init"] != "g0":
        fields.catalog_fn(v["data.u_init"])
    if v["medium.contrast"] < 1:
        raise ConfigError("medium.contrast must be >= 1")


# ---------------------------------------------------------------------------
# instance construction


@dataclass
class Instance:
    cfg: ExperimentConfig
    Nx: int
    Ny: int
    Nov: int
    grids: object = None
    bp: object = None
    medium: object = None
    velocity: object = None
    forms: object = None
    aux: object = None
    bd: object = None
    td: object = None
    timings: dict = dc_field(default_factory=dict)

    @property
    def H(self) -> float:
        return self.grids.H


def _boundary_spec(cfg: ExperimentConfig) -> dict:
    spec = {}
    for side in SIDES:
        segs = str(cfg[f"boundary.{side}.segments"]).strip()
        if segs:
            intervals = []
            for part in segs.split(","):
                lo, hi, tag = part.split(":")
                intervals.append((float(lo), float(hi), tag.strip()))
            spec[side] = intervals
        else:
            spec[side] = cfg[f"boundary.{side}"]
    return spec


def _neumann_flux(cfg: ExperimentConfig):
    """Per-side q expressions combined into one callable of (x, y, t)."""
    dom = (cfg["domain.x_min"], cfg["domain.x_max"], cfg["domain.y_min"], cfg["domain.y_max"])
    side_q = {side: fields.catalog_fn(cfg[f"boundary.{side}.q"]) for side in SIDES}

    def q(x, y, t=0.0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        tol = 1e-12
        on_left = np.abs(x - dom[0]) < tol
        on_right = np.abs(x - dom[1]) < tol
        on_bottom = np.abs(y - dom[2]) < tol
        on_top = np.abs(y - dom[3]) < tol
        for mask, side in ((on_left, "left"), (on_right, "right"),
                           (on_bottom, "bottom"), (on_top, "top")):
            if mask.any():
                out = np.where(mask, side_q[side](x, y, t), out)
        return out

    return q


def build_instance(cfg: ExperimentConfig, Nx: int, Ny: int, Nov: int) -> Instance:
    v = cfg.values
    inst = Instance(cfg, Nx, Ny, Nov)
    dom = DomainSpec(v["domain.x_min"], v["domain.x_max"], v["domain.y_min"], v["domain.y_max"])
    inst.grids = build_grids(dom, v["fine.nx"], v["fine.ny"], Nx, Ny)
    inst.bp = classify_boundary(inst.grids.fine, _boundary_spec(cfg))
    if v["medium.pattern"] == "file":
        inst.medium = fields.MediumField.from_file(v["medium.file"])
    else:
        inst.medium = fields.builtin_medium(v["fine.nx"], v["fine.ny"], v["medium.contrast"],
                                            v["medium.pattern"], v["medium.seed"])
    inst.velocity = fields.builtin_velocity(v["velocity.mode"], v["velocity.c_flow"])
    b_field = fields.robin_coefficient(v["boundary.b"], inst.medium, inst.grids.fine)
    t0 = time.perf_counter()
    inst.forms = assembly.assemble_forms(inst.grids, inst.medium, inst.velocity, inst.bp,
                                         b_field, C=v["sform.C"],
                                         floor_beta=v["sform.floor_beta"])
    inst.timings["assembly"] = time.perf_counter() - t0
    gname = v["data.g"]
    inst.bd = fields.BoundaryData(
        g=fields.catalog_fn(gname), dg_dt=fields.catalog_dt(gname),
        q=_neumann_flux(cfg), b=b_field)
    u_init_name = v["data.u_init"]
    if u_init_name == "g0":
        gfun = fields.catalog_fn(gname)
        u_init = lambda x, y: gfun(x, y, 0.0)
    else:
        uf = fields.catalog_fn(u_init_name)
        u_init = lambda x, y: uf(x, y, 0.0)
    inst.td = fields.TransientData(f=fields.catalog_fn(v["data.f"]), u_init=u_init)
    t0 = time.perf_counter()
    inst.aux = spectral.build_aux_space(
        inst.forms, v["space.l_m"], symmetrize=v["spectral.symmetrize"],
        cache_key=instance_cache_key(cfg, Nx, Ny, inst.medium))
    inst.timings["spectral"] = time.perf_counter() - t0
    return inst


def instance_cache_key(cfg: ExperimentConfig, Nx: int, Ny: int,
                       medium=None) -> str:
    v = cfg.values
    return instance_key(
        medium=medium.kappa if medium is not None else None,
        nx=v["fine.nx"], ny=v["fine.ny"], Nx=Nx, Ny=Ny,
        domain=(v["domain.x_min"], v["domain.x_max"], v["domain.y_min"], v["domain.y_max"]),
        pattern=v["medium.pattern"], contrast=v["medium.contrast"], seed=v["medium.seed"],
        medium_file=v["medium.file"], mode=v["velocity.mode"], c_flow=v["velocity.c_flow"],
        l_m=v["space.l_m"], C=v["sform.C"], floor=v["sform.floor_beta"],
        symmetrize=v["spectral.symmetrize"], b=v["boundary.b"],
        layout=tuple(sorted((k, str(v[k])) for k in v if k.startswith("boundary."))),
    )


def _g_time_dependent(cfg: ExperimentConfig) -> bool:
    return cfg["data.g"] in _TIME_DEPENDENT_G


# ---------------------------------------------------------------------------
# per-command runs


def _reference_instance(cfg: ExperimentConfig, inst: Instance):
    """Reference discretization (possibly a different fine grid)."""
    v = cfg.values
    rnx = v["reference.nx"] or v["fine.nx"]
    rny = v["reference.ny"] or v["fine.ny"]
    if (rnx, rny) == (v["fine.nx"], v["fine.ny"]):
        return inst.grids, inst.bp, inst.forms
    grids = build_grids(inst.grids.fine.domain, rnx, rny, inst.Nx, inst.Ny)
    bp = classify_boundary(grids.fine, _boundary_spec(cfg))
    med = inst.medium.resample(rnx, rny)
    b_field = fields.robin_coefficient(v["boundary.b"], med, grids.fine)
    forms = assembly.assemble_forms(grids, med, inst.velocity, bp, b_field,
                                    C=v["sform.C"], floor_beta=v["sform.floor_beta"])
    return grids, bp, forms


def _error_pair(engine: NormEngine, u_ms, u_ref, grids_run, grids_ref):
    if grids_run.fine.nx != grids_ref.fine.nx or grids_run.fine.ny != grids_ref.fine.ny:
        u_ms = prolongate(u_ms, grids_run, grids_ref)
    return (relative_or_absolute(engine, "Acal", u_ms, u_ref),
            relative_or_absolute(engine, "L2", u_ms, u_ref))


def _base_report(cfg, inst, command) -> ErrorReport:
    lam, lamp = spectral.lambda_stats(inst.aux)
    return ErrorReport(
        command=command, H=inst.H, Nov=inst.Nov, lm=cfg["space.l_m"],
        contrast=inst.medium.contrast, cflow=cfg["velocity.c_flow"],
        scheme=cfg["time.scheme"], tau=cfg["time.tau"], Lambda=lam, LambdaPrime=lamp)


def run_steady(cfg: ExperimentConfig, inst: Instance) -> tuple[ErrorReport, np.ndarray]:
    t_all = time.perf_counter()
    m = inst.Nov
    gv = assembly.interpolate(inst.bd.g, inst.grids.fine, 0.0)
    q = inst.bd.q if inst.bp.has_neumann else None
    t0 = time.perf_counter()
    ms, cset = cem.build_static_components(
        inst.forms, inst.aux, inst.bp, m, g_vec=gv, q=q,
        cache_key=instance_cache_key(cfg, inst.Nx, inst.Ny, inst.medium))
    inst.timings["basis_correctors"] = time.perf_counter() - t0
    disc = solvers.Discretization(inst.grids, inst.bp, inst.forms, inst.aux, ms, m)
    sol = solvers.steady_solve(disc, cset, inst.bd, f=inst.td.f)
    rep = _base_report(cfg, inst, "steady")
    grids_ref, bp_ref, forms_ref = _reference_instance(cfg, inst)
    u_ref = solvers.reference_solve(grids_ref, forms_ref, bp_ref, inst.bd, f=inst.td.f)
    engine = NormEngine(forms_ref)
    rep.E_a, rep.E_L = _error_pair(engine, sol.u_ms, u_ref, inst.grids, grids_ref)
    if cfg["errors.correctors"]:
        _corrector_errors(cfg, inst, rep, gv, q, cset)
    rep.wall_s = time.perf_counter() - t_all
    return rep, sol.u_ms


def _corrector_errors(cfg, inst, rep, gv, q, cset):
    eng = NormEngine(inst.forms)
    D_glo = cem.dirichlet_corrector(inst.forms, inst.aux, inst.bp, None, gv)
    rep.D_a = relative_or_absolute(eng, "Acal", cset.D, D_glo)
    rep.D_L = relative_or_absolute(eng, "L2", cset.D, D_glo)
    if q is not None:
        N_glo = cem.neumann_corrector(inst.forms, inst.aux, inst.bp, None, q)
        rep.N_a = relative_or_absolute(eng, "Acal", cset.N, N_glo)
        rep.N_L = relative_or_absolute(eng, "L2", cset.N, N_glo)


def run_transient(cfg: ExperimentConfig, inst: Instance) -> tuple[ErrorReport, np.ndarray]:
    t_all = time.perf_counter()
    m = inst.Nov
    scheme = solvers.SchemeConfig(cfg["time.tau"], cfg["time.T"], cfg["time.scheme"],
                                  cfg["nonlinear.ode_substeps"])
    ms, _ = cem.build_static_components(
        inst.forms, inst.aux, inst.bp, m,
        cache_key=instance_cache_key(cfg, inst.Nx, inst.Ny, inst.medium))
    disc = solvers.Discretization(inst.grids, inst.bp, inst.forms, inst.aux, ms, m)
    t0 = time.perf_counter()
    traj = solvers.prepare_correctors(disc, scheme, inst.bd, _g_time_dependent(cfg))
    inst.timings["correctors"] = time.perf_counter() - t0
    res = solvers.transient_solve(disc, scheme, inst.bd, inst.td, traj)
    rep = _base_report(cfg, inst, "transient")
    rep.extra["steps"] = scheme.n_steps
    grids_ref, bp_ref, forms_ref = _reference_instance(cfg, inst)
    steps_ref = cfg["reference.steps"] or scheme.n_steps
    tau_ref = cfg["time.T"] / steps_ref
    _, ref = solvers.reference_transient(grids_ref, forms_ref, bp_ref, inst.bd, inst.td,
                                         tau_ref, steps_ref, keep_every=steps_ref)
    engine = NormEngine(forms_ref)
    u_fin = res.final if grids_ref is inst.grids else prolongate(res.final, inst.grids, grids_ref)
    rep.E_a = relative_or_absolute(engine, "Acal", u_fin, ref[-1])
    rep.E_L = relative_or_absolute(engine, "L2", u_fin, ref[-1])
    rep.wall_s = time.perf_counter() - t_all
    return rep, res.final


def run_nonlinear(cfg: ExperimentConfig, inst: Instance) -> tuple[ErrorReport, np.ndarray]:
    t_all = time.perf_counter()
    m = inst.Nov
    scheme = solvers.SchemeConfig(cfg["time.tau"], cfg["time.T"], "CD",
                                  cfg["nonlinear.ode_substeps"])
    f, _df = fields.catalog_nonlinear(cfg["nonlinear.f"])
    gv = assembly.interpolate(inst.bd.g, inst.grids.fine, 0.0)
    q = inst.bd.q if inst.bp.has_neumann else None
    ms, cset = cem.build_static_components(
        inst.forms, inst.aux, inst.bp, m, g_vec=gv, q=q,
        cache_key=instance_cache_key(cfg, inst.Nx, inst.Ny, inst.medium))
    disc = solvers.Discretization(inst.grids, inst.bp, inst.forms, inst.aux, ms, m)
    res = solvers.strang_solve(disc, scheme, inst.bd, inst.td, f, cset)
    rep = _base_report(cfg, inst, "nonlinear")
    rep.extra["steps"] = scheme.n_steps
    grids_ref, bp_ref, forms_ref = _reference_instance(cfg, inst)
    steps_ref = cfg["reference.steps"] or scheme.n_steps
    tau_ref = cfg["time.T"] / steps_ref
    _, ref = solvers.reference_transient(grids_ref, forms_ref, bp_ref, inst.bd, inst.td,
                                         tau_ref, steps_ref, keep_every=steps_ref,
                                         nonlinear_f=f)
    engine = NormEngine(forms_ref)
    u_fin = res.final if grids_ref is inst.grids else prolongate(res.final, inst.grids, grids_ref)
    rep.E_a = relative_or_absolute(engine, "Acal", u_fin, ref[-1])
    rep.E_L = relative_or_absolute(engine, "L2", u_fin, ref[-1])
    rep.wall_s = time.perf_counter() - t_all
    return rep, res.final


def run_spectrum(cfg: ExperimentConfig, inst: Instance) -> tuple[ErrorReport, None]:
    rep = _base_report(cfg, inst, "spectrum")
    rep.wall_s = inst.timings.get("spectral", 0.0)
    return rep, None


def run_reference(cfg: ExperimentConfig, inst: Instance) -> tuple[ErrorReport, np.ndarray]:
    t_all = time.perf_counter()
    u = solvers.reference_solve(inst.grids, inst.forms, inst.bp, inst.bd, f=inst.td.f)
    rep = _base_report(cfg, inst, "reference")
    rep.wall_s = time.perf_counter() - t_all
    return rep, u


_RUNNERS = {
    "steady": run_steady,
    "transient": run_transient,
    "nonlinear": run_nonlinear,
    "spectrum": run_spectrum,
    "reference": run_reference,
}


def _run_cell(args):
    cfg, command, Nx, Ny, Nov = args
    inst = build_instance(cfg, Nx, Ny, Nov)
    rep, snapshot = _RUNNERS[command](cfg, inst)
    rep.extra["timings"] = {k: round(v, 3) for k, v in inst.timings.items()}
    return rep, snapshot, inst.timings


# ---------------------------------------------------------------------------
# artifacts


def write_snapshot(path: Path, u: np.ndarray, nx: int, ny: int):
    mat = np.asarray(u).reshape(ny + 1, nx + 1)
    np.savetxt(path, mat, fmt="%.17g")


def _write_artifacts(cfg: ExperimentConfig, out: Path, reports, snapshots, command):
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    with open(csv_path, "w") as fh:
        fh.write(ErrorReport.CSV_COLUMNS + "\n")
        for rep in reports:
            fh.write(rep.csv_row() + "\n")
    _write_ratio_table(out, reports)
    if cfg["output.snapshots"]:
        for rep, snap in zip(reports, snapshots):
            if snap is not None:
                name = f"solution_{command}_Nx{int(round(1 / rep.H)) if rep.H else 0}_Nov{rep.Nov}.txt"
                write_snapshot(out / name, snap, cfg["fine.nx"], cfg["fine.ny"])
    manifest = {
        "version": __version__,
        "command": command,
        "config_path": cfg.path,
        "config_sha256": hashlib.sha256(cfg.raw_text.encode()).hexdigest(),
        "config": {k: cfg.values[k] for k in sorted(cfg.values)},
        "domain": [cfg["domain.x_min"], cfg["domain.x_max"],
                   cfg["domain.y_min"], cfg["domain.y_max"]],
        "fine": [cfg["fine.nx"], cfg["fine.ny"]],
        "csv_columns": ErrorReport.CSV_COLUMNS,
        "runs": [dict(H=rep.H, Nov=rep.Nov, **rep.extra) for rep in reports],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return csv_path


def _write_ratio_table(out: Path, reports):
    """results_table.csv: the fixed columns plus per-refinement ratio percentages."""
    from .metrics import convergence_table
    ordered = sorted(reports, key=lambda r: (-r.H, r.Nov))
    rows = convergence_table([{"E_a": r.E_a, "E_L": r.E_L} for r in ordered])
    with open(out / "results_table.csv", "w") as fh:
        fh.write(ErrorReport.CSV_COLUMNS + ",E_a_ratio_pct,E_L_ratio_pct\n")
        for rep, row in zip(ordered, rows):
            ratios = ",".join("" if row[f"{k}_ratio"] is None else f"{row[f'{k}_ratio']:.1f}"
                              for k in ("E_a", "E_L"))
            fh.write(rep.csv_row() + "," + ratios + "\n")


# ---------------------------------------------------------------------------
# entry point


def run_command(command: str, cfg: ExperimentConfig, out_dir: str | None = None,
                threads: int = 1, seed: int | None = None) -> Path:
    if seed is not None:
        cfg.values["medium.seed"] = int(seed)
    out = Path(out_dir or cfg["output.dir"])
    if command == "sweep":
        sub = cfg["sweep.command"]
        if sub not in _RUNNERS:
            raise ConfigError(f"sweep.command {sub!r} unknown")
        cells = [(cfg, sub, Nx, Ny, Nov)
                 for (Nx, Ny) in cfg.coarse_list() for Nov in cfg.nov_list()]
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(_run_cell, cells))
        else:
            results = [_run_cell(c) for c in cells]
        reports = [r[0] for r in results]
        for rep in reports:
            rep.command = "sweep:" + sub
        snapshots = [r[1] for r in results]
        return _write_artifacts(cfg, out, reports, snapshots, "sweep")
    if command not in _RUNNERS:
        raise ConfigError(f"unknown command {command!r}")
    coarse = cfg.coarse_list()
    novs = cfg.nov_list()
    if len(coarse) != 1 or len(novs) != 1:
        raise ConfigError(f"{command} expects single coarse.Nx and space.N_ov "
                          "(use the sweep command for lists)")
    rep, snap, _ = _run_cell((cfg, command, coarse[0][0], coarse[0][1], novs[0]))
    return _write_artifacts(cfg, out, [rep], [snap], command)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cemflow", description=__doc__)
    parser.add_argument("command", choices=sorted([*_RUNNERS, "sweep"]))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        csv_path = run_command(args.command, cfg, args.out, args.threads, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:   # numerical failures
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {csv_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

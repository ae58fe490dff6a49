"""Command-line pipeline: solve-fe -> gramian -> pod -> solve-rom -> report.

Every stage reads its inputs from the output directory and writes its
artifacts there, so stages can be rerun independently.  CSV outputs are
byte-deterministic for a fixed configuration; wall-clock timings go to a
separate ``timing.json``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import fem, gramian as gr, mesh as _mesh, pod, rom, store
from .cutgeom import EDGE_GAUSS_POINTS, MAX_DEGREE
from .errors import StageDependencyError
from .problems import PRESETS, make_problem

STAGES = ("solve-fe", "gramian", "pod", "solve-rom", "report")


@dataclass
class RunConfig:
    """Validated run parameters; serialised to ``config.json`` next to the outputs."""

    problem: str = "example-6-3"
    nx: int = 16
    ny: int = 0
    dt: float = 0.01
    T: float = 0.0
    c: float = -1.0
    refine_fraction: float = 0.0
    coarsen_fraction: float = 0.0
    max_generation: int = 12
    theta: float = 0.0
    tag: str = "L2"
    ells: list = field(default_factory=lambda: [1, 2, 3, 5, 10])
    ps: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4])
    nonlin: str = "none"
    out: str = "run"
    workers: int = 1

    def __post_init__(self):
        if self.problem not in PRESETS:
            raise ValueError(f"problem must be one of {sorted(PRESETS)}")
        if self.ny <= 0:
            self.ny = self.nx
        if self.T <= 0:
            self.T = PRESETS[self.problem][1]["T"]
        if self.nx < 1 or self.ny < 1:
            raise ValueError("nx and ny must be at least 1")
        if not self.dt > 0 or self.dt > self.T:
            raise ValueError("dt must lie in (0, T]")
        for name in ("refine_fraction", "coarsen_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        if self.theta > 0 and (self.refine_fraction > 0 or self.coarsen_fraction > 0):
            raise ValueError("choose either mesh disturbance (theta) or adaptivity, not both")
        self.tag = gr.InnerProductTag.parse(self.tag).value
        if self.nonlin not in ("none", "linearized"):
            raise ValueError("nonlin must be 'none' or 'linearized'")
        if any(int(ell) < 1 for ell in self.ells):
            raise ValueError("ranks must be positive")
        self.ells = sorted({int(e) for e in self.ells})
        self.ps = [float(p) for p in self.ps]
        if any(not 0 < p < 1 for p in self.ps):
            raise ValueError("p values must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @property
    def n_steps(self):
        n = int(round(self.T / self.dt))
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError("T must be an integer multiple of dt")
        return n

    def problem_obj(self):
        return make_problem(self.problem, None if self.c < 0 else self.c)

    def to_json(self):
        doc = asdict(self)
        doc["quadrature"] = {"edge_gauss_points": EDGE_GAUSS_POINTS, "max_degree": MAX_DEGREE}
        return json.dumps(doc, indent=2, sort_keys=True)


def parse_config_file(path):
    """Read ``key = value`` lines; ``#`` starts a comment, lists are comma separated."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key = value")
        k, v = (x.strip() for x in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _coerce(raw):
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for k, v in raw.items():
        if k not in types:
            raise ValueError(f"unknown configuration key {k!r}")
        if v is None:
            continue
        kind = types[k]
        if kind == "list":
            items = v if isinstance(v, list) else [x for x in str(v).split(",") if x.strip()]
            out[k] = [float(x) if k == "ps" else int(x) for x in items]
        elif kind == "int":
            out[k] = int(v)
        elif kind == "float":
            out[k] = float(v)
        else:
            out[k] = str(v)
    return out


# -- stages -------------------------------------------------------------------

def _require(stage, *paths):
    missing = [str(p) for p in paths if not Path(p).exists()]
    if missing:
        raise StageDependencyError(stage, missing)


def _write_meta(out, stage, inputs, cfg):
    meta = {"stage": stage, "config_sha256": _sha(cfg.to_json().encode()),
            "inputs": {Path(p).name: store.file_digest(p) for p in inputs}}
    (out / f"{stage}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def _sha(data):
    return hashlib.sha256(data).hexdigest()


def _timing(out, stage, seconds, **extra):
    path = out / "timing.json"
    doc = json.loads(path.read_text()) if path.exists() else {}
    doc[stage] = {"seconds": seconds, **extra}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))


def cmd_solve_fe(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    problem = cfg.problem_obj()
    grid = fem.TimeGrid.uniform(cfg.T, cfg.n_steps)
    base = _mesh.make_unit_square(cfg.nx, cfg.ny)
    t0 = time.perf_counter()
    if cfg.theta > 0:
        s = fem.solve_disturbed(problem, grid, base, cfg.theta)
    elif cfg.refine_fraction > 0 or cfg.coarsen_fraction > 0:
        s = fem.solve_adaptive(problem, grid, base, cfg.refine_fraction, cfg.coarsen_fraction,
                               cfg.max_generation)
    else:
        s = fem.solve_fixed(problem, grid, base)
    elapsed = time.perf_counter() - t0
    snapdir = out / "snapshots"
    if snapdir.exists():
        for f in sorted((snapdir / "meshes").glob("*.json")):
            f.unlink()
    store.save_snapshots(s, snapdir)
    # mesh ids depend on process history; the log keeps sizes only
    rows = [[j, t, y.mesh.n_vertices, y.mesh.n_triangles]
            for j, (t, y) in enumerate(zip(grid.times, s.snapshots))]
    header = ["step", "t", "vertices", "triangles"]
    if problem.analytic is not None:
        header.append("l2_error")
        rows = [r + [fem.l2_error(y, lambda x, t=r[1]: problem.analytic(t, x))]
                for r, y in zip(rows, s.snapshots)]
    store.write_csv(out / "fe_log.csv", rows, header)
    _write_meta(out, "solve-fe", [out / "config.json"], cfg)
    _timing(out, "solve-fe", elapsed, snapshots=len(s), meshes=len(set(s.mesh_ids)))
    return s


def _load_snapshots(cfg, stage):
    snap = Path(cfg.out) / "snapshots"
    _require(stage, snap / "snapshots.json")
    return store.load_snapshots(snap)


def cmd_gramian(cfg):
    out = Path(cfg.out)
    s = _load_snapshots(cfg, "gramian")
    t0 = time.perf_counter()
    K, M, S = gr.assemble_all(s, cfg.tag, workers=cfg.workers)
    elapsed = time.perf_counter() - t0
    store.write_csv(out / "gramian.csv", K.matrix)
    store.write_csv(out / "mass.csv", M.matrix)
    store.write_csv(out / "stiffness.csv", S.matrix)
    (out / "gramian.json").write_text(json.dumps({"tag": K.tag.value, "size": len(s)}))
    _write_meta(out, "gramian", [out / "snapshots" / "snapshots.json"], cfg)
    n = len(s)
    _timing(out, "gramian", elapsed, entries=n * (n + 1) // 2, mesh_pairs=K.info["mesh_pairs"],
            seconds_per_entry=elapsed / max(1, n * (n + 1) // 2))
    return K


def _load_gramian(cfg, stage, s=None):
    out = Path(cfg.out)
    _require(stage, out / "gramian.csv", out / "gramian.json")
    tag = json.loads((out / "gramian.json").read_text())["tag"]
    return gr.Gramian(store.read_csv(out / "gramian.csv"), tag, s)


def cmd_pod(cfg):
    out = Path(cfg.out)
    K = _load_gramian(cfg, "pod")
    basis = pod.eig_sym(K)
    lam = basis.eigenvalues
    rows = [[i + 1, lam[i], lam[i] / lam[0], pod.information_content(basis, i + 1)]
            for i in range(basis.d)]
    store.write_csv(out / "eigen.csv", rows, ["index", "lambda", "lambda_rel", "gamma"])
    store.write_csv(out / "phi.csv", basis.eigenvectors)
    ranks = [[p, pod.select_rank(basis, p)] for p in cfg.ps]
    store.write_csv(out / "ranks.csv", ranks, ["p", "ell_min"])
    _write_meta(out, "pod", [out / "gramian.csv"], cfg)
    return basis


def cmd_solve_rom(cfg):
    out = Path(cfg.out)
    _require("solve-rom", out / "gramian.csv", out / "mass.csv", out / "stiffness.csv",
             out / "eigen.csv", out / "phi.csv")
    s = _load_snapshots(cfg, "solve-rom")
    K = _load_gramian(cfg, "solve-rom", s)
    if K.matrix.shape != (len(s), len(s)):
        raise ValueError("gramian size does not match the snapshot set; rerun the gramian stage")
    mass = gr.Gramian(store.read_csv(out / "mass.csv"), "L2", s)
    stiff = gr.CrossMatrix(store.read_csv(out / "stiffness.csv"), "stiffness", s)
    eig = store.read_csv(out / "eigen.csv", header=True)
    phi = store.read_csv(out / "phi.csv")
    basis = pod.PodBasis(eig[:, 1], phi.reshape(len(s), -1), K)
    problem = cfg.problem_obj()
    ells = [ell for ell in cfg.ells if ell <= basis.d]
    t0 = time.perf_counter()
    loads = rom.project_loads(s, problem)
    trajs = {}
    for ell in ells:
        sysm = rom.build_rom(s, basis, ell, problem, nonlin=cfg.nonlin, mass=mass,
                             stiffness=stiff, loads=loads)
        trajs[ell] = rom.solve_rom(sysm)
        store.write_csv(out / f"eta_{ell}.csv", trajs[ell].eta)
    elapsed = time.perf_counter() - t0
    rows = rom.rom_error_report(s, basis, trajs, problem, mass=mass)
    store.write_csv(out / "errors.csv", rows, ["ell", "eps_fe", "eps_true", "tail", "gamma"])
    _write_meta(out, "solve-rom", [out / "gramian.csv", out / "phi.csv"], cfg)
    _timing(out, "solve-rom", elapsed, ranks=ells)
    return rows


def cmd_report(cfg):
    out = Path(cfg.out)
    _require("report", out / "eigen.csv", out / "errors.csv")
    eig = store.read_csv(out / "eigen.csv", header=True)
    err = store.read_csv(out / "errors.csv", header=True)
    lines = [f"# POD run `{cfg.problem}`", "",
             f"- mesh {cfg.nx}x{cfg.ny}, dt = {cfg.dt:g}, T = {cfg.T:g}, theta = {cfg.theta:g}, "
             f"inner product {cfg.tag}", ""]
    fe_log = out / "fe_log.csv"
    if fe_log.exists():
        log = store.read_csv(fe_log, header=True)
        lines += [f"- snapshots: {len(log)}, vertices per snapshot {int(log[:, 2].min())}"
                  f"-{int(log[:, 2].max())}", ""]
    lines += ["## Eigenvalues", "", "| i | lambda_i | lambda_i/lambda_1 | Gamma(i) |",
              "|---:|---:|---:|---:|"]
    for row in eig[:20]:
        lines.append(f"| {int(row[0])} | {row[1]:.6e} | {row[2]:.6e} | {row[3]:.10f} |")
    ranks = out / "ranks.csv"
    if ranks.exists():
        lines += ["", "## Needed ranks", "", "| p | ell_min |", "|---:|---:|"]
        for p, ell in store.read_csv(ranks, header=True):
            lines.append(f"| {p:g} | {int(ell)} |")
    lines += ["", "## Relative L2(0,T;L2) errors", "",
              "| ell | ROM vs FE | ROM vs exact | tail sum | Gamma |", "|---:|---:|---:|---:|---:|"]
    for ell, fe, true, tail, gam in err:
        true_s = "n/a" if np.isnan(true) else f"{true:.4e}"
        lines.append(f"| {int(ell)} | {fe:.4e} | {true_s} | {tail:.4e} | {gam:.10f} |")
    text = "\n".join(lines) + "\n"
    (out / "report.md").write_text(text)
    return text


COMMANDS = {"solve-fe": cmd_solve_fe, "gramian": cmd_gramian, "pod": cmd_pod,
            "solve-rom": cmd_solve_rom, "report": cmd_report}


def build_parser():
    ap = argparse.ArgumentParser(prog="crossmesh-pod", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="key = value configuration file")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sp = sub.add_parser(name)
        sp.add_argument("--config", dest="sub_config", help="key = value configuration file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--problem", choices=sorted(PRESETS))
        sp.add_argument("--nx", type=int)
        sp.add_argument("--ny", type=int)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--T", type=float)
        sp.add_argument("--c", type=float, help="cubic coefficient (where the preset allows)")
        sp.add_argument("--refine-fraction", type=float)
        sp.add_argument("--coarsen-fraction", type=float)
        sp.add_argument("--max-generation", type=int)
        sp.add_argument("--theta", type=float)
        sp.add_argument("--tag", choices=["L2", "H1"])
        sp.add_argument("--ells", help="comma separated ranks")
        sp.add_argument("--ps", help="comma separated information-loss levels p")
        sp.add_argument("--nonlin", choices=["none", "linearized"])
        sp.add_argument("--workers", type=int)
    return ap


def make_config(args):
    """Layer the saved run config, config files and command-line options.

    Stages after ``solve-fe`` start from the ``config.json`` in the output
    directory, so ``--out`` alone is enough to continue a run.
    """
    raw = {}
    for path in (args.config, getattr(args, "sub_config", None)):
        if path:
            raw.update(parse_config_file(path))
    opts = {k: v for k, v in vars(args).items()
            if k not in ("config", "sub_config", "command") and v is not None}
    raw.update(opts)
    base = {}
    saved = Path(raw.get("out", RunConfig.out)) / "config.json"
    if args.command != "solve-fe" and saved.exists():
        base = json.loads(saved.read_text())
        base.pop("quadrature", None)
    base.update(raw)
    return RunConfig(**_coerce(base))


def main(argv=None):
    args = build_parser().parse_args(argv)
    stage = args.command
    try:
        cfg = make_config(args)
        COMMANDS[stage](cfg)
    except StageDependencyError as exc:
        print(f"crossmesh-pod: stage {stage} failed: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"crossmesh-pod: stage {stage} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

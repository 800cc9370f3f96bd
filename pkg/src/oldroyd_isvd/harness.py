"""Command line front end: convergence sweeps, lockstep comparisons, probes.

Subcommands::

    run           one problem, per-step CSV (+ field snapshots for the contraction)
    convergence   grid sweep for example 1 or 2, result table CSV
    compare       full vs compressed on one grid with the history audit enabled
    contraction   the 4:1 contraction benchmark (shortcut for run --example contraction)
    cq-probe      convolution quadrature weights and the quadrature error table
    isvd-bench    incremental SVD against a batch SVD on random low-rank matrices

Options may also come from a ``--config`` file (``[section]`` headers,
``key = value`` lines, ``#`` comments); explicit command line flags win.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .fespace import MixedSpace, evaluate_velocity
from .isvd import compress, interlacing_violation
from .kernels import cq_build, probe_orders, smooth_probe
from .problems import DT_RULES, boundary_flux, contraction, example1, example2, mesh_size
from .stepper import RunReport, StepError, run

TABLE_HEADER = ["grid", "err_u", "rate_u", "err_u_hat", "rate_u_hat", "diff_u",
                "err_p", "rate_p", "diff_p"]
STEP_HEADER = ["step", "t", "picard_iters", "rank", "hist_floats", "div_residual"]
EXAMPLES = ("1", "2", "contraction", "cq-probe")
DEFAULT_DT_RULE = {"1": "half_h", "2": "four_h"}


@dataclass
class RunConfig:
    example: str = "1"
    grids: list = field(default_factory=lambda: [20, 30, 40])
    dt_rule: str = ""
    tol: float = 1e-12
    mode: str = "both"
    T: float = 1.0
    out: str = "results"
    seed: int = 0
    alpha: float = 0.5
    lam: float = 0.5
    N: int = 128
    dt: float = 0.02
    refine_levels: int = 2
    cell_size: float = 0.25

    def validate(self) -> None:
        if str(self.example) not in EXAMPLES:
            raise ValueError(f"example must be one of {EXAMPLES}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.mode not in ("full", "compressed", "both"):
            raise ValueError("mode must be full, compressed or both")
        if any(g < 4 for g in self.grids):
            raise ValueError("grid entries must be >= 4")
        if self.dt_rule and self.dt_rule not in DT_RULES:
            float(self.dt_rule)
        if self.T <= 0 or self.dt <= 0 or self.N < 1:
            raise ValueError("T, dt and N must be positive")

    def resolved_dt_rule(self) -> str:
        return self.dt_rule or DEFAULT_DT_RULE.get(str(self.example), "half_h")


# --- tables ----------------------------------------------------------------
@dataclass
class TableRow:
    grid: int
    err_u: float
    err_u_hat: float = math.nan
    diff_u: float = math.nan
    err_p: float = math.nan
    diff_p: float = math.nan


def rates(grids, errors) -> list[float]:
    """``ln(e_{k-1}/e_k) / ln(h_{k-1}/h_k)``, NaN on the first row."""
    out = [math.nan]
    for k in range(1, len(errors)):
        h0, h1 = mesh_size(grids[k - 1]), mesh_size(grids[k])
        e0, e1 = errors[k - 1], errors[k]
        out.append(math.log(e0 / e1) / math.log(h0 / h1) if e0 > 0 and e1 > 0 else math.nan)
    return out


def table_records(rows: list[TableRow]) -> list[dict]:
    grids = [r.grid for r in rows]
    ru = rates(grids, [r.err_u for r in rows])
    rh = rates(grids, [r.err_u_hat for r in rows])
    rp = rates(grids, [r.err_p for r in rows])
    recs = []
    for r, a, b, c in zip(rows, ru, rh, rp):
        recs.append({"grid": r.grid, "err_u": r.err_u, "rate_u": a, "err_u_hat": r.err_u_hat,
                     "rate_u_hat": b, "diff_u": r.diff_u, "err_p": r.err_p, "rate_p": c,
                     "diff_p": r.diff_p})
    return recs


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or not np.isfinite(x):
        return ""
    return f"{x:.5e}"


def version_string() -> str:
    try:
        sha = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).parent).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        sha = ""
    return f"{__version__}+g{sha}" if sha else __version__


def write_metadata(path: Path, config: dict, **extra) -> Path:
    meta = {"version": version_string(), "config": config}
    meta.update(extra)
    side = path.with_suffix(".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
    return side


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def emit_table(rows: list[TableRow], path, metadata: dict | None = None) -> Path:
    """Write the result table CSV plus a JSON sidecar with ``metadata``."""
    if not rows:
        raise ValueError("table needs at least one row")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for rec in table_records(rows):
            w.writerow([_fmt(rec[k]) for k in TABLE_HEADER])
    meta = dict(metadata or {})
    write_metadata(path, meta.pop("config", {}), **meta)
    return path


def read_table(path) -> list[dict]:
    with open(path) as fh:
        rdr = csv.DictReader(fh)
        return [{k: (int(v) if k == "grid" else (float(v) if v else math.nan)) for k, v in row.items()}
                for row in rdr]


def write_steps(track, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STEP_HEADER)
        for s in track.steps:
            w.writerow([s.step, f"{s.t:.12g}", s.picard_iters, s.rank, s.hist_floats,
                        f"{s.div_residual:.5e}"])
    return path


def field_snapshot(space: MixedSpace, u: np.ndarray, path, nx: int = 161, ny: int = 81) -> Path:
    """Sample the velocity on a uniform lattice over the mesh bounding box.

    File layout: a header line ``nx ny`` then one ``x y u1 u2`` row per
    lattice point (x fastest); points outside the domain get NaN.
    """
    lo = space.mesh.vertices.min(axis=0)
    hi = space.mesh.vertices.max(axis=0)
    xs = np.linspace(lo[0], hi[0], nx)
    ys = np.linspace(lo[1], hi[1], ny)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    vals = evaluate_velocity(space, u, pts)
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"{nx} {ny}\n")
        for (x, y), (a, b) in zip(pts, vals):
            fh.write(f"{x:.10g} {y:.10g} {a:.12e} {b:.12e}\n")
    return path


def read_snapshot(path) -> tuple[int, int, np.ndarray]:
    with open(path) as fh:
        nx, ny = map(int, fh.readline().split())
        data = np.loadtxt(fh).reshape(-1, 4)
    return nx, ny, data


# --- drivers ---------------------------------------------------------------
def _build(cfg: RunConfig, grid: int, mode: str | None = None, **kw):
    mode = mode or cfg.mode
    ex = str(cfg.example)
    if ex == "1":
        return example1(grid, cfg.resolved_dt_rule(), cfg.T, mode, cfg.tol, seed=cfg.seed, **kw)
    if ex == "2":
        return example2(grid, cfg.resolved_dt_rule(), cfg.T, mode, cfg.tol, alpha=cfg.alpha,
                        lam=cfg.lam, seed=cfg.seed, **kw)
    if ex == "contraction":
        return contraction(dt=cfg.dt, T=cfg.T, refine_levels=cfg.refine_levels, mode=mode,
                           tol=cfg.tol, cell_size=cfg.cell_size, seed=cfg.seed, **kw)
    raise ValueError(f"example {ex} cannot be run as a flow problem")


def _summary(report: RunReport) -> str:
    parts = [f"{report.problem}: N={report.grid.N} dt={report.grid.dt:.6g} m={report.m}"]
    for tr in report.tracks.values():
        s = f"{tr.name}: rank={tr.rank} T_sv={tr.T_sv} peak_floats={tr.peak_floats} " \
            f"max_picard={tr.max_picard} max_div={tr.max_div_residual:.2e}"
        if tr.errors is not None:
            s += f" err_u={tr.errors.vel_L2:.5e} err_p={tr.errors.pres_L2:.5e}"
        parts.append(s)
    if np.isfinite(report.diff_u):
        parts.append(f"diff_u={report.diff_u:.3e} diff_p={report.diff_p:.3e}")
    parts.append(f"wall={report.wall_time:.2f}s")
    return "; ".join(parts)


def convergence_table(cfg: RunConfig, log=print) -> tuple[list[TableRow], list[RunReport]]:
    rows, reports = [], []
    for g in cfg.grids:
        config, prob = _build(cfg, g)
        rep = run(config, prob)
        reports.append(rep)
        log(_summary(rep))
        first = rep.primary
        row = TableRow(g, first.errors.vel_L2, err_p=first.errors.pres_L2)
        if "compressed" in rep.tracks:
            comp = rep.tracks["compressed"]
            if "full" in rep.tracks:
                row.diff_u, row.diff_p = rep.diff_u, rep.diff_p
                row.err_u_hat = comp.errors.vel_L2
            else:
                row.err_u_hat = comp.errors.vel_L2
        rows.append(row)
    return rows, reports


def cmd_convergence(cfg: RunConfig, out: Path) -> int:
    if str(cfg.example) not in ("1", "2"):
        raise ValueError("convergence needs --example 1 or 2")
    t0 = time.perf_counter()
    rows, reports = convergence_table(cfg)
    path = out / f"convergence_example{cfg.example}.csv"
    emit_table(rows, path, {
        "config": asdict(cfg), "dt_rule": cfg.resolved_dt_rule(),
        "wall_time": time.perf_counter() - t0,
        "peak_history_floats": {str(r.grid.N): {k: t.peak_floats for k, t in r.tracks.items()}
                                for r in reports},
        "steps": [r.grid.N for r in reports]})
    print(f"wrote {path}")
    return 0


def run_metrics(rep: RunReport, prob) -> dict:
    """Scalar end-of-run metrics; everything here is deterministic."""
    m = {"steps": rep.grid.N, "dt": rep.grid.dt, "m": rep.m}
    for name, tr in rep.tracks.items():
        m[f"{name}_rank"] = tr.rank
        m[f"{name}_T_sv"] = tr.T_sv
        m[f"{name}_peak_floats"] = tr.peak_floats
        m[f"{name}_max_picard"] = tr.max_picard
        m[f"{name}_max_div_residual"] = tr.max_div_residual
        if tr.errors is not None:
            m[f"{name}_err_u"] = tr.errors.vel_L2
            m[f"{name}_err_p"] = tr.errors.pres_L2
    if len(rep.tracks) == 2:
        m["diff_u"], m["diff_p"] = rep.diff_u, rep.diff_p
    if prob.name == "contraction":
        u = rep.primary.u
        m["flux_in"] = -boundary_flux(prob.space, u, "inflow")
        m["flux_out"] = boundary_flux(prob.space, u, "outflow")
        m["flux_wall"] = boundary_flux(prob.space, u, "wall")
    return m


def cmd_run(cfg: RunConfig, out: Path) -> int:
    config, prob = _build(cfg, cfg.grids[0])
    rep = run(config, prob)
    stem = f"run_{cfg.example}" if str(cfg.example) == "contraction" else f"run_{cfg.example}_{cfg.grids[0]}"
    for name, tr in rep.tracks.items():
        write_steps(tr, out / f"{stem}_{name}.csv")
        if prob.name == "contraction":
            field_snapshot(prob.space, tr.u, out / f"{stem}_{name}_field.txt")
    metrics = run_metrics(rep, prob)
    with open(out / f"{stem}_metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in metrics.items():
            w.writerow([k, _fmt(v)])
    write_metadata(out / f"{stem}.csv", asdict(cfg), wall_time=rep.wall_time,
                   summary=_summary(rep), notes=rep.notes,
                   peak_history_floats={k: t.peak_floats for k, t in rep.tracks.items()})
    print(_summary(rep))
    for n in rep.notes:
        print("note:", n)
    return 0


def cmd_compare(cfg: RunConfig, out: Path) -> int:
    config, prob = _build(cfg, cfg.grids[0], mode="both", audit=True, bound_audit=True)
    rep = run(config, prob)
    comp = rep.tracks["compressed"]
    bound = (comp.T_sv + 1) * math.sqrt(rep.sigma_S) * cfg.tol * 1e3
    info = {"diff_u": rep.diff_u, "diff_p": rep.diff_p, "sigma_S": rep.sigma_S, "T_sv": comp.T_sv,
            "bound": bound, "audit": comp.audit, "summary": _summary(rep)}
    path = out / f"compare_{cfg.example}_{cfg.grids[0]}.json"
    path.write_text(json.dumps({"version": version_string(), "config": asdict(cfg), **info},
                               indent=2, default=_json_default) + "\n")
    print(_summary(rep))
    print(f"bound audit: diff_u={rep.diff_u:.3e} <= (T_sv+1) sqrt(sigma) tol 1e3 = {bound:.3e}")
    return 0


def cmd_cq_probe(cfg: RunConfig, out: Path) -> int:
    w = cq_build(cfg.alpha, cfg.lam, cfg.N, cfg.T / cfg.N)
    p1 = out / "cq_weights.csv"
    with open(p1, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["n", "omega", "rho"])
        for n in range(cfg.N + 1):
            wr.writerow([n, f"{w.omega[n]:.16e}", f"{w.rho[n]:.16e}"])
    phi, _ = smooth_probe(cfg.alpha, cfg.lam)
    Ns = [max(1, cfg.N // 8), max(1, cfg.N // 4), max(1, cfg.N // 2), cfg.N]
    rows = probe_orders(cfg.alpha, cfg.lam, phi, cfg.T, Ns)
    p2 = out / "cq_probe.csv"
    with open(p2, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["dt", "max_err", "order"])
        for dt, err, order in rows:
            wr.writerow([f"{dt:.6e}", f"{err:.6e}", _fmt(order)])
    for dt, err, order in rows:
        print(f"dt={dt:.4e} max_err={err:.4e} order={'' if math.isnan(order) else f'{order:.3f}'}")
    print(f"wrote {p1} and {p2}")
    return 0


def cmd_isvd_bench(cfg: RunConfig, out: Path, n_matrices: int = 20) -> int:
    rng = np.random.default_rng(cfg.seed)
    path = out / "isvd_bench.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["m", "N", "rank", "k", "T_sv", "max_sv_err", "max_col_err",
                     "interlacing", "floats", "seconds"])
        for _ in range(n_matrices):
            m, N, r = int(rng.integers(50, 401)), int(rng.integers(20, 201)), int(rng.integers(1, 13))
            A = rng.standard_normal((m, r)) @ rng.standard_normal((r, N))
            A += 1e-13 * rng.standard_normal((m, N))
            t0 = time.perf_counter()
            st = compress(A, cfg.tol)
            st.finalize_buffer()
            secs = time.perf_counter() - t0
            s = np.linalg.svd(A, compute_uv=False)
            sv_err = float(np.max(np.abs(st.S - s[:st.k])))
            col_err = float(np.max(np.linalg.norm(st.matrix() - A, axis=0)))
            inter = max([interlacing_violation(e) for e in st.events], default=-math.inf)
            wr.writerow([m, N, r, st.k, st.T_sv, f"{sv_err:.3e}", f"{col_err:.3e}",
                         f"{inter:.3e}", st.floats_stored, f"{secs:.4f}"])
    print(f"wrote {path}")
    return 0


# --- argument handling -------------------------------------------------------
def _grids(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid list {text!r}") from None


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--example", choices=EXAMPLES, default=None)
    common.add_argument("--grids", type=_grids, default=None, help="comma list, e.g. 20,30,40")
    common.add_argument("--dt-rule", dest="dt_rule", default=None,
                        help="half_h, quarter_h, four_h or a fixed step")
    common.add_argument("--tol", type=_positive, default=None)
    common.add_argument("--mode", choices=("full", "compressed", "both"), default=None)
    common.add_argument("--T", type=_positive, default=None)
    common.add_argument("--dt", type=_positive, default=None, help="time step for the contraction")
    common.add_argument("--out", default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", default=None, help="key = value file with [sections]")
    common.add_argument("--alpha", type=_positive, default=None)
    common.add_argument("--lambda", dest="lam", type=float, default=None)
    common.add_argument("--N", type=int, default=None)
    common.add_argument("--refine-levels", dest="refine_levels", type=int, default=None)
    p = argparse.ArgumentParser(prog="oldroyd-isvd", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "convergence", "compare", "contraction", "cq-probe", "isvd-bench"):
        sub.add_parser(name, parents=[common])
    return p


def load_config_file(path) -> dict:
    """Read ``key = value`` pairs from every section (later sections win)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    with open(path) as fh:
        text = fh.read()
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    cp.read_string(text)
    out = {}
    for sec in cp.sections():
        for k, v in cp[sec].items():
            out[k.strip().lower().replace("-", "_")] = v.strip()
    return out


_TYPES = {"grids": _grids, "tol": float, "T": float, "t": float, "seed": int, "alpha": float,
          "lam": float, "lambda": float, "N": int, "n": int, "dt": float, "refine_levels": int,
          "cell_size": float, "example": str, "dt_rule": str, "mode": str, "out": str}
_ALIASES = {"t": "T", "n": "N", "lambda": "lam"}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        for k, v in load_config_file(args.config).items():
            if k not in _TYPES:
                raise ValueError(f"unknown config key {k!r}")
            values[_ALIASES.get(k, k)] = _TYPES[k](v)
    for k in ("example", "grids", "dt_rule", "tol", "mode", "T", "dt", "out", "seed", "alpha",
              "lam", "N", "refine_levels"):
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    if args.command == "contraction":
        values["example"] = "contraction"
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


COMMANDS = {"run": cmd_run, "convergence": cmd_convergence, "compare": cmd_compare,
            "contraction": cmd_run, "cq-probe": cmd_cq_probe, "isvd-bench": cmd_isvd_bench}


def cli_main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ValueError, OSError, configparser.Error) as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, out)
    except StepError as exc:
        diag = out / "diagnostics.json"
        diag.write_text(json.dumps({"error": str(exc), **exc.diagnostics}, indent=2,
                                   default=_json_default) + "\n")
        print(f"numerical failure: {exc} (details in {diag})", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())

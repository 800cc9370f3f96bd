import json
import math

import numpy as np
import pytest

from oldroyd_isvd import harness
from oldroyd_isvd.fespace import build_mini_space
from oldroyd_isvd.harness import (TABLE_HEADER, RunConfig, TableRow, cli_main, emit_table,
                                  field_snapshot, rates, read_snapshot, read_table)
from oldroyd_isvd.mesh import DomainSpec, build_mesh
from oldroyd_isvd.stepper import StepError


def test_rates_first_blank_and_values():
    r = rates([10, 20], [4e-2, 1e-2])
    assert math.isnan(r[0])
    assert r[1] == pytest.approx(2.0)
    assert math.isnan(rates([10, 20], [0.0, 1e-3])[1])


def test_table_round_trip(tmp_path):
    rows = [TableRow(20, 1.2345678e-3, 1.2345679e-3, 3e-13, 0.5, 2e-11),
            TableRow(30, 5.5e-4, 5.5e-4, 1e-13, 0.2, 1e-11)]
    path = emit_table(rows, tmp_path / "t.csv", {"config": {"example": "1"}, "dt_rule": "half_h"})
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(TABLE_HEADER)
    assert lines[1].split(",")[2] == ""                        # no rate on the first row
    back = read_table(path)
    assert [r["grid"] for r in back] == [20, 30]
    assert back[0]["err_u"] == pytest.approx(1.2345678e-3, rel=1e-5)
    assert back[1]["rate_u"] == pytest.approx(math.log(1.2345678e-3 / 5.5e-4) / math.log(1.5), rel=1e-5)
    meta = json.loads(path.with_suffix(".json").read_text())
    assert meta["config"] == {"example": "1"} and meta["dt_rule"] == "half_h"
    assert meta["version"].startswith(harness.__version__)


def test_single_row_table(tmp_path):
    path = emit_table([TableRow(20, 1e-3)], tmp_path / "one.csv")
    rec = read_table(path)[0]
    assert rec["grid"] == 20 and math.isnan(rec["rate_u"]) and math.isnan(rec["diff_u"])
    with pytest.raises(ValueError):
        emit_table([], tmp_path / "none.csv")


def test_snapshot_of_zero_field(tmp_path):
    space = build_mini_space(build_mesh(DomainSpec.contraction(corner_refine_levels=0, cell_size=1.0)))
    path = field_snapshot(space, np.zeros(space.n_vel), tmp_path / "f.txt", nx=17, ny=9)
    nx, ny, data = read_snapshot(path)
    assert (nx, ny) == (17, 9) and data.shape == (17 * 9, 4)
    inside = np.isfinite(data[:, 2])
    assert inside.any() and (~inside).any()                      # the contraction is not a box
    assert not np.any(data[inside, 2:])


def test_snapshot_matches_vertex_values(tmp_path):
    space = build_mini_space(build_mesh(DomainSpec.unit_square(4)))
    u = np.random.default_rng(3).standard_normal(space.n_vel)
    nv = space.mesh.n_vertices
    path = field_snapshot(space, u, tmp_path / "f.txt", nx=5, ny=5)
    _, _, data = read_snapshot(path)
    u1, u2 = space.split(u)
    for x, y, a, b in data:
        v = np.flatnonzero(np.all(np.abs(space.mesh.vertices - (x, y)) < 1e-12, axis=1))
        assert len(v) == 1
        assert a == pytest.approx(u1[v[0]], abs=1e-10) and b == pytest.approx(u2[v[0]], abs=1e-10)
    assert v[0] < nv


def test_config_validation():
    RunConfig().validate()
    for bad in (dict(tol=0.0), dict(example="7"), dict(mode="half"), dict(grids=[2]),
                dict(dt_rule="sometimes")):
        with pytest.raises(ValueError):
            RunConfig(**bad).validate()
    assert RunConfig(example="2").resolved_dt_rule() == "four_h"
    assert RunConfig(example="1").resolved_dt_rule() == "half_h"


def test_bad_arguments_exit_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli_main(["run", "--tol", "-1", "--out", str(tmp_path)])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli_main(["run", "--grids", "a,b"])
    assert exc.value.code == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nflavour = mint\n")
    assert cli_main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert cli_main(["convergence", "--example", "contraction", "--out", str(tmp_path)]) == 2


def test_config_file_and_override(tmp_path):
    cfgfile = tmp_path / "c.ini"
    cfgfile.write_text("example = 2   # inline comment\ngrids = 4\nT = 0.1\ntol = 1e-10\n")
    args = harness.build_parser().parse_args(["run", "--config", str(cfgfile), "--tol", "1e-9"])
    cfg = harness.resolve_config(args)
    assert cfg.example == "2" and cfg.grids == [4] and cfg.T == 0.1 and cfg.tol == 1e-9


def test_numerical_failure_exits_1(tmp_path, monkeypatch):
    def boom(config, problem, progress=None):
        raise StepError("solve diverged", {"step": 3, "residual": 1e3})
    monkeypatch.setattr(harness, "run", boom)
    code = cli_main(["run", "--example", "1", "--grids", "4", "--T", "0.1", "--out", str(tmp_path)])
    assert code == 1
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["step"] == 3 and "diverged" in diag["error"]


def test_run_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        assert cli_main(["run", "--example", "2", "--grids", "4", "--T", "0.2", "--out", str(d)]) == 0
        outs.append({p.name: p.read_text() for p in d.glob("*.csv")})
    assert outs[0] == outs[1]
    assert set(outs[0]) == {"run_2_4_full.csv", "run_2_4_compressed.csv", "run_2_4_metrics.csv"}
    assert outs[0]["run_2_4_full.csv"].splitlines()[0] == ",".join(harness.STEP_HEADER)


def test_convergence_and_probe_commands(tmp_path, capsys):
    assert cli_main(["convergence", "--example", "1", "--grids", "4,6", "--T", "0.1",
                     "--mode", "both", "--out", str(tmp_path)]) == 0
    rows = read_table(tmp_path / "convergence_example1.csv")
    assert len(rows) == 2 and rows[1]["diff_u"] <= 1e-9
    meta = json.loads((tmp_path / "convergence_example1.json").read_text())
    assert meta["dt_rule"] == "half_h" and len(meta["steps"]) == 2
    assert cli_main(["cq-probe", "--N", "32", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "cq_probe.csv").read_text().splitlines()
    assert lines[0] == "dt,max_err,order" and len(lines) == 5
    assert len((tmp_path / "cq_weights.csv").read_text().splitlines()) == 34

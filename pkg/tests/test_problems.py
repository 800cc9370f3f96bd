import math

import numpy as np
import pytest

from oldroyd_isvd.fespace import build_mini_space, interpolate_velocity
from oldroyd_isvd.mesh import DomainSpec, build_mesh
from oldroyd_isvd.problems import (CHANNEL_FLUX, boundary_flux, contraction, example1, example2,
                                   mesh_size, time_step)
from oldroyd_isvd.stepper import run


def test_mesh_size_and_dt_rules():
    assert mesh_size(20) == pytest.approx(math.sqrt(2) / 20)
    h = mesh_size(10)
    assert time_step("half_h", 10) == pytest.approx(h / 2)
    assert time_step("quarter_h", 10) == pytest.approx(h / 4)
    assert time_step("four_h", 10) == pytest.approx(4 * h)
    assert time_step(0.01, 10) == 0.01
    assert time_step("0.05", 10) == 0.05
    with pytest.raises(ValueError):
        time_step("eighth_h", 10)


def test_boundary_flux_of_translation_is_zero():
    space = build_mini_space(build_mesh(DomainSpec.unit_square(6)))
    u = interpolate_velocity(space, lambda x, y, t: (1.0 + 0 * x, 2.0 + 0 * y), 0.0)
    assert abs(boundary_flux(space, u, "wall")) <= 1e-13
    # a radial field x has outward flux equal to twice the area
    u = interpolate_velocity(space, lambda x, y, t: (x, y), 0.0)
    assert boundary_flux(space, u, "wall") == pytest.approx(2.0, abs=1e-13)


def test_contraction_boundary_data_carries_exact_flux():
    cfg, prob = contraction(dt=0.1, T=0.1, refine_levels=0, cell_size=0.5, mode="full")
    g = np.zeros(prob.space.n_vel)
    g[prob.dirichlet.indices] = prob.dirichlet.values(0.0)
    assert -boundary_flux(prob.space, g, "inflow") == pytest.approx(CHANNEL_FLUX, abs=1e-12)
    assert boundary_flux(prob.space, g, "outflow") == pytest.approx(CHANNEL_FLUX, abs=1e-12)
    assert boundary_flux(prob.space, g, "wall") == 0.0
    assert any("scaled" in n for n in prob.notes)


def test_contraction_short_run_is_incompressible():
    cfg, prob = contraction(dt=0.05, T=0.25, refine_levels=0, cell_size=0.5, mode="full")
    rep = run(cfg, prob)
    u = rep.primary.u
    assert rep.primary.max_div_residual <= 1e-9
    fin = -boundary_flux(prob.space, u, "inflow")
    fout = boundary_flux(prob.space, u, "outflow")
    assert fin == pytest.approx(CHANNEL_FLUX, abs=1e-10)
    assert fin - fout == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("build", [example1, example2])
def test_manufactured_runs_converge(build):
    # the trigonometric part of the first example is unresolved on a 4 x 4 mesh
    errs = []
    for n in (8, 16):
        cfg, prob = build(n, dt_rule="quarter_h", T=0.25, mode="full")
        errs.append(run(cfg, prob).primary.errors.vel_L2)
    assert errs[1] < errs[0]
    assert math.log2(errs[0] / errs[1]) > 1.0


def test_default_problem_settings():
    cfg, prob = example1(4, T=0.1)
    assert prob.exact.nu == 10.0 and cfg.A.diffusion == 10.0 and cfg.B.diffusion == 1.0
    cfg, prob = example2(40)
    # dt = 4h, then shortened so that N = ceil(T / dt) steps land on T
    assert prob.grid.N == math.ceil(1.0 / (4 * mesh_size(40)))
    assert prob.grid.dt == pytest.approx(1.0 / prob.grid.N)

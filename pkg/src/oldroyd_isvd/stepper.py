"""Crank-Nicolson time stepping with full or compressed velocity history.

Each step solves for the midpoint velocity ``ubar = (u^n + u^{n-1}) / 2`` and
the midpoint pressure::

    (2/dt) M (ubar - u^{n-1}) + A ubar + B (c ubar + h_n) + N(ubar) ubar - D^T p = F(tbar_n)
    D ubar = 0

where ``c ubar`` is the implicit part of the memory rule and ``h_n`` the
history part, a weighted sum of stored snapshots ``u^0..u^{n-1}``. The
history store is either every column (:class:`FullStore`) or an incremental
SVD (:class:`CompressedStore`); both answer the same weighted-sum query, so
the two variants share all code and can run in lockstep.

The velocity block without convection is constant for a run, so it is
factorized once. Convection is resolved by fixed-point iteration on the
transporting field; by default the convection term is lagged to the right
hand side, which reaches the same fixed point as refactorized Oseen steps
at the cost of one triangular solve per iteration. If the lagged iteration
stalls, the step is redone with Oseen iterations.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import (OperatorCoeffs, assemble_A, assemble_B, assemble_convection,
                       assemble_div, assemble_load, assemble_mass, free_block,
                       assemble_operator_scalar, pressure_mean_vector,
                       spectral_radius_stiffness)
from .fespace import DirichletSet, MixedSpace
from .isvd import SvdState
from .kernels import (CqWeights, KernelSpec, Nonsingular, TemperedFractional,
                      averaged_history_weights, cq_build, nonsingular_history_weights)


class StepError(RuntimeError):
    """A time step could not be completed; ``diagnostics`` says why."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("need at least one time step")

    @classmethod
    def from_dt(cls, T: float, dt: float) -> "TimeGrid":
        """Uniform grid with ``N = ceil(T / dt)`` steps (so the step never exceeds ``dt``)."""
        return cls(T, max(1, math.ceil(T / dt - 1e-9)))

    @property
    def dt(self) -> float:
        return self.T / self.N

    def t(self, n: int) -> float:
        return n * self.dt

    def tbar(self, n: int) -> float:
        return (n - 0.5) * self.dt


@dataclass(frozen=True)
class PicardOptions:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_iter: int = 50
    linearization: str = "lagged"    # or "oseen"

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.max_iter < 1:
            raise ValueError("Picard tolerances must be positive")
        if self.linearization not in ("lagged", "oseen"):
            raise ValueError(f"unknown linearization {self.linearization!r}")


@dataclass(frozen=True)
class SchemeConfig:
    kernel: KernelSpec
    A: OperatorCoeffs
    B: OperatorCoeffs = OperatorCoeffs(1.0)
    mode: str = "full"               # full | compressed | both
    tol: float = 1e-12
    picard: PicardOptions = PicardOptions()
    audit: bool = False
    audit_steps: int = 5
    seed: int = 0
    bound_audit: bool = False        # estimate sigma(S) for the perturbation bound

    def __post_init__(self):
        if self.mode not in ("full", "compressed", "both"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")

    @property
    def backends(self) -> tuple[str, ...]:
        return ("full", "compressed") if self.mode == "both" else (self.mode,)


@dataclass
class Problem:
    """Everything a run needs besides the scheme."""

    space: MixedSpace
    grid: TimeGrid
    dirichlet: DirichletSet
    u0: np.ndarray
    forcing: Callable | None = None       # (x, y, t) -> (f1, f2)
    bc_ramp_steps: int = 0
    name: str = "problem"
    exact: object = None
    notes: list = field(default_factory=list)

    def boundary_values(self, n: int) -> np.ndarray:
        vals = self.dirichlet.values(self.grid.t(n))
        if self.bc_ramp_steps and n < self.bc_ramp_steps:
            vals = vals * (n / self.bc_ramp_steps)
        return vals


# --- history backends ------------------------------------------------------
class FullStore:
    """Every snapshot column, preallocated."""

    name = "full"

    def __init__(self, m: int, n_max: int):
        self.U = np.zeros((m, n_max))
        self.n = 0
        self.peak_floats = 0

    def push(self, u):
        self.U[:, self.n] = u
        self.n += 1
        self.peak_floats = max(self.peak_floats, self.floats_stored)

    def weighted_sum(self, w):
        return self.U[:, :self.n] @ w

    @property
    def floats_stored(self) -> int:
        return self.U.shape[0] * self.n

    @property
    def rank(self) -> int:
        return self.n

    T_sv = 0


class CompressedStore:
    """Incremental SVD of the snapshot stream."""

    name = "compressed"

    def __init__(self, m: int, tol: float):
        self.state = SvdState(m, tol)

    def push(self, u):
        self.state.push(u)

    def weighted_sum(self, w):
        return self.state.weighted_sum(w)

    @property
    def n(self) -> int:
        return self.state.n_columns

    @property
    def floats_stored(self) -> int:
        return self.state.floats_stored

    @property
    def peak_floats(self) -> int:
        return self.state.peak_floats

    @property
    def rank(self) -> int:
        return self.state.k

    @property
    def T_sv(self) -> int:
        return self.state.T_sv


# --- linear algebra --------------------------------------------------------
class SaddleSolver:
    """Factorized ``[[K, -D^T], [-D, 0]]`` with velocity Dirichlet rows.

    The pressure is fixed to zero at one vertex while solving and shifted to
    zero mean afterwards, which keeps the matrix sparse; the velocity and the
    pressure gradient do not depend on the gauge.
    """

    def __init__(self, space: MixedSpace, K, D, constrained: np.ndarray, pin: int = 0):
        self.space = space
        self.n_vel = space.n_vel
        self.n = space.n_vel + space.n_pressure
        self.D = D
        self.S = sp.bmat([[K, -D.T], [-D, None]], format="csr")
        self.constrained = np.asarray(constrained, dtype=np.int64)
        self.fixed = np.concatenate([self.constrained, [self.n_vel + pin]])
        keep = np.ones(self.n)
        keep[self.fixed] = 0.0
        self.keep = keep
        Dk = sp.diags(keep)
        mat = (Dk @ self.S @ Dk + sp.diags(1.0 - keep)).tocsc()
        try:
            self.lu = splu(mat)
        except RuntimeError as exc:
            raise StepError(f"saddle matrix factorization failed: {exc}") from exc
        self.mean_weights = pressure_mean_vector(space)

    def solve(self, rhs_u: np.ndarray, values: np.ndarray, rhs_p: np.ndarray | None = None):
        b = np.zeros(self.n)
        b[:self.n_vel] = rhs_u
        if rhs_p is not None:
            b[self.n_vel:] = rhs_p
        g = np.zeros(self.n)
        g[self.constrained] = values
        b = self.keep * (b - self.S @ g) + g
        x = self.lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise StepError("saddle solve produced non-finite values")
        u = x[:self.n_vel]
        p = x[self.n_vel:]
        p = p - (self.mean_weights @ p) / self.mean_weights.sum()
        return u, p


def solve_saddle(space: MixedSpace, K, D, constrained, values, rhs_u, rhs_p=None):
    """One-shot saddle solve; returns velocity and zero-mean pressure."""
    return SaddleSolver(space, K, D, constrained).solve(rhs_u, values, rhs_p)


def divergence_free_projection(space: MixedSpace, f, dirichlet: DirichletSet,
                               t: float = 0.0, values: np.ndarray | None = None) -> np.ndarray:
    """L2 projection of ``f`` onto discretely divergence-free fields with boundary data."""
    M = assemble_mass(space)
    D = assemble_div(space)
    b = assemble_load(space, f, t)
    vals = dirichlet.values(t) if values is None else values
    u, _ = SaddleSolver(space, M, D, dirichlet.indices).solve(b, vals)
    return u


@dataclass
class PicardResult:
    ubar: np.ndarray
    p: np.ndarray
    iterations: int
    linearization: str


def picard_solve(space: MixedSpace, solver: SaddleSolver, rhs_u: np.ndarray,
                 values: np.ndarray, guess: np.ndarray, opts: PicardOptions,
                 K0=None, base: np.ndarray | None = None,
                 rhs_p: np.ndarray | None = None) -> PicardResult:
    """Fixed-point iteration on the transporting field of the convection term.

    The unknown is ``x = ubar - base`` (``base`` defaults to zero), so the
    transporting field is ``w = base + x``. ``solver`` holds the factorized
    system without convection. In lagged mode each iterate solves
    ``S0 x = rhs - N(w) w``; in Oseen mode (``K0`` needed) the system
    ``(K0 + N(w)) x = rhs - N(w) base`` is refactorized. Both stop when the
    increment satisfies ``|dx| <= rel_tol |w| + abs_tol``. ``guess`` and the
    returned ``ubar`` are full fields.
    """
    base = np.zeros(solver.n_vel) if base is None else np.asarray(base, dtype=float)
    x = np.array(guess, dtype=float) - base
    x[solver.constrained] = values
    modes = [opts.linearization]
    if opts.linearization == "lagged" and K0 is not None:
        modes.append("oseen")
    total = 0
    history = []
    for mode in modes:
        for _ in range(opts.max_iter):
            total += 1
            w = base + x
            N = assemble_convection(space, w)
            if mode == "lagged":
                x_new, p = solver.solve(rhs_u - N @ w, values, rhs_p)
            else:
                x_new, p = SaddleSolver(space, K0 + N, solver.D, solver.constrained).solve(
                    rhs_u - N @ base, values, rhs_p)
            delta = float(np.linalg.norm(x_new - x))
            history.append(delta)
            x = x_new
            if delta <= opts.rel_tol * np.linalg.norm(base + x) + opts.abs_tol:
                return PicardResult(base + x, p, total, mode)
            if not np.isfinite(delta):
                break
    raise StepError("Picard iteration did not converge",
                    {"increments": history, "max_iter": opts.max_iter})


# --- time loop ---------------------------------------------------------------
@dataclass
class StepRecord:
    step: int
    t: float
    picard_iters: int
    rank: int
    hist_floats: int
    div_residual: float


@dataclass
class TrackResult:
    name: str
    u: np.ndarray
    p: np.ndarray
    steps: list
    peak_floats: int
    rank: int
    T_sv: int
    errors: object = None
    audit: list = field(default_factory=list)
    store: object = None

    @property
    def max_picard(self) -> int:
        return max((s.picard_iters for s in self.steps), default=0)

    @property
    def max_div_residual(self) -> float:
        return max((s.div_residual for s in self.steps), default=0.0)


@dataclass
class RunReport:
    problem: str
    grid: TimeGrid
    m: int
    tracks: dict
    wall_time: float
    diff_u: float = math.nan
    diff_p: float = math.nan
    sigma_S: float = math.nan
    notes: list = field(default_factory=list)

    @property
    def primary(self) -> TrackResult:
        return next(iter(self.tracks.values()))


class Track:
    """One solution sequence and its history store."""

    def __init__(self, name: str, store, u0: np.ndarray):
        self.name = name
        self.store = store
        self.u0 = u0
        self.u_prev = u0.copy()
        self.u_prev2 = None
        self.p = None
        self.n = 0
        self.steps = []
        self.audit = []
        self.shadow = None


def _memory_setup(kernel: KernelSpec, grid: TimeGrid):
    if isinstance(kernel, Nonsingular):
        return 0.5 * grid.dt * kernel.K_at_0, None
    if isinstance(kernel, TemperedFractional):
        cq = cq_build(kernel.alpha, kernel.lam, grid.N, grid.dt)
        return cq.scale * cq.omega[0], cq
    raise TypeError(f"unsupported kernel {kernel!r}")


def history_weights(kernel: KernelSpec, n: int, grid: TimeGrid, cq: CqWeights | None) -> np.ndarray:
    """Weights on snapshots ``u^0..u^{n-1}`` for the explicit memory part at step ``n``."""
    if cq is None:
        return nonsingular_history_weights(kernel, n, grid.dt)
    return averaged_history_weights(cq, n)


class TimeStepper:
    """Assembled operators plus one :class:`Track` per requested backend."""

    def __init__(self, config: SchemeConfig, problem: Problem):
        self.config, self.problem = config, problem
        space, grid = problem.space, problem.grid
        self.space, self.grid = space, grid
        dt = grid.dt
        self.M = assemble_mass(space)
        self.A = assemble_A(space, config.A)
        self.B = assemble_B(space, config.B)
        self.D = assemble_div(space)
        self.c_imp, self.cq = _memory_setup(config.kernel, grid)
        self.AB = (self.A + self.c_imp * self.B).tocsr()
        self.K0 = ((2.0 / dt) * self.M + self.AB).tocsr()
        self.solver = SaddleSolver(space, self.K0, self.D, problem.dirichlet.indices)
        self.m = space.n_vel
        u0 = np.asarray(problem.u0, dtype=float)
        self.tracks = {}
        for name in config.backends:
            store = FullStore(self.m, grid.N + 1) if name == "full" else CompressedStore(self.m, config.tol)
            tr = Track(name, store, u0)
            store.push(u0)
            if config.audit and name == "compressed":
                tr.shadow = FullStore(self.m, grid.N + 1)
                tr.shadow.push(u0)
            self.tracks[name] = tr
        rng = np.random.default_rng(config.seed)
        self.audit_at = set(rng.choice(np.arange(1, grid.N + 1), size=min(config.audit_steps, grid.N),
                                       replace=False).tolist()) if config.audit else set()

    def load(self, n: int) -> np.ndarray:
        f = self.problem.forcing
        return assemble_load(self.space, f, self.grid.tbar(n)) if f is not None else np.zeros(self.m)

    def step(self, track: Track, n: int, F: np.ndarray | None = None):
        """Advance ``track`` from ``u^{n-1}`` to ``u^n``; returns ``(u^n, pbar^n)``."""
        if n != track.n + 1:
            raise StepError(f"track {track.name} is at step {track.n}, cannot take step {n}")
        cfg, grid, dt = self.config, self.grid, self.grid.dt
        F = self.load(n) if F is None else F
        idx = self.problem.dirichlet.indices
        w = history_weights(cfg.kernel, n, grid, self.cq)
        hist = track.store.weighted_sum(w)
        if track.shadow is not None and n in self.audit_at:
            exact_hist = track.shadow.weighted_sum(w)
            track.audit.append({"step": n, "discrepancy": float(np.linalg.norm(hist - exact_hist)),
                                "bound": (track.store.T_sv + 1) * cfg.tol * float(np.abs(w).sum())})
        if self.cq is not None:
            hist = hist + self.cq.rho_bar(n) * track.u0
        # solve for the increment ubar - u^{n-1}: it is O(dt), so solver
        # roundoff is relative to the change rather than to the field
        u_prev = track.u_prev
        rhs = F - self.B @ hist - self.AB @ u_prev
        values = 0.5 * (self.problem.boundary_values(n) - u_prev[idx])
        guess = u_prev if track.u_prev2 is None else 1.5 * u_prev - 0.5 * track.u_prev2
        try:
            res = picard_solve(self.space, self.solver, rhs, values, guess, cfg.picard, self.K0,
                               base=u_prev, rhs_p=self.D @ u_prev)
        except StepError as exc:
            exc.diagnostics.update(step=n, t=grid.t(n), backend=track.name)
            raise
        u_new = 2.0 * res.ubar - track.u_prev
        div = float(np.linalg.norm(self.D @ res.ubar))
        track.u_prev2, track.u_prev, track.p, track.n = track.u_prev, u_new, res.p, n
        track.store.push(u_new)
        if track.shadow is not None:
            track.shadow.push(u_new)
        track.steps.append(StepRecord(n, grid.t(n), res.iterations, track.store.rank,
                                      track.store.floats_stored, div))
        return u_new, res.p

    def advance(self, n: int) -> None:
        F = self.load(n)
        for tr in self.tracks.values():
            self.step(tr, n, F)


def step_nonsingular(stepper: TimeStepper, track: Track, n: int):
    """One step with the midpoint memory rule; returns ``(u^n, pbar^n)``."""
    if not isinstance(stepper.config.kernel, Nonsingular):
        raise TypeError("step_nonsingular needs a Nonsingular kernel")
    return stepper.step(track, n)


def step_singular(stepper: TimeStepper, track: Track, n: int):
    """One step with convolution quadrature memory; returns ``(u^n, pbar^n)``."""
    if not isinstance(stepper.config.kernel, TemperedFractional):
        raise TypeError("step_singular needs a TemperedFractional kernel")
    return stepper.step(track, n)


def _l2_velocity(M, d):
    return math.sqrt(max(float(d @ (M @ d)), 0.0))


def _l2_pressure(Mp, c, d):
    d = d - (c @ d) / c.sum()
    return math.sqrt(max(float(d @ (Mp @ d)), 0.0))


def run(config: SchemeConfig, problem: Problem, progress: Callable | None = None) -> RunReport:
    """Advance ``problem`` over its time grid with every requested backend."""
    t_start = time.perf_counter()
    st = TimeStepper(config, problem)
    space, grid = st.space, st.grid
    for n in range(1, grid.N + 1):
        st.advance(n)
        if progress is not None:
            progress(n, grid.N)

    results = {}
    for tr in st.tracks.values():
        errors = None
        if problem.exact is not None:
            from .manufactured import error_norms
            errors = error_norms(space, tr.u_prev, tr.p, problem.exact, grid.T,
                                 t_pressure=grid.tbar(grid.N))
        results[tr.name] = TrackResult(tr.name, tr.u_prev, tr.p, tr.steps, tr.store.peak_floats,
                                       tr.store.rank, tr.store.T_sv, errors, tr.audit, tr.store)
    report = RunReport(problem.name, grid, st.m, results, 0.0, notes=list(problem.notes))
    if len(results) == 2:
        full, comp = results["full"], results["compressed"]
        report.diff_u = _l2_velocity(st.M, full.u - comp.u)
        nv = space.mesh.n_vertices
        Mp = st.M[:nv, :nv]
        report.diff_p = _l2_pressure(Mp, st.solver.mean_weights, full.p - comp.p)
    if config.bound_audit:
        idx = problem.dirichlet.indices
        S = free_block(assemble_operator_scalar(space, config.A), idx[idx < space.n_vel_scalar])
        report.sigma_S = spectral_radius_stiffness(S).value
    report.wall_time = time.perf_counter() - t_start
    return report

"""Memory kernels and their time-discrete history weights.

Two families are supported: a smooth kernel ``K(t)`` handled by the midpoint
rule on the Crank-Nicolson grid, and the tempered weakly singular kernel
``K(t) = exp(-lam t) t^(alpha-1) / Gamma(alpha)`` handled by trapezoidal
convolution quadrature with a starting correction ``rho_n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class Nonsingular:
    """Smooth kernel ``K`` with ``K(0)`` finite.

    ``K0`` is ``int_0^1 K`` (``None`` computes it by adaptive quadrature).
    """

    K: Callable[[np.ndarray], np.ndarray]
    name: str = "K"
    K0: float | None = None

    @property
    def K_at_0(self) -> float:
        return float(self.K(np.array(0.0)))

    def integral(self, T: float = 1.0) -> float:
        if self.K0 is not None and T == 1.0:
            return self.K0
        return integrate.quad(lambda s: float(self.K(np.array(s))), 0.0, T, epsabs=1e-13)[0]

    def check(self, T: float, n_samples: int = 257) -> None:
        vals = np.asarray(self.K(np.linspace(0.0, T, n_samples)), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise KernelError(f"kernel {self.name} is not finite on [0, {T}]")
        if np.any(vals < 0):
            raise KernelError(f"kernel {self.name} is negative on [0, {T}]")

    def __call__(self, t):
        return self.K(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class TemperedFractional:
    """``K(t) = exp(-lam t) t^(alpha-1) / Gamma(alpha)`` with ``0 < alpha < 1``."""

    alpha: float
    lam: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise KernelError("alpha must lie strictly inside (0, 1)")
        if self.lam < 0:
            raise KernelError("tempering parameter must be nonnegative")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return np.exp(-self.lam * t) * t ** (self.alpha - 1) / math.gamma(self.alpha)


KernelSpec = Nonsingular | TemperedFractional


def log_kernel(scale: float = 25.0) -> Nonsingular:
    """``scale * ln(1 + t)``; its integral over [0, 1] is ``scale * (2 ln 2 - 1)``."""
    return Nonsingular(lambda t: scale * np.log1p(t), f"{scale:g}ln(1+t)",
                       scale * (2.0 * math.log(2.0) - 1.0))


def exponential_kernel(rho: float, delta: float) -> Nonsingular:
    """``rho * exp(-delta t)``."""
    return Nonsingular(lambda t: rho * np.exp(-delta * t), f"{rho:g}exp(-{delta:g}t)",
                       rho * (1.0 - math.exp(-delta)) / delta if delta else rho)


def midpoint_weights(kernel: Nonsingular, n: int, dt: float) -> np.ndarray:
    """History weights ``w_1..w_n`` of the midpoint memory rule at step ``n``.

    ``w_j = dt K(tbar_n - tbar_j)`` for ``j < n`` and ``w_n = dt K(0) / 2``,
    where ``tbar_j = (j - 1/2) dt``. Index ``j - 1`` of the result holds ``w_j``.
    """
    if n < 1:
        raise KernelError("step index must be >= 1")
    lags = dt * np.arange(n - 1, 0, -1, dtype=float)     # tbar_n - tbar_j, j = 1..n-1
    w = np.empty(n)
    w[:-1] = dt * np.asarray(kernel(lags), dtype=float)
    w[-1] = 0.5 * dt * kernel.K_at_0
    return w


def cq_sigma(alpha: float, s_max: int) -> np.ndarray:
    """Coefficients of ``(1 - z)^(-alpha)``: ``sigma_s = sigma_{s-1} (alpha + s - 1) / s``."""
    s = np.arange(1, s_max + 1, dtype=float)
    return np.concatenate([[1.0], np.cumprod((alpha + s - 1.0) / s)])


def cq_beta(alpha: float, s_max: int) -> np.ndarray:
    """Coefficients of ``(1 + z)^alpha``: ``beta_s = beta_{s-1} (alpha - s + 1) / s``."""
    s = np.arange(1, s_max + 1, dtype=float)
    return np.concatenate([[1.0], np.cumprod((alpha - s + 1.0) / s)])


@dataclass(frozen=True)
class CqWeights:
    """Trapezoidal convolution quadrature weights for ``n = 0..N``."""

    alpha: float
    lam: float
    dt: float
    omega0: np.ndarray = field(repr=False)   # untempered weights
    omega: np.ndarray = field(repr=False)    # tempered weights
    rho: np.ndarray = field(repr=False)      # starting corrections

    @property
    def N(self) -> int:
        return len(self.omega) - 1

    @property
    def scale(self) -> float:
        """``dt^alpha``, the common factor of every history weight."""
        return self.dt ** self.alpha

    def rho_bar(self, n: int) -> float:
        """Averaged correction ``(rho_n + rho_{n-1}) / 2`` for ``n >= 1``."""
        return 0.5 * (self.rho[n] + self.rho[n - 1])

    def rho_literal(self) -> np.ndarray:
        """Correction by its defining double expression (for cross-checks)."""
        t = self.dt * np.arange(self.N + 1)
        a = self.alpha
        out = np.empty(self.N + 1)
        for n in range(self.N + 1):
            damp = np.exp(-self.lam * (t[n] - t[:n + 1]))
            out[n] = (math.exp(-self.lam * t[n]) * t[n] ** a / math.gamma(a + 1)
                      - self.scale * np.sum(damp * self.omega[:n + 1]))
        return out


def cq_build(alpha: float, lam: float, N: int, dt: float) -> CqWeights:
    """Weights ``omega_n`` and corrections ``rho_n`` for ``n = 0..N``.

    ``omega_n^(a,0) = 2^-a sum_s sigma_s beta_{n-s}`` (direct convolution),
    ``omega_n = exp(-lam t_n) omega_n^(a,0)`` and
    ``rho_n = exp(-lam t_n) (t_n^a / Gamma(a+1) - dt^a sum_{p<=n} omega_p^(a,0))``,
    which is the defining formula after cancelling the tempering factors.
    """
    if N < 1:
        raise KernelError("N must be >= 1")
    TemperedFractional(alpha, lam)
    sig = cq_sigma(alpha, N)
    bet = cq_beta(alpha, N)
    omega0 = 2.0 ** (-alpha) * np.convolve(sig, bet)[:N + 1]
    t = dt * np.arange(N + 1)
    damp = np.exp(-lam * t)
    omega = damp * omega0
    rho = damp * (t ** alpha / math.gamma(alpha + 1.0) - dt ** alpha * np.cumsum(omega0))
    return CqWeights(alpha, lam, dt, omega0, omega, rho)


def cq_apply(w: CqWeights, history, n: int, u0) -> np.ndarray:
    """``Q_n = dt^a sum_{p=0}^n omega_p u^{n-p} + rho_n u^0``.

    ``history`` is a sequence (or 2-D array with columns) giving ``u^0..u^n``.
    """
    if n > w.N:
        raise KernelError(f"weights built for N={w.N}, asked for n={n}")
    cols = _columns(history, n)
    out = w.rho[n] * np.asarray(u0, dtype=float)
    for p in range(n + 1):
        out = out + w.scale * w.omega[p] * cols[n - p]
    return out


def _columns(history, n: int):
    if isinstance(history, np.ndarray) and history.ndim == 2:
        if history.shape[1] <= n:
            raise KernelError(f"history has {history.shape[1]} columns, need {n + 1}")
        return [history[:, j] for j in range(n + 1)]
    if len(history) <= n:
        raise KernelError(f"history has {len(history)} columns, need {n + 1}")
    return [np.asarray(history[j], dtype=float) for j in range(n + 1)]


def averaged_history_weights(w: CqWeights, n: int) -> np.ndarray:
    """Snapshot weights of ``dt^a sum_{p=1}^n omega_p ubar^{n-p}`` on ``u^0..u^{n-1}``.

    ``ubar^j = (u^j + u^{j-1}) / 2`` with ``u^{-1} = 0``; the implicit
    ``p = 0`` term and the ``rho`` correction are not included.
    """
    c = np.zeros(n)
    om = w.omega
    i = np.arange(n)
    c += om[n - i]                         # ubar^{i} via p = n - i
    c[:n - 1] += om[n - 1 - i[:n - 1]]     # ubar^{i+1} via p = n - i - 1 >= 1
    return 0.5 * w.scale * c


def nonsingular_history_weights(kernel: Nonsingular, n: int, dt: float) -> np.ndarray:
    """Snapshot weights of ``dt sum_{j<n} K(tbar_n - tbar_j) ubar^j`` on ``u^0..u^{n-1}``."""
    wj = midpoint_weights(kernel, n, dt)[:-1]          # j = 1..n-1
    c = np.zeros(n)
    c[1:] += 0.5 * wj                                  # u^j
    c[:-1] += 0.5 * wj                                 # u^{j-1}
    return c


def fractional_integral_reference(alpha: float, lam: float, phi: Callable[[float], float],
                                  t: float, epsabs: float = 1e-12) -> float:
    """``int_0^t K(t - s) phi(s) ds`` by adaptive quadrature.

    The endpoint singularity is removed with ``s = t - tau^(1/alpha)``, giving
    the smooth integrand ``exp(-lam r) phi(t - r) / (alpha Gamma(alpha))`` with
    ``r = tau^(1/alpha)`` over ``tau in [0, t^alpha]``.
    """
    if t == 0.0:
        return 0.0
    c = 1.0 / (alpha * math.gamma(alpha))

    def f(tau):
        r = tau ** (1.0 / alpha)
        return c * math.exp(-lam * r) * phi(t - r)

    val, err = integrate.quad(f, 0.0, t ** alpha, epsabs=epsabs, epsrel=1e-13, limit=200)
    if not np.isfinite(val):
        raise KernelError("reference integration failed")
    return val


def quadrature_error_probe(alpha: float, lam: float, phi: Callable[[float], float],
                           N: int, dt: float) -> float:
    """``max_n |int_0^{t_n} K(t_n - s) phi(s) ds - Q_n(phi)|`` for ``n = 1..N``."""
    w = cq_build(alpha, lam, N, dt)
    t = dt * np.arange(N + 1)
    vals = np.array([phi(float(s)) for s in t])
    # Q_n for all n at once: dt^a (omega * vals)_n + rho_n phi(0)
    Q = w.scale * np.convolve(w.omega, vals)[:N + 1] + w.rho * vals[0]
    ref = np.array([fractional_integral_reference(alpha, lam, phi, float(tn)) for tn in t])
    return float(np.max(np.abs(ref[1:] - Q[1:])))


def probe_orders(alpha: float, lam: float, phi: Callable[[float], float], T: float,
                 Ns: Sequence[int]) -> list[tuple[float, float, float]]:
    """Rows ``(dt, max_err, order)`` over successive step counts (order NaN first)."""
    rows = []
    prev = None
    for N in Ns:
        dt = T / N
        err = quadrature_error_probe(alpha, lam, phi, N, dt)
        order = math.nan if prev is None else math.log(prev[1] / err) / math.log(prev[0] / dt)
        rows.append((dt, err, order))
        prev = (dt, err)
    return rows


def smooth_probe(alpha: float, lam: float):
    """``phi(t) = t^2 exp(-lam t)`` and its exact fractional integral."""
    def phi(t):
        return t * t * math.exp(-lam * t)

    def exact(t):
        return math.exp(-lam * t) * 2.0 * t ** (2.0 + alpha) / math.gamma(3.0 + alpha)

    return phi, exact

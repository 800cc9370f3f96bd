"""Manufactured solutions on the unit square and the matching body forces.

Both solutions solve

    u_t - nu lap(u) - int_0^t K(t - s) lap(u)(s) ds + (u . grad) u + grad p = f,
    div u = 0,  u = 0 on the boundary.

Every spatial derivative below is written out by hand; the tests compare them
against central differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .fespace import MixedSpace, basis_values, quadrature_points
from .kernels import Nonsingular, TemperedFractional, fractional_integral_reference, log_kernel
from .quadrature import triangle_rule

PI = math.pi


# polynomial building blocks: a = x^2 (x-1)^2, b = x (x-1) (2x-1) with a' = 2b
def _a(x):
    return x * x * (x - 1.0) ** 2


def _b(x):
    return x * (x - 1.0) * (2.0 * x - 1.0)


def _db(x):
    return 6.0 * x * x - 6.0 * x + 1.0


def _ddb(x):
    return 12.0 * x - 6.0


def _stream_poly(x, y, c):
    """Field ``c (a(x) b(y), -b(x) a(y))`` with gradient and Laplacian."""
    ax, ay, bx, by = _a(x), _a(y), _b(x), _b(y)
    dbx, dby = _db(x), _db(y)
    val = (c * ax * by, -c * bx * ay)
    grad = ((c * 2.0 * bx * by, c * ax * dby),
            (-c * dbx * ay, -c * bx * 2.0 * by))
    lap = (c * (2.0 * dbx * by + ax * _ddb(y)),
           -c * (_ddb(x) * ay + bx * 2.0 * dby))
    return val, grad, lap


def _stream_trig(x, y):
    """Field ``(2 sin^2(pi x) sin(2 pi y), -2 sin(2 pi x) sin^2(pi y))``."""
    sx2, sy2 = np.sin(PI * x) ** 2, np.sin(PI * y) ** 2
    s2x, s2y = np.sin(2 * PI * x), np.sin(2 * PI * y)
    c2x, c2y = np.cos(2 * PI * x), np.cos(2 * PI * y)
    val = (2.0 * sx2 * s2y, -2.0 * s2x * sy2)
    grad = ((2.0 * PI * s2x * s2y, 4.0 * PI * sx2 * c2y),
            (-4.0 * PI * c2x * sy2, -2.0 * PI * s2x * s2y))
    lap = (4.0 * PI ** 2 * c2x * s2y - 8.0 * PI ** 2 * sx2 * s2y,
           8.0 * PI ** 2 * s2x * sy2 - 4.0 * PI ** 2 * s2x * c2y)
    return val, grad, lap


def _pressure(x, y, t):
    return 10.0 * (2 * x - 1) * (2 * y - 1) * math.cos(t)


def _pressure_grad(x, y, t):
    c = math.cos(t)
    return 20.0 * (2 * y - 1) * c, 20.0 * (2 * x - 1) * c


class ExactSolution:
    """Common interface; subclasses provide the velocity pieces and memory term."""

    name = "exact"
    nu = 1.0
    kernel = None

    def velocity(self, x, y, t):
        raise NotImplementedError

    def velocity_t(self, x, y, t):
        raise NotImplementedError

    def velocity_grad(self, x, y, t):
        raise NotImplementedError

    def velocity_lap(self, x, y, t):
        raise NotImplementedError

    def memory(self, x, y, t):
        """``int_0^t K(t - s) lap(u)(s) ds``."""
        raise NotImplementedError

    def pressure(self, x, y, t):
        return _pressure(x, y, t)

    def pressure_grad(self, x, y, t):
        return _pressure_grad(x, y, t)

    def divergence(self, x, y, t):
        g = self.velocity_grad(x, y, t)
        return g[0][0] + g[1][1]

    def forcing(self, x, y, t):
        u1, u2 = self.velocity(x, y, t)
        ut = self.velocity_t(x, y, t)
        lap = self.velocity_lap(x, y, t)
        mem = self.memory(x, y, t)
        g = self.velocity_grad(x, y, t)
        gp = self.pressure_grad(x, y, t)
        out = []
        for i in range(2):
            conv = u1 * g[i][0] + u2 * g[i][1]
            out.append(ut[i] - self.nu * lap[i] - mem[i] + conv + gp[i])
        return tuple(out)

    # callables in the (x, y, t) -> (v1, v2) convention used by fespace
    def velocity_field(self):
        return lambda x, y, t: self.velocity(x, y, t)

    def forcing_field(self):
        return lambda x, y, t: self.forcing(x, y, t)


class Example1(ExactSolution):
    """``u = t g + w`` with polynomial ``g``, trigonometric ``w``; ``nu = 10``.

    The default kernel is ``25 ln(1 + t)`` paired with ``B = -lap``.
    """

    name = "example1"

    def __init__(self, kernel: Nonsingular | None = None, nu: float = 10.0):
        self.kernel = kernel or log_kernel(25.0)
        self.nu = nu
        self._cache = {}

    def velocity(self, x, y, t):
        (g1, g2), _, _ = _stream_poly(x, y, 5.0)
        (w1, w2), _, _ = _stream_trig(x, y)
        return t * g1 + w1, t * g2 + w2

    def velocity_t(self, x, y, t):
        return _stream_poly(x, y, 5.0)[0]

    def velocity_grad(self, x, y, t):
        _, G, _ = _stream_poly(x, y, 5.0)
        _, Wg, _ = _stream_trig(x, y)
        return tuple(tuple(t * G[i][j] + Wg[i][j] for j in range(2)) for i in range(2))

    def velocity_lap(self, x, y, t):
        _, _, lg = _stream_poly(x, y, 5.0)
        _, _, lw = _stream_trig(x, y)
        return t * lg[0] + lw[0], t * lg[1] + lw[1]

    def memory_integrals(self, t: float) -> tuple[float, float]:
        """``I0 = int_0^t K`` and ``I1 = int_0^t K(s) (t - s) ds`` by adaptive quadrature."""
        if t not in self._cache:
            if t == 0.0:
                self._cache[t] = (0.0, 0.0)
            else:
                K = self.kernel
                i0 = integrate.quad(lambda s: float(K(s)), 0.0, t, epsabs=1e-14, epsrel=1e-13)[0]
                i1 = integrate.quad(lambda s: float(K(s)) * (t - s), 0.0, t,
                                    epsabs=1e-14, epsrel=1e-13)[0]
                self._cache[t] = (i0, i1)
        return self._cache[t]

    def memory(self, x, y, t):
        i0, i1 = self.memory_integrals(t)
        _, _, lg = _stream_poly(x, y, 5.0)
        _, _, lw = _stream_trig(x, y)
        return lg[0] * i1 + lw[0] * i0, lg[1] * i1 + lw[1] * i0


def log_kernel_integrals(t: float, scale: float = 25.0) -> tuple[float, float]:
    """Closed forms of ``I0`` and ``I1`` for ``K = scale ln(1 + t)``."""
    L = math.log1p(t)
    i0 = scale * ((1 + t) * L - t)
    i1 = scale * (0.5 * (1 + t) ** 2 * L - 0.75 * t * t - 0.5 * t)
    return i0, i1


class Example2(ExactSolution):
    """``u = phi(t) G`` with ``phi = t^(2+a) exp(-lam t) / Gamma(3+a)``; ``nu = 1``.

    Kernel ``exp(-lam t) t^(a-1) / Gamma(a)``; the memory term has the closed
    form ``lap(G) exp(-lam t) t^(2+2a) / Gamma(3+2a)``.
    """

    name = "example2"

    def __init__(self, alpha: float = 0.5, lam: float = 0.5, nu: float = 1.0):
        self.kernel = TemperedFractional(alpha, lam)
        self.alpha, self.lam, self.nu = alpha, lam, nu

    def phi(self, t):
        a, lam = self.alpha, self.lam
        return t ** (2 + a) * math.exp(-lam * t) / math.gamma(3 + a)

    def dphi(self, t):
        a, lam = self.alpha, self.lam
        return math.exp(-lam * t) * ((2 + a) * t ** (1 + a) - lam * t ** (2 + a)) / math.gamma(3 + a)

    def memory_scalar(self, t):
        a, lam = self.alpha, self.lam
        return math.exp(-lam * t) * t ** (2 + 2 * a) / math.gamma(3 + 2 * a)

    def memory_scalar_quadrature(self, t):
        """The same scalar by direct quadrature of the defining convolution."""
        return fractional_integral_reference(self.alpha, self.lam, self.phi, t)

    def velocity(self, x, y, t):
        (g1, g2), _, _ = _stream_poly(x, y, -10.0)
        f = self.phi(t)
        return f * g1, f * g2

    def velocity_t(self, x, y, t):
        (g1, g2), _, _ = _stream_poly(x, y, -10.0)
        f = self.dphi(t)
        return f * g1, f * g2

    def velocity_grad(self, x, y, t):
        _, G, _ = _stream_poly(x, y, -10.0)
        f = self.phi(t)
        return tuple(tuple(f * G[i][j] for j in range(2)) for i in range(2))

    def velocity_lap(self, x, y, t):
        _, _, lg = _stream_poly(x, y, -10.0)
        f = self.phi(t)
        return f * lg[0], f * lg[1]

    def memory(self, x, y, t):
        _, _, lg = _stream_poly(x, y, -10.0)
        m = self.memory_scalar(t)
        return m * lg[0], m * lg[1]


def exact_example1(kernel: Nonsingular | None = None) -> Example1:
    return Example1(kernel)


def exact_example2(alpha: float = 0.5, lam: float = 0.5) -> Example2:
    return Example2(alpha, lam)


def forcing(example: ExactSolution, t: float):
    """Body force at time ``t`` as a function of ``(x, y)``."""
    return lambda x, y: example.forcing(x, y, t)


@dataclass(frozen=True)
class ErrorNorms:
    vel_L2: float
    pres_L2: float


def error_norms(space: MixedSpace, u: np.ndarray, p: np.ndarray | None,
                exact: ExactSolution, t: float, t_pressure: float | None = None,
                degree: int = 10) -> ErrorNorms:
    """L2 errors of a discrete velocity/pressure pair against the exact fields.

    Integrals use a degree-``degree`` rule on every triangle. Both pressures
    are shifted to zero mean before comparison; ``t_pressure`` defaults to
    ``t``.
    """
    rule = triangle_rule(degree)
    phi = basis_values(rule.bary)                          # (nq, 4)
    xq = quadrature_points(space, rule.bary)
    X, Y = xq[..., 0], xq[..., 1]
    jw = 2.0 * space.areas[:, None] * rule.weights
    ld = space.local_dofs
    u1, u2 = space.split(u)
    e1, e2 = exact.velocity(X, Y, t)
    d1 = u1[ld] @ phi.T - e1
    d2 = u2[ld] @ phi.T - e2
    vel = math.sqrt(float(np.sum(jw * (d1 * d1 + d2 * d2))))
    pres = math.nan
    if p is not None:
        tp = t if t_pressure is None else t_pressure
        area = float(jw.sum())
        ph = np.asarray(p)[space.mesh.triangles] @ phi[:, :3].T
        pe = np.broadcast_to(exact.pressure(X, Y, tp), X.shape)
        ph = ph - np.sum(jw * ph) / area
        pe = pe - np.sum(jw * pe) / area
        pres = math.sqrt(float(np.sum(jw * (ph - pe) ** 2)))
    return ErrorNorms(vel, pres)

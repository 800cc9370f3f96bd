"""Sparse assembly of the Mini element operators.

All velocity operators act on both components identically, so they are
assembled once as a scalar ``(n_vel_scalar, n_vel_scalar)`` matrix and
lifted with :func:`vector_block`. Element loops are vectorized over
triangles; the CSR pattern for the 4x4 local blocks is computed once per
space and reused, so repeated assembly (convection inside Picard) only pays
for a ``bincount``. Summation order is fixed, which makes assembled values
reproducible bit for bit.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .fespace import MixedSpace, basis_gradients, basis_values, quadrature_points
from .quadrature import QuadratureRule, triangle_rule

Coefficient = float | Callable | np.ndarray | None


@dataclass(frozen=True)
class OperatorCoeffs:
    """Coefficients of a second-order operator on each velocity component.

    ``diffusion`` is a scalar, a constant 2x2 matrix, or a callable
    ``(x, y) -> array (..., 2, 2)``; ``advection`` is ``None`` or a callable
    ``(x, y) -> (b1, b2)``; ``reaction`` is a scalar or ``(x, y) -> array``.
    The weak form is ``sum_ij (d_ij du/dx_i, dv/dx_j) + (b . grad u, v) + (r u, v)``.
    """

    diffusion: Coefficient = 1.0
    advection: Callable | None = None
    reaction: Coefficient = 0.0

    @classmethod
    def laplacian(cls, c: float) -> "OperatorCoeffs":
        return cls(diffusion=c)

    def check_elliptic(self, points: np.ndarray) -> tuple[float, float]:
        """Sampled (min, max) eigenvalue of the symmetric diffusion tensor."""
        D = _tensor_at(self.diffusion, points[:, 0], points[:, 1])
        if not np.allclose(D, np.swapaxes(D, -1, -2)):
            raise ValueError("diffusion tensor is not symmetric")
        ev = np.linalg.eigvalsh(D)
        r = _scalar_at(self.reaction, points[:, 0], points[:, 1])
        if np.any(r < 0):
            raise ValueError("reaction coefficient must be nonnegative")
        return float(ev.min()), float(ev.max())


def _scalar_at(c, x, y):
    if c is None:
        return np.zeros_like(x)
    if callable(c):
        return np.broadcast_to(np.asarray(c(x, y), dtype=float), x.shape)
    return np.full(x.shape, float(c))


def _tensor_at(c, x, y):
    if callable(c):
        out = np.asarray(c(x, y), dtype=float)
        return np.broadcast_to(out, x.shape + (2, 2))
    c = np.asarray(c, dtype=float)
    if c.ndim == 0:
        c = c * np.eye(2)
    return np.broadcast_to(c, x.shape + (2, 2))


class _Pattern:
    """CSR pattern for local (nt, a, b) blocks scattered to (rows, cols)."""

    def __init__(self, row_dofs, col_dofs, shape):
        nt, a = row_dofs.shape
        b = col_dofs.shape[1]
        rows = np.repeat(row_dofs[:, :, None], b, axis=2).ravel()
        cols = np.repeat(col_dofs[:, None, :], a, axis=1).ravel()
        keys = rows.astype(np.int64) * shape[1] + cols
        uniq, self.inverse = np.unique(keys, return_inverse=True)
        self.indices = (uniq % shape[1]).astype(np.int32)
        r = uniq // shape[1]
        self.indptr = np.searchsorted(r, np.arange(shape[0] + 1)).astype(np.int32)
        self.shape = shape
        self.nnz = len(uniq)

    def build(self, local: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.inverse, weights=local.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


class _Cache:
    """Per-space quadrature tables shared by all assemblers."""

    def __init__(self, space: MixedSpace, rule: QuadratureRule):
        self.owner = weakref.ref(space)
        self.rule = rule
        self.phi = basis_values(rule.bary)                      # (nq, 4)
        self.grad = basis_gradients(space, rule.bary)           # (nt, nq, 4, 2)
        self.jw = 2.0 * space.areas[:, None] * rule.weights     # (nt, nq)
        self.xq = quadrature_points(space, rule.bary)           # (nt, nq, 2)
        ld = space.local_dofs
        self.vel = _Pattern(ld, ld, (space.n_vel_scalar, space.n_vel_scalar))
        self.div = _Pattern(space.mesh.triangles, ld, (space.n_pressure, space.n_vel_scalar))


_caches: dict[tuple[int, int], _Cache] = {}


def _cache(space: MixedSpace, degree: int = 6) -> _Cache:
    key = (id(space), degree)
    c = _caches.get(key)
    if c is None or c.owner() is not space:     # ids are recycled after collection
        c = _Cache(space, triangle_rule(degree))
        _caches[key] = c
    return c


def vector_block(S: sp.spmatrix) -> sp.csr_matrix:
    """Lift a scalar component matrix to both velocity components."""
    return sp.block_diag([S, S], format="csr")


def assemble_mass_scalar(space: MixedSpace) -> sp.csr_matrix:
    c = _cache(space)
    local = np.einsum("tq,qi,qj->tij", c.jw, c.phi, c.phi)
    return c.vel.build(local)


def assemble_mass(space: MixedSpace) -> sp.csr_matrix:
    """Velocity mass matrix ``(n_vel, n_vel)``."""
    return vector_block(assemble_mass_scalar(space))


def assemble_operator_scalar(space: MixedSpace, coeffs: OperatorCoeffs) -> sp.csr_matrix:
    c = _cache(space)
    X, Y = c.xq[..., 0], c.xq[..., 1]
    D = _tensor_at(coeffs.diffusion, X, Y)                       # (nt, nq, 2, 2)
    # entry (i, j) = int d_kl d_k(phi_j) d_l(phi_i)
    local = np.einsum("tq,tqkl,tqjk,tqil->tij", c.jw, D, c.grad, c.grad)
    if coeffs.advection is not None:
        b1, b2 = coeffs.advection(X, Y)
        bvec = np.stack([np.broadcast_to(b1, X.shape), np.broadcast_to(b2, X.shape)], axis=-1)
        local += np.einsum("tq,tqk,tqjk,qi->tij", c.jw, bvec, c.grad, c.phi)
    r = _scalar_at(coeffs.reaction, X, Y)
    if np.any(r != 0):
        local += np.einsum("tq,qi,qj->tij", c.jw * r, c.phi, c.phi)
    return c.vel.build(local)


def assemble_A(space: MixedSpace, coeffs: OperatorCoeffs) -> sp.csr_matrix:
    """Matrix of the symmetric elliptic form on the velocity space."""
    return vector_block(assemble_operator_scalar(space, coeffs))


def assemble_B(space: MixedSpace, coeffs: OperatorCoeffs) -> sp.csr_matrix:
    """Matrix of the memory operator form (possibly nonsymmetric)."""
    return vector_block(assemble_operator_scalar(space, coeffs))


def assemble_div(space: MixedSpace) -> sp.csr_matrix:
    """``D[i, j] = int q_i div(phi_j)``, shape ``(n_pressure, n_vel)``."""
    c = _cache(space)
    q = c.phi[:, :3]
    blocks = []
    for k in range(2):
        local = np.einsum("tq,qi,tqj->tij", c.jw, q, c.grad[..., k])
        blocks.append(c.div.build(local))
    return sp.hstack(blocks, format="csr")


def pressure_mean_vector(space: MixedSpace) -> np.ndarray:
    """``int q_i`` for each pressure basis function."""
    w = np.zeros(space.n_pressure)
    np.add.at(w, space.mesh.triangles.ravel(), np.repeat(space.areas / 3.0, 3))
    return w


def assemble_convection_scalar(space: MixedSpace, w: np.ndarray) -> sp.csr_matrix:
    """Scalar block of the skew convection form with transporting field ``w``.

    Entry ``(i, j) = 1/2 int (w . grad phi_j) phi_i - 1/2 int (w . grad phi_i) phi_j``.
    """
    c = _cache(space)
    w1, w2 = space.split(np.asarray(w, dtype=float))
    ld = space.local_dofs
    wq = np.stack([w1[ld] @ c.phi.T, w2[ld] @ c.phi.T], axis=-1)     # (nt, nq, 2)
    adv = np.einsum("tqk,tqjk->tqj", wq, c.grad)                      # w . grad phi_j
    half = np.einsum("tq,tqj,qi->tij", 0.5 * c.jw, adv, c.phi)
    local = half - np.swapaxes(half, 1, 2)
    return c.vel.build(local)


def assemble_convection(space: MixedSpace, w: np.ndarray) -> sp.csr_matrix:
    """Velocity matrix ``N(w)`` with ``v^T N(w) v = 0`` for all ``v``."""
    return vector_block(assemble_convection_scalar(space, w))


def assemble_load(space: MixedSpace, f, t: float = 0.0, degree: int = 6) -> np.ndarray:
    """``int f . phi_i`` for every velocity basis function."""
    c = _cache(space, degree)
    X, Y = c.xq[..., 0], c.xq[..., 1]
    f1, f2 = f(X, Y, t)
    out = np.zeros(space.n_vel)
    ld = space.local_dofs
    for k, fk in enumerate((f1, f2)):
        fk = np.broadcast_to(np.asarray(fk, dtype=float), X.shape)
        loc = np.einsum("tq,qi->ti", c.jw * fk, c.phi)
        part = np.bincount(ld.ravel(), weights=loc.ravel(), minlength=space.n_vel_scalar)
        out[k * space.n_vel_scalar:(k + 1) * space.n_vel_scalar] = part
    return out


@dataclass(frozen=True)
class SpectralRadius:
    value: float
    converged: bool
    iterations: int

    def __float__(self):
        return self.value


def spectral_radius_stiffness(A, rtol: float = 1e-6, max_iter: int = 10000,
                              seed: int = 0) -> SpectralRadius:
    """Largest eigenvalue magnitude of a symmetric matrix by power iteration.

    Stops when the Rayleigh quotient changes by less than ``rtol / 10`` relative
    between iterations; ``converged`` is False if ``max_iter`` ran out.
    """
    n = A.shape[0]
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    theta = 0.0
    for it in range(1, max_iter + 1):
        Av = A @ v
        new = float(v @ Av)
        nrm = np.linalg.norm(Av)
        if nrm == 0.0:
            return SpectralRadius(0.0, True, it)
        v = Av / nrm
        if it > 1 and abs(new - theta) <= 0.1 * rtol * abs(new):
            return SpectralRadius(abs(new), True, it)
        theta = new
    return SpectralRadius(abs(theta), False, max_iter)


def free_block(A, constrained: np.ndarray) -> sp.csr_matrix:
    """Submatrix on the unconstrained rows and columns."""
    n = A.shape[0]
    free = np.setdiff1d(np.arange(n), constrained)
    return sp.csr_matrix(A)[free][:, free]

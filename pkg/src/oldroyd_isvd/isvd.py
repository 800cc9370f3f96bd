"""Online truncated SVD of a growing column stream.

The state represents the columns seen so far as ``Q diag(S) [R | W-block]^T``:
finalized columns through the right factor ``R`` and recently accepted
near-dependent columns through their projected coefficients ``W``. A leading
run of columns with norm below ``tol`` is only counted; those columns
reconstruct as exact zeros.

Small dense SVDs use a deterministic sign convention (the first nonzero entry
of each left singular vector is positive), so identical streams produce
bit-identical states.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

REORTH_TOL = 1e-14
S_MAX = 64


class IsvdError(ValueError):
    pass


def _signed_svd(Y: np.ndarray, full: bool):
    U, s, Vt = np.linalg.svd(Y, full_matrices=full)
    V = Vt.T
    for j in range(U.shape[1]):
        col = U[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            U[:, j] = -col
            if j < V.shape[1]:
                V[:, j] = -V[:, j]
    return U, s, V


@dataclass
class RankEvent:
    """Singular values before (``sigma``) and after (``mu``) one rank update."""

    sigma: np.ndarray
    mu: np.ndarray
    p: float
    truncated: bool


@dataclass(frozen=True)
class CompressionReport:
    rank: int
    T_sv: int
    column_error_bound: float
    floats_stored: int
    floats_uncompressed: int
    n_columns: int

    @property
    def ratio(self) -> float:
        return self.floats_stored / max(self.floats_uncompressed, 1)


@dataclass
class SvdState:
    """Mutable incremental SVD state; see the module docstring."""

    m: int
    tol: float
    Q: np.ndarray = None
    S: np.ndarray = None
    R: np.ndarray = None
    W: np.ndarray = None
    n_zero: int = 0
    T_sv: int = 0
    reorth_tol: float = REORTH_TOL
    s_max: int = S_MAX
    events: list = field(default_factory=list)
    record_events: bool = True
    peak_floats: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise IsvdError("tol must be positive")

    # --- sizes -------------------------------------------------------------
    @property
    def initialized(self) -> bool:
        return self.Q is not None

    @property
    def k(self) -> int:
        return 0 if self.Q is None else self.Q.shape[1]

    @property
    def ell(self) -> int:
        return 0 if self.R is None else self.R.shape[0]

    @property
    def s(self) -> int:
        return 0 if self.W is None else self.W.shape[1]

    @property
    def n_columns(self) -> int:
        return self.n_zero + self.ell + self.s

    @property
    def floats_stored(self) -> int:
        k = self.k
        return self.m * k + k + self.ell * k + k * self.s

    # --- updates -----------------------------------------------------------
    def push(self, u: np.ndarray) -> "SvdState":
        u = np.asarray(u, dtype=float)
        if u.shape != (self.m,):
            raise IsvdError(f"expected a column of length {self.m}, got {u.shape}")
        if not np.all(np.isfinite(u)):
            raise IsvdError("non-finite column")
        if not self.initialized:
            nrm = np.linalg.norm(u)
            if nrm < self.tol:
                self.n_zero += 1
            else:
                self.Q = (u / nrm)[:, None]
                self.S = np.array([nrm])
                self.R = np.ones((1, 1))
                self.W = np.zeros((1, 0))
            self._track()
            return self
        d = self.Q.T @ u
        e = u - self.Q @ d
        p = np.linalg.norm(e)
        if p < self.tol:
            self.W = np.column_stack([self.W, d])
            if self.s >= self.s_max:
                self.finalize_buffer()
            self._track()
            return self
        self.finalize_buffer()
        d = self.Q.T @ u
        e = u - self.Q @ d
        p = np.linalg.norm(e)
        if abs(e @ self.Q[:, 0]) / p > self.reorth_tol:
            c = self.Q.T @ e
            e = e - self.Q @ c
            d = d + c
            p = np.linalg.norm(e)
        k = self.k
        Ybar = np.zeros((k + 1, k + 1))
        Ybar[:k, :k] = np.diag(self.S)
        Ybar[:k, k] = d
        Ybar[k, k] = p
        Ub, mu, Vb = _signed_svd(Ybar, full=True)
        truncated = mu[-1] < self.tol
        if self.record_events:
            self.events.append(RankEvent(self.S.copy(), mu.copy(), float(p), bool(truncated)))
        keep = k if truncated else k + 1
        Qe = np.column_stack([self.Q, e / p])
        Rext = np.zeros((self.ell + 1, k + 1))
        Rext[:-1, :k] = self.R
        Rext[-1, k] = 1.0
        self.Q = Qe @ Ub[:, :keep]
        self.S = mu[:keep].copy()
        self.R = Rext @ Vb[:, :keep]
        self.W = np.zeros((keep, 0))
        if truncated:
            self.T_sv += 1
        self._track()
        return self

    def finalize_buffer(self) -> "SvdState":
        """Fold buffered columns into ``Q``, ``S`` and ``R``."""
        if not self.initialized or self.s == 0:
            return self
        k = self.k
        Y = np.column_stack([np.diag(self.S), self.W])
        Uy, sy, Vy = _signed_svd(Y, full=False)
        self.Q = self.Q @ Uy
        self.S = sy
        self.R = np.vstack([self.R @ Vy[:k], Vy[k:]])
        self.W = np.zeros((k, 0))
        self._track()
        return self

    def _track(self):
        self.peak_floats = max(self.peak_floats, self.floats_stored)

    # --- queries -----------------------------------------------------------
    def reconstruct(self, j: int) -> np.ndarray:
        if not 0 <= j < self.n_columns:
            raise IsvdError(f"column {j} out of range [0, {self.n_columns})")
        if j < self.n_zero:
            return np.zeros(self.m)
        j -= self.n_zero
        if j < self.ell:
            return self.Q @ (self.S * self.R[j])
        return self.Q @ self.W[:, j - self.ell]

    def weighted_sum(self, w: np.ndarray) -> np.ndarray:
        """``sum_j w_j reconstruct(j)`` without forming any column."""
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_columns,):
            raise IsvdError(f"weight length {w.shape} does not match {self.n_columns} columns")
        if not self.initialized:
            return np.zeros(self.m)
        wf = w[self.n_zero:self.n_zero + self.ell]
        wb = w[self.n_zero + self.ell:]
        coef = self.S * (self.R.T @ wf)
        if wb.size:
            coef = coef + self.W @ wb
        return self.Q @ coef

    def matrix(self) -> np.ndarray:
        """Dense reconstruction of every represented column (testing aid)."""
        return np.column_stack([self.reconstruct(j) for j in range(self.n_columns)]) \
            if self.n_columns else np.zeros((self.m, 0))

    def orthogonality(self) -> tuple[float, float]:
        """``max|Q^T Q - I|`` and ``max|R^T R - I|``."""
        if not self.initialized:
            return 0.0, 0.0
        k = self.k
        eq = np.abs(self.Q.T @ self.Q - np.eye(k)).max()
        er = np.abs(self.R.T @ self.R - np.eye(k)).max()
        return float(eq), float(er)

    def report(self) -> CompressionReport:
        return CompressionReport(
            rank=self.k,
            T_sv=self.T_sv,
            column_error_bound=(self.T_sv + 1) * self.tol,
            floats_stored=self.floats_stored,
            floats_uncompressed=self.m * self.n_columns,
            n_columns=self.n_columns,
        )

    def dump(self, path) -> None:
        """Plain-text dump: ``m k ell s n_zero T_sv tol``, then S, Q, R, W row-major."""
        with open(path, "w") as fh:
            fh.write(f"{self.m} {self.k} {self.ell} {self.s} {self.n_zero} {self.T_sv} {self.tol!r}\n")
            for name, arr in (("S", self.S), ("Q", self.Q), ("R", self.R), ("W", self.W)):
                arr = np.zeros((0,)) if arr is None else np.atleast_1d(arr)
                fh.write(f"# {name} {' '.join(map(str, arr.shape))}\n")
                rows = arr.reshape(1, -1) if arr.ndim == 1 else arr
                for row in rows:
                    if row.size:
                        fh.write(" ".join(f"{x:.17e}" for x in row) + "\n")


def load_dump(path) -> SvdState:
    """Inverse of :meth:`SvdState.dump`."""
    with open(path) as fh:
        head = fh.readline().split()
        m, k, ell, s, n_zero, T_sv = map(int, head[:6])
        st = SvdState(m, float(head[6]), n_zero=n_zero, T_sv=T_sv)
        arrays = {}
        line = fh.readline()
        while line:
            _, name, *shape = line.split()
            shape = tuple(int(x) for x in shape)
            nrows = 1 if len(shape) == 1 else shape[0]
            size = int(np.prod(shape))
            vals = []
            if size:
                for _ in range(nrows):
                    vals.extend(float(x) for x in fh.readline().split())
            arrays[name] = np.array(vals).reshape(shape)
            line = fh.readline()
    if k:
        st.S, st.Q, st.R, st.W = arrays["S"], arrays["Q"], arrays["R"], arrays["W"]
    return st


def isvd_init(u1: np.ndarray, tol: float) -> SvdState:
    """Start a state from the first column (deferring while columns are below ``tol``)."""
    u1 = np.asarray(u1, dtype=float)
    return SvdState(u1.shape[0], tol).push(u1)


def isvd_push(state: SvdState, u: np.ndarray) -> SvdState:
    return state.push(u)


def isvd_finalize_buffer(state: SvdState) -> SvdState:
    return state.finalize_buffer()


def isvd_reconstruct(state: SvdState, j: int) -> np.ndarray:
    return state.reconstruct(j)


def isvd_weighted_sum(state: SvdState, w: np.ndarray) -> np.ndarray:
    return state.weighted_sum(w)


def isvd_report(state: SvdState) -> CompressionReport:
    return state.report()


def compress(columns, tol: float, **kw) -> SvdState:
    """Push every column of a 2-D array (or iterable of vectors)."""
    cols = columns.T if isinstance(columns, np.ndarray) and columns.ndim == 2 else columns
    st = None
    for c in cols:
        if st is None:
            st = SvdState(len(c), tol, **kw)
        st.push(c)
    return st


def interlacing_violation(ev: RankEvent) -> float:
    """Largest violation of ``mu_{k+1} <= p`` and the interlacing chain."""
    sig, mu = ev.sigma, ev.mu
    k = len(sig)
    v = [mu[k] - ev.p]
    for i in range(k):
        v.append(mu[i + 1] - sig[i])     # mu_{i+1} <= sigma_i
        v.append(sig[i] - mu[i])         # sigma_i <= mu_i
    return float(max(v))


def truncation_stream(m: int, n_columns: int, tol: float, n_events: int, seed: int = 0) -> np.ndarray:
    """Columns that force ``n_events`` singular-value truncations.

    Copies of a unit anchor ``a`` are interleaved with event columns
    ``sigma_1 q_1 + 1.01 tol e`` built from a shadow state fed the same
    stream: ``e`` is orthogonal to its span, so the residual is exactly
    ``1.01 tol``, and the new singular value lands near ``0.7 tol``.
    """
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(m)
    a /= np.linalg.norm(a)
    per = max(1, (n_columns - n_events) // (n_events + 1))
    shadow = SvdState(m, tol, record_events=False)
    cols = []

    def emit(u):
        cols.append(u)
        shadow.push(u)

    for _ in range(n_events):
        for _ in range(per):
            emit(a)
        shadow.finalize_buffer()
        e = rng.standard_normal(m)
        for _ in range(2):
            e -= shadow.Q @ (shadow.Q.T @ e)
        e /= np.linalg.norm(e)
        emit(shadow.S[0] * shadow.Q[:, 0] + 1.01 * tol * e)
    while len(cols) < n_columns:
        emit(a)
    return np.column_stack(cols)

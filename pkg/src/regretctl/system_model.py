"""Time-varying linear-quadratic plant data, validation, and cost evaluation.

The plant is x_{t+1} = A_t x_t + B_u_t u_t + B_w_t w_t with x_0 = 0 and cost
x_T' Q_T x_T + sum_t (x_t' Q_t x_t + u_t' R_t u_t).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class DimensionError(ValueError):
    """A matrix in the system description has the wrong shape."""


class DefinitenessError(ValueError):
    """A cost matrix violates its required (semi)definiteness."""


def psd_sqrt(M):
    """Symmetric PSD square root via eigendecomposition, negative eigenvalues
    clamped to zero."""
    M = np.asarray(M, dtype=float)
    vals, vecs = np.linalg.eigh((M + M.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def pd_inv_sqrt(M):
    """Inverse symmetric square root of a positive-definite matrix."""
    M = np.asarray(M, dtype=float)
    vals, vecs = np.linalg.eigh((M + M.T) / 2.0)
    if np.min(vals) <= 0:
        raise DefinitenessError(
            f"matrix is not positive definite (min eigenvalue {np.min(vals):g})"
        )
    return (vecs / np.sqrt(vals)) @ vecs.T


@dataclass(frozen=True)
class LqSystem:
    """Time-varying LQ plant and cost data.

    All per-step quantities are stacked along the leading (time) axis:
    A: (T, n, n), B_u: (T, n, m), B_w: (T, n, p), Q: (T, n, n), R: (T, m, m),
    Q_T: (n, n). The initial state is identically zero.
    """

    A: np.ndarray
    B_u: np.ndarray
    B_w: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Q_T: np.ndarray
    validated: bool = field(default=False, compare=False)

    @property
    def T(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.B_u.shape[2]

    @property
    def p(self):
        return self.B_w.shape[2]

    @staticmethod
    def time_invariant(A, B_u, B_w, Q, R, Q_T=None, *, horizon):
        """Broadcast a single (A, B_u, B_w, Q, R) across all `horizon` steps."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B_u = np.atleast_2d(np.asarray(B_u, dtype=float))
        B_w = np.atleast_2d(np.asarray(B_w, dtype=float))
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        R = np.atleast_2d(np.asarray(R, dtype=float))
        n = A.shape[0]
        if B_u.shape[0] != n:
            B_u = B_u.reshape(n, -1)
        if B_w.shape[0] != n:
            B_w = B_w.reshape(n, -1)
        Q_T = np.zeros((n, n)) if Q_T is None else np.atleast_2d(np.asarray(Q_T, dtype=float))
        T = int(horizon)
        if T <= 0:
            raise ValueError(f"horizon must be positive, got {T}")
        tile = lambda M: np.broadcast_to(M, (T,) + M.shape).copy()
        return LqSystem(tile(A), tile(B_u), tile(B_w), tile(Q), tile(R), Q_T)

    @staticmethod
    def from_steps(A, B_u, B_w, Q, R, Q_T):
        """Build from per-step lists of matrices."""
        st = lambda ms: np.stack([np.atleast_2d(np.asarray(M, dtype=float)) for M in ms])
        Q_T = np.atleast_2d(np.asarray(Q_T, dtype=float))
        return LqSystem(st(A), st(B_u), st(B_w), st(Q), st(R), Q_T)


@dataclass(frozen=True)
class Trajectory:
    """A realized rollout: states x (T+1, n), controls u (T, m), disturbances
    w (T, p), weighted states s_t = Q_t^{1/2} x_t (T, n), and the total cost."""

    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    s: np.ndarray
    total_cost: float


def _check_shape(name, M, expected, t=None):
    if M.shape != expected:
        where = "" if t is None else f" at t={t}"
        raise DimensionError(
            f"{name}{where} has shape {M.shape}, expected {expected}"
        )


def validate_system(sys: LqSystem, tol_pd: float = 0.0) -> LqSystem:
    """Check dimensions and definiteness; return the system with cost matrices
    symmetry-projected.

    Q_t and Q_T must be PSD (min eigenvalue >= -1e-9*(1+||M||)); R_t must be PD.
    """
    T, n, m, p = sys.T, sys.n, sys.m, sys.p
    _check_shape("A", sys.A, (T, n, n))
    _check_shape("B_u", sys.B_u, (T, n, m))
    _check_shape("B_w", sys.B_w, (T, n, p))
    _check_shape("Q", sys.Q, (T, n, n))
    _check_shape("R", sys.R, (T, m, m))
    _check_shape("Q_T", sys.Q_T, (n, n))
    for t in range(T):
        for name, M, k in (("A", sys.A[t], n), ("Q", sys.Q[t], n)):
            _check_shape(name, M, (k, k), t)
        _check_shape("B_u", sys.B_u[t], (n, m), t)
        _check_shape("B_w", sys.B_w[t], (n, p), t)
        _check_shape("R", sys.R[t], (m, m), t)

    Qs = (sys.Q + np.transpose(sys.Q, (0, 2, 1))) / 2.0
    Rs = (sys.R + np.transpose(sys.R, (0, 2, 1))) / 2.0
    QTs = (sys.Q_T + sys.Q_T.T) / 2.0

    def _min_eig(M):
        return float(np.linalg.eigvalsh(M).min())

    for t in range(T):
        tol_psd = 1e-9 * (1.0 + np.linalg.norm(Qs[t]))
        ev = _min_eig(Qs[t])
        if ev < -tol_psd:
            raise DefinitenessError(
                f"Q at t={t} is not PSD (min eigenvalue {ev:g})"
            )
        ev = _min_eig(Rs[t])
        if ev <= tol_pd:
            raise DefinitenessError(
                f"R at t={t} is not positive definite (min eigenvalue {ev:g})"
            )
    tol_psd = 1e-9 * (1.0 + np.linalg.norm(QTs))
    ev = _min_eig(QTs)
    if ev < -tol_psd:
        raise DefinitenessError(f"Q_T is not PSD (min eigenvalue {ev:g})")

    return replace(sys, Q=Qs, R=Rs, Q_T=QTs, validated=True)


@dataclass(frozen=True)
class NormalizedSystem:
    """An R-normalized system (R_t = I) together with the per-step rescaling
    maps u = R_t^{-1/2} u' between original controls u and normalized u'."""

    system: LqSystem
    R_sqrt: np.ndarray  # (T, m, m), R_t^{1/2}
    R_inv_sqrt: np.ndarray  # (T, m, m), R_t^{-1/2}

    def to_original_u(self, u_norm):
        u_norm = np.asarray(u_norm, dtype=float)
        return np.einsum("tij,tj->ti", self.R_inv_sqrt, u_norm)

    def to_normalized_u(self, u):
        u = np.asarray(u, dtype=float)
        return np.einsum("tij,tj->ti", self.R_sqrt, u)


def normalize_control_weight(sys: LqSystem) -> NormalizedSystem:
    """Rescale controls so that R_t = I: B_u_t' = B_u_t R_t^{-1/2},
    u_t' = R_t^{1/2} u_t. Costs are preserved under the rescaling maps."""
    if not sys.validated:
        sys = validate_system(sys)
    T, m = sys.T, sys.m
    R_sqrt = np.stack([psd_sqrt(sys.R[t]) for t in range(T)])
    R_inv_sqrt = np.stack([pd_inv_sqrt(sys.R[t]) for t in range(T)])
    B_u = np.einsum("tij,tjk->tik", sys.B_u, R_inv_sqrt)
    eye = np.broadcast_to(np.eye(m), (T, m, m)).copy()
    norm_sys = replace(sys, B_u=B_u, R=eye)
    return NormalizedSystem(norm_sys, R_sqrt, R_inv_sqrt)


def evaluate_cost(sys: LqSystem, w, u) -> Trajectory:
    """Roll the dynamics forward from x_0 = 0 under (w, u) and return the full
    trajectory with total cost, including the terminal term x_T' Q_T x_T."""
    T, n = sys.T, sys.n
    w = np.atleast_2d(np.asarray(w, dtype=float).reshape(T, -1))
    u = np.atleast_2d(np.asarray(u, dtype=float).reshape(T, -1))
    if w.shape != (T, sys.p):
        raise DimensionError(f"w has shape {w.shape}, expected {(T, sys.p)}")
    if u.shape != (T, sys.m):
        raise DimensionError(f"u has shape {u.shape}, expected {(T, sys.m)}")
    x = np.zeros((T + 1, n))
    s = np.zeros((T, n))
    cost = 0.0
    for t in range(T):
        s[t] = psd_sqrt(sys.Q[t]) @ x[t]
        cost += x[t] @ sys.Q[t] @ x[t] + u[t] @ sys.R[t] @ u[t]
        x[t + 1] = sys.A[t] @ x[t] + sys.B_u[t] @ u[t] + sys.B_w[t] @ w[t]
    cost += x[T] @ sys.Q_T @ x[T]
    return Trajectory(x=x, u=u, w=w, s=s, total_cost=float(cost))

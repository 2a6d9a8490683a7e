"""Dense block-operator representations and brute-force certificates.

Everything here is O(T^3) and intended for desk-scale verification: building
the causal operators F (controls -> weighted states) and G (disturbances ->
weighted states), the offline-optimal controller in closed form, block-causal
factorization of positive-definite operators, controller probing, and exact
worst-case regret gains.

All operators live in R-normalized control coordinates (R_t = I), so the cost
is exactly ||Fu + Gw||^2 + ||u||^2.

For unstable plants the entries of F and G grow like the state-transition
products, so certificate accuracy degrades roughly as machine epsilon times
||F||^2; trust the certificates only while that product stays well below the
gains being certified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system_model import (
    DefinitenessError,
    LqSystem,
    normalize_control_weight,
    psd_sqrt,
    validate_system,
)

SIZE_CAP = 2000


class SizeCapError(ValueError):
    """The dense oracle refuses instances with T * max(n, m, p) > 2000."""


class CausalityViolationError(ValueError):
    """A probed controller produced a non-causal operator."""


@dataclass(frozen=True)
class OperatorPair:
    """Strictly block-lower-triangular F and G with s = Fu + Gw.

    Row blocks are the weighted states s_0..s_{T-1} (n each), plus one extra
    block row carrying Q_T^{1/2} when the system has a terminal cost. Column
    blocks are u_0..u_{T-1} (m each) for F and w_0..w_{T-1} (p each) for G.
    """

    F: np.ndarray
    G: np.ndarray
    T: int
    n: int
    m: int
    p: int
    n_rows: int  # number of block rows (T or T+1)


def _check_size(sys: LqSystem):
    if sys.T * max(sys.n, sys.m, sys.p) > SIZE_CAP:
        raise SizeCapError(
            f"dense oracle refuses T*max(n,m,p) = "
            f"{sys.T * max(sys.n, sys.m, sys.p)} > {SIZE_CAP}"
        )


def build_operators(sys: LqSystem) -> OperatorPair:
    """Build the dense F and G of a validated, R-normalized system.

    Block (i, j) of F is Q_i^{1/2} A_{i-1}...A_{j+1} B_u_j for j < i (and
    likewise for G with B_w); the terminal cost contributes one extra block
    row Q_T^{1/2} A_{T-1}...A_{j+1} B_._j.
    """
    sys = sys if sys.validated else validate_system(sys)
    if not np.allclose(sys.R, np.eye(sys.m)[None, :, :], atol=1e-12):
        raise ValueError("build_operators requires an R-normalized system (R_t = I)")
    _check_size(sys)
    T, n, m, p = sys.T, sys.n, sys.m, sys.p
    has_terminal = bool(np.any(sys.Q_T != 0.0))
    n_rows = T + 1 if has_terminal else T
    sqQ = [psd_sqrt(sys.Q[t]) for t in range(T)] + [psd_sqrt(sys.Q_T)]
    F = np.zeros((n_rows * n, T * m))
    G = np.zeros((n_rows * n, T * p))
    for j in range(T):
        # propagate the impulse response of (u_j, w_j) forward
        Mu = sys.B_u[j].copy()
        Mw = sys.B_w[j].copy()
        for i in range(j + 1, n_rows):
            F[i * n:(i + 1) * n, j * m:(j + 1) * m] = sqQ[i if i < T else T] @ Mu
            G[i * n:(i + 1) * n, j * p:(j + 1) * p] = sqQ[i if i < T else T] @ Mw
            if i < T:
                Mu = sys.A[i] @ Mu
                Mw = sys.A[i] @ Mw
    return OperatorPair(F=F, G=G, T=T, n=n, m=m, p=p, n_rows=n_rows)


def offline_optimal(ops: OperatorPair, w):
    """Closed-form clairvoyant optimum: u* = -(I + F'F)^{-1} F'G w and
    cost* = w' G'(I + FF')^{-1} G w. Returns (u_stacked, offline_cost)."""
    w = np.asarray(w, dtype=float).reshape(-1)
    F, G = ops.F, ops.G
    Gw = G @ w
    u = -np.linalg.solve(np.eye(F.shape[1]) + F.T @ F, F.T @ Gw)
    cost = float(Gw @ np.linalg.solve(np.eye(F.shape[0]) + F @ F.T, Gw))
    return u, cost


def offline_cost_form(ops: OperatorPair) -> np.ndarray:
    """The quadratic form G'(I + FF')^{-1}G of the offline-optimal cost."""
    F, G = ops.F, ops.G
    M = G.T @ np.linalg.solve(np.eye(F.shape[0]) + F @ F.T, G)
    return (M + M.T) / 2.0


@dataclass(frozen=True)
class CausalFactor:
    """Block-lower-triangular factor M of a positive-definite operator, with
    symmetric positive-definite diagonal blocks. side = "lower_times_upper"
    means M M' = target; side = "upper_times_lower" means M'M = target."""

    M: np.ndarray
    target: np.ndarray
    side: str
    block: int


def causal_factor(target, block: int, side: str = "upper_times_lower") -> CausalFactor:
    """Block Cholesky factorization of a positive-definite block operator with
    symmetric PD diagonal pivots (the convention the Kalman realizations use).

    Pivots are regularized by 1e-12 * mean-diagonal before the square root.
    """
    S = np.asarray(target, dtype=float)
    S = (S + S.T) / 2.0
    N = S.shape[0]
    if N % block != 0:
        raise ValueError(f"operator size {N} is not a multiple of block size {block}")
    nb = N // block
    reg = 1e-12 * np.trace(S) / max(N, 1)
    M = np.zeros_like(S)
    b = block

    def blk(X, i, j):
        return X[i * b:(i + 1) * b, j * b:(j + 1) * b]

    def put(i, j, val):
        M[i * b:(i + 1) * b, j * b:(j + 1) * b] = val

    if side == "lower_times_upper":
        order = range(nb)
        for i in order:
            D = blk(S, i, i) - sum(
                (blk(M, i, k) @ blk(M, i, k).T for k in range(i)), np.zeros((b, b))
            )
            D = (D + D.T) / 2.0 + reg * np.eye(b)
            vals, vecs = np.linalg.eigh(D)
            if vals.min() <= 0:
                raise DefinitenessError(
                    f"operator is not positive definite at pivot block {i} "
                    f"(min eigenvalue {vals.min():g})"
                )
            Dh = (vecs * np.sqrt(vals)) @ vecs.T
            Dh_inv = (vecs / np.sqrt(vals)) @ vecs.T
            put(i, i, Dh)
            for j in range(i + 1, nb):
                off = blk(S, j, i) - sum(
                    (blk(M, j, k) @ blk(M, i, k).T for k in range(i)), np.zeros((b, b))
                )
                put(j, i, off @ Dh_inv)
    elif side == "upper_times_lower":
        for i in range(nb - 1, -1, -1):
            D = blk(S, i, i) - sum(
                (blk(M, k, i).T @ blk(M, k, i) for k in range(i + 1, nb)),
                np.zeros((b, b)),
            )
            D = (D + D.T) / 2.0 + reg * np.eye(b)
            vals, vecs = np.linalg.eigh(D)
            if vals.min() <= 0:
                raise DefinitenessError(
                    f"operator is not positive definite at pivot block {i} "
                    f"(min eigenvalue {vals.min():g})"
                )
            Dh = (vecs * np.sqrt(vals)) @ vecs.T
            Dh_inv = (vecs / np.sqrt(vals)) @ vecs.T
            put(i, i, Dh)
            for j in range(i):
                off = blk(S, i, j) - sum(
                    (blk(M, k, i).T @ blk(M, k, j) for k in range(i + 1, nb)),
                    np.zeros((b, b)),
                )
                put(i, j, Dh_inv @ off)
    else:
        raise ValueError(f"unknown side {side!r}")
    return CausalFactor(M=M, target=S, side=side, block=block)


def causal_part(M, row_block: int, col_block: int) -> np.ndarray:
    """Zero out the strictly upper block triangle (blocks (i, j) with j > i)."""
    M = np.asarray(M, dtype=float)
    out = M.copy()
    nr = M.shape[0] // row_block
    nc = M.shape[1] // col_block
    for i in range(nr):
        for j in range(nc):
            if j > i:
                out[i * row_block:(i + 1) * row_block, j * col_block:(j + 1) * col_block] = 0.0
    return out


def controller_operator(sys: LqSystem, controller, tol: float = 1e-9) -> np.ndarray:
    """Extract the (Tm) x (Tp) operator of a linear causal controller by
    probing it with unit-impulse disturbances.

    The returned operator maps stacked disturbances to stacked R-normalized
    controls. Raises CausalityViolationError if any upper block exceeds tol.
    """
    from .sim_bench import rollout  # local import to avoid a cycle

    sys = sys if sys.validated else validate_system(sys)
    _check_size(sys)
    norm = normalize_control_weight(sys)
    T, m, p = sys.T, sys.m, sys.p
    K = np.zeros((T * m, T * p))
    for j in range(T):
        for c in range(p):
            w = np.zeros((T, p))
            w[j, c] = 1.0
            traj = rollout(sys, controller, w)
            K[:, j * p + c] = norm.to_normalized_u(traj.u).reshape(-1)
    for i in range(T):
        for j in range(i + 1, T):
            blkn = np.abs(K[i * m:(i + 1) * m, j * p:(j + 1) * p]).max()
            if blkn > tol:
                raise CausalityViolationError(
                    f"controller block ({i}, {j}) has magnitude {blkn:g} > {tol:g}"
                )
    return K


@dataclass(frozen=True)
class RegretGainCertificate:
    """Exact worst-case regret gain of a causal linear controller.

    regret_quadratic_form = (FK + G)'(FK + G) + K'K - G'(I + FF')^{-1}G;
    gain is its largest eigenvalue and witness the corresponding unit
    disturbance sequence.
    """

    K: np.ndarray
    regret_quadratic_form: np.ndarray
    gain: float
    witness: np.ndarray


def worst_case_regret_gain(ops: OperatorPair, K) -> RegretGainCertificate:
    """Largest eigenvalue (and witness) of the regret quadratic form of K."""
    K = np.asarray(K, dtype=float)
    F, G = ops.F, ops.G
    closed = F @ K + G
    E = closed.T @ closed + K.T @ K - offline_cost_form(ops)
    E = (E + E.T) / 2.0
    vals, vecs = np.linalg.eigh(E)
    gain = float(vals[-1])
    if -1e-9 < gain < 0.0:
        gain = 0.0
    return RegretGainCertificate(
        K=K, regret_quadratic_form=E, gain=gain, witness=vecs[:, -1]
    )


def worst_case_cost_gain(ops: OperatorPair, K) -> float:
    """Largest eigenvalue of K'K + (FK + G)'(FK + G): the squared H-infinity
    gain from disturbance energy to cost."""
    K = np.asarray(K, dtype=float)
    closed = ops.F @ K + ops.G
    E = closed.T @ closed + K.T @ K
    return float(np.linalg.eigvalsh((E + E.T) / 2.0)[-1])


def h2_operator_form(ops: OperatorPair) -> np.ndarray:
    """The H2-optimal controller as a causal operator.

    With Delta'Delta = I + F'F (Delta causal), the causal Wiener solution of
    min_K ||FK + G||_F^2 + ||K||_F^2 over causal K is
    K = -Delta^{-1} { Delta^{-T} F'G }_+.
    """
    F, G = ops.F, ops.G
    m, p = ops.m, ops.p
    target = np.eye(F.shape[1]) + F.T @ F
    delta = causal_factor(target, block=m, side="upper_times_lower").M
    inner = np.linalg.solve(delta.T, F.T @ G)
    K = -np.linalg.solve(delta, causal_part(inner, m, p))
    return K

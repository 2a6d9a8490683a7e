"""Shared builders for the test suite."""

import numpy as np

from regretctl.system_model import LqSystem, validate_system


def s1(T=3, R=1.0, Q_T=None):
    """The scalar workhorse: A = B_u = B_w = Q = 1, R configurable, T steps."""
    return validate_system(
        LqSystem.time_invariant(
            [[1.0]], [[1.0]], [[1.0]], [[1.0]], [[float(R)]], Q_T, horizon=T
        )
    )


def random_system(seed, n_max=3, m_max=3, p_max=3, T_max=15, stable=True,
                  with_terminal=None):
    """A random validated system; `stable` scales A to spectral radius < 1.

    with_terminal: None draws it from the seed, True/False forces Q_T.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    p = int(rng.integers(1, p_max + 1))
    T = int(rng.integers(2, T_max + 1))
    A = np.zeros((T, n, n))
    B_u = np.zeros((T, n, m))
    B_w = np.zeros((T, n, p))
    Q = np.zeros((T, n, n))
    R = np.zeros((T, m, m))
    for t in range(T):
        M = rng.standard_normal((n, n))
        if stable:
            M *= 0.85 / max(np.abs(np.linalg.eigvals(M)).max(), 1e-6)
        A[t] = M
        B_u[t] = rng.standard_normal((n, m))
        B_w[t] = rng.standard_normal((n, p))
        C = rng.standard_normal((n, n))
        Q[t] = C.T @ C / n
        D = rng.standard_normal((m, m))
        R[t] = D.T @ D / m + 0.5 * np.eye(m)
    if with_terminal is None:
        with_terminal = bool(rng.integers(0, 2))
    if with_terminal:
        E = rng.standard_normal((n, n))
        Q_T = E.T @ E / n
    else:
        Q_T = np.zeros((n, n))
    return validate_system(LqSystem(A, B_u, B_w, Q, R, Q_T))


def random_disturbance(seed, sys, scale=1.0):
    rng = np.random.default_rng(seed)
    return scale * rng.standard_normal((sys.T, sys.p))


def stacked_s(sys, traj):
    """The weighted-state stack matching the operator row layout (terminal
    row included iff the system carries a terminal cost)."""
    from regretctl.system_model import psd_sqrt

    rows = [psd_sqrt(sys.Q[t]) @ traj.x[t] for t in range(sys.T)]
    if np.any(sys.Q_T != 0.0):
        rows.append(psd_sqrt(sys.Q_T) @ traj.x[sys.T])
    return np.concatenate(rows)

"""Controller syntheses: H2, suboptimal/optimal H-infinity, offline
noncausal, and the regret-suboptimal/regret-optimal controller obtained by
reduction to H-infinity synthesis through two Kalman spectral factorizations.

All controllers share one stepping interface: `start(w)` returns a fresh
rollout state (causal controllers ignore w; the offline controller consumes
the full disturbance there), and `step(state, t, x_t, w_t)` returns
(u_t, state'). Controllers with a closed-form linear rollout also expose
`control_sequence(w)` as a fast path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels, riccati
from .system_model import (
    LqSystem,
    NormalizedSystem,
    normalize_control_weight,
    validate_system,
)


class InfeasibleError(ValueError):
    """No controller exists at the requested performance level."""

    def __init__(self, gamma, step=None):
        self.gamma = gamma
        self.step = step
        where = "" if step is None else f" (first failing step t={step})"
        super().__init__(f"synthesis infeasible at gamma={gamma:g}{where}")


class StructuralMismatchError(AssertionError):
    """The synthesized regret controller violates a structural identity."""


def _as_validated(sys: LqSystem) -> LqSystem:
    return sys if sys.validated else validate_system(sys)


class ZeroController:
    causal = True

    def __init__(self, sys: LqSystem):
        self._sys = sys

    def start(self, w=None):
        return None

    def step(self, state, t, x_t, w_t):
        return np.zeros(self._sys.m), state

    def control_sequence(self, w):
        return np.zeros((self._sys.T, self._sys.m))


class FeedbackController:
    """u_t = K_x_t x_t + K_w_t w_t (the H2 and H-infinity central forms)."""

    causal = True

    def __init__(self, sys: LqSystem, K_x, K_w):
        self._sys = sys
        self.K_x = np.asarray(K_x, dtype=float)
        self.K_w = np.asarray(K_w, dtype=float)

    def start(self, w=None):
        return None

    def step(self, state, t, x_t, w_t):
        return self.K_x[t] @ x_t + self.K_w[t] @ w_t, state

    def control_sequence(self, w):
        w = np.asarray(w, dtype=float).reshape(self._sys.T, self._sys.p)
        _, u = kernels.rollout_feedback(
            self._sys.A, self._sys.B_u, self._sys.B_w, self.K_x, self.K_w, w
        )
        return u


def _feedback_gains(sys: LqSystem, tape_P, tape_H):
    T = sys.T
    K_x = np.zeros((T, sys.m, sys.n))
    K_w = np.zeros((T, sys.m, sys.p))
    for t in range(T):
        BtP = sys.B_u[t].T @ tape_P[t + 1]
        K_x[t] = -np.linalg.solve(tape_H[t], BtP @ sys.A[t])
        K_w[t] = -np.linalg.solve(tape_H[t], BtP @ sys.B_w[t])
    return K_x, K_w


def synthesize_h2(sys: LqSystem) -> FeedbackController:
    """H2-optimal controller: u_t = -H_t^{-1} B_u' P_{t+1}(A_t x_t + B_w_t w_t)
    with P from the backward LQR recursion."""
    sys = _as_validated(sys)
    tape = riccati.backward_lqr(sys)
    K_x, K_w = _feedback_gains(sys, tape.P, tape.H)
    ctrl = FeedbackController(sys, K_x, K_w)
    ctrl.tape = tape
    return ctrl


def synthesize_hinf(sys: LqSystem, gamma: float) -> FeedbackController:
    """Suboptimal H-infinity controller at level gamma; raises
    InfeasibleError when the level is unattainable."""
    sys = _as_validated(sys)
    tape = riccati.backward_hinf(sys, gamma)
    if not tape.feasible:
        raise InfeasibleError(gamma, tape.first_infeasible_step)
    K_x, K_w = _feedback_gains(sys, tape.P, tape.H)
    ctrl = FeedbackController(sys, K_x, K_w)
    ctrl.tape = tape
    return ctrl


@dataclass
class GammaSearchResult:
    """Outcome of a bisection on the performance level."""

    gamma_opt: float
    bracket_history: list
    iterations: int
    final_margins: np.ndarray
    tol: float


def _bisect_gamma(feasible, tol, max_doublings=60):
    """Generic bisection: `feasible(gamma)` must be monotone in gamma.
    Returns (gamma_opt, history, iterations)."""
    history = []
    hi = 1.0
    iters = 0
    if feasible(hi):
        lo = None
        g = hi
        while g > 1e-8:
            g /= 2.0
            iters += 1
            if not feasible(g):
                lo = g
                break
            hi = g
        if lo is None:
            # feasible down to ~0: degenerate, essentially zero level
            return hi, history, iters
    else:
        lo = hi
        g = hi
        for _ in range(max_doublings):
            g *= 2.0
            iters += 1
            if feasible(g):
                hi = g
                break
            lo = g
        else:
            raise ArithmeticError(
                f"no feasible level found after {max_doublings} doublings "
                "(degenerate system)"
            )
    while (hi - lo) > tol * hi:
        mid = 0.5 * (hi + lo)
        iters += 1
        if feasible(mid):
            hi = mid
        else:
            lo = mid
        history.append((lo, hi))
    return hi, history, iters


def hinf_optimal(sys: LqSystem, tol: float = 1e-6):
    """Bisection on gamma for the H-infinity-optimal controller.
    Returns (GammaSearchResult, FeedbackController)."""
    sys = _as_validated(sys)

    def feasible(g):
        return riccati.backward_hinf(sys, g).feasible

    gamma_opt, history, iters = _bisect_gamma(feasible, tol)
    ctrl = synthesize_hinf(sys, gamma_opt)
    result = GammaSearchResult(
        gamma_opt=gamma_opt,
        bracket_history=history,
        iterations=iters,
        final_margins=ctrl.tape.margins,
        tol=tol,
    )
    return result, ctrl


class OfflineController:
    """Optimal noncausal (clairvoyant) controller in state-space form:
    u_t = -H_t^{-1} B_u'(P_{t+1} A_t x_t + P_{t+1} B_w_t w_t + v_{t+1}/2)
    where v runs backward over the full disturbance."""

    causal = False

    def __init__(self, sys: LqSystem):
        self._sys = _as_validated(sys)
        self._tape = riccati.backward_lqr(self._sys)

    def plan(self, w):
        sys, tape = self._sys, self._tape
        T, n = sys.T, sys.n
        w = np.asarray(w, dtype=float).reshape(T, sys.p)
        P, H = tape.P, tape.H
        v = np.zeros((T + 1, n))
        for t in range(T - 1, -1, -1):
            S = P[t + 1] - P[t + 1] @ sys.B_u[t] @ np.linalg.solve(
                H[t], sys.B_u[t].T @ P[t + 1]
            )
            # A' S P^{-1} v == A'(I - P B_u H^{-1} B_u') v, avoiding singular P
            carry = sys.A[t].T @ (
                v[t + 1]
                - P[t + 1] @ sys.B_u[t] @ np.linalg.solve(H[t], sys.B_u[t].T @ v[t + 1])
            )
            v[t] = 2.0 * sys.A[t].T @ S @ sys.B_w[t] @ w[t] + carry
        x = np.zeros(n)
        u = np.zeros((T, sys.m))
        for t in range(T):
            rhs = P[t + 1] @ (sys.A[t] @ x + sys.B_w[t] @ w[t]) + 0.5 * v[t + 1]
            u[t] = -np.linalg.solve(H[t], sys.B_u[t].T @ rhs)
            x = sys.A[t] @ x + sys.B_u[t] @ u[t] + sys.B_w[t] @ w[t]
        return u

    def start(self, w=None):
        if w is None:
            raise ValueError("offline controller needs the full disturbance upfront")
        return self.plan(w)

    def step(self, state, t, x_t, w_t):
        return state[t], state

    def control_sequence(self, w):
        return self.plan(w)


def offline_noncausal(sys: LqSystem, w):
    """Optimal control sequence for a fully known disturbance."""
    return OfflineController(sys).plan(w)


@dataclass
class RegretSynthesis:
    """Frozen output of the regret-suboptimal synthesis at level gamma.

    Carries the augmented 2n-dimensional system (Ahat, Bhat_u, Bhat_w, Qhat),
    its backward value tape Phat with Hhat = I + Bhat_u' Phat Bhat_u, the
    embedded forward/backward Kalman tapes, the per-step feasibility margins
    of the associated H-infinity test, and the precomputed step gains.
    """

    gamma: float
    norm: NormalizedSystem
    fwd: riccati.ForwardKalmanTape
    bwd: riccati.BackwardKalmanTape
    Ahat: np.ndarray
    Bhat_u: np.ndarray
    Bhat_w: np.ndarray
    Qhat: np.ndarray
    Phat: np.ndarray
    Hhat: np.ndarray
    margins: np.ndarray
    M_state: np.ndarray  # (T, m, 2n): gain on [zeta; nu]
    M_z: np.ndarray  # (T, m, p): gain on z_t
    feasibility_test: str

    @property
    def feasible(self):
        if np.any(np.linalg.eigvalsh(self.Hhat).min(axis=1) <= 0):
            return False
        return bool(np.all(self.margins < 0.0))

    @property
    def first_infeasible_step(self):
        bad = np.nonzero(self.margins >= 0.0)[0]
        return int(bad[0]) if bad.size else None


class RegretController:
    """Regret-suboptimal controller at a fixed performance level.

    Internally runs the Delta-driver state delta_t producing
    z_t = R_be^{1/2} K_bl' delta_t + R_be^{1/2} w_t; the control depends
    causally on w_0..w_t only.

    The augmented state [zeta_t; nu_t] of the synthesis equals [x_t; delta_t]
    in exact arithmetic, so the realization feeds the measured plant state
    back instead of simulating zeta through a possibly unstable A (rounding
    differences would grow exponentially there); delta only sees the stable
    closed-loop observer matrix Atil.
    """

    causal = True

    def __init__(self, synthesis: RegretSynthesis):
        self.synthesis = synthesis
        self._norm = synthesis.norm

    def start(self, w=None):
        n = self.synthesis.fwd.Atil.shape[1]
        return np.zeros(n)

    def step(self, state, t, x_t, w_t):
        s = self.synthesis
        delta = state
        n = s.fwd.Atil.shape[1]
        norm_sys = self._norm.system
        z = s.bwd.R_be_sqrt[t] @ (s.bwd.K_bl[t].T @ delta + w_t)
        u_norm = s.M_state[t, :, :n] @ x_t + s.M_state[t, :, n:] @ delta + s.M_z[t] @ z
        delta = s.fwd.Atil[t] @ delta + norm_sys.B_w[t] @ w_t
        return self._norm.R_inv_sqrt[t] @ u_norm, delta

    def control_sequence(self, w):
        s = self.synthesis
        norm_sys = self._norm.system
        w = np.asarray(w, dtype=float).reshape(norm_sys.T, norm_sys.p)
        u_norm, _ = kernels.rollout_regret(
            norm_sys.A,
            norm_sys.B_u,
            s.fwd.Atil,
            norm_sys.B_w,
            s.bwd.K_bl,
            s.bwd.R_be_sqrt,
            np.ascontiguousarray(s.M_state[:, :, : norm_sys.n]),
            np.ascontiguousarray(s.M_state[:, :, norm_sys.n :]),
            s.M_z,
            w,
        )
        return self._norm.to_original_u(u_norm)


def synthesize_regret(
    sys: LqSystem, gamma: float, feasibility_test: str = "level1"
) -> RegretSynthesis:
    """Regret-suboptimal synthesis at level gamma.

    feasibility_test selects the H-infinity test applied to the transformed
    system: "level1" runs the full attenuation-level-1 recursion on the
    z-driven system (the reduction's prescription, the default); "printed"
    uses the control-only value recursion with a -gamma^2 margin.
    """
    sys = _as_validated(sys)
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if feasibility_test not in ("level1", "printed"):
        raise ValueError(f"unknown feasibility test {feasibility_test!r}")
    norm = normalize_control_weight(sys)
    nsys = norm.system
    T, n, m, p = nsys.T, nsys.n, nsys.m, nsys.p
    fwd = riccati.forward_kalman(norm)
    bwd = riccati.backward_kalman(norm, fwd, gamma)

    Ahat = np.zeros((T, 2 * n, 2 * n))
    Bhat_u = np.zeros((T, 2 * n, m))
    Bhat_w = np.zeros((T, 2 * n, p))
    Qhat = np.zeros((T, 2 * n, 2 * n))
    for t in range(T):
        BwK = nsys.B_w[t] @ bwd.K_bl[t].T
        Ahat[t, :n, :n] = nsys.A[t]
        Ahat[t, :n, n:] = -BwK
        Ahat[t, n:, n:] = fwd.Atil[t] - BwK
        Bhat_u[t, :n, :] = nsys.B_u[t]
        Bw_scaled = nsys.B_w[t] @ bwd.R_be_inv_sqrt[t]
        Bhat_w[t, :n, :] = Bw_scaled
        Bhat_w[t, n:, :] = Bw_scaled
        Qhat[t, :n, :n] = nsys.Q[t]
    Phat_T = np.zeros((2 * n, 2 * n))
    Phat_T[:n, :n] = nsys.Q_T

    if feasibility_test == "level1":
        level, lqr_form = 1.0, False
    else:
        level, lqr_form = float(gamma), True
    try:
        Phat, Hhat, margins = kernels.regret_phat_backward(
            Ahat, Bhat_u, Bhat_w, Qhat, Phat_T, level, lqr_form
        )
    except np.linalg.LinAlgError:
        # value recursion blew up before a margin turned positive: the level
        # is numerically unattainable
        Phat = np.zeros((T + 1, 2 * n, 2 * n))
        Hhat = np.zeros((T, m, m))
        margins = np.ones(T)

    M_state = np.zeros((T, m, 2 * n))
    M_z = np.zeros((T, m, p))
    if np.all(margins < 0.0):  # gains only exist on a feasible tape
        for t in range(T):
            BtP = Bhat_u[t].T @ Phat[t + 1]
            M_state[t] = -np.linalg.solve(Hhat[t], BtP @ Ahat[t])
            M_z[t] = -np.linalg.solve(Hhat[t], BtP @ Bhat_w[t])
    return RegretSynthesis(
        gamma=float(gamma),
        norm=norm,
        fwd=fwd,
        bwd=bwd,
        Ahat=Ahat,
        Bhat_u=Bhat_u,
        Bhat_w=Bhat_w,
        Qhat=Qhat,
        Phat=Phat,
        Hhat=Hhat,
        margins=margins,
        M_state=M_state,
        M_z=M_z,
        feasibility_test=feasibility_test,
    )


def regret_controller(sys: LqSystem, gamma: float, feasibility_test: str = "level1"):
    """Synthesize at level gamma and wrap as a stepping controller; raises
    InfeasibleError when the level is unattainable."""
    synthesis = synthesize_regret(sys, gamma, feasibility_test)
    if not synthesis.feasible:
        raise InfeasibleError(gamma, synthesis.first_infeasible_step)
    return RegretController(synthesis)


def _is_regret_degenerate(sys: LqSystem):
    """True when the disturbance cannot produce cost (G = 0): either no state
    weighting anywhere or no disturbance input."""
    no_weight = not (np.any(sys.Q != 0.0) or np.any(sys.Q_T != 0.0))
    no_disturbance = not np.any(sys.B_w != 0.0)
    return no_weight or no_disturbance


def regret_optimal(sys: LqSystem, tol: float = 1e-6, feasibility_test: str = "level1"):
    """Bisection on gamma for the regret-optimal controller.
    Returns (GammaSearchResult, controller)."""
    sys = _as_validated(sys)
    if _is_regret_degenerate(sys):
        result = GammaSearchResult(
            gamma_opt=0.0,
            bracket_history=[],
            iterations=0,
            final_margins=np.full(sys.T, -np.inf),
            tol=tol,
        )
        return result, ZeroController(sys)

    def feasible(g):
        return synthesize_regret(sys, g, feasibility_test).feasible

    gamma_opt, history, iters = _bisect_gamma(feasible, tol)
    synthesis = synthesize_regret(sys, gamma_opt, feasibility_test)
    result = GammaSearchResult(
        gamma_opt=gamma_opt,
        bracket_history=history,
        iterations=iters,
        final_margins=synthesis.margins,
        tol=tol,
    )
    return result, RegretController(synthesis)


@dataclass
class StructureReport:
    """Structural identities of the regret synthesis: the top-left block of
    the control-only value recursion follows the plain LQR recursion, and the
    active control law decomposes as the H2 action on zeta plus terms in
    (nu, z) only."""

    max_p11_deviation: float
    max_decomposition_residual: float


def structural_value_tape(synthesis: RegretSynthesis) -> np.ndarray:
    """The control-only backward value recursion of the augmented system
    (P = Qhat + A'PA - A'PB_u H^{-1} B_u'PA); its top-left n x n block
    reproduces the plain LQR value matrices exactly."""
    Phat, _, _ = kernels.regret_phat_backward(
        synthesis.Ahat,
        synthesis.Bhat_u,
        synthesis.Bhat_w,
        synthesis.Qhat,
        synthesis.Phat[-1],
        synthesis.gamma,
        True,
    )
    return Phat


def structure_check(synthesis: RegretSynthesis, tol: float = 1e-8) -> StructureReport:
    """Verify the H2-block identity P_11 == LQR P on the control-only value
    tape, and the control-action decomposition of the active gains; raises
    StructuralMismatchError beyond tol."""
    nsys = synthesis.norm.system
    T, n = nsys.T, nsys.n
    lqr = riccati.backward_lqr(nsys)
    Pstruct = structural_value_tape(synthesis)
    dev = 0.0
    for t in range(T + 1):
        dev = max(dev, float(np.abs(Pstruct[t, :n, :n] - lqr.P[t]).max()))

    rng = np.random.default_rng(0)
    resid = 0.0
    for t in range(T):
        P11 = synthesis.Phat[t + 1, :n, :n]
        P12 = synthesis.Phat[t + 1, :n, n:]
        Hh = synthesis.Hhat[t]
        Bu = nsys.B_u[t]
        Bw = nsys.B_w[t]
        Kbl = synthesis.bwd.K_bl[t]
        Atil = synthesis.fwd.Atil[t]
        isq = synthesis.bwd.R_be_inv_sqrt[t]
        for _ in range(5):
            zeta = rng.standard_normal(n)
            nu = rng.standard_normal(n)
            z = rng.standard_normal(nsys.p)
            full = synthesis.M_state[t] @ np.concatenate([zeta, nu]) + synthesis.M_z[t] @ z
            h2_term = -np.linalg.solve(Hh, Bu.T @ P11 @ (nsys.A[t] @ zeta))
            rest = (
                -np.linalg.solve(Hh, Bu.T @ P11 @ (Bw @ (isq @ z) - Bw @ (Kbl.T @ nu)))
                - np.linalg.solve(
                    Hh, Bu.T @ P12 @ ((Atil - Bw @ Kbl.T) @ nu + Bw @ (isq @ z))
                )
            )
            resid = max(resid, float(np.abs(full - (h2_term + rest)).max()))
    report = StructureReport(max_p11_deviation=dev, max_decomposition_residual=resid)
    if dev > tol:
        raise StructuralMismatchError(
            f"P_11 deviates from the LQR recursion by {dev:g} > {tol:g}"
        )
    if resid > tol:
        raise StructuralMismatchError(
            f"control decomposition residual {resid:g} > {tol:g}"
        )
    return report

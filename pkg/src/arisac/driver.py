"""BCD orchestration: initialization, the three-block loop, and baselines."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .config import SystemConfig, lin2db
from .channels import ChannelSet, steering_vector
from .model import (DesignState, FeasibilityReport, achievable_rates,
                    aris_power, build_cascade_matrices, all_user_channels,
                    herm, user_sinrs, verify_feasibility)
from .modes import MODES, ModeSpec, effective_config
from .rx_beam import p1_solve
from .tx_rs import solve_p2
from .aris import solve_p3
from . import conic


@dataclass
class RunTrace:
    outer: list = field(default_factory=list)
    termination: str = ""

    def gammas(self, key: str) -> np.ndarray:
        return np.array([rec[key] for rec in self.outer])


@dataclass
class RunResult:
    state: DesignState
    mode: str
    status: str                    # ok | infeasible | degraded
    min_echo_sinr: float           # linear
    min_echo_sinr_db: float
    per_user_rates: np.ndarray
    bs_power: float
    aris_power_w: float
    outer_iters: int
    feasibility: FeasibilityReport | None
    trace: RunTrace
    wall_s: float = 0.0


def _mrt_beamformers(cfg: SystemConfig, ch: ChannelSet, phi: np.ndarray,
                     mode: ModeSpec) -> np.ndarray:
    """Maximum-ratio columns at equal power split summing to P_bs_max."""
    if not mode.rate_constraints:
        # sensing beam: strongest transmit direction into the first target
        casc = build_cascade_matrices(cfg, ch, phi)
        Hb1 = casc.H_bq[0]
        _, v = conic.principal_component(herm(Hb1.conj().T @ Hb1))
        return np.sqrt(cfg.P_bs_max) * v[:, None]
    h = all_user_channels(ch, phi)
    S = mode.n_streams(cfg.U)
    p_col = cfg.P_bs_max / S
    cols = [np.sqrt(p_col) * h[u] / np.linalg.norm(h[u]) for u in range(cfg.U)]
    if mode.common_stream:
        hs = h.sum(axis=0)
        cols.append(np.sqrt(p_col) * hs / np.linalg.norm(hs))
    return np.stack(cols, axis=1)


def _power_feasible_amplitude(cfg: SystemConfig, ch: ChannelSet,
                              phi_hat: np.ndarray, F: np.ndarray,
                              mode: ModeSpec) -> float:
    """Largest uniform amplitude a0 <= a_max keeping the surface power in budget.

    With unit-amplitude phases phi_hat the reflect power is A*a^2 + B*a^4
    (signal/noise first pass vs. double-reflection terms), solved in closed
    form for a^2.
    """
    if not mode.ris_power_constraint:
        return cfg.a_max
    G = ch.G.sum(axis=0)
    X = ch.H_br @ F
    t1 = np.linalg.norm(phi_hat[:, None] * X) ** 2
    t4 = 2.0 * cfg.sigma_z2 * cfg.L
    GPX = phi_hat.conj()[:, None] * (G @ (phi_hat[:, None] * X))
    S1 = phi_hat.conj()[:, None] * G * phi_hat[None, :]
    t2 = np.linalg.norm(GPX) ** 2
    t3 = cfg.sigma_z2 * np.linalg.norm(S1) ** 2
    A = float(t1 + t4)
    B = float(t2 + t3)
    P = cfg.P_ris_max
    if B < 1e-300:
        x = P / A if A > 0 else cfg.a_max ** 2
    else:
        x = (-A + np.sqrt(A * A + 4.0 * B * P)) / (2.0 * B)
    return float(min(cfg.a_max, np.sqrt(max(x, 0.0))))


def initialize(cfg: SystemConfig, ch: ChannelSet, mode: ModeSpec) -> DesignState:
    """Power-feasible surface, MRT transmit columns, QoS-targeted allocation.

    Surface phases align the dominant BS-to-surface mode with the first
    target's steering direction; the uniform amplitude is then the exact
    power-feasible cap.  The initial point satisfies the power and amplitude
    constraints exactly; the QoS constraint may be infeasible here, in which
    case the transmit block may still recover it.
    """
    a1 = steering_vector(cfg.target_angles[0], cfg.L)
    _, _, vh = np.linalg.svd(ch.H_br)
    s = ch.H_br @ vh[0].conj()
    phi_hat = np.exp(1j * (np.angle(a1) - np.angle(s)))

    phi = phi_hat
    for _ in range(2):
        F = _mrt_beamformers(cfg, ch, phi, mode)
        a0 = _power_feasible_amplitude(cfg, ch, phi_hat, F, mode)
        phi = a0 * phi_hat   # power cap solved exactly for this F

    c = np.zeros(cfg.U)
    state = DesignState(F=F, phi=phi, c=c, w=None,
                        has_common=mode.common_stream)
    if mode.rate_constraints and mode.common_stream and cfg.R_min > 0:
        r_p = np.empty(cfg.U)
        r_c = np.empty(cfg.U)
        for u in range(cfg.U):
            g_c, g_p = user_sinrs(cfg, ch, state, u)
            r_p[u] = achievable_rates(g_p)
            r_c[u] = achievable_rates(g_c)
        c = np.maximum(0.0, cfg.R_min - r_p)
        if c.sum() > 0:
            c *= min(1.0, float(r_c.min()) / float(c.sum()))
        state = replace(state, c=c)
    W, _, _ = p1_solve(cfg, ch, state)
    return replace(state, w=W)


def run_bcd(cfg: SystemConfig, ch: ChannelSet, mode: str | ModeSpec = "aris_rsma",
            sdp_tol: float = 1e-8, solver: str = "scs",
            max_outer: int | None = None) -> RunResult:
    """Alternate the receive, transmit and reflection blocks to convergence."""
    t_start = time.perf_counter()
    spec = MODES[mode] if isinstance(mode, str) else mode
    eff = effective_config(cfg, spec)
    max_outer = max_outer if max_outer is not None else eff.max_outer

    state = initialize(eff, ch, spec)
    feas0 = verify_feasibility(eff, ch, state,
                               check_rates=spec.rate_constraints,
                               check_common=spec.common_stream,
                               check_ris_power=spec.ris_power_constraint)
    incumbent_ok = feas0.passed

    trace = RunTrace()
    degraded = False
    gamma_prev = None
    status = "ok"
    for t in range(1, max_outer + 1):
        t0 = time.perf_counter()
        W, g1, _ = p1_solve(eff, ch, state)
        state = replace(state, w=W)

        p2 = solve_p2(eff, ch, state, g1, spec, tol=sdp_tol,
                      incumbent_feasible=incumbent_ok, solver=solver)
        if p2.status == "infeasible" and t == 1:
            trace.termination = "infeasible"
            return RunResult(state=state, mode=spec.name, status="infeasible",
                             min_echo_sinr=0.0, min_echo_sinr_db=float("-inf"),
                             per_user_rates=np.zeros(eff.U), bs_power=0.0,
                             aris_power_w=0.0, outer_iters=t,
                             feasibility=None, trace=trace,
                             wall_s=time.perf_counter() - t_start)
        degraded |= p2.status == "degraded" or \
            (p2.status == "infeasible" and t > 1)
        state = replace(state, F=p2.F, c=p2.c)

        p3 = solve_p3(eff, ch, state, p2.gamma, spec, tol=sdp_tol,
                      solver=solver)
        degraded |= p3.status == "degraded"
        state = replace(state, phi=p3.phi)
        g3 = p3.gamma

        feas = verify_feasibility(eff, ch, state,
                                  check_rates=spec.rate_constraints,
                                  check_common=spec.common_stream,
                                  check_ris_power=spec.ris_power_constraint)
        incumbent_ok = incumbent_ok or feas.passed
        trace.outer.append({
            "t": t,
            "gamma_p1": g1, "gamma_p1_db": lin2db(g1),
            "gamma_p2": p2.gamma, "gamma_p2_db": lin2db(p2.gamma),
            "gamma_p3": g3, "gamma_p3_db": lin2db(g3),
            "p2": {"status": p2.status, "lifted": p2.gamma_lifted,
                   "reverted": p2.reverted,
                   "rank_ratios": p2.rank_ratios.tolist(),
                   "inner": p2.inner},
            "p3": {"status": p3.status, "lifted": p3.gamma_lifted,
                   "reverted": p3.reverted, "rank_ratio": p3.rank_ratio,
                   "amp_excess": p3.amp_excess, "inner": p3.inner},
            "feas_residual_max": max(feas.residuals.values()),
            "wall_s": time.perf_counter() - t0,
        })
        if gamma_prev is not None:
            rel = abs(g3 - gamma_prev) / max(gamma_prev, 1e-12)
            if rel <= eff.bcd_tol:
                trace.termination = "converged"
                break
        gamma_prev = g3
    else:
        trace.termination = "max_outer"

    if degraded:
        status = "degraded"
    rates = np.zeros(eff.U)
    if spec.rate_constraints:
        for u in range(eff.U):
            _, g_p = user_sinrs(eff, ch, state, u)
            rates[u] = float(achievable_rates(g_p))
        if spec.common_stream:
            rates = rates + state.c
    feas = verify_feasibility(eff, ch, state,
                              check_rates=spec.rate_constraints,
                              check_common=spec.common_stream,
                              check_ris_power=spec.ris_power_constraint)
    g_final = feas.min_echo_sinr
    return RunResult(state=state, mode=spec.name, status=status,
                     min_echo_sinr=g_final, min_echo_sinr_db=lin2db(g_final),
                     per_user_rates=rates,
                     bs_power=float(np.linalg.norm(state.F) ** 2),
                     aris_power_w=aris_power(eff, ch, state),
                     outer_iters=len(trace.outer), feasibility=feas,
                     trace=trace, wall_s=time.perf_counter() - t_start)


def run_baseline(mode: str, cfg: SystemConfig, ch: ChannelSet,
                 **options) -> RunResult:
    """Run one benchmark variant; see MODES for the available schemes."""
    if mode not in MODES:
        raise ValueError(f"unknown mode '{mode}'; choose from {sorted(MODES)}")
    return run_bcd(cfg, ch, mode=mode, **options)

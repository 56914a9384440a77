"""ARIS reflection design: quartic-to-quadratic lift, MM surrogates, and a
lifted SDR over the (L+1)-dimensional homogenized reflection with SROCR.

The quartic echo/power terms are quadratics in the lifted vector phi_tilde;
each is majorized around the incumbent by a tangent-tight convex bound built
from the kernel's largest eigenvalue, which reduces every constraint to a
quadratic in phi itself and hence to trace pairings with Phi_bar.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import conic
from .config import SystemConfig
from .channels import ChannelSet
from .model import (DesignState, KernelSum, UserQuadratics,
                    build_quartic_forms, build_user_quadratics, herm,
                    lift_phi, min_echo_sinr)
from .modes import ModeSpec
from .tx_rs import (MAX_HALVINGS, OBJ_STALL, POLISH_ITERS, RANK_CLEAN,
                    RANK_DONE, SrocrState, srocr_update)

AMP_CLAMP_TOL = 1e-6   # relative amplitude excess silently clamped


@dataclass
class MmSurrogate:
    """Tangent-tight upper bound phi^H Qbar phi + eta on phi_tilde^H M phi_tilde."""

    Qbar: np.ndarray
    eta: float
    lam: float
    phis: np.ndarray

    def value(self, phi: np.ndarray) -> float:
        return float(np.real(phi.conj() @ self.Qbar @ phi)) + self.eta


def mm_surrogate(kernel: KernelSum, phi_s: np.ndarray, a_max: float,
                 lam: float | None = None) -> MmSurrogate:
    """Majorize the lifted quadratic around phi_s under the amplitude cap.

    ``lam`` may carry a precomputed kernel eigenvalue bound (it does not
    depend on the expansion point).
    """
    L = kernel.L
    if lam is None:
        lam = kernel.lambda_max()
    lam = max(float(lam), 0.0)   # cap bound needs a nonnegative coefficient
    pt = lift_phi(phi_s)
    mv = kernel.matvec(pt)
    p = mv - lam * pt
    P = p.reshape(L, L)          # row-major reshape matches the lift convention
    Qbar = herm(P + P.conj().T)
    eta = lam * L ** 2 * a_max ** 4 + float(np.real(pt.conj() @ (lam * pt - mv)))
    return MmSurrogate(Qbar=Qbar, eta=eta, lam=lam, phis=np.array(phi_s))


def _corner(E1: np.ndarray, E2: np.ndarray) -> np.ndarray:
    """Homogenized (L+1) kernel [[E1, E2^H], [E2, 0]]."""
    L = E1.shape[0]
    K = np.zeros((L + 1, L + 1), dtype=complex)
    K[:L, :L] = E1
    K[:L, L] = E2.conj().ravel()
    K[L, :L] = E2.ravel()
    return herm(K)


@dataclass
class P3Result:
    phi: np.ndarray
    gamma: float             # true min-target echo SINR at the returned phi
    gamma_lifted: float
    status: str              # ok | infeasible | degraded
    reverted: bool
    rank_ratio: float
    amp_excess: float        # worst relative amplitude overshoot before clamping
    inner: list = field(default_factory=list)


def build_p3(cfg: SystemConfig, mode: ModeSpec, sensing: list[MmSurrogate],
             M4s: list[np.ndarray], taus: list[float], gamma_p2: float,
             power: MmSurrogate | None, D2: np.ndarray | None,
             userquad: list[UserQuadratics], c: np.ndarray,
             srocr: SrocrState | None,
             gamma_scale: float = 1.0) -> conic.ConicProblem:
    """Assemble the lifted reflection SDP at the current expansion point."""
    L = cfg.L
    p = conic.ConicProblem()
    p.add_matrix_var("Phibar", L + 1)
    p.add_scalar_var("Gamma", lb=0.0)
    p.set_objective(conic.LinExpr(scalars={"Gamma": 1.0}))

    for q, sur in enumerate(sensing):
        Q1 = _corner(sur.Qbar + gamma_p2 * cfg.sigma_z2 * M4s[q],
                     np.zeros((1, L), dtype=complex))
        e = conic.LinExpr(matrices={"Phibar": Q1},
                          scalars={"Gamma": -taus[q] * gamma_scale},
                          const=sur.eta)
        p.add_constraint(e, "<=")

    if mode.ris_power_constraint:
        Q2 = _corner(power.Qbar + D2, np.zeros((1, L), dtype=complex))
        p.add_constraint(conic.LinExpr(matrices={"Phibar": Q2},
                                       const=power.eta - cfg.P_ris_max), "<=")

    if mode.rate_constraints:
        delta2 = 2.0 ** float(np.sum(c)) - 1.0
        for u, uq in enumerate(userquad):
            delta1 = max(0.0, 2.0 ** (cfg.R_min - float(c[u])) - 1.0)
            Q3 = _corner(uq.E_p1, uq.E_p2)
            Q4 = _corner(uq.E_p3 + cfg.sigma_z2 * uq.E_p4, uq.E_p5)
            e = conic.LinExpr(matrices={"Phibar": herm(delta1 * Q4 - Q3)},
                              const=delta1 * uq.tau_p2 - uq.tau_p1)
            p.add_constraint(e, "<=")
            if mode.common_stream:
                Q5 = _corner(uq.E_c1, uq.E_c2)
                Q6 = _corner(uq.E_c3 + cfg.sigma_z2 * uq.E_c4, uq.E_c5)
                e = conic.LinExpr(matrices={"Phibar": herm(delta2 * Q6 - Q5)},
                                  const=delta2 * uq.tau_c2 - uq.tau_c1)
                p.add_constraint(e, "<=")

    amp2 = cfg.a_max ** 2
    for l in range(L):
        E = np.zeros((L + 1, L + 1))
        E[l, l] = 1.0
        p.add_constraint(conic.LinExpr(matrices={"Phibar": E}, const=-amp2),
                         "<=")
    E = np.zeros((L + 1, L + 1))
    E[L, L] = 1.0
    p.add_constraint(conic.LinExpr(matrices={"Phibar": E}, const=-1.0), "==")

    if srocr is not None and srocr.prev_solution is not None \
            and srocr.varpi[0] > 0.0:
        _, u1 = conic.principal_component(srocr.prev_solution[0])
        K = herm(np.outer(u1, u1.conj()) - srocr.varpi[0] * np.eye(L + 1))
        p.add_constraint(conic.LinExpr(matrices={"Phibar": K}), ">=")
    return p


def _extract_phi(Phibar: np.ndarray, a_max: float) -> tuple[np.ndarray, float, float]:
    """Principal direction, rescaled so the homogenizing entry is exactly 1."""
    L = Phibar.shape[0] - 1
    lam, u = conic.principal_component(Phibar)
    tr = float(np.trace(Phibar).real)
    ratio = lam / tr if tr > 0 else 0.0
    pb = np.sqrt(max(lam, 0.0)) * u
    if abs(pb[L]) < 1e-12:
        return np.zeros(L, dtype=complex), ratio, 0.0
    phi = pb[:L] / pb[L]
    mags = np.abs(phi)
    excess = float(max(0.0, mags.max() / a_max - 1.0))
    over = mags > a_max
    if np.any(over):
        phi = phi.copy()
        phi[over] *= a_max / mags[over]
    return phi, ratio, excess


def solve_p3(cfg: SystemConfig, ch: ChannelSet, state: DesignState,
             gamma_p2: float, mode: ModeSpec, tol: float = 1e-8,
             solver: str = "auto") -> P3Result:
    """SROCR loop for the reflection block.

    Surrogate expansion points refresh at every accepted inner iteration; an
    infeasible plain relaxation returns the incumbent unchanged (the BCD
    chain stays monotone).
    """
    L, U, Q = cfg.L, cfg.U, cfg.Q
    phi_inc = state.phi

    quartic = [build_quartic_forms(cfg, ch, state.F, state.w[:, q], q)
               for q in range(Q)]
    Ms = [KernelSum([(gamma_p2 * c0, k) for c0, k in quartic[q].M2.terms]
                    + [(gamma_p2 * cfg.sigma_z2 * c0, k)
                       for c0, k in quartic[q].M3.terms]
                    + [(-c0, k) for c0, k in quartic[q].M1.terms])
          for q in range(Q)]
    lam_M = [Ms[q].lambda_max() for q in range(Q)]
    M4s = [quartic[q].M4 for q in range(Q)]
    taus = [quartic[q].tau_q for q in range(Q)]
    D1 = quartic[0].D1
    D2 = quartic[0].D2
    lam_D = D1.lambda_max() if mode.ris_power_constraint else None
    userquad = [build_user_quadratics(cfg, ch, state.F, u, mode.common_stream)
                for u in range(U)] if mode.rate_constraints else []

    def surrogates(phi_s):
        sens = [mm_surrogate(Ms[q], phi_s, cfg.a_max, lam=lam_M[q])
                for q in range(Q)]
        pw = mm_surrogate(D1, phi_s, cfg.a_max, lam=lam_D) \
            if mode.ris_power_constraint else None
        return sens, pw

    sens, pw = surrogates(phi_inc)
    gamma_scale = gamma_p2 if gamma_p2 > 1e-10 else 1.0
    srocr = SrocrState(varpi=np.zeros(1), delta=np.full(1, 0.1))
    inner = []
    accepted = None
    prev_obj = None
    halvings = 0
    polish = 0
    status = "ok"
    warm = None

    for it in range(cfg.max_srocr):
        prob = build_p3(cfg, mode, sens, M4s, taus, gamma_p2, pw, D2,
                        userquad, state.c, srocr, gamma_scale=gamma_scale)
        t0 = time.perf_counter()
        sol = conic.solve(prob, tol=tol, solver=solver, warm=warm)
        rec = {"iter": it, "varpi": srocr.varpi.tolist(),
               "delta": float(srocr.delta[0]), "status": sol.status,
               "solver_iters": sol.iterations, "solver": sol.solver,
               "wall_s": time.perf_counter() - t0}
        if sol.status == "optimal":
            warm = sol
            Pb = sol.matrices["Phibar"]
            obj = float(sol.scalars["Gamma"]) * gamma_scale
            phi_it, ratio, _ = _extract_phi(Pb, cfg.a_max)
            rec.update(obj=obj, ratio=ratio)
            inner.append(rec)
            enforced = float(srocr.varpi[0])
            accepted = (Pb, obj)
            srocr.prev_solution = [Pb]
            stalled = prev_obj is not None and \
                abs(obj - prev_obj) <= OBJ_STALL * max(abs(prev_obj), 1e-12)
            prev_obj = obj
            if enforced >= RANK_DONE and stalled:
                if ratio >= RANK_CLEAN or polish >= POLISH_ITERS:
                    break
                polish += 1
                srocr.varpi = np.ones(1)
            elif it == 0:
                srocr.varpi = np.array([ratio])
            else:
                srocr.varpi = np.array([srocr_update(Pb, srocr.delta[0])])
            sens, pw = surrogates(phi_it)
        else:
            inner.append(rec)
            if accepted is None:
                return P3Result(phi=phi_inc, gamma=gamma_p2,
                                gamma_lifted=float("nan"),
                                status="infeasible" if sol.status == "infeasible"
                                else "degraded",
                                reverted=True, rank_ratio=1.0, amp_excess=0.0,
                                inner=inner)
            halvings += 1
            if halvings > MAX_HALVINGS:
                status = "degraded"
                break
            srocr.delta = srocr.delta / 2.0
            srocr.varpi = np.array([srocr_update(accepted[0], srocr.delta[0])])

    if accepted is None:
        return P3Result(phi=phi_inc, gamma=gamma_p2, gamma_lifted=float("nan"),
                        status=status, reverted=True, rank_ratio=1.0,
                        amp_excess=0.0, inner=inner)

    Pb, obj = accepted
    phi_new, ratio, excess = _extract_phi(Pb, cfg.a_max)
    gamma_true = min_echo_sinr(cfg, ch, replace(state, phi=phi_new))
    reverted = False
    if gamma_true < gamma_p2 * (1.0 - 1e-9) or np.all(phi_new == 0):
        phi_new, gamma_true, reverted = phi_inc, gamma_p2, True
    return P3Result(phi=phi_new, gamma=gamma_true, gamma_lifted=obj,
                    status=status, reverted=reverted, rank_ratio=ratio,
                    amp_excess=excess, inner=inner)

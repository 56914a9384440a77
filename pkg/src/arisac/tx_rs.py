"""Joint transmit beamforming and rate splitting: lifted SDR with
exponential-cone rate relaxations and SROCR rank-one tightening.

Rate constraints are posed in noise-normalized variables (rho' = rho - ln eps3)
so the exponential-cone arguments are O(1 + SNR) rather than watt-scale; the
constraint set is unchanged because only rho - xi enters the rate rows.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .config import SystemConfig
from .channels import ChannelSet
from .model import (DesignState, all_user_channels, build_cascade_matrices,
                    herm)
from .modes import ModeSpec

LN2 = math.log(2.0)

# SROCR loop policy
RANK_DONE = 0.999          # enforced relaxation level counting as rank-one
RANK_CLEAN = 1.0 - 1e-7    # solution eigenvalue ratio worth polishing to
OBJ_STALL = 1e-4           # relative objective change for termination
MAX_HALVINGS = 6
POLISH_ITERS = 4


def exp_tangent(x0: float, x: float) -> float:
    """First-order expansion of exp at x0: a global lower bound on e^x."""
    return math.exp(x0) * (x - x0 + 1.0)


def srocr_update(X: np.ndarray, delta: float) -> float:
    """Next relaxation level min(1, lambda_max/tr + delta)."""
    tr = float(np.trace(X).real)
    if tr <= 0:
        raise ValueError("srocr_update needs tr(X) > 0")
    lam, _ = conic.principal_component(X)
    return min(1.0, lam / tr + delta)


def extract_rank_one(X: np.ndarray) -> tuple[np.ndarray, float]:
    """Principal-component extraction f = sqrt(lambda1) u1.

    Returns (f, rank ratio lambda1/tr); callers flag ratios below 0.999.
    """
    lam, u = conic.principal_component(X)
    tr = float(np.trace(X).real)
    ratio = lam / tr if tr > 0 else 0.0
    return np.sqrt(max(lam, 0.0)) * u, ratio


def _rank_ratio(X: np.ndarray) -> float:
    lam, _ = conic.principal_component(X)
    tr = float(np.trace(X).real)
    return lam / tr if tr > 0 else 0.0


@dataclass
class SrocrState:
    """Relaxation levels, adaptive steps, and expansion bookkeeping."""

    varpi: np.ndarray
    delta: np.ndarray
    prev_solution: list[np.ndarray] | None = None
    prev_xi: dict | None = None


@dataclass
class P2Result:
    F: np.ndarray
    c: np.ndarray
    gamma: float              # true min-target echo SINR at the returned F
    gamma_lifted: float
    status: str               # ok | infeasible | degraded
    reverted: bool
    rank_ratios: np.ndarray
    inner: list = field(default_factory=list)


def build_p2(cfg: SystemConfig, mode: ModeSpec, labels: list[str],
             B1: np.ndarray, B2: np.ndarray, eps1: np.ndarray,
             Sigma: np.ndarray, eps2: float,
             H_users: np.ndarray, eps3: np.ndarray, gamma_p1: float,
             xi_p: np.ndarray | None, xi_c: np.ndarray | None,
             srocr: SrocrState | None,
             gamma_scale: float = 1.0) -> conic.ConicProblem:
    """Assemble the lifted transmit-design SDP at the given expansion points.

    ``xi_p``/``xi_c`` are the noise-normalized tangent points; ``srocr``
    contributes the rank cuts when it carries a previous solution.  The
    objective variable is Gamma/gamma_scale so the solver sees an O(1)
    objective regardless of the linear-SINR magnitude.
    """
    M, U, Q = cfg.M, cfg.U, cfg.Q
    S = len(labels)
    p = conic.ConicProblem()
    for lbl in labels:
        p.add_matrix_var(lbl, M)
    p.add_scalar_var("Gamma", lb=0.0)
    p.set_objective(conic.LinExpr(scalars={"Gamma": 1.0}))

    # sensing floor per target, with Gamma_P1 substituted on the left
    for q in range(Q):
        K = herm(B1[q] - gamma_p1 * B2[q])
        e = conic.LinExpr(scalars={"Gamma": -float(eps1[q]) * gamma_scale})
        for lbl in labels:
            e.add_matrix(lbl, K)
        p.add_constraint(e, ">=")

    # BS power
    e = conic.LinExpr(const=-cfg.P_bs_max)
    for lbl in labels:
        e.add_matrix(lbl, np.eye(M))
    p.add_constraint(e, "<=")

    # forward power through the surface
    if mode.ris_power_constraint:
        e = conic.LinExpr(const=eps2 - cfg.P_ris_max)
        for lbl in labels:
            e.add_matrix(lbl, Sigma)
        p.add_constraint(e, "<=")

    if mode.rate_constraints:
        priv = labels[:U]
        for u in range(U):
            p.add_scalar_var(f"rho_p{u}")
            p.add_scalar_var(f"xi_p{u}")
        if mode.common_stream:
            for u in range(U):
                p.add_scalar_var(f"c{u}", lb=0.0)
                p.add_scalar_var(f"rho_c{u}")
                p.add_scalar_var(f"xi_c{u}")
        for u in range(U):
            Hn = H_users[u] / eps3[u]
            # QoS: c_u + (rho - xi)/ln2 >= R_min
            e = conic.LinExpr(scalars={f"rho_p{u}": 1.0 / LN2,
                                       f"xi_p{u}": -1.0 / LN2},
                              const=-cfg.R_min)
            if mode.common_stream:
                e.add_scalar(f"c{u}", 1.0)
            p.add_constraint(e, ">=")
            # e^{rho_p} <= sum_k tr(Hn F_k) + 1
            bound = conic.LinExpr(const=1.0)
            for lbl in priv:
                bound.add_matrix(lbl, Hn)
            p.add_exp_constraint(f"rho_p{u}", bound)
            # interference tangent: sum_{k != u} tr(Hn F_k) + 1 <= tangent(xi_p)
            t0 = float(xi_p[u])
            e = conic.LinExpr(scalars={f"xi_p{u}": -math.exp(t0)},
                              const=1.0 + math.exp(t0) * (t0 - 1.0))
            for k, lbl in enumerate(priv):
                if k != u:
                    e.add_matrix(lbl, Hn)
            p.add_constraint(e, "<=")
            if mode.common_stream:
                # common decodability: rho_c - xi_c >= ln2 * sum c
                e = conic.LinExpr(scalars={f"rho_c{u}": 1.0, f"xi_c{u}": -1.0})
                for k in range(U):
                    e.add_scalar(f"c{k}", -LN2)
                p.add_constraint(e, ">=")
                bound = conic.LinExpr(const=1.0)
                for lbl in labels:
                    bound.add_matrix(lbl, Hn)
                p.add_exp_constraint(f"rho_c{u}", bound)
                t0 = float(xi_c[u])
                e = conic.LinExpr(scalars={f"xi_c{u}": -math.exp(t0)},
                                  const=1.0 + math.exp(t0) * (t0 - 1.0))
                for lbl in priv:
                    e.add_matrix(lbl, Hn)
                p.add_constraint(e, "<=")

    # SROCR cuts from the previous solution's principal directions
    if srocr is not None and srocr.prev_solution is not None:
        for i, lbl in enumerate(labels):
            if srocr.varpi[i] <= 0.0:
                continue
            _, u1 = conic.principal_component(srocr.prev_solution[i])
            K = herm(np.outer(u1, u1.conj()) - srocr.varpi[i] * np.eye(M))
            p.add_constraint(conic.LinExpr(matrices={lbl: K}), ">=")
    return p


def _xi_points(H_users, eps3, lifted, labels, U, common):
    """Noise-normalized tangent points at the given lifted matrices."""
    tr = np.array([[float(np.real(np.trace(H_users[u] @ X))) / eps3[u]
                    for X in lifted] for u in range(U)])
    priv = tr[:, :U]
    xi_p = np.log(priv.sum(axis=1) - np.diag(priv) + 1.0)
    xi_c = np.log(priv.sum(axis=1) + 1.0) if common else None
    return xi_p, xi_c


def _true_min_sinr(cascade, W, F):
    """min-target echo SINR for candidate F at fixed (phi, w)."""
    gammas = []
    for q in range(cascade.H_bq.shape[0]):
        w = W[:, q]
        num = np.sum(np.abs(w.conj() @ cascade.H_bq[q] @ F) ** 2)
        den = np.sum(np.abs(w.conj() @ cascade.H_bq_tilde[q] @ F) ** 2) \
            + float(cascade.eps1[q])
        gammas.append(num / den)
    return float(min(gammas))


def solve_p2(cfg: SystemConfig, ch: ChannelSet, state: DesignState,
             gamma_p1: float, mode: ModeSpec, tol: float = 1e-8,
             incumbent_feasible: bool = True, solver: str = "auto") -> P2Result:
    """SROCR loop for the transmit block; monotone against the incumbent.

    On an infeasible sub-iteration the step delta is halved and the cut is
    re-derived from the last accepted solution (at most MAX_HALVINGS times);
    infeasibility of the plain relaxation means the scenario itself is
    infeasible and is reported upward.
    """
    U, Q = cfg.U, cfg.Q
    S = mode.n_streams(U)
    if mode.common_stream:
        labels = [f"F{i}" for i in range(U)] + ["Fc"]
    else:
        labels = [f"F{i}" for i in range(S)]

    cascade = build_cascade_matrices(cfg, ch, state.phi, ws=state.w)
    B1 = np.empty((Q, cfg.M, cfg.M), dtype=complex)
    B2 = np.empty_like(B1)
    for q in range(Q):
        x1 = cascade.H_bq[q].conj().T @ state.w[:, q]
        x2 = cascade.H_bq_tilde[q].conj().T @ state.w[:, q]
        B1[q] = np.outer(x1, x1.conj())
        B2[q] = np.outer(x2, x2.conj())
    h_eq = all_user_channels(ch, state.phi)
    H_users = np.stack([np.outer(h_eq[u], h_eq[u].conj()) for u in range(U)])
    eps3 = cascade.eps3

    F_inc = state.F
    c_inc = np.asarray(state.c, dtype=float).copy()
    lifted_inc = [np.outer(F_inc[:, i], F_inc[:, i].conj())
                  for i in range(F_inc.shape[1])]
    if mode.rate_constraints:
        xi_p, xi_c = _xi_points(H_users, eps3, lifted_inc, labels, U,
                                mode.common_stream)
    else:
        xi_p = xi_c = None

    gamma_scale = gamma_p1 if gamma_p1 > 1e-10 else 1.0
    srocr = SrocrState(varpi=np.zeros(S), delta=np.full(S, 0.1),
                       prev_xi={"p": xi_p, "c": xi_c})
    inner = []
    accepted = None      # (lifted, scalars, obj)
    prev_obj = None
    halvings = 0
    polish = 0
    status = "ok"
    warm = None

    for it in range(cfg.max_srocr):
        prob = build_p2(cfg, mode, labels, B1, B2, cascade.eps1,
                        cascade.Sigma, cascade.eps2, H_users, eps3,
                        gamma_p1, xi_p, xi_c, srocr, gamma_scale=gamma_scale)
        t0 = time.perf_counter()
        sol = conic.solve(prob, tol=tol, solver=solver, warm=warm)
        rec = {"iter": it, "varpi": srocr.varpi.tolist(),
               "delta": float(srocr.delta[0]), "status": sol.status,
               "solver_iters": sol.iterations, "solver": sol.solver,
               "wall_s": time.perf_counter() - t0}
        if sol.status == "optimal":
            warm = sol
            lifted = [sol.matrices[lbl] for lbl in labels]
            obj = float(sol.scalars["Gamma"]) * gamma_scale
            ratios = np.array([_rank_ratio(X) for X in lifted])
            rec.update(obj=obj, ratios=ratios.tolist())
            inner.append(rec)
            enforced = srocr.varpi.copy()
            accepted = (lifted, sol.scalars, obj)
            srocr.prev_solution = lifted
            stalled = prev_obj is not None and \
                abs(obj - prev_obj) <= OBJ_STALL * max(abs(prev_obj), 1e-12)
            prev_obj = obj
            if np.all(enforced >= RANK_DONE) and stalled:
                if np.all(ratios >= RANK_CLEAN) or polish >= POLISH_ITERS:
                    break
                polish += 1
                srocr.varpi = np.ones(S)
            elif srocr.prev_solution is not None and it == 0:
                srocr.varpi = ratios.copy()     # natural rank profile
            else:
                srocr.varpi = np.array(
                    [srocr_update(X, d) for X, d in zip(lifted, srocr.delta)])
            if mode.rate_constraints:
                xi_p, xi_c = _xi_points(H_users, eps3, lifted, labels, U,
                                        mode.common_stream)
                srocr.prev_xi = {"p": xi_p, "c": xi_c}
        else:
            inner.append(rec)
            if accepted is None:
                if sol.status == "infeasible":
                    return P2Result(F=F_inc, c=c_inc, gamma=gamma_p1,
                                    gamma_lifted=float("nan"),
                                    status="infeasible", reverted=True,
                                    rank_ratios=np.ones(S), inner=inner)
                status = "degraded"
                break
            halvings += 1
            if halvings > MAX_HALVINGS:
                status = "degraded"
                break
            srocr.delta = srocr.delta / 2.0
            srocr.varpi = np.array(
                [srocr_update(X, d)
                 for X, d in zip(accepted[0], srocr.delta)])

    if accepted is None:
        return P2Result(F=F_inc, c=c_inc, gamma=gamma_p1,
                        gamma_lifted=float("nan"), status=status,
                        reverted=True, rank_ratios=np.ones(S), inner=inner)

    lifted, scalars, obj = accepted
    cols, ratios = zip(*[extract_rank_one(X) for X in lifted])
    F_new = np.stack(cols, axis=1)
    if mode.common_stream:
        c_new = np.maximum(0.0, np.array(
            [scalars[f"c{u}"] for u in range(U)]))
    else:
        c_new = np.zeros(U)
    gamma_true = _true_min_sinr(cascade, state.w, F_new)
    reverted = False
    if incumbent_feasible and gamma_true < gamma_p1 * (1.0 - 1e-9):
        F_new, c_new, gamma_true, reverted = F_inc, c_inc, gamma_p1, True
    return P2Result(F=F_new, c=c_new, gamma=gamma_true, gamma_lifted=obj,
                    status=status, reverted=reverted,
                    rank_ratios=np.array(ratios), inner=inner)

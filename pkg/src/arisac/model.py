"""Closed-form system quantities and the constant kernels the subproblems use.

Vectorization convention: the lifted reflection vector is
``phi_tilde = vec(conj(phi) phi^T)`` in column-major order, i.e. entry
(i + L*j) equals conj(phi_i) * phi_j.  With G_bar = diag(vec(G)) the
round-trip quantities become exact quadratic forms in phi_tilde, e.g.

    |w^H H_br^H Phi^H G Phi H_br f|^2
        = phi_tilde^H G_bar^H (F_bar^T kron W_bar) G_bar phi_tilde.

Quartic kernels are kept in factored form (diagonal congruence of a Kronecker
product); matrix-vector products cost O(L^3) instead of densifying the
L^2 x L^2 matrix, which only happens on demand for small L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh, ArpackNoConvergence

from .config import SystemConfig
from .channels import ChannelSet

# dense eigendecomposition below this surface size, Lanczos above
_DENSE_L = 12


def herm(X: np.ndarray) -> np.ndarray:
    """Hermitian symmetrization, applied after every kernel construction."""
    return 0.5 * (X + X.conj().T)


def lift_phi(phi: np.ndarray) -> np.ndarray:
    """phi_tilde = vec(conj(phi) phi^T), column-major."""
    return np.outer(phi.conj(), phi).ravel(order="F")


@dataclass
class DesignState:
    """Decision variables of one design.

    F columns are the per-user private beamformers followed by the common
    beamformer when ``has_common``; modes without rate service may carry a
    single sensing column.
    """

    F: np.ndarray                 # (M, S)
    phi: np.ndarray               # (L,)
    c: np.ndarray                 # (U,) common-rate allocation, bit/s/Hz
    w: np.ndarray | None = None   # (M, Q) receive beamformers
    has_common: bool = True

    @property
    def n_private(self) -> int:
        return self.F.shape[1] - 1 if self.has_common else self.F.shape[1]

    @property
    def f_common(self) -> np.ndarray | None:
        return self.F[:, -1] if self.has_common else None


@dataclass
class CascadeMatrices:
    """Round-trip cascades and noise constants for a fixed reflection phi."""

    H_bq: np.ndarray            # (Q, M, M)
    H_bq_tilde: np.ndarray      # (Q, M, M) cross-target sum
    C: np.ndarray               # (M, M) Hermitian PD noise covariance
    Sigma: np.ndarray           # (M, M) Hermitian PSD ARIS-power kernel
    eps2: float
    eps3: np.ndarray            # (U,)
    eps1: np.ndarray | None = None   # (Q,) w_q^H C w_q, set when ws given


def equivalent_user_channel(ch: ChannelSet, phi: np.ndarray, u: int) -> np.ndarray:
    """h_u = h_bu + H_br^H Phi^H h_ru."""
    return ch.h_bu[u] + ch.H_br.conj().T @ (phi.conj() * ch.h_ru[u])


def all_user_channels(ch: ChannelSet, phi: np.ndarray) -> np.ndarray:
    """(U, M) stack of equivalent user channels."""
    return ch.h_bu + (ch.h_ru * phi.conj()[None, :]) @ ch.H_br.conj()


def forwarded_noise(cfg: SystemConfig, ch: ChannelSet, phi: np.ndarray) -> np.ndarray:
    """eps3_u = sigma_z^2 ||h_ru^H Phi||^2 + sigma_u^2 per user."""
    g = np.abs(ch.h_ru) ** 2 @ (np.abs(phi) ** 2)
    return cfg.sigma_z2 * g + cfg.sigma_u2


def user_sinrs(cfg: SystemConfig, ch: ChannelSet, state: DesignState,
               u: int) -> tuple[float, float]:
    """(gamma_c, gamma_p) of user u; gamma_c is 0 without a common stream."""
    if state.n_private != ch.U:
        raise ValueError("user SINRs need one private stream per user")
    h_u = equivalent_user_channel(ch, state.phi, u)
    eps3 = float(forwarded_noise(cfg, ch, state.phi)[u])
    p = np.abs(h_u.conj() @ state.F[:, :ch.U]) ** 2
    gamma_p = p[u] / (p.sum() - p[u] + eps3)
    if state.has_common:
        pc = abs(h_u.conj() @ state.f_common) ** 2
        gamma_c = pc / (p.sum() + eps3)
    else:
        gamma_c = 0.0
    return float(gamma_c), float(gamma_p)


def achievable_rates(gamma):
    """Shannon rate log2(1 + gamma), elementwise."""
    return np.log2(1.0 + np.asarray(gamma, dtype=float))


def build_cascade_matrices(cfg: SystemConfig, ch: ChannelSet, phi: np.ndarray,
                           ws: np.ndarray | None = None) -> CascadeMatrices:
    """Constants of the echo path and power constraints at fixed phi.

    ``ws`` (M, Q) is optional; when given, eps1[q] = w_q^H C w_q is filled in.
    """
    M, Q = ch.M, ch.Q
    G = ch.G.sum(axis=0)
    PhiH = phi[:, None] * ch.H_br                  # Phi H_br
    H_z2 = PhiH.conj().T                           # H_br^H Phi^H
    H_z1 = H_z2 @ (G * phi[None, :])               # H_br^H Phi^H G Phi
    H_bq = np.stack([H_z2 @ ch.G[q] @ PhiH for q in range(Q)])
    H_bq_tilde = H_bq.sum(axis=0)[None, :, :] - H_bq
    C = herm(cfg.sigma_z2 * (H_z1 @ H_z1.conj().T + H_z2 @ H_z2.conj().T)
             + cfg.sigma_r2 * np.eye(M))
    # exact forward-power kernel: tr(Sigma f f^H) + eps2 = P_RIS(f) identically
    Z = phi.conj()[:, None] * (G @ PhiH)           # Phi^H G Phi H_br
    Sigma = herm(H_z2 @ H_z2.conj().T + Z.conj().T @ Z)
    S1 = phi.conj()[:, None] * G * phi[None, :]    # Phi^H G Phi
    eps2 = float(cfg.sigma_z2 * np.linalg.norm(S1) ** 2
                 + 2.0 * cfg.sigma_z2 * np.sum(np.abs(phi) ** 2))
    eps3 = forwarded_noise(cfg, ch, phi)
    eps1 = None
    if ws is not None:
        eps1 = np.array([float(np.real(ws[:, q].conj() @ C @ ws[:, q]))
                         for q in range(Q)])
    return CascadeMatrices(H_bq=H_bq, H_bq_tilde=H_bq_tilde, C=C, Sigma=Sigma,
                           eps2=eps2, eps3=eps3, eps1=eps1)


def echo_sinr(cfg: SystemConfig, ch: ChannelSet, state: DesignState, q: int,
              cascade: CascadeMatrices | None = None) -> float:
    """Round-trip echo SINR of target q under receive beamformer w_q."""
    if cascade is None:
        cascade = build_cascade_matrices(cfg, ch, state.phi)
    w = state.w[:, q]
    if np.linalg.norm(w) == 0:
        raise ValueError("receive beamformer w_q must be nonzero")
    num = np.sum(np.abs(w.conj() @ cascade.H_bq[q] @ state.F) ** 2)
    den = np.sum(np.abs(w.conj() @ cascade.H_bq_tilde[q] @ state.F) ** 2) \
        + float(np.real(w.conj() @ cascade.C @ w))
    return float(num / den)


def min_echo_sinr(cfg: SystemConfig, ch: ChannelSet, state: DesignState,
                  cascade: CascadeMatrices | None = None) -> float:
    if cascade is None:
        cascade = build_cascade_matrices(cfg, ch, state.phi)
    return min(echo_sinr(cfg, ch, state, q, cascade) for q in range(ch.Q))


def aris_power(cfg: SystemConfig, ch: ChannelSet, state: DesignState) -> float:
    """Reflect power: signal pass, echo pass, and dynamic-noise passes."""
    phi, F = state.phi, state.F
    G = ch.G.sum(axis=0)
    X = ch.H_br @ F
    t1 = np.linalg.norm(phi[:, None] * X) ** 2
    GPX = phi.conj()[:, None] * (G @ (phi[:, None] * X))
    t2 = np.linalg.norm(GPX) ** 2
    S1 = phi.conj()[:, None] * G * phi[None, :]
    t3 = cfg.sigma_z2 * np.linalg.norm(S1) ** 2
    t4 = 2.0 * cfg.sigma_z2 * np.sum(np.abs(phi) ** 2)
    return float(t1 + t2 + t3 + t4)


# ---------------------------------------------------------------------------
# quartic kernels in the lifted reflection vector
# ---------------------------------------------------------------------------

class FactoredQuadKernel:
    """K = diag(g)^H (B^T kron A) diag(g), Hermitian for Hermitian A, B."""

    def __init__(self, gvec: np.ndarray, A: np.ndarray, B: np.ndarray):
        self.gvec = np.asarray(gvec, dtype=complex)
        self.A = np.asarray(A, dtype=complex)
        self.B = np.asarray(B, dtype=complex)
        self.L = self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.L * self.L

    def matvec(self, v: np.ndarray) -> np.ndarray:
        X = (self.gvec * v).reshape(self.L, self.L, order="F")
        return self.gvec.conj() * (self.A @ X @ self.B).ravel(order="F")

    def quad(self, v: np.ndarray) -> float:
        return float(np.real(v.conj() @ self.matvec(v)))

    def dense(self) -> np.ndarray:
        K = np.kron(self.B.T, self.A)
        return self.gvec.conj()[:, None] * K * self.gvec[None, :]


class KernelSum:
    """Weighted sum of factored kernels, evaluated without densifying."""

    def __init__(self, terms: list[tuple[float, FactoredQuadKernel]]):
        if not terms:
            raise ValueError("empty kernel sum")
        self.terms = [(float(c), k) for c, k in terms]
        self.L = self.terms[0][1].L
        self.dim = self.L * self.L

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dim, dtype=complex)
        for c, k in self.terms:
            if c != 0.0:
                out += c * k.matvec(v)
        return out

    def quad(self, v: np.ndarray) -> float:
        return float(np.real(v.conj() @ self.matvec(v)))

    def dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for c, k in self.terms:
            if c != 0.0:
                out += c * k.dense()
        return out

    def lambda_max(self) -> float:
        """Largest eigenvalue; Lanczos on the factored form for large L."""
        if self.L <= _DENSE_L:
            return float(np.linalg.eigvalsh(herm(self.dense()))[-1])
        op = LinearOperator((self.dim, self.dim), matvec=self.matvec,
                            dtype=complex)
        try:
            lam = float(eigsh(op, k=1, which="LA",
                              return_eigenvectors=False, tol=1e-12)[0])
        except ArpackNoConvergence:
            lam = float(np.linalg.eigvalsh(herm(self.dense()))[-1])
        # upper-bound safety margin: MM needs lambda >= lambda_max exactly
        return lam + 1e-10 * (1.0 + abs(lam))


@dataclass
class QuarticForms:
    """Lifted kernels of the echo SINR and ARIS power for one target.

    M1/M2/M3/D1 are L^2 x L^2 Hermitian operators (factored); M4/D2 are dense
    L x L; tau_q = -sigma_r^2 w_q^H w_q.
    """

    M1: KernelSum
    M2: KernelSum
    M3: KernelSum
    M4: np.ndarray
    D1: KernelSum
    D2: np.ndarray
    tau_q: float


def build_quartic_forms(cfg: SystemConfig, ch: ChannelSet, F: np.ndarray,
                        w_q: np.ndarray, q: int) -> QuarticForms:
    """Kernels satisfying the lifted identities against echo_sinr/aris_power."""
    L = ch.L
    X = ch.H_br @ F
    Fbar = herm(X @ X.conj().T)                     # H_br F F^H H_br^H
    y = ch.H_br @ w_q
    Wbar = np.outer(y, y.conj())                    # H_br w w^H H_br^H
    G = ch.G.sum(axis=0)
    G_tilde = G - ch.G[q]
    I_L = np.eye(L)
    gv = lambda Gm: Gm.ravel(order="F")
    M1 = KernelSum([(1.0, FactoredQuadKernel(gv(ch.G[q]), Wbar, Fbar))])
    M2 = KernelSum([(1.0, FactoredQuadKernel(gv(G_tilde), Wbar, Fbar))])
    M3 = KernelSum([(1.0, FactoredQuadKernel(gv(G), Wbar, I_L))])
    M4 = np.diag(np.real(np.diag(Wbar)))
    D1 = KernelSum([(1.0, FactoredQuadKernel(gv(G), I_L, Fbar)),
                    (cfg.sigma_z2, FactoredQuadKernel(gv(G), I_L, I_L))])
    D2 = np.diag(np.real(np.diag(Fbar))) + 2.0 * cfg.sigma_z2 * I_L
    tau_q = -cfg.sigma_r2 * float(np.real(w_q.conj() @ w_q))
    return QuarticForms(M1=M1, M2=M2, M3=M3, M4=M4, D1=D1, D2=D2, tau_q=tau_q)


def echo_sinr_from_quartic(cfg: SystemConfig, qf: QuarticForms,
                           phi: np.ndarray) -> float:
    """Eq-equivalent echo SINR evaluated through the lifted kernels."""
    pt = lift_phi(phi)
    num = qf.M1.quad(pt)
    den = qf.M2.quad(pt) + cfg.sigma_z2 * qf.M3.quad(pt) \
        + cfg.sigma_z2 * float(np.real(phi.conj() @ qf.M4 @ phi)) - qf.tau_q
    return float(num / den)


def aris_power_from_quartic(qf: QuarticForms, phi: np.ndarray) -> float:
    pt = lift_phi(phi)
    return qf.D1.quad(pt) + float(np.real(phi.conj() @ qf.D2 @ phi))


# ---------------------------------------------------------------------------
# user-rate quadratics in phi (transmitter fixed)
# ---------------------------------------------------------------------------

@dataclass
class UserQuadratics:
    """Per-user SINR numerator/denominator quadratics for fixed F.

    gamma_x = (phi^H E1 phi + 2 Re(E2 phi) + tau1)
            / (phi^H (E3 + sigma_z^2 E4) phi + 2 Re(E5 phi) + tau2).
    E2/E5 are 1 x L rows; the common-stream family is None without one.
    """

    E_p1: np.ndarray
    E_p2: np.ndarray
    E_p3: np.ndarray
    E_p4: np.ndarray
    E_p5: np.ndarray
    tau_p1: float
    tau_p2: float
    E_c1: np.ndarray | None = None
    E_c2: np.ndarray | None = None
    E_c3: np.ndarray | None = None
    E_c4: np.ndarray | None = None
    E_c5: np.ndarray | None = None
    tau_c1: float | None = None
    tau_c2: float | None = None


def build_user_quadratics(cfg: SystemConfig, ch: ChannelSet, F: np.ndarray,
                          u: int, has_common: bool = True) -> UserQuadratics:
    U = ch.U
    n_priv = F.shape[1] - 1 if has_common else F.shape[1]
    if n_priv != U:
        raise ValueError("user quadratics need one private stream per user")
    h_bu, h_ru = ch.h_bu[u], ch.h_ru[u]
    V = ch.H_br @ F                       # columns H_br f_i
    a = lambda k: V[:, k].conj() * h_ru   # Htilde_k^H h_ru
    row = lambda k: (F[:, k].conj() @ h_bu) * (h_ru.conj() * V[:, k])
    E_p1 = herm(np.outer(a(u), a(u).conj()))
    E_p2 = row(u)[None, :]
    others = [k for k in range(U) if k != u]
    E_p3 = herm(sum((np.outer(a(k), a(k).conj()) for k in others),
                    start=np.zeros((ch.L, ch.L), dtype=complex)))
    E_p4 = np.diag(np.abs(h_ru) ** 2)
    E_p5 = sum((row(k) for k in others),
               start=np.zeros(ch.L, dtype=complex))[None, :]
    tau_p1 = float(np.abs(h_bu.conj() @ F[:, u]) ** 2)
    tau_p2 = float(sum(np.abs(h_bu.conj() @ F[:, k]) ** 2 for k in others)
                   + cfg.sigma_u2)
    uq = UserQuadratics(E_p1=E_p1, E_p2=E_p2, E_p3=E_p3, E_p4=E_p4, E_p5=E_p5,
                        tau_p1=tau_p1, tau_p2=tau_p2)
    if has_common:
        cidx = F.shape[1] - 1
        uq.E_c1 = herm(np.outer(a(cidx), a(cidx).conj()))
        uq.E_c2 = row(cidx)[None, :]
        uq.E_c3 = herm(E_p1 + E_p3)
        uq.E_c4 = E_p4
        uq.E_c5 = E_p2 + E_p5
        uq.tau_c1 = float(np.abs(h_bu.conj() @ F[:, cidx]) ** 2)
        uq.tau_c2 = tau_p1 + tau_p2
    return uq


def sinr_from_quadratics(cfg: SystemConfig, uq: UserQuadratics,
                         phi: np.ndarray, kind: str) -> float:
    """Evaluate the quadratic SINR form; kind is 'p' or 'c'."""
    E1, E2, E3, E4, E5, t1, t2 = (
        (uq.E_p1, uq.E_p2, uq.E_p3, uq.E_p4, uq.E_p5, uq.tau_p1, uq.tau_p2)
        if kind == "p" else
        (uq.E_c1, uq.E_c2, uq.E_c3, uq.E_c4, uq.E_c5, uq.tau_c1, uq.tau_c2))
    num = float(np.real(phi.conj() @ E1 @ phi)) \
        + 2.0 * float(np.real(E2 @ phi)) + t1
    den = float(np.real(phi.conj() @ (E3 + cfg.sigma_z2 * E4) @ phi)) \
        + 2.0 * float(np.real(E5 @ phi)) + t2
    return num / den


# ---------------------------------------------------------------------------
# feasibility
# ---------------------------------------------------------------------------

@dataclass
class FeasibilityReport:
    """Relative constraint residuals (0 = satisfied) and achieved objective."""

    qos: np.ndarray               # (U,) per-user rate shortfall
    common_rate: float            # decodability of the common allocation
    bs_power: float
    ris_power: float
    amplitude: float
    min_echo_sinr: float
    passed: bool
    residuals: dict = field(default_factory=dict)


def verify_feasibility(cfg: SystemConfig, ch: ChannelSet, state: DesignState,
                       tol: float = 1e-6, check_rates: bool = True,
                       check_common: bool = True,
                       check_ris_power: bool = True) -> FeasibilityReport:
    """Report residuals of all design constraints; pass iff all <= tol."""
    U = ch.U
    qos = np.zeros(U)
    common = 0.0
    if check_rates:
        r_p = np.empty(U)
        r_c = np.empty(U)
        for u in range(U):
            g_c, g_p = user_sinrs(cfg, ch, state, u)
            r_p[u] = achievable_rates(g_p)
            r_c[u] = achievable_rates(g_c)
        total = state.c + r_p if check_common else r_p
        qos = np.maximum(0.0, cfg.R_min - total) / max(1.0, cfg.R_min)
        if check_common:
            short = float(state.c.sum() - r_c.min())
            common = max(0.0, short) / max(1.0, float(r_c.min()))
    bs = float(np.linalg.norm(state.F) ** 2)
    bs_res = max(0.0, bs - cfg.P_bs_max) / cfg.P_bs_max
    ris = aris_power(cfg, ch, state)
    ris_res = max(0.0, ris - cfg.P_ris_max) / cfg.P_ris_max if check_ris_power else 0.0
    amp = float(np.abs(state.phi).max())
    amp_res = max(0.0, amp - cfg.a_max) / cfg.a_max
    sinr = min_echo_sinr(cfg, ch, state) if state.w is not None else float("nan")
    residuals = {
        "qos": float(qos.max()) if U else 0.0,
        "common_rate": common,
        "bs_power": bs_res,
        "ris_power": ris_res,
        "amplitude": amp_res,
    }
    passed = all(v <= tol for v in residuals.values())
    return FeasibilityReport(qos=qos, common_rate=common, bs_power=bs_res,
                             ris_power=ris_res, amplitude=amp_res,
                             min_echo_sinr=sinr, passed=passed,
                             residuals=residuals)

"""Channel realization: steering vectors, target responses, fading draws.

Array convention: BS and ARIS are half-wavelength ULAs.  The ARIS broadside
points toward the BS/user half-plane (-y), the BS broadside toward the ARIS
(+y); steering angles are measured from broadside toward +x, so a target
configured at angle phi sits at ``aris + d*(sin phi, -cos phi)``.

Large-scale gain per link is PL(d) = C0 * (d/d0)^(-alpha); small-scale fading
is Rician (factor kappa, geometric LoS) on the BS-ARIS and ARIS-user links and
Rayleigh on the BS-user link.  The target gain obeys the round-trip law
|beta_q|^2 = C0^2 * d_q^(-2 alpha_rq) * rcs with uniform random phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig


@dataclass(frozen=True)
class ChannelSet:
    """One realization of all channels."""

    H_br: np.ndarray     # (L, M) BS -> ARIS
    h_bu: np.ndarray     # (U, M) BS -> user u
    h_ru: np.ndarray     # (U, L) ARIS -> user u
    G: np.ndarray        # (Q, L, L) rank-one target response, beta*a*a^H
    beta: np.ndarray     # (Q,) complex target gains

    @property
    def L(self) -> int:
        return self.H_br.shape[0]

    @property
    def M(self) -> int:
        return self.H_br.shape[1]

    @property
    def U(self) -> int:
        return self.h_bu.shape[0]

    @property
    def Q(self) -> int:
        return self.G.shape[0]


def steering_vector(angle: float, L: int) -> np.ndarray:
    """ULA steering vector, element l = exp(i*l*pi*sin(angle))."""
    if L < 1:
        raise ValueError("L must be >= 1")
    return np.exp(1j * np.pi * np.arange(L) * math.sin(angle))


def target_response(angle: float, beta: complex, L: int) -> np.ndarray:
    """Rank-one target response beta * a(angle) a(angle)^H; trace = beta*L."""
    a = steering_vector(angle, L)
    return beta * np.outer(a, a.conj())


def pathloss(cfg: SystemConfig, d: float, alpha: float) -> float:
    """Large-scale power gain PL(d) = C0 * (d/d0)^(-alpha)."""
    if d <= 0:
        raise ValueError(f"degenerate geometry: link distance {d} <= 0")
    return cfg.c0 * (d / cfg.d0) ** (-alpha)


def _cn(rng: np.random.Generator, *shape) -> np.ndarray:
    """i.i.d. CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _rician_mix(kappa: float, los: np.ndarray, nlos: np.ndarray) -> np.ndarray:
    if np.isinf(kappa):
        return los
    return (math.sqrt(kappa / (1.0 + kappa)) * los
            + math.sqrt(1.0 / (1.0 + kappa)) * nlos)


def _angle_from_aris(cfg: SystemConfig, p: np.ndarray) -> float:
    ax, ay = cfg.geometry.aris
    return math.atan2(p[0] - ax, ay - p[1])


def _angle_from_bs(cfg: SystemConfig, p: np.ndarray) -> float:
    bx, by = cfg.geometry.bs
    return math.atan2(p[0] - bx, p[1] - by)


def sample_channels(cfg: SystemConfig, seed: int | None = None) -> ChannelSet:
    """Draw one ChannelSet; deterministic given (cfg, seed).

    Draw order is fixed (user positions, H_br, all h_bu, all h_ru, target
    phases) so results are stable across parameter values that do not change
    array sizes.
    """
    if seed is None:
        seed = cfg.seed
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    M, L, U, Q = cfg.M, cfg.L, cfg.U, cfg.Q
    bs = np.asarray(cfg.geometry.bs, dtype=float)
    aris = np.asarray(cfg.geometry.aris, dtype=float)
    center = np.asarray(cfg.geometry.user_center, dtype=float)

    # user positions: uniform in a disk
    rad = cfg.geometry.user_radius * np.sqrt(rng.uniform(size=U))
    ang = rng.uniform(0.0, 2.0 * np.pi, size=U)
    users = center[None, :] + np.stack(
        [rad * np.cos(ang), rad * np.sin(ang)], axis=1)

    d_br = float(np.linalg.norm(aris - bs))
    pl_br = pathloss(cfg, d_br, cfg.pathloss.alpha_br)
    a_ris_bs = steering_vector(_angle_from_aris(cfg, bs), L)
    a_bs_ris = steering_vector(_angle_from_bs(cfg, aris), M)
    H_br_los = np.outer(a_ris_bs, a_bs_ris.conj())
    H_br = math.sqrt(pl_br) * _rician_mix(cfg.rician_kappa, H_br_los, _cn(rng, L, M))

    h_bu = np.empty((U, M), dtype=complex)
    for u in range(U):
        d = float(np.linalg.norm(users[u] - bs))
        h_bu[u] = math.sqrt(pathloss(cfg, d, cfg.pathloss.alpha_bu)) * _cn(rng, M)

    h_ru = np.empty((U, L), dtype=complex)
    for u in range(U):
        d = float(np.linalg.norm(users[u] - aris))
        los = steering_vector(_angle_from_aris(cfg, users[u]), L)
        h_ru[u] = math.sqrt(pathloss(cfg, d, cfg.pathloss.alpha_ru)) * \
            _rician_mix(cfg.rician_kappa, los, _cn(rng, L))

    d_q = cfg.geometry.target_distance
    beta_mag = math.sqrt(cfg.c0 ** 2 * d_q ** (-2.0 * cfg.pathloss.alpha_rq) * cfg.rcs)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=Q)
    beta = beta_mag * np.exp(1j * phases)
    G = np.stack([target_response(cfg.target_angles[q], beta[q], L)
                  for q in range(Q)])
    return ChannelSet(H_br=H_br, h_bu=h_bu, h_ru=h_ru, G=G, beta=beta)

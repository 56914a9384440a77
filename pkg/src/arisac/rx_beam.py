"""Receive beamforming: per-target generalized Rayleigh quotient optima."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .config import SystemConfig
from .channels import ChannelSet
from .model import CascadeMatrices, DesignState, build_cascade_matrices, herm


def optimal_receive_beamformer(A1: np.ndarray, A2: np.ndarray
                               ) -> tuple[np.ndarray, float]:
    """Globally optimal w of max_w (w^H A1 w)/(w^H A2 w), A2 > 0.

    Solved as a Cholesky-whitened Hermitian eigenproblem (LAPACK generalized
    eigensolver); returns the unit-norm, phase-fixed eigenvector and the
    attained quotient gamma = lambda_max(A2^-1 A1).
    """
    A1 = herm(np.asarray(A1, dtype=complex))
    A2 = herm(np.asarray(A2, dtype=complex))
    try:
        vals, vecs = scipy.linalg.eigh(A1, A2)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise ValueError("A2 is singular or not positive definite") from exc
    gamma = float(vals[-1])
    w = vecs[:, -1]
    w = w / np.linalg.norm(w)
    mags = np.abs(w)
    k = int(np.argmax(mags > 1e-12 * mags.max()))
    w = w * np.exp(-1j * np.angle(w[k]))
    return w, gamma


def p1_solve(cfg: SystemConfig, ch: ChannelSet, state: DesignState,
             cascade: CascadeMatrices | None = None
             ) -> tuple[np.ndarray, float, np.ndarray]:
    """Update all receive beamformers; returns (W, min-target gamma, gammas)."""
    if cascade is None:
        cascade = build_cascade_matrices(cfg, ch, state.phi)
    FFh = state.F @ state.F.conj().T
    W = np.empty((ch.M, ch.Q), dtype=complex)
    gammas = np.empty(ch.Q)
    for q in range(ch.Q):
        Hq = cascade.H_bq[q]
        Htq = cascade.H_bq_tilde[q]
        A1 = herm(Hq @ FFh @ Hq.conj().T)
        A2 = herm(Htq @ FFh @ Htq.conj().T) + cascade.C
        W[:, q], gammas[q] = optimal_receive_beamformer(A1, A2)
    return W, float(gammas.min()), gammas

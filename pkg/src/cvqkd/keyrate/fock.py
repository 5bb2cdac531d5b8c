"""Truncated Fock-space operators, coherent states, and Gaussian-channel states.

SNU convention: x = a + a^dag, p = i(a^dag - a), so the vacuum quadrature
variance <0|x^2|0> equals 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln


@dataclass(frozen=True)
class FockToolbox:
    """Bosonic operators on the (cutoff+1)-dimensional truncated Fock space."""

    cutoff: int
    a: np.ndarray
    n: np.ndarray
    x: np.ndarray
    p: np.ndarray
    x2: np.ndarray
    p2: np.ndarray

    @property
    def dim(self) -> int:
        return self.cutoff + 1


def fock_toolbox(cutoff: int) -> FockToolbox:
    """Annihilation, number, and quadrature matrices at the given cutoff."""
    if cutoff < 2:
        raise ValueError("cutoff must be at least 2")
    dim = cutoff + 1
    a = np.zeros((dim, dim), dtype=complex)
    idx = np.arange(1, dim)
    a[idx - 1, idx] = np.sqrt(idx)
    adag = a.conj().T
    x = a + adag
    p = 1j * (adag - a)
    return FockToolbox(cutoff=cutoff, a=a, n=adag @ a, x=x, p=p,
                       x2=x @ x, p2=p @ p)


def coherent_state(alpha: complex, cutoff: int, renormalize: bool = True):
    """Truncated coherent-state vector and its truncation deficit.

    Returns ``(vec, deficit)`` where ``deficit`` is the probability weight
    lost to Fock components above the cutoff, evaluated before any
    renormalization.
    """
    n = np.arange(cutoff + 1)
    if alpha == 0:
        vec = np.zeros(cutoff + 1, dtype=complex)
        vec[0] = 1.0
        return vec, 0.0
    log_mag = -0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    vec = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    norm_sq = float(np.sum(np.abs(vec) ** 2))
    deficit = 1.0 - norm_sq
    if renormalize:
        vec = vec / np.sqrt(norm_sq)
    return vec, deficit


def coherent_overlap(alpha: complex, beta: complex) -> complex:
    """Exact overlap <beta|alpha> of untruncated coherent states."""
    return np.exp(-0.5 * (abs(alpha) ** 2 + abs(beta) ** 2)
                  + np.conj(beta) * alpha)


def gram_matrix(states) -> np.ndarray:
    """Pairwise coherent-state overlaps G[k, l] = <alpha_l | alpha_k>."""
    states = np.asarray(states)
    m = len(states)
    g = np.empty((m, m), dtype=complex)
    for k in range(m):
        for l in range(m):
            g[k, l] = coherent_overlap(states[k], states[l])
    return g


def thermal_loss_dyad(alpha: complex, beta: complex, transmittance: float,
                      added_photons: float, cutoff: int,
                      quad_points: int = 20) -> np.ndarray:
    """Fock matrix of the Gaussian channel applied to |alpha><beta|.

    The channel consists of pure loss with the given transmittance followed
    by additive thermal noise with ``added_photons`` mean photons at the
    output (so an input quadrature variance 1 becomes 1 + 2*added_photons
    after a transmittance-1 channel).  The noise integral is evaluated by
    Gauss-Hermite quadrature over the displacement plane; the integrand is
    entire, so a modest node count is ample for the sub-photon noise levels
    used here.
    """
    t = transmittance
    if not 0.0 <= t <= 1.0:
        raise ValueError("transmittance must lie in [0, 1]")
    if added_photons < 0:
        raise ValueError("added photon number must be nonnegative")
    mu = np.sqrt(t) * alpha
    nu = np.sqrt(t) * beta
    # Pure-loss cross factor <beta|alpha>^(1-T).
    loss_factor = np.exp((1.0 - t) * (np.conj(beta) * alpha
                                      - 0.5 * (abs(alpha) ** 2 + abs(beta) ** 2)))
    if added_photons == 0:
        va, _ = coherent_state(mu, cutoff, renormalize=False)
        vb, _ = coherent_state(nu, cutoff, renormalize=False)
        return loss_factor * np.outer(va, vb.conj())

    nodes, weights = np.polynomial.hermite_e.hermegauss(quad_points)
    # hermegauss: weight exp(-u^2/2); displacement spread n_add/2 per axis.
    s = np.sqrt(added_photons / 2.0)
    out = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    diff = np.conj(mu - nu)
    for i, (ur, wr) in enumerate(zip(nodes, weights)):
        for j, (ui, wi) in enumerate(zip(nodes, weights)):
            gamma = s * (ur + 1j * ui)
            phase = np.exp(1j * np.imag(gamma * diff))
            va, _ = coherent_state(gamma + mu, cutoff, renormalize=False)
            vb, _ = coherent_state(gamma + nu, cutoff, renormalize=False)
            out += (wr * wi) * phase * np.outer(va, vb.conj())
    return loss_factor * out / (2.0 * np.pi)


def channel_output_joint_state(states, probs, transmittance: float,
                               added_photons: float, cutoff: int) -> np.ndarray:
    """Register-Fock joint state after the Gaussian channel.

    Source replacement: Alice keeps register state |k> correlated with the
    sent coherent state.  The returned density matrix lives on
    C^M (x) Fock(cutoff) and its register partial trace reproduces the
    coherent-state Gram matrix up to truncation.
    """
    states = np.asarray(states)
    probs = np.asarray(probs, dtype=float)
    m = len(states)
    dim_b = cutoff + 1
    rho = np.zeros((m * dim_b, m * dim_b), dtype=complex)
    for k in range(m):
        for l in range(k, m):
            blk = (np.sqrt(probs[k] * probs[l])
                   * thermal_loss_dyad(states[k], states[l], transmittance,
                                       added_photons, cutoff))
            rho[k * dim_b:(k + 1) * dim_b, l * dim_b:(l + 1) * dim_b] = blk
            if l != k:
                rho[l * dim_b:(l + 1) * dim_b, k * dim_b:(k + 1) * dim_b] = blk.conj().T
    return (rho + rho.conj().T) / 2.0

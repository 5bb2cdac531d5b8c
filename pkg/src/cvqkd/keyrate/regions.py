"""Heterodyne key-map region operators on the truncated Fock space.

Region j is the angular wedge [(2j-1)pi/M, (2j+1)pi/M) with full radial
extent; the operator is R_j = (1/pi) Int_wedge |gamma><gamma| d^2 gamma.
In polar coordinates the matrix element splits into a radial moment and a
wedge phase integral:

    <m|R_j|n> = Gamma((m+n)/2 + 1) / (2 pi sqrt(m! n!))
                * ang(m - n) * exp(i (m - n) 2 pi j / M),

with ang(0) = 2 pi / M and ang(d) = 2 sin(d pi / M) / d otherwise.  The
diagonal is exactly 1/M and the full set sums to the identity: off-diagonal
terms with m - n a nonzero multiple of M vanish wedge by wedge, all others
cancel around the circle.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln


def region_operators(m: int, cutoff: int) -> list:
    """All M wedge operators, each Hermitian of size (cutoff+1)^2."""
    if m < 2:
        raise ValueError("need at least two key regions")
    if cutoff < 2:
        raise ValueError("cutoff must be at least 2")
    dim = cutoff + 1
    rows, cols = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    radial = np.exp(gammaln((rows + cols) / 2.0 + 1.0)
                    - 0.5 * (gammaln(rows + 1.0) + gammaln(cols + 1.0)))
    diff = rows - cols
    ang = np.where(diff == 0, 2.0 * np.pi / m,
                   2.0 * np.sin(diff * np.pi / m) / np.where(diff == 0, 1, diff))
    base = radial * ang / (2.0 * np.pi)
    ops = []
    for j in range(m):
        phase = np.exp(1j * diff * (2.0 * np.pi * j / m))
        op = base * phase
        ops.append((op + op.conj().T) / 2.0)
    return ops


def noisy_region_operators(m: int, cutoff: int, eta: float, v_el: float,
                           n_radial: int = 120, n_angle: int = 2048) -> list:
    """Key-map POVM of a lossy, noisy heterodyne receiver.

    The measured symbol equals the ideal heterodyne outcome plus circular
    Gaussian noise of per-quadrature variance ((1-eta) + v_el)/(2 eta) in
    outcome units (detector loss eta and electronic noise v_el referred to
    one shot-noise unit).  Because the wedge regions are radial, the POVM
    element referred to the receiver input is

        R~_j = (1/pi) Int d^2 gamma |gamma><gamma| u_j(gamma),

    with u_j the probability that the smeared outcome falls in wedge j.
    The matrix element factorizes into the ideal wedge phase integral and a
    radial moment weighted by the Fourier coefficient of the smeared
    angular density:

        <a|R~_j|b> = e^{i(a-b) phi_j} ang(a-b) / (pi sqrt(a! b!))
                     * Int_0^inf dr r^{a+b+1} e^{-r^2} p~(a-b; r/sigma_w),

    where p~(d; s) is the d-th Fourier coefficient of the outcome-angle
    density at amplitude signal-to-noise s.  With eta = 1 and v_el = 0 this
    reduces exactly to `region_operators`.
    """
    from ..protocol import angular_density

    if not 0.0 < eta <= 1.0:
        raise ValueError("detector efficiency must lie in (0, 1]")
    if v_el < 0:
        raise ValueError("electronic noise must be nonnegative")
    sigma_sq = ((1.0 - eta) + v_el) / (2.0 * eta)
    if sigma_sq <= 1e-12:
        return region_operators(m, cutoff)
    sigma = np.sqrt(sigma_sq)

    dim = cutoff + 1
    # Radial quadrature in u = r^2: integrals (1/2) Int u^s e^-u p~(d; ...) du.
    from scipy.special import roots_laguerre
    u_nodes, u_weights = roots_laguerre(n_radial)

    # Fourier coefficients of the angular density at each radial node; the
    # density is even in the angle, so only cosine terms survive.  Normalize
    # so the d=0 coefficient (total probability) is exactly 1.
    phi = 2.0 * np.pi * np.arange(n_angle) / n_angle - np.pi
    snr = np.sqrt(u_nodes) / sigma
    dens = angular_density(phi[None, :], snr[:, None])
    dmax = cutoff
    p_tilde = np.empty((len(snr), dmax + 1))
    dtheta = 2.0 * np.pi / n_angle
    for d in range(dmax + 1):
        p_tilde[:, d] = np.sum(dens * np.cos(d * phi)[None, :], axis=1) * dtheta
    p_tilde /= p_tilde[:, :1]                     # enforce p~(0) = 1

    rows, cols = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    diff = rows - cols
    ang = np.where(diff == 0, 2.0 * np.pi / m,
                   2.0 * np.sin(diff * np.pi / m) / np.where(diff == 0, 1, diff))
    log_norm = -0.5 * (gammaln(rows + 1.0) + gammaln(cols + 1.0))

    # radial[a, b] = (1/2) sum_i w_i u_i^((a+b)/2) p~(|a-b|; sqrt(u_i)/sigma)
    half_pow = (rows + cols) / 2.0
    radial = np.empty((dim, dim))
    for a in range(dim):
        for b in range(dim):
            integ = u_nodes ** half_pow[a, b] * p_tilde[:, abs(a - b)]
            radial[a, b] = 0.5 * float(u_weights @ integ)

    base = np.exp(log_norm) * radial * ang / np.pi
    ops = []
    for j in range(m):
        phase_j = np.exp(1j * diff * (2.0 * np.pi * j / m))
        op = base * phase_j
        ops.append((op + op.conj().T) / 2.0)
    # Spread the residual quadrature defect evenly to restore completeness.
    defect = np.eye(dim) - sum(ops)
    ops = [op + defect / m for op in ops]
    return ops


def region_operator_sqrts(ops) -> list:
    """PSD square roots of the region operators (eigenvalues clipped at 0)."""
    out = []
    for op in ops:
        w, v = np.linalg.eigh(op)
        w = np.clip(w, 0.0, None)
        out.append((v * np.sqrt(w)) @ v.conj().T)
    return out


def fock_rotation(cutoff: int, angle: float) -> np.ndarray:
    """Phase-space rotation exp(-i * angle * n) as a diagonal Fock matrix."""
    return np.diag(np.exp(-1j * angle * np.arange(cutoff + 1)))

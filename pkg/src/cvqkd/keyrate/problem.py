"""Constrained density-operator set and relative-entropy objective.

The optimization variable is the joint register-Fock state rho_AB after the
channel.  The feasible set fixes Alice's reduced state through the
coherent-state Gram matrix (source replacement) and pins Bob's per-state
first and second quadrature moments to the values implied by the estimated
channel.  The objective is the quantum relative entropy between the
key-map post-processed state and its pinching over the key register,
evaluated in bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..protocol import Constellation
from .fock import channel_output_joint_state, coherent_state, fock_toolbox, gram_matrix
from .regions import noisy_region_operators, region_operator_sqrts, region_operators


class InfeasibleTargetsError(ValueError):
    """Moment targets violate the vacuum uncertainty floor."""


@dataclass
class KeyRateProblem:
    """Truncated-Fock constraint set for the key-rate minimization.

    The moment targets are channel-output referred when the detector is
    trusted (efficiency and electronic noise divided out) and detector-output
    referred otherwise.  ``measured_mean`` / ``measured_std`` describe the
    actual heterodyne symbol statistics (detector included) and feed the
    error-correction leakage model.
    """

    constellation: Constellation
    n_cutoff: int
    transmittance: float
    excess_noise: float
    eta: float
    v_el: float
    trusted_detector: bool
    gram: np.ndarray
    rho_a: np.ndarray
    constraint_ops: list
    constraint_targets: np.ndarray
    feasible_state: np.ndarray
    region_sqrts: list
    measured_mean: float
    measured_std: float
    z4_symmetric: bool = True
    gap_tol: float = 1e-5
    truncation_deficit: float = 0.0

    @property
    def m(self) -> int:
        return self.constellation.m

    @property
    def dim(self) -> int:
        return self.m * (self.n_cutoff + 1)


def _register_projector(m: int, k: int, dim_b: int, op_b: np.ndarray) -> np.ndarray:
    """|k><k| (x) op_b embedded in the register-Fock space."""
    out = np.zeros((m * dim_b, m * dim_b), dtype=complex)
    out[k * dim_b:(k + 1) * dim_b, k * dim_b:(k + 1) * dim_b] = op_b
    return out


def _register_pair(m: int, k: int, l: int, dim_b: int, coeff: complex) -> np.ndarray:
    """coeff |k><l| (x) I plus Hermitian conjugate."""
    out = np.zeros((m * dim_b, m * dim_b), dtype=complex)
    blk = coeff * np.eye(dim_b)
    out[k * dim_b:(k + 1) * dim_b, l * dim_b:(l + 1) * dim_b] = blk
    out[l * dim_b:(l + 1) * dim_b, k * dim_b:(k + 1) * dim_b] = blk.conj().T
    return out


def build_problem(constellation: Constellation, estimate, eta: float = None,
                  v_el: float = None, n_cutoff: int = 10,
                  trusted_detector: bool = True, gap_tol: float = 1e-5
                  ) -> KeyRateProblem:
    """Assemble the constrained set from a channel estimate.

    Parameters
    ----------
    constellation : Constellation
        The effective (leak-corrected) constellation Alice prepared.
    estimate : ChannelEstimate or (T, epsilon) pair
        Channel transmittance and input-referred excess noise.  A negative
        noise estimate (possible from finite sampling) is clamped to zero.
    eta, v_el : float
        Detector calibration; taken from ``estimate`` when present there.
    trusted_detector : bool
        Trusted mode places the constraints at the channel output with
        (eta, v_el) divided out; untrusted mode folds the detector into the
        channel.
    """
    if hasattr(estimate, "transmittance"):
        t = float(estimate.transmittance)
        eps = float(estimate.excess_noise)
        eta = float(estimate.eta) if eta is None else float(eta)
        v_el = float(estimate.v_el) if v_el is None else float(v_el)
    else:
        t, eps = map(float, estimate)
    if eta is None or v_el is None:
        raise ValueError("detector calibration (eta, v_el) is required")
    if not 0.0 < t <= 1.2:
        raise ValueError("transmittance estimate outside (0, 1.2]")
    if not 0.0 < eta <= 1.0:
        raise ValueError("detector efficiency must lie in (0, 1]")
    eps = max(eps, 0.0)

    m = constellation.m
    dim_b = n_cutoff + 1
    alpha = constellation.amplitude

    # Truncation adequacy for the largest coherent amplitude in play.
    _, deficit = coherent_state(alpha, n_cutoff, renormalize=False)
    if deficit > 1e-6:
        raise ValueError(
            f"cutoff {n_cutoff} leaves truncation deficit {deficit:.2e} > 1e-6 "
            f"for amplitude {alpha:.3f}; raise the cutoff")

    if trusted_detector:
        t_state, var = t, 1.0 + t * eps
    else:
        t_state, var = eta * t, 1.0 + eta * t * eps + 2.0 * v_el
    if var < 1.0 - 1e-9:
        raise InfeasibleTargetsError(
            "second-moment targets dip below the vacuum floor")
    added_photons = (var - 1.0) / 2.0

    tb = fock_toolbox(n_cutoff)
    means_x = 2.0 * np.sqrt(t_state) * np.real(constellation.states)
    means_p = 2.0 * np.sqrt(t_state) * np.imag(constellation.states)

    ops, targets = [], []
    # Register partial trace pinned to the source-replacement reduced state.
    gram = gram_matrix(constellation.states)
    probs = constellation.probs
    rho_a = np.sqrt(np.outer(probs, probs)) * gram
    for k in range(m):
        ops.append(_register_projector(m, k, dim_b, np.eye(dim_b, dtype=complex)))
        targets.append(np.real(rho_a[k, k]))
        for l in range(k + 1, m):
            ops.append(_register_pair(m, k, l, dim_b, 0.5))
            targets.append(np.real(rho_a[k, l]))
            ops.append(_register_pair(m, k, l, dim_b, 0.5j))
            targets.append(np.imag(rho_a[k, l]))
    # Per-state quadrature moments, weighted by the preparation probability.
    for k in range(m):
        for op_b, tgt in (
            (tb.x, means_x[k]),
            (tb.p, means_p[k]),
            (tb.x2, means_x[k] ** 2 + var),
            (tb.p2, means_p[k] ** 2 + var),
        ):
            ops.append(_register_projector(m, k, dim_b, op_b))
            targets.append(probs[k] * tgt)

    feasible = channel_output_joint_state(
        constellation.states, probs, t_state, added_photons, n_cutoff)
    # Trusted mode keeps Eve out of the detector: the key map is the noisy
    # heterodyne POVM on the channel output.  Untrusted mode folds the
    # detector into the channel, so the key map is the ideal wedge POVM on
    # the detector-referred state.  Either way the post-processed key
    # variable carries the statistics Bob actually measures.
    if trusted_detector:
        regions = noisy_region_operators(m, n_cutoff, eta, v_el)
    else:
        regions = region_operators(m, n_cutoff)
    sqrts = region_operator_sqrts(regions)

    measured_mean = np.sqrt(eta * t / 2.0) * 2.0 * alpha
    measured_std = float(np.sqrt(1.0 + v_el + eta * t * eps / 2.0))

    return KeyRateProblem(
        constellation=constellation,
        n_cutoff=n_cutoff,
        transmittance=t,
        excess_noise=eps,
        eta=eta,
        v_el=v_el,
        trusted_detector=trusted_detector,
        gram=gram,
        rho_a=rho_a,
        constraint_ops=ops,
        constraint_targets=np.asarray(targets, dtype=float),
        feasible_state=feasible,
        region_sqrts=sqrts,
        measured_mean=float(measured_mean),
        measured_std=measured_std,
        z4_symmetric=(m % 4 == 0),
        gap_tol=gap_tol,
    )


def constraint_violation(rho: np.ndarray, problem: KeyRateProblem) -> float:
    """Largest absolute constraint residual of a candidate state."""
    worst = abs(np.trace(rho).real - 1.0)
    for op, tgt in zip(problem.constraint_ops, problem.constraint_targets):
        worst = max(worst, abs(np.real(np.trace(op @ rho)) - tgt))
    return float(worst)


class KeyMapObjective:
    """Relative entropy D(G(rho) || Z[G(rho)]) in bits, with gradient.

    The post-processing map G attaches a key register through the Kraus
    operator K = sum_z |z> (x) I_A (x) sqrt(R_z); Z pinches the key register.
    Because the region operators form a complete POVM, K is an isometry and
    the objective reduces to sector entropies:

        f(rho) = sum_z S(K_z rho K_z) - S(rho),   K_z = I_A (x) sqrt(R_z),

    with S the (unnormalized) von Neumann entropy in bits.  The gradient is
    log2(rho) - sum_z K_z log2(K_z rho K_z) K_z, evaluated on the
    spectrally perturbed state (1-delta) rho + delta I/dim.
    """

    def __init__(self, problem: KeyRateProblem, delta: float = 1e-10):
        self.delta = delta
        dim_a = problem.m
        self.kraus = [np.kron(np.eye(dim_a), s) for s in problem.region_sqrts]
        self.dim = problem.dim

    def _perturb(self, rho: np.ndarray) -> np.ndarray:
        return (1.0 - self.delta) * rho + self.delta * np.eye(self.dim) / self.dim

    @staticmethod
    def _entropy_bits(eigs: np.ndarray) -> float:
        lam = eigs[eigs > 0]
        return float(-np.sum(lam * np.log2(lam)))

    def value(self, rho: np.ndarray) -> float:
        rho_d = self._perturb(rho)
        # The perturbed state has spectrum >= delta/dim; snapping the eigh
        # output to that floor removes roundoff scatter inside the
        # degenerate perturbation cluster.
        w = np.clip(np.linalg.eigvalsh(rho_d), self.delta / self.dim, None)
        f = float(np.sum(w * np.log2(w)))
        for k in self.kraus:
            sub = np.linalg.eigvalsh(k @ rho_d @ k)
            sub = sub[sub > 0]
            f -= float(np.sum(sub * np.log2(sub)))
        return f

    def value_and_gradient(self, rho: np.ndarray):
        rho_d = self._perturb(rho)

        w, v = np.linalg.eigh(rho_d)
        wc = np.clip(w, self.delta / self.dim, None)
        f = float(np.sum(wc * np.log2(wc)))
        grad = (v * np.log2(wc)) @ v.conj().T

        for k in self.kraus:
            sub = k @ rho_d @ k
            w, v = np.linalg.eigh(sub)
            wc = np.clip(w, 1e-30, None)
            pos = w > 0
            f -= float(np.sum(w[pos] * np.log2(w[pos])))
            log_sub = (v * np.log2(wc)) @ v.conj().T
            grad -= k @ log_sub @ k
        grad = (grad + grad.conj().T) / 2.0
        return f, grad


def objective_and_gradient(rho: np.ndarray, problem: KeyRateProblem,
                           delta: float = 1e-10):
    """One-shot objective value (bits) and gradient at ``rho``."""
    return KeyMapObjective(problem, delta=delta).value_and_gradient(rho)

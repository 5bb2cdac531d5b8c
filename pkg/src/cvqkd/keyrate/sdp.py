"""Small dense semidefinite-program solver for the key-rate linear subproblems.

Solves block-diagonal Hermitian SDPs of the form

    minimize    sum_m <C_m, X_m>
    subject to  sum_m <A_im, X_m> = b_i,   i = 1..r
                X_m  PSD Hermitian,

with <P, Q> = Re Tr(P Q) for Hermitian P, Q.  The solver follows the dual
barrier central path

    maximize  b.y + mu * logdet(C - A*(y)),

driving mu -> 0 with damped Newton steps.  The dual objective b.y of any
dual-feasible iterate is a certified lower bound on the primal optimum,
which is exactly what the Frank-Wolfe bound bookkeeping needs: the bound
stays valid even if the subproblem is solved inexactly.

The feasible sets used by the key-rate engine always pin the trace (the
register partial-trace constraints sum to the identity), which gives a
strictly feasible dual start along the identity direction.  Constraint
preprocessing is independent of the objective, so a `BlockSdpSolver` is
built once per feasible set and re-used for every linear minimization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular


class SdpInfeasibleError(ValueError):
    """Raised when the equality constraints are mutually inconsistent."""


class SdpStructureError(ValueError):
    """Raised when the constraint family cannot anchor the dual start."""


@dataclass
class SdpSolution:
    x_blocks: list
    value: float
    lower_bound: float
    gap: float
    feas_residual: float
    mu_steps: int
    newton_steps: int
    status: str
    dual_y: np.ndarray = None
    slack_min: float = 0.0

    @property
    def x(self):
        """Primal matrix assembled as a dense block-diagonal array."""
        dim = sum(b.shape[0] for b in self.x_blocks)
        out = np.zeros((dim, dim), dtype=complex)
        ofs = 0
        for blk in self.x_blocks:
            n = blk.shape[0]
            out[ofs:ofs + n, ofs:ofs + n] = blk
            ofs += n
        return out


def _as_blocks(mats):
    if isinstance(mats, np.ndarray):
        return [np.asarray(mats, dtype=complex)]
    return [np.asarray(m, dtype=complex) for m in mats]


def _vec_blocks(blocks):
    """Isometric real vectorization of a Hermitian block list.

    Packs [diag, sqrt(2)*Re(upper), sqrt(2)*Im(upper)] per block so that the
    Euclidean dot product of two vectors equals Re Tr(A B).
    """
    parts = []
    for m in blocks:
        n = m.shape[0]
        iu = np.triu_indices(n, k=1)
        parts.append(np.real(np.diagonal(m)))
        parts.append(np.sqrt(2.0) * np.real(m[iu]))
        parts.append(np.sqrt(2.0) * np.imag(m[iu]))
    return np.concatenate(parts) if parts else np.zeros(0)


def _unvec_blocks(vec, dims):
    out = []
    ofs = 0
    for n in dims:
        diag = vec[ofs:ofs + n]
        ofs += n
        k = n * (n - 1) // 2
        re = vec[ofs:ofs + k] / np.sqrt(2.0)
        ofs += k
        im = vec[ofs:ofs + k] / np.sqrt(2.0)
        ofs += k
        m = np.zeros((n, n), dtype=complex)
        iu = np.triu_indices(n, k=1)
        m[iu] = re + 1j * im
        m = m + m.conj().T
        m[np.diag_indices(n)] = diag
        out.append(m)
    return out


def _chol_or_none(blocks):
    try:
        return [cho_factor(b, lower=True, check_finite=False) for b in blocks]
    except (np.linalg.LinAlgError, ValueError):
        return None


def _logdet(chol_factors):
    return 2.0 * sum(
        np.sum(np.log(np.real(np.diagonal(c[0])))) for c in chol_factors
    )


class BlockSdpSolver:
    """Prepared equality-constrained SDP over a fixed feasible set.

    Parameters
    ----------
    constraint_ops : sequence
        Hermitian operators, each an array (one block) or a list of arrays
        matching ``dims``.
    targets : sequence of float
        Right-hand sides b_i.

    Raises
    ------
    SdpInfeasibleError
        If dependent constraint rows carry conflicting targets.
    SdpStructureError
        If the identity is not in the span of the constraint operators
        (the trace of X must be pinned for the dual start).
    """

    def __init__(self, constraint_ops, targets):
        ops = [_as_blocks(a) for a in constraint_ops]
        dims = [b.shape[0] for b in ops[0]]
        if any([b.shape[0] for b in a] != dims for a in ops):
            raise ValueError("constraint operators must share one block structure")
        b = np.asarray(targets, dtype=float)
        if len(ops) != b.size:
            raise ValueError("number of targets must match number of operators")
        self.dims = dims
        self.n_total = sum(dims)

        # Orthonormalize the constraint family; prune dependent rows and
        # check that pruned directions are consistent with their targets.
        amat = np.array([_vec_blocks(a) for a in ops])
        scale = max(1.0, float(np.max(np.abs(b))), float(np.max(np.abs(amat))))
        u, s, vt = np.linalg.svd(amat, full_matrices=False)
        rank = int(np.sum(s > 1e-12 * max(s[0], 1.0)))
        if rank < len(ops):
            null = u[:, rank:]
            if np.max(np.abs(null.T @ b), initial=0.0) > 1e-9 * scale:
                raise SdpInfeasibleError(
                    "linearly dependent equality constraints with conflicting targets")
        self.rank = rank
        self.bt = (u[:, :rank].T @ b) / s[:rank]
        self.a_ortho = vt[:rank]
        a_ortho_blocks = [_unvec_blocks(self.a_ortho[j], dims) for j in range(rank)]
        self.a_stacks = [
            np.stack([a_ortho_blocks[j][m] for j in range(rank)])
            for m in range(len(dims))
        ]

        # Identity direction inside the constraint range anchors a strictly
        # feasible dual start and pins the trace of every feasible X.
        id_vec = _vec_blocks([np.eye(n, dtype=complex) for n in dims])
        e = self.a_ortho @ id_vec
        if np.linalg.norm(self.a_ortho.T @ e - id_vec) > 1e-8 * np.sqrt(self.n_total):
            raise SdpStructureError(
                "constraint family does not pin the trace; add a trace constraint")
        self.id_combo = e
        self.trace_target = float(e @ self.bt)
        if self.trace_target <= 0:
            raise SdpInfeasibleError("feasible set has non-positive trace")

        # Vectorization layout per block for the batched Hessian assembly.
        self.vec_dim = self.a_ortho.shape[1]
        self._layout = []
        ofs = 0
        for n in dims:
            iu = np.triu_indices(n, k=1)
            k = n * (n - 1) // 2
            self._layout.append((ofs, n, k, iu))
            ofs += n + 2 * k

    # -- barrier model -------------------------------------------------

    def _slack(self, c_blocks, y):
        corr = _unvec_blocks(self.a_ortho.T @ y, self.dims)
        return [c - d for c, d in zip(c_blocks, corr)]

    def _grad(self, chol, mu):
        sinv = [cho_solve(cf, np.eye(len(cf[0]), dtype=complex),
                          check_finite=False) for cf in chol]
        return self.bt - mu * (self.a_ortho @ _vec_blocks(sinv))

    def _hess_unit(self, chol):
        """Hessian with the mu factor removed: G_ij = <A_i, S^-1 A_j S^-1>."""
        r = self.rank
        tvecs = np.empty((r, self.vec_dim))
        for m, cf in enumerate(chol):
            low = cf[0]
            n = self.dims[m]
            stack = self.a_stacks[m]
            half = solve_triangular(
                low, stack.transpose(1, 0, 2).reshape(n, r * n),
                lower=True, check_finite=False)
            half = half.reshape(n, r, n).transpose(1, 0, 2)      # L^-1 A_j
            full = solve_triangular(
                low,
                half.conj().transpose(0, 2, 1).transpose(1, 0, 2).reshape(n, r * n),
                lower=True, check_finite=False)
            t_all = full.reshape(n, r, n).transpose(1, 2, 0).conj()  # Hermitian T_j
            ofs, n, k, iu = self._layout[m]
            tvecs[:, ofs:ofs + n] = np.real(t_all[:, np.arange(n), np.arange(n)])
            upper = t_all[:, iu[0], iu[1]]
            tvecs[:, ofs + n:ofs + n + k] = np.sqrt(2.0) * np.real(upper)
            tvecs[:, ofs + n + k:ofs + n + 2 * k] = np.sqrt(2.0) * np.imag(upper)
        return tvecs @ tvecs.T

    # -- main entry ------------------------------------------------------

    def solve(self, c_blocks, *, gap_tol=1e-7, feas_tol=1e-8, max_mu_steps=120,
              max_newton=60, mu_shrink=0.15):
        """Minimize <C, X> over the prepared feasible set.

        Returns an `SdpSolution`; ``lower_bound`` is rigorous (dual objective
        of a dual point whose slack is re-checked by eigenvalue, negative
        eigenvalues charged against the pinned trace).  ``gap`` may be very
        slightly negative when primal roundoff puts the recovered X
        marginally outside the PSD cone.
        """
        C = _as_blocks(c_blocks)
        if [b.shape[0] for b in C] != self.dims:
            raise ValueError("objective blocks must match the constraint structure")
        rank, bt = self.rank, self.bt

        eig_min = min(np.linalg.eigvalsh(c)[0] for c in C)
        eig_max = max(np.linalg.eigvalsh(c)[-1] for c in C)
        obj_scale = max(1.0, abs(eig_min), abs(eig_max))
        tau = max(0.0, -eig_min) + obj_scale
        y = -tau * self.id_combo
        S = self._slack(C, y)
        chol = _chol_or_none(S)
        if chol is None:
            raise SdpStructureError("failed to construct a strictly feasible dual start")

        gap_goal = gap_tol * max(1.0, obj_scale)
        feas_goal = feas_tol * max(1.0, float(np.linalg.norm(bt)))
        mu = max(eig_max + tau, 1e-3 * obj_scale)
        mu_final = 0.4 * gap_goal / max(self.n_total, 1)
        newton_total = 0
        status = "max_iterations"

        def newton_phase(mu, y, S, chol, max_steps, want_feas):
            nonlocal newton_total
            grad_norm = np.inf
            for _ in range(max_steps):
                newton_total += 1
                grad = self._grad(chol, mu)
                grad_norm = float(np.linalg.norm(grad))
                hess = self._hess_unit(chol)
                jitter = 1e-13 * max(float(np.trace(hess)) / rank, 1e-30)
                try:
                    hf = cho_factor(hess + jitter * np.eye(rank), lower=True,
                                    check_finite=False)
                    step = cho_solve(hf, grad, check_finite=False) / mu
                except np.linalg.LinAlgError:
                    step = np.linalg.lstsq(hess, grad, rcond=None)[0] / mu
                decrement = float(grad @ step)      # = mu * lambda_phi^2
                if decrement <= 0:
                    return y, S, chol, True, grad_norm
                centered = decrement <= 0.01 * mu
                if centered and (grad_norm <= feas_goal or not want_feas):
                    return y, S, chol, True, grad_norm
                g0 = bt @ y + mu * _logdet(chol)
                t, accepted = 1.0, False
                while t > 1e-14:
                    y_try = y + t * step
                    s_try = self._slack(C, y_try)
                    chol_try = _chol_or_none(s_try)
                    if chol_try is not None:
                        g1 = bt @ y_try + mu * _logdet(chol_try)
                        if g1 >= g0 + 0.01 * t * decrement:
                            y, S, chol = y_try, s_try, chol_try
                            accepted = True
                            break
                    t *= 0.5
                if not accepted:
                    return y, S, chol, False, grad_norm
            grad = self._grad(chol, mu)
            return y, S, chol, False, float(np.linalg.norm(grad))

        mu_step = 0
        for mu_step in range(1, max_mu_steps + 1):
            final = mu <= mu_final * (1 + 1e-12)
            y, S, chol, converged, grad_norm = newton_phase(
                mu, y, S, chol, max_newton if final else 12, want_feas=final)
            if final:
                status = "optimal" if (converged and grad_norm <= feas_goal) else "stalled"
                break
            mu = max(mu * mu_shrink, mu_final)

        # Primal recovery X = mu * S^{-1}, plus an exact affine correction in
        # the orthonormalized constraint coordinates.
        x_blocks = [mu * cho_solve(cf, np.eye(len(cf[0]), dtype=complex),
                                   check_finite=False) for cf in chol]
        x_blocks = [(xb + xb.conj().T) / 2 for xb in x_blocks]
        w = bt - self.a_ortho @ _vec_blocks(x_blocks)
        corr = _unvec_blocks(self.a_ortho.T @ w, self.dims)
        x_blocks = [xb + cb for xb, cb in zip(x_blocks, corr)]
        feas_res = float(np.linalg.norm(bt - self.a_ortho @ _vec_blocks(x_blocks)))

        value = float(sum(np.real(np.trace(cb @ xb)) for cb, xb in zip(C, x_blocks)))
        slack_min = min(np.linalg.eigvalsh(sb)[0] for sb in S)
        lower = float(bt @ y) + min(0.0, float(slack_min)) * self.trace_target
        return SdpSolution(
            x_blocks=x_blocks,
            value=value,
            lower_bound=lower,
            gap=value - lower,
            feas_residual=feas_res,
            mu_steps=mu_step,
            newton_steps=newton_total,
            status=status,
            dual_y=y,
            slack_min=float(slack_min),
        )


def solve_block_sdp(c_blocks, constraint_ops, targets, **kwargs):
    """One-shot convenience wrapper around `BlockSdpSolver`."""
    return BlockSdpSolver(constraint_ops, targets).solve(c_blocks, **kwargs)

"""Fourfold rotation symmetry reduction for PSK key-rate problems.

The M-PSK feasible set (Gram constraint plus per-state x/p first and second
moments with isotropic variance targets) is invariant under the joint action

    V = (register shift by M/4) (x) (Fock rotation by +pi/2),

because a 90-degree rotation permutes the quadrature operator family
{x, p, x^2, p^2} onto itself.  Any linear objective that commutes with V can
therefore be minimized over the V-invariant subalgebra: block-diagonal
matrices in the V eigenbasis, with four sectors of dimension M(N_c+1)/4.
This collapses the Frank-Wolfe subproblem from one dense PSD variable to
four small ones.
"""

from __future__ import annotations

import numpy as np


class Z4Reduction:
    """Eigenbasis of the fourfold shift-and-rotate symmetry."""

    def __init__(self, m: int, cutoff: int):
        if m % 4 != 0:
            raise ValueError("fourfold reduction needs M divisible by 4")
        self.m = m
        self.cutoff = cutoff
        dim_b = cutoff + 1
        s = m // 4
        total = m * dim_b
        basis = np.zeros((total, total), dtype=complex)
        col = 0
        dims = []
        for sector in range(4):
            start = col
            for r in range(s):
                for n in range(dim_b):
                    j = (sector - n) % 4
                    for t in range(4):
                        k = r + s * t
                        basis[k * dim_b + n, col] = 0.5 * (1j) ** (-j * t % 4)
                    col += 1
            dims.append(col - start)
        self.basis = basis
        self.sector_dims = dims
        self._offsets = np.concatenate([[0], np.cumsum(dims)])
        self._gen = None
        self._gen_powers = None

    def generator(self) -> np.ndarray:
        """The symmetry unitary V on the full register-Fock space."""
        if self._gen is None:
            dim_b = self.cutoff + 1
            shift = np.zeros((self.m, self.m))
            s = self.m // 4
            for k in range(self.m):
                shift[(k + s) % self.m, k] = 1.0
            rot = np.diag(np.exp(1j * (np.pi / 2) * np.arange(dim_b)))
            self._gen = np.kron(shift, rot)
        return self._gen

    def invariance_defect(self, op: np.ndarray) -> float:
        """Relative Frobenius distance between op and its V conjugate."""
        v = self.generator()
        moved = v.conj().T @ op @ v
        denom = max(np.linalg.norm(op), 1e-300)
        return float(np.linalg.norm(moved - op) / denom)

    def twirl(self, op: np.ndarray) -> np.ndarray:
        """Group average (1/4) sum_t V^t op V^-t.

        Orthogonal projection onto the invariant subalgebra; for operators
        that are invariant up to numerical noise this strips the noise
        component without moving the invariant part.
        """
        if self._gen_powers is None:
            v = self.generator()
            powers = [np.eye(v.shape[0], dtype=complex)]
            for _ in range(3):
                powers.append(v @ powers[-1])
            self._gen_powers = powers
        acc = np.zeros_like(op, dtype=complex)
        for vt in self._gen_powers:
            acc += vt @ op @ vt.conj().T
        return acc / 4.0

    def reduce(self, op: np.ndarray) -> list:
        """Diagonal sector blocks of B^dag op B.

        Exact for V-invariant operators; for general Hermitian operators the
        diagonal blocks still evaluate Tr(X op) correctly for every
        block-diagonal (V-invariant) X.
        """
        full = self.basis.conj().T @ op @ self.basis
        out = []
        for i in range(4):
            lo, hi = self._offsets[i], self._offsets[i + 1]
            blk = full[lo:hi, lo:hi]
            out.append((blk + blk.conj().T) / 2.0)
        return out

    def expand(self, blocks) -> np.ndarray:
        """Assemble a full-space operator from sector blocks."""
        total = self.basis.shape[0]
        bd = np.zeros((total, total), dtype=complex)
        for i, blk in enumerate(blocks):
            lo, hi = self._offsets[i], self._offsets[i + 1]
            bd[lo:hi, lo:hi] = blk
        return self.basis @ bd @ self.basis.conj().T

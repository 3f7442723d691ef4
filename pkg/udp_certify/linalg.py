#!/usr/bin/env python

"""
udp_certify/linalg.py

===============================================================================

    Copyright (C) 2024 The udp_certify authors.

    This file is part of udp_certify.

    This is free software: you can redistribute it and/or modify
    it under the terms of the GNU General Public License as published by
    the Free Software Foundation, either version 3 of the License, or
    (at your option) any later version.

    This software is distributed in the hope that it will be useful,
    but WITHOUT ANY WARRANTY; without even the implied warranty of
    MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
    GNU General Public License for more details.

    You should have received a copy of the GNU General Public License
    along with this software. If not, see <https://www.gnu.org/licenses/>.

===============================================================================

Dense linear algebra for design matrices: singular value decomposition,
kernel basis, column norms and projections.

"""

import logging
from typing import Any, Dict, Sequence

from cardinal_pythonlib.reprfunc import auto_repr
import numpy as np
from scipy.linalg import svd

from udp_certify.constants import DEFAULT_RANK_TOL, KERNEL_SIGN_TOL
from udp_certify.errors import InputError, ParameterError, RankError
from udp_certify.helperfunc import require_finite

log = logging.getLogger(__name__)


# =============================================================================
# Helpers
# =============================================================================


def normalize_signs(basis: np.ndarray) -> np.ndarray:
    """
    Flips each column so that its first entry of magnitude above
    ``KERNEL_SIGN_TOL`` is positive. Makes kernel bases reproducible.
    """
    basis = basis.copy()
    for j in range(basis.shape[1]):
        col = basis[:, j]
        big = np.flatnonzero(np.abs(col) > KERNEL_SIGN_TOL)
        if big.size and col[big[0]] < 0:
            basis[:, j] = -col
    return basis


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


# =============================================================================
# DesignMatrix
# =============================================================================


class DesignMatrix:
    """
    An n×p design matrix X with its thin SVD and kernel basis.

    The singular values kept are those above ``rank_tol`` times the largest;
    the kernel basis spans the orthogonal complement of the corresponding
    right singular vectors.
    """

    def __init__(
        self,
        entries: np.ndarray,
        singular_values: np.ndarray,
        left_vectors: np.ndarray,
        right_vectors: np.ndarray,
        kernel_basis: np.ndarray,
        rank_tol: float = DEFAULT_RANK_TOL,
    ) -> None:
        """
        Use :func:`decompose` rather than calling this directly.

        Args:
            entries:
                n×p matrix X.
            singular_values:
                ρ_1 ≥ ... ≥ ρ_r > 0.
            left_vectors:
                n×r left singular vectors.
            right_vectors:
                r×p right singular vectors (rows).
            kernel_basis:
                p×(p - r) orthonormal basis of ker X.
            rank_tol:
                Relative tolerance used to determine the rank.
        """
        self.entries = _readonly(entries)
        self.singular_values = _readonly(singular_values)
        self.left_vectors = _readonly(left_vectors)
        self.right_vectors = _readonly(right_vectors)
        self.kernel_basis = _readonly(kernel_basis)
        self.rank_tol = rank_tol
        self.column_norms = _readonly(np.linalg.norm(self.entries, axis=0))

    def __str__(self) -> str:
        return (
            f"DesignMatrix({self.n}×{self.p}, rank {self.rank}, "
            f"kernel dim {self.kernel_dim})"
        )

    def __repr__(self) -> str:
        return auto_repr(self)

    # -------------------------------------------------------------------------
    # Shape and rank
    # -------------------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def p(self) -> int:
        return self.entries.shape[1]

    @property
    def rank(self) -> int:
        return self.singular_values.size

    @property
    def kernel_dim(self) -> int:
        return self.kernel_basis.shape[1]

    @property
    def is_full_row_rank(self) -> bool:
        return self.rank == self.n

    def require_full_row_rank(self) -> None:
        """
        Certification results assume rank(X) = n ≤ p. Raises
        :exc:`RankError` otherwise.
        """
        if self.n > self.p:
            raise RankError(
                f"Design has more rows ({self.n}) than columns ({self.p})"
            )
        if not self.is_full_row_rank:
            raise RankError(
                f"Design is rank deficient: rank {self.rank} < n = {self.n}; "
                f"it cannot be certified"
            )

    # -------------------------------------------------------------------------
    # Spectral quantities
    # -------------------------------------------------------------------------

    def largest_singular(self) -> float:
        """
        ρ_1.
        """
        return float(self.singular_values[0])

    def smallest_singular(self) -> float:
        """
        The smallest retained singular value, ρ_n for a full-row-rank design
        (ρ_r in general).
        """
        return float(self.singular_values[-1])

    def column_norm_max(self) -> float:
        """
        max_j ‖X_j‖₂, i.e. ‖X‖_{ℓ2,∞}.
        """
        return float(self.column_norms.max())

    def reconstruction_error(self) -> float:
        """
        Relative Frobenius error of U diag(ρ) Vᵀ against X.
        """
        recon = (
            self.left_vectors * self.singular_values[np.newaxis, :]
        ) @ self.right_vectors
        return float(
            np.linalg.norm(recon - self.entries)
            / np.linalg.norm(self.entries)
        )

    # -------------------------------------------------------------------------
    # Projections
    # -------------------------------------------------------------------------

    def project_kernel(self, gamma: np.ndarray) -> np.ndarray:
        """
        Orthogonal projection onto ker X.
        """
        b = self.kernel_basis
        return b @ (b.T @ gamma)

    def project_row_space(self, gamma: np.ndarray) -> np.ndarray:
        """
        Orthogonal projection onto the row space of X.
        """
        v = self.right_vectors
        return v.T @ (v @ gamma)

    # -------------------------------------------------------------------------
    # Derived designs
    # -------------------------------------------------------------------------

    def submatrix(self, support: Sequence[int]) -> np.ndarray:
        """
        The columns X_S, as an n×|S| array.
        """
        idx = list(support)
        if any(j < 0 or j >= self.p for j in idx):
            raise InputError(f"Support {idx} out of range for p = {self.p}")
        return self.entries[:, idx]

    def scaled(self, c: float) -> "DesignMatrix":
        """
        The design c·X.
        """
        if c == 0:
            raise ParameterError("Cannot scale a design by zero")
        return decompose(c * np.asarray(self.entries), self.rank_tol)

    def as_json_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "p": self.p,
            "rank": self.rank,
            "kernel_dim": self.kernel_dim,
            "rho_1": self.largest_singular(),
            "rho_min": self.smallest_singular(),
            "column_norm_max": self.column_norm_max(),
        }


# =============================================================================
# Construction
# =============================================================================


def decompose(
    entries: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL
) -> DesignMatrix:
    """
    Computes the SVD of X, its numerical rank and an orthonormal kernel
    basis.

    Args:
        entries:
            n×p array.
        rank_tol:
            Singular values at or below ``rank_tol * ρ_1`` count as zero.
    """
    x = np.array(entries, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise InputError(f"Design must be a non-empty matrix; got {x.shape}")
    require_finite(x, "Design matrix")
    if rank_tol <= 0:
        raise ParameterError(f"rank_tol must be > 0; got {rank_tol}")
    n, p = x.shape
    log.debug(f"Decomposing {n}×{p} design")
    u, s, vt = svd(x, full_matrices=True, lapack_driver="gesvd")
    if s.size == 0 or s[0] == 0:
        raise RankError("Design matrix is zero (rank 0)")
    r = int(np.sum(s > rank_tol * s[0]))
    kernel = normalize_signs(vt[r:, :].T)
    d = DesignMatrix(
        entries=x,
        singular_values=s[:r],
        left_vectors=u[:, :r],
        right_vectors=vt[:r, :],
        kernel_basis=kernel,
        rank_tol=rank_tol,
    )
    err = d.reconstruction_error()
    if err > 1e-10:
        log.warning(f"SVD reconstruction error {err:.3g} exceeds 1e-10")
    if r < min(n, p):
        log.warning(f"Design is rank deficient: rank {r} < min(n, p)")
    log.debug(f"... {d}")
    return d

#!/usr/bin/env python

"""
udp_certify/distortion.py

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

Distortion of the kernel of a design matrix.

The distortion of a subspace Γ ⊆ R^p is

    δ(Γ) = sup_{x ∈ Γ, x ≠ 0} √p ‖x‖₂ / ‖x‖₁,

which lies in [1, √p]. Writing the kernel as {Bz} for an orthonormal basis B,
δ = √p / m with m = min_{‖z‖₂ = 1} ‖Bz‖₁. Since ‖Bz‖₁ ≥ ‖Bz‖₂ = 1, m ≥ 1.

For kernel dimension k ≤ 3 we certify m from both sides by covering the unit
sphere of kernel coordinates with cells; z ↦ ‖Bz‖₁ is √p-Lipschitz, so a
cell with centre c and radius r contains no value below ‖Bc‖₁ - √p·r.
Otherwise we search for a good witness.

"""

import heapq
import itertools
import logging
import math
from typing import Any, Dict, List, Optional, Tuple

from cardinal_pythonlib.reprfunc import auto_repr
import numpy as np

from udp_certify.constants import (
    CertifyMethod,
    DEFAULT_DISTORTION_TOL,
    DEFAULT_RESTARTS,
    DEFAULT_SEARCH_ITERS,
    DEFAULT_UNIVERSAL_C,
    DistortionMethod,
    enum_to_json,
    INITIAL_GRID_CELLS,
    KINK_SNAP_CANDIDATES,
    MAX_EXACT_KERNEL_DIM,
    MAX_GRID_EVALUATIONS,
    SEARCH_STREAM,
    SUBGRADIENT_STEP0,
)
from udp_certify.errors import BudgetError, InputError, ParameterError
from udp_certify.helperfunc import as_float_list, make_rng
from udp_certify.linalg import DesignMatrix

log = logging.getLogger(__name__)

TRIVIAL_KERNEL_WARNING = "trivial kernel: X is injective, distortion is 1"


# =============================================================================
# DistortionEstimate
# =============================================================================


class DistortionEstimate:
    """
    A bracket lower ≤ δ(ker X) ≤ upper, with the kernel vector achieving the
    lower end.
    """

    def __init__(
        self,
        lower: float,
        upper: float,
        method: DistortionMethod,
        witness: Optional[np.ndarray],
        grid_resolution: Optional[float] = None,
        kernel_dim: int = 0,
        n_evaluations: int = 0,
        warning: str = None,
    ) -> None:
        """
        Args:
            lower:
                Lower bound on δ; attained by ``witness``.
            upper:
                Certified upper bound on δ.
            method:
                How the bracket was obtained.
            witness:
                Kernel vector (unit ℓ2 norm) with √p‖w‖₂/‖w‖₁ = ``lower``;
                ``None`` for a trivial kernel.
            grid_resolution:
                Final covering radius, for the exact method.
            kernel_dim:
                Dimension of ker X.
            n_evaluations:
                Number of evaluations of ‖Bz‖₁.
            warning:
                Optional text describing a degenerate situation.
        """
        assert 1.0 - 1e-12 <= lower, f"Bug: distortion lower {lower} < 1"
        assert lower <= upper * (1 + 1e-12), (
            f"Bug: distortion bracket inverted: [{lower}, {upper}]"
        )
        self.lower = float(lower)
        self.upper = float(upper)
        self.method = method
        self.witness = witness
        self.grid_resolution = grid_resolution
        self.kernel_dim = kernel_dim
        self.n_evaluations = n_evaluations
        self.warning = warning

    def __str__(self) -> str:
        return (
            f"δ ∈ [{self.lower:.6g}, {self.upper:.6g}] "
            f"({enum_to_json(self.method)}, kernel dim {self.kernel_dim})"
        )

    def __repr__(self) -> str:
        return auto_repr(self)

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def as_json_dict(self) -> Dict[str, Any]:
        return {
            "delta_lower": self.lower,
            "delta_upper": self.upper,
            "method": enum_to_json(self.method),
            "witness": as_float_list(self.witness),
            "grid_resolution": self.grid_resolution,
            "kernel_dim": self.kernel_dim,
            "n_evaluations": self.n_evaluations,
            "warning": self.warning,
        }

    @classmethod
    def from_json_dict(cls, d: Dict[str, Any]) -> "DistortionEstimate":
        try:
            witness = d.get("witness")
            return cls(
                lower=d["delta_lower"],
                upper=d["delta_upper"],
                method=DistortionMethod[d["method"]],
                witness=None if witness is None else np.array(witness),
                grid_resolution=d.get("grid_resolution"),
                kernel_dim=d.get("kernel_dim", 0),
                n_evaluations=d.get("n_evaluations", 0),
                warning=d.get("warning"),
            )
        except KeyError as e:
            raise InputError(f"Distortion estimate lacks field {e}")


def trivial_estimate() -> DistortionEstimate:
    log.warning("Kernel is trivial; reporting distortion 1")
    return DistortionEstimate(
        lower=1.0,
        upper=1.0,
        method=DistortionMethod.TRIVIAL,
        witness=None,
        kernel_dim=0,
        warning=TRIVIAL_KERNEL_WARNING,
    )


# =============================================================================
# Elementary pieces
# =============================================================================


def distortion_ratio(x: np.ndarray) -> float:
    """
    √p ‖x‖₂ / ‖x‖₁ for a nonzero vector x ∈ R^p.
    """
    x = np.asarray(x, dtype=float)
    l1 = np.abs(x).sum()
    if l1 == 0:
        raise InputError("Distortion ratio of the zero vector is undefined")
    return float(math.sqrt(x.size) * np.linalg.norm(x) / l1)


def _l1_of_images(basis: np.ndarray, z: np.ndarray) -> np.ndarray:
    """
    ‖Bz‖₁ for each row z of a (m×k) array of unit vectors.
    """
    return np.abs(z @ basis.T).sum(axis=1)


def _kink_snap(
    basis: np.ndarray, z: np.ndarray, fz: float
) -> Tuple[np.ndarray, float]:
    """
    On each region where the signs of Bz are fixed, ‖Bz‖₁ is linear, so its
    minimum over the sphere sits where k - 1 of the products b_iᵀz vanish.
    Tries the directions annihilating the rows nearest to zero at ``z`` and
    returns the best of those and ``(z, fz)``.
    """
    k = basis.shape[1]
    if k < 2:
        return z, fz
    products = np.abs(basis @ z)
    row_norms = np.linalg.norm(basis, axis=1)
    usable = np.flatnonzero(row_norms > 1e-12)
    nearest = usable[np.argsort(products[usable], kind="stable")]
    nearest = nearest[:max(KINK_SNAP_CANDIDATES, k - 1)]
    best_z, best_f = z, fz
    for rows in itertools.combinations(nearest, k - 1):
        sub = basis[list(rows), :]
        _, sv, vt = np.linalg.svd(sub)
        if sv[-1] < 1e-10 * max(sv[0], 1e-300):
            continue  # parallel rows: no unique direction
        cand = vt[-1]
        if cand @ z < 0:
            cand = -cand
        fc = float(np.abs(basis @ cand).sum())
        if fc < best_f:
            best_z, best_f = cand, fc
    return best_z, best_f


# =============================================================================
# Certified covering (kernel dimension 2 or 3)
# =============================================================================


class _Cell:
    """
    A piece of the (half-)sphere of kernel coordinates.

    For k = 2 a cell is an arc of angles [centre - half, centre + half] with
    radius ``half`` (arc length bounds chord length). For k = 3 it is a
    square of half-side ``half`` on the cube face where coordinate ``face``
    equals +1, radially projected; projection onto the unit ball is
    non-expansive, so the radius is √2·half.
    """

    __slots__ = ("face", "centre", "half")

    def __init__(self, face: int, centre: np.ndarray, half: float) -> None:
        self.face = face
        self.centre = centre
        self.half = half

    @property
    def radius(self) -> float:
        if self.face < 0:
            return self.half
        return math.sqrt(2.0) * self.half

    def point(self) -> np.ndarray:
        if self.face < 0:
            theta = self.centre[0]
            return np.array([math.cos(theta), math.sin(theta)])
        c = np.insert(self.centre, self.face, 1.0)
        return c / np.linalg.norm(c)

    def split(self) -> List["_Cell"]:
        h = self.half / 2
        if self.face < 0:
            return [
                _Cell(-1, self.centre - h, h),
                _Cell(-1, self.centre + h, h),
            ]
        return [
            _Cell(self.face, self.centre + np.array([du, dv]), h)
            for du in (-h, h)
            for dv in (-h, h)
        ]


def _initial_cells(k: int) -> List[_Cell]:
    if k == 2:
        n = INITIAL_GRID_CELLS
        half = math.pi / (2 * n)
        return [
            _Cell(-1, np.array([(2 * i + 1) * half]), half) for i in range(n)
        ]
    side = int(round(math.sqrt(INITIAL_GRID_CELLS)))
    half = 1.0 / side
    offsets = [-1 + (2 * i + 1) * half for i in range(side)]
    return [
        _Cell(face, np.array([u, v]), half)
        for face in range(3)
        for u in offsets
        for v in offsets
    ]


def _certify_covering(
    basis: np.ndarray, tol: float
) -> Tuple[np.ndarray, float, float, float, int]:
    """
    Branch-and-bound over cells. Returns (best z, m_hi, m_lo, final radius,
    evaluations), with m_lo ≤ min ‖Bz‖₁ ≤ m_hi = ‖B·best z‖₁ and
    √p/m_lo - √p/m_hi ≤ tol.

    The sequence of refinements does not depend on ``tol`` (only the stopping
    point does), so a smaller tolerance continues the same computation.
    """
    p, k = basis.shape
    lipschitz = math.sqrt(p)
    root_p = math.sqrt(p)

    cells = _initial_cells(k)
    points = np.array([c.point() for c in cells])
    values = _l1_of_images(basis, points)
    n_evals = len(cells)

    i_best = int(np.argmin(values))
    best_z, m_hi = _kink_snap(basis, points[i_best], float(values[i_best]))

    heap = []  # type: List[Tuple[float, int, _Cell]]
    counter = itertools.count()
    for cell, v in zip(cells, values):
        bound = v - lipschitz * cell.radius
        heapq.heappush(heap, (bound, next(counter), cell))

    m_lo = 1.0
    radius = max(c.radius for c in cells)
    while True:
        heap_min = heap[0][0] if heap else m_hi
        m_lo = max(m_lo, min(heap_min, m_hi))
        if root_p / m_lo - root_p / m_hi <= tol:
            break
        if n_evals > MAX_GRID_EVALUATIONS:
            raise BudgetError(
                f"Distortion covering did not reach tolerance {tol} within "
                f"{MAX_GRID_EVALUATIONS} evaluations (bracket "
                f"[{root_p / m_hi}, {root_p / m_lo}])"
            )
        lb, _, cell = heapq.heappop(heap)
        if lb >= m_hi:
            continue
        children = cell.split()
        child_points = np.array([c.point() for c in children])
        child_values = _l1_of_images(basis, child_points)
        n_evals += len(children)
        for child, z, v in zip(children, child_points, child_values):
            v = float(v)
            if v < m_hi:
                best_z, m_hi = _kink_snap(basis, z, v)
            radius = min(radius, child.radius)
            child_lb = v - lipschitz * child.radius
            if child_lb < m_hi:
                heapq.heappush(heap, (child_lb, next(counter), child))
    return best_z, m_hi, m_lo, radius, n_evals


# =============================================================================
# Public operations
# =============================================================================


def distortion_exact(
    d: DesignMatrix, tol: float = DEFAULT_DISTORTION_TOL
) -> DistortionEstimate:
    """
    Certified bracket on δ(ker X) with upper - lower ≤ ``tol``, for kernel
    dimension at most 3.
    """
    if tol <= 0:
        raise ParameterError(f"Distortion tolerance must be > 0; got {tol}")
    k = d.kernel_dim
    p = d.p
    if k == 0:
        return trivial_estimate()
    if k > MAX_EXACT_KERNEL_DIM:
        raise ParameterError(
            f"Kernel dimension {k} exceeds {MAX_EXACT_KERNEL_DIM}; "
            f"use the randomized search instead"
        )
    basis = np.asarray(d.kernel_basis)
    log.info(f"Certifying distortion of {k}-dimensional kernel in R^{p}")
    if k == 1:
        w = basis[:, 0]
        delta = distortion_ratio(w)
        return DistortionEstimate(
            lower=delta,
            upper=delta,
            method=DistortionMethod.EXACT_GRID,
            witness=w.copy(),
            grid_resolution=0.0,
            kernel_dim=k,
            n_evaluations=1,
        )
    z, m_hi, m_lo, radius, n_evals = _certify_covering(basis, tol)
    w = basis @ z
    w /= np.linalg.norm(w)
    lower = distortion_ratio(w)
    upper = max(math.sqrt(p) / m_lo, lower)
    log.info(
        f"... δ ∈ [{lower:.8g}, {upper:.8g}] after {n_evals} evaluations"
    )
    return DistortionEstimate(
        lower=lower,
        upper=upper,
        method=DistortionMethod.EXACT_GRID,
        witness=w,
        grid_resolution=radius,
        kernel_dim=k,
        n_evaluations=n_evals,
    )


def distortion_search(
    d: DesignMatrix,
    restarts: int = DEFAULT_RESTARTS,
    iters: int = DEFAULT_SEARCH_ITERS,
    seed: int = 0,
) -> DistortionEstimate:
    """
    Randomized lower bound on δ(ker X): projected subgradient descent of
    ‖Bz‖₁ on the unit sphere, step s₀/√t, from ``restarts`` random starts
    (start r drawn from seed + r), each finished by kink snapping. The upper
    end of the bracket is the trivial √p.

    All restarts are advanced together as rows of one array; each row's
    trajectory is exactly what a sequential run would produce.
    """
    if restarts < 1:
        raise ParameterError(f"restarts must be >= 1; got {restarts}")
    if iters < 1:
        raise ParameterError(f"iters must be >= 1; got {iters}")
    k = d.kernel_dim
    p = d.p
    if k == 0:
        return trivial_estimate()
    basis = np.asarray(d.kernel_basis)
    log.info(
        f"Searching distortion of {k}-dimensional kernel in R^{p}: "
        f"{restarts} restarts × {iters} iterations"
    )
    z = np.array(
        [
            make_rng(seed + r, SEARCH_STREAM).standard_normal(k)
            for r in range(restarts)
        ]
    )
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    values = _l1_of_images(basis, z)
    best_z = z.copy()
    best_f = values.copy()
    for t in range(1, iters + 1):
        g = np.sign(z @ basis.T) @ basis
        g -= np.sum(g * z, axis=1, keepdims=True) * z
        z = z - (SUBGRADIENT_STEP0 / math.sqrt(t)) * g
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        values = _l1_of_images(basis, z)
        improved = values < best_f
        best_z[improved] = z[improved]
        best_f[improved] = values[improved]
    n_evals = restarts * (iters + 1)

    winner_z, winner_f = None, math.inf
    for r in range(restarts):
        zr, fr = _kink_snap(basis, best_z[r], float(best_f[r]))
        if fr < winner_f:
            winner_z, winner_f = zr, fr
    w = basis @ winner_z
    w /= np.linalg.norm(w)
    lower = distortion_ratio(w)
    log.info(f"... δ ≥ {lower:.8g}")
    return DistortionEstimate(
        lower=lower,
        upper=math.sqrt(p),
        method=DistortionMethod.RANDOMIZED_WITNESS,
        witness=w,
        kernel_dim=k,
        n_evaluations=n_evals,
    )


def certify_distortion(
    d: DesignMatrix,
    method: CertifyMethod = CertifyMethod.AUTO,
    tol: float = DEFAULT_DISTORTION_TOL,
    restarts: int = DEFAULT_RESTARTS,
    iters: int = DEFAULT_SEARCH_ITERS,
    seed: int = 0,
) -> DistortionEstimate:
    """
    Chooses between :func:`distortion_exact` and :func:`distortion_search`.
    """
    if method == CertifyMethod.EXACT or (
        method == CertifyMethod.AUTO and d.kernel_dim <= MAX_EXACT_KERNEL_DIM
    ):
        return distortion_exact(d, tol)
    return distortion_search(d, restarts=restarts, iters=iters, seed=seed)


def gaussian_distortion_bound(
    n: int, p: int, c: float = DEFAULT_UNIVERSAL_C
) -> float:
    """
    The high-probability upper bound C·√(p(1 + log(p/n))/n) on the distortion
    of the kernel of an n×p Gaussian design.
    """
    if n < 1 or n > p:
        raise ParameterError(f"Need 1 <= n <= p; got n = {n}, p = {p}")
    if c <= 0:
        raise ParameterError(f"Universal constant must be > 0; got {c}")
    return c * math.sqrt(p * (1 + math.log(p / n)) / n)

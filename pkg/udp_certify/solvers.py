#!/usr/bin/env python

"""
udp_certify/solvers.py

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

Estimators: the lasso (cyclic coordinate descent), the Dantzig selector
(linear program via python-mip) and least squares on a known support, plus
runtime diagnostics of the elementary inequalities every solution must
satisfy on the noise event.

"""

import logging
import math
from typing import Any, Dict, Optional, Sequence

from cardinal_pythonlib.reprfunc import auto_repr
from mip import LP_Method, minimize, Model, OptimizationStatus, xsum
import numpy as np
from scipy.linalg import lstsq

from udp_certify.constants import (
    DEFAULT_MAX_ITER,
    DEFAULT_SOLVER_TOL,
    enum_to_json,
    Estimator,
    LP_TOL,
    LP_ZERO_TOL,
    SolverStatus,
    SUBDESIGN_RANK_TOL,
)
from udp_certify.errors import InputError, ParameterError, RankError
from udp_certify.helperfunc import (
    as_float_list,
    report_on_model,
    top_s_indices,
)
from udp_certify.linalg import DesignMatrix

log = logging.getLogger(__name__)


# =============================================================================
# RegressionProblem
# =============================================================================


class RegressionProblem:
    """
    The model y = Xβ* + ε.
    """

    def __init__(
        self,
        design: DesignMatrix,
        response: np.ndarray,
        true_target: np.ndarray = None,
        noise_sd: float = None,
    ) -> None:
        """
        Args:
            design:
                X.
            response:
                y, length n.
            true_target:
                β*, length p, if known.
            noise_sd:
                σ_n ≥ 0, if known.
        """
        response = np.asarray(response, dtype=float)
        if response.shape != (design.n,):
            raise InputError(
                f"Response has shape {response.shape}; design has "
                f"n = {design.n} rows"
            )
        if not np.all(np.isfinite(response)):
            raise InputError("Response contains non-finite values")
        if true_target is not None:
            true_target = np.asarray(true_target, dtype=float)
            if true_target.shape != (design.p,):
                raise InputError(
                    f"Target has shape {true_target.shape}; design has "
                    f"p = {design.p} columns"
                )
        if noise_sd is not None and noise_sd < 0:
            raise ParameterError(f"noise_sd must be >= 0; got {noise_sd}")
        self.design = design
        self.response = response
        self.true_target = true_target
        self.noise_sd = noise_sd

    def __repr__(self) -> str:
        return auto_repr(self)

    @property
    def correlations(self) -> np.ndarray:
        """
        Xᵀy.
        """
        return np.asarray(self.design.entries).T @ self.response


# =============================================================================
# SolverResult
# =============================================================================


class SolverResult:
    """
    Output of :func:`lasso` or :func:`dantzig`.
    """

    def __init__(
        self,
        estimator: Estimator,
        estimate: np.ndarray,
        lam: float,
        objective: float,
        kkt_residual: float,
        iterations: int,
        status: SolverStatus,
        message: str = "",
    ) -> None:
        self.estimator = estimator
        self.estimate = estimate
        self.lam = lam
        self.objective = objective
        self.kkt_residual = kkt_residual
        self.iterations = iterations
        self.status = status
        self.message = message

    def __str__(self) -> str:
        return (
            f"{enum_to_json(self.estimator)}(λ={self.lam:.6g}): "
            f"{enum_to_json(self.status)}, objective {self.objective:.10g}, "
            f"KKT residual {self.kkt_residual:.3g}, "
            f"{self.iterations} iterations"
        )

    def __repr__(self) -> str:
        return auto_repr(self)

    @property
    def converged(self) -> bool:
        return self.status == SolverStatus.CONVERGED

    def as_json_dict(self) -> Dict[str, Any]:
        return {
            "estimator": enum_to_json(self.estimator),
            "estimate": as_float_list(self.estimate),
            "lambda": self.lam,
            "objective": self.objective,
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
            "status": enum_to_json(self.status),
            "message": self.message,
        }


# =============================================================================
# Small pieces
# =============================================================================


def soft_threshold(v: np.ndarray, lam: float) -> np.ndarray:
    """
    sign(v)·max(|v| - λ, 0), coordinate-wise; |v_i| = λ maps to 0.
    """
    if lam < 0:
        raise ParameterError(f"Threshold must be >= 0; got {lam}")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def lasso_objective(
    x: np.ndarray, y: np.ndarray, beta: np.ndarray, lam: float
) -> float:
    r = y - x @ beta
    return float(0.5 * r @ r + lam * np.abs(beta).sum())


def lasso_kkt_residual(
    x: np.ndarray, y: np.ndarray, beta: np.ndarray, lam: float
) -> float:
    """
    max_j of |X_jᵀr - λ·sign(β_j)| (β_j ≠ 0) or max(0, |X_jᵀr| - λ)
    (β_j = 0), with r = y - Xβ.
    """
    corr = x.T @ (y - x @ beta)
    active = beta != 0
    resid = np.where(
        active,
        np.abs(corr - lam * np.sign(beta)),
        np.maximum(0.0, np.abs(corr) - lam),
    )
    return float(resid.max()) if resid.size else 0.0


def dantzig_feasibility_residual(
    x: np.ndarray, y: np.ndarray, beta: np.ndarray, lam: float
) -> float:
    """
    max(0, ‖Xᵀ(y - Xβ)‖_∞ - λ).
    """
    return float(max(0.0, np.abs(x.T @ (y - x @ beta)).max() - lam))


# =============================================================================
# Lasso
# =============================================================================


def lasso(
    prob: RegressionProblem,
    lam: float,
    tol: float = DEFAULT_SOLVER_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SolverResult:
    """
    Minimizes ½‖y - Xβ‖² + λ‖β‖₁ by cyclic coordinate descent from β = 0,
    sweeping coordinates in index order, until the KKT residual is at most
    ``tol`` or ``max_iter`` sweeps have run.
    """
    if not lam > 0:
        raise ParameterError(f"Lasso lambda must be > 0; got {lam}")
    if not tol > 0:
        raise ParameterError(f"tol must be > 0; got {tol}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be >= 1; got {max_iter}")
    x = np.asarray(prob.design.entries)
    y = prob.response
    p = x.shape[1]
    col_sq = np.einsum("ij,ij->j", x, x)
    beta = np.zeros(p)
    resid = y.copy()
    kkt = lasso_kkt_residual(x, y, beta, lam)
    sweeps = 0
    while kkt > tol and sweeps < max_iter:
        for j in range(p):
            if col_sq[j] == 0:
                # The term λ|β_j| alone: minimized at 0.
                continue
            old = beta[j]
            rho = x[:, j] @ resid + col_sq[j] * old
            new = math.copysign(max(abs(rho) - lam, 0.0), rho) / col_sq[j]
            if new != old:
                resid -= x[:, j] * (new - old)
                beta[j] = new
        sweeps += 1
        kkt = lasso_kkt_residual(x, y, beta, lam)
        if sweeps % 1000 == 0:
            log.debug(f"Lasso sweep {sweeps}: KKT residual {kkt:.3g}")
    status = (
        SolverStatus.CONVERGED if kkt <= tol else SolverStatus.ITERATION_LIMIT
    )
    if status == SolverStatus.ITERATION_LIMIT:
        log.warning(
            f"Lasso stopped after {sweeps} sweeps with KKT residual "
            f"{kkt:.3g} > {tol}"
        )
    result = SolverResult(
        estimator=Estimator.LASSO,
        estimate=beta,
        lam=lam,
        objective=lasso_objective(x, y, beta, lam),
        kkt_residual=kkt,
        iterations=sweeps,
        status=status,
    )
    log.debug(str(result))
    return result


# =============================================================================
# Dantzig selector
# =============================================================================


def _solve_dantzig_lp(
    gram: np.ndarray, corr: np.ndarray, lam: float, debug_model: bool
) -> Optional[np.ndarray]:
    """
    min Σ(β⁺ + β⁻) subject to |Xᵀy - XᵀX(β⁺ - β⁻)| ≤ λ, β± ≥ 0.
    Returns β⁺ - β⁻, or ``None`` if no optimal solution was found.
    """
    p = gram.shape[0]
    m = Model("Dantzig selector")
    m.verbose = 0
    m.threads = 1
    m.lp_method = LP_Method.PRIMAL
    m.infeas_tol = LP_TOL
    m.opt_tol = LP_TOL
    plus = [m.add_var(f"beta_plus[{j}]", lb=0.0) for j in range(p)]
    minus = [m.add_var(f"beta_minus[{j}]", lb=0.0) for j in range(p)]

    m.objective = minimize(xsum(plus[j] + minus[j] for j in range(p)))
    for i in range(p):
        if not np.any(gram[i]):
            continue  # zero column: X_iᵀy = 0, constraint always holds
        fitted = xsum(
            float(gram[i, j]) * (plus[j] - minus[j])
            for j in range(p)
            if gram[i, j] != 0
        )
        m += fitted >= float(corr[i] - lam), f"lower[{i}]"
        m += fitted <= float(corr[i] + lam), f"upper[{i}]"

    if debug_model:
        report_on_model(m)
    status = m.optimize()
    if status != OptimizationStatus.OPTIMAL:
        log.error(f"Dantzig LP finished with status {status}")
        return None
    return np.array([plus[j].x - minus[j].x for j in range(p)])


def _polish_vertex(
    gram: np.ndarray, corr: np.ndarray, lam: float, beta: np.ndarray
) -> np.ndarray:
    """
    At an LP vertex the nonzero coordinates J are fixed by the active
    constraints T: (XᵀX)_{T,J} β_J = (Xᵀy)_T - λ·sign(a_T), a = Xᵀ(y - Xβ).
    Re-solving that system in double precision removes simplex round-off.
    The result is kept only if it keeps the signs, stays feasible and does
    not increase the ℓ1 norm.
    """
    support = np.flatnonzero(np.abs(beta) > LP_ZERO_TOL)
    if support.size == 0:
        return np.zeros_like(beta)
    a = corr - gram @ beta
    active = np.flatnonzero(np.abs(a) >= lam - 1e3 * LP_TOL * max(1.0, lam))
    if active.size < support.size:
        return beta
    rhs = corr[active] - lam * np.sign(a[active])
    sol, *_ = lstsq(gram[np.ix_(active, support)], rhs)
    polished = np.zeros_like(beta)
    polished[support] = sol
    if np.any(np.sign(sol) != np.sign(beta[support])):
        return beta
    old_feas = max(0.0, np.abs(corr - gram @ beta).max() - lam)
    new_feas = max(0.0, np.abs(corr - gram @ polished).max() - lam)
    if new_feas > max(old_feas, LP_TOL):
        return beta
    if np.abs(polished).sum() > np.abs(beta).sum() + LP_TOL:
        return beta
    return polished


def dantzig(
    prob: RegressionProblem,
    lam: float,
    tol: float = DEFAULT_SOLVER_TOL,
    debug_model: bool = False,
) -> SolverResult:
    """
    The Dantzig selector: min ‖β‖₁ subject to ‖Xᵀ(y - Xβ)‖_∞ ≤ λ.
    """
    if lam < 0:
        raise ParameterError(f"Dantzig lambda must be >= 0; got {lam}")
    if not tol > 0:
        raise ParameterError(f"tol must be > 0; got {tol}")
    x = np.asarray(prob.design.entries)
    y = prob.response
    p = x.shape[1]
    corr = x.T @ y
    if np.abs(corr).max() <= lam:
        return SolverResult(
            estimator=Estimator.DANTZIG,
            estimate=np.zeros(p),
            lam=lam,
            objective=0.0,
            kkt_residual=0.0,
            iterations=0,
            status=SolverStatus.CONVERGED,
            message="lambda >= ||X'y||_inf; the origin is optimal",
        )
    gram = x.T @ x
    log.debug(f"Solving Dantzig LP with {2 * p} variables, λ = {lam}")
    beta = _solve_dantzig_lp(gram, corr, lam, debug_model)
    if beta is None:
        return SolverResult(
            estimator=Estimator.DANTZIG,
            estimate=np.zeros(p),
            lam=lam,
            objective=math.nan,
            kkt_residual=math.inf,
            iterations=1,
            status=SolverStatus.INFEASIBLE,
            message="linear program failed; see log",
        )
    beta = _polish_vertex(gram, corr, lam, beta)
    feas = dantzig_feasibility_residual(x, y, beta, lam)
    status = SolverStatus.CONVERGED if feas <= tol else SolverStatus.INFEASIBLE
    message = ""
    if status == SolverStatus.INFEASIBLE:
        message = f"feasibility residual {feas:.3g} exceeds {tol}"
        log.error(f"Dantzig selector: {message}")
    result = SolverResult(
        estimator=Estimator.DANTZIG,
        estimate=beta,
        lam=lam,
        objective=float(np.abs(beta).sum()),
        kkt_residual=feas,
        iterations=1,
        status=status,
        message=message,
    )
    log.debug(str(result))
    return result


def solve(
    prob: RegressionProblem,
    estimator: Estimator,
    lam: float,
    tol: float = DEFAULT_SOLVER_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SolverResult:
    if estimator == Estimator.LASSO:
        return lasso(prob, lam, tol=tol, max_iter=max_iter)
    elif estimator == Estimator.DANTZIG:
        return dantzig(prob, lam, tol=tol)
    else:
        raise AssertionError(f"Bug: unknown estimator {estimator!r}")


# =============================================================================
# Least squares on a support
# =============================================================================


def oracle_ls(prob: RegressionProblem, support: Sequence[int]) -> np.ndarray:
    """
    β with (X_SᵀX_S)⁻¹X_Sᵀy on S and 0 elsewhere.
    """
    idx = sorted(set(int(j) for j in support))
    if not idx:
        raise ParameterError("Support must be nonempty")
    d = prob.design
    x_s = d.submatrix(idx)
    sv = np.linalg.svd(x_s, compute_uv=False)
    if len(idx) > d.n or sv[-1] <= SUBDESIGN_RANK_TOL * d.largest_singular():
        raise RankError(f"X_S is rank deficient on support {idx}")
    coef, *_ = lstsq(x_s, prob.response)
    beta = np.zeros(d.p)
    beta[idx] = coef
    return beta


# =============================================================================
# Diagnostics
# =============================================================================


def worst_subset_rhs(h: np.ndarray, beta_star: np.ndarray) -> float:
    """
    min over all subsets S of ‖h_S‖₁ + ‖β*_{S^c}‖₁, attained by putting i in
    S exactly when |h_i| ≤ |β*_i|.
    """
    return float(np.minimum(np.abs(h), np.abs(beta_star)).sum())


def lasso_standard_inequality(
    d: DesignMatrix,
    estimate: np.ndarray,
    beta_star: np.ndarray,
    lam: float,
    lam0: float,
) -> float:
    """
    Slack of

        (1/2λ)[½‖Xh‖² + (λ - λ₀)‖h‖₁] ≤ ‖h_S‖₁ + ‖β*_{S^c}‖₁,

    h = β̂ - β*, on the subset S minimizing the right-hand side. Holds on the
    noise event when λ ≥ λ₀.
    """
    h = estimate - beta_star
    xh = np.asarray(d.entries) @ h
    lhs = (0.5 * xh @ xh + (lam - lam0) * np.abs(h).sum()) / (2 * lam)
    return worst_subset_rhs(h, beta_star) - float(lhs)


def dantzig_standard_inequality(
    d: DesignMatrix,
    estimate: np.ndarray,
    beta_star: np.ndarray,
    lam: float,
    lam0: float,
) -> float:
    """
    Smaller slack of

        (1/4λ)[‖Xh‖² + (λ - λ₀)‖h‖₁] ≤ ‖h_S‖₁ + ‖β*_{S^c}‖₁   and
        ‖h_{S^c}‖₁ ≤ ‖h_S‖₁ + 2‖β*_{S^c}‖₁,

    each on its worst subset. Both hold on the noise event when λ ≥ λ₀.
    """
    h = estimate - beta_star
    xh = np.asarray(d.entries) @ h
    worst = worst_subset_rhs(h, beta_star)
    l1 = float(np.abs(h).sum())
    lhs = (xh @ xh + (lam - lam0) * l1) / (4 * lam)
    # ‖h_Sc‖₁ ≤ ‖h_S‖₁ + 2‖β*_Sc‖₁  ⇔  ‖h‖₁ ≤ 2(‖h_S‖₁ + ‖β*_Sc‖₁)
    return min(worst - float(lhs), 2 * worst - l1)


def appendix_diagnostic(
    estimator: Estimator,
    d: DesignMatrix,
    estimate: np.ndarray,
    beta_star: np.ndarray,
    lam: float,
    lam0: float,
) -> float:
    if estimator == Estimator.LASSO:
        return lasso_standard_inequality(d, estimate, beta_star, lam, lam0)
    return dantzig_standard_inequality(d, estimate, beta_star, lam, lam0)


def dantzig_cone_check(
    estimate: np.ndarray, beta_star: np.ndarray, s: int
) -> float:
    """
    Slack of ‖h_{S^c}‖₁ ≤ ‖h_S‖₁ + 2‖β*_{S^c}‖₁ for S the top-s coordinates
    of β*. Nonnegative for any Dantzig solution on the noise event.
    """
    beta_star = np.asarray(beta_star, dtype=float)
    if not 0 <= s <= beta_star.size:
        raise ParameterError(f"Need 0 <= s <= p; got s = {s}")
    h = np.asarray(estimate, dtype=float) - beta_star
    in_s = np.zeros(beta_star.size, dtype=bool)
    in_s[top_s_indices(beta_star, s)] = True
    h_s = float(np.abs(h[in_s]).sum())
    h_sc = float(np.abs(h[~in_s]).sum())
    tail = float(np.abs(beta_star[~in_s]).sum())
    return h_s + 2 * tail - h_sc

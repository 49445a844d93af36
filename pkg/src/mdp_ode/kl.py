"""Exponentially twisted kernels for relative-entropy-penalized control.

A value vector h acts on the nominal control kernel through its conditional
exponent h(xu' | x) = sum_xn' Q0(x, xn') h(xu', xn') and the per-state log
normalizer Lambda(x).  The twisted kernel

    R_h(x, xu') = R0(x, xu') exp(h(xu' | x) - Lambda(x))

is the unique maximizer of mu(F) - D(mu || mu0) over row pmfs, which makes
it the optimal control whenever h solves the fixed point

    zeta * U + Lambda_h = h + eta * 1.

This module provides the twist, the Donsker-Varadhan rate, the fixed-point
residual and its Jacobian, a damped Newton solver, and two independent
oracles (a grid search over kernels and a direct optimality-equation
residual) used to cross-check everything else.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DegeneracyError,
    InfiniteDivergenceError,
    ModelError,
)
from .markov import invariant_pmf
from .model import (
    SUPPORT_TOL,
    ControlKernel,
    KLModel,
    Pmf,
    StochasticMatrix,
    _adopt,
    _bless,
    _freeze,
)

logger = logging.getLogger("mdp_ode.kl")

DEFAULT_NEWTON_TOL = 1e-12
DEFAULT_NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class TwistResult:
    """Twisted kernels for one value vector.

    p_h factors as r_h (x)-row q0 by construction; log_mgf holds Lambda and
    h_cond the conditional exponents h(xu' | x).
    """

    p_h: StochasticMatrix
    r_h: ControlKernel
    log_mgf: np.ndarray
    h_cond: np.ndarray


@dataclass(frozen=True)
class SolveDiagnostics:
    """Residual bookkeeping attached to a fixed-point solve."""

    residual_sup: float
    iterations: int
    tol: float | None
    eta_gap: float
    residual_history: tuple


@dataclass(frozen=True)
class FixedPointSolution:
    """Value vector, optimal reward, twisted kernels, and stationary law."""

    h_star: np.ndarray
    eta_star: float
    twist: TwistResult
    pi: Pmf
    diagnostics: SolveDiagnostics


def _as_value_vector(h, model: KLModel) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.shape != (model.d,):
        raise ModelError(f"value vector must have length {model.d}, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise ModelError("value vector has non-finite entries")
    return h


def conditional_exponent(h, model: KLModel) -> np.ndarray:
    """Average h over the nature kernel at a fixed next control component.

    Entry (x, xu') is sum_xn' Q0(x, xn') h(xu', xn'); shape (d, d_u).
    """
    h = _as_value_vector(h, model)
    hm = h.reshape(model.space.d_u, model.space.d_n)
    return model.q0.entries @ hm.T


def log_mgf(h_cond, model: KLModel) -> np.ndarray:
    """Per-state log normalizer Lambda(x) = log sum_xu' R0(x, xu') exp(h_cond(x, xu')).

    Computed with a max shift over the support of each nominal row, so large
    exponents cannot overflow; zero-probability columns never contribute.
    """
    h_cond = np.asarray(h_cond, dtype=float)
    r0 = model.r0.entries
    if h_cond.shape != r0.shape:
        raise ModelError(f"conditional exponent shape {h_cond.shape} != {r0.shape}")
    if model._full_support:
        peak = h_cond.max(axis=1)
        weights = r0 * np.exp(h_cond - peak[:, None])
        return peak + np.log(weights.sum(axis=1))
    support = r0 > 0.0
    shifted = np.where(support, h_cond, -np.inf)
    peak = shifted.max(axis=1)
    if not np.all(np.isfinite(peak)):
        raise DegeneracyError("control kernel has a row without support")
    weights = r0 * np.exp(shifted - peak[:, None])
    return peak + np.log(weights.sum(axis=1))


def twist(h, model: KLModel) -> TwistResult:
    """Reweight the nominal kernels by exp(h(xu' | x) - Lambda(x)).

    Adding a constant to h leaves the result unchanged; zeros of the nominal
    control kernel are preserved exactly.
    """
    h_cond = conditional_exponent(h, model)
    lam = log_mgf(h_cond, model)
    r0 = model.r0.entries
    if model._full_support:
        r = r0 * np.exp(h_cond - lam[:, None])
    else:
        r = r0 * np.exp(np.where(r0 > 0.0, h_cond - lam[:, None], -np.inf))
    # rows are normalized by their own log-sum-exp, so skip re-validation
    r_h = _bless(ControlKernel, entries=_adopt(r))
    d = model.d
    p = np.einsum("xu,xn->xun", r, model.q0.entries).reshape(d, d)
    return TwistResult(
        p_h=_bless(StochasticMatrix, entries=_adopt(p)),
        r_h=r_h,
        log_mgf=_adopt(lam),
        h_cond=_adopt(h_cond),
    )


def kl_rate(p: StochasticMatrix, p0: StochasticMatrix, pi: Pmf) -> float:
    """Relative entropy rate sum_x pi(x) D(P(x, .) || P0(x, .)).

    Uses the convention 0 log 0 = 0; entries of p below the support
    threshold are treated as zero.  Raises when p places mass outside the
    support of p0, where the rate is infinite.
    """
    a, b = p.entries, p0.entries
    if a.shape != b.shape:
        raise ModelError(f"shape mismatch {a.shape} vs {b.shape}")
    sup = a > SUPPORT_TOL
    escaped = sup & ~(b > SUPPORT_TOL)
    if escaped.any():
        x, y = (int(v) for v in np.argwhere(escaped)[0])
        raise InfiniteDivergenceError(
            f"P({x}, {y}) = {a[x, y]:.3g} but the nominal kernel has no mass there"
        )
    terms = np.zeros_like(a)
    terms[sup] = a[sup] * np.log(a[sup] / b[sup])
    return float(pi.weights @ terms.sum(axis=1))


def reward_objective(p: StochasticMatrix, pi: Pmf, zeta: float, model: KLModel) -> float:
    """Average-reward objective zeta * pi(U) - K(P || P0)."""
    return float(zeta * (pi.weights @ model.utility) - kl_rate(p, model.p0, pi))


def fixed_point_residual(zeta: float, h, model: KLModel) -> np.ndarray:
    """Residual of the optimality fixed point, zero exactly at the solution.

    F(zeta, h) = h - zeta U - Lambda_h + (zeta U(x0) + Lambda_h(x0)) 1.
    The x0 coordinate equals h(x0) identically, so it is exactly zero for
    any normalized h.  The implied average reward is
    eta = zeta U(x0) + Lambda_h(x0).
    """
    h = _as_value_vector(h, model)
    lam = log_mgf(conditional_exponent(h, model), model)
    return _residual_from_lam(zeta, h, lam, model)


def _residual_from_lam(zeta, h, lam, model):
    x0 = model.reference_state
    g = h - zeta * model.utility - lam
    return (g - g[x0]) + h[x0]


def eta_from_value(zeta: float, h, model: KLModel) -> float:
    """Average reward read off the reference coordinate, zeta U(x0) + Lambda_h(x0)."""
    h = _as_value_vector(h, model)
    lam = log_mgf(conditional_exponent(h, model), model)
    return float(zeta * model.utility[model.reference_state] + lam[model.reference_state])


def jacobian(h, model: KLModel) -> np.ndarray:
    """Derivative of the fixed-point residual in h: I - P_h + 1 (x) nu.

    nu is the reference row of the twisted matrix, nu(x') = P_h(x0, x').
    Rows sum to one since P_h is stochastic and nu is a pmf.
    """
    tw = twist(h, model)
    p = tw.p_h.entries
    jac = -p + p[model.reference_state][None, :]
    jac[np.diag_indices_from(jac)] += 1.0
    return jac


def _package_solution(zeta, h, model, residual_sup, iterations, tol, history):
    tw = twist(h, model)
    pi = invariant_pmf(tw.p_h)
    x0 = model.reference_state
    eta = float(zeta * model.utility[x0] + tw.log_mgf[x0])
    # reference-coordinate reward vs the stationary average of the fixed point
    eta_avg = float(pi.weights @ (zeta * model.utility + tw.log_mgf - h))
    logger.debug("eta=%.17g eta_gap=%.3e", eta, abs(eta - eta_avg))
    diag = SolveDiagnostics(
        residual_sup=float(residual_sup),
        iterations=iterations,
        tol=tol,
        eta_gap=abs(eta - eta_avg),
        residual_history=tuple(history),
    )
    return FixedPointSolution(h_star=_freeze(h), eta_star=eta, twist=tw, pi=pi, diagnostics=diag)


def evaluate_solution(zeta: float, h, model: KLModel) -> FixedPointSolution:
    """Package a value vector with its twisted kernels, reward, and residual."""
    h = _as_value_vector(h, model)
    if h[model.reference_state] != 0.0:
        raise ModelError("value vector must vanish at the reference state")
    residual = float(np.abs(fixed_point_residual(zeta, h, model)).max())
    return _package_solution(zeta, h, model, residual, iterations=0, tol=None, history=(residual,))


def newton_solve(
    zeta: float,
    h_init,
    model: KLModel,
    tol: float = DEFAULT_NEWTON_TOL,
    max_iter: int = DEFAULT_NEWTON_MAX_ITER,
) -> FixedPointSolution:
    """Damped Newton iteration for the optimality fixed point.

    Full steps by default, halving on any sup-norm residual increase.  The
    reference coordinate of the iterate stays exactly zero because the
    Jacobian's reference row is the corresponding unit vector.

    Raises
    ------
    ConvergenceError
        If the residual still exceeds ``tol`` after ``max_iter`` updates.
    """
    h = np.array(_as_value_vector(h_init, model))
    if h[model.reference_state] != 0.0:
        raise ModelError("initial value must vanish at the reference state")
    residual = fixed_point_residual(zeta, h, model)
    rnorm = float(np.abs(residual).max())
    history = [rnorm]
    iterations = 0
    while rnorm > tol and iterations < max_iter:
        jac = jacobian(h, model)
        try:
            direction = np.linalg.solve(jac, residual)
        except np.linalg.LinAlgError as exc:
            raise DegeneracyError(f"Newton system is singular: {exc}") from None
        size = 1.0
        while True:
            h_try = h - size * direction
            r_try = fixed_point_residual(zeta, h_try, model)
            n_try = float(np.abs(r_try).max())
            if n_try < rnorm or size <= 2.0**-30:
                break
            size *= 0.5
        h, residual, rnorm = h_try, r_try, n_try
        history.append(rnorm)
        iterations += 1
        logger.debug("newton iter=%d residual=%.3e step=%g", iterations, rnorm, size)
    if rnorm > tol:
        raise ConvergenceError(
            f"Newton residual {rnorm:.3e} after {iterations} iterations (tol {tol:g})",
            residual=rnorm,
            iterations=iterations,
        )
    return _package_solution(zeta, h, model, rnorm, iterations, tol, history)


def aroe_residual(sol: FixedPointSolution, zeta: float, model: KLModel) -> float:
    """Sup-norm defect of the average-reward optimality equation.

    Evaluates w(x, R_h) + (P_h h)(x) - h(x) - eta with the explicit
    relative-entropy control cost, and folds in the defect of the convex
    dual identity sum_xu' R_h h_cond - D(R_h || R0) = Lambda, which certifies
    that the twisted row attains the inner maximum.
    """
    tw = sol.twist
    r = tw.r_h.entries
    r0 = model.r0.entries
    sup = r > SUPPORT_TOL
    ratio = np.zeros_like(r)
    ratio[sup] = r[sup] * np.log(r[sup] / r0[sup])
    dkl_rows = ratio.sum(axis=1)
    w = zeta * model.utility - dkl_rows
    lhs = w + tw.p_h.entries @ sol.h_star
    optimality = np.abs(lhs - sol.h_star - sol.eta_star).max()
    dual_gap = np.abs((r * tw.h_cond).sum(axis=1) - dkl_rows - tw.log_mgf).max()
    return float(max(optimality, dual_gap))


def brute_force_oracle(model: KLModel, zeta: float, resolution: int):
    """Grid search over two-point control rows; independent of the twist path.

    Each kernel row is parameterized by its first-column probability on a
    uniform grid of ``resolution`` interior points of (0, 1).  Rows are
    swept cyclically, re-solving the stationary distribution for every
    candidate in a batched LU call, until no row improves.  Every candidate
    is feasible, so the returned objective is a lower bound on the optimal
    reward; with a fine grid it is also tight to O(1/resolution).

    Restricted to d_u = 2 and d <= 4: this is a test oracle, not a solver.
    """
    if model.space.d_u != 2 or model.d > 4:
        raise ValueError("grid oracle is restricted to d_u = 2 and d <= 4")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    d = model.d
    q0 = model.q0.entries
    r0 = model.r0.entries
    u = model.utility
    grid = np.arange(1, resolution + 1) / (resolution + 1.0)

    # rows where the nominal kernel has a zero keep it: any other choice has
    # infinite divergence, and a degenerate two-point row cannot vary
    sweepable = np.where((r0 > 0.0).all(axis=1))[0]
    probs = r0[:, 0].copy()
    probs[sweepable] = grid[np.argmin(np.abs(grid[None, :] - r0[sweepable, 0][:, None]), axis=1)]

    def kernel_rows(p_first):
        rows = np.column_stack([p_first, 1.0 - p_first])
        rows[~np.isin(np.arange(d), sweepable)] = r0[~np.isin(np.arange(d), sweepable)]
        return rows

    def row_divergence(rows):
        sup = rows > 0.0
        vals = np.zeros_like(rows)
        vals[sup] = rows[sup] * np.log(rows[sup] / r0[sup])
        return vals.sum(axis=1)

    def transition(rows):
        return np.einsum("xu,xn->xun", rows, q0).reshape(d, d)

    def objective(rows):
        p = transition(rows)
        system = p.T - np.eye(d)
        system[-1, :] = 1.0
        rhs = np.zeros(d)
        rhs[-1] = 1.0
        pi = np.linalg.solve(system, rhs)
        pi = pi / pi.sum()
        return float(zeta * (pi @ u) - pi @ row_divergence(rows))

    best_rows = kernel_rows(probs)
    best = objective(best_rows)
    n = grid.size
    rhs = np.zeros(d)
    rhs[-1] = 1.0
    for _ in range(100):
        improved = False
        for x in sweepable:
            rows = kernel_rows(probs)
            base_p = transition(rows)
            base_system = base_p.T - np.eye(d)
            base_system[-1, :] = 1.0
            systems = np.broadcast_to(base_system, (n, d, d)).copy()
            # candidate only changes row x of P, i.e. column x of the system
            cand_rows = np.column_stack([grid, 1.0 - grid])
            cand_p_row = np.einsum("nu,k->nuk", cand_rows, q0[x]).reshape(n, d)
            systems[:, :, x] = cand_p_row
            if x != d - 1:
                systems[:, x, x] -= 1.0
            systems[:, -1, x] = 1.0  # normalization row stays all ones
            pis = np.linalg.solve(systems, np.broadcast_to(rhs[:, None], (n, d, 1)))[:, :, 0]
            pis = pis / pis.sum(axis=1, keepdims=True)
            div = np.broadcast_to(row_divergence(rows), (n, d)).copy()
            div[:, x] = (
                grid * np.log(grid / r0[x, 0])
                + (1.0 - grid) * np.log((1.0 - grid) / r0[x, 1])
            )
            values = zeta * (pis @ u) - np.einsum("nd,nd->n", pis, div)
            k = int(values.argmax())
            if values[k] > best + 1e-15:
                best = float(values[k])
                probs[x] = grid[k]
                improved = True
        if not improved:
            break
    best_rows = kernel_rows(probs)
    best_kernel = ControlKernel(best_rows)
    # report the objective through the shared rate computation
    p = StochasticMatrix(transition(best_rows))
    value = reward_objective(p, invariant_pmf(p), zeta, model)
    return value, best_kernel

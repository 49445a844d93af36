"""Vector fields and integrators for value-function continuation.

The relative value functions of the reward family w_zeta = w0 + zeta * U
solve dh/dzeta = V(h), where V(h) is the normalized Poisson solution of the
utility under the kernel twisted by h.  The field never sees zeta (the ODE
is homogeneous), so trajectories can be restarted from any sample.

Two closed-form benchmarks ride along: a three-state continuous-time
generator model with quadratic input cost, and the scalar linear-quadratic
coefficient ODE with its algebraic fixed-point oracle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DegeneracyError,
    FeasibilityError,
    IntegrationError,
    ModelError,
)
from .kl import conditional_exponent, log_mgf, newton_solve, twist
from .markov import GeneratorMatrix, generator_invariant, generator_poisson, invariant_pmf, poisson_solve
from .model import KLModel, Pmf, _adopt, _bless, _freeze

logger = logging.getLogger("mdp_ode.ode")

DEFAULT_STEP = 1e-3
POLISH_TOL = 1e-12
POLISH_MAX_ITER = 3


@dataclass(frozen=True)
class TrajectorySample:
    """One continuation sample: parameter, value vector, rewards, diagnostics."""

    zeta: float
    h: np.ndarray
    eta: float
    eta_quadrature: float
    pi: Pmf
    residual_sup: float


@dataclass(frozen=True)
class IntegratorSettings:
    step: float
    polish: bool
    polish_tol: float = POLISH_TOL
    method: str = "rk4"


@dataclass(frozen=True)
class ValueTrajectory:
    """Ordered samples of a continuation run plus the model and settings used."""

    samples: tuple
    model: object
    settings: IntegratorSettings

    def __post_init__(self):
        zs = np.array([s.zeta for s in self.samples])
        if zs.size == 0:
            raise ModelError("trajectory must contain at least one sample")
        if zs.size > 1:
            steps = np.diff(zs)
            if not (np.all(steps > 0) or np.all(steps < 0)):
                raise ModelError("trajectory parameters must be strictly monotone")
        ref = getattr(self.model, "reference_state", None)
        if ref is None:
            ref = getattr(self.model, "x0", None)
        if ref is not None and any(s.h[ref] != 0.0 for s in self.samples):
            raise ModelError("trajectory samples must vanish at the reference state")

    @property
    def zetas(self):
        return np.array([s.zeta for s in self.samples])

    @property
    def etas(self):
        return np.array([s.eta for s in self.samples])

    @property
    def final(self):
        return self.samples[-1]


@dataclass(frozen=True)
class GeneratorModel:
    """Continuous-time benchmark: controlled rate matrix A + sum_k u_k B^k.

    Inputs are restricted to an open box; feasibility of the box is checked
    once at construction by minimizing every off-diagonal rate over the
    bound corners (infinite ends force a zero coefficient).
    """

    a: GeneratorMatrix
    b: tuple
    kappa: np.ndarray
    x0: int
    u_feasible: tuple

    def __post_init__(self):
        d = self.a.d
        bs = tuple(_freeze(bk) for bk in self.b)
        if not bs:
            raise ModelError("at least one input direction is required")
        for k, bk in enumerate(bs):
            if bk.shape != (d, d):
                raise ModelError(f"input matrix {k} has shape {bk.shape}, expected ({d}, {d})")
            if np.abs(bk.sum(axis=1)).max() > 1e-12:
                raise ModelError(f"input matrix {k} must have zero row sums")
        kappa = _freeze(self.kappa)
        if kappa.shape != (d,):
            raise ModelError(f"cost vector must have length {d}")
        if not 0 <= self.x0 < d:
            raise ModelError(f"reference state {self.x0} out of range")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.u_feasible)
        if len(bounds) != len(bs):
            raise ModelError("one feasibility interval per input coordinate is required")
        for k, (lo, hi) in enumerate(bounds):
            if not lo < hi:
                raise ModelError(f"empty feasibility interval for input {k}")
        object.__setattr__(self, "b", bs)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "x0", int(self.x0))
        object.__setattr__(self, "u_feasible", bounds)
        self._check_corner_rates()

    def _check_corner_rates(self):
        d = self.a.d
        off = ~np.eye(d, dtype=bool)
        worst = self.a.entries.copy()
        for bk, (lo, hi) in zip(self.b, self.u_feasible):
            ends = []
            for bound in (lo, hi):
                end = np.zeros((d, d))
                nz = bk != 0.0
                end[nz] = bk[nz] * bound if math.isfinite(bound) else np.sign(bk[nz]) * bound
                ends.append(end)
            worst = worst + np.minimum(ends[0], ends[1])
        if worst[off].min() < -1e-12:
            i, j = np.unravel_index(int(np.where(off, worst, np.inf).argmin()), worst.shape)
            raise ModelError(
                f"rate ({i}, {j}) can reach {worst[i, j]:.3g} < 0 inside the feasibility box"
            )

    @property
    def d(self):
        return self.a.d

    @property
    def m(self):
        return len(self.b)


@dataclass(frozen=True)
class LqrModel:
    """Scalar linear system x' = alpha x + u + noise with quadratic costs."""

    alpha: float
    sigma_n2: float = 1.0  # enters only additive reward constants

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ModelError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.sigma_n2 < 0.0:
            raise ModelError("noise variance must be nonnegative")


# ---------------------------------------------------------------------------
# KL family

def vector_field_kl(h, model: KLModel):
    """Continuation vector field: Poisson solution of the utility under the twist.

    Returns (H, eta_rate) with H normalized to vanish at the reference state
    and eta_rate = pi_h(U), the slope of the optimal average reward.  The
    field depends on h only, never on zeta.
    """
    tw = twist(h, model)
    pi = invariant_pmf(tw.p_h)
    sol = poisson_solve(tw.p_h, model.utility, model.reference_state, pi=pi)
    return sol.h, sol.mean


def _kl_sample(zeta, h, model, eta_quad):
    tw = twist(h, model)
    pi = invariant_pmf(tw.p_h)
    x0 = model.reference_state
    eta = float(zeta * model.utility[x0] + tw.log_mgf[x0])
    g = h - zeta * model.utility - tw.log_mgf
    residual = float(np.abs((g - g[x0]) + h[x0]).max())
    return TrajectorySample(
        zeta=float(zeta),
        h=_freeze(h),
        eta=eta,
        eta_quadrature=float(eta_quad),
        pi=pi,
        residual_sup=residual,
    )


def _step_grid(z_start, z_end, step):
    total = z_end - z_start
    if total == 0.0:
        return []
    n_full = int(math.floor(abs(total) / step + 1e-9))
    sign = 1.0 if total > 0 else -1.0
    zs = [z_start + sign * k * step for k in range(1, n_full + 1)]
    if not zs or abs(zs[-1] - z_end) > step * 1e-9:
        zs.append(z_end)
    else:
        zs[-1] = z_end
    return zs


def integrate_kl(
    model: KLModel,
    zeta_span,
    step: float = DEFAULT_STEP,
    polish: bool = True,
    h_init=None,
    eta_init: float | None = None,
    polish_tol: float = POLISH_TOL,
    polish_max_iter: int = POLISH_MAX_ITER,
) -> ValueTrajectory:
    """Fixed-step RK4 continuation of the value-function ODE.

    Starts from h = 0 at zeta = 0 unless ``h_init`` (a sample from an
    earlier run) is supplied.  The average reward is accumulated twice per
    sample: by RK4-weighted quadrature of eta_rate, and algebraically from
    the reference coordinate; the algebraic value is authoritative.  With
    ``polish`` on, every accepted state is driven back onto the fixed point
    by at most ``polish_max_iter`` Newton updates.
    """
    z_start, z_end = (float(z) for z in zeta_span)
    if step <= 0.0:
        raise ModelError("step must be positive")
    d = model.d
    if h_init is None:
        if z_start != 0.0:
            raise ModelError("a starting value vector is required when the span does not start at 0")
        h = np.zeros(d)
    else:
        h = np.array(h_init, dtype=float)
        if h.shape != (d,):
            raise ModelError(f"starting value must have length {d}")
        if h[model.reference_state] != 0.0:
            raise ModelError("starting value must vanish at the reference state")

    samples = []

    def polished(zeta, h_raw, eta_quad):
        sol = newton_solve(zeta, h_raw, model, tol=polish_tol, max_iter=polish_max_iter)
        sample = TrajectorySample(
            zeta=float(zeta),
            h=sol.h_star,
            eta=sol.eta_star,
            eta_quadrature=float(eta_quad),
            pi=sol.pi,
            residual_sup=sol.diagnostics.residual_sup,
        )
        return sample, sol.h_star

    def record(zeta, h_raw, eta_quad):
        if polish:
            return polished(zeta, h_raw, eta_quad)
        return _kl_sample(zeta, h_raw, model, eta_quad), h_raw

    try:
        if eta_init is None:
            lam = log_mgf(conditional_exponent(h, model), model)
            eta_quad = float(
                z_start * model.utility[model.reference_state] + lam[model.reference_state]
            )
        else:
            eta_quad = float(eta_init)
        sample, h = record(z_start, h, eta_quad)
        samples.append(sample)
        z = z_start
        for z_next in _step_grid(z_start, z_end, step):
            dz = z_next - z
            k1, r1 = vector_field_kl(h, model)
            k2, r2 = vector_field_kl(h + 0.5 * dz * k1, model)
            k3, r3 = vector_field_kl(h + 0.5 * dz * k2, model)
            k4, r4 = vector_field_kl(h + dz * k3, model)
            h = h + (dz / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            eta_quad += (dz / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
            sample, h = record(z_next, h, eta_quad)
            samples.append(sample)
            z = z_next
    except (DegeneracyError, ConvergenceError) as exc:
        last = samples[-1].zeta if samples else None
        raise IntegrationError(
            f"integration aborted after zeta={last}: {exc}",
            last_zeta=last,
            samples=tuple(samples),
        ) from exc
    logger.info(
        "kl continuation: %d samples over [%g, %g], final residual %.3e",
        len(samples), z_start, z_end, samples[-1].residual_sup,
    )
    return ValueTrajectory(
        samples=tuple(samples),
        model=model,
        settings=IntegratorSettings(step=step, polish=polish, polish_tol=polish_tol),
    )


# ---------------------------------------------------------------------------
# continuous-time generator benchmark

def brockett_policy(g, model: GeneratorModel):
    """Policy matrix phi_k(x) = -(B^k g)(x) without the Poisson solve."""
    g = np.asarray(g, dtype=float)
    return np.column_stack([-(bk @ g) for bk in model.b])


def _brockett_field(g, model):
    g = np.asarray(g, dtype=float)
    d = model.d
    if g.shape != (d,):
        raise ModelError(f"value vector must have length {d}")
    policy = brockett_policy(g, model)
    for k, (lo, hi) in enumerate(model.u_feasible):
        col = policy[:, k]
        bad = (col <= lo) | (col >= hi)
        if bad.any():
            x = int(np.argwhere(bad)[0][0])
            raise FeasibilityError(
                f"policy coordinate {k} at state {x} is {col[x]:.6g}, "
                f"outside the open interval ({lo:g}, {hi:g})",
                state=x,
                coordinate=k,
            )
    rates = model.a.entries.copy()
    for k, bk in enumerate(model.b):
        rates += policy[:, k][:, None] * bk
    # in-box policy plus the construction-time corner check keep rates valid
    gen = _bless(GeneratorMatrix, entries=_adopt(rates))
    pi = generator_invariant(gen)
    sol = generator_poisson(gen, model.kappa, model.x0, pi=pi)
    return sol, policy, gen, pi


def vector_field_brockett(g, model: GeneratorModel):
    """Field for the generator model: policy, controlled rates, Poisson solve.

    The quadratic input cost makes the minimizing input explicit,
    phi_k(x) = -(B^k g)(x).  Returns (G, gamma_rate, policy) where G solves
    the generator Poisson equation for the state cost and gamma_rate is its
    steady-state mean.
    """
    sol, policy, _, _ = _brockett_field(g, model)
    return sol.h, sol.mean, policy


def _brockett_sample(zeta, g, model, gamma_quad):
    sol, _, gen, pi = _brockett_field(g, model)
    residual = float(np.abs(model.kappa + gen.entries @ sol.h - sol.mean).max())
    return TrajectorySample(
        zeta=float(zeta),
        h=_freeze(np.asarray(g, dtype=float)),
        eta=float(gamma_quad),
        eta_quadrature=float(gamma_quad),
        pi=pi,
        residual_sup=residual,
    )


def integrate_brockett(model: GeneratorModel, zeta_span, step: float = DEFAULT_STEP) -> ValueTrajectory:
    """RK4 continuation of the generator model from g = 0 at zeta = 0.

    The average cost gamma is accumulated by RK4-weighted quadrature of the
    steady-state mean.  A policy leaving the feasibility box aborts with the
    parameter at which it happened.
    """
    z_start, z_end = (float(z) for z in zeta_span)
    if step <= 0.0:
        raise ModelError("step must be positive")
    g = np.zeros(model.d)
    gamma = 0.0
    samples = [_brockett_sample(z_start, g, model, gamma)]
    z = z_start
    try:
        for z_next in _step_grid(z_start, z_end, step):
            dz = z_next - z
            k1, r1, _ = vector_field_brockett(g, model)
            k2, r2, _ = vector_field_brockett(g + 0.5 * dz * k1, model)
            k3, r3, _ = vector_field_brockett(g + 0.5 * dz * k2, model)
            k4, r4, _ = vector_field_brockett(g + dz * k3, model)
            g = g + (dz / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            gamma += (dz / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
            samples.append(_brockett_sample(z_next, g, model, gamma))
            z = z_next
    except FeasibilityError as exc:
        exc.zeta = z
        raise
    except DegeneracyError as exc:
        raise IntegrationError(
            f"integration aborted after zeta={z}: {exc}", last_zeta=z, samples=tuple(samples)
        ) from exc
    return ValueTrajectory(
        samples=tuple(samples),
        model=model,
        settings=IntegratorSettings(step=step, polish=False),
    )


# ---------------------------------------------------------------------------
# scalar linear-quadratic benchmark

def _lqr_slope(b, alpha):
    denom = 1.0 - (alpha / (1.0 + b)) ** 2
    if denom <= 0.0:
        raise DegeneracyError(f"coefficient ODE denominator {denom:.3g} <= 0 at b = {b:.6g}")
    return 1.0 / denom


def lqr_coefficient_ode(model: LqrModel, zeta_max: float, step: float = DEFAULT_STEP):
    """Integrate db/dzeta = 1 / (1 - (alpha / (1 + b))^2) from b(0) = 0.

    Returns a list of (zeta, b, gain) samples with gain = b * alpha / (1 + b).
    The denominator stays positive for b >= 0 and alpha < 1.
    """
    if zeta_max < 0.0:
        raise ModelError("zeta_max must be nonnegative")
    if step <= 0.0:
        raise ModelError("step must be positive")
    alpha = model.alpha
    b = 0.0
    out = [(0.0, 0.0, 0.0)]
    z = 0.0
    for z_next in _step_grid(0.0, zeta_max, step):
        dz = z_next - z
        k1 = _lqr_slope(b, alpha)
        k2 = _lqr_slope(b + 0.5 * dz * k1, alpha)
        k3 = _lqr_slope(b + 0.5 * dz * k2, alpha)
        k4 = _lqr_slope(b + dz * k3, alpha)
        b = b + (dz / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out.append((z_next, b, b * alpha / (1.0 + b)))
        z = z_next
    return out


def riccati_oracle(model: LqrModel, zeta: float) -> float:
    """Fixed point b = zeta + k^2 + b (alpha - k)^2 with k = b alpha / (1 + b).

    Solved by direct iteration from b = zeta; the map contracts at rate
    alpha^2 < 1 on b >= 0.  Independent of the ODE path, used to pin its
    endpoints.
    """
    if zeta < 0.0:
        raise ModelError("zeta must be nonnegative")
    alpha = model.alpha
    b = float(zeta)
    for _ in range(100_000):
        k = b * alpha / (1.0 + b)
        b_next = zeta + k * k + b * (alpha - k) ** 2
        if abs(b_next - b) <= 1e-12:
            return b_next
        b = b_next
    raise ConvergenceError(
        f"coefficient fixed point did not settle, last delta {abs(b_next - b):.3e}",
        residual=abs(b_next - b),
    )


# ---------------------------------------------------------------------------
# trajectory diagnostics

def _trajectory_rates(traj: ValueTrajectory):
    model = traj.model
    if isinstance(model, KLModel):
        weights = model.utility
    elif isinstance(model, GeneratorModel):
        weights = model.kappa
    else:
        raise ModelError(f"unsupported trajectory model {type(model).__name__}")
    return np.array([float(s.pi.weights @ weights) for s in traj.samples])


def convexity_check(traj: ValueTrajectory, pairs: int = 10, rng=None, negate: bool = False) -> float:
    """Worst centered second difference of the average reward along a trajectory.

    Also spot-checks the subgradient inequality
    eta(z) >= eta(z0) + (z - z0) * rate(z0) on random sample pairs, where
    rate is the per-sample steady-state utility mean.  ``negate`` flips the
    sign for cost-convention trajectories whose accumulated value is concave.

    Returns the minimum second difference; raises on a subgradient violation.
    Requires at least three uniformly spaced samples.
    """
    if len(traj.samples) < 3:
        raise ModelError("need at least three samples")
    zs = traj.zetas
    steps = np.diff(zs)
    mean_step = float(np.mean(np.abs(steps)))
    if np.abs(np.abs(steps) - mean_step).max() > 1e-6 * mean_step:
        raise ModelError("convexity check requires uniform spacing")
    sign = -1.0 if negate else 1.0
    values = sign * traj.etas
    rates = sign * _trajectory_rates(traj)
    second = values[2:] - 2.0 * values[1:-1] + values[:-2]
    worst = float(second.min())
    rng = np.random.default_rng(0) if rng is None else rng
    n = len(traj.samples)
    for _ in range(pairs):
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        lower = values[i] + (zs[j] - zs[i]) * rates[i]
        if values[j] < lower - 1e-9:
            raise ModelError(
                f"subgradient inequality fails between samples {i} and {j}: "
                f"{values[j]:.12g} < {lower:.12g}"
            )
    return worst


def lambda_derivative_check(traj: ValueTrajectory, model: KLModel) -> float:
    """Max defect of d/dzeta Lambda(x) = (P_h V(h))(x) along a trajectory.

    The left side is a central finite difference of the log normalizer over
    neighboring samples, so the defect decays with the square of the
    spacing.  Requires at least three uniformly spaced samples.
    """
    if len(traj.samples) < 3:
        raise ModelError("need at least three samples")
    zs = traj.zetas
    steps = np.diff(zs)
    mean_step = float(np.mean(np.abs(steps)))
    if np.abs(np.abs(steps) - mean_step).max() > 1e-6 * mean_step:
        raise ModelError("derivative check requires uniform spacing")
    lams = [log_mgf(conditional_exponent(s.h, model), model) for s in traj.samples]
    worst = 0.0
    for i in range(1, len(traj.samples) - 1):
        fd = (lams[i + 1] - lams[i - 1]) / (zs[i + 1] - zs[i - 1])
        tw = twist(traj.samples[i].h, model)
        h_dot, _ = vector_field_kl(traj.samples[i].h, model)
        worst = max(worst, float(np.abs(fd - tw.p_h.entries @ h_dot).max()))
    return worst

"""Continuation integrators, benchmark ODEs, and trajectory diagnostics."""

import math

import numpy as np
import pytest

from mdp_ode import (
    ControlKernel,
    FeasibilityError,
    KLModel,
    LqrModel,
    ModelError,
    NatureKernel,
    StateSpace,
    TrajectorySample,
    ValueTrajectory,
    brockett_policy,
    convexity_check,
    evaluate_solution,
    aroe_residual,
    integrate_brockett,
    integrate_kl,
    lambda_derivative_check,
    lqr_coefficient_ode,
    newton_solve,
    riccati_oracle,
    twist,
    vector_field_brockett,
    vector_field_kl,
)
from mdp_ode.fixtures import (
    brockett_closed_form,
    brockett_three_state,
    random_kl_model,
    symmetric_closed_form,
    symmetric_two_state,
)


def _constant_utility_model(c=2.5):
    space = StateSpace(("x1", "x2"), ("n",))
    return KLModel(
        space,
        NatureKernel(np.ones((2, 1))),
        ControlKernel(np.full((2, 2), 0.5)),
        utility=np.array([c, c]),
        reference_state=1,
    )


# ---------------------------------------------------------------------------
# vector field


def test_field_symmetric_at_zero():
    model = symmetric_two_state()
    h_dot, rate = vector_field_kl(np.zeros(2), model)
    assert np.abs(h_dot - np.array([1.0, 0.0])).max() <= 1e-12
    assert abs(rate - 0.5) <= 1e-14


def test_field_constant_utility_stalls():
    model = _constant_utility_model(2.5)
    h_dot, rate = vector_field_kl(np.zeros(2), model)
    assert np.abs(h_dot).max() <= 1e-12
    assert abs(rate - 2.5) <= 1e-12


def test_field_output_solves_poisson():
    rng = np.random.default_rng(61)
    model = random_kl_model(rng, d_u=2, d_n=3)
    h = rng.normal(size=model.d)
    h[model.reference_state] = 0.0
    h_dot, rate = vector_field_kl(h, model)
    tw = twist(h, model)
    from mdp_ode import invariant_pmf

    pi = invariant_pmf(tw.p_h)
    residual = tw.p_h.entries @ h_dot - h_dot + model.utility - rate
    assert np.abs(residual).max() <= 1e-10
    assert abs(rate - float(pi.weights @ model.utility)) <= 1e-12
    assert h_dot[model.reference_state] == 0.0


# ---------------------------------------------------------------------------
# KL continuation


def test_integrate_kl_closed_form_family():
    model = symmetric_two_state()
    traj = integrate_kl(model, (0.0, 2.0), step=1e-3, polish=True)
    for s in traj.samples:
        h_ref, eta_ref = symmetric_closed_form(s.zeta)
        assert abs(s.h[0] - h_ref) <= 1e-9
        assert abs(s.eta - eta_ref) <= 1e-9
        assert s.h[1] == 0.0


def test_integrate_kl_empty_span():
    model = symmetric_two_state()
    traj = integrate_kl(model, (0.0, 0.0), step=1e-3)
    assert len(traj.samples) == 1
    s = traj.samples[0]
    assert s.zeta == 0.0
    assert np.abs(s.h).max() == 0.0
    assert s.eta == 0.0


def test_integrate_kl_fourth_order_decay():
    # the utility scale sets the field's curvature; too small and the fine
    # endpoint difference drowns in double-precision noise
    rng = np.random.default_rng(67)
    model = random_kl_model(rng, d_u=2, d_n=5, utility_scale=4.0)
    ends = {}
    for step in (1e-1, 1e-2, 1e-3):
        traj = integrate_kl(model, (0.0, 1.0), step=step, polish=False)
        ends[step] = np.array(traj.final.h)
    coarse = np.abs(ends[1e-1] - ends[1e-2]).max()
    fine = np.abs(ends[1e-2] - ends[1e-3]).max()
    ratio = coarse / fine
    assert 1e4 / 5 <= ratio <= 1e4 * 5


def test_integrate_kl_polished_samples_satisfy_invariants():
    rng = np.random.default_rng(71)
    model = random_kl_model(rng, d_u=2, d_n=3)
    traj = integrate_kl(model, (0.0, 1.0), step=1e-2, polish=True)
    for s in traj.samples[:: len(traj.samples) // 10 + 1]:
        assert s.residual_sup <= 1e-12
        sol = evaluate_solution(s.zeta, s.h, model)
        assert aroe_residual(sol, s.zeta, model) <= 1e-10


def test_integrate_kl_eta_quadrature_agreement():
    rng = np.random.default_rng(73)
    model = random_kl_model(rng, d_u=3, d_n=2)
    traj = integrate_kl(model, (0.0, 1.0), step=1e-3, polish=True)
    for s in traj.samples:
        assert abs(s.eta - s.eta_quadrature) <= 1e-8


def test_integrate_kl_restart_is_consistent():
    rng = np.random.default_rng(79)
    model = random_kl_model(rng, d_u=2, d_n=2)
    base = integrate_kl(model, (0.0, 1.0), step=1e-2, polish=False)
    mid = base.samples[50]
    assert mid.zeta == pytest.approx(0.5, abs=1e-12)
    resumed = integrate_kl(
        model,
        (mid.zeta, 1.0),
        step=1e-2,
        polish=False,
        h_init=mid.h,
        eta_init=mid.eta_quadrature,
    )
    assert np.abs(np.array(resumed.final.h) - np.array(base.final.h)).max() <= 1e-12
    assert abs(resumed.final.eta_quadrature - base.final.eta_quadrature) <= 1e-12


def test_integrate_kl_policy_matches_direct_recomputation():
    model = symmetric_two_state()
    traj = integrate_kl(model, (0.0, 1.0), step=1e-2, polish=True)
    s = traj.final
    tw = twist(s.h, model)
    # optimal control rows rebuilt from scratch
    for x in range(model.d):
        weights = np.array(
            [
                model.r0.entries[x, xu]
                * math.exp(
                    sum(
                        model.q0.entries[x, xn] * s.h[model.space.flat(xu, xn)]
                        for xn in range(model.space.d_n)
                    )
                )
                for xu in range(model.space.d_u)
            ]
        )
        weights /= weights.sum()
        assert np.abs(tw.r_h.entries[x] - weights).max() <= 1e-14


def test_integrate_kl_requires_start_at_zero_without_h_init():
    model = symmetric_two_state()
    with pytest.raises(ModelError):
        integrate_kl(model, (0.5, 1.0), step=1e-2)


def test_integrate_kl_backward_span():
    model = symmetric_two_state()
    fwd = integrate_kl(model, (0.0, 1.0), step=1e-2, polish=True)
    back = integrate_kl(
        model, (1.0, 0.5), step=1e-2, polish=True, h_init=fwd.final.h
    )
    zs = back.zetas
    assert np.all(np.diff(zs) < 0)
    h_ref, _ = symmetric_closed_form(0.5)
    assert abs(back.final.h[0] - h_ref) <= 1e-9


# ---------------------------------------------------------------------------
# generator benchmark


def test_brockett_field_uncontrolled():
    model = brockett_three_state()
    g_dot, rate, policy = vector_field_brockett(np.zeros(3), model)
    assert np.abs(policy).max() == 0.0
    assert abs(rate - 2.0) <= 1e-12
    assert np.abs(g_dot - np.array([1.0, 0.0, 1.0])).max() <= 1e-12


@pytest.mark.parametrize("xi", [0.2, 0.7, 1.5])
def test_brockett_field_symmetric_value(xi):
    model = brockett_three_state()
    g = np.array([xi, 0.0, xi])
    g_dot, rate, policy = vector_field_brockett(g, model)
    assert abs(policy[0, 0] - xi) <= 1e-14
    assert abs(policy[2, 0] - xi) <= 1e-14
    assert policy[1, 0] == 0.0  # middle row of the input matrix is zero
    assert abs(g_dot[0] - 3.0 / (3.0 + xi)) <= 1e-12
    assert abs(rate - 2.0 * g_dot[0]) <= 1e-12


def test_brockett_field_feasibility_error():
    model = brockett_three_state()
    with pytest.raises(FeasibilityError) as err:
        vector_field_brockett(np.array([-1.2, 0.0, -1.2]), model)
    assert err.value.state is not None


def test_brockett_half_zeta_quoted_value():
    model = brockett_three_state()
    traj = integrate_brockett(model, (0.0, 0.5), step=1e-3)
    phi1 = brockett_policy(traj.final.h, model)[0, 0]
    assert abs(phi1 - (math.sqrt(12.0) - 3.0)) <= 1e-9


def test_brockett_closed_forms_along_trajectory():
    model = brockett_three_state()
    traj = integrate_brockett(model, (0.0, 2.0), step=1e-3)
    for s in traj.samples[:: max(1, len(traj.samples) // 50)]:
        phi_ref, gamma_ref = brockett_closed_form(s.zeta)
        phi1 = brockett_policy(s.h, model)[0, 0]
        assert abs(phi1 - phi_ref) <= 1e-6
        assert abs(s.eta - gamma_ref) <= 1e-6


def test_brockett_symmetry_along_trajectory():
    model = brockett_three_state()
    traj = integrate_brockett(model, (0.0, 2.0), step=1e-2)
    for s in traj.samples:
        assert abs(s.h[0] - s.h[2]) <= 1e-12
        assert s.h[1] == 0.0


def test_brockett_gamma_concave():
    model = brockett_three_state()
    traj = integrate_brockett(model, (0.0, 2.0), step=1e-2)
    worst = convexity_check(traj, negate=True)
    assert worst >= -1e-8


def test_brockett_feasibility_boundary_halts_integration():
    # the policy hits the input bound u = -1 at zeta = -5/6
    model = brockett_three_state()
    with pytest.raises(FeasibilityError) as err:
        integrate_brockett(model, (0.0, -0.9), step=1e-3)
    assert err.value.zeta is not None
    assert -5.0 / 6.0 - 0.01 <= err.value.zeta <= -5.0 / 6.0 + 0.05


# ---------------------------------------------------------------------------
# scalar linear-quadratic benchmark


def test_lqr_zero_span():
    table = lqr_coefficient_ode(LqrModel(alpha=0.95), 0.0, step=1e-3)
    assert table == [(0.0, 0.0, 0.0)]


def test_lqr_initial_derivative():
    model = LqrModel(alpha=0.95)
    table = lqr_coefficient_ode(model, 1e-4, step=1e-4)
    # derivative at the origin is 1 / (1 - alpha^2); a one-step secant at
    # spacing 1e-4 sits within one percent of it
    slope = table[1][1] / 1e-4
    assert abs(slope - 1.0 / 0.0975) / (1.0 / 0.0975) <= 0.01


@pytest.mark.parametrize("zeta", [0.25, 0.5, 1.0])
def test_lqr_matches_fixed_point_oracle(zeta):
    model = LqrModel(alpha=0.95)
    table = lqr_coefficient_ode(model, zeta, step=1e-3)
    b_end = table[-1][1]
    assert abs(b_end - riccati_oracle(model, zeta)) <= 1e-6


def test_lqr_gain_formula():
    model = LqrModel(alpha=0.95)
    table = lqr_coefficient_ode(model, 0.5, step=1e-3)
    for zeta, b, gain in table[:: len(table) // 10 + 1]:
        assert abs(gain - b * 0.95 / (1.0 + b)) <= 1e-14


def test_riccati_oracle_basics():
    model = LqrModel(alpha=0.95)
    assert riccati_oracle(model, 0.0) == 0.0
    values = [riccati_oracle(model, z) for z in np.linspace(0.0, 2.0, 9)]
    assert all(b2 > b1 for b1, b2 in zip(values, values[1:]))


def test_riccati_oracle_closed_form():
    # the fixed point solves b^2 + b (1 - zeta - alpha^2) - zeta = 0
    model = LqrModel(alpha=0.95)
    for zeta in (0.1, 0.7, 1.3):
        c = 1.0 - zeta - 0.95**2
        b_ref = (-c + math.sqrt(c * c + 4.0 * zeta)) / 2.0
        assert abs(riccati_oracle(model, zeta) - b_ref) <= 1e-10


def test_lqr_model_validation():
    with pytest.raises(ModelError):
        LqrModel(alpha=1.0)
    with pytest.raises(ModelError):
        LqrModel(alpha=0.0)


# ---------------------------------------------------------------------------
# trajectory diagnostics


def test_convexity_symmetric_family():
    model = symmetric_two_state()
    traj = integrate_kl(model, (0.0, 2.0), step=1e-2, polish=True)
    worst = convexity_check(traj)
    assert worst >= -1e-8
    assert worst > 0.0  # strictly convex closed form


def test_convexity_constant_utility_is_affine():
    model = _constant_utility_model(1.5)
    traj = integrate_kl(model, (0.0, 1.0), step=1e-2, polish=True)
    zs = traj.zetas
    etas = traj.etas
    second = etas[2:] - 2 * etas[1:-1] + etas[:-2]
    assert np.abs(second).max() <= 1e-10
    assert np.abs(etas - 1.5 * zs).max() <= 1e-10
    assert convexity_check(traj) >= -1e-10


def test_convexity_check_flags_concave_values():
    model = symmetric_two_state()
    traj = integrate_kl(model, (0.0, 1.0), step=1e-1, polish=True)
    flipped = ValueTrajectory(
        samples=tuple(
            TrajectorySample(
                zeta=s.zeta,
                h=s.h,
                eta=-s.eta,
                eta_quadrature=-s.eta_quadrature,
                pi=s.pi,
                residual_sup=s.residual_sup,
            )
            for s in traj.samples
        ),
        model=traj.model,
        settings=traj.settings,
    )
    with pytest.raises(ModelError):
        convexity_check(flipped)


def test_lambda_derivative_symmetric_closed_form():
    model = symmetric_two_state()
    traj = integrate_kl(model, (0.0, 1.0), step=1e-3, polish=True)
    err = lambda_derivative_check(traj, model)
    assert err <= 1e-6
    # both sides analytically equal exp(zeta) / (exp(zeta) + 1)
    s = traj.samples[len(traj.samples) // 2]
    tw = twist(s.h, model)
    h_dot, _ = vector_field_kl(s.h, model)
    lhs = tw.p_h.entries @ h_dot
    expected = math.exp(s.zeta) / (math.exp(s.zeta) + 1.0)
    assert np.abs(lhs - expected).max() <= 1e-10


def test_lambda_derivative_constant_utility():
    model = _constant_utility_model(2.0)
    traj = integrate_kl(model, (0.0, 0.5), step=1e-2, polish=True)
    assert lambda_derivative_check(traj, model) <= 1e-12


def test_lambda_derivative_second_order_decay():
    rng = np.random.default_rng(83)
    model = random_kl_model(rng, d_u=2, d_n=3)
    errs = {}
    for step in (1e-2, 1e-3):
        traj = integrate_kl(model, (0.0, 1.0), step=step, polish=True)
        errs[step] = lambda_derivative_check(traj, model)
    ratio = errs[1e-2] / errs[1e-3]
    assert 100 / 5 <= ratio <= 100 * 5


def test_trajectory_requires_monotone_parameters():
    model = symmetric_two_state()
    traj = integrate_kl(model, (0.0, 0.1), step=5e-2, polish=True)
    samples = list(traj.samples)
    with pytest.raises(ModelError):
        ValueTrajectory(
            samples=(samples[0], samples[2], samples[1]),
            model=traj.model,
            settings=traj.settings,
        )

import math

import numpy as np
import pytest

from phsdp.core import ContractError, vector_field
from phsdp.dpsc import InversionDomainError, reference_residual
from phsdp.fields import fd_gradient, fd_jacobian
from phsdp.maglev import (MaglevParams, MaglevReference, build_dpsc, build_maglev, build_reference,
                          closed_loop_rhs)

from toy_models import generic_controller, maglev_states

K, R2, CC, B, M = 6.4042e-5, 2.52, 0.005, 0.828, 0.0844
KQ = KP = KS = 50.0


def f(t):
    return 2e-3 + 1e-3 * math.sin(t)


def sd_oracle(q, p, t):
    """Scalar desired flux written out by hand."""
    w = M * -1e-3 * math.sin(t) + B - KP * (p - M * 1e-3 * math.cos(t)) - KQ * (q - f(t))
    return math.sqrt(2 * K * w)


def u_oracle(q, p, s, t):
    sstar = math.sqrt(2 * K * (M * -1e-3 * math.sin(t) + B))
    sdot = K * M * (-1e-3 * math.cos(t)) / sstar
    return R2 * (CC - q) * s / K - KS * (s - sd_oracle(q, p, t)) + sdot


# -- reference ----------------------------------------------------------------

def test_reference_at_zero(maglev):
    _, ref, _ = maglev
    assert ref.state(0.0) == pytest.approx([2.0e-3, 8.44e-5, 1.02983e-2], rel=1e-5)
    assert ref.sdot(0.0)[0] == pytest.approx(-5.249e-7, rel=1e-3)


def test_reference_rates_match_finite_differences(maglev):
    _, ref, _ = maglev
    for t in np.linspace(0, 6, 13):
        h = 1e-5
        fd = (ref.state(t + h) - ref.state(t - h)) / (2 * h)
        assert np.allclose(fd, ref.rate(t), rtol=1e-6, atol=1e-12)


def test_constant_reference(params):
    ref = build_reference(params, MaglevReference.constant(0.003))
    assert ref.p(1.0)[0] == 0.0 and ref.sdot(1.0)[0] == 0.0
    assert ref.s(1.0)[0] == pytest.approx(math.sqrt(2 * K * B))
    ctrl = build_dpsc(params, ref)
    assert np.max(np.abs(ctrl.feasibility_residual(0.5))) < 1e-12
    assert np.max(np.abs(reference_residual(ctrl.model, ref, 0.5))) < 1e-12


def test_infeasible_reference_rejected(params):
    steep = MaglevReference.sinusoid(amplitude=1.0, offset=0.0, frequency=10.0)
    with pytest.raises(ContractError, match="infeasible"):
        build_reference(params, steep, horizon=1.0)
    # without the up-front check the failure surfaces in the inversion
    ctrl = build_dpsc(params, build_reference(params, steep))
    t = math.pi / 20  # f'' = -100 here
    with pytest.raises((InversionDomainError, ValueError)):
        ctrl.desired_s(ctrl.ref.state(t), t)


def test_spline_reference_derivatives():
    t = np.linspace(0, 2 * math.pi, 200)
    f_ = MaglevReference.from_samples(t, 2e-3 + 1e-3 * np.sin(t))
    assert f_.f(1.0) == pytest.approx(f(1.0), abs=1e-9)
    assert f_.f2(1.0) == pytest.approx(-1e-3 * math.sin(1.0), abs=1e-6)


# -- shaped objects -------------------------------------------------------------

def test_shaped_hamiltonian_examples(maglev):
    _, _, ctrl = maglev
    t = 0.7
    assert ctrl.shaped_hamiltonian(f(t), 0.0, t) == 0.0
    assert ctrl.shaped_hamiltonian(f(t) + 1e-3, 0.0, t) == pytest.approx(2.5e-5, rel=1e-9)
    assert ctrl.shaped_hamiltonian(f(t), 8.44e-5, t) == pytest.approx(4.2200e-8, rel=1e-4)


def test_shaped_hamiltonian_gradient_matches_fd(maglev, rng):
    _, _, ctrl = maglev
    for x, t in maglev_states(rng, 30):
        qp = x[:2]
        fd = fd_gradient(lambda z: ctrl.shaped_hamiltonian(z[0], z[1], t), qp)
        assert np.allclose(fd, ctrl.shaped_hamiltonian_gradient(qp, t), rtol=1e-6, atol=1e-10)


def test_shaped_p_dissipation_examples(maglev):
    _, ref, ctrl = maglev
    t = 1.3
    assert ctrl.shaped_p_dissipation_gradient(ref.p(t), t) == pytest.approx(-ref.pdot(t))
    assert ctrl.shaped_p_dissipation_gradient(ref.p(0.0) + 1e-3, 0.0)[0] == pytest.approx(0.05, abs=1e-15)
    const = build_dpsc(MaglevParams(), build_reference(MaglevParams(), MaglevReference.constant(0.002)))
    assert const.shaped_p_dissipation_gradient([0.01], 0.0)[0] == pytest.approx(KP * 0.01)


def test_shaped_potential_conditions(maglev, rng):
    _, ref, ctrl = maglev
    for _ in range(200):
        t = rng.uniform(0, 10)
        assert ctrl.V_d.gradient(ref.q(t), t) == pytest.approx([0.0])
        assert ctrl.F_pe.gradient(np.zeros(1)) == pytest.approx([0.0])
        assert ctrl.F_se.gradient(np.zeros(1)) == pytest.approx([0.0])
        q = rng.uniform(-0.01, 0.01, 1)
        assert np.linalg.eigvalsh(ctrl.V_d.hessian(q, t))[0] >= KQ - 1e-12
        assert np.linalg.eigvalsh(ctrl.F_pe.hessian(q))[0] >= KP - 1e-12
        assert np.linalg.eigvalsh(ctrl.F_se.hessian(q))[0] >= KS - 1e-12


# -- desired auxiliary state ----------------------------------------------------

def test_desired_s_on_reference(maglev):
    _, ref, ctrl = maglev
    assert ctrl.desired_s(ref.state(0.0), 0.0)[0] == pytest.approx(1.02983e-2, rel=1e-5)
    for t in np.linspace(0, 10, 21):
        assert ctrl.desired_s(ref.state(t), t) == pytest.approx(ref.s(t), rel=1e-13)


def test_desired_s_position_error_example(maglev):
    _, ref, ctrl = maglev
    t = 0.0  # f'' = 0
    x = np.array([f(t) + 1e-3, ref.p(t)[0], 0.0])
    assert ctrl.desired_s(x, t)[0] == pytest.approx(math.sqrt(2 * K * 0.778), rel=1e-12)
    assert ctrl.desired_s(x, t)[0] == pytest.approx(9.9825e-3, abs=1e-7)


def test_desired_s_matches_scalar_oracle(maglev, rng):
    _, _, ctrl = maglev
    for x, t in maglev_states(rng, 100):
        assert ctrl.desired_s(x, t)[0] == pytest.approx(sd_oracle(x[0], x[1], t), rel=1e-12)


def test_desired_s_domain_error_carries_argument(maglev):
    _, _, ctrl = maglev
    x = np.array([0.03, 0.0, 0.0])
    with pytest.raises(InversionDomainError) as info:
        ctrl.desired_s(x, 0.0)
    w = B - KP * (0 - M * 1e-3) - KQ * (0.03 - 0.002)
    assert info.value.argument[0] == pytest.approx(w)
    sd, clamped = ctrl.desired_s_checked(x, 0.0, clamp_floor=1e-12)
    assert clamped and sd[0] == pytest.approx(1e-6)


def test_benchmark_ic_is_inside_inversion_domain(maglev):
    _, _, ctrl = maglev
    w = ctrl.phi_argument(np.array([0.011, 0.004, 0.0]), 0.0)[0]
    assert w == pytest.approx(0.828 - 50 * (0.004 - 8.44e-5) - 50 * 0.009, rel=1e-12)
    assert w > 0


def test_desired_s_jacobian_matches_fd(rng):
    from phsdp.maglev import maglev_setup
    _, _, ctrl = maglev_setup()
    for x, t in maglev_states(rng, 30):
        fd = fd_jacobian(lambda z: ctrl.desired_s(np.concatenate([z, x[2:]]), t), x[:2])
        assert np.allclose(fd, ctrl.desired_s_jacobian(x, t), rtol=1e-5, atol=1e-9)
    gc = generic_controller()
    for _ in range(30):
        x, t = rng.normal(size=6), rng.uniform(0, 6)
        fd = fd_jacobian(lambda z: gc.desired_s(np.concatenate([z, x[4:]]), t), x[:4])
        assert np.allclose(fd, gc.desired_s_jacobian(x, t), rtol=1e-5, atol=1e-8)


# -- control law ----------------------------------------------------------------

def test_control_on_reference(maglev):
    _, ref, ctrl = maglev
    u = ctrl.control(ref.state(0.0), 0.0)[0]
    terms = R2 * (CC - 0.002) * math.sqrt(2 * K * B) / K + K * M * -1e-3 / math.sqrt(2 * K * B)
    assert u == pytest.approx(terms, rel=1e-12)
    assert u == pytest.approx(1.21570, abs=1e-4)
    assert u == pytest.approx(ref.u(0.0)[0], rel=1e-12)


def test_control_flux_error_feedback(maglev):
    _, ref, ctrl = maglev
    x = ref.state(0.0)
    x_off = x + np.array([0.0, 0.0, 1e-3])
    resistive = R2 * (CC - x[0]) * 1e-3 / K
    du = ctrl.control(x_off, 0.0)[0] - ctrl.control(x, 0.0)[0]
    assert du - resistive == pytest.approx(-0.05, abs=1e-12)


def test_control_matches_scalar_oracle(maglev, rng):
    _, _, ctrl = maglev
    for x, t in maglev_states(rng, 100):
        assert ctrl.control(x, t)[0] == pytest.approx(u_oracle(*x, t), rel=1e-11, abs=1e-12)


def test_control_vanishes_without_dissipation_or_feedforward():
    from toy_models import decoupled_controller
    from dataclasses import replace
    from phsdp.fields import ScalarField
    ctrl = decoupled_controller()
    ctrl = replace(ctrl, model=replace(ctrl.model, F_s=ScalarField.zero(2)))
    x = np.array([0.4, -0.2, 0.0])  # s = s_d = 0, sdot* = 0
    assert ctrl.control(x, 0.0) == pytest.approx([0.0])


def test_controller_rejects_rank_deficient_input():
    from dataclasses import replace
    from phsdp.maglev import maglev_setup
    model, ref, ctrl = maglev_setup()
    with pytest.raises(ContractError):
        replace(ctrl, model=replace(model, g=np.zeros((1, 1))))


def test_fast_rhs_agrees_with_generic_path(params, maglev, rng):
    _, _, ctrl = maglev
    rhs = closed_loop_rhs(params, MaglevReference.sinusoid())
    for x, t in maglev_states(rng, 100, margin=-1.0):
        generic = ctrl.closed_loop_field(x, t, clamp_floor=1e-12)
        fast = rhs(t, *x)
        assert np.allclose(fast[:3], generic, rtol=1e-12, atol=1e-15)
        assert fast[3] == pytest.approx(ctrl.control(x, t, 1e-12)[0], rel=1e-12, abs=1e-15)


# -- matching, feasibility, cascade ---------------------------------------------

def test_matching_residual_maglev(maglev, rng):
    _, _, ctrl = maglev
    worst = max(np.max(np.abs(ctrl.matching_residual(x, t))) for x, t in maglev_states(rng, 100))
    assert worst < 1e-10


def test_matching_residual_generic_model(rng):
    ctrl = generic_controller()
    for _ in range(100):
        x, t = rng.normal(size=6), rng.uniform(0, 10)
        assert np.max(np.abs(ctrl.matching_residual(x, t))) < 1e-10


def test_matching_on_reference_reproduces_reference_rate(maglev):
    _, ref, ctrl = maglev
    for t in (0.0, 1.1, 4.0):
        x = ref.state(t)
        assert np.max(np.abs(ctrl.matching_residual(x, t))) < 1e-12
        assert ctrl.cascade_qp(x[:2], t) == pytest.approx(ref.rate(t)[:2], rel=1e-12, abs=1e-15)


def test_perturbed_sd_only_moves_momentum_row(maglev, rng):
    _, _, ctrl = maglev
    for x, t in maglev_states(rng, 20):
        r = ctrl.matching_residual(x, t, sd=ctrl.desired_s(x, t) + 1e-3)
        assert r[0] == 0.0 and abs(r[1]) > 1e-3


def test_cascade_qp_is_independent_of_s(maglev, rng):
    _, _, ctrl = maglev
    for x, t in maglev_states(rng, 20):
        a = ctrl.cascade_field(x, t)
        b = ctrl.cascade_field(x + np.array([0.0, 0.0, 0.01]), t)
        assert np.array_equal(a[:2], b[:2])


def test_feasibility_along_benchmark_reference(maglev):
    _, ref, ctrl = maglev
    worst = max(np.max(np.abs(ctrl.feasibility_residual(t))) for t in np.linspace(0, 2 * math.pi, 100))
    assert worst < 1e-8


def test_control_on_reference_is_a_feasibility_witness(maglev):
    model, ref, ctrl = maglev
    for t in np.linspace(0, 2 * math.pi, 25):
        x = ref.state(t)
        xdot = vector_field(model, x, ctrl.control(x, t), check_domain=False)
        assert np.max(np.abs(xdot - ref.rate(t))) < 1e-8
        assert np.max(np.abs(reference_residual(model, ref, t))) < 1e-8


def test_generic_reference_is_feasible_without_gyroscopic_term():
    from toy_models import generic_model, generic_reference

    zero = np.zeros((2, 2))
    flat = generic_controller(generic_model(zero), generic_reference(zero))
    for t in np.linspace(0, 6, 30):
        assert np.max(np.abs(flat.feasibility_residual(t))) < 1e-10
    ref = generic_reference()
    for t in (0.3, 2.0):
        h = 1e-5
        fd = (ref.state(t + h) - ref.state(t - h)) / (2 * h)
        assert np.allclose(fd, ref.rate(t), rtol=1e-6, atol=1e-8)


def test_gyroscopic_term_leaves_known_feasibility_gap():
    # the target keeps J_pp grad_p H_d, which the feedforward -pdot*^T p does not cancel
    from toy_models import JPP
    ctrl = generic_controller()
    for t in np.linspace(0, 6, 7):
        r = ctrl.feasibility_residual(t)
        assert np.allclose(r[:4], np.concatenate([np.zeros(2), -JPP @ ctrl.ref.qdot(t)]), atol=1e-12)


def test_closed_loop_equals_cascade_when_s_is_desired(rng):
    ctrl = generic_controller()
    for _ in range(30):
        x, t = rng.normal(size=6), rng.uniform(0, 6)
        x[4:] = ctrl.desired_s(x, t)
        assert np.allclose(ctrl.closed_loop_field(x, t), ctrl.cascade_field(x, t), atol=1e-10)


def test_desired_s_rate_mismatch_vanishes_on_reference(maglev):
    _, ref, ctrl = maglev
    for t in (0.5, 2.0):
        assert abs(ctrl.desired_s_rate_mismatch(ref.state(t), t)[0]) < 1e-9

import numpy as np
import pytest

from phsdp.core import ContractError
from phsdp.fields import ScalarField
from phsdp.maglev import build_maglev
from phsdp.tida import (StandardPhs, TidaTarget, left_annihilator, quadratic_error_hamiltonian,
                        standard_view, tida_control, tida_matching_residual,
                        trajectory_evolution_residual)

from toy_models import quadratic_model

R2 = 2.52


def timed(field):
    """Lift a time-invariant field to the ``(x, t)`` signature of targets."""
    return ScalarField(field.dim, lambda x, t: field(x), lambda x, t: field.gradient(x),
                       lambda x, t: field.hessian(x))


def maglev_std():
    return standard_view(build_maglev(), np.diag([0.0, 0.0, R2]))


def identity_target(std):
    return TidaTarget(std.J, std.R, timed(std.H), left_annihilator(std.g))


def test_left_annihilator():
    g = np.array([[0.0], [0.0], [1.0]])
    gp = left_annihilator(g)
    assert gp.shape == (2, 3) and np.allclose(gp @ g, 0)
    assert np.allclose(gp @ gp.T, np.eye(2))
    g2 = np.random.default_rng(0).normal(size=(5, 2))
    assert np.allclose(left_annihilator(g2) @ g2, 0, atol=1e-12)


def test_identity_target_gives_zero_control_and_residual(rng):
    std = maglev_std()
    target = identity_target(std)
    for _ in range(20):
        x = np.array([rng.uniform(0, 0.004), rng.normal(scale=0.01), rng.uniform(0, 0.02)])
        assert tida_control(target, std, x, 0.3) == pytest.approx([0.0], abs=1e-12)
        assert np.max(np.abs(tida_matching_residual(target, std, x, 0.3))) == 0.0


def test_identity_target_on_two_input_model(rng):
    std = standard_view(quadratic_model(), np.zeros((6, 6)))
    target = identity_target(std)
    for _ in range(10):
        x = rng.normal(size=6)
        assert np.allclose(tida_control(target, std, x, 0.0), 0.0, atol=1e-12)
        assert np.allclose(tida_matching_residual(target, std, x, 0.0), 0.0, atol=1e-12)


def test_scalar_toy_control():
    # xdot = -x + u, target xdot = -2x  ->  u = -x
    H = ScalarField.quadratic(np.eye(1))
    std = StandardPhs(np.zeros((1, 1)), np.eye(1), H, np.ones((1, 1)))
    target = TidaTarget(np.zeros((1, 1)), 2 * np.eye(1), timed(H), left_annihilator(std.g))
    for x in (-2.0, 0.0, 0.7, 3.5):
        assert tida_control(target, std, [x], 0.0) == pytest.approx([-x])
        assert std.field([x], tida_control(target, std, [x], 0.0)) == pytest.approx([-2 * x])
    assert tida_matching_residual(target, std, [1.0], 0.0).shape == (0,)


def test_mismatched_hamiltonian_leaves_residual(rng):
    std = maglev_std()
    Q = np.diag(rng.uniform(1, 10, 3))
    x_ref = lambda t: np.array([0.002, 0.0, 0.01])  # noqa: E731
    target = TidaTarget(std.J, std.R, quadratic_error_hamiltonian(Q, x_ref), left_annihilator(std.g))
    res = [np.max(np.abs(tida_matching_residual(target, std, x, 0.0)))
           for x in rng.uniform([0, -0.01, 0], [0.004, 0.01, 0.02], size=(10, 3))]
    assert min(res) > 1e-6


def test_trajectory_evolution_residual():
    H = ScalarField.quadratic(np.eye(1))
    std = StandardPhs(np.zeros((1, 1)), np.eye(1), H, np.ones((1, 1)))
    target = TidaTarget(np.zeros((1, 1)), np.eye(1), quadratic_error_hamiltonian(np.eye(1), lambda t: np.zeros(1)),
                        left_annihilator(std.g))
    # x*(t) = exp(-t) solves xdot = -x exactly
    t = 0.4
    xs = np.array([np.exp(-t)])
    assert trajectory_evolution_residual(target, xs, -xs, t) == pytest.approx([0.0])
    assert trajectory_evolution_residual(target, xs, np.zeros(1), t) == pytest.approx(xs)


def test_target_structure_validated():
    H = timed(ScalarField.quadratic(np.eye(2)))
    with pytest.raises(ContractError):
        TidaTarget(np.eye(2), np.zeros((2, 2)), H, np.zeros((0, 2)))
    with pytest.raises(ContractError):
        TidaTarget(np.zeros((2, 2)), -np.eye(2), H, np.zeros((0, 2)))


def test_rank_deficient_input_rejected():
    H = ScalarField.quadratic(np.eye(2))
    std = StandardPhs(np.zeros((2, 2)), np.zeros((2, 2)), H, np.zeros((2, 1)))
    target = TidaTarget(np.zeros((2, 2)), np.zeros((2, 2)), timed(H), np.eye(2))
    with pytest.raises(ContractError):
        tida_control(target, std, np.zeros(2), 0.0)


def test_quadratic_error_hamiltonian_gradient():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    H = quadratic_error_hamiltonian(Q, lambda t: np.array([t, -t]))
    x = np.array([1.0, 2.0])
    assert H.gradient(x, 0.5) == pytest.approx(Q @ (x - [0.5, -0.5]))
    assert H(x, 0.5) == pytest.approx(0.5 * (x - [0.5, -0.5]) @ Q @ (x - [0.5, -0.5]))

"""Dual potential shaping control.

Three scalar objects are shaped in sequence:

1. the potential energy, ``H_qp,d = T + V_d(q, t)``;
2. the momentum-channel dissipation,
   ``F_p,d = F_pe(p - p*(t)) - pdot*(t)^T p``, which fixes the desired
   auxiliary state ``s_d`` by inverting the coupling force through the
   momentum row;
3. the auxiliary-channel dissipation,
   ``F_s,d = F_se(s - s_d) - sdot*(t)^T s``, which gives the control law.

No matching PDE is involved: the momentum row is matched by the choice of
``s_d`` and the input only acts on the ``s`` row.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import ContractError, DomainError, PhsDpModel, as_flat, vector_field
from .fields import ScalarField

log = logging.getLogger(__name__)

Evaluator = Callable[[float], np.ndarray]


class InversionDomainError(DomainError):
    """The coupling-inversion argument is outside the domain of ``phi^-1``."""

    def __init__(self, message: str, argument):
        super().__init__(message, constraint="phi-inverse domain")
        self.argument = np.asarray(argument, dtype=float)


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Time-indexed reference ``x*(t)`` with analytic rates.

    ``u`` is an optional feasibility witness ``t -> R^m``.
    """

    q: Evaluator
    p: Evaluator
    s: Evaluator
    qdot: Evaluator
    pdot: Evaluator
    sdot: Evaluator
    u: Optional[Evaluator] = None

    def state(self, t: float) -> np.ndarray:
        return np.concatenate([np.atleast_1d(self.q(t)), np.atleast_1d(self.p(t)),
                               np.atleast_1d(self.s(t))])

    def rate(self, t: float) -> np.ndarray:
        return np.concatenate([np.atleast_1d(self.qdot(t)), np.atleast_1d(self.pdot(t)),
                               np.atleast_1d(self.sdot(t))])


def reference_residual(model: PhsDpModel, ref: ReferenceTrajectory, t: float) -> np.ndarray:
    """``xdot*(t) - f(x*(t), u*(t))``; requires a witness."""
    if ref.u is None:
        raise ContractError("reference has no feasibility witness u*")
    x = ref.state(t)
    return ref.rate(t) - vector_field(model, x, np.atleast_1d(ref.u(t)), check_domain=False)


@dataclass(frozen=True)
class CouplingInverse:
    """Explicit inverse of the coupling force ``phi``.

    ``violation(w)`` returns a message when ``w`` has no preimage on the
    chosen branch; ``clamp(w, floor)`` projects ``w`` back into the domain.
    """

    inverse: Callable[[np.ndarray], np.ndarray]
    violation: Callable[[np.ndarray], Optional[str]]
    clamp: Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class DpscController:
    """DPSC tracking controller for a PHS-DP model.

    ``V_d`` is a field over ``q`` taking time as an extra argument;
    ``F_pe`` and ``F_se`` are fields over the momentum and auxiliary errors.
    """

    model: PhsDpModel
    ref: ReferenceTrajectory
    V_d: ScalarField
    F_pe: ScalarField
    F_se: ScalarField
    phi_inverse: CouplingInverse

    def __post_init__(self):
        d = self.model.dims
        if d.ns == 0:
            raise ContractError("DPSC needs an auxiliary channel (n_s > 0)")
        if self.model.g_pinv is None:
            raise ContractError("input map g does not have full column rank")
        if (self.V_d.dim, self.F_pe.dim, self.F_se.dim) != (d.nq, d.np, d.ns):
            raise ContractError("shaped potential dimensions do not match the model")

    # Step 1 ------------------------------------------------------------

    def shaped_hamiltonian(self, q, p, t: float) -> float:
        qp = np.concatenate([np.atleast_1d(q), np.atleast_1d(p)])
        return float(self.model.kinetic(qp) + self.V_d(np.atleast_1d(q), t))

    def shaped_hamiltonian_gradient(self, qp: np.ndarray, t: float) -> np.ndarray:
        nq = self.model.dims.nq
        g = np.array(self.model.kinetic.gradient(qp), dtype=float)
        g[:nq] += self.V_d.gradient(qp[:nq], t)
        return g

    def shaped_hamiltonian_hessian(self, qp: np.ndarray, t: float) -> np.ndarray:
        nq = self.model.dims.nq
        H = np.array(self.model.kinetic.hessian(qp), dtype=float)
        H[:nq, :nq] += self.V_d.hessian(qp[:nq], t)
        return H

    # Step 2 ------------------------------------------------------------

    def shaped_p_dissipation_gradient(self, p, t: float) -> np.ndarray:
        """``grad F_pe(p - p*) - pdot*``."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return self.F_pe.gradient(p - self.ref.p(t)) - np.atleast_1d(self.ref.pdot(t))

    def cascade_qp(self, qp: np.ndarray, t: float) -> np.ndarray:
        """Target ``(q, p)`` dynamics; independent of ``s``."""
        nq = self.model.dims.nq
        out = self.model.J.qp @ self.shaped_hamiltonian_gradient(qp, t)
        out[nq:] -= self.shaped_p_dissipation_gradient(qp[nq:], t)
        return out

    def phi_argument(self, x, t: float) -> np.ndarray:
        """Momentum-row force that ``phi(s_d)`` has to supply.

        Equals the target momentum rate minus the open-loop momentum rate
        without coupling, evaluated at ``(q, p)``.
        """
        m = self.model
        d = m.dims
        x = as_flat(x, d)
        qp = x[:d.nqp]
        gH = m.H_qp.gradient(qp)
        gHd = self.shaped_hamiltonian_gradient(qp, t)
        J = m.J
        return (m.F_p.gradient(qp)[d.nq:]
                - self.shaped_p_dissipation_gradient(qp[d.nq:], t)
                + J.J_pq @ (gHd[:d.nq] - gH[:d.nq])
                + J.J_pp @ (gHd[d.nq:] - gH[d.nq:]))

    def desired_s(self, x, t: float, clamp_floor: Optional[float] = None) -> np.ndarray:
        """Desired auxiliary state ``s_d = phi^-1(phi_argument)``.

        With ``clamp_floor=None`` a domain violation raises
        :class:`InversionDomainError`; otherwise the argument is clamped.
        """
        return self.desired_s_checked(x, t, clamp_floor)[0]

    def desired_s_checked(self, x, t: float, clamp_floor: Optional[float] = None):
        """Like :meth:`desired_s` but also returns whether a clamp happened."""
        w = self.phi_argument(x, t)
        msg = self.phi_inverse.violation(w)
        if msg:
            if clamp_floor is None:
                raise InversionDomainError(f"cannot invert phi at t={t}: {msg}", w)
            log.debug("clamping phi argument %s at t=%s: %s", w, t, msg)
            return self.phi_inverse.inverse(self.phi_inverse.clamp(w, clamp_floor)), True
        return self.phi_inverse.inverse(w), False

    def desired_s_jacobian(self, x, t: float) -> np.ndarray:
        """``d s_d / d(q, p)``, shape ``(n_s, n_q + n_p)``."""
        m = self.model
        d = m.dims
        x = as_flat(x, d)
        qp = x[:d.nqp]
        Hd = self.shaped_hamiltonian_hessian(qp, t)
        H = m.H_qp.hessian(qp)
        dw = np.array(m.F_p.hessian(qp)[d.nq:, :], dtype=float)
        dw[:, d.nq:] -= self.F_pe.hessian(qp[d.nq:] - self.ref.p(t))
        dw += m.J.J_pq @ (Hd[:d.nq, :] - H[:d.nq, :])
        dw += m.J.J_pp @ (Hd[d.nq:, :] - H[d.nq:, :])
        sd = self.desired_s(x, t)
        Dphi = np.atleast_2d(m.phi_jacobian(sd))
        if np.linalg.matrix_rank(Dphi) < d.ns:
            raise np.linalg.LinAlgError(f"phi Jacobian singular at s_d={sd}")
        return np.linalg.solve(Dphi, dw)

    # Step 3 ------------------------------------------------------------

    def shaped_s_dissipation_gradient(self, s, sd, t: float) -> np.ndarray:
        """``grad F_se(s - s_d) - sdot*``."""
        return self.F_se.gradient(np.asarray(s, dtype=float) - sd) - np.atleast_1d(self.ref.sdot(t))

    def control(self, x, t: float, clamp_floor: Optional[float] = None) -> np.ndarray:
        """``u = (g^T g)^-1 g^T (grad_s F_s - grad_s F_s,d)``."""
        return self.control_checked(x, t, clamp_floor)[0]

    def control_checked(self, x, t: float, clamp_floor: Optional[float] = None):
        """Return ``(u, s_d, clamped)``."""
        m = self.model
        d = m.dims
        x = as_flat(x, d)
        q, _, s = d.split(x)
        sd, clamped = self.desired_s_checked(x, t, clamp_floor)
        dFs = m.F_s.gradient(np.concatenate([q, s]))[d.nq:]
        u = m.g_pinv @ (dFs - self.shaped_s_dissipation_gradient(s, sd, t))
        return u, sd, clamped

    def cascade_field(self, x, t: float) -> np.ndarray:
        """Closed-loop target: ``(q, p)`` cascade on top, ``s`` row below."""
        d = self.model.dims
        x = as_flat(x, d)
        sd = self.desired_s(x, t)
        return np.concatenate([self.cascade_qp(x[:d.nqp], t),
                               -self.shaped_s_dissipation_gradient(x[d.nqp:], sd, t)])

    def matching_residual(self, x, t: float, sd=None) -> np.ndarray:
        """Open-loop ``(q, p)`` rows at ``s = s_d`` minus the target rows.

        ``sd`` overrides the computed desired state (for perturbation tests).
        """
        d = self.model.dims
        x = as_flat(x, d)
        if sd is None:
            sd = self.desired_s(x, t)
        xs = x.copy()
        xs[d.nqp:] = sd
        u0 = np.zeros(self.model.m)
        open_qp = vector_field(self.model, xs, u0, check_domain=False)[:d.nqp]
        return open_qp - self.cascade_qp(x[:d.nqp], t)

    def feasibility_residual(self, t: float) -> np.ndarray:
        """``xdot*(t)`` minus the closed-loop target field along ``x*(t)``."""
        return self.ref.rate(t) - self.cascade_field(self.ref.state(t), t)

    def closed_loop_field(self, x, t: float, clamp_floor: Optional[float] = None) -> np.ndarray:
        """Plant field under the control law."""
        u = self.control(x, t, clamp_floor)
        return vector_field(self.model, x, u, check_domain=False)

    def desired_s_rate_mismatch(self, x, t: float, h: float = 1e-6) -> np.ndarray:
        """Finite-difference ``d s_d/dt`` along the closed loop minus ``sdot*``.

        Diagnostic only: the feedforward uses the reference rate, which
        differs from the rate of ``s_d`` away from the reference.
        """
        x = as_flat(x, self.model.dims)
        f = self.closed_loop_field(x, t)
        sd_plus = self.desired_s(x + h * f, t + h)
        sd_minus = self.desired_s(x - h * f, t - h)
        return (sd_plus - sd_minus) / (2 * h) - np.atleast_1d(self.ref.sdot(t))


def quadratic_error_potential(gain, dim: int) -> ScalarField:
    """``0.5 k |e|^2`` (scalar gain) or ``0.5 e^T K e`` (matrix gain)."""
    K = np.asarray(gain, dtype=float)
    K = K * np.eye(dim) if K.ndim == 0 else K
    return ScalarField.quadratic(K)


def quadratic_tracking_potential(gain, q_ref: Evaluator, dim: int) -> ScalarField:
    """``V_d(q, t) = 0.5 (q - q*(t))^T K (q - q*(t))``."""
    K = np.asarray(gain, dtype=float)
    K = K * np.eye(dim) if K.ndim == 0 else K

    def value(q, t):
        e = np.asarray(q, dtype=float) - q_ref(t)
        return 0.5 * float(e @ K @ e)

    return ScalarField(dim, value,
                       lambda q, t: K @ (np.asarray(q, dtype=float) - q_ref(t)),
                       lambda q, t: K.copy())

"""Magnetic levitation benchmark.

State ``(q, p, s)``: ball height (m), vertical momentum (kg m/s) and coil
flux linkage (Wb).  Input ``u`` is the coil voltage (V), output ``y`` the
coil current (A).

The resistive potential ``F_s = r2 (c - q) s^2 / (2k)`` depends on the
live ball height.  Its ``q`` partial is deliberately left out of the
dynamics (only ``dF_s/ds`` appears), which keeps the benchmark model
and control law term for term.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .core import ContractError, Dims, Interconnection, PhsDpModel
from .dpsc import (CouplingInverse, DpscController, ReferenceTrajectory,
                   quadratic_error_potential, quadratic_tracking_potential)
from .fields import ScalarField


@dataclass(frozen=True)
class MaglevParams:
    k: float = 6.4042e-5    # N m / A^2
    r2: float = 2.52        # ohm
    c: float = 0.005        # m
    b: float = 0.8280       # kg m / s^2
    m: float = 0.0844       # kg
    k_q: float = 50.0
    k_p: float = 50.0
    k_s: float = 50.0

    def __post_init__(self):
        # zero gains are allowed so that a certificate can reject them
        for name, value in asdict(self).items():
            gain = name.startswith("k_")
            if not math.isfinite(value) or value < 0 or (value == 0 and not gain):
                raise ContractError(f"maglev parameter {name} must be positive, got {value}")


@dataclass(frozen=True)
class MaglevReference:
    """Height reference ``f(t)`` with three analytic derivatives."""

    f: Callable[[float], float]
    f1: Callable[[float], float]
    f2: Callable[[float], float]
    f3: Callable[[float], float]

    @classmethod
    def sinusoid(cls, amplitude: float = 1e-3, offset: float = 2e-3,
                 frequency: float = 1.0, phase: float = 0.0) -> "MaglevReference":
        """``offset + amplitude sin(frequency t + phase)``."""
        a, w = amplitude, frequency
        return cls(lambda t: offset + a * math.sin(w * t + phase),
                   lambda t: a * w * math.cos(w * t + phase),
                   lambda t: -a * w * w * math.sin(w * t + phase),
                   lambda t: -a * w ** 3 * math.cos(w * t + phase))

    @classmethod
    def constant(cls, value: float) -> "MaglevReference":
        return cls(lambda t: value, lambda t: 0.0, lambda t: 0.0, lambda t: 0.0)

    @classmethod
    def from_samples(cls, t, f) -> "MaglevReference":
        """Quintic interpolating spline through ``(t_i, f_i)``."""
        from scipy.interpolate import make_interp_spline

        spl = make_interp_spline(np.asarray(t, dtype=float), np.asarray(f, dtype=float), k=5)
        d1, d2, d3 = spl.derivative(1), spl.derivative(2), spl.derivative(3)
        return cls(lambda t: float(spl(t)), lambda t: float(d1(t)),
                   lambda t: float(d2(t)), lambda t: float(d3(t)))


def build_maglev(params: MaglevParams = MaglevParams()) -> PhsDpModel:
    k, r2, c, b, m = params.k, params.r2, params.c, params.b, params.m

    def H_qp(z):
        q, p = z
        return p * p / (2 * m) + b * q

    def H_s(z):
        q, s = z
        return (c - q) * s * s / (2 * k)

    def F_s(z):
        q, s = z
        return r2 * (c - q) * s * s / (2 * k)

    def kinetic(z):
        return z[1] * z[1] / (2 * m)

    def domain(x):
        if not np.all(np.isfinite(x)):
            return "state is not finite"
        if not x[0] < c:
            return f"q < c violated (q={x[0]:.6g}, c={c:.6g})"
        return None

    return PhsDpModel(
        dims=Dims(1, 1, 1),
        H_qp=ScalarField(2, H_qp,
                         lambda z: np.array([b, z[1] / m]),
                         lambda z: np.array([[0.0, 0.0], [0.0, 1.0 / m]])),
        H_s=ScalarField(2, H_s,
                        lambda z: np.array([-z[1] ** 2 / (2 * k), (c - z[0]) * z[1] / k]),
                        lambda z: np.array([[0.0, -z[1] / k], [-z[1] / k, (c - z[0]) / k]])),
        F_p=ScalarField.zero(2),
        F_s=ScalarField(2, F_s,
                        lambda z: np.array([-r2 * z[1] ** 2 / (2 * k), r2 * (c - z[0]) * z[1] / k]),
                        lambda z: np.array([[0.0, -r2 * z[1] / k],
                                            [-r2 * z[1] / k, r2 * (c - z[0]) / k]])),
        J=Interconnection.symplectic(1),
        g=np.array([[1.0]]),
        phi=lambda s: np.array([s[0] ** 2 / (2 * k)]),
        phi_jacobian=lambda s: np.array([[s[0] / k]]),
        inertia=lambda q: np.array([[m]]),
        kinetic=ScalarField(2, kinetic,
                            lambda z: np.array([0.0, z[1] / m]),
                            lambda z: np.array([[0.0, 0.0], [0.0, 1.0 / m]])),
        domain=domain,
        name="maglev",
    )


def flux_inverse(params: MaglevParams) -> CouplingInverse:
    """Nonnegative branch of ``phi^-1(w) = sqrt(2 k w)``.

    The clamp floor bounds the radicand ``2 k w`` from below.
    """
    k = params.k

    def violation(w):
        if not w[0] >= 0:
            return f"negative radicand 2k*w = {2 * k * w[0]:.6g}"
        return None

    return CouplingInverse(
        inverse=lambda w: np.array([math.sqrt(2 * k * w[0])]),
        violation=violation,
        clamp=lambda w, floor: np.array([max(w[0], floor / (2 * k))]),
    )


def build_reference(params: MaglevParams, f: MaglevReference,
                    horizon: Optional[float] = None, n_check: int = 1000) -> ReferenceTrajectory:
    """Feasible reference ``q* = f``, ``p* = m f'``, ``s* = sqrt(2k(m f'' + b))``.

    Feasibility ``m f'' > -b`` is checked on ``n_check`` points of
    ``[0, horizon]`` when a horizon is given.
    """
    k, m, b, r2, c = params.k, params.m, params.b, params.r2, params.c
    if horizon is not None:
        for t in np.linspace(0.0, horizon, n_check):
            if not m * f.f2(t) + b > 0:
                raise ContractError(f"reference infeasible at t={t:.6g}: m f'' = {m * f.f2(t):.6g} <= -b")

    def s_star(t):
        return math.sqrt(2 * k * (m * f.f2(t) + b))

    def sdot_star(t):
        return k * m * f.f3(t) / s_star(t)

    def u_star(t):
        # resistive cancellation plus feedforward; the error feedback vanishes
        return np.array([r2 * (c - f.f(t)) * s_star(t) / k + sdot_star(t)])

    return ReferenceTrajectory(
        q=lambda t: np.array([f.f(t)]),
        p=lambda t: np.array([m * f.f1(t)]),
        s=lambda t: np.array([s_star(t)]),
        qdot=lambda t: np.array([f.f1(t)]),
        pdot=lambda t: np.array([m * f.f2(t)]),
        sdot=lambda t: np.array([sdot_star(t)]),
        u=u_star,
    )


def build_dpsc(params: MaglevParams, ref: ReferenceTrajectory,
               model: Optional[PhsDpModel] = None) -> DpscController:
    model = build_maglev(params) if model is None else model
    return DpscController(
        model=model,
        ref=ref,
        V_d=quadratic_tracking_potential(params.k_q, ref.q, 1),
        F_pe=quadratic_error_potential(params.k_p, 1),
        F_se=quadratic_error_potential(params.k_s, 1),
        phi_inverse=flux_inverse(params),
    )


def maglev_setup(params: MaglevParams = MaglevParams(), f: Optional[MaglevReference] = None):
    """Model, reference and controller with the benchmark defaults."""
    f = MaglevReference.sinusoid() if f is None else f
    model = build_maglev(params)
    ref = build_reference(params, f)
    return model, ref, build_dpsc(params, ref, model)


def closed_loop_rhs(params: MaglevParams, f: MaglevReference, clamp_floor: float = 1e-12):
    """Scalar closed-loop right-hand side for fast integration.

    Expands the DPSC law for this plant by hand; it must agree with the
    generic ``DpscController.closed_loop_field`` (checked in the tests).
    Returns ``rhs(t, q, p, s) -> (qdot, pdot, sdot, u, s_d, clamped)``.
    """
    k, r2, c, b, m = params.k, params.r2, params.c, params.b, params.m
    kq, kp, ks = params.k_q, params.k_p, params.k_s
    ff, f1, f2, f3 = f.f, f.f1, f.f2, f.f3
    sqrt = math.sqrt

    def rhs(t, q, p, s):
        a2 = f2(t)
        w = m * a2 + b - kp * (p - m * f1(t)) - kq * (q - ff(t))
        clamped = not w >= 0.0
        if clamped:
            w = clamp_floor / (2 * k)
        sd = sqrt(2 * k * w)
        sdot_ref = k * m * f3(t) / sqrt(2 * k * (m * a2 + b))
        u = r2 * (c - q) * s / k - ks * (s - sd) + sdot_ref
        return p / m, s * s / (2 * k) - b, -r2 * (c - q) * s / k + u, u, sd, clamped

    return rhs

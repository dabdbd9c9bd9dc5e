"""Timed IDA-PBC baseline for standard port-Hamiltonian models.

Only the generic control law and matching residual live here.  A concrete
design ``(J_d, R_d, H_d)`` has to be supplied by the user; none is derived.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ContractError, PhsDpModel
from .fields import ScalarField

TOL = 1e-12


@dataclass(frozen=True)
class StandardPhs:
    """``xdot = (J - R) grad H + g u``, ``y = g^T grad H``."""

    J: np.ndarray
    R: np.ndarray
    H: ScalarField
    g: np.ndarray

    def __post_init__(self):
        J = np.atleast_2d(np.asarray(self.J, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        g = np.asarray(self.g, dtype=float)
        g = g[:, None] if g.ndim == 1 else np.atleast_2d(g)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "g", g)
        n = J.shape[0]
        if J.shape != (n, n) or R.shape != (n, n) or g.shape[0] != n or self.H.dim != n:
            raise ContractError("inconsistent standard-PHS dimensions")

    @property
    def n(self) -> int:
        return self.J.shape[0]

    def drift(self, x) -> np.ndarray:
        return (self.J - self.R) @ self.H.gradient(np.asarray(x, dtype=float))

    def field(self, x, u) -> np.ndarray:
        return self.drift(x) + self.g @ np.atleast_1d(u)

    def output(self, x) -> np.ndarray:
        return self.g.T @ self.H.gradient(np.asarray(x, dtype=float))


def standard_view(model: PhsDpModel, R: np.ndarray) -> StandardPhs:
    """Standard-PHS form of a PHS-DP model with quadratic dissipation.

    ``R`` is the full ``n x n`` damping matrix, ``blkdiag(0, R_p, R_s)``.
    The storage ``H = H_qp + H_s`` is assembled over the full state.
    """
    d = model.dims
    n = d.n
    iq, ip, is_ = slice(0, d.nq), slice(d.nq, d.nqp), slice(d.nqp, n)

    def parts(x):
        x = np.asarray(x, dtype=float)
        return x[:d.nqp], np.concatenate([x[iq], x[is_]])

    def value(x):
        qp, qs = parts(x)
        return model.H_qp(qp) + model.H_s(qs)

    def gradient(x):
        qp, qs = parts(x)
        out = np.zeros(n)
        out[:d.nqp] = model.H_qp.gradient(qp)
        gs = model.H_s.gradient(qs)
        out[iq] += gs[:d.nq]
        out[is_] = gs[d.nq:]
        return out

    def hessian(x):
        qp, qs = parts(x)
        out = np.zeros((n, n))
        out[:d.nqp, :d.nqp] = model.H_qp.hessian(qp)
        hs = model.H_s.hessian(qs)
        idx = np.r_[np.arange(d.nq), np.arange(d.nqp, n)]
        out[np.ix_(idx, idx)] += hs
        return out

    g = np.zeros((n, model.m))
    if d.ns:
        g[is_] = model.g
    else:
        g[ip] = model.g
    return StandardPhs(model.full_J(), np.asarray(R, dtype=float), ScalarField(n, value, gradient, hessian), g)


def left_annihilator(g: np.ndarray) -> np.ndarray:
    """Full-rank ``g_perp`` with ``g_perp g = 0`` (orthonormal rows)."""
    g = np.atleast_2d(np.asarray(g, dtype=float))
    u, sv, _ = np.linalg.svd(g)
    rank = int(np.sum(sv > TOL * max(1.0, sv.max(initial=0.0))))
    return u[:, rank:].T


@dataclass(frozen=True)
class TidaTarget:
    """Closed-loop target ``(J_d, R_d, H_d)``; ``H_d`` takes time as extra argument.

    ``r3`` is carried through unchanged when a design taken from elsewhere
    is parameterised by it; nothing here interprets it.
    """

    J_d: np.ndarray
    R_d: np.ndarray
    H_d: ScalarField
    g_perp: np.ndarray
    r3: Optional[float] = None

    def __post_init__(self):
        J = np.atleast_2d(np.asarray(self.J_d, dtype=float))
        R = np.atleast_2d(np.asarray(self.R_d, dtype=float))
        object.__setattr__(self, "J_d", J)
        object.__setattr__(self, "R_d", R)
        object.__setattr__(self, "g_perp", np.atleast_2d(np.asarray(self.g_perp, dtype=float)).reshape(-1, J.shape[0]))
        if np.max(np.abs(J + J.T), initial=0.0) > TOL:
            raise ContractError("J_d is not skew-symmetric")
        if np.max(np.abs(R - R.T), initial=0.0) > TOL or np.linalg.eigvalsh(R)[0] < -TOL:
            raise ContractError("R_d is not symmetric positive semidefinite")

    def drift(self, x, t: float) -> np.ndarray:
        return (self.J_d - self.R_d) @ self.H_d.gradient(np.asarray(x, dtype=float), t)

    def check_annihilator(self, g) -> None:
        if self.g_perp.size and np.max(np.abs(self.g_perp @ g)) > TOL:
            raise ContractError("g_perp g != 0")


def tida_control(target: TidaTarget, model: StandardPhs, x, t: float) -> np.ndarray:
    """``u = (g^T g)^-1 g^T [(J_d - R_d) grad H_d - (J - R) grad H]``."""
    g = model.g
    if np.linalg.matrix_rank(g) < g.shape[1]:
        raise ContractError("input map g is rank deficient")
    return np.linalg.solve(g.T @ g, g.T @ (target.drift(x, t) - model.drift(x)))


def tida_matching_residual(target: TidaTarget, model: StandardPhs, x, t: float) -> np.ndarray:
    """``g_perp [(J - R) grad H - (J_d - R_d) grad H_d]``."""
    target.check_annihilator(model.g)
    return target.g_perp @ (model.drift(x) - target.drift(x, t))


def trajectory_evolution_residual(target: TidaTarget, x_ref, xdot_ref, t: float) -> np.ndarray:
    """``xdot* - (J_d - R_d) grad H_d(x*, t)``."""
    return np.asarray(xdot_ref, dtype=float) - target.drift(x_ref, t)


def quadratic_error_hamiltonian(Q, x_ref) -> ScalarField:
    """``H_d(x, t) = 0.5 (x - x*(t))^T Q (x - x*(t))``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))

    def value(x, t):
        e = np.asarray(x, dtype=float) - x_ref(t)
        return 0.5 * float(e @ Q @ e)

    return ScalarField(Q.shape[0], value,
                       lambda x, t: Q @ (np.asarray(x, dtype=float) - x_ref(t)),
                       lambda x, t: Q.copy())

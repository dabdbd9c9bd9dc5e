"""Port-Hamiltonian systems with dissipation potentials.

The state is partitioned as ``x = (q, p, s)``.  Dynamics::

    qdot = J_qq dH_qp/dq + J_qp dH_qp/dp
    pdot = J_pq dH_qp/dq + J_pp dH_qp/dp - dF_p/dp + phi(s)
    sdot = -dF_s/ds + g u

with ``phi(s) = J_pq dH_s/dq`` and output ``y = g^T dH_s/ds``.

Dissipation potentials are stored as fields over ``(q, p)`` and ``(q, s)``
so that models whose potentials carry a configuration-dependent coefficient
(the maglev resistive potential) fit without special casing.  Only the
``p``/``s`` partial derivatives enter the dynamics; ``q`` acts as a frozen
parameter.

When ``n_s == 0`` the input map acts on the momentum row instead and the
output is ``y = g^T dH_qp/dp``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fields import ScalarField

SKEW_TOL = 1e-12


class ContractError(ValueError):
    """Arguments have the wrong shape or violate a structural requirement."""


class DomainError(ValueError):
    """A state lies outside the model's admissible domain."""

    def __init__(self, message: str, constraint: str = ""):
        super().__init__(message)
        self.constraint = constraint


@dataclass(frozen=True)
class Dims:
    nq: int
    np: int
    ns: int

    def __post_init__(self):
        if min(self.nq, self.np, self.ns) < 0:
            raise ContractError(f"negative dimension in {self}")

    @property
    def n(self) -> int:
        return self.nq + self.np + self.ns

    @property
    def nqp(self) -> int:
        return self.nq + self.np

    def split(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ContractError(f"state has shape {x.shape}, expected ({self.n},)")
        return x[:self.nq], x[self.nq:self.nqp], x[self.nqp:]

    def join(self, q, p, s) -> np.ndarray:
        return np.concatenate([np.atleast_1d(np.asarray(v, dtype=float)) for v in (q, p, s)])


@dataclass(frozen=True)
class State:
    """Partitioned state ``(q, p, s)``."""

    q: np.ndarray
    p: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        for name in ("q", "p", "s"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)).ravel())

    @property
    def dims(self) -> Dims:
        return Dims(self.q.size, self.p.size, self.s.size)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.q, self.p, self.s])

    @classmethod
    def from_flat(cls, x, dims: Dims) -> "State":
        return cls(*dims.split(x))


def as_flat(x, dims: Dims) -> np.ndarray:
    if isinstance(x, State):
        if x.dims != dims:
            raise ContractError(f"state dims {x.dims} do not match model dims {dims}")
        return x.flatten()
    x = np.asarray(x, dtype=float)
    if x.shape != (dims.n,):
        raise ContractError(f"state has shape {x.shape}, expected ({dims.n},)")
    return x


@dataclass(frozen=True)
class Interconnection:
    """Constant skew-symmetric interconnection of the ``(q, p)`` block.

    The ``s`` rows and columns of the full matrix are zero.
    """

    J_qq: np.ndarray
    J_qp: np.ndarray
    J_pq: np.ndarray
    J_pp: np.ndarray

    def __post_init__(self):
        for name in ("J_qq", "J_qp", "J_pq", "J_pp"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        nq, np_ = self.J_qq.shape[0], self.J_pp.shape[0]
        shapes = {"J_qq": (nq, nq), "J_qp": (nq, np_), "J_pq": (np_, nq), "J_pp": (np_, np_)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ContractError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if np.max(np.abs(self.J_qq + self.J_qq.T), initial=0.0) > SKEW_TOL:
            raise ContractError("J_qq is not skew-symmetric")
        if np.max(np.abs(self.J_pp + self.J_pp.T), initial=0.0) > SKEW_TOL:
            raise ContractError("J_pp is not skew-symmetric")
        if np.max(np.abs(self.J_pq + self.J_qp.T), initial=0.0) > SKEW_TOL:
            raise ContractError("J_pq != -J_qp^T")

    @classmethod
    def symplectic(cls, n: int) -> "Interconnection":
        """Canonical ``[[0, I], [-I, 0]]``."""
        return cls(np.zeros((n, n)), np.eye(n), -np.eye(n), np.zeros((n, n)))

    @property
    def qp(self) -> np.ndarray:
        return np.block([[self.J_qq, self.J_qp], [self.J_pq, self.J_pp]])

    def full(self, ns: int) -> np.ndarray:
        nqp = self.qp.shape[0]
        J = np.zeros((nqp + ns, nqp + ns))
        J[:nqp, :nqp] = self.qp
        return J


@dataclass(frozen=True)
class PhsDpModel:
    """PHS-DP model.

    Parameters
    ----------
    dims : Dims
    H_qp : ScalarField over ``(q, p)``
    H_s : ScalarField over ``(q, s)``, affine in ``q``
    F_p : ScalarField over ``(q, p)``; only the ``p`` partials are used
    F_s : ScalarField over ``(q, s)``; only the ``s`` partials are used
    J : Interconnection
    g : input map, ``(n_s, m)`` or ``(n_p, m)`` when ``n_s == 0``
    phi, phi_jacobian : coupling force ``s -> R^{n_p}`` and its Jacobian
    inertia : ``q -> (n_p, n_p)`` positive definite mass matrix
    kinetic : ScalarField over ``(q, p)``; the part of ``H_qp`` kept by
        potential shaping
    domain : optional predicate returning a violation message or None
    """

    dims: Dims
    H_qp: ScalarField
    H_s: ScalarField
    F_p: ScalarField
    F_s: ScalarField
    J: Interconnection
    g: np.ndarray
    phi: Callable[[np.ndarray], np.ndarray]
    phi_jacobian: Callable[[np.ndarray], np.ndarray]
    inertia: Callable[[np.ndarray], np.ndarray]
    kinetic: ScalarField
    domain: Optional[Callable[[np.ndarray], Optional[str]]] = None
    name: str = "phs-dp"
    g_pinv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = self.dims
        g = np.asarray(self.g, dtype=float)
        if g.ndim == 1:
            g = g[:, None]
        rows = d.ns if d.ns > 0 else d.np
        if g.shape[0] != rows:
            raise ContractError(f"g has {g.shape[0]} rows, expected {rows}")
        object.__setattr__(self, "g", g)
        if self.J.qp.shape[0] != d.nqp or self.J.J_qq.shape[0] != d.nq:
            raise ContractError("interconnection does not match (n_q, n_p)")
        for name, fld, dim in (("H_qp", self.H_qp, d.nqp), ("H_s", self.H_s, d.nq + d.ns),
                               ("F_p", self.F_p, d.nqp), ("F_s", self.F_s, d.nq + d.ns),
                               ("kinetic", self.kinetic, d.nqp)):
            if fld.dim != dim:
                raise ContractError(f"{name} has dim {fld.dim}, expected {dim}")
        if g.shape[1] and np.linalg.matrix_rank(g) == g.shape[1]:
            object.__setattr__(self, "g_pinv", np.linalg.solve(g.T @ g, g.T))
        else:
            object.__setattr__(self, "g_pinv", None)

    @property
    def m(self) -> int:
        return self.g.shape[1]

    def check_domain(self, x) -> None:
        if self.domain is None:
            return
        msg = self.domain(np.asarray(x, dtype=float))
        if msg:
            raise DomainError(f"state outside admissible domain: {msg}", constraint=msg)

    def is_admissible(self, x) -> bool:
        return self.domain is None or not self.domain(np.asarray(x, dtype=float))

    def energy(self, x) -> float:
        """Total storage ``H = H_qp + H_s``."""
        x = as_flat(x, self.dims)
        q, p, s = self.dims.split(x)
        return float(self.H_qp(np.concatenate([q, p])) + self.H_s(np.concatenate([q, s])))

    def energy_gradient(self, x) -> np.ndarray:
        """Gradient of ``H`` with respect to the full state."""
        x = as_flat(x, self.dims)
        d = self.dims
        q, p, s = d.split(x)
        gqp = self.H_qp.gradient(np.concatenate([q, p]))
        gqs = self.H_s.gradient(np.concatenate([q, s]))
        out = np.zeros(d.n)
        out[:d.nqp] = gqp
        out[:d.nq] += gqs[:d.nq]
        out[d.nqp:] = gqs[d.nq:]
        return out

    def full_J(self) -> np.ndarray:
        return self.J.full(self.dims.ns)


def _check_input(model: PhsDpModel, u) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (model.m,):
        raise ContractError(f"input has shape {u.shape}, expected ({model.m},)")
    return u


def vector_field(model: PhsDpModel, x, u, check_domain: bool = True) -> np.ndarray:
    """Open-loop state derivative ``xdot``."""
    d = model.dims
    x = as_flat(x, d)
    u = _check_input(model, u)
    if check_domain:
        model.check_domain(x)
    q, p, s = d.split(x)
    qp = x[:d.nqp]
    gH = model.H_qp.gradient(qp)
    dHq, dHp = gH[:d.nq], gH[d.nq:]
    dFp = model.F_p.gradient(qp)[d.nq:]
    J = model.J
    qdot = J.J_qq @ dHq + J.J_qp @ dHp
    pdot = J.J_pq @ dHq + J.J_pp @ dHp - dFp
    if d.ns:
        qs = np.concatenate([q, s])
        pdot = pdot + model.phi(s)
        sdot = -model.F_s.gradient(qs)[d.nq:] + model.g @ u
    else:
        pdot = pdot + model.g @ u
        sdot = np.zeros(0)
    return np.concatenate([qdot, pdot, sdot])


def output(model: PhsDpModel, x) -> np.ndarray:
    """Conjugate output ``y``."""
    d = model.dims
    x = as_flat(x, d)
    q, p, s = d.split(x)
    if d.ns:
        return model.g.T @ model.H_s.gradient(np.concatenate([q, s]))[d.nq:]
    return model.g.T @ model.H_qp.gradient(np.concatenate([q, p]))[d.nq:]


def dissipated_power(model: PhsDpModel, x) -> float:
    """``dH_qp/dp . dF_p/dp + dH_s/ds . dF_s/ds`` (nonnegative for convex F)."""
    d = model.dims
    x = as_flat(x, d)
    q, p, s = d.split(x)
    qp = x[:d.nqp]
    out = float(model.H_qp.gradient(qp)[d.nq:] @ model.F_p.gradient(qp)[d.nq:])
    if d.ns:
        qs = np.concatenate([q, s])
        out += float(model.H_s.gradient(qs)[d.nq:] @ model.F_s.gradient(qs)[d.nq:])
    return out


def energy_rate(model: PhsDpModel, x, u, check_domain: bool = True) -> float:
    """``Hdot = grad(H) . xdot`` along the open-loop field."""
    return float(model.energy_gradient(x) @ vector_field(model, x, u, check_domain))


def power_balance_residual(model: PhsDpModel, x, u, check_domain: bool = True) -> float:
    """``Hdot - (-dissipated_power + y.u)``; zero up to rounding."""
    u = _check_input(model, u)
    hdot = energy_rate(model, x, u, check_domain)
    return hdot - (-dissipated_power(model, x) + float(output(model, x) @ u))


def check_model(model: PhsDpModel, samples, rng=None) -> list[str]:
    """Sample-based structural checks.

    Verifies dissipation normalisation at zero, convexity of the
    dissipation potentials (minimum Hessian eigenvalue > 0), that
    ``dH_s/dq`` does not depend on ``q``, and that ``phi`` matches
    ``J_pq dH_s/dq``.  Returns a list of failures.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    d = model.dims
    problems = []
    J = model.full_J()
    if np.max(np.abs(J + J.T), initial=0.0) > SKEW_TOL:
        problems.append("J + J^T != 0")
    for x in samples:
        x = as_flat(x, d)
        q, p, s = d.split(x)
        if d.np:
            z = np.concatenate([q, np.zeros(d.np)])
            if np.max(np.abs(model.F_p.gradient(z)[d.nq:])) > 1e-12:
                problems.append(f"dF_p/dp(0) != 0 at q={q}")
            Hp = model.F_p.hessian(np.concatenate([q, p]))[d.nq:, d.nq:]
            # identically zero F_p means an undamped momentum channel
            if np.any(Hp) and np.linalg.eigvalsh(Hp).min() <= 0:
                problems.append(f"F_p not strictly convex at {x}")
        if d.ns:
            z = np.concatenate([q, np.zeros(d.ns)])
            if np.max(np.abs(model.F_s.gradient(z)[d.nq:])) > 1e-12:
                problems.append(f"dF_s/ds(0) != 0 at q={q}")
            Hs = model.F_s.hessian(np.concatenate([q, s]))[d.nq:, d.nq:]
            if np.linalg.eigvalsh(Hs).min() <= 0:
                problems.append(f"F_s not strictly convex at {x}")
            q2 = q + rng.normal(scale=1.0 + np.abs(q), size=d.nq)
            a = model.H_s.gradient(np.concatenate([q, s]))[:d.nq]
            b = model.H_s.gradient(np.concatenate([q2, s]))[:d.nq]
            if np.max(np.abs(a - b), initial=0.0) > 1e-12:
                problems.append(f"dH_s/dq depends on q at s={s}")
            if np.max(np.abs(model.phi(s) - model.J.J_pq @ a), initial=0.0) > 1e-12:
                problems.append(f"phi(s) != J_pq dH_s/dq at s={s}")
    return problems

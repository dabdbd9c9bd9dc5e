"""Scalar fields with analytic derivatives, plus finite-difference oracles.

A :class:`ScalarField` bundles a value, gradient and Hessian evaluator over
a flat argument ``z``.  Extra positional arguments (typically time) are
forwarded unchanged, so time-parameterised potentials use the same type.

The finite-difference helpers are for checking analytic derivatives only;
nothing in the control path differentiates numerically.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class ScalarField:
    """Twice-differentiable scalar function ``z -> R`` on ``R^dim``."""

    dim: int
    value: Callable[..., float]
    gradient: Callable[..., np.ndarray]
    hessian: Callable[..., np.ndarray]

    def __call__(self, z, *args) -> float:
        return self.value(z, *args)

    @classmethod
    def quadratic(cls, Q, center=None) -> "ScalarField":
        """``0.5 (z - c)^T Q (z - c)`` for symmetric ``Q``."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        c = np.zeros(Q.shape[0]) if center is None else np.asarray(center, dtype=float)

        def value(z, *args):
            e = np.asarray(z, dtype=float) - c
            return 0.5 * float(e @ Q @ e)

        def gradient(z, *args):
            return Q @ (np.asarray(z, dtype=float) - c)

        def hessian(z, *args):
            return Q.copy()

        return cls(Q.shape[0], value, gradient, hessian)

    @classmethod
    def zero(cls, dim: int) -> "ScalarField":
        return cls(
            dim,
            lambda z, *args: 0.0,
            lambda z, *args: np.zeros(dim),
            lambda z, *args: np.zeros((dim, dim)),
        )

    def __add__(self, other: "ScalarField") -> "ScalarField":
        if other.dim != self.dim:
            raise ValueError(f"cannot add fields of dims {self.dim} and {other.dim}")
        return ScalarField(
            self.dim,
            lambda z, *a: self.value(z, *a) + other.value(z, *a),
            lambda z, *a: self.gradient(z, *a) + other.gradient(z, *a),
            lambda z, *a: self.hessian(z, *a) + other.hessian(z, *a),
        )


def fd_step(z: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    """Per-coordinate central-difference step ``rel * (1 + |z_i|)``."""
    return rel * (1.0 + np.abs(z))


def fd_gradient(f: Callable[..., float], z, *args, rel: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    z = np.asarray(z, dtype=float)
    h = fd_step(z, rel)
    out = np.empty_like(z)
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[i] += h[i]
        zm[i] -= h[i]
        out[i] = (f(zp, *args) - f(zm, *args)) / (2.0 * h[i])
    return out


def fd_jacobian(F: Callable[..., np.ndarray], z, *args, rel: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian ``dF/dz`` (rows index outputs)."""
    z = np.asarray(z, dtype=float)
    h = fd_step(z, rel)
    cols = []
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[i] += h[i]
        zm[i] -= h[i]
        cols.append((np.asarray(F(zp, *args)) - np.asarray(F(zm, *args))) / (2.0 * h[i]))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(b)))) if np.size(b) else 1.0
    return float(np.max(np.abs(a - b))) / scale if np.size(b) else 0.0


def check_scalar_field(field: ScalarField, points, *args,
                       grad_tol: float = 1e-6, hess_tol: float = 1e-5,
                       sym_tol: float = 1e-10) -> list[str]:
    """Compare analytic derivatives against central differences.

    Returns a list of human-readable failures; empty means all points pass.
    Errors are measured relative to ``max(1, max|analytic|)``.
    """
    problems = []
    for z in points:
        z = np.asarray(z, dtype=float)
        g = np.asarray(field.gradient(z, *args))
        g_fd = fd_gradient(field.value, z, *args)
        if _rel_err(g_fd, g) > grad_tol:
            problems.append(f"gradient mismatch at {z}: {g} vs fd {g_fd}")
        H = np.asarray(field.hessian(z, *args))
        H_fd = fd_jacobian(field.gradient, z, *args)
        if _rel_err(H_fd, H) > hess_tol:
            problems.append(f"hessian mismatch at {z}")
        if np.max(np.abs(H - H.T), initial=0.0) > sym_tol:
            problems.append(f"hessian not symmetric at {z}")
    return problems

"""Contraction certificates for DPSC closed loops.

The closed-loop virtual dynamics is lower block-triangular::

    d/dt [dx_qp]   [F11   0 ] [dx_qp]
         [ds   ] = [F21  F22] [ds   ]

``F11`` is Hurwitz under the shaping conditions, so the Lyapunov equation
``M F11 + F11^T M = -I`` has a unique SPD solution and the upper block
contracts at ``beta_qp = 1 / (2 lambda_max(M))``.  ``F22`` contracts at
``lambda_s`` in the identity metric.

Composite weight.  With ``W = blkdiag(M, eps I)``, ``mu = lambda_min(M)``,
``f = sup ||F21||`` and the upper block contracting at ``beta_u`` in ``M``,
Young's inequality ``2 f |a||b| <= lambda_s |b|^2 + (f^2 / lambda_s)|a|^2``
gives for the quadratic form of ``W F + F^T W``::

    <= -(2 beta_u - eps f^2 / (lambda_s mu)) |a|_M^2 - eps lambda_s |b|^2

Choosing ``eps = beta_u lambda_s mu / f^2`` makes the composite system
contract at ``beta = min(beta_u, lambda_s) / 2``.  With ``f = 0`` any
``eps`` works and the rate is ``min(beta_u, lambda_s)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .core import ContractError, DomainError
from .dpsc import DpscController, InversionDomainError

HURWITZ_TOL = 1e-10
LYAP_DEFECT_TOL = 1e-10
COND_WARN = 1e12


class UnsupportedStructureError(ContractError):
    pass


class CertificateError(ValueError):
    pass


@dataclass(frozen=True)
class JacobianBlocks:
    F11: np.ndarray
    F22: np.ndarray
    F21: np.ndarray

    @property
    def full(self) -> np.ndarray:
        n1, n2 = self.F11.shape[0], self.F22.shape[0]
        return np.block([[self.F11, np.zeros((n1, n2))], [self.F21, self.F22]])


@dataclass(frozen=True)
class HurwitzResult:
    is_hurwitz: bool
    eigenvalues: np.ndarray
    spectral_abscissa: float


@dataclass(frozen=True)
class LyapunovResult:
    M: np.ndarray
    beta: float
    defect: float
    condition: float
    warnings: tuple = ()


@dataclass
class ContractionCertificate:
    M_qp: np.ndarray
    beta_qp: float
    lambda_s: float
    epsilon: float
    f21_bound: float
    beta_composite: float
    beta_verified: float
    verdict: bool
    reasons: list = field(default_factory=list)
    F11_eigenvalues: Optional[np.ndarray] = None
    lyapunov_defect: float = float("nan")
    pointwise_beta_qp_min: float = float("nan")
    uniform_beta_qp: float = float("nan")
    n_samples: int = 0
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        ev = self.F11_eigenvalues
        return {
            "verdict": "pass" if self.verdict else "fail",
            "reasons": list(self.reasons),
            "warnings": list(self.warnings),
            "n_samples": self.n_samples,
            "M_qp": None if self.M_qp is None else np.asarray(self.M_qp).tolist(),
            "beta_qp": self.beta_qp,
            "pointwise_beta_qp_min": self.pointwise_beta_qp_min,
            "uniform_beta_qp": self.uniform_beta_qp,
            "lambda_s": self.lambda_s,
            "f21_bound": self.f21_bound,
            "epsilon": self.epsilon,
            "beta_composite": self.beta_composite,
            "beta_verified": self.beta_verified,
            "margin": self.beta_verified - self.beta_composite,
            "lyapunov_defect": self.lyapunov_defect,
            "F11_eigenvalues": None if ev is None else
                [{"re": float(z.real), "im": float(z.imag)} for z in ev],
        }


def jacobian_blocks(ctrl: DpscController, x, t: float) -> JacobianBlocks:
    """Analytic virtual-dynamics blocks of the DPSC cascade at ``(x, t)``."""
    m = ctrl.model
    d = m.dims
    if np.max(np.abs(m.J.J_qq), initial=0.0) > 0:
        raise UnsupportedStructureError("certificate requires J_qq = 0")
    x = np.asarray(x, dtype=float)
    qp = x[:d.nqp]
    s = x[d.nqp:]
    Hd = ctrl.shaped_hamiltonian_hessian(qp, t)
    F11 = m.J.qp @ Hd
    F11[d.nq:, d.nq:] -= ctrl.F_pe.hessian(qp[d.nq:] - ctrl.ref.p(t))
    sd = ctrl.desired_s(x, t)
    Hse = np.atleast_2d(ctrl.F_se.hessian(s - sd))
    F22 = -Hse
    # ds/dt = -grad F_se(s - s_d(x_qp)) so d/dx_qp = +Hse ds_d/dx_qp
    F21 = Hse @ ctrl.desired_s_jacobian(x, t)
    return JacobianBlocks(F11, F22, F21)



def hurwitz_check(F) -> HurwitzResult:
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape[0] != F.shape[1]:
        raise ContractError(f"matrix is not square: {F.shape}")
    try:
        ev = np.linalg.eigvals(F)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigenvalue solver failed: {exc}") from exc
    ev = ev[np.lexsort((ev.imag, ev.real))]
    abscissa = float(np.max(ev.real))
    return HurwitzResult(abscissa < -HURWITZ_TOL, ev, abscissa)


def solve_lyapunov(F, Q=None) -> np.ndarray:
    """Solve ``M F + F^T M = -Q`` by dense vectorisation (``Q = I`` default)."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    n = F.shape[0]
    Q = np.eye(n) if Q is None else np.asarray(Q, dtype=float)
    I = np.eye(n)
    # row-major vec: vec(M F) = (I kron F^T) vec(M), vec(F^T M) = (F^T kron I) vec(M)
    A = np.kron(I, F.T) + np.kron(F.T, I)
    M = np.linalg.solve(A, -Q.reshape(-1)).reshape(n, n)
    return 0.5 * (M + M.T)


def lyapunov_metric(F11) -> LyapunovResult:
    """Metric ``M`` with ``M F11 + F11^T M = -I`` and rate ``1/(2 lambda_max)``."""
    F11 = np.atleast_2d(np.asarray(F11, dtype=float))
    hz = hurwitz_check(F11)
    if not hz.is_hurwitz:
        raise CertificateError(f"F11 not Hurwitz (spectral abscissa {hz.spectral_abscissa:.6g})")
    n = F11.shape[0]
    A = np.kron(np.eye(n), F11.T) + np.kron(F11.T, np.eye(n))
    cond = float(np.linalg.cond(A))
    notes = []
    if cond > COND_WARN:
        notes.append(f"ill-conditioned Lyapunov solve (cond {cond:.3g})")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    M = solve_lyapunov(F11)
    defect = float(np.max(np.abs(M @ F11 + F11.T @ M + np.eye(n))))
    lam = np.linalg.eigvalsh(M)
    if lam[0] <= 0:
        raise CertificateError("Lyapunov solution is not positive definite")
    if defect >= LYAP_DEFECT_TOL:
        notes.append(f"Lyapunov defect {defect:.3g} exceeds {LYAP_DEFECT_TOL}")
    return LyapunovResult(M, 1.0 / (2.0 * lam[-1]), defect, cond, tuple(notes))


def metric_rate(Fx, M, Mdot=None) -> float:
    """Largest ``beta`` with ``Mdot + Fx^T M + M Fx <= -2 beta M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if np.linalg.eigvalsh(M)[0] <= 0:
        raise CertificateError("metric is not positive definite")
    A = Fx.T @ M + M @ Fx
    if Mdot is not None:
        A = A + Mdot
    A = 0.5 * (A + A.T)
    return -0.5 * float(scipy.linalg.eigh(A, M, eigvals_only=True)[-1])


@dataclass(frozen=True)
class RegionReport:
    beta: float
    rates: np.ndarray
    passed: bool
    reasons: tuple = ()


def contraction_region_check(field_jacobian: Callable, metric: Callable, samples: Sequence,
                             metric_rate_fn: Optional[Callable] = None) -> RegionReport:
    """Check the contraction inequality at every ``(x, t)`` sample.

    ``field_jacobian(x, t)`` and ``metric(x, t)`` return matrices;
    ``metric_rate_fn(x, t)`` optionally returns ``Mdot``.  The reported
    ``beta`` is the smallest per-sample rate.
    """
    rates = []
    for x, t in samples:
        Mdot = None if metric_rate_fn is None else metric_rate_fn(x, t)
        rates.append(metric_rate(np.atleast_2d(field_jacobian(x, t)), metric(x, t), Mdot))
    rates = np.array(rates)
    beta = float(rates.min()) if rates.size else float("nan")
    passed = bool(rates.size) and beta > 0
    reasons = () if passed else (f"no positive contraction rate (min beta {beta:.6g})",)
    return RegionReport(beta, rates, passed, reasons)


def box_samples(box: dict, n_random: int, grid: Optional[Sequence[int]] = None, rng=None):
    """Grid plus uniform random samples over ``{'q','p','s','t'}`` ranges.

    Each range is a list of ``(lo, hi)`` pairs per coordinate (or a single
    pair for scalar blocks).  Returns a list of ``(x, t)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    lows, highs = [], []
    for key in ("q", "p", "s"):
        r = np.asarray(box[key], dtype=float).reshape(-1, 2)
        lows.extend(r[:, 0])
        highs.extend(r[:, 1])
    t_lo, t_hi = box.get("t", (0.0, 0.0))
    lows.append(t_lo)
    highs.append(t_hi)
    lows, highs = np.array(lows), np.array(highs)
    if np.any(highs < lows):
        raise CertificateError("operating box has an inverted range")
    pts = []
    if grid:
        grid = list(grid) + [grid[-1]] * (lows.size - len(grid))
        axes = [np.linspace(lo, hi, n) if n > 1 else np.array([(lo + hi) / 2])
                for lo, hi, n in zip(lows, highs, grid)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts.extend(np.stack([m_.ravel() for m_ in mesh], axis=1))
    if n_random:
        pts.extend(lows + (highs - lows) * rng.random((n_random, lows.size)))
    return [(np.asarray(p[:-1]), float(p[-1])) for p in pts]


def hierarchical_certificate(ctrl: DpscController, samples: Sequence,
                             check_model_domain: bool = False) -> ContractionCertificate:
    """Assemble the cascade certificate over ``(x, t)`` samples.

    Reports both the pointwise Lyapunov rates and a single uniform metric
    taken from the sample with the largest ``F11`` spectral abscissa.
    """
    if not samples:
        raise CertificateError("no samples")
    reasons, notes = [], []
    m = ctrl.model
    if np.max(np.abs(m.J.J_qq), initial=0.0) > 0:
        raise UnsupportedStructureError("certificate requires J_qq = 0")

    blocks = []
    for x, t in samples:
        if check_model_domain:
            m.check_domain(x)
        try:
            blocks.append(jacobian_blocks(ctrl, x, t))
        except InversionDomainError as exc:
            raise DomainError(f"sample outside the inversion domain: {exc}") from exc

    hz = [hurwitz_check(b.F11) for b in blocks]
    worst = int(np.argmax([h.spectral_abscissa for h in hz]))
    fail = lambda reason: ContractionCertificate(  # noqa: E731
        None, float("nan"), float("nan"), float("nan"), float("nan"), float("nan"), float("nan"),
        False, reasons + [reason], hz[worst].eigenvalues, n_samples=len(samples), warnings=notes)
    if not all(h.is_hurwitz for h in hz):
        return fail(f"hurwitz_check: F11 not Hurwitz (spectral abscissa "
                    f"{hz[worst].spectral_abscissa:.6g})")

    pointwise = [lyapunov_metric(b.F11) for b in blocks]
    for lr in pointwise:
        notes.extend(w for w in lr.warnings if w not in notes)
    lyap = pointwise[worst]
    M = lyap.M
    beta_u = min(metric_rate(b.F11, M) for b in blocks)
    if not beta_u > 0:
        return fail(f"uniform metric does not contract the (q,p) block (beta {beta_u:.6g})")

    lambda_s = min(float(np.linalg.eigvalsh(-0.5 * (b.F22 + b.F22.T))[0]) for b in blocks)
    if not lambda_s > 0:
        return fail(f"F22 not negative definite (lambda_s {lambda_s:.6g})")
    f21 = max(float(np.linalg.norm(b.F21, 2)) if b.F21.size else 0.0 for b in blocks)
    if not np.isfinite(f21):
        return fail("F21 unbounded on samples")

    mu = float(np.linalg.eigvalsh(M)[0])
    if f21 > 0:
        eps = beta_u * lambda_s * mu / f21 ** 2
        beta_c = 0.5 * min(beta_u, lambda_s)
    else:
        eps = 1.0
        beta_c = min(beta_u, lambda_s)

    ns = blocks[0].F22.shape[0]
    W = scipy.linalg.block_diag(M, eps * np.eye(ns))
    beta_v = min(metric_rate(b.full, W) for b in blocks)
    if lyap.defect >= LYAP_DEFECT_TOL:
        reasons.append(f"Lyapunov defect {lyap.defect:.3g} >= {LYAP_DEFECT_TOL}")
    if not beta_c > 0:
        reasons.append("composite rate not positive")
    if beta_v < beta_c * (1 - 1e-9):
        reasons.append(f"composite inequality violated: verified rate {beta_v:.6g} < bound {beta_c:.6g}")
    return ContractionCertificate(
        M_qp=M, beta_qp=lyap.beta, lambda_s=lambda_s, epsilon=eps, f21_bound=f21,
        beta_composite=beta_c, beta_verified=beta_v, verdict=not reasons, reasons=reasons,
        F11_eigenvalues=hz[worst].eigenvalues, lyapunov_defect=lyap.defect,
        pointwise_beta_qp_min=min(lr.beta for lr in pointwise), uniform_beta_qp=beta_u,
        n_samples=len(samples), warnings=notes)

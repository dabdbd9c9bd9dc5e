"""Fixed-step RK4 simulation of closed loops, logging and rate fits."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Dims, DomainError, PhsDpModel, output, vector_field
from .dpsc import DpscController
from .tida import StandardPhs, TidaTarget, tida_control

log = logging.getLogger(__name__)


# -- closed loops -----------------------------------------------------------

class ClosedLoop:
    """Autonomous-in-form system ``xdot = rhs(t, x)`` with logging hooks.

    ``rhs`` returns ``(xdot, event)`` where ``event`` is a message or None.
    ``fast_rhs``, when set, maps ``(t, tuple)`` to ``(tuple, clamped)`` on
    plain floats and must agree with ``rhs``; the integrator prefers it.
    """

    dims: Dims
    m: int = 0
    fast_rhs: Optional[Callable] = None

    def rhs(self, t: float, x: np.ndarray):
        raise NotImplementedError

    def check(self, t: float, x: np.ndarray) -> None:
        """Raise :class:`DomainError` if ``x`` is not admissible."""

    def record(self, t: float, x: np.ndarray) -> dict:
        return {}


class FunctionLoop(ClosedLoop):
    """Wrap a plain ``f(t, x)``."""

    def __init__(self, f: Callable, n: int):
        self.f = f
        self.dims = Dims(n, 0, 0)

    def rhs(self, t, x):
        return np.asarray(self.f(t, x), dtype=float), None


class OpenLoop(ClosedLoop):
    def __init__(self, model: PhsDpModel, u: Optional[Callable] = None, strict_domain: bool = True):
        self.model = model
        self.dims = model.dims
        self.m = model.m
        self.u = (lambda t, x: np.zeros(model.m)) if u is None else u
        self.strict = strict_domain

    def rhs(self, t, x):
        return vector_field(self.model, x, self.u(t, x), check_domain=False), None

    def check(self, t, x):
        if self.strict:
            self.model.check_domain(x)

    def record(self, t, x):
        return {"u": self.u(t, x), "y": output(self.model, x), "H": self.model.energy(x)}


class DpscLoop(ClosedLoop):
    """Plant under DPSC.  ``clamp_floor=None`` aborts on inversion failures."""

    def __init__(self, ctrl: DpscController, clamp_floor: Optional[float] = 1e-12,
                 strict_domain: bool = False, fast_rhs: Optional[Callable] = None):
        self.ctrl = ctrl
        self.model = ctrl.model
        self.dims = ctrl.model.dims
        self.m = ctrl.model.m
        self.clamp_floor = clamp_floor
        self.strict = strict_domain
        self._fast_full = None
        if fast_rhs is not None and clamp_floor is not None:
            def fast(t, x):
                r = fast_rhs(t, *x)
                return r[:3], r[5]
            self.fast_rhs = fast
            self._fast_full = fast_rhs

    def rhs(self, t, x):
        u, _, clamped = self.ctrl.control_checked(x, t, self.clamp_floor)
        event = f"phi-inverse clamp at t={t:.6g}" if clamped else None
        return vector_field(self.model, x, u, check_domain=False), event

    def check(self, t, x):
        if self.strict:
            self.model.check_domain(x)
        if self.clamp_floor is None:
            self.ctrl.desired_s(x, t)

    def record(self, t, x):
        if self._fast_full is not None:
            r = self._fast_full(t, *x)
            u, sd = np.array([r[3]]), np.array([r[4]])
        else:
            u, sd, _ = self.ctrl.control_checked(x, t, self.clamp_floor if self.clamp_floor is not None else 1e-12)
        return {"u": u, "y": output(self.model, x), "H": self.model.energy(x),
                "x_ref": self.ctrl.ref.state(t), "s_d": sd}


class TidaLoop(ClosedLoop):
    def __init__(self, model: PhsDpModel, std: StandardPhs, target: TidaTarget,
                 ref_state: Optional[Callable] = None):
        self.model = model
        self.std = std
        self.target = target
        self.dims = model.dims
        self.m = model.m
        self.ref_state = ref_state

    def rhs(self, t, x):
        u = tida_control(self.target, self.std, x, t)
        return vector_field(self.model, x, u, check_domain=False), None

    def record(self, t, x):
        rec = {"u": tida_control(self.target, self.std, x, t), "y": output(self.model, x),
               "H": self.model.energy(x)}
        if self.ref_state is not None:
            rec["x_ref"] = self.ref_state(t)
        return rec


# -- logs -------------------------------------------------------------------

@dataclass
class TrajectoryLog:
    dims: Dims
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    H: np.ndarray
    x_ref: np.ndarray
    s_d: np.ndarray
    events: list = field(default_factory=list)
    status: str = "ok"
    message: str = ""
    n_clamped_steps: int = 0

    @property
    def err(self) -> np.ndarray:
        return self.x - self.x_ref

    def err_blocks(self):
        d = self.dims
        e = self.err
        return (np.linalg.norm(e[:, :d.nq], axis=1), np.linalg.norm(e[:, d.nq:d.nqp], axis=1),
                np.linalg.norm(e[:, d.nqp:], axis=1))

    def columns(self) -> list[str]:
        d = self.dims

        def names(base, k):
            return [base] if k == 1 else [f"{base}{i}" for i in range(k)]

        return (["t"] + names("q", d.nq) + names("p", d.np) + names("s", d.ns)
                + names("u", self.u.shape[1]) + names("y", self.y.shape[1]) + ["H"]
                + names("q_ref", d.nq) + names("p_ref", d.np) + names("s_ref", d.ns)
                + names("s_d", self.s_d.shape[1]) + ["err_q", "err_p", "err_s"])

    def table(self) -> np.ndarray:
        eq, ep, es = self.err_blocks()
        return np.column_stack([self.t, self.x, self.u, self.y, self.H, self.x_ref, self.s_d, eq, ep, es])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns())
            for row in self.table():
                w.writerow([format(v, ".17g") for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


# -- integration ------------------------------------------------------------

def rk4_step(f: Callable, t: float, x: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _n_steps(dt: float, t_final: float) -> int:
    if not dt > 0 or not t_final >= dt:
        raise ValueError(f"need dt > 0 and t_final >= dt (dt={dt}, t_final={t_final})")
    return int(math.floor(t_final / dt + 1e-9))


def simulate(loop: ClosedLoop, x0, dt: float, t_final: float, log_stride: int = 1,
             use_fast: bool = True) -> TrajectoryLog:
    """Integrate one initial condition with classical fixed-step RK4.

    Times are ``k * dt`` (no accumulation).  Records are taken every
    ``log_stride`` steps.  A domain failure or a non-finite state ends the
    run early with ``status`` set; the records up to that point are kept.
    """
    if log_stride < 1:
        raise ValueError("log_stride must be a positive integer")
    n_steps = _n_steps(dt, t_final)
    d = loop.dims
    x = np.array(x0, dtype=float)
    loop.check(0.0, x)

    records, times, states = [], [], []
    events: list = []
    n_clamped = 0
    pending_event = False
    status, message = "ok", ""

    fast = loop.fast_rhs if use_fast else None
    if fast is not None:
        def fstep(t, xs):
            h = dt
            k1, c1 = fast(t, xs)
            a = tuple(xi + 0.5 * h * ki for xi, ki in zip(xs, k1))
            k2, c2 = fast(t + 0.5 * h, a)
            a = tuple(xi + 0.5 * h * ki for xi, ki in zip(xs, k2))
            k3, c3 = fast(t + 0.5 * h, a)
            a = tuple(xi + h * ki for xi, ki in zip(xs, k3))
            k4, c4 = fast(t + h, a)
            out = tuple(xi + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
                        for xi, a1, a2, a3, a4 in zip(xs, k1, k2, k3, k4))
            return out, c1 or c2 or c3 or c4

    def log_point(k, xv):
        t = k * dt
        times.append(t)
        states.append(np.array(xv, dtype=float))
        records.append(loop.record(t, np.array(xv, dtype=float)))

    log_point(0, x)
    xs = tuple(x.tolist())
    for k in range(n_steps):
        t = k * dt
        try:
            if fast is not None:
                xs, clamped = fstep(t, xs)
                x_next = xs
            else:
                flags = []

                def f(tt, xx):
                    xdot, ev = loop.rhs(tt, xx)
                    if ev:
                        flags.append(ev)
                    return xdot

                x = rk4_step(f, t, x, dt)
                clamped = bool(flags)
                x_next = x
            if clamped:
                n_clamped += 1
                if not pending_event:
                    events.append({"t": t, "kind": "phi-inverse clamp"})
                pending_event = True
            else:
                pending_event = False
            if not all(math.isfinite(v) for v in x_next):
                status, message = "non-finite", f"non-finite state at t={(k + 1) * dt:.6g}"
                break
            loop.check((k + 1) * dt, np.asarray(x_next, dtype=float))
        except DomainError as exc:
            status, message = "domain-abort", str(exc)
            break
        if (k + 1) % log_stride == 0:
            log_point(k + 1, x_next)

    if status != "ok":
        log.warning("run aborted: %s", message)
        events.append({"t": (k + 1) * dt, "kind": status, "detail": message})

    n = len(times)
    nan = lambda w: np.full((n, w), np.nan)  # noqa: E731

    def stack(key, width):
        if width == 0:
            return np.zeros((n, 0))
        if not records or key not in records[0]:
            return nan(width)
        return np.array([np.atleast_1d(r[key]) for r in records], dtype=float).reshape(n, width)

    m = loop.m
    return TrajectoryLog(
        dims=d, t=np.array(times), x=np.array(states).reshape(n, d.n),
        u=stack("u", m), y=stack("y", m), H=stack("H", 1)[:, 0],
        x_ref=stack("x_ref", d.n), s_d=stack("s_d", d.ns),
        events=events, status=status, message=message, n_clamped_steps=n_clamped)


# -- rate fitting -----------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    beta_hat: float
    r_squared: float
    window: tuple
    pairs: tuple = ()


def _fit_pair(t, dist, floor, t_min):
    mask = (dist > floor) & (t >= t_min)
    if mask.sum() < 3:
        return None
    # window runs from t_min until the distance first drops to the floor
    idx = np.flatnonzero(mask)
    stop = idx[0]
    while stop + 1 < mask.size and mask[stop + 1]:
        stop += 1
    sel = slice(idx[0], stop + 1)
    tt, ld = t[sel], np.log(dist[sel])
    if tt.size < 3:
        return None
    A = np.column_stack([tt, np.ones_like(tt)])
    coef, *_ = np.linalg.lstsq(A, ld, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((ld - pred) ** 2))
    ss_tot = float(np.sum((ld - ld.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(-float(coef[0]), r2, (float(tt[0]), float(tt[-1])))


def fit_rate(logs: Sequence[TrajectoryLog], metric=None, floor: float = 1e-9,
             t_min: float = 0.0) -> RateFit:
    """Least-squares exponential rate of pairwise distances.

    For every pair of logs, fits ``log ||x_i - x_j||_M`` against ``t`` over
    the initial stretch where the distance exceeds ``floor``.  The result
    reports the slowest rate and the worst ``R^2`` over pairs.
    """
    if len(logs) < 2:
        raise ValueError("need at least two trajectory logs")
    t = logs[0].t
    for lg in logs[1:]:
        if lg.t.shape != t.shape or np.any(lg.t != t):
            raise ValueError("logs do not share a time grid")
    n = logs[0].x.shape[1]
    M = np.eye(n) if metric is None else np.asarray(metric, dtype=float)
    fits = []
    for i in range(len(logs)):
        for j in range(i + 1, len(logs)):
            dx = logs[i].x - logs[j].x
            dist = np.sqrt(np.maximum(np.einsum("ki,ij,kj->k", dx, M, dx), 0.0))
            fit = _fit_pair(t, dist, floor, t_min)
            if fit is not None:
                fits.append(fit)
    if not fits:
        raise ValueError(f"pairwise distances are below {floor} everywhere")
    return RateFit(min(f.beta_hat for f in fits), min(f.r_squared for f in fits),
                   (min(f.window[0] for f in fits), max(f.window[1] for f in fits)), tuple(fits))

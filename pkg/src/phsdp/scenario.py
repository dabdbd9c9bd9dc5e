"""Scenario files: schema, presets, and construction of runnable objects."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import maglev
from .contraction import box_samples
from .core import DomainError
from .sim import DpscLoop, OpenLoop, TidaLoop, TrajectoryLog, simulate
from .tida import TidaTarget, left_annihilator, quadratic_error_hamiltonian, standard_view

PRESETS = {
    "maglev-yaghmaei": {
        "model": {"preset": "maglev-yaghmaei",
                  "params": {"k": 6.4042e-5, "r2": 2.52, "c": 0.005, "b": 0.828, "m": 0.0844}},
        "controller": {"type": "dpsc", "gains": {"k_q": 50.0, "k_p": 50.0, "k_s": 50.0},
                       "policy": "clamp", "clamp_floor": 1e-12},
        "reference": {"kind": "sinusoid", "amplitude": 1e-3, "offset": 2e-3, "frequency": 1.0},
        "sim": {"dt": 1e-4, "t_final": 10.0, "log_stride": 10, "strict_domain": False,
                "ics": [[0.011, 0.004, 0.0], [0.001, -0.004, 0.02],
                        [0.006, -0.002, 0.005], [0.0015, 0.003, 0.015]]},
        "certify": {"grid": [5, 5, 3, 5], "random": 500, "seed": 0,
                    "box": {"q": [0.001, 0.011], "p": [-0.004, 0.004], "s": [0.0, 0.02],
                            "t": [0.0, 6.283185307179586]}},
    }
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_matrix = {"type": "array", "items": {"type": "array", "items": _num}}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "name": {"type": "string"},
        "model": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "preset": {"enum": sorted(PRESETS)},
                "params": {"type": "object", "additionalProperties": False,
                           "properties": {k: _num for k in ("k", "r2", "c", "b", "m")}},
            },
        },
        "controller": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "type": {"enum": ["dpsc", "tida", "open-loop"]},
                "gains": {"type": "object", "additionalProperties": False,
                          "properties": {k: _num for k in ("k_q", "k_p", "k_s")}},
                "policy": {"enum": ["clamp", "raise"]},
                "clamp_floor": _pos,
                "tida": {
                    "type": "object", "additionalProperties": False,
                    "required": ["J_d", "R_d", "Q"],
                    "properties": {"J_d": _matrix, "R_d": _matrix, "Q": _matrix,
                                   "r3": _num, "source": {"type": "string"}},
                },
            },
        },
        "reference": {
            "type": "object", "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["sinusoid", "constant", "custom-samples"]},
                "amplitude": _num, "offset": _num, "frequency": _num, "phase": _num,
                "value": _num,
                "t": {"type": "array", "items": _num}, "f": {"type": "array", "items": _num},
            },
        },
        "sim": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "dt": _pos, "t_final": _pos,
                "log_stride": {"type": "integer", "minimum": 1},
                "strict_domain": {"type": "boolean"},
                "ics": {"type": "array", "minItems": 1,
                        "items": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}},
            },
        },
        "certify": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "grid": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "random": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer"},
                "box": {"type": "object", "additionalProperties": False,
                        "properties": {k: _pair for k in ("q", "p", "s", "t")}},
            },
        },
    },
}


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario document."""


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        # a reference section replaces the preset's wholesale
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "reference":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _where(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "additionalProperties":
        return f"unknown key at {path}: {err.message}"
    return f"{path}: {err.message}"


def validate(doc: dict) -> None:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as err:
        raise ScenarioError(_where(err)) from None


def resolve(doc: dict) -> dict:
    """Validate and fill missing sections from the named preset."""
    validate(doc)
    preset = doc.get("model", {}).get("preset")
    if preset is None:
        if "params" not in doc.get("model", {}):
            raise ScenarioError("model: give either a preset or inline params")
        base = copy.deepcopy(PRESETS["maglev-yaghmaei"])
        base["model"].pop("preset")
        for k in ("k", "r2", "c", "b", "m"):
            if k not in doc["model"]["params"]:
                raise ScenarioError(f"model.params: missing {k}")
    else:
        base = PRESETS[preset]
    full = _merge(base, doc)
    validate(full)
    return full


def load(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    return resolve(doc)


def dumps(doc: dict) -> str:
    """Canonical serialisation (sorted keys, 2-space indent)."""
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


@dataclass
class Scenario:
    doc: dict
    params: maglev.MaglevParams
    f: maglev.MaglevReference
    dt: float
    t_final: float
    log_stride: int
    ics: list
    strict_domain: bool
    controller: str
    clamp_floor: Optional[float]
    tida: Optional[dict] = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_doc(cls, doc: dict, dt_override: Optional[float] = None) -> "Scenario":
        doc = resolve(doc)
        pm = dict(doc["model"]["params"])
        pm.update(doc["controller"].get("gains", {}))
        try:
            params = maglev.MaglevParams(**pm)
        except ValueError as exc:
            raise ScenarioError(f"model.params: {exc}") from None
        ref = doc["reference"]
        kind = ref["kind"]
        try:
            if kind == "sinusoid":
                f = maglev.MaglevReference.sinusoid(ref.get("amplitude", 1e-3), ref.get("offset", 2e-3),
                                                    ref.get("frequency", 1.0), ref.get("phase", 0.0))
            elif kind == "constant":
                f = maglev.MaglevReference.constant(ref["value"])
            else:
                f = maglev.MaglevReference.from_samples(ref["t"], ref["f"])
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"reference: {exc}") from None
        sim = doc["sim"]
        ctrl = doc["controller"]
        dt = dt_override if dt_override is not None else sim["dt"]
        if not sim["t_final"] >= dt:
            raise ScenarioError("sim: t_final must be >= dt")
        return cls(doc=doc, params=params, f=f, dt=float(dt), t_final=float(sim["t_final"]),
                   log_stride=int(sim["log_stride"]), ics=[list(map(float, ic)) for ic in sim["ics"]],
                   strict_domain=bool(sim["strict_domain"]), controller=ctrl.get("type", "dpsc"),
                   clamp_floor=ctrl.get("clamp_floor", 1e-12) if ctrl.get("policy", "clamp") == "clamp" else None,
                   tida=ctrl.get("tida"))

    @classmethod
    def load(cls, path, dt_override: Optional[float] = None) -> "Scenario":
        return cls.from_doc(load(path), dt_override)

    def setup(self):
        model = maglev.build_maglev(self.params)
        ref = maglev.build_reference(self.params, self.f, horizon=self.t_final)
        return model, ref, maglev.build_dpsc(self.params, ref, model)

    def dpsc_loop(self):
        _, _, ctrl = self.setup()
        return DpscLoop(ctrl, self.clamp_floor, self.strict_domain,
                        fast_rhs=maglev.closed_loop_rhs(self.params, self.f,
                                                        self.clamp_floor or 1e-12))

    def tida_loop(self):
        if not self.tida:
            raise ScenarioError("controller.tida is not configured")
        model, ref, _ = self.setup()
        p = self.params
        std = standard_view(model, np.diag([0.0, 0.0, p.r2]))
        target = TidaTarget(np.array(self.tida["J_d"], dtype=float), np.array(self.tida["R_d"], dtype=float),
                            quadratic_error_hamiltonian(np.array(self.tida["Q"], dtype=float), ref.state),
                            left_annihilator(std.g), r3=self.tida.get("r3"))
        return TidaLoop(model, std, target, ref_state=ref.state)

    def loop(self, kind: Optional[str] = None):
        kind = kind or self.controller
        if kind == "dpsc":
            return self.dpsc_loop()
        if kind == "tida":
            return self.tida_loop()
        model = maglev.build_maglev(self.params)
        return OpenLoop(model, strict_domain=self.strict_domain)

    def certify_samples(self, seed: Optional[int] = None):
        c = self.doc["certify"]
        box = c.get("box", {})
        if any(k not in box for k in ("q", "p", "s")):
            raise ScenarioError("certify.box must give q, p and s ranges")
        widths = [box[k][1] - box[k][0] for k in ("q", "p", "s")]
        if any(w < 0 for w in widths) or all(w == 0 for w in widths):
            raise ScenarioError("certify.box is empty")
        rng = np.random.default_rng(c.get("seed", 0) if seed is None else seed)
        return box_samples(box, c.get("random", 0), c.get("grid"), rng)


def integrate(scenario: Scenario, kind: Optional[str] = None) -> list[TrajectoryLog]:
    """Run every initial condition of the scenario, in IC order.

    An inadmissible initial condition raises :class:`DomainError`; failures
    during a run end that run only (see ``TrajectoryLog.status``).
    """
    loop = scenario.loop(kind)
    logs = []
    for ic in scenario.ics:
        loop.check(0.0, np.asarray(ic, dtype=float))
    for ic in scenario.ics:
        logs.append(simulate(loop, ic, scenario.dt, scenario.t_final, scenario.log_stride))
    return logs


def summarize(logs: list[TrajectoryLog], window=(1.0, math.inf)) -> list[dict]:
    out = []
    for i, lg in enumerate(logs):
        eq, ep, es = lg.err_blocks()
        sel = (lg.t >= window[0]) & (lg.t <= window[1])
        out.append({
            "ic": i, "x0": lg.x[0].tolist(), "status": lg.status, "message": lg.message,
            "final_err_q": float(eq[-1]), "final_err_p": float(ep[-1]), "final_err_s": float(es[-1]),
            "max_err_q_window": float(eq[sel].max()) if sel.any() else None,
            "n_records": int(lg.t.size), "n_clamped_steps": lg.n_clamped_steps,
            "events": lg.events[:20],
        })
    return out


__all__ = ["Scenario", "ScenarioError", "PRESETS", "SCHEMA", "load", "resolve", "dumps",
           "integrate", "summarize", "DomainError"]

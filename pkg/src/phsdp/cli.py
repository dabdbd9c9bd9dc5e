"""Command-line front end.

Exit codes: 0 success, 1 configuration error (or failed certificate),
2 domain abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .contraction import CertificateError, hierarchical_certificate
from .core import ContractError, DomainError
from .scenario import PRESETS, Scenario, ScenarioError, dumps, integrate, summarize
from .sim import fit_rate

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN = 0, 1, 2
SETTLE_TOL = 1e-4

log = logging.getLogger("phsdp")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2) + "\n")


def _scenario(args) -> Scenario:
    if args.scenario in PRESETS and not Path(args.scenario).exists():
        return Scenario.from_doc({"model": {"preset": args.scenario}}, args.dt_override)
    return Scenario.load(args.scenario, args.dt_override)


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    logs = integrate(sc)
    for i, lg in enumerate(logs):
        lg.to_csv(out / f"ic{i:02d}.csv")
    summary = {"scenario": sc.doc, "runs": summarize(logs)}
    ok = [lg for lg in logs if lg.status == "ok"]
    if len(ok) >= 2:
        try:
            fit = fit_rate(ok)
            summary["rate_fit"] = {"beta_hat": fit.beta_hat, "r_squared": fit.r_squared,
                                   "window": fit.window}
        except ValueError as exc:
            summary["rate_fit"] = {"error": str(exc)}
    _write_json(out / "summary.json", summary)
    if any(lg.status != "ok" for lg in logs):
        log.error("one or more runs aborted")
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_certify(args) -> int:
    sc = _scenario(args)
    _, _, ctrl = sc.setup()
    samples = sc.certify_samples(args.seed)
    cert = hierarchical_certificate(ctrl, samples, check_model_domain=sc.strict_domain)
    data = cert.to_dict()
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(out, data)
    if not args.quiet:
        print(json.dumps(_jsonable({k: data[k] for k in ("verdict", "reasons", "beta_qp", "lambda_s",
                                                          "f21_bound", "epsilon", "beta_composite")})))
    return EXIT_OK if cert.verdict else EXIT_CONFIG


def comparison_row(name: str, lg, dt: float) -> dict:
    err = np.abs(lg.x[:, 0] - lg.x_ref[:, 0])
    outside = np.flatnonzero(err >= SETTLE_TOL)
    if outside.size == 0:
        settle = 0.0
    elif outside[-1] + 1 < lg.t.size:
        settle = float(lg.t[outside[-1] + 1])
    else:
        settle = None
    u = lg.u[:, 0]
    effort = float(trapezoid(u * u, lg.t))
    return {"controller": name, "status": lg.status, "max_abs_err_q": float(err.max()),
            "settling_time": settle, "peak_abs_u": float(np.abs(u).max()), "int_u2": effort}


def cmd_compare(args) -> int:
    sc = _scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ic = sc.ics[0]
    sc.ics = [ic]
    rows, note = [], ""
    dp = integrate(sc, "dpsc")[0]
    dp.to_csv(out / "dpsc.csv")
    rows.append(comparison_row("dpsc", dp, sc.dt))
    if sc.tida:
        tl = integrate(sc, "tida")[0]
        tl.to_csv(out / "tida.csv")
        row = comparison_row("tida", tl, sc.dt)
        row["r3"] = sc.tida.get("r3")
        rows.append(row)
    else:
        note = "baseline not configured"
    _write_json(out / "comparison.json", {"ic": ic, "rows": rows, "note": note})
    with open(out / "comparison.csv", "w") as fh:
        cols = ["controller", "status", "max_abs_err_q", "settling_time", "peak_abs_u", "int_u2"]
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join("" if r[c] is None else (format(r[c], ".17g") if isinstance(r[c], float) else str(r[c]))
                              for c in cols) + "\n")
    if not args.quiet:
        for r in rows:
            print(r)
        if note:
            print(note)
    return EXIT_DOMAIN if any(r["status"] != "ok" for r in rows) else EXIT_OK


def cmd_preset(args) -> int:
    sys.stdout.write(dumps(PRESETS[args.name]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phsdp", description=__doc__.splitlines()[0])
    ap.add_argument("--quiet", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--scenario", required=True, help="scenario JSON file or preset name")
        p.add_argument("--out", required=out_required)
        p.add_argument("--dt-override", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    common(sub.add_parser("simulate", help="integrate every initial condition"))
    common(sub.add_parser("certify", help="emit the contraction certificate"), out_required=False)
    common(sub.add_parser("compare", help="DPSC vs configured tIDA-PBC baseline"))
    pp = sub.add_parser("preset", help="print a preset scenario")
    pp.add_argument("name", choices=sorted(PRESETS))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"simulate": cmd_simulate, "certify": cmd_certify, "compare": cmd_compare,
                "preset": cmd_preset}
    try:
        return handlers[args.command](args)
    except ScenarioError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except DomainError as exc:
        log.error("domain violation: %s", exc)
        return EXIT_DOMAIN
    except CertificateError as exc:
        log.error("certificate error: %s", exc)
        return EXIT_CONFIG
    except ContractError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

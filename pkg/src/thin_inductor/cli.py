"""Batch front end: ``thin-inductor run|validate <config.json>``.

Exit codes: 0 success, 2 configuration error, 3 stage failure (the report
is still written). ``THIN_INDUCTOR_WORKERS`` overrides the ``workers`` key.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (SweepRow, compute_l_prime, default_eps_sweep, direct_singular_energy,
                          fit_log_slope, write_sweep_csv)
from .curve import check_curve, make_curve
from .errors import ConfigInvalid, InductorError, StageFailed
from .quadrature import McSpec, QuadratureSpec
from .singular_field import CUTOFFS, SingularField
from .tube import injectivity_defect, make_tube

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3
STAGES = ("lprime", "sweep", "oracle", "fit", "corrections")
DEFAULTS = {
    "delta": {"eta": 0.5},
    "cutoff": "quintic",
    "sweep": {"count": 5},
    "quadrature": {"order": 16},
    "mc": {"samples": 100000, "batch_size": 65536},
    "energy_method": "parametric",
    "stages": ["lprime", "sweep", "oracle", "fit"],
    "output_dir": "thin_inductor_out",
    "seed": 12345,
    "workers": 0,
    "corrections": {"sigma_prime_mesh": None, "filament_eps": 1e-4, "filament_points": 1024},
}
TOP_KEYS = {"curve", "eps_list", *DEFAULTS}
SUBKEYS = {
    "delta": {"eta", "value"},
    "sweep": {"count"},
    "quadrature": {"order"},
    "mc": {"samples", "batch_size"},
    "corrections": {"sigma_prime_mesh", "filament_eps", "filament_points"},
}


@dataclass
class Diagnostic:
    code: str
    message: str

    def as_dict(self):
        return {"code": self.code, "message": self.message}


# ---------------------------------------------------------------------------
# configuration


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config: {exc}", [Diagnostic("config_unreadable", str(exc))])
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not valid JSON: {exc}",
                            [Diagnostic("config_not_json", str(exc))])
    if not isinstance(raw, dict):
        raise ConfigInvalid("config must be a JSON object", [Diagnostic("config_not_object", "")])
    return raw


def resolve_config(raw: dict) -> dict:
    """Schema check plus defaults; raises ConfigInvalid listing every problem."""
    diags = []

    def bad(code, msg):
        diags.append(Diagnostic(code, msg))

    for key in sorted(set(raw) - TOP_KEYS):
        bad("unknown_key", f"unknown top-level key {key!r}")
    cfg = {}
    for key, default in DEFAULTS.items():
        val = raw.get(key, default)
        if isinstance(default, dict) and key in SUBKEYS:
            if key == "delta" and _is_number(val):
                cfg[key] = val
                continue
            if not isinstance(val, dict):
                bad("bad_type", f"{key!r} must be an object")
                val = default
            for sub in sorted(set(val) - SUBKEYS[key]):
                bad("unknown_key", f"unknown key {key}.{sub}")
            if key != "delta":
                val = {**default, **{k: v for k, v in val.items() if k in SUBKEYS[key]}}
        cfg[key] = val

    curve = raw.get("curve")
    if not isinstance(curve, dict) or not isinstance(curve.get("preset"), str):
        bad("missing_curve", "'curve' must be an object with a string 'preset'")
    cfg["curve"] = curve

    d = cfg["delta"]
    if _is_number(d):
        d = cfg["delta"] = {"value": d}
    if not isinstance(d, dict):
        bad("bad_delta", "'delta' must be a number or an object")
    else:
        if set(d) == {"eta"} and _is_number(d["eta"]) and 0 < d["eta"] < 1:
            pass
        elif set(d) == {"value"} and _is_number(d["value"]) and d["value"] > 0:
            pass
        else:
            bad("bad_delta", "'delta' must be {'eta': 0<eta<1} or {'value': >0}")
    if cfg["cutoff"] not in CUTOFFS:
        bad("bad_cutoff", f"cutoff must be one of {sorted(CUTOFFS)}")
    if "eps_list" in raw:
        eps = raw["eps_list"]
        if not isinstance(eps, list) or not eps or not all(_is_number(e) for e in eps):
            bad("bad_eps_list", "'eps_list' must be a non-empty list of numbers")
        cfg["eps_list"] = eps
        if "sweep" in raw:
            bad("conflicting_keys", "give either 'eps_list' or 'sweep', not both")
    else:
        cfg["eps_list"] = None
    if not (isinstance(cfg["sweep"].get("count"), int) and cfg["sweep"]["count"] >= 1):
        bad("bad_sweep", "sweep.count must be a positive integer")
    order = cfg["quadrature"].get("order")
    if not (isinstance(order, int) and 2 <= order <= 62):
        bad("bad_quadrature", "quadrature.order must be an integer in [2, 62]")
    mc = cfg["mc"]
    if not (isinstance(mc.get("samples"), int) and mc["samples"] >= 1000):
        bad("bad_mc", "mc.samples must be an integer >= 1000")
    if not (isinstance(mc.get("batch_size"), int) and mc["batch_size"] >= 1):
        bad("bad_mc", "mc.batch_size must be a positive integer")
    if cfg["energy_method"] not in ("parametric", "cartesian_mc"):
        bad("bad_energy_method", "energy_method must be 'parametric' or 'cartesian_mc'")
    stages = cfg["stages"]
    if not isinstance(stages, list) or not stages:
        bad("no_stages", "'stages' must be a non-empty list")
    else:
        for s in stages:
            if s not in STAGES:
                bad("unknown_stage", f"unknown stage {s!r}")
        if "oracle" in stages and "sweep" not in stages:
            bad("stage_dependency", "stage 'oracle' needs 'sweep'")
        if "fit" in stages and "oracle" not in stages:
            bad("stage_dependency", "stage 'fit' needs 'oracle'")
        cfg["stages"] = [s for s in STAGES if s in stages]
    if not isinstance(cfg["output_dir"], str):
        bad("bad_output_dir", "'output_dir' must be a string")
    if not (isinstance(cfg["seed"], int) and not isinstance(cfg["seed"], bool)
            and 0 <= cfg["seed"] < 2**64):
        bad("bad_seed", "'seed' must be an integer in [0, 2^64)")
    if not (isinstance(cfg["workers"], int) and cfg["workers"] >= 0):
        bad("bad_workers", "'workers' must be a non-negative integer")
    corr = cfg["corrections"]
    if corr["sigma_prime_mesh"] is not None and not isinstance(corr["sigma_prime_mesh"], str):
        bad("bad_corrections", "corrections.sigma_prime_mesh must be a path or null")
    if not (_is_number(corr["filament_eps"]) and corr["filament_eps"] > 0):
        bad("bad_corrections", "corrections.filament_eps must be positive")
    if not (isinstance(corr["filament_points"], int) and corr["filament_points"] >= 512):
        bad("bad_corrections", "corrections.filament_points must be an integer >= 512")
    env = os.environ.get("THIN_INDUCTOR_WORKERS")
    if env is not None and env.strip():
        try:
            cfg["workers"] = int(env)
            if cfg["workers"] < 0:
                raise ValueError
        except ValueError:
            bad("bad_workers", f"THIN_INDUCTOR_WORKERS={env!r} is not a non-negative integer")
    if diags:
        raise ConfigInvalid("; ".join(d.message for d in diags), diags)
    return cfg


@dataclass
class Problem:
    config: dict
    field: SingularField
    eps_list: list
    length: float


def build_problem(cfg: dict) -> Problem:
    """Curve, tube and eps list, with geometric diagnostics as ConfigInvalid."""
    spec = dict(cfg["curve"])
    preset = spec.pop("preset")
    try:
        curve = make_curve(preset, **spec)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(str(exc), [Diagnostic("bad_curve", str(exc))]) from None
    codes = check_curve(curve)
    if codes:
        raise ConfigInvalid("curve checks failed", [Diagnostic(c, f"curve check failed: {c}")
                                                   for c in codes])
    d = cfg["delta"]
    try:
        tube = make_tube(curve, delta=d.get("value"), eta=d.get("eta", 0.5))
    except InductorError as exc:
        raise ConfigInvalid(str(exc), [Diagnostic("delta_invalid", str(exc))]) from None
    delta = tube.delta
    overlap = injectivity_defect(tube)
    if overlap > 0:
        raise ConfigInvalid("tube overlaps itself", [Diagnostic(
            "tube_not_injective", f"{overlap:.1%} of sampled shell points project onto another "
            f"part of the curve at delta={delta:.6g}; reduce delta or eta")])
    eps_list = cfg["eps_list"] or default_eps_sweep(delta, cfg["sweep"]["count"])
    out = [e for e in eps_list if not 0 < e <= 0.5 * delta * (1 + 1e-12)]
    if out:
        raise ConfigInvalid("eps outside (0, delta/2]", [Diagnostic(
            "eps_out_of_range", f"eps {out} outside (0, delta/2] with delta={delta:.17g}")])
    field = SingularField(tube, CUTOFFS[cfg["cutoff"]])
    return Problem(cfg, field, [float(e) for e in eps_list], float(curve.length))


# ---------------------------------------------------------------------------
# stages


def _clean(obj):
    """JSON-safe copy: numpy scalars to float, NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _stage_lprime(pb: Problem, ctx):
    lp = compute_l_prime(pb.field, QuadratureSpec(order=pb.config["quadrature"]["order"]),
                         workers=ctx["workers"])
    ctx["lprime"] = lp
    _write_json(ctx["out"] / "lprime.json", lp.as_dict())
    return lp.as_dict()


def _stage_sweep(pb: Problem, ctx):
    lp = ctx.get("lprime") or compute_l_prime(
        pb.field, QuadratureSpec(order=pb.config["quadrature"]["order"]), workers=ctx["workers"])
    ctx["lprime"] = lp
    c = lp.length / (2 * np.pi)
    rows = [SweepRow(e, float(-c * np.log(e) + lp.total), math.nan, math.nan, math.nan)
            for e in pb.eps_list]
    ctx["rows"] = rows
    return {"eps": pb.eps_list, "asymptotic": [r.asymptotic for r in rows]}


def _stage_oracle(pb: Problem, ctx):
    cfg = pb.config
    method = cfg["energy_method"]
    if method == "parametric":
        spec = QuadratureSpec(order=cfg["quadrature"]["order"])
    else:
        spec = McSpec(samples=cfg["mc"]["samples"], seed=cfg["seed"],
                      batch_size=cfg["mc"]["batch_size"])
    rows = []
    for r in ctx["rows"]:
        est = direct_singular_energy(pb.field, r.eps, method, spec, ctx["workers"])
        rows.append(SweepRow(r.eps, r.asymptotic, est.value, est.value - r.asymptotic, est.error))
    ctx["rows"] = rows
    return {"method": method, "max_abs_residual": max(abs(r.residual) for r in rows)}


def _stage_fit(pb: Problem, ctx):
    rows = ctx["rows"]
    fit = fit_log_slope([(r.eps, r.oracle) for r in rows])
    expected = pb.length / (2 * np.pi)
    return {"slope": fit.slope, "intercept": fit.intercept, "max_residual": fit.max_residual,
            "expected_slope": expected, "relative_slope_error": fit.slope / expected - 1.0}


def _stage_corrections(pb: Problem, ctx):
    from .potentials import build_cut_surface, correction_terms, neumann_filament_oracle, read_mesh

    corr = pb.config["corrections"]
    mesh = read_mesh(corr["sigma_prime_mesh"]) if corr["sigma_prime_mesh"] else None
    surface = build_cut_surface(pb.field, mesh)
    try:
        res = correction_terms(pb.field, surface)
    except NotImplementedError as exc:
        raise StageFailed(str(exc)) from None
    lp = ctx.get("lprime") or compute_l_prime(pb.field, workers=ctx["workers"])
    ctx["lprime"] = lp
    out = {"volume_term": res.volume_term, "surface_term": res.surface_term,
           "correction": res.total, "L_prime": lp.total, "constant": lp.total + res.total,
           "diagnostics": res.diagnostics}
    curve = pb.field.tube.curve
    if curve.planar:
        eps_f = corr["filament_eps"]
        lf = neumann_filament_oracle(curve, eps_f, corr["filament_points"])
        const_f = lf + pb.length / (2 * np.pi) * np.log(eps_f)
        out["filament"] = {"eps": eps_f, "n_points": corr["filament_points"], "inductance": lf,
                           "constant": const_f,
                           "relative_difference": (lp.total + res.total) / const_f - 1.0}
    _write_json(ctx["out"] / "corrections.json", out)
    return out


STAGE_FUNCS = {"lprime": _stage_lprime, "sweep": _stage_sweep, "oracle": _stage_oracle,
               "fit": _stage_fit, "corrections": _stage_corrections}


# ---------------------------------------------------------------------------
# commands


def validate(config_path) -> tuple[int, dict]:
    """Checks only: schema, curve regularity, delta validity, eps range."""
    try:
        cfg = resolve_config(load_config(config_path))
        pb = build_problem(cfg)
    except ConfigInvalid as exc:
        return EXIT_CONFIG, {"diagnostics": [d.as_dict() if isinstance(d, Diagnostic) else d
                                             for d in exc.diagnostics]}
    return EXIT_OK, {"diagnostics": [], "delta": pb.field.delta, "length": pb.length,
                     "eps_list": pb.eps_list}


def run(config_path) -> tuple[int, dict]:
    try:
        cfg = resolve_config(load_config(config_path))
        pb = build_problem(cfg)
    except ConfigInvalid as exc:
        return EXIT_CONFIG, {"diagnostics": [d.as_dict() for d in exc.diagnostics]}
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    ctx = {"out": out, "workers": cfg["workers"] or None}
    resolved = dict(cfg)
    resolved["eps_list"] = pb.eps_list
    resolved["delta"] = {**cfg["delta"], "resolved": pb.field.delta}
    report = {"tool": "thin_inductor", "version": __version__, "config": resolved,
              "derived": {"delta": pb.field.delta, "length": pb.length,
                          "log_coefficient": pb.length / (2 * np.pi)},
              "normalization": "mu0 = 1, unit circulation", "stages": {}, "timings": {}}
    failed = False
    for name in cfg["stages"]:
        t0 = time.perf_counter()
        try:
            report["stages"][name] = {"status": "ok", "result": STAGE_FUNCS[name](pb, ctx)}
        except (InductorError, ArithmeticError, ValueError) as exc:
            failed = True
            report["stages"][name] = {"status": "failed", "error": type(exc).__name__,
                                      "message": str(exc)}
        report["timings"][name] = time.perf_counter() - t0
    if "rows" in ctx:
        write_sweep_csv(ctx["rows"], out / "sweep.csv")
    _write_json(out / "report.json", report)
    return (EXIT_STAGE if failed else EXIT_OK), report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="thin-inductor",
                                     description="Thin-wire self-inductance expansion")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run the configured stages"),
                        ("validate", "check a configuration without computing")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="path to a JSON configuration")
    args = parser.parse_args(argv)
    if args.command == "validate":
        code, payload = validate(args.config)
        print(json.dumps(_clean(payload), indent=2, sort_keys=True))
        return code
    code, payload = run(args.config)
    if code == EXIT_CONFIG:
        print(json.dumps(_clean(payload), indent=2, sort_keys=True), file=sys.stderr)
    else:
        summary = {k: v["status"] for k, v in payload["stages"].items()}
        print(json.dumps({"exit": code, "stages": summary,
                          "output_dir": payload["config"]["output_dir"]}, sort_keys=True))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Batch front-end: deterministic scenario runs and verification suites.

Verbs:
  simulate  run the frozen-law particle scheme for every seed in the panel
            and write curve + summary files
  verify    run the requested check suites and write a machine-readable
            verdict file; exit code 0 iff every requested suite passes
  emit      re-shape run artifacts into tidy long-format tables

Configuration is a single JSON file (schema in the README); all randomness
flows from the config's seed panel.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import rng
from .cocycle import FlowRun, JointState, cocycle_defect, flow_details
from .meanfield import (
    FrozenLawConfig,
    feynman_kac_duality,
    save_curve,
    save_curve_summary,
    simulate_frozen_law,
    stability_check,
)
from .measures import EmpiricalMeasure, ScalarFunc, moment
from .models import (
    build_model,
    covariance,
    eks_gaussian_moment_ode,
    landau_moment_oracle,
)

DEFAULTS = {
    "T": 1.0,
    "particles": 500,
    "frozen_law": {"n_freeze": 16, "inner": 1},
    "rde": {"alpha": 0.4, "per_freeze": 1, "driver_fine_per": 8},
    "seeds": [0, 1, 2, 3],
    "checks": [],
    "output_dir": "roughmf-out",
}


def load_config(path: str) -> dict:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SystemExit(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}")
    merged = json.loads(json.dumps(DEFAULTS))
    for k, v in cfg.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k].update(v)
        else:
            merged[k] = v
    errors = validate_config(merged)
    if errors:
        raise SystemExit("\n".join(f"{path}: {e}" for e in errors))
    return merged


def validate_config(cfg: dict) -> list:
    errors = []
    model = cfg.get("model")
    if not isinstance(model, dict) or "name" not in model:
        errors.append("config needs model.name")
    else:
        try:
            build_model(model["name"], _model_params(model))
        except (ValueError, KeyError) as exc:
            errors.append(f"model: {exc}")
    seeds = cfg.get("seeds", [])
    if len(set(seeds)) != len(seeds):
        errors.append("seeds must be distinct")
    fl = cfg.get("frozen_law", {})
    if fl.get("n_freeze", 1) < 1 or fl.get("inner", 1) < 1:
        errors.append("frozen_law needs n_freeze >= 1 and inner >= 1")
    known = {"moments", "duality", "cocycle", "stability"}
    for c in cfg.get("checks", []):
        if c not in known:
            errors.append(f"unknown check {c!r} (known: {sorted(known)})")
    return errors


def _model_params(model_cfg: dict) -> dict:
    params = dict(model_cfg.get("params", {}))
    if "Sigma" in params:
        params["Sigma"] = np.asarray(params["Sigma"], dtype=float)
    return params


def canonical_config(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, indent=2, default=str)


def initial_measure(cfg: dict, seed: int, model) -> EmpiricalMeasure:
    init = cfg.get("initial", {})
    kind = init.get("kind", "gaussian")
    N = int(cfg["particles"])
    d = model.d
    g = rng.stream(seed, rng.INIT_LANE)
    if kind == "gaussian":
        mean = np.asarray(init.get("mean", np.zeros(d)), float)
        cov = np.asarray(init.get("cov", np.eye(d)), float)
        return EmpiricalMeasure(g.multivariate_normal(mean, cov, size=N))
    if kind == "uniform":
        lo = np.asarray(init.get("low", -np.ones(d)), float)
        hi = np.asarray(init.get("high", np.ones(d)), float)
        return EmpiricalMeasure(g.uniform(lo, hi, size=(N, d)))
    raise SystemExit(f"unknown initial kind {init.get('kind')!r}")


def _frozen_cfg(cfg: dict, seed: int) -> FrozenLawConfig:
    fl = cfg["frozen_law"]
    return FrozenLawConfig(
        n_freeze=int(fl["n_freeze"]),
        inner=int(fl.get("inner", 1)),
        seed=seed,
        fine_cells=fl.get("fine_cells"),
    )


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: dict, outdir: str) -> int:
    model = build_model(cfg["model"]["name"], _model_params(cfg["model"]))
    os.makedirs(outdir, exist_ok=True)
    for seed in cfg["seeds"]:
        mu0 = initial_measure(cfg, seed, model)
        curve = simulate_frozen_law(model, mu0, _frozen_cfg(cfg, seed), cfg["T"])
        save_curve(curve, os.path.join(outdir, f"curve-seed{seed}.txt"))
        save_curve_summary(curve, os.path.join(outdir, f"summary-seed{seed}.txt"))
    with open(os.path.join(outdir, "config.json"), "w") as fh:
        fh.write(canonical_config(cfg) + "\n")
    return 0


def _phi_coord(d, i=0):
    e = np.zeros(d)
    e[i] = 1.0
    return ScalarFunc("coord0", lambda y: float(e @ y), lambda y: e,
                      lambda y: np.zeros((d, d)))


def _phi_sq(d):
    return ScalarFunc("sq", lambda y: float(y @ y), lambda y: 2.0 * y,
                      lambda y: 2.0 * np.eye(d))


def check_moments(cfg, model) -> dict:
    seed = cfg["seeds"][0]
    mu0 = initial_measure(cfg, seed, model)
    curve = simulate_frozen_law(model, mu0, _frozen_cfg(cfg, seed), cfg["T"])
    N = mu0.n
    muT = curve.measures[-1]
    if model.name == "eks-gaussian":
        Sigma = model.constants["Sigma"]
        _, ms, Cs = eks_gaussian_moment_ode(
            Sigma, mu0.mean(), covariance(mu0), cfg["T"]
        )
        C_pred, C_obs = Cs[-1], covariance(muT)
        se_m = np.sqrt(np.diag(C_pred) / N)
        se_C = np.sqrt(
            (np.outer(np.diag(C_pred), np.diag(C_pred)) + C_pred**2) / N
        )
        zm = float(np.max(np.abs(muT.mean() - ms[-1]) / np.maximum(se_m, 1e-12)))
        zC = float(np.max(np.abs(C_obs - C_pred) / np.maximum(se_C, 1e-12)))
        return {"pass": bool(zm <= 3 and zC <= 3), "z_mean": zm, "z_cov": zC}
    if model.name == "landau-maxwell":
        v0 = moment(mu0, 2.0) - float(mu0.mean() @ mu0.mean())
        m_pred, v_pred = landau_moment_oracle(mu0.mean(), v0, cfg["T"])
        vT = moment(muT, 2.0) - float(muT.mean() @ muT.mean())
        se = np.sqrt(2.0 * v_pred**2 / N)
        zm = float(np.linalg.norm(muT.mean() - m_pred) / np.sqrt(v_pred / N))
        zv = float(abs(vT - v_pred) / max(se, 1e-12))
        return {"pass": bool(zm <= 3 * np.sqrt(model.d) and zv <= 3),
                "z_mean": zm, "z_var": zv}
    return {"pass": False, "reason": f"no moment oracle for {model.name}"}


def check_duality(cfg, model) -> dict:
    seed = cfg["seeds"][0]
    mu0 = initial_measure(cfg, seed, model)
    out = {}
    ok = True
    for phi in (_phi_coord(model.d), _phi_sq(model.d)):
        rep = feynman_kac_duality(model, mu0, phi, _frozen_cfg(cfg, seed), cfg["T"])
        ok = ok and rep["residual"] <= 3.0 * rep["se"] + 1e-12
        out[phi.name] = {"residual": rep["residual"], "se": rep["se"]}
    out["pass"] = bool(ok)
    return out


def check_cocycle(cfg, model) -> dict:
    seed = cfg["seeds"][0]
    mu0 = initial_measure(cfg, seed, model)
    fcfg = _frozen_cfg(cfg, seed)
    run = FlowRun(model, fcfg, cfg["T"], alpha=cfg["rde"]["alpha"],
                  rde_per_freeze=cfg["rde"]["per_freeze"],
                  driver_fine_per=cfg["rde"]["driver_fine_per"])
    e0 = JointState(mu0.atoms[0], mu0)
    details = flow_details(run, e0, cfg["T"])
    delta = cfg["T"] / fcfg.n_freeze
    q = fcfg.n_freeze // 4
    rows, ok = [], True
    for i in (1, 2):
        for j in (1, 2):
            s, t = i * q * delta, j * q * delta
            if s + t > cfg["T"] + 1e-12:
                continue
            rep = cocycle_defect(run, e0, s, t, details=details)
            tol = 3.0 * rep["self_defect"] + 1e-9
            ok = ok and rep["point_defect"] <= tol and rep["law_defect"] <= tol
            rows.append(rep | {"tolerance": tol})
    return {"pass": bool(ok), "defects": rows}


def check_stability(cfg, model) -> dict:
    seed = cfg["seeds"][0]
    mu0 = initial_measure(cfg, seed, model)
    shift_dir = np.ones(model.d) / np.sqrt(model.d)
    ratios = []
    for eps in (1e-1, 1e-2):
        rho0 = EmpiricalMeasure(mu0.atoms + eps * shift_dir, mu0.weights)
        rep = stability_check(model, mu0, rho0, _frozen_cfg(cfg, seed),
                              cfg["T"], p=2.0)
        ratios.append(rep["max_ratio"])
    spread = max(ratios) / max(min(ratios), 1e-12)
    return {"pass": bool(spread <= 2.0), "max_ratios": ratios, "spread": spread}


CHECKS = {
    "moments": check_moments,
    "duality": check_duality,
    "cocycle": check_cocycle,
    "stability": check_stability,
}


def cmd_verify(cfg: dict, outdir: str) -> int:
    model = build_model(cfg["model"]["name"], _model_params(cfg["model"]))
    os.makedirs(outdir, exist_ok=True)
    verdict = {}
    for name in cfg["checks"]:
        verdict[name] = CHECKS[name](cfg, model)
    with open(os.path.join(outdir, "verdict.json"), "w") as fh:
        json.dump(verdict, fh, sort_keys=True, indent=2, default=float)
        fh.write("\n")
    all_pass = all(v.get("pass", False) for v in verdict.values())
    for name, v in verdict.items():
        print(f"{name}: {'PASS' if v.get('pass') else 'FAIL'}")
    return 0 if all_pass else 1


def cmd_emit(cfg: dict, outdir: str, kind: str) -> int:
    if kind == "moments":
        rows = []
        for seed in cfg["seeds"]:
            path = os.path.join(outdir, f"summary-seed{seed}.txt")
            if not os.path.exists(path):
                raise SystemExit(f"missing artifact {path}; run simulate first")
            table = np.atleast_2d(np.loadtxt(path))
            d = int(np.sqrt(table.shape[1] - 3 + 0.25) - 0.5)  # 3 + d + d^2 cols
            names = (
                ["M2", f"M4"]
                + [f"mean{i}" for i in range(d)]
                + [f"cov{i}{j}" for i in range(d) for j in range(d)]
            )
            for row in table:
                for name, val in zip(names, row[1:]):
                    rows.append((row[0], f"seed{seed}:{name}", val))
        out = os.path.join(outdir, "moments-long.txt")
        with open(out, "w") as fh:
            fh.write("# t statistic value\n")
            for t, name, val in rows:
                fh.write(f"{t:.17g} {name} {val:.17g}\n")
        print(out)
        return 0
    if kind == "defects":
        src = os.path.join(outdir, "verdict.json")
        if not os.path.exists(src):
            raise SystemExit(f"missing artifact {src}; run verify first")
        with open(src) as fh:
            verdict = json.load(fh)
        out = os.path.join(outdir, "defects-long.txt")
        with open(out, "w") as fh:
            fh.write("# s t point_defect law_defect tolerance\n")
            for rep in verdict.get("cocycle", {}).get("defects", []):
                fh.write(
                    f"{rep['s']:.17g} {rep['t']:.17g} {rep['point_defect']:.17g} "
                    f"{rep['law_defect']:.17g} {rep['tolerance']:.17g}\n"
                )
        print(out)
        return 0
    if kind == "metric-curves":
        from .measures import dp_bracket, wasserstein_p
        from .meanfield import MeasureCurve  # noqa: F401  (format reference)

        rows = []
        for seed in cfg["seeds"]:
            path = os.path.join(outdir, f"curve-seed{seed}.txt")
            if not os.path.exists(path):
                raise SystemExit(f"missing artifact {path}; run simulate first")
            with open(path) as fh:
                fh.readline()
                table = np.atleast_2d(np.loadtxt(fh))
            times = np.unique(table[:, 0])
            clouds = [
                EmpiricalMeasure(table[table[:, 0] == t][:, 2:]) for t in times
            ]
            for t, m in zip(times, clouds):
                w = wasserstein_p(m, clouds[0], 2.0)
                lo, up, _ = dp_bracket(m, clouds[0], 2.0)
                rows.append((t, w, lo, up))
        out = os.path.join(outdir, "metric-curves.txt")
        with open(out, "w") as fh:
            fh.write("# t d_p dp_lower dp_upper\n")
            for r in rows:
                fh.write(" ".join(f"{x:.17g}" for x in r) + "\n")
        print(out)
        return 0
    raise SystemExit(f"unknown emit kind {kind!r}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="roughmf", description=__doc__)
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in ("simulate", "verify", "emit"):
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True)
        p.add_argument("--output-dir", default=None)
        if verb == "emit":
            p.add_argument("--kind", required=True,
                           choices=["moments", "defects", "metric-curves"])
    args = ap.parse_args(argv)
    cfg = load_config(args.config)
    outdir = args.output_dir or os.environ.get("ROUGHMF_OUTPUT_DIR") or cfg["output_dir"]
    if args.verb == "simulate":
        return cmd_simulate(cfg, outdir)
    if args.verb == "verify":
        return cmd_verify(cfg, outdir)
    return cmd_emit(cfg, outdir, args.kind)


if __name__ == "__main__":
    sys.exit(main())

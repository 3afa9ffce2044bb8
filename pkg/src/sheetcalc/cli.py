"""Config-driven command line: declare an experiment, run it, write reports.

Exit codes: 0 success; 2 invalid configuration; 3 numeric failure inside the
solution domain; 4 acceptance threshold breached while --assert is active.
Outputs (report.json, report.csv, expanded-config.json, optional field.csv)
land only under the configured output directory and contain no timestamps,
so a rerun of the expanded config reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
from scipy import stats as _scipy_stats

from .config import (
    blowup_from_config,
    config_digest,
    expand_config,
    grid_from_config,
    load_config,
)
from .errors import ConfigurationError, DegenerateDataError, ModelError, NumericsError, \
    ShapeError
from .hyperbolic import COEFFICIENT_PRESETS, SystemBoundaries, blowup_monitor, \
    ou_system_boundaries, solve_system
from .lattice import BoundaryPath, CellIncrements, Channel, NoiseSpec, \
    boundary_increments, sample_cell_increments_batch
from .models import model_from_config, payoff_from_config
from .rules import run_rules
from .sheet import SheetField, build_sheet, dump_csv, sample_ou_exact_batch, \
    solve_ou_hyperbolic
from .verify import run_bismut, run_holder_scan, run_ibp, run_reversibility

_PROBE_FRACTIONS = [
    ((0.5, 0.5), (0.5, 0.5)),
    ((1.0, 1.0), (1.0, 1.0)),
    ((0.25, 0.5), (0.5, 0.25)),
    ((0.5, 1.0), (1.0, 0.5)),
    ((0.25, 0.25), (0.75, 0.75)),
    ((1.0, 0.25), (0.25, 1.0)),
    ((0.75, 0.25), (0.25, 0.75)),
    ((1.0, 0.5), (0.5, 1.0)),
    ((0.5, 0.25), (0.75, 1.0)),
]


def _sheet_batch(grid, seed, n_paths):
    spec = NoiseSpec(seed, 0, 1)
    incs = sample_cell_increments_batch(grid, spec, n_paths)
    return build_sheet(CellIncrements(incs, grid))


def _cmd_simulate_sheet(cfg, digest):
    grid = grid_from_config(cfg)
    mc = cfg["mc"]
    tol_se = float(cfg["run"]["probe_tolerance_se"])
    w = _sheet_batch(grid, mc["seed"], mc["n_paths"])
    probes = []
    ok = True
    for (fa, fb) in _PROBE_FRACTIONS:
        ia, ja = round(fa[0] * grid.n_s), round(fa[1] * grid.n_t)
        ib, jb = round(fb[0] * grid.n_s), round(fb[1] * grid.n_t)
        prod = w.values[:, ia, ja, 0] * w.values[:, ib, jb, 0]
        want = min(ia * grid.ds, ib * grid.ds) * min(ja * grid.dt, jb * grid.dt)
        got = float(np.mean(prod))
        se = float(np.std(prod, ddof=1)) / np.sqrt(mc["n_paths"])
        passed = abs(got - want) <= tol_se * se
        ok = ok and passed
        probes.append({
            "nodes": [[ia, ja], [ib, jb]], "expected": want, "estimate": got,
            "se": se, "pass": bool(passed),
        })
    report = {"kind": "sheet-covariance", "probes": probes, "all_pass": bool(ok),
              "n_paths": mc["n_paths"], "tolerance_se": tol_se}
    field = SheetField(w.values[0], grid) if cfg["run"]["field_dump"] else None
    return report, ok, field


def _cmd_sample_ou(cfg, digest):
    grid = grid_from_config(cfg)
    mc = cfg["mc"]
    n = mc["n_paths"]
    exact = sample_ou_exact_batch(grid, NoiseSpec(mc["seed"], 0, 1), n)[:, -1, -1, 0]
    spec = NoiseSpec(mc["seed"], 0, 1)
    zb_incs = boundary_increments(grid.n_s, grid.ds, 1, spec, Channel.Z_S0, "s", n)
    zb = np.zeros((n, grid.n_s + 1, 1))
    zb[:, 1:, :] = np.cumsum(zb_incs, axis=-2)
    incs = CellIncrements(sample_cell_increments_batch(grid, spec, n), grid)
    fld = solve_ou_hyperbolic(grid, BoundaryPath(zb, grid.ds), incs)
    solved = fld.values[:, -1, -1, 0]
    ks = _scipy_stats.ks_2samp(exact, solved)
    level = float(cfg["run"]["ks_level"])
    ok = bool(ks.pvalue >= level)
    report = {
        "kind": "ou-cross-validation", "ks_statistic": float(ks.statistic),
        "ks_pvalue": float(ks.pvalue), "level": level, "pass": ok,
        "n_paths": n, "node": [grid.n_s, grid.n_t],
        "exact_var": float(np.var(exact, ddof=1)), "solved_var": float(np.var(solved, ddof=1)),
    }
    field = SheetField(fld.values[0], grid) if cfg["run"]["field_dump"] else None
    return report, ok, field


def _cmd_verify_rules(cfg, digest):
    mc = cfg["mc"]
    report = run_rules(n_paths=mc["n_paths"], seed=mc["seed"])
    return report, bool(report["all_pass"]), None


def _system_boundaries(name, coeffs, grid, seed, n_paths):
    if name == "ou":
        spec = NoiseSpec(seed, 0, coeffs.m)
        bi = boundary_increments(grid.n_s, grid.ds, coeffs.m, spec, Channel.Z_S0, "s", n_paths)
        zb = np.zeros((n_paths, grid.n_s + 1, coeffs.m))
        zb[:, 1:, :] = np.cumsum(bi, axis=-2)
        return ou_system_boundaries(grid, BoundaryPath(zb, grid.ds))
    if name == "expgrow":
        return SystemBoundaries(
            x_s0=grid.s_nodes()[:, None],
            x_0t=np.zeros((grid.n_t + 1, 1)),
            p_0t=np.zeros((grid.n_t + 1, 1)),
            q_s0=np.zeros((grid.n_s + 1, 1)),
        )
    return SystemBoundaries(
        x_s0=np.zeros((grid.n_s + 1, coeffs.d)),
        x_0t=np.zeros((grid.n_t + 1, coeffs.d)),
        p_0t=np.zeros((grid.n_t + 1, coeffs.n)),
        q_s0=np.zeros((grid.n_s + 1, coeffs.n)),
    )


def _cmd_solve_hyperbolic(cfg, digest):
    grid = grid_from_config(cfg)
    mc = cfg["mc"]
    name = cfg["run"]["system"]
    if name not in COEFFICIENT_PRESETS:
        raise ConfigurationError(f"run.system: unknown system {name!r}")
    coeffs = COEFFICIENT_PRESETS[name]()
    bounds = _system_boundaries(name, coeffs, grid, mc["seed"], mc["n_paths"])
    incs = CellIncrements(
        sample_cell_increments_batch(grid, NoiseSpec(mc["seed"], 0, coeffs.m), mc["n_paths"]),
        grid,
    )
    sol = solve_system(coeffs, bounds, grid, incs, blowup_M=blowup_from_config(cfg))
    summary = blowup_monitor(sol)
    report = {
        "kind": "hyperbolic-solution",
        "system": name,
        "max_m": float(np.max(summary.max_m)),
        "frontier_nodes": int(np.sum(summary.frontier)),
        "domain_fraction": float(np.mean(sol.domain_mask)),
        "uu_inv_drift": sol.uu_inv_drift(),
        "norm_convention": sol.norm_convention,
        "n_paths": mc["n_paths"],
    }
    field = None
    if cfg["run"]["field_dump"]:
        vals = sol.x[0] if sol.x.ndim == 4 else sol.x
        field = SheetField(vals, grid)
    return report, True, field


def _cmd_run_ibp(cfg, digest):
    grid = grid_from_config(cfg)
    mc, run = cfg["mc"], cfg["run"]
    model = model_from_config(cfg["model"])
    f = payoff_from_config(run["payoff_f"], d=model.vf.d)
    g = payoff_from_config(run["payoff_g"], d=model.vf.d)
    rep = run_ibp(model, f, g, grid, mc["n_paths"], mc["seed"],
                  workers=mc["workers"], fault=run["fault"])
    rep.config_digest = digest
    ok = abs(rep.z_score) <= float(run["assert_z"])
    return rep.to_dict(), ok, None


def _cmd_run_bismut(cfg, digest):
    grid = grid_from_config(cfg)
    mc, run = cfg["mc"], cfg["run"]
    model = model_from_config(cfg["model"])
    f = payoff_from_config(run["payoff_f"], d=model.vf.d)
    rep = run_bismut(model, f, grid, mc["n_paths"], mc["seed"],
                     workers=mc["workers"], component=int(run["component"]))
    rep.config_digest = digest
    ok = abs(rep.z_score) <= float(run["assert_z"])
    return rep.to_dict(), ok, None


def _cmd_run_reversibility(cfg, digest):
    grid = grid_from_config(cfg)
    mc, run = cfg["mc"], cfg["run"]
    model = model_from_config(cfg["model"])
    f = payoff_from_config(run["payoff_f"], d=model.vf.d)
    g = payoff_from_config(run["payoff_g"], d=model.vf.d)
    rep = run_reversibility(model, f, g, grid, float(run["t_gap"]), mc["n_paths"],
                            mc["seed"], workers=mc["workers"])
    rep.config_digest = digest
    ok = abs(rep.z_score) <= float(run["assert_z"])
    return rep.to_dict(), ok, None


def _cmd_holder_scan(cfg, digest):
    grid = grid_from_config(cfg)
    mc, run = cfg["mc"], cfg["run"]
    target = run["target"]
    model = model_from_config(cfg["model"]) if target in ("x", "u") else None
    coeffs = COEFFICIENT_PRESETS[run["system"]]() if target == "p" else None
    rep = run_holder_scan(target, grid, float(run["alpha"]), run["lags"],
                          mc["n_paths"], mc["seed"], workers=mc["workers"],
                          model=model, coeffs=coeffs)
    rep.config_digest = digest
    lo, hi = run["slope_range"] or ((0.9, 1.1) if target == "sheet" else (0.85, 1.15))
    ok = lo <= rep.fitted_slope <= hi
    out = rep.to_dict()
    out["slope_range"] = [lo, hi]
    out["pass"] = bool(ok)
    return out, ok, None


_DISPATCH = {
    "simulate-sheet": _cmd_simulate_sheet,
    "sample-ou": _cmd_sample_ou,
    "verify-rules": _cmd_verify_rules,
    "solve-hyperbolic": _cmd_solve_hyperbolic,
    "run-ibp": _cmd_run_ibp,
    "run-bismut": _cmd_run_bismut,
    "run-reversibility": _cmd_run_reversibility,
    "holder-scan": _cmd_holder_scan,
}


def _write_csv(report: dict, path: str):
    digest = report.get("config_digest", "")
    with open(path, "w") as fh:
        fh.write(f"# sheetcalc-csv v1 kind={report.get('kind', 'report')} digest={digest}\n")
        rows = None
        if report.get("kind") == "rules-report":
            rows = ("name,value,threshold,pass\n", [
                f"{r['name']},{r['value']!r},{r['threshold']!r},{r['pass']}\n"
                for r in report["rules"]
            ])
        elif report.get("kind") == "sheet-covariance":
            rows = ("i1,j1,i2,j2,expected,estimate,se,pass\n", [
                f"{p['nodes'][0][0]},{p['nodes'][0][1]},{p['nodes'][1][0]},{p['nodes'][1][1]},"
                f"{p['expected']!r},{p['estimate']!r},{p['se']!r},{p['pass']}\n"
                for p in report["probes"]
            ])
        elif report.get("kind") == "holder-report":
            rows = ("lag,moment,moment_se\n", [
                f"{lag!r},{mom!r},{se!r}\n"
                for lag, mom, se in zip(report["lags"], report["moments"], report["moment_ses"])
            ])
        if rows is not None:
            header, lines = rows
            fh.write(header)
            fh.writelines(lines)
        else:
            keys = [k for k in sorted(report) if k != "kind"]
            fh.write(",".join(keys) + "\n")
            fh.write(",".join(
                repr(report[k]) if isinstance(report[k], float) else json.dumps(report[k])
                for k in keys
            ) + "\n")


def run(config_path, assert_thresholds=False, workers=None, seed_override=None) -> int:
    """Execute one experiment config; returns the process exit code."""
    try:
        raw = load_config(config_path)
        cfg = expand_config(raw, workers=workers, seed_override=seed_override)
        digest = config_digest(cfg)
        outdir = cfg["output"]["directory"]
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "expanded-config.json"), "w") as fh:
            json.dump(cfg, fh, sort_keys=True, indent=2)
            fh.write("\n")
        report, ok, field = _DISPATCH[cfg["run"]["command"]](cfg, digest)
        report.setdefault("config_digest", digest)
        report["command"] = cfg["run"]["command"]
        if "json" in cfg["output"]["formats"]:
            with open(os.path.join(outdir, "report.json"), "w") as fh:
                json.dump(report, fh, sort_keys=True, indent=2)
                fh.write("\n")
        if "csv" in cfg["output"]["formats"]:
            _write_csv(report, os.path.join(outdir, "report.csv"))
        if field is not None:
            dump_csv(field, os.path.join(outdir, "field.csv"))
    except (ConfigurationError, ModelError, ShapeError, DegenerateDataError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numeric failure: {exc} (cell={exc.cell}, path={exc.path})", file=sys.stderr)
        return 3
    if assert_thresholds and not ok:
        print("assertion failed: acceptance threshold breached", file=sys.stderr)
        return 4
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sheetcalc",
        description="Two-parameter stochastic calculus experiments on the lattice.",
    )
    parser.add_argument("--config", required=True, help="path to the experiment config (JSON)")
    parser.add_argument("--assert", dest="assert_thresholds", action="store_true",
                        help="turn acceptance tolerances into exit-code failures")
    parser.add_argument("--workers", type=int, default=None, help="worker count override")
    parser.add_argument("--seed-override", type=int, default=None, help="seed override")
    args = parser.parse_args(argv)
    return run(args.config, assert_thresholds=args.assert_thresholds,
               workers=args.workers, seed_override=args.seed_override)


if __name__ == "__main__":
    sys.exit(main())

"""Monte Carlo verification harness for the integration-by-parts identities.

Every check is a paired estimator: both sides of an identity are computed
path by path on identical driving noise (common random numbers via the
counter-addressed generator), and the report's z-score uses the variance of
the per-path differences.  Paths are processed in fixed-size blocks whose
partial sums are combined in block order, so a report is bit-identical for
any worker count.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DegenerateDataError
from .hyperbolic import (
    CoefficientSet,
    SystemBoundaries,
    bounded_test_coefficients,
    solve_system,
)
from .lattice import (
    CellIncrements,
    Channel,
    Grid,
    NoiseSpec,
    boundary_increments,
    sample_cell_increments_batch,
)
from .malliavin import apply_L, compute_malliavin_line, solve_state_line
from .models import Model
from .sheet import solve_ou_hyperbolic
from .lattice import BoundaryPath

LINE_CHUNK = 16384   # paths per block for one-line runs
FIELD_CHUNK = 4096   # paths per block when a full OU field is needed
HYP_CHUNK = 2048     # paths per block for general hyperbolic sweeps


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


@dataclass
class MCReport:
    """Paired Monte Carlo estimate of lhs = rhs."""

    lhs_mean: float
    lhs_se: float
    rhs_mean: float
    rhs_se: float
    n_paths: int
    z_score: float
    config_digest: str
    workers: int
    diff_mean: float
    diff_se: float
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "kind": "mc-report",
            "lhs_mean": self.lhs_mean,
            "lhs_se": self.lhs_se,
            "rhs_mean": self.rhs_mean,
            "rhs_se": self.rhs_se,
            "n_paths": self.n_paths,
            "z_score": self.z_score,
            "config_digest": self.config_digest,
            "workers": self.workers,
            "diff_mean": self.diff_mean,
            "diff_se": self.diff_se,
        }
        out.update(self.extras)
        return out


@dataclass
class HolderReport:
    """Log-log regression of lag moments E|X_t - X_0|^alpha."""

    lags: list
    moments: list
    moment_ses: list
    fitted_slope: float
    slope_ci: tuple
    alpha: float
    target: str
    n_paths: int
    config_digest: str

    def to_dict(self) -> dict:
        return {
            "kind": "holder-report",
            "lags": list(self.lags),
            "moments": list(self.moments),
            "moment_ses": list(self.moment_ses),
            "fitted_slope": self.fitted_slope,
            "slope_ci": list(self.slope_ci),
            "alpha": self.alpha,
            "target": self.target,
            "n_paths": self.n_paths,
            "config_digest": self.config_digest,
        }


class _PairedSums:
    """Blockwise moment accumulation for one or more paired samples."""

    def __init__(self, width: int):
        self.width = width
        self.n = 0
        self.sums = np.zeros((width, 5))  # sum_l, sum_r, sum_ll, sum_rr, sum_d2

    def add(self, cols):
        """cols: list of (l_array, r_array) pairs, one per tracked column."""
        for k, (l, r) in enumerate(cols):
            d = l - r
            self.sums[k] += (
                np.sum(l), np.sum(r), np.sum(l * l), np.sum(r * r), np.sum(d * d)
            )
        self.n += cols[0][0].shape[0]

    def merge(self, other):
        self.sums += other.sums
        self.n += other.n

    def stats(self, k=0):
        n = self.n
        sl, sr, sll, srr, sdd = self.sums[k]
        ml = sl / n
        mr = sr / n
        var_l = max(0.0, (sll - n * ml * ml) / (n - 1))
        var_r = max(0.0, (srr - n * mr * mr) / (n - 1))
        md = ml - mr
        var_d = max(0.0, (sdd - n * md * md) / (n - 1))
        se_l = np.sqrt(var_l / n)
        se_r = np.sqrt(var_r / n)
        se_d = np.sqrt(var_d / n)
        z = 0.0 if se_d == 0.0 else md / se_d
        return ml, se_l, mr, se_r, md, se_d, z


def _blocks(n_paths, chunk):
    start = 0
    while start < n_paths:
        count = min(chunk, n_paths - start)
        yield start, count
        start += count


def _run_paired(sample_fn, n_paths, chunk, workers, width=1):
    """Evaluate sample_fn(start, count) over fixed blocks; merge in order."""
    if n_paths < 2:
        raise ConfigurationError(f"need n_paths >= 2, got {n_paths}")
    blocks = list(_blocks(n_paths, chunk))

    def one(block):
        start, count = block
        acc = _PairedSums(width)
        acc.add(sample_fn(start, count))
        return acc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(one, blocks))
    else:
        partials = [one(b) for b in blocks]
    total = _PairedSums(width)
    for part in partials:  # fixed block order: reports are worker-invariant
        total.merge(part)
    return total


def _report(total, n_paths, workers, digest, extras=None) -> MCReport:
    ml, se_l, mr, se_r, md, se_d, z = total.stats()
    return MCReport(
        lhs_mean=float(ml), lhs_se=float(se_l), rhs_mean=float(mr),
        rhs_se=float(se_r), n_paths=n_paths, z_score=float(z),
        config_digest=digest, workers=workers, diff_mean=float(md),
        diff_se=float(se_d), extras=extras or {},
    )


def _boundary_line(grid: Grid, noise: NoiseSpec, start, count):
    """The t=0 driving line z_{s0} for a block of paths: (count, n_s+1, m)."""
    spec = NoiseSpec(noise.seed, start, noise.m)
    incs = boundary_increments(grid.n_s, grid.ds, noise.m, spec, Channel.Z_S0, "s", count)
    z = np.zeros((count, grid.n_s + 1, noise.m))
    z[:, 1:, :] = np.cumsum(incs, axis=-2)
    return z


def run_ibp(model: Model, payoff_f, payoff_g, grid: Grid, n_paths: int, seed: int,
            workers: int = 1, fault: Optional[str] = None) -> MCReport:
    """Check E[grad f . Gamma . grad g] = -E[f LG] on the t=0 line at s = s_extent.

    lhs sample: grad f(x_end) Gamma_end grad g(x_end); rhs: -f(x_end) LG(x_end).
    """
    vf, x0, m = model.vf, model.x0, model.vf.m
    noise = NoiseSpec(seed, 0, m)
    k = grid.n_s

    def sample(start, count):
        z = _boundary_line(grid, noise, start, count)
        x, U, Uinv = solve_state_line(vf, z, x0, grid.ds)
        state = compute_malliavin_line(vf, x, U, Uinv, z, grid.ds, fault=fault)
        xk = x[:, k, :]
        gf = payoff_f.grad_f(xk)
        gg = payoff_g.grad_f(xk)
        lhs = np.einsum("pa,pab,pb->p", gf, state.Gamma[:, k, :, :], gg)
        rhs = -payoff_f.f(xk) * apply_L(payoff_g, state, k)
        return [(lhs, rhs)]

    digest = config_digest({
        "op": "run-ibp", "model": model.name, "f": payoff_f.name, "g": payoff_g.name,
        "grid": [grid.n_s, grid.n_t, grid.ds, grid.dt], "n_paths": n_paths,
        "seed": seed, "fault": fault,
    })
    total = _run_paired(sample, n_paths, LINE_CHUNK, workers)
    return _report(total, n_paths, workers, digest, {"fault": fault})


def run_bismut(model: Model, payoff_f, grid: Grid, n_paths: int, seed: int,
               workers: int = 1, component: int = 0) -> MCReport:
    """Check E[grad f(x) U C]_j = -E[f(x) R_j] on the t=0 line (component j)."""
    vf, x0, m = model.vf, model.x0, model.vf.m
    noise = NoiseSpec(seed, 0, m)
    k = grid.n_s

    def sample(start, count):
        z = _boundary_line(grid, noise, start, count)
        x, U, Uinv = solve_state_line(vf, z, x0, grid.ds)
        state = compute_malliavin_line(vf, x, U, Uinv, z, grid.ds)
        xk = x[:, k, :]
        gf = payoff_f.grad_f(xk)
        lhs_vec = np.einsum("pa,pab,pbc->pc", gf, state.U[:, k], state.C[:, k])
        rhs_vec = -payoff_f.f(xk)[:, None] * state.R[:, k, :]
        return [(lhs_vec[:, component], rhs_vec[:, component])]

    digest = config_digest({
        "op": "run-bismut", "model": model.name, "f": payoff_f.name,
        "grid": [grid.n_s, grid.n_t, grid.ds, grid.dt], "n_paths": n_paths,
        "seed": seed, "component": component,
    })
    total = _run_paired(sample, n_paths, LINE_CHUNK, workers)
    return _report(total, n_paths, workers, digest)


def _ou_field(grid: Grid, noise: NoiseSpec, start, count):
    spec = NoiseSpec(noise.seed, start, noise.m)
    zb = BoundaryPath(
        np.concatenate(
            [
                np.zeros((count, 1, noise.m)),
                np.cumsum(
                    boundary_increments(grid.n_s, grid.ds, noise.m, spec, Channel.Z_S0, "s", count),
                    axis=-2,
                ),
            ],
            axis=-2,
        ),
        grid.ds,
    )
    incs = CellIncrements(sample_cell_increments_batch(grid, spec, count), grid)
    return solve_ou_hyperbolic(grid, zb, incs)


def run_reversibility(model: Model, payoff_f, payoff_g, grid: Grid, t_gap: float,
                      n_paths: int, seed: int, workers: int = 1) -> MCReport:
    """Check E[(F'-F)(G'-G)] = -2 E[F (G'-G)] across a t-gap of the OU field."""
    vf, x0, m = model.vf, model.x0, model.vf.m
    j_gap = grid.t_index(t_gap)
    noise = NoiseSpec(seed, 0, m)
    k = grid.n_s

    def sample(start, count):
        z_field = _ou_field(grid, noise, start, count)
        x0_line, _, _ = solve_state_line(vf, z_field.t_line(0), x0, grid.ds)
        xg_line, _, _ = solve_state_line(vf, z_field.t_line(j_gap), x0, grid.ds)
        F = payoff_f.f(x0_line[:, k, :])
        G = payoff_g.f(x0_line[:, k, :])
        Fp = payoff_f.f(xg_line[:, k, :])
        Gp = payoff_g.f(xg_line[:, k, :])
        lhs = (Fp - F) * (Gp - G)
        rhs = -2.0 * F * (Gp - G)
        return [(lhs, rhs)]

    digest = config_digest({
        "op": "run-reversibility", "model": model.name, "f": payoff_f.name,
        "g": payoff_g.name, "grid": [grid.n_s, grid.n_t, grid.ds, grid.dt],
        "t_gap": t_gap, "n_paths": n_paths, "seed": seed,
    })
    total = _run_paired(sample, n_paths, FIELD_CHUNK, workers)
    return _report(total, n_paths, workers, digest, {"t_gap": t_gap})


def intercept_weights(ts) -> np.ndarray:
    """OLS extrapolation-to-zero weights for ordinates sampled at ts."""
    t = np.asarray(ts, dtype=np.float64)
    tbar = t.mean()
    sxx = np.sum((t - tbar) ** 2)
    return 1.0 / len(t) + tbar * (tbar - t) / sxx


def run_carre_limit(model: Model, payoff_f, payoff_g, grid: Grid, t_gaps,
                    n_paths: int, seed: int, workers: int = 1) -> MCReport:
    """Extrapolate (1/t) E[(F'-F)(G'-G)] to t=0 and pair it against the
    carre-du-champ sample grad f . Gamma . grad g on the t=0 line.

    All gaps share one OU field per path, and the limit target is computed
    on the same paths, so the comparison is a single paired z-test.
    """
    vf, x0, m = model.vf, model.x0, model.vf.m
    gaps = list(t_gaps)
    if len(gaps) < 2:
        raise ConfigurationError("need at least two t-gaps to extrapolate")
    j_gaps = [grid.t_index(t) for t in gaps]
    wts = intercept_weights(gaps)
    noise = NoiseSpec(seed, 0, m)
    k = grid.n_s

    def sample(start, count):
        z_field = _ou_field(grid, noise, start, count)
        z0 = z_field.t_line(0)
        x_line, U, Uinv = solve_state_line(vf, z0, x0, grid.ds)
        state = compute_malliavin_line(vf, x_line, U, Uinv, z0, grid.ds)
        xk = x_line[:, k, :]
        F = payoff_f.f(xk)
        G = payoff_g.f(xk)
        carre = np.einsum(
            "pa,pab,pb->p", payoff_f.grad_f(xk), state.Gamma[:, k, :, :], payoff_g.grad_f(xk)
        )
        extrap = np.zeros(count)
        for wgt, gap, j in zip(wts, gaps, j_gaps):
            xg, _, _ = solve_state_line(vf, z_field.t_line(j), x0, grid.ds)
            Fp = payoff_f.f(xg[:, k, :])
            Gp = payoff_g.f(xg[:, k, :])
            extrap = extrap + wgt * ((Fp - F) * (Gp - G) / gap)
        return [(extrap, carre)]

    digest = config_digest({
        "op": "run-carre", "model": model.name, "f": payoff_f.name, "g": payoff_g.name,
        "grid": [grid.n_s, grid.n_t, grid.ds, grid.dt], "t_gaps": gaps,
        "n_paths": n_paths, "seed": seed,
    })
    total = _run_paired(sample, n_paths, FIELD_CHUNK, workers)
    return _report(total, n_paths, workers, digest, {"t_gaps": gaps})


class _MomentSums:
    def __init__(self, n_lags):
        self.n = 0
        self.s = np.zeros(n_lags)
        self.ss = np.zeros(n_lags)

    def add(self, samples):
        self.n += samples.shape[0]
        self.s += np.sum(samples, axis=0)
        self.ss += np.sum(samples * samples, axis=0)

    def merge(self, other):
        self.n += other.n
        self.s += other.s
        self.ss += other.ss


def run_holder_scan(target: str, grid: Grid, alpha: float, lags, n_paths: int,
                    seed: int, workers: int = 1, model: Optional[Model] = None,
                    coeffs: Optional[CoefficientSet] = None, s_at: float = None) -> HolderReport:
    """Estimate E|X_{s,lag} - X_{s,0}|^alpha per lag and fit the log-log slope.

    target: "sheet" (component 0 of the Brownian sheet), "x"/"u" (state or
    derivative flow of `model` over the OU field) or "p" (companion of the
    hyperbolic system `coeffs`, default the bounded test system).
    """
    lags = list(lags)
    if len(lags) < 3:
        raise ConfigurationError("holder scan needs at least 3 lags")
    j_lags = [grid.t_index(t) for t in lags]
    if any(j == 0 for j in j_lags):
        raise ConfigurationError("lags must be positive grid multiples")
    if target in ("x", "u") and model is None:
        raise ConfigurationError(f"target {target!r} needs a model")
    if target == "p" and coeffs is None:
        coeffs = bounded_test_coefficients()
    k = grid.n_s if s_at is None else grid.s_index(s_at)
    chunk = {"sheet": LINE_CHUNK, "x": FIELD_CHUNK, "u": FIELD_CHUNK, "p": HYP_CHUNK}.get(target)
    if chunk is None:
        raise ConfigurationError(f"unknown holder target {target!r}")

    noise = NoiseSpec(seed, 0, model.vf.m if model is not None else 1)

    def level_values(start, count):
        """X at (s = k*ds, t = level) for levels {0} + lags: list of arrays."""
        if target == "sheet":
            spec = NoiseSpec(seed, start, 1)
            incs = sample_cell_increments_batch(grid, spec, count)[..., 0]
            col = np.cumsum(np.sum(incs[:, :k, :], axis=1), axis=-1)
            levels = np.concatenate([np.zeros((count, 1)), col], axis=-1)
            return [levels[:, 0]] + [levels[:, j] for j in j_lags]
        if target in ("x", "u"):
            z_field = _ou_field(grid, noise, start, count)
            out = []
            for j in [0] + j_lags:
                x, U, _ = solve_state_line(model.vf, z_field.t_line(j), model.x0, grid.ds)
                if target == "x":
                    out.append(np.linalg.norm(x[:, k, :], axis=-1) if model.vf.d > 1 else x[:, k, 0])
                else:
                    out.append(
                        np.linalg.norm(U[:, k].reshape(count, -1), axis=-1)
                        if model.vf.d > 1 else U[:, k, 0, 0]
                    )
            return out
        # target == "p": general hyperbolic sweep with zero boundary data
        spec = NoiseSpec(seed, start, coeffs.m)
        incs = CellIncrements(sample_cell_increments_batch(grid, spec, count), grid)
        bounds = SystemBoundaries(
            x_s0=np.zeros((count, grid.n_s + 1, coeffs.d)),
            x_0t=np.zeros((count, grid.n_t + 1, coeffs.d)),
            p_0t=np.zeros((count, grid.n_t + 1, coeffs.n)),
            q_s0=np.zeros((count, grid.n_s + 1, coeffs.n)),
        )
        sol = solve_system(coeffs, bounds, grid, incs)
        return [sol.p[:, k, 0, 0]] + [sol.p[:, k, j, 0] for j in j_lags]

    def one(block):
        start, count = block
        vals = level_values(start, count)
        base = vals[0]
        acc = _MomentSums(len(lags))
        acc.add(np.stack(
            [np.abs(v - base) ** alpha for v in vals[1:]], axis=-1
        ))
        return acc

    blocks = list(_blocks(n_paths, chunk))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(one, blocks))
    else:
        partials = [one(b) for b in blocks]
    acc = _MomentSums(len(lags))
    for part in partials:
        acc.merge(part)

    moments = acc.s / acc.n
    var = np.maximum(0.0, (acc.ss - acc.n * moments**2) / (acc.n - 1))
    moment_ses = np.sqrt(var / acc.n)
    if np.any(moments <= 0.0):
        raise DegenerateDataError("all-zero lag moments: nothing to regress on")

    lx = np.log(np.asarray(lags))
    ly = np.log(moments)
    xbar = lx.mean()
    sxx = np.sum((lx - xbar) ** 2)
    slope = float(np.sum((lx - xbar) * ly) / sxx)
    intercept = float(ly.mean() - slope * xbar)
    resid = ly - (intercept + slope * lx)
    dof = max(1, len(lags) - 2)
    slope_se = float(np.sqrt(np.sum(resid**2) / dof / sxx))
    # widen by the statistical error of the moments themselves
    stat = float(np.max(moment_ses / moments)) / np.sqrt(sxx)
    half = 1.96 * max(slope_se, stat)
    digest = config_digest({
        "op": "holder-scan", "target": target, "alpha": alpha, "lags": lags,
        "grid": [grid.n_s, grid.n_t, grid.ds, grid.dt], "n_paths": n_paths, "seed": seed,
    })
    return HolderReport(
        lags=[float(t) for t in lags],
        moments=[float(v) for v in moments],
        moment_ses=[float(v) for v in moment_ses],
        fitted_slope=slope,
        slope_ci=(slope - half, slope + half),
        alpha=alpha,
        target=target,
        n_paths=n_paths,
        config_digest=digest,
    )


def write_report_json(report, path):
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_report_csv(report, path):
    d = report.to_dict()
    with open(path, "w") as fh:
        fh.write(f"# sheetcalc-csv v1 kind={d['kind']} digest={d['config_digest']}\n")
        if isinstance(report, HolderReport):
            fh.write("lag,moment,moment_se\n")
            for lag, mom, se in zip(report.lags, report.moments, report.moment_ses):
                fh.write(f"{lag!r},{mom!r},{se!r}\n")
            fh.write(f"# slope={report.fitted_slope!r} ci=({report.slope_ci[0]!r},{report.slope_ci[1]!r})\n")
        else:
            keys = [k for k in sorted(d) if k not in ("kind",)]
            fh.write(",".join(keys) + "\n")
            fh.write(",".join(repr(d[k]) if isinstance(d[k], float) else str(d[k]) for k in keys) + "\n")

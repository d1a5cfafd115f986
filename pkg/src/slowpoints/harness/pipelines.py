"""One function per experiment: validate, compute, write artifacts.

Each ``run_*`` takes an :class:`ExperimentConfig`, an output directory and
the manifest being filled, and returns text for standard output (possibly
empty).  Validation happens in ``prepare_*`` before any heavy work, and
parameter errors are re-raised with their ``parameters.*`` path.
"""

import logging
import math
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .. import _rng, exponent, gaussfield, kernels, slowset, spde
from .config import ConfigError
from ..errors import DomainError
from . import io, plots

log = logging.getLogger(__name__)


@contextmanager
def _params():
    """Prefix module-level parameter errors with ``parameters.``."""
    try:
        yield
    except ConfigError:
        raise
    except DomainError as exc:
        p = exc.param or "?"
        raise ConfigError(exc.args[0], param=f"parameters.{p}") from exc


def sigma_from(d):
    d = dict(d)
    kind = d.pop("kind", "bounded_sin")
    extra = set(d) - {"p0", "p1", "lo", "hi"}
    if extra:
        raise ConfigError(f"unknown key {sorted(extra)[0]!r}",
                          param=f"parameters.sigma.{sorted(extra)[0]}")
    if kind == "bounded_sin" and d.get("p0") is None:
        s = spde.SigmaSpec.default_bounded(float(d.get("p1", 1.0)))
    else:
        s = spde.SigmaSpec.from_dict({"kind": kind, "p0": d.get("p0") or 0.0,
                                      "p1": d.get("p1") or 0.0})
    lo, hi = d.get("lo"), d.get("hi")
    if lo is not None or hi is not None:
        s = spde.SigmaSpec.clamped(s, -math.inf if lo is None else lo,
                                   math.inf if hi is None else hi)
    return s


def _seed(cfg, label):
    return _rng.child(_rng.Seed(cfg.seed, 0), label)


def _register(manifest, out, *paths):
    for p in paths:
        manifest.outputs.append(Path(p).name)


# -- cov / localize-check ---------------------------------------------------

def run_cov(cfg, out, manifest):
    p = cfg.parameters
    with _params():
        q = kernels.KernelQuery(float(p["t"]), float(p["x"]), float(p["s"]), float(p["y"]))
        v = q.cov()
    path = io.write_csv(out / "cov.csv", ["t", "x", "s", "y", "cov"],
                        [[q.t, q.x, q.s, q.y, v]], io.csv_meta(cfg))
    _register(manifest, out, path)
    manifest.summary = {"cov": v}
    return f"{v:.6g}"


def run_localize(cfg, out, manifest):
    p = cfg.parameters
    ts = [float(t) for t in np.atleast_1d(p["t"])]
    alphas = [float(a) for a in np.atleast_1d(p["alpha"])]
    rows, ok_all = [], True
    with _params():
        for t in ts:
            for a in alphas:
                l2 = kernels.localization_l2(t, a)
                b = kernels.localization_bound(t, a)
                ok = 0.0 <= l2 <= b
                ok_all &= ok
                rows.append([t, a, float(kernels.var_h(t)), kernels.var_h_alpha(t, a), l2, b, ok])
    path = io.write_csv(out / "localize.csv",
                        ["t", "alpha", "var_h", "var_h_alpha", "l2", "bound", "within_bound"],
                        rows, io.csv_meta(cfg))
    _register(manifest, out, path)
    manifest.summary = {"rows": len(rows), "all_within_bound": bool(ok_all)}
    return f"{len(rows)} cases, all within bound: {ok_all}"


# -- sample-h -----------------------------------------------------------------

def run_sample_h(cfg, out, manifest):
    p = cfg.parameters
    with _params():
        grid = gaussfield.build_grid(float(p["a"]), float(p["b"]), int(p["points_per_octave"]))
        factor = gaussfield.factor_covariance(grid)
        batch = gaussfield.sample_paths(factor, int(p["n_paths"]), _seed(cfg, "sample-h"))
    rows = [[i, k, t, batch.values[i, k]]
            for i in range(batch.n_paths) for k, t in enumerate(grid.times)]
    path = io.write_csv(out / "sample_h.csv", ["path", "index", "t", "h"], rows,
                        io.csv_meta(cfg, points_per_octave=grid.points_per_octave))
    _register(manifest, out, path)
    manifest.summary = {"grid": {"a": grid.times[0], "b": grid.times[-1], "size": len(grid),
                                 "points_per_octave": grid.points_per_octave},
                        "jitter": factor.jitter_applied,
                        "stream": list(batch.seed_provenance)}
    return f"{batch.n_paths} paths on {len(grid)} times"


# -- simulate -----------------------------------------------------------------

def prepare_simulate(cfg):
    p = cfg.parameters
    with _params():
        sig = sigma_from(p["sigma"])
        grid = gaussfield.build_grid(float(p["t_first"]), float(p["horizon"]),
                                     int(p["per_octave"]))
        dx = float(p["dx"])
        dt = None if p["dt"] is None else float(p["dt"])
        probe = spde.SpdeConfig(sig, grid, half_width=1e9, dx=dx, dt=dt, alpha=p["alpha"])
        hw = probe.required_half_width() if p["half_width"] is None else float(p["half_width"])
        sc = spde.SpdeConfig(sig, grid, half_width=hw, dx=dx, dt=dt, alpha=p["alpha"],
                             seed=_seed(cfg, "simulate"))
        sc.checkpoint_steps()
        if int(p["replicas"]) < spde.MIN_REPLICAS:
            raise DomainError(f"at least {spde.MIN_REPLICAS} replicas needed",
                              param="replicas")
    return sc


def run_simulate(cfg, out, manifest):
    sc = prepare_simulate(cfg)
    p = cfg.parameters
    runs = spde.run_ensemble(sc, int(p["replicas"]), int(p["shard_size"]), cfg.threads)
    lin = spde.linearization_profile(runs)
    tr = spde.truncation_profile(runs)
    rows = [[t, runs[0].snap_distance[i], lin.l2[i], lin.l2_se[i], lin.ratio_to_quarter[i],
             lin.sup_mean[i], lin.sup_se[i], tr.l2[i], tr.l2_se[i]]
            for i, t in enumerate(lin.times)]
    cols = ["t", "snap_distance", "l2_error", "l2_error_se", "l2_error_over_t_quarter",
            "sup_error_mean", "sup_error_se", "l2_gap", "l2_gap_se"]
    csvp = io.write_csv(out / "simulate.csv", cols, rows,
                        io.csv_meta(cfg, sigma=sc.sigma.catalog_id, dx=io.fmt(sc.dx),
                                    dt=io.fmt(sc.dt)))
    summary = {
        "sigma": sc.sigma.catalog_id, "replicas": lin.replicas,
        "linearization_slope": lin.slope, "linearization_slope_se": lin.slope_se,
        "truncation_slope": tr.slope, "truncation_slope_se": tr.slope_se,
        "snapped_checkpoints": list(lin.times),
        "stability_ratio": sc.dt / sc.dx**2, "stability_limit": 0.25,
        "half_width": sc.half_width, "required_half_width": sc.required_half_width(),
    }
    js = io.write_json(out / "simulate.json", summary, "simulate")
    svg = plots.profile_plot(lin, out / "simulate_linearization.svg", "linearization error")
    _register(manifest, out, csvp, js, svg)
    manifest.summary = summary
    return (f"linearization slope {lin.slope:.4f} +- {lin.slope_se:.4f}; "
            f"truncation slope {tr.slope:.4f} +- {tr.slope_se:.4f}")


# -- exponent -----------------------------------------------------------------

def _record_rows(records, source=None):
    rows = []
    for r in sorted(records, key=lambda r: (r.grid_density, r.theta, r.ratio)):
        lo, hi = r.ci
        row = [r.theta, r.ratio, r.grid_density, r.trials, r.hits, r.p_hat, lo, hi]
        rows.append(row if source is None else [source] + row)
    return rows


REC_COLS = ["theta", "ratio", "grid_density", "trials", "hits", "p_hat", "ci_low", "ci_high"]


def run_exponent(cfg, out, manifest):
    p = cfg.parameters
    with _params():
        thetas = [float(t) for t in np.atleast_1d(p["theta"])]
        curve = exponent.lambda_curve(
            thetas, int(p["trials"]), _seed(cfg, "exponent"), [float(r) for r in p["ratios"]],
            int(p["density"]), int(p["min_hits"]), cfg.threads,
            tuple(int(d) for d in p["sub_densities"] or ()))
    fitted = sorted(curve.thetas)
    # the default regime needs three thresholds >= 1.5; fall back to the top three fitted
    large_min = min(1.5, fitted[-3]) if len(fitted) >= 3 else 1.5
    asym = exponent.asymptotic_check(curve, large_min=large_min)
    doc = {"curve": curve.to_dict(), "asymptotic": asym.to_dict(),
           "trials": int(p["trials"]), "ratios": list(p["ratios"])}
    csvp = io.write_csv(out / "survival.csv", REC_COLS, _record_rows(curve.records),
                        io.csv_meta(cfg))
    js = io.write_json(out / "exponent.json", doc, "exponent")
    s1 = plots.survival_plot([r for r in curve.records if r.grid_density == int(p["density"])],
                             out / "survival.svg")
    s2 = plots.lambda_plot(curve, out / "lambda.svg")
    _register(manifest, out, csvp, js, s1, s2)
    for th, det in curve.refusals.items():
        manifest.warnings.append(f"theta={th:g}: fit refused, needs more trials at "
                                 f"R={det.get('needs_more')}")
    manifest.summary = {"theta_c_hat": curve.theta_c_hat, "monotone_ok": curve.monotone_ok,
                        "convex_ok": curve.convex_ok, "refused": sorted(curve.refusals)}
    lines = [f"theta={f.theta:g} lambda={f.lambda_hat:.4f} +- {f.se:.4f}" for f in curve.entries]
    lines += [f"theta={t:g} refused" for t in curve.refusals]
    lines.append(f"theta_c: {curve.theta_c_hat if curve.theta_c_hat is not None else 'n/a'}")
    return "\n".join(lines)


# -- smallball-u --------------------------------------------------------------

def run_smallball(cfg, out, manifest):
    p = cfg.parameters
    with _params():
        sig = sigma_from(p["sigma"])
        rep = exponent.smallball_u(
            float(p["theta"]), [float(e) for e in p["eps"]], float(p["f_power"]),
            int(p["trials"]), sig, int(p["density"]), int(p["mesh"]),
            _seed(cfg, "smallball"), int(p["gaussian_trials"]), cfg.threads,
            int(p["shard_size"]))
    rows = (_record_rows(rep.records, "u") + _record_rows(rep.records_h, "h_lattice")
            + _record_rows(rep.gaussian_records, "gaussian"))
    csvp = io.write_csv(out / "smallball.csv", ["source"] + REC_COLS, rows, io.csv_meta(cfg))
    js = io.write_json(out / "smallball.json", rep.to_dict(), "smallball")
    svg = plots.survival_plot(rep.records + rep.gaussian_records, out / "smallball.svg")
    _register(manifest, out, csvp, js, svg)
    for e in rep.dropped:
        manifest.warnings.append(f"eps={e:g}: no survivors, dropped")
    manifest.summary = {"slope": None if rep.fit is None else rep.fit.lambda_hat,
                        "gaussian": None if rep.gaussian is None else rep.gaussian.lambda_hat,
                        "z_score": rep.z_score}
    f, g = rep.fit, rep.gaussian
    return (f"u slope {f.lambda_hat:.4f} +- {f.se:.4f}" if f else "u slope n/a") + "; " + (
        f"gaussian {g.lambda_hat:.4f} +- {g.se:.4f}" if g else "gaussian n/a")


# -- slowset ------------------------------------------------------------------

def prepare_slowset(cfg):
    p = cfg.parameters
    with _params():
        sig = sigma_from(p["sigma"])
        grid = gaussfield.build_grid(float(p["t_min"]), float(p["t_max"]), int(p["per_octave"]))
        probe = spde.SpdeConfig(sig, grid, half_width=1e9, dx=float(p["dx"]),
                                analysis_window=(0.0, 1.0))
        sc = spde.SpdeConfig(sig, grid, half_width=probe.required_half_width(),
                             dx=float(p["dx"]), replicas=int(p["replicas"]),
                             analysis_window=(0.0, 1.0), seed=_seed(cfg, "slowset"))
        sc.checkpoint_steps()
    return sc


def window_fractions(run, theta, s1, t_max):
    """Fraction of slow sites per replica as the window's ``t_min`` decreases."""
    out = []
    for t_lo in run.times[::-1]:
        stat, _ = spde.window_statistic(run.series_u, run.times, (t_lo, t_max), 1.0)
        out.append([float(t_lo)] + list((stat <= abs(s1) * theta).mean(axis=1)))
    return out


def run_slowset(cfg, out, manifest):
    sc = prepare_slowset(cfg)
    p = cfg.parameters
    theta = float(p["theta"])
    theta_c = p.get("theta_c")
    with _params():
        if p["lambda_hat"] is not None:
            lam, lam_se = float(p["lambda_hat"]), float(p["lambda_se"])
        else:
            curve = exponent.lambda_curve([theta], int(p["lambda_trials"]),
                                          _seed(cfg, "slowset-lambda"),
                                          [float(r) for r in p["ratios"]], int(p["density"]),
                                          workers=cfg.threads, sub_densities=())
            if not curve.entries:
                raise ConfigError(f"lambda fit refused at theta={theta}",
                                  param="parameters.lambda_trials")
            lam, lam_se = curve.entries[0].lambda_hat, curve.entries[0].se
    run = spde.run_coupled(sc)
    t_max = float(run.times[-1])
    stat, used = spde.window_statistic(run.series_u, run.times, (float(run.times[0]), t_max), 1.0)
    sh, _ = spde.window_statistic(run.series_h, run.times, (float(run.times[0]), t_max), 0.0)
    fs = spde.FieldStatistic(run.sites, stat, sh, (float(run.times[0]), t_max), used,
                             sc.sigma.sigma_at_one, sc.dx)
    lr = p["level_range"]
    with _params():
        rep = slowset.slowset_report(fs, theta, lam, theta_c=theta_c,
                                     n_max=p["n_max"], level_range=None if lr is None else tuple(lr))
        # carry the exponent uncertainty into the comparisons
        rep.comparisons = [
            None if e is None else slowset.dimension_vs_theory(e, lam, lam_se, theta, theta_c)
            for e in rep.estimates]
    rows = [[i, n, c] for i, cen in enumerate(rep.censuses) for n, c in enumerate(cen.counts)]
    csvp = io.write_csv(out / "census.csv", ["replica", "level", "count"], rows,
                        io.csv_meta(cfg, theta=io.fmt(theta), t_min=io.fmt(run.times[0]),
                                    t_max=io.fmt(t_max)))
    fr = window_fractions(run, theta, sc.sigma.sigma_at_one, t_max)
    frp = io.write_csv(out / "slow_fraction.csv",
                       ["t_min"] + [f"replica_{i}" for i in range(run.replicas)], fr,
                       io.csv_meta(cfg, theta=io.fmt(theta)))
    doc = dict(rep.to_dict(), lambda_hat=lam, lambda_se=lam_se, theta_c=theta_c,
               t_min=float(run.times[0]), t_max=t_max, dx=sc.dx, window_fractions=fr)
    js = io.write_json(out / "slowset.json", doc, "slowset")
    svg = plots.census_plot(rep.censuses[0], rep.estimates[0], out / "census.svg",
                            max(0.0, 1.0 - 2.0 * lam))
    _register(manifest, out, csvp, frp, js, svg)
    for r in rep.refusals:
        manifest.warnings.append(f"replica {r['replica']}: {r['reason']}")
    manifest.summary = {"theta": theta, "lambda_hat": lam,
                        "dimensions": [None if e is None else e.slope for e in rep.estimates]}
    dims = ", ".join("n/a" if e is None else f"{e.slope:.3f}" for e in rep.estimates)
    return f"dimension per replica: {dims}; 1 - 2 lambda = {1 - 2 * lam:.3f}"


RUNNERS = {
    "cov": run_cov, "localize-check": run_localize, "sample-h": run_sample_h,
    "simulate": run_simulate, "exponent": run_exponent, "smallball-u": run_smallball,
    "slowset": run_slowset,
}

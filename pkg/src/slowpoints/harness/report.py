"""Assemble a markdown report from the manifests in an output directory."""

import json
from pathlib import Path

from ..errors import DomainError

SECTIONS = ["cov", "localize-check", "sample-h", "simulate", "exponent", "smallball-u",
            "slowset"]


def _load(path):
    return json.loads(Path(path).read_text())


def _num(v, spec=".4g"):
    return "n/a" if v is None else format(v, spec)


def _csv_table(path, limit=None):
    from .io import read_csv

    _, cols, rows = read_csv(path)
    rows = rows[:limit] if limit else rows
    out = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for r in rows:
        out.append("| " + " | ".join(_short(v) for v in r) + " |")
    return out


def _short(v):
    try:
        f = float(v)
    except ValueError:
        return v
    return format(f, ".6g")


def _provenance(m):
    return [f"seed `{m['master_seed']}`, config digest `{m['config_digest'][:16]}`, "
            f"tool {m['tool_version']}"]


def _sec_cov(d, m):
    return ["## Covariance", *_provenance(m), "", *_csv_table(d / "cov.csv")]


def _sec_localize(d, m):
    return ["## Localization", *_provenance(m), "", *_csv_table(d / "localize.csv")]


def _sec_sample(d, m):
    g = m["summary"]["grid"]
    return ["## Exact samples of H(., 0)", *_provenance(m), "",
            f"{g['size']} times on [{g['a']:g}, {g['b']:g}], "
            f"{g['points_per_octave']} per octave; jitter {m['summary']['jitter']:g}"]


def _sec_simulate(d, m):
    s = _load(d / "simulate.json")
    return ["## Linearization and truncation", *_provenance(m), "",
            f"sigma `{s['sigma']}`, {s['replicas']} replicas, dt/dx^2 = "
            f"{s['stability_ratio']:.4g} (limit 0.25)", "",
            f"- slope of the L2 linearization error: {_num(s['linearization_slope'])} "
            f"+- {_num(s['linearization_slope_se'])}",
            f"- slope of the L2 truncation gap: {_num(s['truncation_slope'])} "
            f"+- {_num(s['truncation_slope_se'])}", "", *_csv_table(d / "simulate.csv")]


def _sec_exponent(d, m):
    s = _load(d / "exponent.json")
    c, a = s["curve"], s["asymptotic"]
    lines = ["## Boundary-crossing exponent", *_provenance(m), "",
             f"{s['trials']} trials per ratio, ratios {s['ratios']}, "
             f"{c['grid_density']} points per octave", "",
             "| theta | lambda | se | r^2 |", "|---|---|---|---|"]
    for e in c["entries"]:
        lines.append(f"| {e['theta']:g} | {e['lambda_hat']:.4f} | {e['se']:.4f} | "
                     f"{e['r_squared']:.4f} |")
    for th, det in c["refusals"].items():
        lines.append(f"| {th} | refused | hits {det.get('hits')} | |")
    for dens, fits in c.get("density_fits", {}).items():
        lines.append("")
        lines.append(f"At {dens} per octave: " + ", ".join(
            f"theta={f['theta']:g}: {f['lambda_hat']:.4f}" for f in fits))
    iv = c["theta_c_interval"]
    lines += ["", f"- theta_c estimate: {_num(c['theta_c_hat'])}"
              + (f" (interval {_num(iv[0])} .. {_num(iv[1])})" if iv else "")
              + (f"; {c['theta_c_note']}" if c["theta_c_note"] else ""),
              f"- monotone within 2 se: {c['monotone_ok']}; convex within 2 se: {c['convex_ok']}",
              f"- large-theta slope of log lambda vs theta^2: {_num(a['large_slope'])} "
              f"(ok: {a['large_ok']})",
              f"- small-theta slope of log lambda vs log theta: {_num(a['small_slope'])} "
              f"(ok: {a['small_ok']})"]
    lines += [f"- note: {n}" for n in a["notes"]]
    return lines


def _sec_smallball(d, m):
    s = _load(d / "smallball.json")
    f, g, h = s["fit"], s["gaussian"], s["fit_h"]
    return ["## Nonlinear small-ball probabilities", *_provenance(m), "",
            f"theta {s['theta']:g}, f = {s['f']}, eps {s['eps']}", "",
            f"- slope for u: {_num(f and f['lambda_hat'])} +- {_num(f and f['se'])}",
            f"- slope for the lattice additive field: {_num(h and h['lambda_hat'])} "
            f"+- {_num(h and h['se'])}",
            f"- exact Gaussian exponent on the same ladder: {_num(g and g['lambda_hat'])} "
            f"+- {_num(g and g['se'])}",
            f"- z-score: {_num(s['z_score'])}"]


def _sec_slowset(d, m):
    s = _load(d / "slowset.json")
    lines = ["## Slow-set dimension (exploratory)", *_provenance(m), "",
             f"theta {s['theta']:g}, window [{s['t_min']:.4g}, {s['t_max']:.4g}], "
             f"lambda {s['lambda_hat']:.4f} +- {s['lambda_se']:.4f}", "",
             "| replica | slow fraction | dimension | 1 - 2 lambda | gap | gap se |",
             "|---|---|---|---|---|---|"]
    for i, (c, fr) in enumerate(zip(s["comparisons"], s["fractions"])):
        if c is None:
            lines.append(f"| {i} | {fr:.4f} | refused | | | |")
        else:
            lines.append(f"| {i} | {fr:.4f} | {c['dimension']:.4f} | {c['predicted']:.4f} | "
                         f"{c['gap']:.4f} | {c['gap_se']:.4f} |")
    return lines


_BUILDERS = {"cov": _sec_cov, "localize-check": _sec_localize, "sample-h": _sec_sample,
             "simulate": _sec_simulate, "exponent": _sec_exponent,
             "smallball-u": _sec_smallball, "slowset": _sec_slowset}


def build_report(directory) -> str:
    """Markdown report; raises :class:`DomainError` when no manifest is found."""
    d = Path(directory)
    manifests = {}
    for p in sorted(d.glob("manifest-*.json")):
        m = _load(p)
        manifests[m["experiment"]] = m
    if not manifests:
        raise DomainError(f"no manifest in {d}", param="dir")
    lines = ["# Slow-point experiments", ""]
    missing = []
    for name in SECTIONS:
        m = manifests.get(name)
        if m is None:
            continue
        absent = [o for o in m["outputs"] if not (d / o).exists()]
        if absent:
            missing += [f"{name}: {o}" for o in absent]
            continue
        lines += _BUILDERS[name](d, m)
        lines += [f"- warning: {w}" for w in m.get("warnings", [])]
        lines.append("")
    not_run = [n for n in SECTIONS if n not in manifests]
    if not_run:
        lines.append("Not run: " + ", ".join(not_run))
    if missing:
        lines += ["", "Missing artifacts:"] + [f"- {x}" for x in missing]
    return "\n".join(lines) + "\n"

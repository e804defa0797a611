"""Command-line front end.

Usage::

    jcurves <subcommand> [--config cfg.json] [--out DIR] [--svg] [--seed N]

Each run writes ``<subcommand>.json`` (report with the resolved config and
library version) and ``<subcommand>.csv`` (table) to ``--out``, plus
``<subcommand>.svg`` with ``--svg``. Outputs are byte-deterministic.

Exit status: 0 success, 1 invalid configuration, 2 numerical failure
(non-convergence, violated bound, saturation), 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import bubble, core, dbar, decay, hyperbolic

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
U64 = 2 ** 64


class ConfigError(ValueError):
    """Invalid run configuration."""


class NumericalFailure(RuntimeError):
    """An analysis ran but did not reach its numerical target."""


@dataclass
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    out: Path = Path(".")
    emit_svg: bool = False
    seed: int = 0


# output helpers ------------------------------------------------------------------


def atomic_write(path: Path, data: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(obj):
    # JSON-safe: numpy scalars to python, complex to [re, im], nan/inf to None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def table_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def render_svg(series, title: str = "", xlabel: str = "", ylabel: str = "",
               width: int = 640, height: int = 400) -> str:
    """Standalone SVG line plot; ``series`` is a list of ``(label, xs, ys)``.

    Non-finite points are dropped. A series with one point is drawn as a
    marker without a polyline.
    """
    series = [(str(lab), np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
              for lab, xs, ys in series]
    series = [(lab, xs[np.isfinite(xs) & np.isfinite(ys)], ys[np.isfinite(xs) & np.isfinite(ys)])
              for lab, xs, ys in series]
    series = [s for s in series if s[1].size]
    if not series:
        raise ValueError("nothing to plot")
    allx = np.concatenate([s[1] for s in series])
    ally = np.concatenate([s[2] for s in series])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    sx = lambda x: ml + (x - x0) / (x1 - x0) * pw
    sy = lambda y: mt + (1 - (y - y0) / (y1 - y0)) * ph
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
    ]
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        out.append(f'<text x="{_fmt(sx(xv))}" y="{mt + ph + 16}" text-anchor="middle" '
                   f'font-size="10">{xv:.4g}</text>')
        out.append(f'<text x="{ml - 6}" y="{_fmt(sy(yv) + 3)}" text-anchor="end" '
                   f'font-size="10">{yv:.4g}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" '
               f'font-size="12">{_esc(xlabel)}</text>')
    out.append(f'<text x="15" y="{mt + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 15 {mt + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for i, (lab, xs, ys) in enumerate(series):
        c = colors[i % len(colors)]
        pts = [(sx(x), sy(y)) for x, y in zip(xs, ys)]
        if len(pts) > 1:
            path = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in pts)
            out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{path}"/>')
        for px, py in pts:
            out.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="2.5" fill="{c}"/>')
        ly = mt + 14 * i + 8
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{c}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 34}" y="{ly + 4}" font-size="11">{_esc(lab)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def emit_svg(series, path, **kw) -> str:
    """Render ``series`` and write it atomically to ``path``."""
    if not series:
        raise ValueError("empty series list")
    text = render_svg(series, **kw)
    atomic_write(Path(path), text)
    return text


# config plumbing -----------------------------------------------------------------


def _merge(defaults: dict, given: dict, name: str) -> dict:
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"{name}: unknown config keys {unknown}")
    out = dict(defaults)
    out.update(given)
    return out


def _positive(cfg: dict, *keys):
    for k in keys:
        v = cfg[k]
        vals = v if isinstance(v, list) else [v]
        for x in vals:
            if not isinstance(x, (int, float)) or isinstance(x, bool) or not math.isfinite(x) or x <= 0:
                raise ConfigError(f"{k} must be positive, got {v!r}")


def _ints(cfg: dict, *keys, minimum: int = 1):
    for k in keys:
        v = cfg[k]
        vals = v if isinstance(v, list) else [v]
        for x in vals:
            if not isinstance(x, int) or isinstance(x, bool) or x < minimum:
                raise ConfigError(f"{k} must be integers >= {minimum}, got {v!r}")


def _path(cfg: dict, key: str) -> Optional[Path]:
    v = cfg.get(key)
    if v is None:
        return None
    p = Path(v)
    if not p.exists():
        raise FileNotFoundError(f"{key}: no such path {p}")
    return p


# subcommands ---------------------------------------------------------------------
#
# Each entry: (defaults, validate(cfg) -> None, compute(cfg, seed) -> Result).
# validate must check every input path before compute runs.


@dataclass
class Result:
    report: dict
    header: list
    rows: list
    plot: Optional[dict] = None
    failure: Optional[str] = None


def _collar_validate(cfg):
    _positive(cfg, "lengths", "a_star")


def _collar(cfg, seed):
    a = float(cfg["a_star"])
    rows = []
    for l in cfg["lengths"]:
        spec = hyperbolic.CollarSpec(float(l), a)
        try:
            width = hyperbolic.collar_width(spec)
        except hyperbolic.CollarHypothesisError:
            width = float("nan")
        lower = math.pi ** 2 / l - 2 * math.pi / a
        rows.append([float(l), hyperbolic.collar_log_radius_upper(l),
                     hyperbolic.geodesic_annulus_log_radius_bound(l), width, lower])
    header = ["length", "log_radius_upper", "annulus_log_radius_bound", "rho_star", "rho_star_lower"]
    report = {"rows": [dict(zip(header, r)) for r in rows]}
    plot = {"series": [("rho*", [r[0] for r in rows], [r[3] for r in rows]),
                       ("pi^2/l", [r[0] for r in rows], [r[1] for r in rows])],
            "title": "collar widths", "xlabel": "geodesic length", "ylabel": "collar coordinate"}
    return Result(report, header, rows, plot)


def _plumb_validate(cfg):
    for key in ("graph", "params"):
        if isinstance(cfg[key], str):
            _path(cfg, key)
    for item in cfg["family"] or []:
        if isinstance(item, str) and not Path(item).exists():
            raise FileNotFoundError(f"family: no such path {item}")


def _load_json(v):
    if isinstance(v, str):
        with open(v, encoding="utf-8") as fh:
            return json.load(fh)
    return v


def _plumb(cfg, seed):
    try:
        g = hyperbolic.PantsGraph.from_json(_load_json(cfg["graph"]))
        params = hyperbolic.PlumbingParams.from_json(_load_json(cfg["params"]))
        fam = [hyperbolic.PlumbingParams.from_json(_load_json(p)) for p in cfg["family"] or []]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed graph or parameters: {exc}") from exc
    report = hyperbolic.validate_family(g, params)
    if fam:
        report["degeneration"] = hyperbolic.track_degeneration(g, fam)
    header = ["edge", "v0", "v1", "marked", "neck_modulus", "length_bound"]
    rows = [[e["edge"], e["v"][0], e["v"][1], int(e["marked"]), e.get("neck_modulus", float("nan")),
             e.get("length_bound", float("nan"))] for e in report["edges"]]
    plot = None
    if fam:
        series = [(f"edge {d['edge']}", list(range(1, len(d["moduli"]) + 1)), d["moduli"])
                  for d in report["degeneration"]["edges"]]
        plot = {"series": series, "title": "neck moduli", "xlabel": "family index",
                "ylabel": "log(1/|lambda|)"}
    return Result(report, header, rows, plot)


def _gauss_bump(width):
    return lambda z: np.exp(-np.abs(z) ** 2 / width ** 2) * (1 + z)


def _cauchy_validate(cfg):
    _ints(cfg, "resolutions", minimum=9)
    _positive(cfg, "radius", "bump_width", "inner_radius", "cz_p")
    _ints(cfg, "cz_trials")
    if not cfg["inner_radius"] < cfg["radius"]:
        raise ConfigError("inner_radius must be below radius")


def _cauchy(cfg, seed):
    R = float(cfg["radius"])
    rows = []
    for n in cfg["resolutions"]:
        g = core.Grid.disk(R, n)
        h = g.spacing[0]
        w = g.weights
        t1 = dbar.cauchy_transform(core.MapSample.constant(g, 1.0))
        err1 = float(np.abs(t1.values[..., 0] - np.conj(g.z))[w > 0].max())
        f = core.MapSample.from_function(g, _gauss_bump(cfg["bump_width"]))
        res = dbar.dbar_std(dbar.cauchy_transform(f)) - f
        reg = core.Region.disk(g, 0, cfg["inner_radius"])
        rw = reg.weights(g)
        l2 = float(np.sqrt(np.sum(np.sum(np.abs(res.values) ** 2, axis=-1) * rw)))
        rows.append([n, h, err1, err1 / h, l2])
    cz = dbar.cz_norm_estimate(cfg["cz_p"], cfg["cz_trials"], seed)
    header = ["n", "h", "max_err_T1", "max_err_T1_over_h", "right_inverse_l2"]
    report = {"rows": [dict(zip(header, r)) for r in rows], "cz_estimate": cz,
              "cz_p": cfg["cz_p"], "epsilon_p": dbar.epsilon_p(cz)}
    plot = {"series": [("|T1 - conj z|", [r[1] for r in rows], [r[2] for r in rows]),
                       ("right-inverse L2", [r[1] for r in rows], [r[4] for r in rows])],
            "title": "Cauchy transform errors", "xlabel": "h", "ylabel": "error"}
    return Result(report, header, rows, plot)


def _solve_validate(cfg):
    _ints(cfg, "n", minimum=9)
    _ints(cfg, "max_iter")
    _positive(cfg, "tol", "p")
    if not (isinstance(cfg["delta"], (int, float)) and 0 <= cfg["delta"] < 1):
        raise ConfigError("delta must lie in [0, 1)")
    if cfg["width"] is not None:
        _positive(cfg, "width")


def _dbar_solve(cfg, seed):
    g = core.Grid.disk(1.0, cfg["n"])
    J = dbar.sheared_structure(g, cfg["delta"], cfg["width"])
    exact = core.MapSample.from_function(
        g, lambda z: np.conj(z) ** 2 + z * np.conj(z) + np.exp(-np.abs(z) ** 2 / 0.2) * (1 + z))
    f = dbar.dbar_J(exact, J)
    u, rep = dbar.neumann_solve(f, J, cfg["tol"], cfg["max_iter"], cfg["p"])
    report = {"solve": rep.to_json(), "j_distance": J.distance_to_standard()}
    header = ["step", "contraction"]
    rows = [[k + 2, c] for k, c in enumerate(rep.contraction)]
    plot = {"series": [("contraction", [r[0] for r in rows], [r[1] for r in rows])],
            "title": "Neumann contraction", "xlabel": "iteration", "ylabel": "step ratio"} if rows else None
    fail = None if rep.converged else f"no convergence in {rep.iterations} iterations"
    return Result(report, header, rows, plot, fail)


def _decay_validate(cfg):
    if cfg["input"] is not None:
        _path(cfg, "input")
    _ints(cfg, "nt", "ntheta", minimum=3)
    _ints(cfg, "length", minimum=5)
    _ints(cfg, "random_maps", minimum=0)
    _positive(cfg, "eps", "gamma")
    if not cfg["gamma"] < 1:
        raise ConfigError("gamma must lie in (0, 1)")
    try:
        {int(k): complex(*v) for k, v in cfg["w_powers"].items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"w_powers must map integers to [re, im]: {exc}") from exc


def _decay(cfg, seed):
    if cfg["input"] is not None:
        u = core.read_csv(cfg["input"])
        if u.grid.kind != "cylinder":
            raise ConfigError("decay input must be a cylinder sample")
    else:
        l = cfg["length"]
        g = core.Grid.cylinder(0, l, cfg["nt"] * l + 1, cfg["ntheta"])
        # powers of the puncture coordinate w = exp(-(t + i theta))
        modes = {-int(k): complex(*v) for k, v in sorted(cfg["w_powers"].items())}
        u = decay.synth_cylinder(g, modes)
    rep = decay.removability_diagnostic(u, cfg["eps"], cfg["gamma"])
    E = np.asarray(rep.energies)
    l = E.size
    ratio = decay.three_segment_ratio(E[1:4])
    lam1 = decay.lambda_from_gamma(decay.GAMMA_1)
    env = [decay.decay_envelope(E[1], E[l - 2], lam1, k, l) for k in range(2, l)]
    rng = np.random.default_rng(seed)
    worst = 0.0
    if cfg["random_maps"]:
        g5 = core.Grid.cylinder(0, 5, 101 * 5 + 1, 64)
        for _ in range(cfg["random_maps"]):
            v = decay.synth_cylinder(g5, decay.random_holomorphic_modes(rng, 8, 5.0))
            worst = max(worst, decay.three_segment_ratio(decay.segment_energies(v)[1:4]))
    report = {"removability": rep.to_json(), "three_segment_ratio": ratio,
              "gamma_1": decay.GAMMA_1, "lambda_gamma_1": lam1,
              "random_maps": cfg["random_maps"], "random_worst_ratio": worst}
    header = ["segment", "energy", "envelope_gamma_1"]
    rows = [[i + 1, E[i], env[i - 1] if 2 <= i + 1 <= l - 1 else float("nan")] for i in range(l)]
    pos = [(r[0], math.log(r[1])) for r in rows if r[1] > 0]
    plot = {"series": [("log E_i", [p[0] for p in pos], [p[1] for p in pos])],
            "title": "segment energies", "xlabel": "segment", "ylabel": "log energy"} if pos else None
    return Result(report, header, rows, plot)


def _strip_validate(cfg):
    _ints(cfg, "N", minimum=50)
    for b in cfg["angles_deg"]:
        if not isinstance(b, (int, float)) or not 0 <= b < 180:
            raise ConfigError("angles_deg must lie in [0, 180)")


def _strip_eigen(cfg, seed):
    rows = []
    W0 = dbar.TotallyRealSubspace.real(1)
    for deg in cfg["angles_deg"]:
        beta = math.radians(deg)
        res = decay.strip_eigs(W0, dbar.TotallyRealSubspace.rotated_line(beta), cfg["N"])
        lam1 = res.lambda1 if res.lambda1 is not None else float("nan")
        rows.append([float(deg), beta, lam1, decay.strip_lambda1_exact(beta), res.gamma_w, res.zero_dim])
    header = ["angle_deg", "beta", "lambda1", "lambda1_exact", "gamma_w", "zero_dim"]
    report = {"rows": [dict(zip(header, r)) for r in rows]}
    plot = {"series": [("lambda1", [r[0] for r in rows], [r[2] for r in rows]),
                       ("exact", [r[0] for r in rows], [r[3] for r in rows])],
            "title": "strip eigenvalue", "xlabel": "angle (deg)", "ylabel": "lambda1"}
    return Result(report, header, rows, plot)


def _strips_validate(cfg):
    _positive(cfg, "alphas")
    _ints(cfg, "grid", minimum=2)


def _three_strips(cfg, seed):
    ab = np.linspace(-1, 1, cfg["grid"])
    rows = []
    fail = None
    for al in cfg["alphas"]:
        best, viol = 0.0, 0
        for a in ab:
            for b in ab:
                if a == 0 and b == 0:
                    continue
                try:
                    r, bound = decay.three_strips_check(float(a), float(b), float(al))
                except decay.BoundViolation:
                    viol += 1
                    continue
                best = max(best, r)
        bound = 2 / (1 + math.cosh(2 * al))
        rows.append([float(al), best, decay.three_strips_sharp(al), bound, viol])
        if viol:
            fail = "three-strips bound violated"
    header = ["alpha", "max_ratio", "sharp_constant", "bound", "violations"]
    report = {"rows": [dict(zip(header, r)) for r in rows]}
    plot = {"series": [("max ratio", [r[0] for r in rows], [r[1] for r in rows]),
                       ("sharp", [r[0] for r in rows], [r[2] for r in rows]),
                       ("2/(1+cosh 2a)", [r[0] for r in rows], [r[3] for r in rows])],
            "title": "three strips", "xlabel": "alpha", "ylabel": "ratio"}
    return Result(report, header, rows, plot, fail)


def _bubble_validate(cfg):
    if cfg["family"] is not None:
        p = _path(cfg, "family")
        if not (p / "manifest.json").exists():
            raise FileNotFoundError(f"family: {p / 'manifest.json'} missing")
    _positive(cfg, "eps", "rho", "a_min_spacings", "bound_factor")
    _ints(cfg, "n", minimum=9)
    _ints(cfg, "scales", minimum=0)


def load_family(path: Path) -> bubble.SequenceFamily:
    """Family from ``manifest.json`` (``{"members": ["u1.csv", ...]}``)."""
    with open(path / "manifest.json", encoding="utf-8") as fh:
        man = json.load(fh)
    return bubble.SequenceFamily(tuple(core.read_csv(path / m) for m in man["members"]))


def _bubble_scan(cfg, seed):
    if cfg["family"] is not None:
        fam = load_family(Path(cfg["family"]))
    else:
        g = core.Grid.disk(1.0, cfg["n"])
        fam = bubble.concentrating_family(g, cfg["eps"], cfg["scales"],
                                          center=complex(*cfg["center"]))
    h = max(fam.grid.spacing)
    rep = bubble.bubble_scan(fam, cfg["eps"], cfg["rho"], node=complex(*cfg["node"]),
                             boundary=cfg["boundary"], bound_factor=cfg["bound_factor"],
                             a_min=cfg["a_min_spacings"] * h)
    header = ["member", "radius", "center_re", "center_im"]
    rows = [[i, r, c.real, c.imag] for i, (r, c) in enumerate(zip(rep.radii, rep.centers))]
    plot = {"series": [("log2 r_n", [r[0] for r in rows],
                        [math.log2(r[1]) for r in rows])],
            "title": "concentration radii", "xlabel": "member", "ylabel": "log2 r_n"} if rows else None
    return Result(rep.to_json(), header, rows, plot)


def _corner_validate(cfg):
    for a in cfg["alphas"]:
        if not isinstance(a, (int, float)) or not 0 < a < 1:
            raise ConfigError("alphas must lie in (0, 1)")
    for lb in cfg["lambda_b"]:
        if not isinstance(lb, (int, float)) or not 1 < lb < math.exp(2 * math.pi):
            raise ConfigError("lambda_b must lie in (1, exp(2 pi))")
    _ints(cfg, "study_resolutions", minimum=9)
    _positive(cfg, "study_p")


def _corner(cfg, seed):
    rows = [["alpha", a, decay.corner_sobolev_exponent(a)] for a in cfg["alphas"]]
    rows += [["lambda_b", lb, decay.boundary_decay_exponent(lb)] for lb in cfg["lambda_b"]]
    study = []
    for n in cfg["study_resolutions"]:
        g = core.Grid.half_disk(1.0, n)
        u = core.MapSample.from_function(g, np.sqrt)
        reg = core.Region.disk(g, 0, 1.0, inner=2 * g.spacing[0], upper_half=True)
        study.append({"n": n, "h": g.spacing[0],
                      "norms": {str(p): core.lp_norm_du(u, p, reg) for p in cfg["study_p"]}})
    header = ["kind", "parameter", "exponent"]
    report = {"rows": [dict(zip(header, r)) for r in rows], "sqrt_study": study}
    plot = {"series": [(f"p={p}", [s["n"] for s in study], [s["norms"][str(p)] for s in study])
                       for p in cfg["study_p"]],
            "title": "L^p norm of du for z^(1/2)", "xlabel": "resolution", "ylabel": "norm"} \
        if study else None
    return Result(report, header, rows, plot)


_GENUS2 = hyperbolic.PantsGraph.standard(2)

SUBCOMMANDS = {
    "collar": ({"lengths": [0.25, 0.5, 1.0], "a_star": 2.0}, _collar_validate, _collar),
    "plumb": ({"graph": _GENUS2.to_json(),
               "params": {"edges": [[math.exp(-1), 0.0]] * len(_GENUS2.edges), "tails": []},
               "family": None}, _plumb_validate, _plumb),
    "cauchy": ({"resolutions": [33, 65], "radius": 1.0, "bump_width": 0.3, "inner_radius": 0.9,
                "cz_p": 2.0, "cz_trials": 3}, _cauchy_validate, _cauchy),
    "dbar-solve": ({"n": 49, "delta": 0.1, "width": 0.5, "tol": 1e-8, "max_iter": 50, "p": 2.0},
                   _solve_validate, _dbar_solve),
    "decay": ({"input": None, "w_powers": {"1": [1.0, 0.0]}, "length": 10, "nt": 100,
               "ntheta": 64, "eps": 0.1, "gamma": 0.9, "random_maps": 10},
              _decay_validate, _decay),
    "strip-eigen": ({"angles_deg": [30.0, 45.0, 60.0, 90.0], "N": 1000}, _strip_validate, _strip_eigen),
    "three-strips": ({"alphas": [0.25, 0.8125, 1.375, 1.9375, 2.5], "grid": 20},
                     _strips_validate, _three_strips),
    "bubble-scan": ({"family": None, "n": 257, "scales": [2, 3, 4, 5, 6], "center": [0.0, 0.0],
                     "node": [0.0, 0.0], "boundary": False, "eps": 0.1, "rho": 1.0,
                     "a_min_spacings": 12, "bound_factor": 4.0}, _bubble_validate, _bubble_scan),
    "corner": ({"alphas": [0.25, 0.5, 0.75], "lambda_b": [1.5, math.exp(math.pi), 100.0],
                "study_resolutions": [129, 257, 513], "study_p": [3.0, 5.0]},
               _corner_validate, _corner),
}


def resolve(config: RunConfig) -> dict:
    if config.subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {config.subcommand!r}")
    if not (isinstance(config.seed, int) and 0 <= config.seed < U64):
        raise ConfigError("seed must be an unsigned 64-bit integer")
    defaults, validate, _ = SUBCOMMANDS[config.subcommand]
    cfg = _merge(defaults, dict(config.params), config.subcommand)
    try:
        validate(cfg)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"{config.subcommand}: {exc}") from exc
    return cfg


def run(config: RunConfig) -> int:
    """Execute one subcommand; returns the exit status."""
    try:
        cfg = resolve(config)
        out = Path(config.out)
        if out.exists() and not out.is_dir():
            raise NotADirectoryError(f"--out {out} is not a directory")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    _, _, compute = SUBCOMMANDS[config.subcommand]
    try:
        res = compute(cfg, config.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArithmeticError, bubble.SaturationError, dbar.ConvergenceGateError,
            NumericalFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    name = config.subcommand
    doc = {"subcommand": name, "version": __version__, "seed": config.seed, "config": cfg,
           "result": res.report, "status": "ok" if res.failure is None else "numerical-failure"}
    if res.failure is not None:
        doc["failure"] = res.failure
    try:
        out.mkdir(parents=True, exist_ok=True)
        atomic_write(out / f"{name}.json", dumps(doc))
        atomic_write(out / f"{name}.csv", table_csv(res.header, res.rows))
        if config.emit_svg and res.plot is not None:
            plot = dict(res.plot)
            emit_svg(plot.pop("series"), out / f"{name}.svg", **plot)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if res.failure is not None:
        print(f"numerical failure: {res.failure}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jcurves", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON file of parameter overrides")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--svg", action="store_true", help="also write an SVG plot")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized analyses (u64)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    params = {}
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                params = json.load(fh)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        except json.JSONDecodeError as exc:
            print(f"error: {args.config}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if not isinstance(params, dict):
            print("error: config must be a JSON object", file=sys.stderr)
            return EXIT_CONFIG
    return run(RunConfig(args.subcommand, params, args.out, args.svg, args.seed))


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``gevrey-lab <subcommand> [--config FILE] [--set key=value ...]``.

Each run writes ``manifest.json`` and ``results.csv`` into ``--out`` (and
``plot.svg`` with ``--svg``). The exit code is 0 only when every enabled check
passes.
"""
from __future__ import annotations

import argparse
import ast
import csv
import inspect
import json
import logging
import platform
import sys
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from . import __version__
from . import experiments as ex
from .diagnostics import gevrey_fit, radius_fit, scaling_exponent

log = logging.getLogger("gevrey_kinetic")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _parse_value(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        low = text.lower()
        if low in ("true", "yes", "on"):
            return True
        if low in ("false", "no", "off"):
            return False
        return text


def read_config(path) -> Dict[str, object]:
    """Flat ``key = value`` file; ``#`` starts a comment, values are Python literals or bare strings."""
    cfg = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key = value")
        key, val = line.split("=", 1)
        cfg[key.strip()] = _parse_value(val)
    return cfg


def parse_overrides(items: Sequence[str]) -> Dict[str, object]:
    out = {}
    for it in items or ():
        if "=" not in it:
            raise ValueError(f"override {it!r} is not key=value")
        k, v = it.split("=", 1)
        out[k.strip()] = _parse_value(v)
    return out


def _as_list(v) -> list:
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]


def _kwargs_for(fn: Callable, cfg: Dict[str, object], skip: Sequence[str] = ()) -> Dict[str, object]:
    params = inspect.signature(fn).parameters
    return {k: v for k, v in cfg.items() if k in params and k not in skip}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _per_s(fn, cfg, default_s) -> List[ex.ExperimentResult]:
    return [fn(float(s), **_kwargs_for(fn, cfg, ("s",))) for s in _as_list(cfg.get("s", default_s))]


def cmd_kolmogorov(cfg) -> List[ex.ExperimentResult]:
    tasks = _as_list(cfg.get("tasks", ["gevrey", "radius", "bracket", "commutators"]))
    out = []
    if "gevrey" in tasks:
        out += _per_s(ex.gevrey_index, cfg, [0.25, 0.5, 0.75])
    if "radius" in tasks:
        out += _per_s(ex.radius_scaling, cfg, [0.25, 0.5])
    if "bracket" in tasks:
        out += _per_s(ex.bracket_check, cfg, [0.25, 0.5, 0.75])
    if "commutators" in tasks:
        out += _per_s(ex.commutator_check, cfg, [0.5])
    return out


def cmd_ffp1(cfg) -> List[ex.ExperimentResult]:
    tasks = _as_list(cfg.get("tasks", ["order", "radius"]))
    out = []
    if "order" in tasks:
        out += _per_s(ex.ffp1_temporal_order, cfg, [0.25, 0.5, 0.75])
    if "radius" in tasks:
        out += _per_s(ex.ffp1_radius_probe, cfg, [0.5])
    if "run" in tasks:
        out += _per_s(ex.ffp1_run, cfg, [0.5])
    return out


def cmd_collision(cfg) -> List[ex.ExperimentResult]:
    tasks = _as_list(cfg.get("tasks", ["invariants", "coercivity"]))
    out = []
    if "invariants" in tasks:
        out.append(ex.collision_invariants(**_kwargs_for(ex.collision_invariants, cfg)))
    if "coercivity" in tasks:
        out.append(ex.coercivity(**_kwargs_for(ex.coercivity, cfg)))
    if "trilinear" in tasks:
        out.append(ex.trilinear_check(**_kwargs_for(ex.trilinear_check, cfg)))
    return out


def cmd_macro(cfg) -> List[ex.ExperimentResult]:
    tasks = _as_list(cfg.get("tasks", ["checks", "model"]))
    out = []
    if "checks" in tasks:
        out.append(ex.macro_micro_check(**_kwargs_for(ex.macro_micro_check, cfg)))
    if "model" in tasks:
        out.append(ex.macro_model_run(**_kwargs_for(ex.macro_model_run, cfg)))
    return out


def cmd_subelliptic(cfg) -> List[ex.ExperimentResult]:
    return _per_s(ex.subelliptic_scan, cfg, [0.5])


def cmd_inequalities(cfg) -> List[ex.ExperimentResult]:
    return [ex.inequality_suite(**_kwargs_for(ex.inequality_suite, cfg))]


def _read_columns(path) -> Dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} has no data rows")
    cols = {}
    for k in rows[0]:
        try:
            cols[k] = np.array([float(r[k]) for r in rows])
        except ValueError:
            continue  # label columns such as ``experiment``
    return cols


def cmd_fit(cfg) -> List[ex.ExperimentResult]:
    """Fits on user data: ``kind=gevrey`` (columns m, norm), ``scaling`` (t, value) or ``radius`` (k, amp)."""
    if "input" not in cfg:
        raise ValueError("fit needs input=<csv path>")
    cols = _read_columns(cfg["input"])
    kind = cfg.get("kind", "gevrey")
    res = ex.ExperimentResult(f"fit {kind}")
    if kind == "gevrey":
        fit = gevrey_fit(cols["norm"], cols["m"].astype(int), intercept=bool(cfg.get("intercept", True)),
                         m_min=cfg.get("m_min"))
        res.summary.update(tau_hat=fit.tau_hat, logC_hat=fit.logC_hat, stderr=fit.stderr,
                           window=list(fit.window), residual_rms=fit.residual_rms)
    elif kind == "scaling":
        fit = scaling_exponent(cols["t"], cols["value"], seed=int(cfg.get("seed", 0)))
        res.summary.update(slope=fit.slope, ci=list(fit.ci), noisy=fit.noisy)
    elif kind == "radius":
        fit = radius_fit(cols["k"], cols["amp"], float(cfg.get("tau", 1.0)))
        res.summary.update(c=fit.c, radius=fit.radius, n_modes=fit.n_modes)
    else:
        raise ValueError(f"unknown fit kind {kind!r}")
    res.checks["fit_completed"] = True
    return [res]


COMMANDS: Dict[str, Callable] = {
    "kolmogorov": cmd_kolmogorov,
    "ffp1": cmd_ffp1,
    "collision-suite": cmd_collision,
    "macro-residual": cmd_macro,
    "subelliptic-scan": cmd_subelliptic,
    "inequality-suite": cmd_inequalities,
    "fit": cmd_fit,
}


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def write_results_csv(path, results: Sequence[ex.ExperimentResult]) -> None:
    keys: List[str] = ["experiment"]
    for r in results:
        for row in r.rows:
            keys += [k for k in row if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, restval="")
        w.writeheader()
        for r in results:
            for row in r.rows:
                w.writerow({"experiment": r.name, **{k: (repr(v) if isinstance(v, float) else v)
                                                     for k, v in row.items()}})


def write_manifest(path, command: str, cfg: dict, results: Sequence[ex.ExperimentResult]) -> dict:
    man = {
        "command": command,
        "config": cfg,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python": platform.python_version(),
        "experiments": [ex.result_dict(r) for r in results],
        "passed": all(r.passed for r in results),
    }
    Path(path).write_text(json.dumps(_jsonable(man), indent=2, sort_keys=True))
    return man


def svg_lines(series: Sequence[Tuple[str, Sequence[float], Sequence[float]]], logx: bool = False,
              logy: bool = False, width: int = 640, height: int = 400, title: str = "") -> str:
    """Minimal SVG line plot (one polyline per series, shared axes)."""
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"]
    tx = np.log10 if logx else (lambda a: np.asarray(a, float))
    ty = np.log10 if logy else (lambda a: np.asarray(a, float))
    pts = []
    for name, x, y in series:
        x, y = np.asarray(x, float), np.asarray(y, float)
        ok = np.isfinite(x) & np.isfinite(y) & ((x > 0) if logx else True) & ((y > 0) if logy else True)
        pts.append((name, tx(x[ok]), ty(y[ok])))
    allx = np.concatenate([p[1] for p in pts]) if pts else np.array([0.0, 1.0])
    ally = np.concatenate([p[2] for p in pts]) if pts else np.array([0.0, 1.0])
    if allx.size == 0:
        allx, ally = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    x0, x1 = float(allx.min()), float(allx.max()) or 1.0
    y0, y1 = float(ally.min()), float(ally.max())
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    m = 50
    sx = lambda v: m + (v - x0) / (x1 - x0) * (width - 2 * m)
    sy = lambda v: height - m - (v - y0) / (y1 - y0) * (height - 2 * m)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>',
           f'<text x="{m}" y="{height - m + 16}" font-size="10">{x0:.3g}</text>',
           f'<text x="{width - m}" y="{height - m + 16}" font-size="10" text-anchor="end">{x1:.3g}</text>',
           f'<text x="{m - 4}" y="{height - m}" font-size="10" text-anchor="end">{y0:.3g}</text>',
           f'<text x="{m - 4}" y="{m + 4}" font-size="10" text-anchor="end">{y1:.3g}</text>']
    for i, (name, x, y) in enumerate(pts):
        c = palette[i % len(palette)]
        path = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{path}"/>')
        out.append(f'<text x="{width - m}" y="{m + 14 * (i + 1)}" font-size="11" fill="{c}" text-anchor="end">{name}</text>')
    out.append("</svg>")
    return "\n".join(out)


def _plot_series(results: Sequence[ex.ExperimentResult]):
    """Pick the first two numeric columns of each result's rows as (x, y)."""
    series = []
    for r in results:
        if not r.rows:
            continue
        num = [k for k, v in r.rows[0].items() if isinstance(v, (int, float)) and not isinstance(v, bool)]
        num = [k for k in num if k != "s"]
        if len(num) < 2:
            continue
        xs = [row.get(num[0], np.nan) for row in r.rows]
        ys = [row.get(num[1], np.nan) for row in r.rows]
        series.append((f"{r.name}: {num[1]}", xs, ys))
    return series


# ---------------------------------------------------------------------------
# main
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gevrey-lab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration entry (repeatable)")
    p.add_argument("--out", default="runs/latest", help="output directory")
    p.add_argument("--svg", action="store_true", help="also write plot.svg")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    cfg = read_config(args.config) if args.config else {}
    cfg.update(parse_overrides(args.overrides))
    out = Path(args.out)
    if args.command == "ffp1" and cfg.get("snapshots", False):
        cfg.setdefault("snapshot_dir", str(out / "snapshots"))
    try:
        results = COMMANDS[args.command](cfg)
    except (ValueError, KeyError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(out / "results.csv", results)
    man = write_manifest(out / "manifest.json", args.command, cfg, results)
    if args.svg:
        (out / "plot.svg").write_text(svg_lines(_plot_series(results), title=args.command))
    for r in results:
        print(r.line())
    log.info("wrote %s", out)
    return 0 if man["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())

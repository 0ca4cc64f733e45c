"""Command-line interface: ``collapsesim {run,ensemble,analyze,plot,presets}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
Outputs go to ``--out`` (default ``$COLLAPSESIM_OUT`` or ``./collapsesim-out``):

* ``events.jsonl``   one JSON object per event (ensembles add ``traj``)
* ``snapshots.csv``  long-format ``t,x,rho`` rows (``run`` only)
* ``stats.json``     aggregated ensemble statistics
* ``config.yaml``    the fully expanded configuration
* ``manifest.json``  config hash, seed, code version and the config itself
"""
from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import AnalysisError, born_report, waiting_time_report
from .config import RunConfig, config_from_dict, parse_config
from .errors import ConfigurationError, NumericalFailure
from .presets import preset_info, preset_names

log = logging.getLogger("collapsesim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
EVENT_SCHEMA = 1
OUT_ENV = "COLLAPSESIM_OUT"
CSV_MAX_COLUMNS = 1024


# --- files -------------------------------------------------------------------

def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "collapsesim-out"))


def _json_line(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=True)


def write_events(path, results, ensemble=False):
    """Write the event logs; ensemble lines carry the trajectory index."""
    with open(path, "w") as fh:
        for r in results:
            for e in r.event_dicts():
                if ensemble:
                    e = {"traj": r.index, **e}
                fh.write(_json_line(e) + "\n")


def read_events(path):
    """Event logs grouped per trajectory (a single list for plain runs)."""
    groups = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                e = json.loads(line)
                groups.setdefault(e.pop("traj", 0), []).append(e)
    return [groups[k] for k in sorted(groups)]


def write_snapshots(path, result, grid, stride=None):
    """Long-format ``t,x,rho`` CSV; ``stride`` thins the x axis of large grids."""
    if stride is None:
        stride = max(1, grid.points // CSV_MAX_COLUMNS)
    x = grid.coordinates[::stride]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "rho"])
        for s in result.snapshots:
            if s.rho is None:
                continue
            for xi, ri in zip(x, s.rho[::stride]):
                w.writerow([repr(float(s.t)), repr(float(xi)), repr(float(ri))])


def read_snapshots(path):
    """``(t, x, rho)`` with ``rho[i, j]`` at ``t[i]``, ``x[j]``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        raise ConfigurationError(f"{path}: no snapshot rows")
    t = np.unique(data[:, 0])
    x = np.unique(data[:, 1])
    rho = np.full((t.size, x.size), np.nan)
    rho[np.searchsorted(t, data[:, 0]), np.searchsorted(x, data[:, 1])] = data[:, 2]
    return t, x, rho


def manifest(cfg: RunConfig, command, files, n_traj=1, extra=None) -> dict:
    out = {
        "schema": 1,
        "event_schema": EVENT_SCHEMA,
        "command": command,
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "seed": int(cfg.seed),
        "n_traj": int(n_traj),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "files": sorted(files),
        "config": cfg.to_dict(),
    }
    out.update(extra or {})
    return out


def load_manifest(path):
    with open(path) as fh:
        m = json.load(fh)
    cfg = config_from_dict(m["config"])
    if cfg.config_hash() != m.get("config_hash"):
        log.warning("manifest config hash does not match its embedded config")
    return m, cfg


def emit_outputs(out_dir, cfg, command, results=(), stats=None, grid=None, snapshots=True, extra=None):
    """Write logs, snapshots, stats, config and manifest; returns the file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    ensemble = command == "ensemble"
    if results:
        write_events(out / "events.jsonl", results, ensemble=ensemble)
        files.append("events.jsonl")
        if snapshots and not ensemble and any(s.rho is not None for s in results[0].snapshots):
            write_snapshots(out / "snapshots.csv", results[0], grid or cfg.grid)
            files.append("snapshots.csv")
    if stats is not None:
        d = stats.to_dict()
        d.pop("logs", None)
        (out / "stats.json").write_text(json.dumps(d, indent=1, allow_nan=True) + "\n")
        files.append("stats.json")
    (out / "config.yaml").write_text(cfg.to_yaml())
    files.append("config.yaml")
    n = len(results) if results else 0
    m = manifest(cfg, command, files + ["manifest.json"], n_traj=n, extra=extra)
    (out / "manifest.json").write_text(json.dumps(m, indent=1, allow_nan=True) + "\n")
    return files + ["manifest.json"]


# --- plots -------------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_heatmap(t, x, rho, path, title="density"):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    mesh = ax.pcolormesh(x, t, rho, shading="nearest", cmap="viridis", rasterized=False)
    fig.colorbar(mesh, ax=ax, label=r"$\rho(x,t)$")
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_width(t, spread, path, lambda0=None, q10=None, q90=None):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(t, spread, label="spread")
    if q10 is not None and q90 is not None:
        ax.fill_between(t, q10, q90, alpha=0.3, label="10-90%")
    if lambda0 is not None:
        ax.axhline(lambda0, color="k", ls="--", lw=0.8, label=r"$\lambda_0$")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\Delta x$")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_waiting(intervals, gamma0, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    iv = np.asarray(intervals, dtype=float)
    ax.hist(iv, bins=min(60, max(5, iv.size // 20)), density=True, alpha=0.6, label="waiting times")
    if gamma0:
        s = np.linspace(0, iv.max() if iv.size else 5 / gamma0, 200)
        ax.plot(s, gamma0 * np.exp(-gamma0 * s), "k-", lw=1, label=r"$\gamma_0 e^{-\gamma_0 \tau}$")
    ax.set_xlabel(r"$\tau$")
    ax.set_ylabel("density")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def spreads_from_density(x, rho):
    """Per-row standard deviation of tabulated densities."""
    rho = np.nan_to_num(rho)
    w = rho / rho.sum(axis=1, keepdims=True)
    mean = w @ x
    return np.sqrt(np.clip(w @ x**2 - mean**2, 0.0, None))


# --- SI scales ---------------------------------------------------------------

def si_scales(constants, length_unit=1.0, mass_unit=None):
    """Report ``lambda0``, ``tau0`` and ``T0`` in SI units.

    Natural units are taken as ``hbar`` = 1, mass unit = ``mass_unit`` kg
    (electron mass by default), length unit = ``length_unit`` m.  Only
    reported scales are converted; simulations always run in natural units.
    """
    from scipy import constants as sc

    m_u = sc.m_e if mass_unit is None else mass_unit
    energy = sc.hbar**2 / (m_u * length_unit**2)
    time = sc.hbar / energy
    lam = constants.lambda0 * length_unit
    m_si = constants.mass * m_u
    # temperature for which lambda0 = 10 m at this mass
    t_bound = 2 * math.pi * sc.hbar**2 / (m_si * 10.0**2 * sc.k)
    return {
        "lambda0_m": lam,
        "tau0_s": constants.tau0 * time if constants.gamma0 > 0 else math.inf,
        "T0_K": constants.T0 * energy / sc.k,
        "T0_K_for_lambda0_10m": t_bound,
        "mass_kg": m_si,
    }


# --- commands ----------------------------------------------------------------

def _parse_value(text):
    import yaml

    return yaml.safe_load(text)


def _set_path(doc, dotted, value):
    keys = dotted.split(".")
    cur = doc
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
        if not isinstance(cur, dict):
            raise ConfigurationError(f"--set {dotted}: {k} is not a section")
    cur[keys[-1]] = value


def load_config(args) -> RunConfig:
    """Config from ``--manifest``, ``--config`` and/or ``--preset`` plus ``--set`` overrides."""
    import yaml

    if getattr(args, "manifest", None):
        doc = json.loads(Path(args.manifest).read_text())["config"]
    elif args.config:
        try:
            doc = yaml.safe_load(Path(args.config).read_text()) or {}
        except OSError as exc:
            raise ConfigurationError(f"cannot read {args.config}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{args.config}: expected a mapping")
    else:
        doc = {}
    if args.preset:
        doc = {**doc, "preset": args.preset}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        _set_path(doc, k.strip(), _parse_value(v))
    for flag, key in (("seed", "seed"), ("t_max", "t_max")):
        v = getattr(args, flag, None)
        if v is not None:
            doc.setdefault("run", {})[key] = v
    return config_from_dict(doc)


def _progress(k, n):
    if n >= 10 and k % max(1, n // 10) == 0:
        print(f"  {k}/{n} trajectories", file=sys.stderr)


def cmd_run(args):
    from dataclasses import replace

    from .trajectory import TrajectoryAborted, run_trajectory

    cfg = load_config(args)
    if cfg.snapshot_every is None:
        cfg = replace(cfg, snapshot_every=cfg.t_max / 100)
    cfg = replace(cfg, store_density=True)
    code = EXIT_OK
    try:
        result = run_trajectory(cfg)
    except TrajectoryAborted as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        result, code = exc.partial, EXIT_NUMERICAL
    files = emit_outputs(args.out, cfg, "run", [result], extra={"aborted": result.aborted})
    kinds = {}
    for e in result.events:
        kinds[e.kind] = kinds.get(e.kind, 0) + 1
    print(f"run: {len(result.events)} events {kinds}; lambda0 = {cfg.constants.lambda0:.6g}; "
          f"wrote {', '.join(files)} to {args.out}")
    if args.si:
        _print_si(cfg, args)
    return code


def _born_table(rep):
    lines = [f"{'branch':<8}{'count':>8}{'frequency':>12}{'95% CI':>22}"]
    for k in ("left", "right"):
        lo, hi = rep.intervals[k]
        lines.append(f"{k:<8}{rep.counts[k]:>8}{rep.frequencies[k]:>12.4f}   [{lo:.4f}, {hi:.4f}]")
    lines.append(f"total {rep.total}; max branch overlap {rep.max_overlap:.3g}")
    return "\n".join(lines)


def cmd_ensemble(args):
    from dataclasses import replace

    from .analysis import summarize
    from .trajectory import run_trajectories

    cfg = load_config(args)
    n = cfg.n_traj if args.n is None else args.n
    if n < 0:
        raise ConfigurationError(f"--n must be non-negative, got {n}")
    if n == 0:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        m = manifest(cfg, "ensemble", ["manifest.json"], n_traj=0)
        (out / "manifest.json").write_text(json.dumps(m, indent=1) + "\n")
        print(f"ensemble: no trajectories requested; wrote manifest.json to {out}")
        return EXIT_OK
    cfg = replace(cfg, n_traj=int(n), store_density=False)
    results = run_trajectories(cfg, n, workers=args.workers, progress=_progress, on_abort="keep")
    stats = summarize(results, cfg)
    files = emit_outputs(args.out, cfg, "ensemble", results, stats)
    print(f"ensemble: {n} trajectories, counts {stats.counts}, aborted {stats.aborted}")
    if stats.born is not None:
        print(_born_table(stats.born))
    if stats.waiting is not None:
        w = stats.waiting
        print(f"waiting times: n={w.n} KS={w.ks_statistic:.4f} p={w.p_value:.3g}")
    print(f"wrote {', '.join(files)} to {args.out}")
    if args.si:
        _print_si(cfg, args)
    return EXIT_NUMERICAL if stats.aborted else EXIT_OK


def _input_paths(path):
    p = Path(path)
    if p.is_dir():
        return p / "events.jsonl", p / "manifest.json"
    return p, p.with_name("manifest.json")


def cmd_analyze(args):
    events, man = _input_paths(args.input)
    if not events.exists():
        raise ConfigurationError(f"no event log at {events}")
    logs = read_events(events)
    gamma0, t_max = args.gamma0, args.t_max
    if man.exists() and (gamma0 is None or t_max is None):
        cfg = config_from_dict(json.loads(man.read_text())["config"])
        gamma0 = cfg.constants.gamma0 if gamma0 is None else gamma0
        t_max = cfg.t_max if t_max is None else t_max
    report = {"n_traj": len(logs), "events": sum(len(l) for l in logs)}
    try:
        rep = born_report(logs, cut=args.cut)
        report["born"] = {"counts": rep.counts, "frequencies": rep.frequencies,
                          "intervals": {k: list(v) for k, v in rep.intervals.items()},
                          "max_overlap": rep.max_overlap}
        print(_born_table(rep))
    except AnalysisError as exc:
        print(f"born: {exc}")
    if gamma0 and t_max:
        try:
            w = waiting_time_report(logs, gamma0, t_max)
            report["waiting"] = {"n": w.n, "ks_statistic": w.ks_statistic, "p_value": w.p_value,
                                 "mean": float(w.intervals.mean()), "gamma0": gamma0}
            print(f"waiting times: n={w.n} mean={w.intervals.mean():.4g} (1/gamma0={1 / gamma0:.4g}) "
                  f"KS={w.ks_statistic:.4f} p={w.p_value:.3g}")
        except AnalysisError as exc:
            print(f"waiting times: {exc}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=1, allow_nan=True) + "\n")
    print(f"wrote report.json to {out}")
    return EXIT_OK


def cmd_plot(args):
    src = Path(args.input)
    if not src.exists():
        raise ConfigurationError(f"no such input {src}")
    kind = args.kind
    if kind is None:
        kind = {".csv": "heatmap", ".jsonl": "waiting", ".json": "width"}.get(src.suffix)
        if kind is None:
            raise ConfigurationError(f"cannot infer plot kind from {src.name}; pass --kind")
    output = Path(args.output) if args.output else src.with_name(f"{kind}.svg")
    lam = None
    man = src.with_name("manifest.json")
    cfg = None
    if man.exists():
        cfg = config_from_dict(json.loads(man.read_text())["config"])
        lam = cfg.constants.lambda0
    if kind == "heatmap":
        t, x, rho = read_snapshots(src)
        plot_heatmap(t, x, rho, output)
    elif kind == "width":
        if src.suffix == ".csv":
            t, x, rho = read_snapshots(src)
            plot_width(t, spreads_from_density(x, rho), output, lam)
        else:
            w = json.loads(src.read_text()).get("width")
            if not w:
                raise ConfigurationError(f"{src} has no width curve")
            plot_width(w["t"], w["mean"], output, lam, w["q10"], w["q90"])
    elif kind == "waiting":
        logs = read_events(src)
        gamma0 = args.gamma0 or (cfg.constants.gamma0 if cfg else None)
        t_max = cfg.t_max if cfg else max((e["t"] for l in logs for e in l), default=0.0)
        if not gamma0:
            raise ConfigurationError("waiting-time plot needs --gamma0 or a manifest")
        rep = waiting_time_report(logs, gamma0, t_max)
        plot_waiting(rep.intervals, gamma0, output)
    else:
        raise ConfigurationError(f"unknown plot kind {kind!r}")
    print(f"wrote {output}")
    return EXIT_OK


def cmd_presets(args):
    for name in preset_names():
        info = preset_info(name)
        cfg = config_from_dict({"preset": name})
        line = (f"{name:<18} {info['description']}\n{'':<18} anchor: {info['anchor']}\n"
                f"{'':<18} lambda0={cfg.constants.lambda0:.4g} T0={cfg.constants.T0:.4g} "
                f"gamma0={cfg.constants.gamma0:g} ratio={cfg.constants.regime_ratio:.3g}")
        print(line)
        if args.si:
            _print_si(cfg, args, indent=19)
    return EXIT_OK


def _print_si(cfg, args, indent=0):
    s = si_scales(cfg.constants, args.length_unit)
    pad = " " * indent
    print(f"{pad}SI (mass unit m_e, length unit {args.length_unit:g} m): lambda0={s['lambda0_m']:.3e} m "
          f"tau0={s['tau0_s']:.3e} s T0={s['T0_K']:.3e} K; "
          f"lambda0 > 10 m needs T0 < {s['T0_K_for_lambda0_10m']:.3e} K")


def build_parser():
    p = argparse.ArgumentParser(prog="collapsesim", description="Stochastic collapse simulations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_run=True):
        sp.add_argument("--out", type=Path, default=default_out_dir(),
                        help=f"output directory (default ${OUT_ENV} or ./collapsesim-out)")
        sp.add_argument("--si", action="store_true", help="also report scales in SI units")
        sp.add_argument("--length-unit", type=float, default=1.0,
                        help="metres per natural length unit for --si (default 1)")
        if with_run:
            sp.add_argument("--config", help="YAML configuration file")
            sp.add_argument("--preset", choices=preset_names())
            sp.add_argument("--manifest", help="replay the configuration stored in a manifest")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                            help="override a config entry, e.g. constants.gamma0=2")
            sp.add_argument("--seed", type=int)
            sp.add_argument("--t-max", type=float, dest="t_max")

    sp = sub.add_parser("run", help="one trajectory: event log, snapshots, manifest")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("ensemble", help="many trajectories: event log, aggregated stats")
    common(sp)
    sp.add_argument("--n", type=int, help="number of trajectories (default run.n_traj)")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_ensemble)

    sp = sub.add_parser("analyze", help="Born and waiting-time reports from an event log")
    sp.add_argument("--input", required=True, help="output directory or events.jsonl")
    sp.add_argument("--out", type=Path, default=default_out_dir())
    sp.add_argument("--gamma0", type=float)
    sp.add_argument("--t-max", type=float, dest="t_max")
    sp.add_argument("--cut", type=float, default=0.0)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("plot", help="SVG plots from snapshots, events or stats")
    sp.add_argument("--input", required=True)
    sp.add_argument("--kind", choices=["heatmap", "width", "waiting"])
    sp.add_argument("--output")
    sp.add_argument("--gamma0", type=float)
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("presets", help="list experiment presets")
    sp.add_argument("--si", action="store_true")
    sp.add_argument("--length-unit", type=float, default=1.0)
    sp.set_defaults(func=cmd_presets)
    return p


def run_command(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main(argv=None):
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()

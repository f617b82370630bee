"""Command line entry point: ``shellmc run | list-presets | dump-importance``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from .adjoint import build_importance, write_debug_csv
from .config import ProblemConfig, parse_assignments, parse_config
from .errors import ConfigError, ShellMCError
from .presets import PRESETS, PUBLISHED_FLUX, SOFT_BAND, oracle_flux
from .stats import figure_of_merit

log = logging.getLogger("shellmc")

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

SUMMARY_COLUMNS = ("n_histories", "flux", "variance", "std_dev", "time1_s", "time2_s", "fom1", "fom2", "p_reach")
PROFILE_COLUMNS = ("r_center", "psi", "psi_std", "n_crossings")


def run_config(cfg: ProblemConfig, workers=1):
    if cfg.importance:
        from .biased import run_biased
        return run_biased(cfg, workers=workers)
    from .transport import run_analog
    return run_analog(cfg, workers=workers)


def _fom(mean_variance, seconds):
    # a run where every history scored the same value has no defined FOM
    return figure_of_merit(mean_variance, seconds) if mean_variance > 0.0 else math.inf


def summarize(res):
    time1 = res.wall_time
    time2 = max(res.wall_time - res.setup_time, 1e-12)
    return {
        "n_histories": res.n_histories,
        "flux": res.flux_mean,
        "variance": res.mean_variance,
        "std_dev": res.std_dev,
        "sample_variance": res.sample_variance,
        "time1_s": time1,
        "time2_s": time2,
        "fom1": _fom(res.mean_variance, time1),
        "fom2": _fom(res.mean_variance, time2),
        "p_reach": res.reach_fraction,
        "engine": res.engine,
        "status_counts": res.status_counts,
    }


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17e}"


def write_summary_csv(path, row):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])


def write_profile_csv(path, res):
    centers = 0.5 * (res.profile_edges[1:] + res.profile_edges[:-1])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PROFILE_COLUMNS)
        for r, p, s, n in zip(centers, res.shell_flux, res.shell_flux_std, res.shell_crossings):
            w.writerow([_fmt(r), _fmt(p), _fmt(s), _fmt(int(n))])


def _check(name, passed, value, threshold, level="error"):
    return {"name": name, "passed": bool(passed), "value": value, "threshold": threshold, "level": level}


def profile_check(res, cfg, min_crossings=100, n_sigma=3.0):
    from .oracles import uncollided_cell_flux
    ref = uncollided_cell_flux(res.profile_edges, cfg.r_source, cfg.kappa_t)
    mask = res.shell_crossings >= min_crossings
    z = np.abs(res.shell_flux - ref) / np.where(res.shell_flux_std > 0, res.shell_flux_std, np.inf)
    worst = float(z[mask].max()) if mask.any() else 0.0
    return _check("profile_vs_uncollided_oracle", worst <= n_sigma, worst, n_sigma), ref


def evaluate(preset, cfg, main, companion=None, companion_cfg=None):
    checks = []
    deltas = {}
    if preset is None:
        return checks, deltas
    if preset.oracle in ("streaming", "absorbing"):
        ref = oracle_flux(preset.oracle, cfg)
        delta = main.flux_mean - ref.value
        deltas["oracle_flux"] = ref.value
        deltas["flux_minus_oracle"] = delta
        checks.append(_check("flux_vs_oracle_3sigma", abs(delta) <= 3.0 * main.std_dev, abs(delta), 3.0 * main.std_dev))
    if preset.oracle == "profile" and cfg.kappa_s == 0.0 and cfg.source == "shell":
        chk, ref = profile_check(main, cfg)
        checks.append(chk)
    if companion is not None:
        gap = abs(main.flux_mean - companion.flux_mean)
        band = 3.0 * math.sqrt(main.mean_variance + companion.mean_variance)
        checks.append(_check("biased_vs_analog_mean", gap <= band, gap, band))
        ratio = companion.mean_variance / main.mean_variance if main.mean_variance > 0 else math.inf
        checks.append(_check("variance_ratio", ratio >= preset.min_variance_ratio, ratio, preset.min_variance_ratio))
    if cfg.mode == "stationary" and cfg.source == "outer_boundary" and cfg.kappa_s in PUBLISHED_FLUX:
        ref = PUBLISHED_FLUX[cfg.kappa_s]
        rel = abs(main.flux_mean - ref) / ref
        checks.append(_check("published_flux_soft_band", rel <= SOFT_BAND, rel, SOFT_BAND, level="warning"))
    return checks, deltas


def _resolve(target, overrides, seed):
    """Return ``(preset or None, config, extras)`` for a preset name or config path."""
    pairs = list(overrides)
    if seed is not None:
        pairs.append(("seed", str(seed)))
    if target in PRESETS:
        preset = PRESETS[target]
        cfg, extras = parse_assignments(pairs, preset.config)
        return preset, cfg, extras, pairs
    if os.path.isfile(target):
        with open(target) as fh:
            base, extras = parse_config(fh.read(), with_extras=True)
        cfg, more = parse_assignments(pairs, base)
        extras.update(more)
        return None, cfg, extras, pairs
    raise ConfigError(f"unknown preset or config file {target!r}; presets: {', '.join(PRESETS)}")


def run_preset(target, overrides=(), seed=None, workers=None, out_dir=None):
    """Run a preset or config file, write result files, return ``(exit_code, summary)``."""
    preset, cfg, extras, pairs = _resolve(target, overrides, seed)
    workers = workers or extras.get("workers", 1)
    out_dir = out_dir or extras.get("output_dir") or os.path.join("results", preset.name if preset else "run")
    os.makedirs(out_dir, exist_ok=True)

    log.info("running %s (%s engine)", target, "biased" if cfg.importance else "analog")
    main = run_config(cfg, workers)
    summary = {"target": target, "config": cfg.as_dict(), "result": summarize(main)}
    write_summary_csv(os.path.join(out_dir, "summary.csv"), summary["result"])
    if main.shell_flux is not None:
        write_profile_csv(os.path.join(out_dir, "profile.csv"), main)

    companion = companion_cfg = None
    if preset is not None and preset.companion:
        base = PRESETS[preset.companion].config
        companion_cfg, _ = parse_assignments([p for p in pairs if p[0].strip() not in ("importance", "n_mu")], base)
        log.info("running companion %s", preset.companion)
        companion = run_config(companion_cfg, workers)
        summary["companion"] = {"target": preset.companion, "result": summarize(companion)}
        write_summary_csv(os.path.join(out_dir, f"summary_{preset.companion}.csv"), summary["companion"]["result"])

    checks, deltas = evaluate(preset, cfg, main, companion, companion_cfg)
    summary["checks"] = checks
    summary["oracle"] = deltas
    failures = [c["name"] for c in checks if c["level"] == "error" and not c["passed"]]
    summary["failures"] = failures
    summary["warnings"] = [c["name"] for c in checks if c["level"] == "warning" and not c["passed"]]
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, default=_json_default)
    return (EXIT_FAIL if failures else EXIT_PASS), summary


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _parse_set(values):
    pairs = []
    for item in values or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        pairs.append((k, v))
    return pairs


def build_parser():
    p = argparse.ArgumentParser(prog="shellmc", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a preset or a key=value config file")
    run.add_argument("target")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", default=[])
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out")
    sub.add_parser("list-presets", help="show available presets")
    dump = sub.add_parser("dump-importance", help="write phi.csv and importance.csv")
    dump.add_argument("config")
    dump.add_argument("--out", default="importance_debug")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "list-presets":
            for name, preset in PRESETS.items():
                print(f"{name:18s} {preset.description}")
            return EXIT_PASS
        if args.command == "dump-importance":
            _, cfg, _, _ = _resolve(args.config, (), None)
            sol, table = build_importance(cfg.alpha, cfg.r1, cfg.n_r, cfg.n_mu, cfg.kappa_s, cfg.kappa_t,
                                          gl_order=cfg.gl_order)
            for path in write_debug_csv(sol, table, args.out):
                print(path)
            return EXIT_PASS
        if args.workers is not None and args.workers < 1:
            raise ConfigError("workers: must be at least 1")
        code, summary = run_preset(args.target, _parse_set(args.set), args.seed, args.workers, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ShellMCError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    r = summary["result"]
    print(f"flux {r['flux']:.8e}  std {r['std_dev']:.3e}  p_reach {r['p_reach']:.4f}  time {r['time1_s']:.2f}s")
    if "companion" in summary:
        c = summary["companion"]["result"]
        print(f"companion flux {c['flux']:.8e}  std {c['std_dev']:.3e}  p_reach {c['p_reach']:.4f}")
    for chk in summary["checks"]:
        tag = "PASS" if chk["passed"] else ("WARN" if chk["level"] == "warning" else "FAIL")
        print(f"{tag} {chk['name']}: {chk['value']:.4g} (threshold {chk['threshold']:.4g})")
    if summary["failures"]:
        print(json.dumps({"failures": summary["failures"]}), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

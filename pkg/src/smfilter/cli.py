"""Benchmark command line: run filter comparisons, remainder-bound demos, timing sweeps.

Subcommands
-----------
run         execute trials for the requested filters, write per-filter curve
            CSVs plus a JSON summary
bound-demo  dump remainder samples and the SDP/interval bounding ellipsoids
            as plot-ready CSV
timing      sweep boundary-sample and particle counts, write mean per-step
            wall times

Every command writes a manifest first, then results, so a crash leaves a
diagnosable partial run.  Curve CSV contents are deterministic given the
config and seed except for the wall-time column.  The output directory can
also be set through the SMFILTER_OUT environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .conic import ClarabelBackend
from .dynamics import RangeBearingMap, RemainderEval
from .ellipsoids import Ellipsoid, sample_unit_ball
from .errors import ConfigError, SmFilterError
from .filtering import run_filter
from .particles import confidence_band, pf_estimate, pf_init, pf_reweight, pf_step
from .remainder import (
    SamplePlan,
    bound_remainder,
    bound_remainder_interval,
    check_boundary_applicable,
)
from .scenario import (
    ScenarioConfig,
    TrialRecord,
    assumed_hypothesis,
    error_curves,
    load_scenario,
    simulate_trial,
    trial_rng,
    with_overrides,
)

FILTER_TAGS = ("mcsmf", "pf-t", "pf-g", "pf-u")

#: Membership slack used when scoring containment of the true state.
CONTAINMENT_SLACK = 1e-6

#: Particle-filter bands are scored at this many standard deviations.
BAND_SIGMAS = 3.0


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# -- filter runners ----------------------------------------------------------


def apply_mcsmf(cfg: ScenarioConfig, record: TrialRecord, trial: int, backend=None) -> None:
    """Run the set-membership filter on one trial and attach its results."""
    backend = backend or ClarabelBackend()
    model = cfg.build_model()
    plan = dataclasses.replace(cfg.plan, seed=cfg.plan.seed + 100_003 * trial)
    states = run_filter(cfg.init_ellipsoid(), record.measurements, model, cfg.Q, cfg.R,
                        plan, backend, cfg.solver, cfg.inflation)
    K = record.horizon
    est = np.stack([s.estimate.center for s in states])
    contained = np.array([s.estimate.contains(record.truth[k], CONTAINMENT_SLACK)
                          for k, s in enumerate(states)])
    traces = np.array([float(np.trace(s.estimate.shape)) for s in states])
    times = np.array([s.diagnostics.wall_time if s.diagnostics else 0.0 for s in states])
    assert len(states) == K + 1
    record.attach("mcsmf", est, contained, traces, times)


def apply_pf(cfg: ScenarioConfig, record: TrialRecord, trial: int, tag: str) -> None:
    """Run one bootstrap particle-filter variant on a trial."""
    model = cfg.build_model()
    rng = trial_rng(cfg.seed, tag, trial)
    hyp_w = assumed_hypothesis(cfg.process_noise, cfg.process_bound(), tag)
    hyp_v = assumed_hypothesis(cfg.meas_noise, cfg.meas_bound(), tag)
    K = record.horizon
    n = model.state_dim

    est = np.empty((K + 1, n))
    contained = np.empty(K + 1, dtype=bool)
    traces = np.empty(K + 1)
    times = np.zeros(K + 1)

    cloud = pf_init(cfg.init_ellipsoid(), cfg.particles, rng)
    cloud = pf_reweight(cloud, record.measurements[0], model, hyp_v, rng)
    est[0], cov = pf_estimate(cloud)
    traces[0] = float(np.trace(cov))
    contained[0] = _in_band(cloud, record.truth[0])
    for k in range(1, K + 1):
        t0 = time.perf_counter()
        cloud = pf_step(cloud, record.measurements[k], model, hyp_w, hyp_v, rng)
        times[k] = time.perf_counter() - t0
        est[k], cov = pf_estimate(cloud)
        traces[k] = float(np.trace(cov))
        contained[k] = _in_band(cloud, record.truth[k])
    record.attach(tag, est, contained, traces, times)


def _in_band(cloud, truth: np.ndarray) -> bool:
    lo, hi = confidence_band(cloud, BAND_SIGMAS)
    return bool(np.all(truth >= lo - 1e-12) and np.all(truth <= hi + 1e-12))


def run_benchmark(cfg: ScenarioConfig, filters: list[str], backend=None,
                  progress=None) -> list[TrialRecord]:
    """Simulate all trials and run every requested filter on each."""
    backend = backend or ClarabelBackend()
    records = []
    for trial in range(cfg.trials):
        record = simulate_trial(cfg, trial)
        for tag in filters:
            try:
                if tag == "mcsmf":
                    apply_mcsmf(cfg, record, trial, backend)
                else:
                    apply_pf(cfg, record, trial, tag)
            except SmFilterError as err:
                raise type(err)(f"trial {trial}, filter {tag}: {err}") from err
        records.append(record)
        if progress:
            progress(trial + 1, cfg.trials)
    return records


# -- aggregation and output --------------------------------------------------


def aggregate_curves(records: list[TrialRecord], tag: str) -> dict[str, np.ndarray]:
    err = error_curves(records, tag)
    cont = np.mean([r.containment[tag] for r in records], axis=0)
    trace = np.mean([r.traces[tag] for r in records], axis=0)
    step_t = np.mean([r.step_times[tag] for r in records], axis=0)
    return {"error": err, "containment_rate": cont, "mean_trace": trace,
            "mean_step_seconds": step_t}


def write_curves_csv(path: Path, curves: dict[str, np.ndarray]) -> None:
    err = curves["error"]
    n = err.shape[1]
    header = ["k"] + [f"err_{i + 1}" for i in range(n)]
    header += ["containment_rate", "mean_trace", "mean_step_seconds"]
    lines = [",".join(header)]
    for k in range(err.shape[0]):
        row = [str(k)] + [_fmt(v) for v in err[k]]
        row += [_fmt(curves["containment_rate"][k]), _fmt(curves["mean_trace"][k]),
                _fmt(curves["mean_step_seconds"][k])]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def summarize(records: list[TrialRecord], tag: str) -> dict:
    curves = aggregate_curves(records, tag)
    err = curves["error"]
    pos = err[:, : min(2, err.shape[1])]
    total = sum(r.containment[tag].size for r in records)
    inside = sum(int(r.containment[tag].sum()) for r in records)
    return {
        "mean_position_error": float(np.mean(pos)),
        "mean_error_by_component": [float(v) for v in err.mean(axis=0)],
        "containment_rate": inside / total,
        "containment_violations": total - inside,
        "pairs": total,
        "mean_step_seconds": float(np.mean(curves["mean_step_seconds"])),
    }


def write_manifest(out: Path, cfg_path: Path, cfg: ScenarioConfig, command: str,
                   extra: dict | None = None) -> None:
    body = cfg_path.read_bytes()
    manifest = {
        "command": command,
        "config_path": str(cfg_path),
        "config_sha256": hashlib.sha256(body).hexdigest(),
        "name": cfg.name if cfg is not None else None,
        "resolved": None if cfg is None else {
            "trials": cfg.trials, "horizon": cfg.horizon, "seed": cfg.seed,
            "samples": cfg.plan.count, "sample_mode": cfg.plan.mode,
            "particles": cfg.particles, "inflation": cfg.inflation,
        },
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _outdir(args_out: str | None, default_name: str) -> Path:
    base = args_out or os.environ.get("SMFILTER_OUT")
    out = Path(base) if base else Path("smfilter-out") / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands -------------------------------------------------------------


def _parse_filters(text: str) -> list[str]:
    tags = [t.strip() for t in text.split(",") if t.strip()]
    bad = [t for t in tags if t not in FILTER_TAGS]
    if bad or not tags:
        raise ConfigError(
            f"unknown filter tag(s) {bad or [text]}; valid tags: {', '.join(FILTER_TAGS)}")
    return tags


def cmd_run(args) -> int:
    cfg_path = Path(args.config)
    cfg = load_scenario(cfg_path)
    cfg = with_overrides(cfg, trials=args.trials, seed=args.seed,
                         samples=args.samples, particles=args.particles)
    filters = _parse_filters(args.filters)
    out = _outdir(args.out, cfg.name)
    write_manifest(out, cfg_path, cfg, "run", {"filters": filters})

    def progress(done, total):
        print(f"trial {done}/{total}", file=sys.stderr)

    records = run_benchmark(cfg, filters, progress=progress if args.progress else None)
    summary = {"config": cfg.name, "trials": cfg.trials, "horizon": cfg.horizon,
               "seed": cfg.seed, "filters": {}}
    for tag in filters:
        write_curves_csv(out / f"{tag}_curves.csv", aggregate_curves(records, tag))
        summary["filters"][tag] = summarize(records, tag)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}")
    return 0


def _demo_evaluator(section: dict) -> tuple[RemainderEval, dict]:
    kind = section.get("map", "range_bearing")
    if section.get("center") is None or section.get("shape") is None:
        raise ConfigError("bound_demo.center and bound_demo.shape are required")
    center = np.asarray(section["center"], dtype=float)
    shape = np.asarray(section["shape"], dtype=float)
    E = np.linalg.cholesky(0.5 * (shape + shape.T))
    info: dict = {"map": kind}
    if kind == "range_bearing":
        sensor = section.get("sensor")
        if sensor is None:
            raise ConfigError("bound_demo.sensor is required for the range_bearing map")
        rb = RangeBearingMap(float(sensor[0]), float(sensor[1]))
        applicability = check_boundary_applicable(center, E, rb.a, rb.b)
        info["applicability"] = {"holds": applicability.holds, "reason": applicability.reason}
        ev = RemainderEval(center, E, "measurement", rb.h, rb.jac(center), 2,
                           rb_map=rb, func_many=rb.h)
    elif kind == "linear":
        M = np.asarray(section.get("matrix", np.eye(center.size)), dtype=float)
        ev = RemainderEval(center, E, "process", lambda x: M @ x, M, center.size, linear=True)
    else:
        raise ConfigError(f"bound_demo.map must be range_bearing or linear, got {kind!r}")
    return ev, info


def cmd_bound_demo(args) -> int:
    cfg_path = Path(args.config)
    if not cfg_path.exists():
        raise ConfigError(f"config file not found: {cfg_path}")
    data = yaml.safe_load(cfg_path.read_text())
    if not isinstance(data, dict) or "bound_demo" not in data:
        raise ConfigError("config has no bound_demo section")
    section = data["bound_demo"]
    ev, info = _demo_evaluator(section)

    n_boundary = int(section.get("boundary_samples", 50))
    n_validate = int(section.get("validation_samples", 10_000))
    seed = int(section.get("seed", 0))
    backend = ClarabelBackend()

    plan = SamplePlan(mode="boundary", count=n_boundary, deterministic=ev.in_dim == 2, seed=seed)
    boundary_u = plan.draw(ev.in_dim)
    boundary_g = ev.values(boundary_u)
    interior_u = sample_unit_ball(ev.in_dim, n_validate, seed + 1)
    interior_g = ev.values(interior_u)

    sdp_ell = bound_remainder(ev, plan, backend)
    interval_ell = bound_remainder_interval(ev)

    out = _outdir(args.out, f"bound-demo-{cfg_path.stem}")
    write_manifest(out, cfg_path, None, "bound-demo", {"demo": info})

    lines = ["kind," + ",".join(f"u{i + 1}" for i in range(ev.in_dim))
             + "," + ",".join(f"g{i + 1}" for i in range(ev.out_dim))]
    for label, us, gs in (("boundary", boundary_u, boundary_g), ("interior", interior_u, interior_g)):
        for u, g in zip(us, gs):
            lines.append(label + "," + ",".join(_fmt(v) for v in u)
                         + "," + ",".join(_fmt(v) for v in g))
    (out / "bound_demo_points.csv").write_text("\n".join(lines) + "\n")

    lines = ["kind,g1,g2"]
    for label, ell in (("sdp", sdp_ell), ("interval", interval_ell)):
        if ell.dim == 2:
            for p in ell.boundary_points(200):
                lines.append(f"{label},{_fmt(p[0])},{_fmt(p[1])}")
    (out / "bound_demo_ellipses.csv").write_text("\n".join(lines) + "\n")

    inside = float(np.mean(sdp_ell.quadratic_form_many(interior_g) <= 1.0 + CONTAINMENT_SLACK))
    summary = {
        "demo": info,
        "boundary_samples": n_boundary,
        "validation_samples": n_validate,
        "sdp_trace": float(np.trace(sdp_ell.shape)),
        "interval_trace": float(np.trace(interval_ell.shape)),
        "trace_ratio_interval_over_sdp": float(np.trace(interval_ell.shape) / np.trace(sdp_ell.shape)),
        "interior_containment": inside,
        "sdp_center": [float(v) for v in sdp_ell.center],
        "sdp_shape": [[float(v) for v in row] for row in sdp_ell.shape],
        "interval_center": [float(v) for v in interval_ell.center],
        "interval_shape": [[float(v) for v in row] for row in interval_ell.shape],
    }
    (out / "bound_demo_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}")
    return 0


def _parse_sweep(text: str | None, flag: str) -> list[int]:
    if text is None or text.strip() == "":
        return []
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise ConfigError(f"{flag} must be a comma-separated list of integers") from err
    if not values or any(v < 1 for v in values):
        raise ConfigError(f"{flag} must contain positive integers")
    return values


def cmd_timing(args) -> int:
    cfg_path = Path(args.config)
    cfg = load_scenario(cfg_path)
    cfg = with_overrides(cfg, seed=args.seed)
    samples = _parse_sweep(args.samples, "--samples")
    particles = _parse_sweep(args.particles, "--particles")
    if not samples and not particles:
        raise ConfigError("timing needs a nonempty --samples or --particles sweep")

    out = _outdir(args.out, f"timing-{cfg.name}")
    write_manifest(out, cfg_path, cfg, "timing", {"samples": samples, "particles": particles})

    rows: list[tuple[str, int, float]] = []
    for count in samples:
        sweep_cfg = with_overrides(cfg, trials=1, samples=count)
        record = simulate_trial(sweep_cfg, 0)
        apply_mcsmf(sweep_cfg, record, 0)
        rows.append(("mcsmf", count, float(np.mean(record.step_times["mcsmf"][1:]))))
    for count in particles:
        sweep_cfg = with_overrides(cfg, trials=1, particles=count)
        for tag in ("pf-t", "pf-g", "pf-u"):
            record = simulate_trial(sweep_cfg, 0)
            apply_pf(sweep_cfg, record, 0, tag)
            rows.append((tag, count, float(np.mean(record.step_times[tag][1:]))))

    lines = ["method,parameter,mean_step_seconds"]
    lines += [f"{m},{p},{_fmt(t)}" for m, p, t in rows]
    (out / "timing.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out}")
    return 0


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smfilter",
                                     description="Set-membership filter benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run filters over Monte Carlo trials")
    run.add_argument("--config", required=True)
    run.add_argument("--filters", default="mcsmf", help="comma-separated filter tags")
    run.add_argument("--trials", type=int, default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--samples", type=int, default=None, help="boundary-sample override")
    run.add_argument("--particles", type=int, default=None, help="particle-count override")
    run.add_argument("--out", default=None)
    run.add_argument("--progress", action="store_true")
    run.set_defaults(func=cmd_run)

    demo = sub.add_parser("bound-demo", help="export remainder bound comparison data")
    demo.add_argument("--config", required=True)
    demo.add_argument("--out", default=None)
    demo.set_defaults(func=cmd_bound_demo)

    timing = sub.add_parser("timing", help="sweep sample/particle counts, record step times")
    timing.add_argument("--config", required=True)
    timing.add_argument("--samples", default=None, help="comma-separated boundary-sample counts")
    timing.add_argument("--particles", default=None, help="comma-separated particle counts")
    timing.add_argument("--seed", type=int, default=None)
    timing.add_argument("--out", default=None)
    timing.set_defaults(func=cmd_timing)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except SmFilterError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

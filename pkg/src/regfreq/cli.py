"""Command-line entry point: ``regfreq <subcommand> [--config FILE] [--out DIR] ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure,
3 a ``--verify`` audit found a violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path


from . import casestudy as cs
from .constraints import (
    ConstraintError,
    SecurityConstraintSet,
    SecurityParams,
    build,
    build_uniform,
    fit_model,
)
from .dynamics import OperatingPoint, SimParams, SimulationError, analyze, simulate, write_trace_csv
from .regression import RegressionError, RegressionModel
from .sampler import BoundaryError, SampleSet, SweepSpec, run_sweep
from .scheduler import (
    SchedulerError,
    SchedulerOptions,
    TreeSpec,
    load_fleet_csv,
    load_profiles_csv,
    report,
    rolling_horizon,
    write_decisions_csv,
)

log = logging.getLogger("regfreq")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_AUDIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class AuditFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise cs.ConfigError(f"config section '{name}' must be a table")
    return sec


def _build(cls, d: dict, where: str):
    """Instantiate a dataclass from a config table, naming unknown or bad keys."""
    fields = set(cls.__dataclass_fields__)
    extra = sorted(set(d) - fields)
    if extra:
        raise cs.ConfigError(f"unknown key(s) in '{where}': {extra}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise cs.ConfigError(f"'{where}': {exc}") from exc
    except ValueError as exc:
        raise cs.ConfigError(f"'{where}': {exc}") from exc


def _path(base: Path | None, value, key: str) -> Path:
    if value is None:
        raise cs.ConfigError(f"missing config key '{key}'")
    p = Path(value)
    if not p.is_absolute() and base is not None:
        p = base / p
    if not p.exists():
        raise FileNotFoundError(f"{key}: file not found: {p}")
    return p


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


# -- subcommands --------------------------------------------------------------------

def cmd_simulate(args, cfg, base, out: Path) -> int:
    sec = _section(cfg, "simulate")
    point = _build(OperatingPoint, dict(sec.get("point", {})), "simulate.point")
    sim = _build(SimParams, dict(sec.get("sim", {})), "simulate.sim")
    trace = simulate(point, sim)
    stats = analyze(trace, point)
    write_trace_csv(trace, out / "trace.csv")
    _write_json(out / "stats.json", {"point": asdict(point), "sim": asdict(sim),
                                     "stats": asdict(stats)})
    print(f"max RoCoF (1, 2) = ({stats.max_rocof_1:.4f}, {stats.max_rocof_2:.4f}) Hz/s; "
          f"nadir (1, 2) = ({stats.nadir_1:.4f}, {stats.nadir_2:.4f}) Hz")
    return EXIT_OK


def cmd_sweep(args, cfg, base, out: Path) -> int:
    sec = dict(_section(cfg, "sweep"))
    if not sec:
        raise cs.ConfigError("missing config section 'sweep'")
    workers = int(sec.pop("workers", 1))
    sim = _build(SimParams, dict(sec.pop("sim", {})), "sweep.sim")
    spec = _build(SweepSpec, sec, "sweep")
    samples = run_sweep(spec, sim, workers=workers)
    samples.write(out / "samples.csv", out / "samples.json")
    print(f"{len(samples.points)} boundary points, {len(samples)} samples, "
          f"{len(samples.failures)} failures -> {out / 'samples.csv'}")
    return EXIT_OK


def cmd_fit(args, cfg, base, out: Path) -> int:
    sec = _section(cfg, "fit")
    src = args.inputs[0] if args.inputs else sec.get("samples")
    csv_path = _path(None if args.inputs else base, src, "fit.samples")
    side = sec.get("sidecar")
    samples = SampleSet.read(csv_path, _path(base, side, "fit.sidecar") if side else None)
    regions = sec.get("regions", [1, 2])
    if not isinstance(regions, list):
        regions = [regions]
    written = []
    for reg in regions:
        region = None if reg in (None, 0, "coi") else int(reg)
        model = fit_model(samples, region, sec.get("kind"))
        name = f"model_{model.kind}_{'coi' if region is None else f'region{region}'}.json"
        model.save(out / name)
        written.append(name)
        st = model.training_stats
        print(f"{name}: mean overestimation {st['mean_overestimation']:.4g}, "
              f"min residual {st['min_overestimation']:.3g}")
    return EXIT_OK


def _params_from(sec: dict, where: str) -> SecurityParams:
    keys = set(SecurityParams.__dataclass_fields__)
    return _build(SecurityParams, {k: v for k, v in sec.items() if k in keys}, where)


def cmd_pack(args, cfg, base, out: Path) -> int:
    sec = _section(cfg, "pack")
    paths = list(args.inputs) or sec.get("models")
    if not paths:
        raise cs.ConfigError("missing config key 'pack.models'")
    models = [RegressionModel.load(_path(None if args.inputs else base, p, "pack.models"))
              for p in paths]
    params = _params_from(sec, "pack")
    dpd1, dpd2 = float(sec.get("dpd1", 0.0)), float(sec.get("dpd2", 0.0))
    mode = sec.get("mode", "regional")
    if mode == "uniform":
        pack = build_uniform(models, params, dpd1, dpd2)
    elif mode == "regional":
        pack = build(models, params, dpd1, dpd2)
    else:
        raise cs.ConfigError(f"pack.mode must be 'regional' or 'uniform', got {mode!r}")
    pack.save(out / "pack.json")
    print(f"{len(pack.rows)}-row {mode} pack -> {out / 'pack.json'}")
    if args.verify:
        demand = (float(sec.get("verify_pd1", 27_000.0)), float(sec.get("verify_pd2", 3_000.0)))
        checks = cs.pack_audit(pack, demand, n_points=int(sec.get("verify_points", 40)),
                               seed=args.seed)
        _write_json(out / "pack_audit.json", [asdict(c) for c in checks])
        bad = [c for c in checks if not c.passed]
        print(f"pack audit: {len(checks) - len(bad)}/{len(checks)} points pass")
        if bad:
            raise AuditFailure(f"{len(bad)} audited points violate the frequency limits")
    return EXIT_OK


def _options(sec: dict, ds: cs.Dataset | None, no_frequency: bool) -> SchedulerOptions:
    base = ds.scheduler_options() if ds else SchedulerOptions()
    o = dict(sec.get("options", {}))
    if "corridor_limit" in o and o["corridor_limit"] in ("unlimited", "none", None, 0):
        o["corridor_limit"] = None
    for k in ("c_h", "c_r"):
        if k in o:
            o[k] = tuple(float(v) for v in o[k])
    extra = sorted(set(o) - set(SchedulerOptions.__dataclass_fields__))
    if extra:
        raise cs.ConfigError(f"unknown key(s) in 'schedule.options': {extra}")
    try:
        opts = replace(base, **o)
    except (TypeError, SchedulerError) as exc:
        raise cs.ConfigError(f"'schedule.options': {exc}") from exc
    if no_frequency:
        opts = replace(opts, frequency=False)
    return opts


def cmd_schedule(args, cfg, base, out: Path) -> int:
    sec = _section(cfg, "schedule")
    ds = cs.gb_dataset(_path(base, sec["dataset"], "schedule.dataset")) \
        if sec.get("dataset") else cs.gb_dataset()
    classes = load_fleet_csv(_path(base, sec["fleet"], "schedule.fleet")) \
        if sec.get("fleet") else ds.classes
    hours = int(sec.get("hours", 24))
    start = int(sec.get("start_hour", 0))
    if sec.get("profiles"):
        demand, wind = load_profiles_csv(_path(base, sec["profiles"], "schedule.profiles"))
    else:
        days = math.ceil((start + hours + 24) / 24)
        demand, wind = cs.dataset_profiles(ds, args.seed, days)
    no_freq = args.no_frequency or not sec.get("frequency", True)
    opts = _options(sec, ds, no_freq)
    loss = ds.loss(sec.get("loss", "england"))
    pack = None
    if not no_freq:
        if sec.get("pack"):
            pack = SecurityConstraintSet.load(_path(base, sec["pack"], "schedule.pack"))
        else:
            pack = cs.pack_for(ds, loss, sec.get("pack_mode", "regional"), out / "packs")
    tree = ds.tree_spec(sec.get("lookahead"))
    if "tree" in sec:
        t = dict(sec["tree"])
        for k in ("z_values", "probabilities", "wind_capacity"):
            if k in t:
                t[k] = tuple(float(v) for v in t[k])
        tree = _build(TreeSpec, {**asdict(tree), **t}, "schedule.tree")

    def progress(hour, rec):
        d = rec.decision
        log.info("hour %d: H=(%.0f, %.0f) R=(%.0f, %.0f) %s", hour, d.h1, d.h2, d.r1, d.r2,
                 rec.status)

    recs = rolling_horizon(classes, demand, wind, pack, opts, hours, tree_spec=tree,
                           start_hour=start, progress=progress)
    write_decisions_csv(recs, classes, out / "decisions.csv")
    summary = report(recs, classes)
    summary["cost"] = float(sum(r.root_cost for r in recs))
    summary["frequency_rows"] = not no_freq
    _write_json(out / "summary.json", summary)
    print(f"{hours} h scheduled: avg H = {summary['avg_h_total']:.0f} MW s, "
          f"avg R = {summary['avg_r_total']:.0f} MW, "
          f"carbon {summary['carbon_intensity']:.1f} g/kWh")
    if args.verify:
        if pack is None:
            print("--verify: no frequency rows in this run, nothing to audit")
            return EXIT_OK
        checks = cs.security_audit(recs, demand, pack.params, opts.damping, ds.config["network"])
        _write_json(out / "security_audit.json", [asdict(c) for c in checks])
        bad = [c for c in checks if not c.passed]
        print(f"security audit: {len(checks) - len(bad)}/{len(checks)} hours pass")
        if bad:
            raise AuditFailure(f"{len(bad)} hourly decisions violate the frequency limits")
    return EXIT_OK


def cmd_casestudy(args, cfg, base, out: Path) -> int:
    sec = dict(_section(cfg, "casestudy"))
    if args.study:
        sec["study"] = args.study
    if "seed" not in sec:
        sec["seed"] = args.seed
    if sec.get("corridor_limit") in ("unlimited", "none"):
        raise cs.ConfigError("casestudy.corridor_limit: use a number; the fault_location "
                             "study adds the unlimited case itself")
    dataset = sec.pop("dataset", None)
    study = cs.StudyConfig.from_dict(sec)
    ds = cs.gb_dataset(_path(base, dataset, "casestudy.dataset")) if dataset else cs.gb_dataset()
    done: list[cs.RunResult] = []

    def flush(res):
        done.append(res)
        write_decisions_csv(res.records, ds.classes, out / f"decisions_{res.label}.csv")

    try:
        results = cs.run_study(ds, study, cache=out / "packs", on_result=flush)
    except Exception as exc:
        _write_json(out / "failure_manifest.json", {
            "study": study.study, "error": repr(exc),
            "completed": [r.label for r in done], "partial": cs.study_table(done)})
        raise
    table = cs.study_table(results)
    cs.write_table_csv(table, out / f"{study.study}.csv")
    _write_json(out / f"{study.study}.json", {"config": asdict(study), "runs": table})
    cols = ("label", "avg_h1", "avg_h2", "avg_r1", "avg_r2", "carbon_intensity")
    print("  ".join(f"{c:>16}" for c in cols))
    for row in table:
        print("  ".join(f"{row[c]:>16.6g}" if isinstance(row[c], float) else f"{row[c]:>16}"
                        for c in cols))
    if args.verify:
        bad_total = 0
        for r in results:
            if r.label in ("no_guarantee", "coi_only"):
                continue  # these runs make no regional security claim
            loss = ds.loss(study.loss)
            demand, _ = cs.study_profiles(ds, study)
            checks = cs.security_audit(r.records, demand, ds.security_params(loss),
                                       ds.damping, ds.config["network"])
            _write_json(out / f"security_audit_{r.label}.json", [asdict(c) for c in checks])
            bad_total += sum(not c.passed for c in checks)
        if bad_total:
            raise AuditFailure(f"{bad_total} hourly decisions violate the frequency limits")
        print("security audit passed for the regional runs")
    return EXIT_OK


def cmd_gen_profiles(args, cfg, base, out: Path) -> int:
    sec = _section(cfg, "profiles")
    days = int(args.days if args.days is not None else sec.get("days", 1))
    if days < 1:
        raise UsageError("--days must be >= 1")
    ds = cs.gb_dataset(_path(base, sec["dataset"], "profiles.dataset")) \
        if sec.get("dataset") else cs.gb_dataset()
    demand, wind = cs.dataset_profiles(ds, args.seed, days, int(sec.get("start_day", 0)))
    path = out / "profiles.csv"
    cs.write_profiles_csv(path, demand, wind)
    print(f"{len(demand)} hours -> {path}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
    "pack": cmd_pack,
    "schedule": cmd_schedule,
    "casestudy": cmd_casestudy,
    "gen-profiles": cmd_gen_profiles,
}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--seed", type=int, default=0, help="seed for synthetic traces")
    common.add_argument("--verify", action="store_true",
                        help="run the simulation audit (pack, schedule, casestudy)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = _Parser(prog="regfreq", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("fit", "pack"):
            sp.add_argument("inputs", nargs="*", help="input files (override the config)")
        else:
            sp.set_defaults(inputs=[])
        if name == "schedule":
            sp.add_argument("--no-frequency", action="store_true",
                            help="drop the frequency-security rows")
        if name == "casestudy":
            sp.add_argument("--study", choices=cs.STUDIES)
        if name == "gen-profiles":
            sp.add_argument("--days", type=int)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"regfreq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    for name in ("no_frequency", "study", "days"):
        if not hasattr(args, name):
            setattr(args, name, None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, base = {}, None
        if args.config:
            cfg = cs.load_config(args.config)
            base = Path(args.config).resolve().parent
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg, base, out)
    except (UsageError, cs.ConfigError) as exc:
        print(f"regfreq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AuditFailure as exc:
        print(f"regfreq: audit failed: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except (FileNotFoundError, KeyError) as exc:
        print(f"regfreq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, FileNotFoundError) else EXIT_RUNTIME
    except (SimulationError, BoundaryError, RegressionError, ConstraintError, SchedulerError,
            ValueError, RuntimeError, OSError) as exc:
        print(f"regfreq: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""GB 2030 dataset, synthetic profiles, pack training and the three case studies.

Everything here is plumbing over the modules that do the work: sweeps from
:mod:`regfreq.sampler`, fits and packs from :mod:`regfreq.constraints`, and
schedules from :mod:`regfreq.scheduler`.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .constraints import SecurityConstraintSet, SecurityParams, build, build_uniform, fit_model
from .dynamics import OperatingPoint, SimParams, analyze, simulate
from .sampler import SweepSpec, run_sweep
from .scheduler import (
    GeneratorClass,
    HourRecord,
    SchedulerOptions,
    TreeSpec,
    load_fleet_csv,
    report,
    rolling_horizon,
)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

STUDIES = ("uniform_vs_regional", "cost_sensitivity", "fault_location")


class ConfigError(ValueError):
    """Malformed or incomplete configuration; the message names the key."""


def load_config(path: str | Path) -> dict:
    """Read a TOML or JSON config file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text()
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: cannot parse config: {exc}") from exc


def need(cfg: dict, dotted: str, typ=None):
    """Fetch ``a.b.c`` from nested dicts, raising :class:`ConfigError` naming the key."""
    cur = cfg
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise ConfigError(f"missing config key '{dotted}'")
        cur = cur[part]
    if typ is not None:
        try:
            cur = typ(cur)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key '{dotted}': {exc}") from exc
    return cur


# -- bundled dataset ----------------------------------------------------------------

@dataclass(frozen=True)
class LossCase:
    name: str
    p_loss: float
    region: int
    h_loss: float = 0.0


@dataclass
class Dataset:
    classes: list[GeneratorClass]
    config: dict

    @property
    def f0(self) -> float:
        return float(self.config["network"]["f0"])

    @property
    def damping(self) -> float:
        return float(self.config["demand"]["damping"])

    def loss(self, name: str) -> LossCase:
        d = need(self.config, f"losses.{name}")
        return LossCase(name, float(d["p_loss"]), int(d["region"]), float(d.get("h_loss", 0.0)))

    def security_params(self, loss: LossCase) -> SecurityParams:
        lim = self.config["limits"]
        return SecurityParams(p_loss=loss.p_loss, faulted_region=loss.region,
                              rocof_max=float(lim["rocof_max"]), df_max=float(lim["df_max"]),
                              df_ss_max=float(lim["df_ss_max"]), f0=self.f0, h_loss=loss.h_loss)

    def scheduler_options(self, **overrides) -> SchedulerOptions:
        s = self.config.get("scheduler", {})
        opts = SchedulerOptions(c_ls=float(s.get("c_ls", 30_000.0)),
                                corridor_limit=float(self.config["network"]["corridor_limit"]),
                                gap=float(s.get("gap", 1e-3)), damping=self.damping)
        return replace(opts, **overrides)

    def tree_spec(self, lookahead: int | None = None) -> TreeSpec:
        s = self.config.get("scheduler", {})
        cap = float(self.config["wind"]["installed_mw"])
        share = float(self.config["wind"]["share_region1"])
        return TreeSpec(lookahead=int(lookahead or s.get("lookahead", 24)),
                        sigma=float(s.get("sigma", 0.05)),
                        wind_capacity=(cap * share, cap * (1.0 - share)))


def gb_dataset(config_path: str | Path | None = None) -> Dataset:
    """The bundled GB 2030 case, or a user dataset with the same layout."""
    if config_path is None:
        base = resources.files("regfreq") / "data"
        with resources.as_file(base / "gb2030.toml") as p:
            cfg = load_config(p)
        with resources.as_file(base / cfg["fleet"]) as p:
            classes = load_fleet_csv(p)
    else:
        config_path = Path(config_path)
        cfg = load_config(config_path)
        fleet = config_path.parent / need(cfg, "fleet")
        if not fleet.is_file():
            raise FileNotFoundError(f"fleet file not found: {fleet}")
        classes = load_fleet_csv(fleet)
    for key in ("network", "limits", "demand", "wind", "losses"):
        need(cfg, key)
    return Dataset(classes, cfg)


# -- synthetic profiles -------------------------------------------------------------

def gen_profiles(seed: int, days: int, *, demand_range=(20_000.0, 60_000.0),
                 demand_share=0.9, wind_installed=60_000.0, wind_share=0.5,
                 start_day: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Hourly synthetic demand and wind, shape ``(24 * days, 2)`` each.

    Demand is a daily sinusoid (trough 04:00, peak 16:00) whose mean follows
    the season (winter high), scaled so the whole year spans ``demand_range``.
    Wind is a mean-reverting random walk on the installed capacity.  The
    traces are a stand-in for measured data, not a forecast of it.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    lo, hi = demand_range
    mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    rng = np.random.default_rng(seed)
    n = 24 * days
    t = np.arange(n) + 24 * start_day
    day = t / 24.0
    season = np.cos(2.0 * np.pi * day / 365.0)  # +1 on day 0 (winter)
    daily = np.sin(2.0 * np.pi * ((t % 24) - 10.0) / 24.0)
    total = mid + 0.5 * half * season + 0.5 * half * daily
    total = np.clip(total, lo, hi)
    d1 = demand_share * total
    demand = np.c_[d1, total - d1]

    # Ornstein-Uhlenbeck walk in capacity-factor space; burn-in keeps days
    # independent of where the window starts
    mean_cf, kappa, vol = 0.35, 0.08, 0.06
    cf = mean_cf
    for _ in range(24 * 7):
        cf = min(max(cf + kappa * (mean_cf - cf) + vol * rng.standard_normal(), 0.0), 1.0)
    w = np.empty(n)
    for k in range(n):
        cf = min(max(cf + kappa * (mean_cf - cf) + vol * rng.standard_normal(), 0.0), 1.0)
        w[k] = cf * wind_installed
    wind = np.c_[wind_share * w, (1.0 - wind_share) * w]
    return demand, wind


def write_profiles_csv(path: str | Path, demand: np.ndarray, wind: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["hour", "demand_mw_r1", "demand_mw_r2", "wind_mw_r1", "wind_mw_r2"])
        for h, (d, w) in enumerate(zip(demand, wind)):
            out.writerow([h, repr(float(d[0])), repr(float(d[1])),
                          repr(float(w[0])), repr(float(w[1]))])


def dataset_profiles(ds: Dataset, seed: int, days: int, start_day: int = 0):
    dem, wind = ds.config["demand"], ds.config["wind"]
    return gen_profiles(seed, days, demand_range=(float(dem["min_mw"]), float(dem["max_mw"])),
                        demand_share=float(dem["share_region1"]),
                        wind_installed=float(wind["installed_mw"]),
                        wind_share=float(wind["share_region1"]), start_day=start_day)


# -- pack training ------------------------------------------------------------------

@dataclass
class TrainedPack:
    pack: SecurityConstraintSet
    sample_sets: dict = field(default_factory=dict, repr=False)


def _sweep_specs(ds: Dataset, loss: LossCase, uniform: bool) -> tuple[SweepSpec | None, SweepSpec]:
    t = need(ds.config, f"training.{loss.name}")
    lim, net = ds.config["limits"], ds.config["network"]
    common = dict(
        p_loss_values=(loss.p_loss,), faulted_region=loss.region,
        pd_totals=tuple(t["pd_totals"]), pd_split=float(ds.config["demand"]["share_region1"]),
        d_total=ds.damping, rocof_max=float(lim["rocof_max"]), df_max=float(lim["df_max"]),
        df_ss_max=float(lim["df_ss_max"]), f0=ds.f0, v1=float(net["v1"]), v2=float(net["v2"]),
        x12=float(net["x12"]),
    )
    band = tuple(t.get("band", ()))
    # a single bus has no regional split, so one split value is enough
    splits = ((0.5,), (0.5,)) if uniform else (tuple(t["h_splits"]), tuple(t["r_splits"]))
    nadir = SweepSpec(target="nadir", h_splits=splits[0], r_splits=splits[1],
                      h_totals=tuple(t["nadir_h_totals"]),
                      r_increment=float(t.get("r_increment", 100.0)), uniform=uniform,
                      band=tuple(t.get("nadir_band", band)), **common)
    if uniform:
        return None, nadir
    rocof = SweepSpec(target="rocof", h_splits=tuple(t["h_splits"]),
                      r_splits=tuple(t["r_splits"]), r_totals=tuple(t["rocof_r_totals"]),
                      h_increment=float(t.get("h_increment", 1000.0)),
                      band=tuple(t.get("rocof_band", band)), **common)
    return rocof, nadir


def train_pack(ds: Dataset, loss: LossCase, mode: str = "regional",
               workers: int = 1) -> TrainedPack:
    """Sweep, fit and assemble the pack for one credible loss.

    ``mode="regional"`` gives the six-row regional pack; ``mode="uniform"``
    the centre-of-inertia baseline (qss, COI RoCoF and a COI nadir row fitted
    on single-bus simulations).
    """
    if mode not in ("regional", "uniform"):
        raise ConfigError(f"pack mode must be 'regional' or 'uniform', got {mode!r}")
    params = ds.security_params(loss)
    rocof_spec, nadir_spec = _sweep_specs(ds, loss, mode == "uniform")
    # rows stored in the JSON are folded at the mean training demand; the
    # scheduler re-folds them per node
    pd = float(np.mean(nadir_spec.demand_levels()))
    dpd = (ds.damping * pd * nadir_spec.pd_split, ds.damping * pd * (1.0 - nadir_spec.pd_split))
    sets = {"nadir": run_sweep(nadir_spec, workers=workers)}
    if mode == "uniform":
        models = [fit_model(sets["nadir"], None)]
        pack = build_uniform(models, params, *dpd, warn=False)
    else:
        sets["rocof"] = run_sweep(rocof_spec, workers=workers)
        models = [fit_model(sets[k], r) for k in ("rocof", "nadir") for r in (1, 2)]
        pack = build(models, params, *dpd, warn=False)
    return TrainedPack(pack, sets)


def pack_for(ds: Dataset, loss: LossCase, mode: str, cache: Path | None = None,
             workers: int = 1) -> SecurityConstraintSet:
    """:func:`train_pack` with an optional JSON cache keyed by loss and mode."""
    if cache is not None:
        path = Path(cache) / f"pack_{loss.name}_{mode}.json"
        if path.is_file():
            return SecurityConstraintSet.load(path)
    pack = train_pack(ds, loss, mode, workers).pack
    if cache is not None:
        Path(cache).mkdir(parents=True, exist_ok=True)
        pack.save(path)
    return pack


# -- security audit of scheduled decisions -----------------------------------------

@dataclass
class SecurityCheck:
    hour: int
    h1: float
    h2: float
    r1: float
    r2: float
    max_rocof: tuple[float, float]
    nadir: tuple[float, float]
    passed: bool
    note: str = ""


def security_audit(records, demand: np.ndarray, params: SecurityParams, damping: float,
                   network: dict | None = None, tol: float = 1e-3) -> list[SecurityCheck]:
    """Re-simulate the credible loss at every hourly root decision."""
    net = network or {}
    sim = SimParams()
    out = []
    for rec in records:
        d = rec.decision
        pd1, pd2 = (float(v) for v in demand[rec.hour % len(demand)])
        if d.h1 <= 0 or d.h2 <= 0:
            out.append(SecurityCheck(rec.hour, d.h1, d.h2, d.r1, d.r2, (math.inf,) * 2,
                                     (math.inf,) * 2, False, "region without inertia"))
            continue
        pt = OperatingPoint(h1=d.h1, h2=d.h2, r1=max(d.r1, 0.0), r2=max(d.r2, 0.0),
                            p_loss=params.p_loss, faulted_region=params.faulted_region,
                            pd1=pd1, pd2=pd2, d1=damping, d2=damping, f0=params.f0,
                            v1=float(net.get("v1", 400.0)), v2=float(net.get("v2", 400.0)),
                            x12=float(net.get("x12", 50.0)))
        st = analyze(simulate(pt, sim), pt)
        rocof = (st.max_rocof_1, st.max_rocof_2)
        nadir = (st.nadir_1, st.nadir_2)
        ok = max(rocof) <= params.rocof_max + tol and max(nadir) <= params.df_max + tol
        out.append(SecurityCheck(rec.hour, d.h1, d.h2, d.r1, d.r2, rocof, nadir, ok))
    return out


# -- case studies -------------------------------------------------------------------

@dataclass
class RunResult:
    label: str
    records: list[HourRecord]
    summary: dict


def run_schedule(ds: Dataset, demand, wind, pack, options: SchedulerOptions, hours: int,
                 label: str, start_hour: int = 0, lookahead: int | None = None,
                 progress: Callable | None = None) -> RunResult:
    recs = rolling_horizon(ds.classes, demand, wind, pack, options, hours,
                           tree_spec=ds.tree_spec(lookahead), start_hour=start_hour,
                           progress=progress)
    summary = report(recs, ds.classes)
    summary["cost"] = float(sum(r.root_cost for r in recs))
    summary["label"] = label
    return RunResult(label, recs, summary)


def _progress(label):
    def cb(hour, rec):
        d = rec.decision
        log.info("%s hour %d: H=(%.0f, %.0f) R=(%.0f, %.0f) %s", label, hour, d.h1, d.h2,
                 d.r1, d.r2, rec.status)
    return cb


@dataclass
class StudyConfig:
    study: str
    loss: str = "england"
    hours: int = 24
    start_hour: int = 0
    seed: int = 0
    corridor_limit: float | None = None  # None: dataset value
    penalties: dict = field(default_factory=dict)
    lookahead: int | None = None

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigError(f"casestudy.study must be one of {STUDIES}, got {self.study!r}")
        if self.hours < 1:
            raise ConfigError("casestudy.hours must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown casestudy key(s): {sorted(extra)}")
        if "study" not in d:
            raise ConfigError("missing config key 'casestudy.study'")
        return cls(**d)


RunPlan = tuple  # (label, pack or None, SchedulerOptions)


def uniform_vs_regional(ds: Dataset, cfg: StudyConfig, cache=None) -> list[RunPlan]:
    """No stability guarantee, COI-only rows and regional rows on the same days."""
    loss = ds.loss(cfg.loss)
    opts = _study_options(ds, cfg)
    return [
        ("no_guarantee", None, replace(opts, frequency=False)),
        ("coi_only", pack_for(ds, loss, "uniform", cache), opts),
        ("regional", pack_for(ds, loss, "regional", cache), opts),
    ]


def cost_sensitivity(ds: Dataset, cfg: StudyConfig, cache=None) -> list[RunPlan]:
    """Explicit regional penalties on inertia and response, base and doubled per region."""
    pack = pack_for(ds, ds.loss(cfg.loss), "regional", cache)
    pen = {**ds.config.get("penalties", {}), **cfg.penalties}
    ch, cr = float(pen.get("inertia", 5.0)), float(pen.get("response", 250.0))
    opts = _study_options(ds, cfg)
    cases = [
        ("base", (ch, ch), (cr, cr)),
        ("inertia_x2_region1", (2 * ch, ch), (cr, cr)),
        ("inertia_x2_region2", (ch, 2 * ch), (cr, cr)),
        ("response_x2_region1", (ch, ch), (2 * cr, cr)),
        ("response_x2_region2", (ch, ch), (cr, 2 * cr)),
    ]
    return [(label, pack, replace(opts, c_h=c_h, c_r=c_r)) for label, c_h, c_r in cases]


def fault_location(ds: Dataset, cfg: StudyConfig, cache=None) -> list[RunPlan]:
    """Loss in the low-inertia region: COI-only, regional, regional with no corridor limit."""
    loss = ds.loss(cfg.loss)
    opts = _study_options(ds, cfg)
    reg = pack_for(ds, loss, "regional", cache)
    return [
        ("coi_only", pack_for(ds, loss, "uniform", cache), opts),
        ("regional", reg, opts),
        ("regional_unlimited", reg, replace(opts, corridor_limit=None)),
    ]


def _study_options(ds: Dataset, cfg: StudyConfig) -> SchedulerOptions:
    opts = ds.scheduler_options()
    if cfg.corridor_limit is not None:
        opts = replace(opts, corridor_limit=cfg.corridor_limit)
    return opts


PLANS = {"uniform_vs_regional": uniform_vs_regional, "cost_sensitivity": cost_sensitivity,
         "fault_location": fault_location}


def study_profiles(ds: Dataset, cfg: StudyConfig):
    days = math.ceil((cfg.start_hour + cfg.hours + (cfg.lookahead or 24)) / 24)
    return dataset_profiles(ds, cfg.seed, days)


def run_study(ds: Dataset, cfg: StudyConfig, cache=None,
              on_result: Callable[[RunResult], None] | None = None) -> list[RunResult]:
    """Train (or load cached) packs, then run every schedule the study needs in turn."""
    demand, wind = study_profiles(ds, cfg)
    out = []
    for label, pack, opts in PLANS[cfg.study](ds, cfg, cache):
        res = run_schedule(ds, demand, wind, pack, opts, cfg.hours, label, cfg.start_hour,
                           cfg.lookahead, _progress(label))
        out.append(res)
        if on_result:
            on_result(res)
    return out


TABLE_COLUMNS = ("label", "avg_h1", "avg_h2", "avg_r1", "avg_r2", "avg_h_total", "avg_r_total",
                 "curtailment_r1_mwh", "curtailment_r2_mwh", "load_shed_mwh",
                 "carbon_intensity", "cost")


def study_table(results: list[RunResult]) -> list[dict]:
    rows = []
    for r in results:
        s = r.summary
        rows.append({
            "label": r.label, "avg_h1": s["avg_h1"], "avg_h2": s["avg_h2"],
            "avg_r1": s["avg_r1"], "avg_r2": s["avg_r2"], "avg_h_total": s["avg_h_total"],
            "avg_r_total": s["avg_r_total"], "curtailment_r1_mwh": s["curtailment_mwh"][0],
            "curtailment_r2_mwh": s["curtailment_mwh"][1], "load_shed_mwh": s["load_shed_mwh"],
            "carbon_intensity": s["carbon_intensity"], "cost": s["cost"],
        })
    return rows


def write_table_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(TABLE_COLUMNS))
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})


def pack_audit(pack: SecurityConstraintSet, demand: tuple[float, float], n_points: int = 40,
               seed: int = 0, damping: float = 0.005, tol: float = 1e-3) -> list[SecurityCheck]:
    """Simulate points on the boundary of ``pack`` (folded at ``demand``).

    Each point takes a random total inertia and regional shares (inside the
    models' training ranges when known) and the least total response that
    satisfies every row; directions with no such response are skipped.
    """
    rng = np.random.default_rng(seed)
    dpd = (damping * demand[0], damping * demand[1])
    folded = pack.rebuild(*dpd)
    rows = folded.rows + pack.guard_rows()
    dom: dict = {}
    for m in pack.models:
        for k, (lo, hi) in (m.domain or {}).items():
            a, b = dom.get(k, (lo, hi))
            dom[k] = (max(a, lo), min(b, hi))
    p = folded.params
    # without training ranges: from the COI RoCoF floor up to five times it
    h_lo = dom["h1"][0] + dom["h2"][0] if "h1" in dom else p.f0 * p.p_loss / (2.0 * p.rocof_max)
    h_hi = dom["h1"][1] + dom["h2"][1] if "h1" in dom else 5.0 * h_lo
    hs_rng = dom.get("h_share1", (0.5, 0.95))
    rs_rng = dom.get("r_share1", (0.5, 0.95))
    out = []
    for k in range(n_points):
        H = rng.uniform(h_lo, h_hi)
        hs, rs = rng.uniform(*hs_rng), rng.uniform(*rs_rng)
        lo, hi, ok = 0.0, math.inf, True
        for r in rows:
            a = r.coeff_r1 * rs + r.coeff_r2 * (1 - rs)
            rest = r.rhs - (r.coeff_h1 * hs * H + r.coeff_h2 * (1 - hs) * H)
            if a > 1e-12:
                lo = max(lo, rest / a)
            elif a < -1e-12:
                hi = min(hi, rest / a)
            elif rest > 1e-9 * max(1.0, abs(r.rhs)):
                ok = False
        if not ok or lo > hi:
            continue
        pt = OperatingPoint(h1=hs * H, h2=(1 - hs) * H, r1=rs * lo, r2=(1 - rs) * lo,
                            p_loss=p.p_loss, faulted_region=p.faulted_region, pd1=demand[0],
                            pd2=demand[1], d1=damping, d2=damping, f0=p.f0)
        st = analyze(simulate(pt), pt)
        rocof, nadir = (st.max_rocof_1, st.max_rocof_2), (st.nadir_1, st.nadir_2)
        passed = max(rocof) <= p.rocof_max + tol and max(nadir) <= p.df_max + tol
        out.append(SecurityCheck(k, pt.h1, pt.h2, pt.r1, pt.r2, rocof, nadir, passed))
    return out

"""Boundary sampling: drive operating points onto the regional security boundary.

For every combination of loss size and regional splits a starting point that
just meets the uniform (centre-of-inertia) conditions is built, then total
inertia (RoCoF target) or total response (nadir target) is scaled, keeping the
regional split, until the worst regional metric sits within ``boundary_tol``
below its limit.  Each boundary point contributes one labelled sample per
region.

Optionally each boundary point is also re-simulated at a few scaled totals
(``band``), e.g. 2 % either side of the boundary.  Those off-boundary samples
carry the local slope of the metric, which a fit on boundary points alone
cannot see when the binding label is constant (the nadir case).
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import (
    OperatingPoint,
    SimParams,
    SimulationError,
    TraceStats,
    analyze,
    coi_nadir_threshold,
    simulate,
)

log = logging.getLogger(__name__)

CSV_HEADER = ["region", "h1", "h2", "p_loss", "dpd1", "dpd2", "r1", "r2", "label"]


class BoundaryError(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    p_loss_values: tuple[float, ...]
    faulted_region: int = 1
    d_splits: tuple[float, ...] = (0.9,)
    r_splits: tuple[float, ...] = (0.5,)
    h_splits: tuple[float, ...] = (0.5,)
    pd_total: float = 30_000.0
    d_total: float = 0.005
    rocof_max: float = 1.0
    df_max: float = 0.8
    df_ss_max: float = 0.5
    boundary_tol: float = 0.005
    h_increment: float = 1_000.0
    target: str = "rocof"
    # extensions: extra demand levels, demand split and explicit starting totals
    pd_totals: tuple[float, ...] | None = None
    pd_split: float = 0.9
    h_totals: tuple[float, ...] | None = None
    r_totals: tuple[float, ...] | None = None
    r_increment: float = 100.0
    f0: float = 50.0
    v1: float = 400.0
    v2: float = 400.0
    x12: float = 50.0
    max_iter: int = 10_000
    band: tuple[float, ...] = ()
    uniform: bool = False  # lump both regions into one bus (COI-only models)

    def __post_init__(self):
        for name in ("p_loss_values", "d_splits", "r_splits", "h_splits", "pd_totals",
                     "h_totals", "r_totals", "band"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(float(v) for v in np.atleast_1d(val)))
        if not self.p_loss_values:
            raise ValueError("p_loss_values must be non-empty")
        for s in self.d_splits + self.r_splits + self.h_splits + (self.pd_split,):
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"split fraction {s} outside [0, 1]")
        if self.boundary_tol <= 0 or self.h_increment <= 0 or self.r_increment <= 0:
            raise ValueError("boundary_tol and increments must be positive")
        if self.target not in ("rocof", "nadir"):
            raise ValueError(f"target must be 'rocof' or 'nadir', got {self.target!r}")
        if self.faulted_region not in (1, 2):
            raise ValueError("faulted_region must be 1 or 2")
        if any(b <= 0 or b == 1.0 for b in self.band):
            raise ValueError("band factors must be positive and differ from 1")

    @property
    def limit(self) -> float:
        return self.rocof_max if self.target == "rocof" else self.df_max

    def demand_levels(self) -> tuple[float, ...]:
        return self.pd_totals if self.pd_totals else (self.pd_total,)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        return cls(**d)


@dataclass
class Sample:
    features: np.ndarray
    label: float
    region: int
    stats: TraceStats | None = field(default=None, repr=False)
    on_boundary: bool = True

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.shape != (8,) or self.features[-1] != 1.0:
            raise ValueError("features must have length 8 with a trailing intercept 1")
        if not np.isfinite(self.label) or self.label < 0:
            raise ValueError(f"label must be finite and non-negative, got {self.label}")

    def point(self, template: OperatingPoint) -> OperatingPoint:
        """Rebuild an operating point carrying these features."""
        h1, h2, p_loss, dpd1, dpd2, r1, r2, _ = self.features
        return template.with_(h1=h1, h2=h2, p_loss=p_loss, r1=r1, r2=r2,
                              d1=dpd1 / template.pd1, d2=dpd2 / template.pd2)


@dataclass
class SampleSet:
    samples: list[Sample]
    spec: SweepSpec
    params: SimParams
    points: list[OperatingPoint] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    def for_region(self, region: int, boundary_only: bool = False) -> list[Sample]:
        return [s for s in self.samples
                if s.region == region and (s.on_boundary or not boundary_only)]

    def matrix(self, region: int, boundary_only: bool = False) -> tuple[np.ndarray, np.ndarray]:
        rows = self.for_region(region, boundary_only)
        if not rows:
            return np.zeros((0, 8)), np.zeros(0)
        return np.array([s.features for s in rows]), np.array([s.label for s in rows])

    def write(self, csv_path: str | Path, sidecar_path: str | Path | None = None) -> None:
        csv_path = Path(csv_path)
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for s in self.samples:
                w.writerow([s.region] + [repr(float(v)) for v in s.features[:7]]
                           + [repr(float(s.label))])
        sidecar = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
        sidecar.write_text(json.dumps({
            "spec": self.spec.to_dict(),
            "params": asdict(self.params),
            "failures": self.failures,
            "points": [asdict(p) for p in self.points],
            "on_boundary": [s.on_boundary for s in self.samples],
        }, indent=2))

    @classmethod
    def read(cls, csv_path: str | Path, sidecar_path: str | Path | None = None) -> "SampleSet":
        csv_path = Path(csv_path)
        sidecar = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".json")
        meta = json.loads(sidecar.read_text())
        samples = []
        with open(csv_path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != CSV_HEADER:
                raise ValueError(f"{csv_path}: expected header {CSV_HEADER}, got {reader.fieldnames}")
            for row in reader:
                feats = [float(row[k]) for k in CSV_HEADER[1:8]] + [1.0]
                samples.append(Sample(feats, float(row["label"]), int(row["region"])))
        mask = meta.get("on_boundary")
        if mask is not None:
            if len(mask) != len(samples):
                raise ValueError(f"{sidecar}: on_boundary mask length does not match {csv_path}")
            for smp, flag in zip(samples, mask):
                smp.on_boundary = bool(flag)
        return cls(
            samples=samples,
            spec=SweepSpec.from_dict(meta["spec"]),
            params=SimParams(**meta["params"]),
            points=[OperatingPoint(**p) for p in meta.get("points", [])],
            failures=meta.get("failures", []),
        )


def metric(point: OperatingPoint, spec: SweepSpec, params: SimParams) -> tuple[float, TraceStats]:
    """Worst regional boundary metric (RoCoF or nadir) and the full stats."""
    stats = analyze(simulate(point, params, uniform=spec.uniform), point)
    if spec.target == "rocof":
        return max(stats.max_rocof_1, stats.max_rocof_2), stats
    return max(stats.nadir_1, stats.nadir_2), stats


def qss_floor(p_loss: float, spec: SweepSpec, pd_total: float | None = None) -> float:
    pd = spec.pd_total if pd_total is None else pd_total
    return p_loss - spec.d_total * pd * spec.df_ss_max


def initial_point(p_loss: float, spec: SweepSpec, *, h_split: float | None = None,
                  r_split: float | None = None, d_split: float | None = None,
                  pd_total: float | None = None, h_total: float | None = None,
                  r_total: float | None = None, t_del: float = 10.0) -> OperatingPoint:
    """Starting point that just meets the uniform-frequency RoCoF and nadir limits.

    Total inertia comes from the COI RoCoF limit, total response from the COI
    nadir threshold ``H * R >= k*``, raised to the quasi-steady-state floor if
    needed.  Explicit ``h_total``/``r_total`` (or the SweepSpec lists) override.
    """
    h_split = spec.h_splits[0] if h_split is None else h_split
    r_split = spec.r_splits[0] if r_split is None else r_split
    d_split = spec.d_splits[0] if d_split is None else d_split
    pd_total = spec.demand_levels()[0] if pd_total is None else pd_total

    if h_total is None:
        h_total = p_loss * spec.f0 / (2.0 * spec.rocof_max)
    if r_total is None:
        k_star = coi_nadir_threshold(p_loss, spec.f0, t_del, spec.df_max)
        r_total = k_star / h_total if h_total > 0 else 0.0
        r_total = max(r_total, qss_floor(p_loss, spec, pd_total))
    if r_total <= 0 or h_total <= 0:
        raise BoundaryError(
            f"degenerate sweep parameters: h_total={h_total}, r_total={r_total} at p_loss={p_loss}"
        )
    h1 = h_split * h_total
    h2 = h_total - h1
    if h1 <= 0 or h2 <= 0:
        raise BoundaryError(f"h split {h_split} leaves a region without inertia")

    pd1 = spec.pd_split * pd_total
    pd2 = pd_total - pd1
    damping = spec.d_total * pd_total  # MW/Hz
    return OperatingPoint(
        h1=h1, h2=h2,
        r1=r_split * r_total, r2=(1.0 - r_split) * r_total,
        p_loss=p_loss, faulted_region=spec.faulted_region,
        pd1=pd1, pd2=pd2,
        d1=d_split * damping / pd1, d2=(1.0 - d_split) * damping / pd2,
        v1=spec.v1, v2=spec.v2, x12=spec.x12, f0=spec.f0,
    )


def _scaled(point: OperatingPoint, target: str, total: float) -> OperatingPoint:
    if target == "rocof":
        s = point.h1 / point.h_total
        return point.with_(h1=s * total, h2=(1.0 - s) * total)
    rt = point.r_total
    s = point.r1 / rt if rt > 0 else 0.5
    return point.with_(r1=s * total, r2=(1.0 - s) * total)


def walk_to_boundary(point: OperatingPoint, spec: SweepSpec, params: SimParams | None = None,
                     *, trail: list | None = None) -> OperatingPoint:
    """Move ``point`` onto the regional boundary of ``spec.target``.

    While the worst regional metric exceeds the limit, total inertia (or total
    response) grows by one increment per iteration; the bracket is then closed
    by bisection to ``boundary_tol``.  A point strictly inside the secure
    region is walked the other way first.  ``trail``, when given, collects
    ``(total, metric)`` pairs of every evaluation.
    """
    params = params or SimParams()
    limit, tol = spec.limit, spec.boundary_tol
    step = spec.h_increment if spec.target == "rocof" else spec.r_increment
    total = point.h_total if spec.target == "rocof" else point.r_total
    lower = 0.0
    if spec.target == "nadir":
        lower = max(0.0, qss_floor(point.p_loss, spec, point.pd1 + point.pd2))

    def evaluate(tot):
        p = _scaled(point, spec.target, tot)
        try:
            m, _ = metric(p, spec, params)
        except SimulationError:
            m = np.inf
        if trail is not None:
            trail.append((tot, m))
        return p, m

    cur, m = evaluate(total)
    if limit - tol <= m <= limit:
        return cur

    it = 0
    if m > limit:
        lo = total
        while m > limit:
            it += 1
            if it > spec.max_iter:
                raise BoundaryError(f"iteration cap reached; last metric {m:.6g} at total {total:.6g}")
            lo = total
            total += step
            cur, m = evaluate(total)
        hi = total
        if m >= limit - tol:
            return cur
    else:
        hi = total
        while m < limit - tol:
            it += 1
            if it > spec.max_iter:
                raise BoundaryError(f"iteration cap reached; last metric {m:.6g} at total {total:.6g}")
            hi = total
            nxt = total - step
            if nxt <= lower:
                nxt = 0.5 * (total + lower)
                if total - lower < 1e-9 * max(1.0, total):
                    raise BoundaryError(
                        f"boundary unreachable: metric {m:.6g} still below limit at the lower "
                        f"bound {lower:.6g}"
                    )
            total = nxt
            cur, m = evaluate(total)
        lo = total
        if m <= limit:
            return cur

    # bisection: metric(lo) > limit, metric(hi) < limit - tol
    best = _scaled(point, spec.target, hi)
    while True:
        it += 1
        if it > spec.max_iter:
            raise BoundaryError(f"iteration cap reached during bisection; last metric {m:.6g}")
        mid = 0.5 * (lo + hi)
        cur, m = evaluate(mid)
        if m > limit:
            lo = mid
        else:
            hi, best = mid, cur
            if m >= limit - tol:
                return best
        if hi - lo <= 1e-12 * hi:
            return best


def _grid(spec: SweepSpec):
    h_tot = spec.h_totals or (None,)
    r_tot = spec.r_totals or (None,)
    return list(itertools.product(
        spec.p_loss_values, spec.demand_levels(), spec.d_splits, h_tot, r_tot,
        spec.r_splits, spec.h_splits,
    ))


def _run_point(args):
    spec, params, key = args
    p_loss, pd_total, d_split, h_total, r_total, r_split, h_split = key
    try:
        p0 = initial_point(p_loss, spec, h_split=h_split, r_split=r_split, d_split=d_split,
                           pd_total=pd_total, h_total=h_total, r_total=r_total,
                           t_del=params.t_del)
        pb = walk_to_boundary(p0, spec, params)
        stats = analyze(simulate(pb, params, uniform=spec.uniform), pb)
        total = pb.h_total if spec.target == "rocof" else pb.r_total
        band = []
        for factor in spec.band:
            q = _scaled(pb, spec.target, factor * total)
            band.append((q, analyze(simulate(q, params, uniform=spec.uniform), q)))
    except (BoundaryError, SimulationError, ValueError) as exc:
        return key, None, None, str(exc)
    return key, pb, [(pb, stats)] + band, None


def label_of(stats: TraceStats, region: int, target: str) -> float:
    if target == "rocof":
        return max(0.0, stats.osc_label(region))
    return stats.nadir(region)


def run_sweep(spec: SweepSpec, params: SimParams | None = None, workers: int = 1) -> SampleSet:
    """Sample the security boundary over the full grid of ``spec``.

    Grid points whose walk fails are listed in ``failures`` and skipped.  With
    ``workers > 1`` points are mapped over a process pool; results are merged
    in grid order so the output does not depend on scheduling.
    """
    params = params or SimParams()
    jobs = [(spec, params, key) for key in _grid(spec)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_point, jobs, chunksize=4))
    else:
        results = [_run_point(j) for j in jobs]

    samples, points, failures = [], [], []
    for key, pb, evaluated, err in results:
        if err is not None:
            failures.append({
                "p_loss": key[0], "pd_total": key[1], "d_split": key[2], "h_total": key[3],
                "r_total": key[4], "r_split": key[5], "h_split": key[6], "error": err,
            })
            log.warning("sweep point %s failed: %s", key, err)
            continue
        points.append(pb)
        for k, (q, stats) in enumerate(evaluated):
            for region in (1, 2):
                samples.append(Sample(q.features(), label_of(stats, region, spec.target), region,
                                      stats, on_boundary=k == 0))
    return SampleSet(samples=samples, spec=spec, params=params, points=points, failures=failures)

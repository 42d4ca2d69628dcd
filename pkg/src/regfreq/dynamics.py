"""Post-fault frequency dynamics of a two-region system joined by one corridor.

Each region is an aggregated swing equation::

    (2 h_i / f0) d(df_i)/dt = -loss_i + pfr_i(t) - d_i * pd_i * df_i -/+ p_tie
    p_tie = (v1 * v2 / x12) * sin(dd)          # MW, positive from region 1 to 2
    d(dd)/dt = 2 * pi * (df1 - df2)            # dd = delta1 - delta2

with the generation loss stepped in at ``t = 0`` and primary response ramping
linearly to its full value at ``t_del``.  The state is integrated with a fixed
step RK4 scheme so traces are bit-reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numba
import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

__all__ = [
    "OperatingPoint",
    "SimParams",
    "FrequencyTrace",
    "TraceStats",
    "SimulationError",
    "simulate",
    "analyze",
    "coi_nadir_threshold",
    "coi_rocof",
    "write_trace_csv",
]


class SimulationError(RuntimeError):
    """Raised when the integration produces a non-finite state."""


@dataclass(frozen=True)
class OperatingPoint:
    """One system state fed to the simulator.

    Inertias are post-loss (the outaged unit is already removed).  Damping is a
    fraction of demand per Hz, so 0.5 %/Hz is stored as 0.005.
    """

    h1: float
    h2: float
    r1: float
    r2: float
    p_loss: float
    faulted_region: int = 1
    pd1: float = 27_000.0
    pd2: float = 3_000.0
    d1: float = 0.005
    d2: float = 0.005
    v1: float = 400.0
    v2: float = 400.0
    x12: float = 50.0
    f0: float = 50.0

    def __post_init__(self):
        checks = [
            (self.h1 > 0 and self.h2 > 0, "inertia must be positive"),
            (self.r1 >= 0 and self.r2 >= 0, "response must be non-negative"),
            (self.p_loss >= 0, "p_loss must be non-negative"),
            (self.pd1 > 0 and self.pd2 > 0, "demand must be positive"),
            (0 <= self.d1 <= 0.2 and 0 <= self.d2 <= 0.2, "damping must lie in [0, 0.2]"),
            (self.x12 > 0, "x12 must be positive"),
            (self.f0 > 0, "f0 must be positive"),
            (self.faulted_region in (1, 2), "faulted_region must be 1 or 2"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(f"{msg}: {self}")

    @property
    def h_total(self) -> float:
        return self.h1 + self.h2

    @property
    def r_total(self) -> float:
        return self.r1 + self.r2

    @property
    def dpd1(self) -> float:
        """Region-1 load damping in MW/Hz."""
        return self.d1 * self.pd1

    @property
    def dpd2(self) -> float:
        return self.d2 * self.pd2

    @property
    def sync_coefficient(self) -> float:
        """Corridor synchronising power in MW (kV^2 / ohm = MW)."""
        return self.v1 * self.v2 / self.x12

    def features(self) -> np.ndarray:
        """Regression features ``[h1, h2, p_loss, d1*pd1, d2*pd2, r1, r2, 1]``."""
        return np.array(
            [self.h1, self.h2, self.p_loss, self.dpd1, self.dpd2, self.r1, self.r2, 1.0]
        )

    def with_(self, **changes) -> "OperatingPoint":
        return replace(self, **changes)


@dataclass(frozen=True)
class SimParams:
    dt: float = 1e-3
    horizon: float = 30.0
    t_del: float = 10.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.horizon >= self.t_del > 0):
            raise ValueError("need horizon >= t_del > 0")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ValueError("horizon must be an integer number of steps")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass
class FrequencyTrace:
    times: np.ndarray
    df1: np.ndarray
    df2: np.ndarray
    tie_flow: np.ndarray
    df_coi: np.ndarray

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class TraceStats:
    max_rocof_1: float
    max_rocof_2: float
    nadir_1: float
    nadir_2: float
    t_nadir_1: float
    t_nadir_2: float
    coi_rocof_0: float
    osc_label_1: float
    osc_label_2: float
    integral_diff: float
    integral_self_1: float
    integral_self_2: float

    def max_rocof(self, region: int) -> float:
        return self.max_rocof_1 if region == 1 else self.max_rocof_2

    def nadir(self, region: int) -> float:
        return self.nadir_1 if region == 1 else self.nadir_2

    def osc_label(self, region: int) -> float:
        return self.osc_label_1 if region == 1 else self.osc_label_2

    def integral_self(self, region: int) -> float:
        return self.integral_self_1 if region == 1 else self.integral_self_2


@numba.njit(cache=True)
def _rhs(t, f1, f2, dd, a1, a2, loss1, loss2, r1, r2, t_del, dpd1, dpd2, k_sync):
    ramp = t / t_del if t < t_del else 1.0
    p_tie = k_sync * math.sin(dd)
    g1 = a1 * (-loss1 + r1 * ramp - dpd1 * f1 - p_tie)
    g2 = a2 * (-loss2 + r2 * ramp - dpd2 * f2 + p_tie)
    return g1, g2, 2.0 * math.pi * (f1 - f2)


@numba.njit(cache=True)
def _integrate(n, dt, a1, a2, loss1, loss2, r1, r2, t_del, dpd1, dpd2, k_sync, out):
    f1 = 0.0
    f2 = 0.0
    dd = 0.0
    out[0, 0] = 0.0
    out[0, 1] = 0.0
    out[0, 2] = 0.0
    for k in range(n):
        t = k * dt
        k1a, k1b, k1c = _rhs(t, f1, f2, dd, a1, a2, loss1, loss2, r1, r2, t_del, dpd1, dpd2, k_sync)
        h = 0.5 * dt
        k2a, k2b, k2c = _rhs(t + h, f1 + h * k1a, f2 + h * k1b, dd + h * k1c,
                             a1, a2, loss1, loss2, r1, r2, t_del, dpd1, dpd2, k_sync)
        k3a, k3b, k3c = _rhs(t + h, f1 + h * k2a, f2 + h * k2b, dd + h * k2c,
                             a1, a2, loss1, loss2, r1, r2, t_del, dpd1, dpd2, k_sync)
        k4a, k4b, k4c = _rhs(t + dt, f1 + dt * k3a, f2 + dt * k3b, dd + dt * k3c,
                             a1, a2, loss1, loss2, r1, r2, t_del, dpd1, dpd2, k_sync)
        f1 += dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        f2 += dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        dd += dt / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c)
        if not (math.isfinite(f1) and math.isfinite(f2) and math.isfinite(dd)):
            return k + 1
        out[k + 1, 0] = f1
        out[k + 1, 1] = f2
        out[k + 1, 2] = dd
    return -1


def simulate(point: OperatingPoint, params: SimParams | None = None, *,
             uniform: bool = False) -> FrequencyTrace:
    """Simulate the loss of ``point.p_loss`` MW in ``point.faulted_region``.

    With ``uniform=True`` the two regions are lumped into one bus (the
    infinitely stiff corridor limit): both regional traces then equal the
    centre-of-inertia trace and the tie flow is reported as zero.

    Raises
    ------
    SimulationError
        If the state becomes non-finite; the message names the first bad step.
    """
    params = params or SimParams()
    n = params.n_steps
    out = np.empty((n + 1, 3))
    if uniform:
        # two identical copies of the aggregate bus, uncoupled
        a = point.f0 / (2.0 * point.h_total)
        k_sync = 0.0
        args = (a, a, point.p_loss, point.p_loss, point.r_total, point.r_total,
                params.t_del, point.dpd1 + point.dpd2, point.dpd1 + point.dpd2)
    else:
        loss1 = point.p_loss if point.faulted_region == 1 else 0.0
        loss2 = point.p_loss if point.faulted_region == 2 else 0.0
        k_sync = point.sync_coefficient
        args = (point.f0 / (2.0 * point.h1), point.f0 / (2.0 * point.h2),
                loss1, loss2, point.r1, point.r2, params.t_del, point.dpd1, point.dpd2)
    bad = _integrate(n, params.dt, *args, k_sync, out)
    if bad >= 0:
        raise SimulationError(
            f"non-finite state at step {bad} (t = {bad * params.dt:.6g} s) for {point}"
        )
    times = np.arange(n + 1) * params.dt
    df1, df2 = out[:, 0], out[:, 1]
    df_coi = (point.h1 * df1 + point.h2 * df2) / (point.h1 + point.h2)
    return FrequencyTrace(times, df1, df2, k_sync * np.sin(out[:, 2]), df_coi)


def coi_rocof(point: OperatingPoint) -> float:
    """Initial centre-of-inertia RoCoF magnitude, Hz/s."""
    return point.p_loss * point.f0 / (2.0 * point.h_total)


def analyze(trace: FrequencyTrace, point: OperatingPoint) -> TraceStats:
    if len(trace) < 2:
        raise ValueError("trace needs at least two samples")
    t = trace.times
    dt = np.diff(t)
    rocof1 = np.abs(np.diff(trace.df1) / dt)
    rocof2 = np.abs(np.diff(trace.df2) / dt)
    k1 = int(np.argmin(trace.df1))
    k2 = int(np.argmin(trace.df2))
    coi_term = coi_rocof(point)
    max1, max2 = float(rocof1.max()), float(rocof2.max())

    # integrals run to the nadir of the faulted region
    kf = k1 if point.faulted_region == 1 else k2
    tt = t[: kf + 1]
    if kf == 0:
        i_diff = i_self1 = i_self2 = 0.0
    else:
        inner = cumulative_trapezoid(trace.df1[: kf + 1] - trace.df2[: kf + 1], tt, initial=0.0)
        i_diff = float(trapezoid(inner, tt))
        i_self1 = float(trapezoid(trace.df1[: kf + 1], tt))
        i_self2 = float(trapezoid(trace.df2[: kf + 1], tt))

    return TraceStats(
        max_rocof_1=max1,
        max_rocof_2=max2,
        nadir_1=float(-trace.df1[k1]),
        nadir_2=float(-trace.df2[k2]),
        t_nadir_1=float(t[k1]),
        t_nadir_2=float(t[k2]),
        coi_rocof_0=float(abs(trace.df_coi[1] - trace.df_coi[0]) / dt[0]),
        osc_label_1=max1 - coi_term,
        osc_label_2=max2 - coi_term,
        integral_diff=i_diff,
        integral_self_1=i_self1,
        integral_self_2=i_self2,
    )


def coi_nadir_threshold(p_loss: float, f0: float, t_del: float, df_max: float) -> float:
    """Damping-free COI nadir threshold ``k*`` (MW^2 s) for a linear response ramp.

    With ``(2H/f0) d(df)/dt = -P + R t / t_del`` the nadir occurs at
    ``t = P t_del / R`` and equals ``f0 P^2 t_del / (4 H R)``, so the nadir stays
    within ``df_max`` iff ``H * R >= f0 P^2 t_del / (4 df_max)``.
    """
    if min(f0, t_del, df_max) <= 0 or p_loss < 0:
        raise ValueError("coi_nadir_threshold needs positive arguments")
    return f0 * p_loss**2 * t_del / (4.0 * df_max)


def write_trace_csv(trace: FrequencyTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "df1", "df2", "tie_flow", "df_coi"])
        for row in zip(trace.times, trace.df1, trace.df2, trace.tie_flow, trace.df_coi):
            w.writerow([repr(float(v)) for v in row])

"""Linear frequency-security rows over the scheduler quantities (H1, H2, R1, R2).

Every row has the form ``c_h1*H1 + c_h2*H2 + c_r1*R1 + c_r2*R2 >= rhs`` with
inertia in MW·s and response in MW.  Demand enters only through the damping
terms ``d_i * pd_i`` (MW/Hz) which are constants for a given period and are
folded into ``rhs``; :meth:`SecurityConstraintSet.rebuild` re-folds them for
another period.

Regional RoCoF rows come from a model of the oscillatory excess over the
centre-of-inertia RoCoF::

    max RoCoF_i  ~  (f0*P_L + theta . x) / (2 (H1 + H2))  <=  RoCoF_max

and are cleared of the positive denominator.  Regional nadir rows use a
directly fitted conservative overestimate ``theta . x >= nadir_i`` (a
surrogate; the fitted form is recorded in the pack metadata).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import OperatingPoint
from .regression import FEATURE_NAMES, RegressionModel, RegressionProblem, solve_conservative_ls

NADIR_SURROGATE = "nadir_direct: conservative linear overestimate of regional nadir"


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class SecurityParams:
    p_loss: float
    faulted_region: int = 1
    rocof_max: float = 1.0
    df_max: float = 0.8
    df_ss_max: float = 0.5
    f0: float = 50.0
    h_loss: float = 0.0

    def __post_init__(self):
        if self.rocof_max <= 0:
            raise ConstraintError("rocof_max must be positive")
        if not self.df_max > self.df_ss_max > 0:
            raise ConstraintError("need df_max > df_ss_max > 0")
        if self.p_loss < 0 or self.h_loss < 0:
            raise ConstraintError("p_loss and h_loss must be non-negative")
        if self.faulted_region not in (1, 2):
            raise ConstraintError("faulted_region must be 1 or 2")


@dataclass(frozen=True)
class ConstraintRow:
    name: str
    coeff_h1: float
    coeff_h2: float
    coeff_r1: float
    coeff_r2: float
    rhs: float
    sense: str = ">="

    def __post_init__(self):
        vals = (self.coeff_h1, self.coeff_h2, self.coeff_r1, self.coeff_r2, self.rhs)
        if not all(math.isfinite(v) for v in vals):
            raise ConstraintError(f"row {self.name}: non-finite entry")
        if self.sense != ">=":
            raise ConstraintError(f"row {self.name}: only '>=' rows are supported")
        if not any(self.coeffs) and self.rhs > 0:
            raise ConstraintError(f"row {self.name}: all coefficients zero with rhs {self.rhs} > 0")

    @property
    def coeffs(self) -> tuple[float, float, float, float]:
        return (self.coeff_h1, self.coeff_h2, self.coeff_r1, self.coeff_r2)

    @property
    def vacuous(self) -> bool:
        """True for the degenerate all-zero row ``0 >= rhs`` with ``rhs <= 0``.

        An all-zero row with a positive right-hand side is not vacuous: no
        dispatch satisfies it, and the scheduler must report that.
        """
        return not any(self.coeffs) and self.rhs <= 1e-9

    def lhs(self, h1, h2, r1, r2) -> float:
        return self.coeff_h1 * h1 + self.coeff_h2 * h2 + self.coeff_r1 * r1 + self.coeff_r2 * r2

    def slack(self, h1, h2, r1, r2) -> float:
        return self.lhs(h1, h2, r1, r2) - self.rhs

    def satisfied(self, h1, h2, r1, r2, tol: float = 1e-9) -> bool:
        return self.slack(h1, h2, r1, r2) >= -tol * max(1.0, abs(self.rhs))


def _split(theta):
    th = np.asarray(theta, dtype=float)
    if th.shape != (8,):
        raise ConstraintError(f"expected 8 coefficients, got {th.shape}")
    return th


def _check_kind(model: RegressionModel, kind: str):
    if model.kind != kind:
        raise ConstraintError(f"model kind {model.kind!r} given where {kind!r} is required")


def rocof_row(model: RegressionModel, params: SecurityParams, dpd1: float, dpd2: float,
              region: int) -> ConstraintRow:
    """Regional RoCoF row, scaled so a zero model reads ``H1 + H2 >= f0 P_L / (2 RoCoF_max)``."""
    _check_kind(model, "rocof")
    m = _split(model.theta)
    k = 2.0 * params.rocof_max
    const = params.f0 * params.p_loss + m[2] * params.p_loss + m[3] * dpd1 + m[4] * dpd2 + m[7]
    return ConstraintRow(
        name=f"rocof_region{region}",
        coeff_h1=float((k - m[0]) / k),
        coeff_h2=float((k - m[1]) / k),
        coeff_r1=float(-m[5] / k),
        coeff_r2=float(-m[6] / k),
        rhs=float(const / k),
    )


def nadir_row(model: RegressionModel, params: SecurityParams, dpd1: float, dpd2: float,
              region: int | None) -> ConstraintRow:
    """Nadir row ``theta . x <= df_max``, rescaled so its largest coefficient is 1 in magnitude.

    ``region=None`` labels a centre-of-inertia nadir row.
    """
    _check_kind(model, "nadir_direct")
    m = _split(model.theta)
    coeffs = -np.array([m[0], m[1], m[5], m[6]])
    rhs = m[2] * params.p_loss + m[3] * dpd1 + m[4] * dpd2 + m[7] - params.df_max
    scale = float(np.abs(coeffs).max())
    if scale > 0:
        coeffs, rhs = coeffs / scale, rhs / scale
    name = "nadir_coi" if region is None else f"nadir_region{region}"
    return ConstraintRow(name, *map(float, coeffs), float(rhs))


def qss_row(params: SecurityParams, dpd_total: float) -> ConstraintRow:
    return ConstraintRow("qss", 0.0, 0.0, 1.0, 1.0,
                         params.p_loss - dpd_total * params.df_ss_max)


def coi_rocof_row(params: SecurityParams) -> ConstraintRow:
    return ConstraintRow("rocof_coi", 1.0, 1.0, 0.0, 0.0,
                         params.f0 * params.p_loss / (2.0 * params.rocof_max))


# -- fitting -----------------------------------------------------------------

def rocof_design(X: np.ndarray) -> np.ndarray:
    """Divide feature rows by ``2 (H1 + H2)`` so the fit targets RoCoF units."""
    X = np.asarray(X, dtype=float)
    return X / (2.0 * (X[:, 0] + X[:, 1]))[:, None]


def _domain(X: np.ndarray) -> dict:
    dom = {n: [float(X[:, j].min()), float(X[:, j].max())] for j, n in enumerate(FEATURE_NAMES[:7])}
    h_share = X[:, 0] / (X[:, 0] + X[:, 1])
    dom["h_share1"] = [float(h_share.min()), float(h_share.max())]
    r_tot = X[:, 5] + X[:, 6]
    if np.all(r_tot > 0):
        r_share = X[:, 5] / r_tot
        dom["r_share1"] = [float(r_share.min()), float(r_share.max())]
    return dom


def fit_model(sample_set, region: int | None, kind: str | None = None) -> RegressionModel:
    """Fit the conservative model of ``kind`` for ``region`` from a sample set.

    ``kind`` defaults from the sweep target (``rocof`` or ``nadir_direct``).
    For a uniform (single-bus) sweep pass ``region=None``; the region-1 labels
    are used, which equal the COI labels there.
    """
    spec = sample_set.spec
    kind = kind or ("rocof" if spec.target == "rocof" else "nadir_direct")
    if kind == "rocof" and spec.target != "rocof":
        raise ConstraintError("rocof models need a rocof sweep")
    if kind == "nadir_direct" and spec.target != "nadir":
        raise ConstraintError("nadir models need a nadir sweep")
    X, y = sample_set.matrix(1 if region is None else region)
    if len(y) == 0:
        raise ConstraintError(f"no samples for region {region}")
    A = rocof_design(X) if kind == "rocof" else X
    return solve_conservative_ls(RegressionProblem(A, y), kind=kind, region=region,
                                 faulted_region=spec.faulted_region, domain=_domain(X))


def predicted_metric(model: RegressionModel, point: OperatingPoint) -> float:
    """Model prediction of the regional metric at ``point`` (RoCoF in Hz/s or nadir in Hz)."""
    x = point.features()
    if model.kind == "rocof":
        return (point.f0 * point.p_loss + float(model.theta @ x)) / (2.0 * point.h_total)
    if model.kind == "nadir_direct":
        return float(model.theta @ x)
    raise ConstraintError(f"no metric prediction for kind {model.kind!r}")


# -- packs -------------------------------------------------------------------

@dataclass
class SecurityConstraintSet:
    rows: list[ConstraintRow]
    params: SecurityParams
    models: list[RegressionModel] = field(default_factory=list, repr=False)
    mode: str = "regional"
    dpd: tuple[float, float] = (0.0, 0.0)

    @property
    def models_used(self) -> list[dict]:
        return [{"kind": m.kind, "region": m.region, "digest": m.digest()} for m in self.models]

    def row(self, name: str) -> ConstraintRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """``(A, b)`` with ``A @ [H1, H2, R1, R2] >= b``."""
        A = np.array([r.coeffs for r in self.rows], dtype=float).reshape(-1, 4)
        return A, np.array([r.rhs for r in self.rows], dtype=float)

    def satisfied(self, h1, h2, r1, r2, tol: float = 1e-9) -> bool:
        return all(r.satisfied(h1, h2, r1, r2, tol) for r in self.rows)

    def violations(self, h1, h2, r1, r2, tol: float = 1e-9) -> list[str]:
        return [r.name for r in self.rows if not r.satisfied(h1, h2, r1, r2, tol)]

    def guard_rows(self) -> list[ConstraintRow]:
        """Rows keeping the regional inertia and response shares inside the
        range every regional model was trained on.

        The fitted rows are linear and only trusted on their training domain;
        the share of region 1 is the one direction a scheduler can push far
        outside it (e.g. no synchronous plant at all in region 2).  Kept apart
        from :attr:`rows` so the six-row pack layout is unchanged.
        """
        if self.mode != "regional":
            return []
        out = []
        for key, name, (ci, cj) in (("h_share1", "guard_h_share", (0, 1)),
                                    ("r_share1", "guard_r_share", (2, 3))):
            spans = [m.domain[key] for m in self.models if m.domain and key in m.domain]
            if not spans:
                continue
            lo = max(a for a, _ in spans)
            hi = min(b for _, b in spans)
            for tag, share, sign in (("lo", lo, 1.0), ("hi", hi, -1.0)):
                if (tag == "lo" and share <= 0.0) or (tag == "hi" and share >= 1.0):
                    continue
                # sign * (x1 - share * (x1 + x2)) >= 0
                c = [0.0, 0.0, 0.0, 0.0]
                c[ci], c[cj] = sign * (1.0 - share), -sign * share
                out.append(ConstraintRow(f"{name}_{tag}", *c, 0.0))
        return out

    def rebuild(self, dpd1: float, dpd2: float) -> "SecurityConstraintSet":
        """Same pack with the demand-dependent terms re-folded."""
        if not self.models:  # hand-written rows carry no demand terms
            return self
        if self.mode == "uniform":
            return build_uniform(self.models, self.params, dpd1, dpd2, warn=False)
        return build(self.models, self.params, dpd1, dpd2, warn=False)

    def to_dict(self) -> dict:
        return {
            "params": asdict(self.params),
            "mode": self.mode,
            "dpd": list(self.dpd),
            "rows": [
                {k: v for k, v in asdict(r).items() if k != "sense"} for r in self.rows
            ],
            "models_used": self.models_used,
            "models": [m.to_dict() for m in self.models],
            "nadir_form": NADIR_SURROGATE,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SecurityConstraintSet":
        return cls(
            rows=[ConstraintRow(**r) for r in d["rows"]],
            params=SecurityParams(**d["params"]),
            models=[RegressionModel.from_dict(m) for m in d.get("models", [])],
            mode=d.get("mode", "regional"),
            dpd=tuple(d.get("dpd", (0.0, 0.0))),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "SecurityConstraintSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _warn_domain(model: RegressionModel, params: SecurityParams, dpd1: float, dpd2: float):
    dom = model.domain
    if not dom:
        return
    for name, val in (("p_loss", params.p_loss), ("dpd1", dpd1), ("dpd2", dpd2)):
        lo, hi = dom.get(name, (-np.inf, np.inf))
        span = max(hi - lo, 1e-9 * max(1.0, abs(hi)))
        if val < lo - 0.05 * span or val > hi + 0.05 * span:
            warnings.warn(
                f"{model.kind} model (region {model.region}) trained on {name} in "
                f"[{lo:.6g}, {hi:.6g}], used at {val:.6g}",
                stacklevel=3,
            )


def _pick(models, kind, region, faulted):
    for m in models:
        if m.kind == kind and m.region == region and m.faulted_region in (None, faulted):
            return m
    raise ConstraintError(
        f"missing {kind} model for region {region} with the fault in region {faulted}"
    )


def build(models: list[RegressionModel], params: SecurityParams, dpd1: float, dpd2: float,
          *, warn: bool = True) -> SecurityConstraintSet:
    """Six-row regional pack: qss, COI RoCoF, and RoCoF plus nadir rows per region."""
    picked = {(k, r): _pick(models, k, r, params.faulted_region)
              for k in ("rocof", "nadir_direct") for r in (1, 2)}
    if warn:
        for m in picked.values():
            _warn_domain(m, params, dpd1, dpd2)
    rows = [qss_row(params, dpd1 + dpd2), coi_rocof_row(params)]
    for r in (1, 2):
        rows.append(rocof_row(picked["rocof", r], params, dpd1, dpd2, r))
    for r in (1, 2):
        rows.append(nadir_row(picked["nadir_direct", r], params, dpd1, dpd2, r))
    return SecurityConstraintSet(rows, params, list(picked.values()), "regional", (dpd1, dpd2))


def build_uniform(models: list[RegressionModel], params: SecurityParams, dpd1: float,
                  dpd2: float, *, warn: bool = True) -> SecurityConstraintSet:
    """Centre-of-inertia pack (qss, COI RoCoF, optional COI nadir) ignoring regional effects.

    This is the uniform-frequency baseline, not a regional security guarantee.
    """
    rows = [qss_row(params, dpd1 + dpd2), coi_rocof_row(params)]
    used = [m for m in models if m.kind == "nadir_direct" and m.region is None]
    if used:
        if warn:
            _warn_domain(used[0], params, dpd1, dpd2)
        rows.append(nadir_row(used[0], params, dpd1, dpd2, None))
    return SecurityConstraintSet(rows, params, used[:1], "uniform", (dpd1, dpd2))

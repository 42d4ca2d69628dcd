"""Conservative (above-all-samples) least-squares regression.

Solves::

    min_theta  1/2 ||X theta - y||^2    s.t.  X theta >= y

with a primal active-set method run in an orthonormal basis of the column
space of ``X``.  In that basis the Hessian is the identity, which keeps the
iteration well conditioned even when features are nearly collinear, and the
map back to theta picks the minimum-norm solution.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FEATURE_NAMES = ("h1", "h2", "p_loss", "dpd1", "dpd2", "r1", "r2", "intercept")
KINDS = ("rocof", "nadir_diff", "nadir_self", "nadir_direct")

FEAS_TOL = 1e-9
STAT_TOL = 1e-8


class RegressionError(ValueError):
    pass


@dataclass
class RegressionProblem:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        n, p = self.X.shape
        if len(self.y) != n:
            raise RegressionError(f"X has {n} rows but y has {len(self.y)} entries")
        if len(self.feature_names) != p:
            raise RegressionError(f"{p} columns but {len(self.feature_names)} feature names")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise RegressionError("non-finite entries in X or y")
        if n < p:
            warnings.warn(f"only {n} samples for {p} coefficients", stacklevel=2)


@dataclass
class RegressionModel:
    theta: np.ndarray
    kind: str = "rocof"
    feature_names: tuple[str, ...] = FEATURE_NAMES
    training_stats: dict = field(default_factory=dict)
    region: int | None = None
    faulted_region: int | None = None
    rank_deficient: bool = False
    multipliers: np.ndarray | None = field(default=None, repr=False)
    domain: dict | None = None  # feature -> [min, max] seen in training

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.kind not in KINDS:
            raise RegressionError(f"unknown model kind {self.kind!r}")

    def predict(self, features) -> float:
        return predict(self, features)

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "theta": [float(v) for v in self.theta],
            "feature_names": list(self.feature_names),
            "training_stats": {k: float(v) for k, v in self.training_stats.items()},
        }
        if self.region is not None:
            d["region"] = self.region
        if self.faulted_region is not None:
            d["faulted_region"] = self.faulted_region
        if self.domain is not None:
            d["domain"] = {k: [float(a), float(b)] for k, (a, b) in self.domain.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionModel":
        return cls(
            theta=np.asarray(d["theta"], dtype=float),
            kind=d["kind"],
            feature_names=tuple(d.get("feature_names", FEATURE_NAMES)),
            training_stats=dict(d.get("training_stats", {})),
            region=d.get("region"),
            faulted_region=d.get("faulted_region"),
            domain=d.get("domain"),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "RegressionModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict(model: RegressionModel, features) -> float:
    x = np.asarray(features, dtype=float).ravel()
    if x.shape != model.theta.shape:
        raise RegressionError(
            f"feature vector has length {x.size}, model expects {model.theta.size}"
        )
    return float(model.theta @ x)


def _feasible_start(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """A point with ``X theta >= y``."""
    ones = np.flatnonzero(np.all(X == 1.0, axis=0))
    theta = np.zeros(X.shape[1])
    if ones.size:
        theta[ones[0]] = max(0.0, float(y.max()))
        return theta
    zero_rows = ~np.any(X != 0.0, axis=1)
    if np.any(zero_rows & (y > 0)):
        raise RegressionError("an all-zero feature row has a positive label: infeasible")
    from scipy.optimize import linprog

    # maximise the worst slack, capped so the LP stays bounded
    n, p = X.shape
    res = linprog(
        np.r_[np.zeros(p), -1.0],
        A_ub=np.c_[-X, np.ones(n)],
        b_ub=-y,
        bounds=[(None, None)] * p + [(None, 1.0)],
        method="highs",
    )
    if res.status != 0 or res.x[-1] < -FEAS_TOL:
        raise RegressionError("no theta satisfies X theta >= y")
    return res.x[:p]


def _lstsq(A, b):
    return np.linalg.lstsq(A, b, rcond=None)[0]


def _project(U: np.ndarray, y: np.ndarray, z: np.ndarray, max_iter: int):
    """Project ``c = U^T y`` onto ``{z : U z >= y}`` from the feasible ``z``.

    ``U`` has orthonormal columns, so the objective ``1/2 ||U z - y||^2`` is
    ``1/2 ||z - c||^2`` up to a constant.  Primal active set with Bland-style
    smallest-index tie breaking.
    """
    n, k = U.shape
    c = U.T @ y
    scale = max(1.0, float(np.abs(y).max()))
    work: list[int] = []
    lam = np.zeros(0)
    for _ in range(max_iter):
        g = c - z
        if work:
            Q, _ = np.linalg.qr(U[work].T)
            p = g - Q @ (Q.T @ g)
        else:
            p = g
        if np.linalg.norm(p) <= 1e-12 * scale:
            if not work:
                return z, work, lam
            lam = _lstsq(U[work].T, -g)
            if lam.min() >= -STAT_TOL * scale:
                return z, work, lam
            # drop the most negative multiplier (lowest index on ties)
            work.pop(int(np.argmin(lam)))
            continue
        slack = np.maximum(U @ z - y, 0.0)
        Up = U @ p
        alpha, block = 1.0, None
        for j in np.flatnonzero(Up < -1e-13 * np.linalg.norm(p)):
            if j in work:
                continue
            a = slack[j] / -Up[j]
            if a < alpha - 1e-15:
                alpha, block = a, int(j)
        z = z + alpha * p
        if block is not None:
            work.append(block)
            if len(work) > k:
                raise RegressionError("working set exceeds problem rank")
    raise RegressionError("active-set iteration limit reached")


def solve_conservative_ls(prob: RegressionProblem, kind: str = "rocof", max_iter: int = 10_000,
                          **meta) -> RegressionModel:
    """Fit ``min 1/2 ||X theta - y||^2`` subject to ``X theta >= y``.

    The problem is solved in an orthonormal basis of the column space of
    ``X``; when ``X`` is rank deficient the minimum-norm optimal theta is
    returned and ``rank_deficient`` is set.  Training residuals of the result
    are ``>= -1e-9`` (relative to the label scale).
    """
    X, y = prob.X, prob.y
    n, p = X.shape
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    k = int(np.sum(s > s[0] * max(n, p) * np.finfo(float).eps)) if s.size and s[0] > 0 else 0
    if k == 0:
        if np.any(y > FEAS_TOL):
            raise RegressionError("X is all zeros but some labels are positive: infeasible")
        theta = np.zeros(p)
        work, lam = [], np.zeros(0)
    else:
        U, s, Vt = U[:, :k], s[:k], Vt[:k]
        theta0 = _feasible_start(X, y)
        z0 = s * (Vt @ theta0)
        z, work, lam = _project(U, y, z0, max_iter)
        theta = Vt.T @ (z / s)

    resid = X @ theta - y
    tol = FEAS_TOL * max(1.0, float(np.abs(y).max()))
    if resid.min() < -tol:
        bad = np.flatnonzero(resid < 0)
        theta = theta + _lstsq(X[bad], -resid[bad])
        resid = X @ theta - y

    mult = np.zeros(n)
    if work and len(lam) == len(work):
        mult[work] = np.maximum(lam, 0.0)
    stats = {
        "mean_overestimation": float(resid.mean()),
        "max_overestimation": float(resid.max()),
        "min_overestimation": float(resid.min()),
        "n_samples": float(n),
    }
    return RegressionModel(
        theta=theta,
        kind=kind,
        feature_names=tuple(prob.feature_names),
        training_stats=stats,
        rank_deficient=k < p,
        multipliers=mult,
        **meta,
    )

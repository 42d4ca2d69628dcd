"""Matrix-form mixed-integer linear programs and two solver adapters.

A :class:`MILP` is ``min c.x + offset`` subject to ``row_lo <= A x <= row_hi``,
``lb <= x <= ub`` and integrality on a subset of variables.  Adapters turn it
into a :class:`MILPResult`:

* :class:`HighsAdapter` hands the problem to HiGHS through ``scipy.optimize.milp``.
* :class:`BranchAndBoundAdapter` is self-contained: best-first branch and bound
  over a dense two-phase simplex (Dantzig pricing with a Bland fallback).  It is meant for small
  instances, e.g. to cross-check HiGHS without trusting it.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

INF = math.inf


@dataclass
class MILP:
    c: np.ndarray
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray  # bool mask
    offset: float = 0.0
    var_names: list[str] = field(default_factory=list)
    row_names: list[str] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        return float(self.c @ x) + self.offset

    def max_violation(self, x) -> float:
        ax = self.A @ x
        v = [0.0]
        v.append(float(np.max(self.row_lo - ax, initial=0.0)))
        v.append(float(np.max(ax - self.row_hi, initial=0.0)))
        v.append(float(np.max(self.lb - x, initial=0.0)))
        v.append(float(np.max(x - self.ub, initial=0.0)))
        return max(v)


@dataclass
class MILPResult:
    status: str  # optimal | gap-feasible | infeasible | time-limit | unbounded
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    message: str = ""
    nodes: int = 0


class SolverError(RuntimeError):
    pass


def _gap(obj, bound):
    if not (math.isfinite(obj) and math.isfinite(bound)):
        return INF
    return abs(obj - bound) / max(1.0, abs(obj))


class HighsAdapter:
    name = "highs"

    def __init__(self, gap: float = 1e-3, time_limit: float | None = None):
        self.gap = gap
        self.time_limit = time_limit

    def solve(self, prob: MILP) -> MILPResult:
        from scipy.optimize import Bounds, LinearConstraint, milp

        opts = {"mip_rel_gap": self.gap, "disp": False}
        if self.time_limit:
            opts["time_limit"] = self.time_limit
        cons = [LinearConstraint(prob.A, prob.row_lo, prob.row_hi)] if prob.n_rows else []
        res = milp(prob.c, integrality=prob.integer.astype(int), bounds=Bounds(prob.lb, prob.ub),
                   constraints=cons, options=opts)
        if res.x is None:
            status = {2: "infeasible", 3: "unbounded", 1: "time-limit"}.get(res.status, "error")
            return MILPResult(status, None, INF, INF, INF, res.message)
        x = np.asarray(res.x, dtype=float)
        x[prob.integer] = np.round(x[prob.integer])
        obj = prob.objective(x)
        bound = getattr(res, "mip_dual_bound", None)
        bound = obj if bound is None or not np.isfinite(bound) else float(bound) + prob.offset
        gap = max(0.0, _gap(obj, bound)) if prob.integer.any() else 0.0
        if res.status == 0:
            status = "optimal" if gap <= 1e-9 else "gap-feasible"
        else:
            status = "time-limit"
        return MILPResult(status, x, obj, bound, gap, res.message)


# -- dense simplex -------------------------------------------------------------

class _LPInfeasible(Exception):
    pass


class _LPUnbounded(Exception):
    pass


def _simplex_std(A: np.ndarray, b: np.ndarray, c: np.ndarray, tol: float = 1e-9,
                 max_iter: int = 50_000) -> np.ndarray:
    """``min c.x  s.t.  A x = b, x >= 0`` by a two-phase tableau method."""
    m, n = A.shape
    A = A.copy()
    b = b.copy()
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # phase 1 tableau: [A | I | b], artificial basis
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(n, n + m))
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()

    def pivot(T, i, j):
        T[i] /= T[i, j]
        col = T[:, j].copy()
        col[i] = 0.0
        T -= np.outer(col, T[i])

    def run(T, basis, ncols):
        # Dantzig pricing, switching to Bland's rule after a run of degenerate pivots
        stall = 0
        for _ in range(max_iter):
            red = T[-1, :ncols]
            cand = np.flatnonzero(red < -tol)
            if cand.size == 0:
                return
            j = int(cand[0]) if stall > 50 else int(cand[np.argmin(red[cand])])
            col = T[:-1, j]
            pos = col > tol
            if not pos.any():
                raise _LPUnbounded()
            ratios = np.full(len(col), INF)
            ratios[pos] = T[:-1, -1][pos] / col[pos]
            rmin = ratios.min()
            ties = np.flatnonzero(ratios <= rmin + tol * max(1.0, abs(rmin)))
            i = min(ties, key=lambda k: basis[k])
            stall = stall + 1 if rmin <= tol else 0
            pivot(T, i, j)
            basis[i] = j
        raise SolverError("simplex iteration limit")

    run(T, basis, n + m)
    if T[m, -1] < -1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
        raise _LPInfeasible()
    # drive artificials out of the basis where possible
    for i in range(m):
        if basis[i] >= n:
            nz = np.flatnonzero(np.abs(T[i, :n]) > tol)
            if nz.size:
                j = int(nz[0])
                pivot(T, i, j)
                basis[i] = j
    keep = [i for i in range(m) if basis[i] < n]
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis2 = [basis[i] for i in keep]
    T2[-1, :n] = c
    for r, j in enumerate(basis2):
        if T2[-1, j] != 0.0:
            T2[-1] -= T2[-1, j] * T2[r]
    run(T2, basis2, n)
    x = np.zeros(n)
    for r, j in enumerate(basis2):
        x[j] = T2[r, -1]
    return x


def solve_lp_dense(c, A, row_lo, row_hi, lb, ub) -> np.ndarray:
    """Solve a small LP in the MILP row/bound form with the dense simplex.

    Raises ``_LPInfeasible`` / ``_LPUnbounded``.
    """
    A = np.asarray(A.todense() if sp.issparse(A) else A, dtype=float)
    n = len(c)
    # variable substitution x = shift + sign * y (y >= 0), free vars split in two
    shift, sign, owner = np.zeros(n), np.ones(n), []
    extra_ub = []
    for j in range(n):
        lo, hi = lb[j], ub[j]
        if math.isfinite(lo):
            shift[j] = lo
            owner.append((j, 1.0))
            if math.isfinite(hi):
                extra_ub.append((len(owner) - 1, hi - lo))
        elif math.isfinite(hi):
            shift[j], sign[j] = hi, -1.0
            owner.append((j, -1.0))
        else:
            owner.append((j, 1.0))
            owner.append((j, -1.0))
    ny = len(owner)
    M = np.zeros((A.shape[0], ny))
    cy = np.zeros(ny)
    for k, (j, s) in enumerate(owner):
        M[:, k] = s * A[:, j]
        cy[k] = s * c[j]
    base = A @ shift
    rows, rhs, slack_sign = [], [], []
    for i in range(A.shape[0]):
        lo, hi = row_lo[i] - base[i], row_hi[i] - base[i]
        if math.isfinite(lo) and math.isfinite(hi) and abs(hi - lo) <= 1e-12 * max(1.0, abs(hi)):
            rows.append(M[i]); rhs.append(hi); slack_sign.append(0)
            continue
        if math.isfinite(hi):
            rows.append(M[i]); rhs.append(hi); slack_sign.append(1)
        if math.isfinite(lo):
            rows.append(M[i]); rhs.append(lo); slack_sign.append(-1)
    for k, u in extra_ub:
        e = np.zeros(ny)
        e[k] = 1.0
        rows.append(e); rhs.append(u); slack_sign.append(1)
    n_slack = sum(1 for s in slack_sign if s != 0)
    S = np.zeros((len(rows), ny + n_slack))
    k = ny
    for i, (r, s) in enumerate(zip(rows, slack_sign)):
        S[i, :ny] = r
        if s != 0:
            S[i, k] = s
            k += 1
    y = _simplex_std(S, np.array(rhs, dtype=float), np.r_[cy, np.zeros(n_slack)])[:ny]
    x = shift.copy()
    for k, (j, s) in enumerate(owner):
        x[j] += s * y[k]
    return x


class BranchAndBoundAdapter:
    """Best-first branch and bound on the dense simplex relaxation."""

    name = "bnb"

    def __init__(self, gap: float = 1e-3, time_limit: float | None = None, int_tol: float = 1e-6,
                 max_nodes: int = 200_000):
        self.gap = gap
        self.time_limit = time_limit
        self.int_tol = int_tol
        self.max_nodes = max_nodes

    def _relax(self, prob, lb, ub):
        try:
            x = solve_lp_dense(prob.c, prob.A, prob.row_lo, prob.row_hi, lb, ub)
        except _LPInfeasible:
            return None
        return x

    def solve(self, prob: MILP) -> MILPResult:
        t0 = time.monotonic()
        A_dense = np.asarray(prob.A.todense(), dtype=float)
        dense = MILP(prob.c, A_dense, prob.row_lo, prob.row_hi, prob.lb, prob.ub,
                     prob.integer, prob.offset)
        try:
            x0 = self._relax(dense, prob.lb, prob.ub)
        except _LPUnbounded:
            return MILPResult("unbounded", None, -INF, -INF, INF, "LP relaxation unbounded")
        if x0 is None:
            return MILPResult("infeasible", None, INF, INF, INF, "LP relaxation infeasible")
        best_x, best = None, INF
        counter = 0
        heap = [(float(prob.c @ x0), counter, prob.lb.copy(), prob.ub.copy(), x0)]
        nodes = 0
        idx = np.flatnonzero(prob.integer)
        dive = []  # depth-first until the first incumbent, then best-first
        while heap or dive:
            if dive and best_x is None:
                bound, _, lb, ub, x = dive.pop()
            else:
                heap.extend(dive)
                heapq.heapify(heap)
                dive = []
                bound, _, lb, ub, x = heapq.heappop(heap)
            if bound >= best - self.gap * max(1.0, abs(best + prob.offset)):
                heapq.heappush(heap, (bound, -1, lb, ub, x))
                break
            nodes += 1
            if nodes > self.max_nodes or (self.time_limit and time.monotonic() - t0 > self.time_limit):
                heapq.heappush(heap, (bound, -1, lb, ub, x))
                break
            frac = np.abs(x[idx] - np.round(x[idx]))
            if frac.size == 0 or frac.max() <= self.int_tol:
                xr = x.copy()
                xr[idx] = np.round(xr[idx])
                val = float(prob.c @ xr)
                if val < best and dense.max_violation(xr) <= 1e-6:
                    best, best_x = val, xr
                continue
            j = int(idx[np.argmax(frac)])
            v = x[j]
            for lo_j, hi_j in ((lb[j], math.floor(v)), (math.ceil(v), ub[j])):
                if lo_j > hi_j:
                    continue
                lb2, ub2 = lb.copy(), ub.copy()
                lb2[j], ub2[j] = lo_j, hi_j
                xc = self._relax(dense, lb2, ub2)
                if xc is None:
                    continue
                val = float(prob.c @ xc)
                if val < best:
                    counter += 1
                    item = (val, counter, lb2, ub2, xc)
                    if best_x is None:
                        dive.append(item)
                    else:
                        heapq.heappush(heap, item)
        if best_x is None:
            if heap:
                return MILPResult("time-limit", None, INF, heap[0][0] + prob.offset, INF,
                                  "no incumbent", nodes)
            return MILPResult("infeasible", None, INF, INF, INF, "no integer-feasible point", nodes)
        bound = min(best, heap[0][0]) if heap else best
        obj = best + prob.offset
        gap = _gap(obj, bound + prob.offset)
        exhausted = not heap or heap[0][0] >= best - self.gap * max(1.0, abs(obj))
        status = ("optimal" if gap <= 1e-9 else "gap-feasible") if exhausted else "time-limit"
        return MILPResult(status, best_x, obj, bound + prob.offset, gap, "", nodes)


def get_adapter(name: str, gap: float = 1e-3, time_limit: float | None = None):
    if name == "highs":
        return HighsAdapter(gap, time_limit)
    if name == "bnb":
        return BranchAndBoundAdapter(gap, time_limit)
    raise ValueError(f"unknown solver adapter {name!r} (expected 'highs' or 'bnb')")

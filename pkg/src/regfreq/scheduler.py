"""Frequency-secured stochastic unit commitment over a wind scenario tree.

Thermal units are clustered per class: the integer decisions at each tree node
are the number of units online (``n_up``), the number started at that node
(``n_st``, which synchronise ``start_up_time`` levels later in every
descendant), and the number shut down (``n_sd``).  Dispatch, primary response
and the frequency-security rows are per node.

Delays and minimum up/down times are measured in tree levels.  Trees built by
:func:`build_tree` use one-hour levels throughout; for other trees the
conversion uses the root's ``dt``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .constraints import SecurityConstraintSet
from .milp import MILP, MILPResult, get_adapter


class SchedulerError(RuntimeError):
    pass


class InfeasibleSchedule(SchedulerError):
    pass


# -- data ----------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorClass:
    name: str
    region: int
    count: int
    p_max: float
    p_msg: float
    c_nl: float = 0.0
    c_m: float = 0.0
    c_st: float = 0.0
    start_up_time: float = 0.0
    min_up: float = 0.0
    min_down: float = 0.0
    h_const: float = 0.0
    r_max: float = 0.0
    r_slope: float = 0.0
    emissions: float = 0.0
    must_run: bool = False
    ramp: float | None = None  # MW/h per unit, None = unconstrained

    def __post_init__(self):
        if not 0 < self.p_msg <= self.p_max:
            raise ValueError(f"{self.name}: need 0 < p_msg <= p_max")
        if self.count < 1:
            raise ValueError(f"{self.name}: count must be >= 1")
        if not 0 <= self.r_slope <= 1:
            raise ValueError(f"{self.name}: r_slope must lie in [0, 1]")
        if min(self.c_nl, self.c_m, self.c_st) < 0:
            raise ValueError(f"{self.name}: costs must be non-negative")
        if self.region not in (1, 2):
            raise ValueError(f"{self.name}: region must be 1 or 2")
        if min(self.start_up_time, self.min_up, self.min_down, self.h_const, self.r_max) < 0:
            raise ValueError(f"{self.name}: times, inertia and response must be non-negative")

    @property
    def unit_inertia(self) -> float:
        """MW·s contributed by one online unit."""
        return self.h_const * self.p_max


@dataclass(frozen=True)
class TreeNode:
    id: int
    parent: int | None
    probability: float
    dt: float
    demand: tuple[float, float]
    wind: tuple[float, float]
    hour: int = 0


@dataclass
class ScenarioTree:
    nodes: list[TreeNode]

    def __post_init__(self):
        self.validate()
        self._children: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            if n.parent is not None:
                self._children[n.parent].append(n.id)
        self._depth = {}
        for n in self.nodes:  # parents precede children
            self._depth[n.id] = 0 if n.parent is None else self._depth[n.parent] + 1

    def validate(self):
        ids = [n.id for n in self.nodes]
        if ids != list(range(len(ids))):
            raise SchedulerError("tree node ids must be 0..N-1 in order")
        roots = [n for n in self.nodes if n.parent is None]
        if len(roots) != 1 or roots[0].id != 0:
            raise SchedulerError("tree needs exactly one root, with id 0")
        if abs(roots[0].probability - 1.0) > 1e-9:
            raise SchedulerError("root probability must be 1")
        kids: dict[int, float] = {}
        for n in self.nodes:
            if n.dt <= 0:
                raise SchedulerError(f"node {n.id}: dt must be positive")
            if not 0 <= n.probability <= 1 + 1e-12:
                raise SchedulerError(f"node {n.id}: probability outside [0, 1]")
            if min(n.demand) < 0 or min(n.wind) < 0:
                raise SchedulerError(f"node {n.id}: negative demand or wind")
            if n.parent is not None:
                if not 0 <= n.parent < n.id:
                    raise SchedulerError(f"node {n.id}: parent must precede the node")
                kids[n.parent] = kids.get(n.parent, 0.0) + n.probability
        for pid, total in kids.items():
            if abs(total - self.nodes[pid].probability) > 1e-9:
                raise SchedulerError(
                    f"children of node {pid} carry probability {total}, parent has "
                    f"{self.nodes[pid].probability}"
                )

    def __len__(self):
        return len(self.nodes)

    def children(self, i: int) -> list[int]:
        return self._children[i]

    def depth(self, i: int) -> int:
        return self._depth[i]

    def ancestor(self, i: int, k: int) -> int | None:
        """``k`` levels up from node ``i`` (``None`` above the root)."""
        for _ in range(k):
            i = self.nodes[i].parent
            if i is None:
                return None
        return i

    def descendants_at(self, i: int, k: int) -> list[int]:
        level = [i]
        for _ in range(k):
            level = [c for j in level for c in self._children[j]]
        return level


@dataclass
class InitialState:
    """Commitment state entering the root node, per class (same order as the classes).

    ``n_up``: units online before the root.  ``pipeline[g][k]``: units already
    started that synchronise at depth ``k`` (``k < start-up levels``).
    ``recent_sg[g]``/``recent_sd[g]``: synchronisations and shutdowns in the
    previous hours, most recent last (used by minimum up/down counting).
    """

    n_up: list[int]
    pipeline: list[list[int]] = field(default_factory=list)
    recent_sg: list[list[int]] = field(default_factory=list)
    recent_sd: list[list[int]] = field(default_factory=list)
    p_prev: list[float] | None = None


@dataclass
class SchedulerOptions:
    c_ls: float = 30_000.0
    corridor_limit: float | None = 7_500.0
    c_h: tuple[float, float] = (0.0, 0.0)  # £ per MW·s per hour
    c_r: tuple[float, float] = (0.0, 0.0)  # £ per MW per hour
    frequency: bool = True
    gap: float = 1e-3
    time_limit: float | None = None
    damping: float = 0.005
    domain_guard: bool = True  # keep regional shares inside the pack's training range
    pfr_tiebreak: float = 0.01  # £/MWh of response, keeps unused response at zero
    solver: str = "highs"

    def __post_init__(self):
        if self.corridor_limit is not None and self.corridor_limit <= 0:
            raise SchedulerError("corridor limit must be positive (None for unlimited)")
        if self.c_ls < 0 or min(self.c_h + self.c_r) < 0 or self.pfr_tiebreak < 0:
            raise SchedulerError("penalties must be non-negative")


# -- model ---------------------------------------------------------------------

def _levels(hours: float, dt: float) -> int:
    return int(math.ceil(hours / dt - 1e-9)) if hours > 0 else 0


class _Vars:
    def __init__(self):
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []

    def add(self, name, lb, ub, integer=False) -> int:
        self.names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        self.integer.append(integer)
        return len(self.names) - 1


class _Rows:
    def __init__(self):
        self.data, self.ri, self.ci = [], [], []
        self.lo, self.hi, self.names = [], [], []

    def add(self, name, coefs: dict, lo=-math.inf, hi=math.inf):
        r = len(self.lo)
        for j, v in coefs.items():
            if v != 0.0:
                self.ri.append(r)
                self.ci.append(j)
                self.data.append(float(v))
        self.lo.append(lo)
        self.hi.append(hi)
        self.names.append(name)


@dataclass
class MILPInstance:
    milp: MILP
    classes: list[GeneratorClass]
    tree: ScenarioTree
    options: SchedulerOptions
    pack: SecurityConstraintSet | None
    initial: InitialState
    index: dict  # (kind, g or region, node) -> variable index
    node_rows: dict  # node -> list of ConstraintRow actually applied
    delays: list[int]


def _hist(seq: Sequence[int], k: int) -> int:
    """Sum of the last ``k`` entries of a history list."""
    return int(sum(seq[-k:])) if k > 0 and seq else 0


def build_milp(classes: Sequence[GeneratorClass], tree: ScenarioTree,
               pack: SecurityConstraintSet | None, options: SchedulerOptions,
               initial: InitialState | None = None) -> MILPInstance:
    classes = list(classes)
    G = len(classes)
    if not classes:
        raise SchedulerError("no generator classes")
    dt0 = tree.nodes[0].dt
    delays = [_levels(g.start_up_time, dt0) for g in classes]
    mus = [_levels(g.min_up, dt0) for g in classes]
    mds = [_levels(g.min_down, dt0) for g in classes]
    if initial is None:
        initial = InitialState(n_up=[g.count if g.must_run else 0 for g in classes])
    pipeline = [list(initial.pipeline[g]) if g < len(initial.pipeline) else [] for g in range(G)]
    rsg = [list(initial.recent_sg[g]) if g < len(initial.recent_sg) else [] for g in range(G)]
    rsd = [list(initial.recent_sd[g]) if g < len(initial.recent_sd) else [] for g in range(G)]
    for g, c in enumerate(classes):
        pipeline[g] = (pipeline[g] + [0] * delays[g])[: delays[g]]
        if not 0 <= initial.n_up[g] <= c.count:
            raise SchedulerError(f"initial n_up for {c.name} outside [0, count]")
    use_freq = options.frequency and pack is not None

    V, R = _Vars(), _Rows()
    idx: dict = {}
    cost: dict[int, float] = {}
    offset = 0.0

    def addc(j, v):
        cost[j] = cost.get(j, 0.0) + v

    for n in tree.nodes:
        i = n.id
        for g, c in enumerate(classes):
            lo_up = c.count if c.must_run else 0
            idx["up", g, i] = V.add(f"n_up[{c.name},{i}]", lo_up, c.count, True)
            idx["sd", g, i] = V.add(f"n_sd[{c.name},{i}]", 0, 0 if c.must_run else c.count, True)
            idx["p", g, i] = V.add(f"p[{c.name},{i}]", 0.0, c.count * c.p_max)
            idx["r", g, i] = V.add(f"r[{c.name},{i}]", 0.0, c.count * c.r_max)
            # a start decided here synchronises in every descendant `delay` levels down
            if not c.must_run and tree.descendants_at(i, delays[g]):
                idx["st", g, i] = V.add(f"n_st[{c.name},{i}]", 0, c.count, True)
        for a in (1, 2):
            idx["w", a, i] = V.add(f"wind[{a},{i}]", 0.0, n.wind[a - 1])
            idx["ls", a, i] = V.add(f"shed[{a},{i}]", 0.0, n.demand[a - 1])
        lim = options.corridor_limit
        idx["flow", 0, i] = V.add(f"flow[{i}]", -lim if lim is not None else -math.inf,
                                  lim if lim is not None else math.inf)

    def sg_term(g, i):
        """(variable index or None, constant) of the units synchronising at node i."""
        d = delays[g]
        k = tree.depth(i)
        if classes[g].must_run:
            return None, 0
        if k < d:
            return None, pipeline[g][k]
        a = tree.ancestor(i, d)
        return idx["st", g, a], 0

    def path_sum(kind, g, i, window, history):
        """Coefficients/constant of the sum of ``kind`` over the last ``window`` levels."""
        coefs, const = {}, 0
        node = i
        for step in range(window):
            if node is None:
                const += _hist(history, window - step)
                break
            if kind == "sg":
                j, cst = sg_term(g, node)
                if j is not None:
                    coefs[j] = coefs.get(j, 0.0) + 1.0
                const += cst
            else:
                j = idx["sd", g, node]
                coefs[j] = coefs.get(j, 0.0) + 1.0
            node = tree.nodes[node].parent
        return coefs, const

    node_rows = {}
    for n in tree.nodes:
        i, pi, dt = n.id, n.probability, n.dt
        h_expr = {1: {}, 2: {}}
        r_expr = {1: {}, 2: {}}
        for g, c in enumerate(classes):
            up, sd, p, r = idx["up", g, i], idx["sd", g, i], idx["p", g, i], idx["r", g, i]
            # commitment balance
            j_sg, c_sg = sg_term(g, i)
            coefs = {up: 1.0, sd: 1.0}
            if n.parent is None:
                rhs = initial.n_up[g] + c_sg
            else:
                coefs[idx["up", g, n.parent]] = -1.0
                rhs = c_sg
            if j_sg is not None:
                coefs[j_sg] = coefs.get(j_sg, 0.0) - 1.0
            R.add(f"commit[{c.name},{i}]", coefs, rhs, rhs)
            # minimum up / down (counting form)
            if mus[g] > 0 and not c.must_run:
                s, k = path_sum("sg", g, i, mus[g], rsg[g])
                R.add(f"min_up[{c.name},{i}]", {up: 1.0, **{j: -v for j, v in s.items()}}, k)
            if mds[g] > 0 and not c.must_run:
                s, k = path_sum("sd", g, i, mds[g], rsd[g])
                R.add(f"min_down[{c.name},{i}]", {up: 1.0, **s}, -math.inf, c.count - k)
            # output and response limits
            R.add(f"pmin[{c.name},{i}]", {p: 1.0, up: -c.p_msg}, 0.0)
            R.add(f"pmax[{c.name},{i}]", {p: 1.0, up: -c.p_max}, -math.inf, 0.0)
            R.add(f"rmax[{c.name},{i}]", {r: 1.0, up: -c.r_max}, -math.inf, 0.0)
            R.add(f"rhead[{c.name},{i}]", {r: 1.0, p: c.r_slope, up: -c.r_slope * c.p_max},
                  -math.inf, 0.0)
            if c.ramp is not None:
                lim = c.ramp * dt * c.count
                if n.parent is not None:
                    R.add(f"ramp[{c.name},{i}]", {p: 1.0, idx["p", g, n.parent]: -1.0}, -lim, lim)
                elif initial.p_prev is not None:
                    p0 = initial.p_prev[g]
                    R.add(f"ramp[{c.name},{i}]", {p: 1.0}, p0 - lim, p0 + lim)
            # costs
            addc(up, pi * dt * c.c_nl)
            addc(p, pi * dt * c.c_m)
            addc(r, pi * dt * options.pfr_tiebreak)
            if ("st", g, i) in idx:
                addc(idx["st", g, i], pi * c.c_st)
            h_expr[c.region][up] = c.unit_inertia
            r_expr[c.region][r] = 1.0
        # regional balance, flow positive from region 2 to region 1
        f = idx["flow", 0, i]
        for a, sgn in ((1, 1.0), (2, -1.0)):
            coefs = {idx["p", g, i]: 1.0 for g, c in enumerate(classes) if c.region == a}
            coefs[idx["w", a, i]] = 1.0
            coefs[idx["ls", a, i]] = 1.0
            coefs[f] = sgn
            R.add(f"balance[{a},{i}]", coefs, n.demand[a - 1], n.demand[a - 1])
            addc(idx["ls", a, i], pi * dt * options.c_ls)
        # explicit service penalties on regional inertia/response
        h_const = {1: 0.0, 2: 0.0}
        if pack is not None:
            h_const[pack.params.faulted_region] = -pack.params.h_loss
        for a in (1, 2):
            for j, v in h_expr[a].items():
                addc(j, pi * dt * options.c_h[a - 1] * v)
            offset += pi * dt * options.c_h[a - 1] * h_const[a]
            for j, v in r_expr[a].items():
                addc(j, pi * dt * options.c_r[a - 1] * v)
        # frequency-security rows
        if use_freq:
            rows = pack.rebuild(options.damping * n.demand[0], options.damping * n.demand[1]).rows
            if options.domain_guard:
                rows = rows + pack.guard_rows()
            node_rows[i] = rows
            for row in rows:
                if row.vacuous:
                    continue
                coefs: dict[int, float] = {}
                rhs = row.rhs
                for a, ch, cr in ((1, row.coeff_h1, row.coeff_r1), (2, row.coeff_h2, row.coeff_r2)):
                    for j, v in h_expr[a].items():
                        coefs[j] = coefs.get(j, 0.0) + ch * v
                    for j, v in r_expr[a].items():
                        coefs[j] = coefs.get(j, 0.0) + cr * v
                    rhs -= ch * h_const[a]
                R.add(f"{row.name}[{i}]", coefs, rhs)

    nv = len(V.names)
    A = sp.csr_matrix((R.data, (R.ri, R.ci)), shape=(len(R.lo), nv))
    c = np.zeros(nv)
    for j, v in cost.items():
        c[j] = v
    milp = MILP(c=c, A=A, row_lo=np.array(R.lo, float), row_hi=np.array(R.hi, float),
                lb=np.array(V.lb, float), ub=np.array(V.ub, float),
                integer=np.array(V.integer, bool), offset=offset,
                var_names=V.names, row_names=R.names)
    return MILPInstance(milp, classes, tree, options, pack if use_freq else None, initial, idx,
                        node_rows, delays)


# -- solutions -----------------------------------------------------------------

@dataclass
class NodeDecision:
    node: int
    n_up: list[int]
    n_sg: list[int]
    n_sd: list[int]
    n_st: list[int]
    p: list[float]
    r: list[float]
    wind_used: tuple[float, float]
    wind_available: tuple[float, float]
    p_ls: tuple[float, float]
    flow: float
    h1: float
    h2: float
    r1: float
    r2: float
    demand: tuple[float, float]


@dataclass
class Schedule:
    decisions: list[NodeDecision]
    objective: float
    breakdown: dict
    node_costs: list[dict]
    status: str
    gap: float
    classes: list[GeneratorClass]
    tree: ScenarioTree
    options: SchedulerOptions

    @property
    def root(self) -> NodeDecision:
        return self.decisions[0]


def node_cost(classes, node: TreeNode, d: NodeDecision, options: SchedulerOptions) -> dict:
    """Cost of one node recomputed from a decision (before probability weighting)."""
    dt = node.dt
    return {
        "start_up": sum(c.c_st * d.n_st[g] for g, c in enumerate(classes)),
        "no_load": dt * sum(c.c_nl * d.n_up[g] for g, c in enumerate(classes)),
        "marginal": dt * sum(c.c_m * d.p[g] for g, c in enumerate(classes)),
        "load_shed": dt * options.c_ls * sum(d.p_ls),
        "inertia_penalty": dt * (options.c_h[0] * d.h1 + options.c_h[1] * d.h2),
        "response_penalty": dt * (options.c_r[0] * d.r1 + options.c_r[1] * d.r2),
        "pfr_tiebreak": dt * options.pfr_tiebreak * sum(d.r),
    }


def _decode(inst: MILPInstance, x: np.ndarray) -> list[NodeDecision]:
    idx, classes, tree = inst.index, inst.classes, inst.tree
    decisions = []
    for n in tree.nodes:
        i = n.id
        n_up = [int(round(x[idx["up", g, i]])) for g in range(len(classes))]
        n_sd = [int(round(x[idx["sd", g, i]])) for g in range(len(classes))]
        n_st = [int(round(x[idx["st", g, i]])) if ("st", g, i) in idx else 0
                for g in range(len(classes))]
        n_sg = []
        for g, c in enumerate(classes):
            prev = inst.initial.n_up[g] if n.parent is None else decisions[n.parent].n_up[g]
            n_sg.append(n_up[g] - prev + n_sd[g])
        p = [float(x[idx["p", g, i]]) for g in range(len(classes))]
        r = [float(x[idx["r", g, i]]) for g in range(len(classes))]
        h = {1: 0.0, 2: 0.0}
        rr = {1: 0.0, 2: 0.0}
        for g, c in enumerate(classes):
            h[c.region] += c.unit_inertia * n_up[g]
            rr[c.region] += r[g]
        decisions.append(NodeDecision(
            node=i, n_up=n_up, n_sg=n_sg, n_sd=n_sd, n_st=n_st, p=p, r=r,
            wind_used=(float(x[idx["w", 1, i]]), float(x[idx["w", 2, i]])),
            wind_available=n.wind,
            p_ls=(float(x[idx["ls", 1, i]]), float(x[idx["ls", 2, i]])),
            flow=float(x[idx["flow", 0, i]]),
            h1=h[1], h2=h[2], r1=rr[1], r2=rr[2], demand=n.demand,
        ))
    return decisions


def _post_loss(decisions, pack):
    if pack is None:
        return decisions
    f, hl = pack.params.faulted_region, pack.params.h_loss
    out = []
    for d in decisions:
        out.append(replace(d, h1=d.h1 - hl if f == 1 else d.h1, h2=d.h2 - hl if f == 2 else d.h2))
    return out


def _infeasibility_hint(inst: MILPInstance) -> str:
    """Re-solve relaxations with constraint families dropped to name the culprit."""
    from scipy.optimize import linprog

    m = inst.milp
    fams = sorted({n.split("[")[0] for n in m.row_names})
    culprits = []
    for fam in fams:
        keep = np.array([not n.startswith(fam + "[") for n in m.row_names])
        A = m.A[keep]
        lo, hi = m.row_lo[keep], m.row_hi[keep]
        fin_hi, fin_lo = np.isfinite(hi), np.isfinite(lo)
        res = linprog(np.zeros(m.n_vars),
                      A_ub=sp.vstack([A[fin_hi], -A[fin_lo]]) if A.shape[0] else None,
                      b_ub=np.r_[hi[fin_hi], -lo[fin_lo]] if A.shape[0] else None,
                      bounds=list(zip(m.lb, m.ub)), method="highs")
        if res.status == 0:
            culprits.append(fam)
    if culprits:
        return "LP relaxation becomes feasible when dropping: " + ", ".join(culprits)
    return "no single constraint family explains the infeasibility"


def solve(inst: MILPInstance, adapter=None) -> Schedule:
    opts = inst.options
    adapter = adapter or get_adapter(opts.solver, opts.gap, opts.time_limit)
    res: MILPResult = adapter.solve(inst.milp)
    if res.status == "infeasible":
        raise InfeasibleSchedule(f"schedule infeasible; {_infeasibility_hint(inst)}")
    if res.x is None:
        raise SchedulerError(f"solver returned no incumbent ({res.status}: {res.message})")
    decisions = _post_loss(_decode(inst, res.x), inst.pack)
    costs = [node_cost(inst.classes, n, d, opts) for n, d in zip(inst.tree.nodes, decisions)]
    breakdown: dict[str, float] = {}
    for n, cst in zip(inst.tree.nodes, costs):
        for k, v in cst.items():
            breakdown[k] = breakdown.get(k, 0.0) + n.probability * v
    total = sum(breakdown.values())
    return Schedule(decisions, total, breakdown, costs, res.status, res.gap, inst.classes,
                    inst.tree, opts)


# -- audit -----------------------------------------------------------------------

def audit(schedule: Schedule, pack: SecurityConstraintSet | None = None,
          initial: InitialState | None = None, tol: float = 1e-6) -> list[str]:
    """Re-check every constraint of a schedule from raw data; returns violation messages.

    Written independently of :func:`build_milp`: it walks the tree and the
    decision records directly.
    """
    classes, tree, opts = schedule.classes, schedule.tree, schedule.options
    initial = initial or InitialState(n_up=[c.count if c.must_run else 0 for c in classes])
    dt0 = tree.nodes[0].dt
    bad: list[str] = []
    dec = schedule.decisions

    def chk(ok, msg):
        if not ok:
            bad.append(msg)

    for n, d in zip(tree.nodes, dec):
        i = n.id
        tol_p = lambda v: tol * max(1.0, abs(v))  # noqa: E731
        for g, c in enumerate(classes):
            chk(0 <= d.n_up[g] <= c.count, f"node {i} {c.name}: n_up {d.n_up[g]} out of range")
            chk(min(d.n_sg[g], d.n_sd[g], d.n_st[g]) >= 0, f"node {i} {c.name}: negative counts")
            if c.must_run:
                chk(d.n_up[g] == c.count, f"node {i} {c.name}: must-run class not fully online")
            chk(d.p[g] >= d.n_up[g] * c.p_msg - tol_p(d.p[g]), f"node {i} {c.name}: below p_msg")
            chk(d.p[g] <= d.n_up[g] * c.p_max + tol_p(d.p[g]), f"node {i} {c.name}: above p_max")
            chk(-tol <= d.r[g] <= d.n_up[g] * c.r_max + tol_p(d.r[g]),
                f"node {i} {c.name}: response above r_max")
            chk(d.r[g] <= c.r_slope * (d.n_up[g] * c.p_max - d.p[g]) + tol_p(d.r[g]),
                f"node {i} {c.name}: response above headroom")
            prev = initial.n_up[g] if n.parent is None else dec[n.parent].n_up[g]
            chk(d.n_up[g] == prev + d.n_sg[g] - d.n_sd[g], f"node {i} {c.name}: commitment balance")
            # start-up delay: synchronisations equal starts decided `delay` levels up
            if not c.must_run:
                delay = _levels(c.start_up_time, dt0)
                depth = tree.depth(i)
                if depth >= delay:
                    src = dec[tree.ancestor(i, delay)].n_st[g]
                else:
                    pipe = initial.pipeline[g] if g < len(initial.pipeline) else []
                    src = pipe[depth] if depth < len(pipe) else 0
                chk(d.n_sg[g] == src, f"node {i} {c.name}: synchronisations {d.n_sg[g]} != starts {src}")
                for window, kind in ((_levels(c.min_up, dt0), "up"), (_levels(c.min_down, dt0), "down")):
                    if window == 0:
                        continue
                    total, node = 0, i
                    hist = (initial.recent_sg if kind == "up" else initial.recent_sd)
                    hist = hist[g] if g < len(hist) else []
                    for step in range(window):
                        if node is None:
                            total += _hist(hist, window - step)
                            break
                        total += dec[node].n_sg[g] if kind == "up" else dec[node].n_sd[g]
                        node = tree.nodes[node].parent
                    if kind == "up":
                        chk(d.n_up[g] >= total, f"node {i} {c.name}: minimum up time")
                    else:
                        chk(c.count - d.n_up[g] >= total, f"node {i} {c.name}: minimum down time")
        for a in (1, 2):
            gen = sum(d.p[g] for g, c in enumerate(classes) if c.region == a)
            flow = d.flow if a == 1 else -d.flow
            lhs = gen + d.wind_used[a - 1] + d.p_ls[a - 1] + flow
            chk(abs(lhs - n.demand[a - 1]) <= tol * max(1.0, n.demand[a - 1]),
                f"node {i}: region {a} balance off by {lhs - n.demand[a - 1]:.6g}")
            chk(-tol <= d.wind_used[a - 1] <= n.wind[a - 1] + tol_p(n.wind[a - 1]),
                f"node {i}: region {a} wind outside [0, available]")
            chk(d.p_ls[a - 1] >= -tol, f"node {i}: negative load shed")
        if opts.corridor_limit is not None:
            chk(abs(d.flow) <= opts.corridor_limit * (1 + tol), f"node {i}: corridor limit")
        if pack is not None and opts.frequency:
            rows = pack.rebuild(opts.damping * n.demand[0], opts.damping * n.demand[1])
            for name in rows.violations(d.h1, d.h2, d.r1, d.r2, tol):
                bad.append(f"node {i}: frequency row {name} violated")
            if opts.domain_guard:
                for row in pack.guard_rows():
                    if not row.satisfied(d.h1, d.h2, d.r1, d.r2, tol * max(1.0, d.h1 + d.h2)):
                        bad.append(f"node {i}: {row.name} violated")
    # objective consistency
    recomputed = 0.0
    for n, d in zip(tree.nodes, dec):
        recomputed += n.probability * sum(node_cost(classes, n, d, opts).values())
    chk(abs(recomputed - schedule.objective) <= 1e-6 * max(1.0, abs(recomputed)),
        f"objective {schedule.objective} != recomputed {recomputed}")
    return bad


# -- scenario trees and rolling horizon --------------------------------------------

@dataclass(frozen=True)
class TreeSpec:
    """Root plus ``len(quantiles)`` wind branches that split after the root hour."""

    lookahead: int = 24
    z_values: tuple[float, ...] = (-math.sqrt(3.0), 0.0, math.sqrt(3.0))
    probabilities: tuple[float, ...] = (1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0)
    sigma: float = 0.05  # relative wind forecast error after one hour, grows with sqrt(lead)
    wind_capacity: tuple[float, float] = (30_000.0, 30_000.0)

    def __post_init__(self):
        if len(self.z_values) != len(self.probabilities):
            raise SchedulerError("z_values and probabilities must have equal length")
        if abs(sum(self.probabilities) - 1.0) > 1e-9:
            raise SchedulerError("branch probabilities must sum to 1")
        if self.lookahead < 1:
            raise SchedulerError("lookahead must be >= 1 hour")


def build_tree(demand: np.ndarray, wind: np.ndarray, hour: int, spec: TreeSpec = TreeSpec()
               ) -> ScenarioTree:
    """Tree from hourly forecasts ``demand[t] = (d1, d2)``, ``wind[t] = (w1, w2)``.

    Demand is taken as known; wind in branch ``b`` at lead ``k`` is the forecast
    scaled by ``1 + z_b * sigma * sqrt(k)``, clipped to [0, capacity].
    Forecast arrays shorter than the lookahead are extended cyclically.
    """
    T = len(demand)
    at = lambda arr, t: tuple(float(v) for v in arr[t % T])  # noqa: E731
    nodes = [TreeNode(0, None, 1.0, 1.0, at(demand, hour), at(wind, hour), hour)]
    for b, (z, prob) in enumerate(zip(spec.z_values, spec.probabilities)):
        parent = 0
        for k in range(1, spec.lookahead):
            w = np.array(at(wind, hour + k)) * (1.0 + z * spec.sigma * math.sqrt(k))
            w = np.clip(w, 0.0, spec.wind_capacity)
            nodes.append(TreeNode(len(nodes), parent, prob, 1.0, at(demand, hour + k),
                                  tuple(float(v) for v in w), hour + k))
            parent = len(nodes) - 1
    return ScenarioTree(nodes)


def advance_state(state: InitialState, root: NodeDecision, classes, dt: float = 1.0) -> InitialState:
    """Commitment state entering the next hour after implementing ``root``."""
    pipe, rsg, rsd = [], [], []
    for g, c in enumerate(classes):
        d = _levels(c.start_up_time, dt)
        old = (list(state.pipeline[g]) if g < len(state.pipeline) else []) + [0] * d
        new = old[1:d] + [root.n_st[g]] if d > 0 else []
        pipe.append(new[:d])
        keep = max(_levels(c.min_up, dt), _levels(c.min_down, dt), 1)
        rsg.append(((list(state.recent_sg[g]) if g < len(state.recent_sg) else []) + [root.n_sg[g]])[-keep:])
        rsd.append(((list(state.recent_sd[g]) if g < len(state.recent_sd) else []) + [root.n_sd[g]])[-keep:])
    return InitialState(n_up=list(root.n_up), pipeline=pipe, recent_sg=rsg, recent_sd=rsd,
                        p_prev=list(root.p))


def warm_start(classes, demand0, wind0, pack, options) -> InitialState:
    """Initial commitment: solve the first hour alone with start-up delays ignored."""
    free = [replace(c, start_up_time=0.0, min_up=0.0, min_down=0.0) for c in classes]
    tree = ScenarioTree([TreeNode(0, None, 1.0, 1.0, tuple(demand0), tuple(wind0), 0)])
    init = InitialState(n_up=[c.count if c.must_run else 0 for c in classes])
    sched = solve(build_milp(free, tree, pack, options, init))
    return InitialState(n_up=list(sched.root.n_up),
                        pipeline=[[0] * _levels(c.start_up_time, 1.0) for c in classes])


@dataclass
class HourRecord:
    hour: int
    decision: NodeDecision
    objective: float
    root_cost: float
    status: str
    gap: float


def rolling_horizon(classes, demand: np.ndarray, wind: np.ndarray, pack, options: SchedulerOptions,
                    hours: int, tree_spec: TreeSpec = TreeSpec(), initial: InitialState | None = None,
                    start_hour: int = 0, progress: Callable[[int, HourRecord], None] | None = None
                    ) -> list[HourRecord]:
    """Hour-by-hour receding-horizon scheduling; only each root decision is kept."""
    demand = np.asarray(demand, dtype=float)
    wind = np.asarray(wind, dtype=float)
    state = initial or warm_start(classes, demand[start_hour % len(demand)],
                                  wind[start_hour % len(wind)], pack, options)
    out: list[HourRecord] = []
    for t in range(start_hour, start_hour + hours):
        tree = build_tree(demand, wind, t, tree_spec)
        try:
            inst = build_milp(classes, tree, pack, options, state)
            sched = solve(inst)
        except SchedulerError as exc:
            raise SchedulerError(f"hour {t}: {exc}") from exc
        rec = HourRecord(t, sched.root, sched.objective,
                         sum(sched.node_costs[0].values()), sched.status, sched.gap)
        out.append(rec)
        if progress:
            progress(t, rec)
        state = advance_state(state, sched.root, classes)
    return out


# -- reporting ----------------------------------------------------------------------

def report(items, classes: Sequence[GeneratorClass]) -> dict:
    """Summary metrics for a :class:`Schedule` (root decision only) or an hourly series."""
    if isinstance(items, Schedule):
        decisions = [items.root]
        dts = [items.tree.nodes[0].dt]
    else:
        decisions = [r.decision if isinstance(r, HourRecord) else r for r in items]
        dts = [1.0] * len(decisions)
    if not decisions:
        raise SchedulerError("nothing to report")
    energy = 0.0
    co2 = 0.0
    curt = [0.0, 0.0]
    shed = 0.0
    for d, dt in zip(decisions, dts):
        for g, c in enumerate(classes):
            energy += d.p[g] * dt
            co2 += c.emissions * d.p[g] * dt
        energy += sum(d.wind_used) * dt
        for a in (0, 1):
            curt[a] += (d.wind_available[a] - d.wind_used[a]) * dt
        shed += sum(d.p_ls) * dt
    n = len(decisions)
    mean = lambda f: float(np.mean([f(d) for d in decisions]))  # noqa: E731
    return {
        "hours": n,
        "avg_h1": mean(lambda d: d.h1),
        "avg_h2": mean(lambda d: d.h2),
        "avg_r1": mean(lambda d: d.r1),
        "avg_r2": mean(lambda d: d.r2),
        "avg_h_total": mean(lambda d: d.h1 + d.h2),
        "avg_r_total": mean(lambda d: d.r1 + d.r2),
        "curtailment_mwh": curt,
        "load_shed_mwh": shed,
        "carbon_intensity": co2 / energy if energy > 0 else 0.0,
        "energy_mwh": energy,
    }


def write_decisions_csv(records: Sequence[HourRecord], classes, path) -> None:
    cols = ["hour", "h1", "h2", "r1", "r2", "flow", "wind_used_1", "wind_used_2",
            "wind_avail_1", "wind_avail_2", "shed_1", "shed_2", "root_cost", "status", "gap"]
    cols += [f"n_up_{c.name}" for c in classes] + [f"p_{c.name}" for c in classes]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in records:
            d = r.decision
            w.writerow([r.hour, d.h1, d.h2, d.r1, d.r2, d.flow, *d.wind_used, *d.wind_available,
                        *d.p_ls, r.root_cost, r.status, r.gap, *d.n_up, *d.p])


def classes_to_dicts(classes) -> list[dict]:
    return [asdict(c) for c in classes]


def load_fleet_csv(path) -> list[GeneratorClass]:
    """Fleet file: one row per class; ``N/A`` in start_up_time marks must-run units."""
    out = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(line for line in fh if not line.lstrip().startswith("#"))]
    for r in rows:
        try:
            must = r.get("start_up_time", "").strip().upper() == "N/A" or \
                r.get("must_run", "").strip().lower() in ("1", "true", "yes")
            num = lambda k, d=0.0: d if r.get(k, "").strip().upper() in ("", "N/A") else float(r[k])  # noqa: E731
            ramp = r.get("ramp", "").strip()
            out.append(GeneratorClass(
                name=r["name"].strip(), region=int(r["region"]), count=int(r["count"]),
                p_max=num("p_max"), p_msg=num("p_msg"), c_nl=num("c_nl"), c_m=num("c_m"),
                c_st=num("c_st"), start_up_time=num("start_up_time"), min_up=num("min_up"),
                min_down=num("min_down"), h_const=num("h_const"), r_max=num("r_max"),
                r_slope=num("r_slope"), emissions=num("emissions"), must_run=must,
                ramp=float(ramp) if ramp and ramp.upper() != "N/A" else None,
            ))
        except (KeyError, ValueError) as exc:
            raise SchedulerError(f"{path}: bad fleet row {r}: {exc}") from exc
    return out


def load_profiles_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """``hour,demand_mw_r1,demand_mw_r2,wind_mw_r1,wind_mw_r2`` -> (demand, wind) arrays."""
    want = ["hour", "demand_mw_r1", "demand_mw_r2", "wind_mw_r1", "wind_mw_r2"]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != want:
            raise SchedulerError(f"{path}: expected header {want}, got {reader.fieldnames}")
        rows = list(reader)
    d = np.array([[float(r["demand_mw_r1"]), float(r["demand_mw_r2"])] for r in rows])
    w = np.array([[float(r["wind_mw_r1"]), float(r["wind_mw_r2"])] for r in rows])
    return d, w


def save_fleet_csv(classes, path: str | Path) -> None:
    cols = list(GeneratorClass.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for c in classes:
            w.writerow(["" if getattr(c, k) is None else getattr(c, k) for k in cols])

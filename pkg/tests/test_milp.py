import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import linprog

from regfreq.milp import MILP, BranchAndBoundAdapter, HighsAdapter, get_adapter, solve_lp_dense


def random_milp(rng, n=6, m=5, integer_share=0.5):
    A = rng.integers(-3, 4, size=(m, n)).astype(float)
    x0 = rng.integers(0, 4, size=n).astype(float)  # a known feasible point
    act = A @ x0
    lo = np.where(rng.random(m) < 0.5, act - rng.integers(0, 5, m), -np.inf)
    hi = act + rng.integers(0, 5, m)
    return MILP(c=rng.normal(size=n), A=sp.csr_matrix(A), row_lo=lo, row_hi=hi,
                lb=np.zeros(n), ub=np.full(n, 6.0), integer=rng.random(n) < integer_share)


def test_dense_simplex_matches_linprog():
    rng = np.random.default_rng(0)
    for _ in range(40):
        prob = random_milp(rng)
        x = solve_lp_dense(prob.c, prob.A, prob.row_lo, prob.row_hi, prob.lb, prob.ub)
        A = prob.A.toarray()
        fin = np.isfinite(prob.row_lo)
        ref = linprog(prob.c, A_ub=np.r_[A, -A[fin]], b_ub=np.r_[prob.row_hi, -prob.row_lo[fin]],
                      bounds=list(zip(prob.lb, prob.ub)), method="highs")
        assert ref.status == 0
        assert prob.c @ x == pytest.approx(ref.fun, rel=1e-9, abs=1e-9)
        assert prob.max_violation(x) <= 1e-9


def test_dense_simplex_handles_free_and_upper_only_variables():
    # min x0 - x1  s.t.  x0 + x1 = 1,  x0 free in sign via bounds, x1 <= 3 only
    c = np.array([1.0, -1.0])
    A = np.array([[1.0, 1.0]])
    x = solve_lp_dense(c, A, np.array([1.0]), np.array([1.0]), np.array([-np.inf, -np.inf]),
                       np.array([np.inf, 3.0]))
    np.testing.assert_allclose(x, [-2.0, 3.0], atol=1e-12)


@pytest.mark.parametrize("seed", range(15))
def test_branch_and_bound_agrees_with_highs(seed):
    rng = np.random.default_rng(100 + seed)
    prob = random_milp(rng, n=rng.integers(3, 8), m=rng.integers(2, 6))
    a = HighsAdapter(gap=1e-9).solve(prob)
    b = BranchAndBoundAdapter(gap=1e-9).solve(prob)
    assert a.status == "optimal" and b.status == "optimal"
    assert a.objective == pytest.approx(b.objective, rel=1e-7, abs=1e-7)
    for r in (a, b):
        assert prob.max_violation(r.x) <= 1e-6
        assert np.all(np.abs(r.x[prob.integer] - np.round(r.x[prob.integer])) == 0)


def test_offset_is_reported_in_the_objective():
    prob = MILP(c=np.array([1.0]), A=sp.csr_matrix((0, 1)), row_lo=np.zeros(0),
                row_hi=np.zeros(0), lb=np.array([2.0]), ub=np.array([5.0]),
                integer=np.array([True]), offset=10.0)
    for ad in (HighsAdapter(1e-9), BranchAndBoundAdapter(1e-9)):
        res = ad.solve(prob)
        assert res.objective == pytest.approx(12.0) and res.gap == pytest.approx(0.0)


def test_infeasible_and_unbounded():
    A = sp.csr_matrix(np.array([[1.0, 1.0]]))
    infeasible = MILP(np.ones(2), A, np.array([5.0]), np.array([5.0]), np.zeros(2),
                      np.ones(2), np.array([True, True]))
    assert HighsAdapter().solve(infeasible).status == "infeasible"
    assert BranchAndBoundAdapter().solve(infeasible).status == "infeasible"
    unbounded = MILP(np.array([-1.0, 0.0]), A, np.array([0.0]), np.array([np.inf]),
                     np.zeros(2), np.full(2, np.inf), np.array([False, False]))
    assert BranchAndBoundAdapter().solve(unbounded).status == "unbounded"
    assert HighsAdapter().solve(unbounded).x is None


def test_integrality_gap_drives_branching():
    # max x0 + x1 with 2 x0 + 2 x1 <= 3 has LP value 1.5 but integer value 1
    prob = MILP(np.array([-1.0, -1.0]), sp.csr_matrix(np.array([[2.0, 2.0]])),
                np.array([-np.inf]), np.array([3.0]), np.zeros(2), np.full(2, 5.0),
                np.array([True, True]))
    res = BranchAndBoundAdapter(gap=1e-9).solve(prob)
    assert res.objective == pytest.approx(-1.0) and res.nodes > 1


def test_adapter_lookup():
    assert isinstance(get_adapter("highs"), HighsAdapter)
    assert isinstance(get_adapter("bnb", gap=1e-4), BranchAndBoundAdapter)
    with pytest.raises(ValueError, match="unknown solver"):
        get_adapter("cplex")

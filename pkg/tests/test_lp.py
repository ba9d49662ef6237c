import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from _oracles import composite_loss, lattice_min_cqr
from cqrkit import lp
from cqrkit.lp import LpProblem, Status, build_cqr_lp, solve, solve_dense

METHODS = ["dense", "python"] + (["cython"] if lp.BACKEND == "cython" else [])


def random_cqr(seed, n=8, p=2, K=3, penalized=False):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = X @ rng.standard_normal(p) + rng.standard_t(3, n)
    taus = np.arange(1, K + 1) / (K + 1)
    pen = rng.uniform(0, 2, p) if penalized else None
    return build_cqr_lp(X, y, taus, pen)


def audit(prob, sol, tol=1e-7):
    A, c, b = prob.A, prob.c, prob.rhs
    assert sol.status is Status.OPTIMAL
    assert np.all(sol.x >= -1e-10)
    assert np.abs(A @ sol.x - b).max() <= 1e-8 * (1 + np.abs(b).max())
    rc = c - A.T @ sol.duals
    np.testing.assert_allclose(rc, sol.reduced_costs, atol=1e-9)
    assert rc.min() >= -1e-9
    assert np.abs(sol.x * rc).max() < tol
    assert sol.value == pytest.approx(c @ sol.x, rel=1e-9, abs=1e-12)


def test_simple_optimum():
    sol = solve(LpProblem.from_arrays([1, 0], [[1, -1]], [1]))
    assert sol.status is Status.OPTIMAL
    assert sol.value == 1.0
    np.testing.assert_array_equal(sol.x, [1.0, 0.0])


def test_unbounded():
    assert solve(LpProblem.from_arrays([-1, 0], [[1, -1]], [0])).status is Status.UNBOUNDED


def test_infeasible():
    assert solve(LpProblem.from_arrays([1, 1], [[1, 1], [1, 1]], [1, 2])).status is Status.INFEASIBLE


def test_redundant_rows_are_dropped():
    sol = solve(LpProblem.from_arrays([1, 2, 0], [[1, 1, 1], [2, 2, 2]], [3, 6]))
    assert sol.status is Status.OPTIMAL and sol.value == 0.0


def test_iteration_limit():
    prob = random_cqr(0, n=10)
    assert solve_dense(prob, max_iterations=1).status is Status.ITERATION_LIMIT
    assert solve(prob, max_iterations=1, method="python").status is Status.ITERATION_LIMIT


def test_bland_rule_terminates_on_cycling_example():
    # a classical degenerate LP on which the largest-coefficient rule cycles
    c = [-0.75, 150, -0.02, 6, 0, 0, 0]
    A = [
        [0.25, -60, -0.04, 9, 1, 0, 0],
        [0.5, -90, -0.02, 3, 0, 1, 0],
        [0, 0, 1, 0, 0, 0, 1],
    ]
    sol = solve(LpProblem.from_arrays(c, A, [0, 0, 1]))
    assert sol.status is Status.OPTIMAL
    assert sol.value == pytest.approx(-0.05)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4), st.integers(2, 7))
def test_dense_matches_highs_on_random_lps(seed, m, extra):
    rng = np.random.default_rng(seed)
    N = m + extra
    A = rng.integers(-3, 4, (m, N)).astype(float)
    x0 = rng.integers(0, 3, N).astype(float)
    b = A @ x0  # feasible by construction
    c = rng.integers(-2, 5, N).astype(float)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    sol = solve_dense(LpProblem.from_arrays(c, A, b))
    if ref.status == 3:
        assert sol.status is Status.UNBOUNDED
    else:
        assert ref.status == 0
        assert sol.status is Status.OPTIMAL
        assert sol.value == pytest.approx(ref.fun, abs=1e-8)
        assert np.abs(A @ sol.x - b).max() < 1e-8 * (1 + np.abs(b).max())
        assert sol.reduced_costs.min() >= -1e-9


def test_shape_validation():
    with pytest.raises(ValueError):
        LpProblem.from_arrays([1, 2], [[1, 2, 3]], [1])
    with pytest.raises(ValueError):
        LpProblem.from_arrays([1, np.nan], [[1, 2]], [1])


@pytest.mark.parametrize("method", METHODS)
def test_median_lp(method):
    prob = build_cqr_lp(np.zeros((3, 0)), [1.0, 2.0, 3.0], [0.5])
    sol = solve(prob, method=method)
    b, beta = prob.structure.unpack(sol.x)
    assert sol.value == pytest.approx(1.0)
    assert b[0] == pytest.approx(2.0)
    assert beta.size == 0


@given(st.integers(1, 6), st.integers(0, 4), st.integers(1, 5), st.booleans())
def test_lp_dimensions(n, p, K, pen):
    X = np.ones((n, p))
    prob = build_cqr_lp(X, np.arange(n, dtype=float), np.arange(1, K + 1) / (K + 1), np.ones(p) if pen else None)
    assert prob.n_vars == 2 * n * K + 2 * K + 2 * p == prob.c.size == prob.A.shape[1]
    assert prob.n_constraints == n * K == prob.A.shape[0]


def test_lp_cost_and_constraint_layout():
    X = np.array([[1.0], [2.0]])
    prob = build_cqr_lp(X, [5.0, 7.0], [0.25, 0.75], [3.0])
    m = 4
    np.testing.assert_array_equal(prob.c[:m], [0.25, 0.25, 0.75, 0.75])
    np.testing.assert_array_equal(prob.c[m : 2 * m], [0.75, 0.75, 0.25, 0.25])
    np.testing.assert_array_equal(prob.c[2 * m :], [0, 0, 3, 0, 0, 3])
    # row (k=1, i=0): u+ - u- + b_2 + x_0 beta = y_0
    row = prob.A[2]
    assert row[2] == 1 and row[m + 2] == -1
    assert row[2 * m + 1] == 1 and row[2 * m + 2] == 1.0 and row[2 * m + 3 + 2] == -1.0
    assert prob.rhs[2] == 5.0


@pytest.mark.parametrize("bad", [dict(taus=[0.0]), dict(taus=[1.2]), dict(y=[1.0]), dict(pen=[-1.0, 0.0]), dict(pen=[1.0])])
def test_build_rejects_bad_input(bad):
    args = dict(X=np.ones((2, 2)), y=[1.0, 2.0], taus=[0.5], pen=None)
    args.update(bad)
    with pytest.raises(ValueError):
        build_cqr_lp(args["X"], args["y"], args["taus"], args["pen"])


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("penalized", [False, True])
def test_structured_and_dense_agree(seed, penalized):
    prob = random_cqr(seed, penalized=penalized)
    sols = {m: solve(prob, method=m) for m in METHODS}
    for m, sol in sols.items():
        audit(prob, sol)
        b, beta = prob.structure.unpack(sol.x)
        assert prob.structure.objective(b, beta) == pytest.approx(sol.value, rel=1e-8)
    ref = sols["dense"].value
    for sol in sols.values():
        assert sol.value == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("seed", range(4))
def test_structured_bland_mode(seed):
    prob = random_cqr(seed, n=12, p=3, K=4)
    a = solve(prob, method="python", bland=True)
    audit(prob, a)
    assert a.value == pytest.approx(solve_dense(prob).value, rel=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_lp_matches_lattice_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    x = rng.uniform(-2, 2, 4)
    y = 1.5 * x + rng.standard_normal(4)
    taus = [1 / 3, 2 / 3]
    sol = solve(build_cqr_lp(x[:, None], y, taus))
    best, _ = lattice_min_cqr(x, y, taus)
    assert sol.value == pytest.approx(best, abs=1e-4)
    assert sol.value <= best + 1e-12


@pytest.mark.parametrize("seed", range(3))
def test_solution_invariant_under_row_permutation(seed):
    prob = random_cqr(seed, n=15, p=2, K=3)
    s = prob.structure
    perm = np.random.default_rng(seed).permutation(s.n)
    sol = solve(prob)
    other = solve(build_cqr_lp(s.X[perm], s.y[perm], s.taus))
    assert other.value == pytest.approx(sol.value, rel=1e-10)


def test_penalty_is_exact_absolute_value():
    prob = random_cqr(4, n=20, p=3, K=3, penalized=True)
    sol = solve(prob)
    m, P = prob.structure.m, prob.structure.n_params
    plus, minus = sol.x[2 * m : 2 * m + P], sol.x[2 * m + P :]
    assert np.all(np.minimum(plus, minus) == 0.0)
    b, beta = prob.structure.unpack(sol.x)
    assert composite_loss(prob.structure.X, prob.structure.y, b, beta, prob.structure.taus) + prob.structure.penalty @ np.abs(beta) == pytest.approx(sol.value, rel=1e-12)


def test_large_problem_audit():
    prob = random_cqr(7, n=100, p=8, K=19)
    sol = solve(prob)
    audit(prob, sol)


def test_unknown_method():
    with pytest.raises(ValueError):
        solve(random_cqr(0), method="simplex2")
    with pytest.raises(ValueError):
        solve(LpProblem.from_arrays([1], [[1]], [1]), method="python")

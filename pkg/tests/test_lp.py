import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import vertex_oracle
from prescriptive_cg.lp import (
    LinearProgram,
    LpError,
    check_optimality,
    duals,
    solve,
)


def _lp(c, A, senses, b, lb=None, ub=None):
    return LinearProgram(np.array(c, float), sp.csc_matrix(np.array(A, float)), senses,
                         np.array(b, float), lb, ub)


def test_single_bound_row():
    sol = solve(_lp([1.0], [[1.0]], "<", [1.0]))
    assert sol.ok
    assert sol.x[0] == pytest.approx(1.0)
    assert sol.y[0] == pytest.approx(1.0)
    assert sol.objective == pytest.approx(1.0)


def test_dual_signs_by_sense():
    ge = solve(_lp([-1.0], [[1.0]], ">", [1.0]))
    assert ge.x[0] == pytest.approx(1.0) and ge.y[0] == pytest.approx(-1.0)
    eq = solve(_lp([2.0], [[1.0]], "=", [3.0]))
    assert eq.x[0] == pytest.approx(3.0) and eq.y[0] == pytest.approx(2.0)


def test_textbook_lp():
    # max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18  ->  x=2, y=6, obj 36
    sol = solve(_lp([3, 5], [[1, 0], [0, 2], [3, 2]], "<<<", [4, 12, 18]))
    assert sol.ok
    assert np.allclose(sol.x, [2, 6])
    assert sol.objective == pytest.approx(36)
    assert np.allclose(sol.y, [0, 1.5, 1])


def test_beale_cycling_example():
    c = [0.75, -20, 0.5, -6]
    A = [[0.25, -8, -1, 9], [0.5, -12, -0.5, 3], [0, 0, 1, 0]]
    sol = solve(_lp(c, A, "<<<", [0, 0, 1]))
    assert sol.ok
    assert sol.objective == pytest.approx(1.25)


def test_infeasible_and_unbounded():
    inf = solve(_lp([1, 1], [[1, 1], [1, 1]], "<>", [1, 2]))
    assert inf.status == "infeasible" and not inf.ok
    unb = solve(_lp([1, 0], [[-1, 1]], "<", [1]))
    assert unb.status == "unbounded"
    with pytest.raises(LpError):
        duals(inf, [0])


def test_bounded_variables_without_rows():
    lp = _lp([1, -1, 2], np.zeros((0, 3)), "", [], lb=[0, -2, 1], ub=[3, 5, 1])
    sol = solve(lp)
    assert sol.ok and np.allclose(sol.x, [3, -2, 1])


def test_input_validation():
    with pytest.raises(LpError):
        _lp([1, 2], [[1]], "<", [1])
    with pytest.raises(LpError):
        _lp([1], [[1]], "?", [1])
    with pytest.raises(LpError):
        _lp([1], [[1]], "<", [1], lb=[2], ub=[1])
    with pytest.raises(LpError):
        _lp([np.nan], [[1]], "<", [1])


@st.composite
def small_lps(draw):
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    n = draw(st.integers(1, 4))
    m = draw(st.integers(1, 4))
    A = rng.integers(-3, 4, size=(m, n)).astype(float)
    b = rng.integers(-2, 6, size=m).astype(float)
    senses = "".join(rng.choice(list("<<>="), size=m))
    c = rng.integers(-4, 5, size=n).astype(float)
    lb = rng.integers(-3, 1, size=n).astype(float)
    ub = lb + rng.integers(0, 5, size=n)
    return c, A, senses, b, lb, ub


@given(small_lps())
@settings(max_examples=200, deadline=None)
def test_matches_vertex_enumeration(case):
    c, A, senses, b, lb, ub = case
    lp = _lp(c, A, senses, b, lb, ub)
    sol = solve(lp)
    best = vertex_oracle(c, A, senses, b, lb, ub)
    if best is None:
        assert sol.status == "infeasible"
        return
    assert sol.ok
    assert sol.objective == pytest.approx(best, abs=1e-7)
    pin, din, gap = check_optimality(lp, sol)
    assert pin < 1e-7 and din < 1e-7 and gap < 1e-6


@given(small_lps())
@settings(max_examples=100, deadline=None)
def test_complementary_slackness(case):
    c, A, senses, b, lb, ub = case
    lp = _lp(c, A, senses, b, lb, ub)
    sol = solve(lp)
    if not sol.ok:
        return
    slack = b - A @ sol.x
    assert np.all(np.abs(sol.y * slack) < 1e-7)
    d = sol.reduced_costs
    assert np.allclose(d, c - A.T @ sol.y)
    at_lo = np.isclose(sol.x, lb, atol=1e-9)
    at_hi = np.isclose(sol.x, ub, atol=1e-9)
    strict = ~at_lo & ~at_hi
    assert np.all(np.abs(d[strict]) < 1e-7)
    assert np.all(d[at_lo & ~at_hi] < 1e-7)
    assert np.all(d[at_hi & ~at_lo] > -1e-7)


def _set_partition(seed, m=12, n=40):
    rng = np.random.default_rng(seed)
    A = (rng.random((m, n)) < 0.3).astype(float)
    A = np.hstack([A, np.eye(m)])
    c = np.concatenate([rng.uniform(0, 5, n), np.full(m, -10.0)])
    return c, A


def test_warm_start_after_adding_columns():
    c, A = _set_partition(0)
    m = A.shape[0]
    lp1 = _lp(c[:30], A[:, :30], "=" * m, np.ones(m))
    s1 = solve(lp1)
    assert s1.ok
    lp2 = _lp(c, A, "=" * m, np.ones(m))
    warm = solve(lp2, warm_basis=s1.basis)
    cold = solve(lp2)
    assert warm.ok and cold.ok
    assert warm.objective == pytest.approx(cold.objective, abs=1e-9)


def test_warm_start_after_adding_row():
    c, A = _set_partition(1)
    m = A.shape[0]
    s1 = solve(_lp(c, A, "=" * m, np.ones(m)))
    row = np.zeros(A.shape[1])
    row[:20] = 1.0
    A2 = np.vstack([A, row])
    lp2 = _lp(c, A2, "=" * m + "<", np.r_[np.ones(m), 1.0])
    warm = solve(lp2, warm_basis=s1.basis)
    cold = solve(lp2)
    assert warm.ok and warm.objective == pytest.approx(cold.objective, abs=1e-9)


def test_deterministic():
    c, A = _set_partition(2)
    m = A.shape[0]
    lp = _lp(c, A, "=" * m, np.ones(m))
    a, b = solve(lp), solve(lp)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert a.iterations == b.iterations


def test_degenerate_partition_lp_strong_duality():
    # many identical columns make every vertex highly degenerate
    rng = np.random.default_rng(5)
    m, n = 20, 200
    A = (rng.random((m, n)) < 0.2).astype(float)
    A = np.hstack([A, A, np.eye(m)])
    c = np.concatenate([np.round(rng.uniform(0, 3, n)), np.round(rng.uniform(0, 3, n)),
                        np.zeros(m)])
    lp = _lp(c, A, "=" * m, np.ones(m), ub=np.full(2 * n + m, 1.0))
    sol = solve(lp)
    assert sol.ok
    pin, din, gap = check_optimality(lp, sol)
    assert max(pin, din) < 1e-7 and gap < 1e-6


def test_duals_split():
    sol = solve(_lp([1, 1, 1], [[1, 0, 0], [0, 1, 0], [1, 1, 1], [0, 0, 1]], "<<<>",
                    [1, 1, 3, 0.5]))
    lam, mu, rho = duals(sol, [0, 1], 2, [3], side_sign=[-1.0])
    assert lam.shape == (2,)
    assert mu == pytest.approx(sol.y[2])
    assert rho[0] == pytest.approx(-sol.y[3])


def test_lp_text_export():
    text = _lp([1, -2], [[1, 1]], "<", [4], ub=[1, np.inf]).to_lp_text()
    assert text.startswith("Maximize")
    assert "r0: + 1 x0 + 1 x1 <= 4" in text
    assert "0 <= x1 <= +inf" in text


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_warm_start_after_branching_bound_change(seed):
    # fix a fractional column to 0 or 1, as branch-and-bound does, and re-solve warm
    rng = np.random.default_rng(seed)
    m, n = 10, 60
    A = (rng.random((m, n)) < 0.3).astype(float)
    A = np.hstack([A, np.eye(m)])
    c = np.concatenate([rng.uniform(0, 5, n), np.full(m, -4.0)])
    card = np.r_[np.ones(n), np.zeros(m)]
    A = np.vstack([A, card])
    senses, b = "=" * m + "<", np.r_[np.ones(m), 3.0]
    ub = np.r_[np.ones(n), np.full(m, np.inf)]
    root = solve(_lp(c, A, senses, b, ub=ub))
    assert root.ok
    frac = np.flatnonzero((root.x[:n] > 1e-6) & (root.x[:n] < 1 - 1e-6))
    j = int(frac[0]) if frac.size else int(np.argmax(root.x[:n]))
    for val in (0.0, 1.0):
        lb2, ub2 = np.zeros(n + m), ub.copy()
        lb2[j] = ub2[j] = val
        lp2 = _lp(c, A, senses, b, lb=lb2, ub=ub2)
        warm, cold = solve(lp2, warm_basis=root.basis), solve(lp2)
        assert warm.status == cold.status
        if cold.ok:
            assert warm.objective == pytest.approx(cold.objective, abs=1e-8)
            pin, din, gap = check_optimality(lp2, warm)
            assert max(pin, din) < 1e-8 and gap < 1e-7

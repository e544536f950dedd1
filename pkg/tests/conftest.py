"""Suite-wide structural checks and the acceptance summary.

Every LP solved anywhere in the suite is checked for complementary
slackness, and every Master-MIP solution for the partition and rule-count
invariants. A violation fails the test that triggered it.
"""
import numpy as np
import pytest

from prescriptive_cg import lp, solver

from _helpers import ACCEPTANCE

CHECKS = {"lp": 0, "lp_cs_max": 0.0, "mip": 0}


def cs_violation(prog, sol):
    """Largest complementary-slackness product, relative to the problem scale."""
    x, y, d = sol.x, sol.y, sol.reduced_costs
    slack = prog.b - prog.A @ x
    row = np.abs(y * slack)
    lo = np.where(np.isfinite(prog.lb), np.abs(x - prog.lb), np.inf)
    hi = np.where(np.isfinite(prog.ub), np.abs(prog.ub - x), np.inf)
    dist = np.minimum(lo, hi)
    col = np.where(np.isfinite(dist), np.abs(d) * dist, np.abs(d) * np.abs(x))
    scale = 1.0 + abs(sol.objective)
    worst = max(row.max(initial=0.0), col.max(initial=0.0))
    return worst / scale


_orig_solve = lp.solve
_orig_make = solver._make_solution


def _checked_solve(prog, warm_basis=None, max_iter=None, scale=None):
    sol = _orig_solve(prog, warm_basis, max_iter, scale)
    if sol.status == "optimal":
        v = cs_violation(prog, sol)
        CHECKS["lp"] += 1
        CHECKS["lp_cs_max"] = max(CHECKS["lp_cs_max"], v)
        assert v <= 1e-7, f"complementary slackness violated ({v:.3g})"
    return sol


def _checked_make(state, z, lp_bound, status, nodes, best_bound=None):
    sol = _orig_make(state, z, lp_bound, status, nodes, best_bound)
    assert len(sol.selected) <= state.n, "rule budget exceeded"
    covered = np.zeros(state.graph.n_samples, dtype=bool)
    for p in sol.selected:
        m = state.graph.sample_mask(p.bits)
        assert not (covered & m).any(), "a sample is covered twice"
        covered |= m
    assert set(np.flatnonzero(~covered).tolist()) == set(sol.slack_samples.tolist())
    CHECKS["mip"] += 1
    return sol


@pytest.fixture(autouse=True)
def _structural_checks(monkeypatch):
    monkeypatch.setattr(lp, "solve", _checked_solve)
    monkeypatch.setattr(solver, "_make_solution", _checked_make)
    yield


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
            ok, detail = ACCEPTANCE[key]
            terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
    terminalreporter.write_line(
        f"structural checks: {CHECKS['lp']} LP solves (max complementary-slackness "
        f"residual {CHECKS['lp_cs_max']:.2e}), {CHECKS['mip']} Master-MIP solutions")

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prescriptive_cg import graph as gr
from prescriptive_cg.constraints import IntraRulePolicy, capacity_row
from prescriptive_cg.pricing import (
    Duals,
    k_best_paths,
    optimistic_bound,
    reduced_cost,
)

from _helpers import numeric_instance, random_instance


def _random_duals(rng, M, n_rows=0):
    return Duals(rng.normal(0, 0.7, M), float(rng.normal(0, 1)), rng.normal(0, 0.3, n_rows))


def _brute_top(g, duals, K, policy, rows, eps):
    scored = []
    for p in gr.enumerate_paths(g, policy):
        rc = reduced_cost(p, duals, rows, g)
        if rc > eps:
            scored.append(rc)
    return sorted(scored, reverse=True)[:K]


@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(0, 8))
@settings(max_examples=40, deadline=None)
def test_wide_beam_is_exhaustive(seed, K, min_samples):
    rng = np.random.default_rng(seed)
    _, _, G, g = random_instance(seed, M=50, levels=(3, 2, 2), n_actions=3)
    d = _random_duals(rng, 50)
    pol = IntraRulePolicy(min_samples=min_samples)
    res = k_best_paths(g, d, K=K, beam_width=10**6, intra_policy=pol, eps_rc=1e-9)
    assert res.exact
    expect = _brute_top(g, d, K, pol, (), 1e-9)
    assert np.allclose(res.reduced_costs, expect)
    for p, rc in zip(res.paths, res.reduced_costs):
        assert reduced_cost(p, d, (), g) == pytest.approx(rc)
        assert p.n_covered >= min_samples


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_side_rows_enter_the_reduced_cost(seed):
    rng = np.random.default_rng(seed)
    _, _, G, g = numeric_instance(seed, M=60, kappas=(3, 2), n_actions=2)
    row = capacity_row(rng.random(60) < 0.6, rng.uniform(0, 2, size=(60, 2)), 5.0)
    d = _random_duals(rng, 60, n_rows=1)
    res = k_best_paths(g, d, K=5, beam_width=10**6, rows=(row,), eps_rc=1e-9)
    assert np.allclose(res.reduced_costs, _brute_top(g, d, 5, None, (row,), 1e-9))


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_bound_is_admissible(seed):
    rng = np.random.default_rng(seed)
    _, _, G, g = random_instance(seed, M=40, levels=(2, 3), n_actions=2)
    d = _random_duals(rng, 40)
    for p in gr.enumerate_paths(g):
        cov = gr.coverage(p, g)
        assert reduced_cost(p, d, (), g) <= optimistic_bound(cov, d.lam, d.mu, G) + 1e-9
        # any superset coverage gives a bound at least as large
        parent = gr.coverage(gr.all_skip_path(g, 0), g)
        assert optimistic_bound(cov, d.lam, d.mu, G) <= \
            optimistic_bound(parent, d.lam, d.mu, G) + 1e-9


def test_reduced_cost_formula():
    _, _, G, g = random_instance(7, M=30)
    rng = np.random.default_rng(7)
    d = _random_duals(rng, 30)
    p = g.make_path((1, 2), 2)
    cov = gr.coverage(p, g)
    assert reduced_cost(p, d, (), g) == pytest.approx(
        G[cov, 2].sum() - d.lam[cov].sum() - d.mu)
    with pytest.raises(ValueError):
        reduced_cost(p, d)
    assert optimistic_bound([], d.lam, 2.0, G) == -2.0


def test_exclude_and_threshold():
    rng = np.random.default_rng(1)
    _, _, G, g = random_instance(1, M=40)
    d = _random_duals(rng, 40)
    full = k_best_paths(g, d, K=10, beam_width=10**6, eps_rc=1e-9)
    top = full.paths[0].key
    res = k_best_paths(g, d, K=10, beam_width=10**6, exclude=[top], eps_rc=1e-9)
    assert top not in {p.key for p in res.paths}
    assert res.stats.duplicates == 1
    none = k_best_paths(g, d, K=10, beam_width=10**6, eps_rc=1e9)
    assert len(none) == 0


def test_narrow_beam_is_flagged_and_sound():
    rng = np.random.default_rng(2)
    _, _, G, g = random_instance(2, M=60, levels=(3, 3, 2))
    d = _random_duals(rng, 60)
    res = k_best_paths(g, d, K=5, beam_width=2, eps_rc=1e-9)
    assert not res.exact and res.stats.truncated > 0
    best = _brute_top(g, d, 1, None, (), 1e-9)
    for p, rc in zip(res.paths, res.reduced_costs):
        assert rc == pytest.approx(reduced_cost(p, d, (), g))
        assert rc <= best[0] + 1e-9


def test_optimal_duals_price_out():
    # with lam_i = max_a g[i,a] and mu = 0 nothing prices out positively
    _, _, G, g = random_instance(3, M=30)
    d = Duals(G.max(axis=1), 0.0)
    assert len(k_best_paths(g, d, K=10, beam_width=10**6)) == 0

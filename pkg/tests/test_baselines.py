import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from prescriptive_cg import baselines as bl
from prescriptive_cg import synthetic as sy
from prescriptive_cg.constraints import IntraRulePolicy
from prescriptive_cg.solver import exact_pool, extract_tree, solve_master_mip

from _helpers import categorical_dataset, numeric_instance, random_instance


def test_optimal_policy_scan_at_midpoint():
    m = sy.make_model(1)
    grid = np.linspace(3.0, 7.0, 9)
    ds = sy.to_dataset(sy.binned_schema(np.array([[5.0, 5.0]] * 3), 1),
                       sy.SyntheticData(m, np.array([[5.0, 5.0]] * 3), np.full(3, 5.0),
                                        np.zeros(3)))
    a = bl.optimal_policy(m, grid).actions(ds)
    scan = int(np.argmax([p * ndtr(5 - p) for p in grid]))
    assert a.tolist() == [scan] * 3
    one = bl.optimal_policy(m, np.array([4.0])).actions(ds)
    assert one.tolist() == [0, 0, 0]


def test_argmax_policy():
    G = np.array([[1.0, 1.0, 1.0], [0.0, 2.0, 2.0], [3.0, 1.0, 0.0]])
    assert bl.argmax_actions(G).tolist() == [0, 1, 0]
    rng = np.random.default_rng(0)
    G = rng.normal(size=(100, 5))
    assert bl.argmax_actions(G).tolist() == [max(range(5), key=lambda a: (r[a], -a)) for r in G]


def test_argmax_of_oracle_is_optimal():
    d = sy.generate(6, 500, 1)
    grid = sy.price_grid(d.P)
    ds = sy.to_dataset(sy.binned_schema(d.X, 4), d, grid)
    O = sy.oracle_counterfactuals(d.model, d.X, grid)
    assert np.array_equal(bl.argmax_policy(O).actions(ds),
                          bl.optimal_policy(d.model, grid).actions(ds))


def test_depth_zero_is_global_best():
    ds, _, G, _ = random_instance(0, M=50)
    t = bl.greedy_spt(ds, G, 0)
    assert t.n_leaves() == 1
    assert set(t.actions(ds).tolist()) == {int(np.argmax(G.sum(axis=0)))}


def test_depth_one_splits_two_clusters():
    rng = np.random.default_rng(1)
    ds = categorical_dataset(rng, 80, (4, 3))
    left = np.isin(ds.column("f0"), [0, 2])
    G = np.where(left[:, None], [2.0, 0.0], [0.0, 2.0]) + rng.normal(0, 0.05, (80, 2))
    t = bl.greedy_spt(ds, G, 1, min_leaf=1)
    a = t.actions(ds)
    assert np.array_equal(a, np.where(left, 0, 1))
    # the split value equals the best over every single split
    best = 0.0
    from itertools import combinations
    for f in range(2):
        L = ds.schema.features[f].n_base
        col = ds.levels[:, f]
        for r in range(1, L):
            for comb in combinations(range(L), r):
                m = np.isin(col, comb)
                best = max(best, G[m].sum(0).max() + G[~m].sum(0).max())
    assert bl.predicted_objective(t, ds, G) == pytest.approx(best)


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_spt_objective_monotone_in_depth(seed):
    ds, _, G, _ = random_instance(seed, M=120, levels=(4, 3, 2))
    vals = [bl.predicted_objective(bl.greedy_spt(ds, G, k, min_leaf=5), ds, G) for k in range(4)]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_spt_leaf_count_and_min_leaf(seed):
    ds, _, G, _ = random_instance(seed, M=100, levels=(4, 3))
    t = bl.greedy_spt(ds, G, 3, min_leaf=7)
    assert t.n_leaves() <= 8
    counts = np.bincount(t.actions(ds), minlength=3)
    assert counts.sum() == 100

    def leaves(node):
        return [node] if node.is_leaf else leaves(node.left) + leaves(node.right)

    assert all(lf.n >= 7 for lf in leaves(t.root)) or t.n_leaves() == 1


@given(st.integers(0, 10_000))
@settings(max_examples=10, deadline=None)
def test_global_rules_beat_greedy_tree(seed):
    # every leaf of a threshold tree is one interval rule, so n = 2^k exact
    # rules can do no worse than the greedy depth-k tree
    ds, _, G, g = numeric_instance(seed, M=60, kappas=(4, 3), n_actions=3)
    spt = bl.greedy_spt(ds, G, 2, min_leaf=1)
    sol = solve_master_mip(exact_pool(g, 4, IntraRulePolicy(min_samples=1)), 4)
    spmt = bl.RulePolicy(extract_tree(sol, g))
    assert bl.predicted_objective(spmt, ds, G) >= bl.predicted_objective(spt, ds, G) - 1e-9


def test_table_policy_guards_sample_set():
    ds, _, G, _ = random_instance(2, M=20)
    p = bl.argmax_policy(G)
    assert len(p.actions(ds)) == 20
    ds2, _, _, _ = random_instance(2, M=21)
    with pytest.raises(ValueError):
        p.actions(ds2)


def test_render():
    ds, actions, G, _ = random_instance(3, M=80)
    t = bl.greedy_spt(ds, G, 2, min_leaf=5)
    text = t.render(actions)
    assert text.count("-> action=") == t.n_leaves()

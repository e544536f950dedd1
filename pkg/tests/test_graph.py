import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prescriptive_cg import graph as gr
from prescriptive_cg.data_model import ActionSet, Dataset, FeatureSchema, FeatureSpec
from prescriptive_cg.graph import SKIP

from _helpers import random_instance


def _raw_numeric(seed, M=70, kappas=(3, 2)):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(M, len(kappas)))
    feats = []
    for j, k in enumerate(kappas):
        qs = np.quantile(X[:, j], np.arange(1, k) / k)
        feats.append(FeatureSpec(f"x{j}", "numeric", boundaries=(-np.inf, *qs, np.inf)))
    schema = FeatureSchema(tuple(feats))
    ds = Dataset.from_raw(schema, X)
    actions = ActionSet.from_values([1.0, 2.0])
    G = rng.normal(size=(M, 2))
    return X, schema, ds, actions, G


def test_vertex_count_categorical():
    _, _, _, g = random_instance(0, levels=(3, 3), n_actions=3)
    # each level: SKIP plus its values; then actions, source and sink
    assert gr.n_vertices(g) == (3 + 1) + (3 + 1) + 3 + 2
    assert gr.count_paths(g) == 4 * 4 * 3


def test_vertex_count_numeric():
    X, schema, ds, actions, G = _raw_numeric(1, kappas=(3, 4))
    g = gr.build(schema, actions, ds, counterfactuals=G)
    # kappa=3: 5 intervals, kappa=4: 9 intervals
    assert gr.n_vertices(g) == (5 + 1) + (9 + 1) + 2 + 2
    assert gr.count_paths(g) == 6 * 10 * 2


@given(st.integers(0, 10_000), st.lists(st.integers(2, 4), min_size=1, max_size=3),
       st.integers(1, 3))
@settings(max_examples=25, deadline=None)
def test_enumeration_matches_count(seed, levels, n_actions):
    _, _, _, g = random_instance(seed, M=40, levels=tuple(levels), n_actions=n_actions)
    paths = gr.enumerate_paths(g)
    assert len(paths) == gr.count_paths(g)
    assert len({p.key for p in paths}) == len(paths)


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_coverage_matches_row_scan(seed):
    X, schema, ds, actions, G = _raw_numeric(seed)
    g = gr.build(schema, actions, ds, counterfactuals=G)
    for p in gr.enumerate_paths(g):
        ok = np.ones(len(X), dtype=bool)
        for j, c in enumerate(p.choices):
            if c == SKIP:
                continue
            a, b = g.levels[j].nodes[c].span
            bnd = schema[f"x{j}"].boundaries
            ok &= (X[:, j] >= bnd[a]) & (X[:, j] < bnd[b])
        expect = np.flatnonzero(ok)
        assert gr.coverage(p, g).tolist() == expect.tolist()
        assert p.n_covered == len(expect)
        assert p.reward == pytest.approx(G[expect, p.action].sum(), abs=1e-9)


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_adding_a_condition_never_grows_coverage(seed):
    _, _, _, g = random_instance(seed, M=50, levels=(3, 2, 2))
    rng = np.random.default_rng(seed)
    for p in gr.enumerate_paths(g)[:: 5]:
        skips = [j for j, c in enumerate(p.choices) if c == SKIP]
        if not skips:
            continue
        j = int(rng.choice(skips))
        node = int(rng.integers(1, len(g.levels[j])))
        ch = list(p.choices)
        ch[j] = node
        q = g.make_path(ch, p.action)
        assert set(gr.coverage(q, g)) <= set(gr.coverage(p, g))


def test_all_skip_covers_everything():
    ds, _, G, g = random_instance(3, M=37)
    for a in range(len(g.actions)):
        p = gr.all_skip_path(g, a)
        assert p.n_covered == 37
        assert p.length == 0
        assert p.reward == pytest.approx(G[:, a].sum())
        assert p.text.startswith("IF TRUE")


def test_matches_agrees_with_coverage():
    ds, _, _, g = random_instance(4, M=45, levels=(2, 3))
    for p in gr.enumerate_paths(g):
        assert np.flatnonzero(g.matches(p.choices, ds.levels)).tolist() == \
            gr.coverage(p, g).tolist()


def test_atoms_compress_duplicate_rows():
    ds, _, G, g = random_instance(5, M=200, levels=(2, 2))
    assert g.n_atoms <= 4
    assert g.atom_weights.sum() == 200
    assert np.allclose(g.G_atoms.sum(axis=0), G.sum(axis=0))


def test_enumeration_cap():
    _, _, _, g = random_instance(0, levels=(3, 3))
    with pytest.raises(gr.GraphError):
        gr.enumerate_paths(g, cap=10)


def test_bad_counterfactual_shape():
    _, _, _, g = random_instance(0, M=20)
    with pytest.raises(gr.GraphError):
        g.with_counterfactuals(np.zeros((19, 3)))


def test_path_wrong_length():
    _, _, _, g = random_instance(0)
    with pytest.raises(gr.GraphError):
        g.make_path((SKIP,), 0)


def test_spread_order_picks_informative_feature():
    rng = np.random.default_rng(0)
    M = 400
    from _helpers import categorical_dataset
    ds = categorical_dataset(rng, M, (2, 2, 2))
    G = np.zeros((M, 2))
    # only f1 changes how much the action matters
    G[:, 1] = np.where(ds.column("f1") == 1, 3.0, 0.0) + rng.normal(0, 0.01, M)
    order = gr.spread_order(ds.schema, ds, G)
    assert order[0] == "f1"
    assert sorted(order) == ["f0", "f1", "f2"]


def test_feature_subset_and_extra_keys():
    ds, actions, G, _ = random_instance(6, M=80, levels=(3, 2, 2))
    g = gr.build(ds.schema, actions, ds, features=["f2"], extra_key_features=["f0"],
                 counterfactuals=G)
    assert g.features == ["f2"]
    assert g.n_atoms == len({tuple(r) for r in ds.levels[:, [2, 0]]})
    assert gr.count_paths(g) == 3 * 3


def test_rule_text_and_conditions():
    _, _, _, g = random_instance(0, levels=(2, 2), n_actions=2)
    p = g.make_path((1, SKIP), 1)
    assert p.text == f"IF f0=v0 THEN action={g.actions.labels[1]}"
    assert [f for f, _ in g.rule_conditions(p.choices)] == ["f0"]
    for ch in itertools.product(range(3), range(3)):
        assert g.make_path(ch, 0).length == sum(c != SKIP for c in ch)

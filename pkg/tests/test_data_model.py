import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prescriptive_cg.data_model import (
    ActionSet,
    CounterfactualMatrix,
    DataError,
    Dataset,
    FeatureSchema,
    FeatureSpec,
    base_intervals,
    cumulative_intervals,
    load_counterfactuals,
    load_dataset,
    quantile_boundaries,
    rule_reward,
    save_counterfactuals,
    save_dataset,
    schema_from_config,
)


def test_cumulative_intervals_kappa3():
    ns = cumulative_intervals([0, 0.33, 0.67, 1.0])
    got = {ns.bounds(j) for j in range(len(ns))}
    assert got == {(0, 0.33), (0.33, 0.67), (0.67, 1.0), (0, 0.67), (0.33, 1.0)}


def test_cumulative_intervals_degenerate_and_kappa4():
    assert len(cumulative_intervals([0, 1])) == 0
    # every contiguous pair (a, b) with a < b, minus the full range
    pairs = [(a, b) for a in range(5) for b in range(a + 1, 5) if (a, b) != (0, 4)]
    ns = cumulative_intervals([0, 1, 2, 3, 4])
    assert sorted(ns.intervals) == sorted(pairs)
    assert len(ns) == 9


@given(st.integers(1, 9))
def test_cumulative_count(kappa):
    ns = cumulative_intervals(list(range(kappa + 1)))
    assert len(ns) == kappa * (kappa + 1) // 2 - 1
    assert len(set(ns.intervals)) == len(ns)


def test_non_increasing_boundaries_rejected():
    with pytest.raises(DataError):
        cumulative_intervals([0, 1, 1])
    with pytest.raises(DataError):
        FeatureSpec("x", "numeric", boundaries=(0, 2, 1))


@given(st.floats(-5, 5, allow_nan=False), st.integers(2, 6))
@settings(max_examples=60)
def test_base_bin_inside_every_containing_interval(v, kappa):
    b = tuple(np.linspace(-5, 5, kappa + 1))
    spec = FeatureSpec("x", "numeric", boundaries=b)
    k = int(spec.bin_index([v])[0])
    lo_k, hi_k = b[k], b[k + 1]
    ns = cumulative_intervals(b)
    for j in range(len(ns)):
        lo, hi = ns.bounds(j)
        inside = lo <= v < hi or (hi == b[-1] and v == hi)
        if inside:
            assert lo <= lo_k and hi_k <= hi


def test_bin_index_half_open_and_last_closed():
    spec = FeatureSpec("x", "numeric", boundaries=(0.0, 1.0, 2.0))
    assert spec.bin_index([0.0, 0.999, 1.0, 2.0, 2.1, -0.1]).tolist() == [0, 0, 1, 1, -1, -1]


def test_base_intervals():
    ns = base_intervals([0, 1, 2])
    assert ns.intervals == ((0, 1), (1, 2))


def test_quantile_boundaries_open_ends():
    b = quantile_boundaries(np.arange(100.0), 4)
    assert b[0] == -np.inf and b[-1] == np.inf and len(b) == 5


def test_rule_reward():
    G = np.array([[2.0, 0.0], [3.0, 1.0]])
    assert rule_reward([], 0, G) == 0.0
    assert rule_reward([0, 1], 0, G) == 5.0
    rng = np.random.default_rng(0)
    G = rng.normal(size=(50, 3))
    S = rng.choice(50, size=17, replace=False)
    assert rule_reward(S, 2, G) == pytest.approx(sum(G[i, 2] for i in S))


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30)
def test_rule_reward_additive(seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(30, 2))
    perm = rng.permutation(30)
    S1, S2 = perm[:10], perm[10:20]
    assert rule_reward(np.r_[S1, S2], 1, G) == pytest.approx(
        rule_reward(S1, 1, G) + rule_reward(S2, 1, G))


def _schema():
    return FeatureSchema((
        FeatureSpec("color", "categorical", ("A", "B")),
        FeatureSpec("size", "numeric", boundaries=(0.0, 1.0, 2.0, 3.0)),
    ))


def test_load_simple(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("color,size\nA,0.5\nB,1.0\nA,2.5\n")
    ds, M = load_dataset(p, _schema())
    assert M == 3
    assert ds.column("color").tolist() == [0, 1, 0]
    assert ds.column("size").tolist() == [0, 1, 2]
    assert np.isnan(ds.outcomes).all()


def test_load_errors_name_the_row(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("color,size\nA,0.5\nC,1.0\n")
    with pytest.raises(DataError, match="row 3"):
        load_dataset(p, _schema())
    p.write_text("color\nA\n")
    with pytest.raises(DataError, match="missing column 'size'"):
        load_dataset(p, _schema())
    p.write_text("color,size\nA,abc\n")
    with pytest.raises(DataError, match="row 2"):
        load_dataset(p, _schema())
    p.write_text("color,size\nA,7\n")
    with pytest.raises(DataError, match="outside"):
        load_dataset(p, _schema())


def test_dataset_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    schema = _schema()
    X = np.stack([rng.integers(0, 2, 40), rng.uniform(0, 3, 40)], axis=1)
    actions = ActionSet.from_values([1.0, 2.0])
    ds = Dataset.from_raw(schema, X, actions=rng.integers(0, 2, 40),
                          outcomes=rng.integers(0, 2, 40).astype(float))
    p = tmp_path / "d.csv"
    save_dataset(ds, p, actions)
    back, M = load_dataset(p, schema, actions)
    assert M == 40
    assert np.array_equal(back.levels, ds.levels)
    assert np.array_equal(back.actions, ds.actions)
    assert np.array_equal(back.outcomes, ds.outcomes)


def test_counterfactual_roundtrip_and_shape_check(tmp_path):
    actions = ActionSet.from_values([1.0, 2.0, 3.0])
    G = np.arange(12.0).reshape(4, 3)
    p = tmp_path / "g.csv"
    save_counterfactuals(G, p, actions)
    assert np.array_equal(np.asarray(load_counterfactuals(p, actions, M=4)), G)
    with pytest.raises(DataError, match="expected 5x3"):
        load_counterfactuals(p, actions, M=5)
    with pytest.raises(DataError):
        CounterfactualMatrix(np.array([[np.nan]]))


def test_schema_from_config():
    s = schema_from_config([
        {"name": "a", "kind": "categorical", "levels": ["x", "y"]},
        {"name": "b", "kind": "numeric", "boundaries": [0, 1, 2]},
    ])
    assert s.names == ["a", "b"] and s["b"].n_base == 2


def test_duplicate_action_payloads_get_distinct_labels():
    a = ActionSet.from_values([1.0, 1.0, 2.0])
    assert len(set(a.labels)) == 3

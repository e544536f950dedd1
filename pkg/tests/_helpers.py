"""Small random instances and oracles shared by the test modules."""
import itertools

import numpy as np

from prescriptive_cg import graph as gr
from prescriptive_cg.data_model import ActionSet, Dataset, FeatureSchema, FeatureSpec

# criterion key -> (passed, detail), printed in the terminal summary
ACCEPTANCE = {}


def categorical_schema(levels):
    feats = tuple(
        FeatureSpec(f"f{j}", "categorical", tuple(f"v{k}" for k in range(L)))
        for j, L in enumerate(levels)
    )
    return FeatureSchema(feats)


def categorical_dataset(rng, M, levels):
    schema = categorical_schema(levels)
    X = np.stack([rng.integers(0, L, size=M) for L in levels], axis=1)
    return Dataset(schema, X)


def random_instance(seed, M=60, levels=(3, 3), n_actions=3, shift=0.0):
    """Categorical dataset, action set, teacher matrix and graph."""
    rng = np.random.default_rng(seed)
    ds = categorical_dataset(rng, M, levels)
    actions = ActionSet.from_values(np.arange(1, n_actions + 1, dtype=float))
    G = rng.normal(shift, 1.0, size=(M, n_actions))
    g = gr.build(ds.schema, actions, ds, counterfactuals=G)
    return ds, actions, G, g


def numeric_instance(seed, M=80, kappas=(3, 2), n_actions=2):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(M, len(kappas)))
    feats = []
    for j, k in enumerate(kappas):
        qs = np.quantile(X[:, j], np.arange(1, k) / k)
        feats.append(FeatureSpec(f"x{j}", "numeric", boundaries=(-np.inf, *qs, np.inf)))
    schema = FeatureSchema(tuple(feats))
    ds = Dataset.from_raw(schema, X)
    actions = ActionSet.from_values(np.arange(1, n_actions + 1, dtype=float))
    G = rng.normal(size=(M, n_actions))
    return ds, actions, G, gr.build(schema, actions, ds, counterfactuals=G)


def grocery_instance(seed, M=1200, n_stores=4):
    """Store x segment x loyalty toy retail data with probit demand.

    Loyal customers are less price sensitive, so the unconstrained optimum
    tends to charge them more; historical prices sit at the high end of the
    grid, so revenue-seeking prices lift demand well above its history.
    Returns (dataset, actions, G, historical action per sample).
    """
    from scipy.special import ndtr

    rng = np.random.default_rng([seed, 0x6A0C])
    schema = FeatureSchema((
        FeatureSpec("store", "categorical", tuple(f"s{k}" for k in range(n_stores))),
        FeatureSpec("segment", "categorical", ("a", "b", "c")),
        FeatureSpec("loyalty", "categorical", ("no", "yes")),
    ))
    X = np.stack([rng.integers(0, n_stores, M), rng.integers(0, 3, M),
                  rng.integers(0, 2, M)], axis=1)
    prices = np.array([1.0, 1.25, 1.5, 1.75, 2.0])
    actions = ActionSet.from_values(prices)
    base = 2.0 + 0.4 * X[:, 0] + 0.3 * X[:, 1]
    slope = np.where(X[:, 2] == 1, 0.8, 1.6) + 0.1 * X[:, 1]
    G = prices[None, :] * ndtr(base[:, None] - slope[:, None] * prices[None, :])
    hist = np.where(rng.random(M) < 0.8, 4, 3)
    ds = Dataset(schema, X, actions=hist)
    return ds, actions, G, hist


def vertex_oracle(c, A, senses, b, lb, ub):
    """Best objective over basic feasible solutions, or None if none exist.

    Only valid for bounded feasible regions (finite lb and ub).
    """
    n = len(c)
    rows = [(A[i], b[i], senses[i]) for i in range(len(b))]
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        rows.append((e, lb[j], ">"))
        rows.append((e, ub[j], "<"))
    best = None
    for sub in itertools.combinations(range(len(rows)), n):
        M = np.array([rows[k][0] for k in sub])
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, np.array([rows[k][1] for k in sub]))
        feas = True
        for a, r, s in rows:
            v = a @ x
            if (s == "<" and v > r + 1e-7) or (s == ">" and v < r - 1e-7) or (
                s == "=" and abs(v - r) > 1e-7
            ):
                feas = False
                break
        if feas:
            val = float(c @ x)
            best = val if best is None else max(best, val)
    return best

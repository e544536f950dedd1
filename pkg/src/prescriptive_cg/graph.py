"""Leveled rule-space graph.

One level per policy feature (its value or interval nodes plus a SKIP node),
then a final level of action nodes. A source-to-sink path picks one node per
level and is a decision rule: SKIP drops the feature from the rule.

Samples are grouped into *atoms*: maximal groups sharing the same base level
on every key feature. Every node membership is a union of atoms, so coverage
sets are stored as bitsets over atoms and carry the atom sample counts as
weights. When all samples are distinct an atom is a single sample.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from . import kernels
from .data_model import (
    DataError,
    IntervalNodeSet,
    base_intervals,
    cumulative_intervals,
)

SKIP = 0  # index of the SKIP node within every feature level


class GraphError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class GraphNode:
    kind: str  # "value" | "skip" | "action" | "source" | "sink"
    feature: str | None
    label: str
    span: tuple | None = None  # base-level range [a, b) for value nodes
    membership: np.ndarray | None = None  # atom bitset; None means all samples


@dataclass(eq=False)
class Level:
    feature: str
    schema_index: int
    nodes: list
    bits: np.ndarray  # (len(nodes), W); row SKIP is all ones

    def __len__(self):
        return len(self.nodes)


@dataclass(frozen=True, eq=False)
class PathRule:
    """One source-to-sink path, i.e. one candidate rule / RMP column."""

    choices: tuple
    action: int
    bits: np.ndarray
    n_covered: int
    reward: float
    text: str

    @property
    def key(self):
        return (self.choices, self.action)

    @property
    def length(self):
        """Number of non-SKIP features in the rule."""
        return sum(1 for c in self.choices if c != SKIP)

    def __repr__(self):
        return f"PathRule({self.text!r}, n={self.n_covered}, r={self.reward:.6g})"


class FeatureGraph:
    """Rule space for a fixed dataset; immutable after :func:`build`."""

    def __init__(self, schema, actions, levels, atom_keys, key_features,
                 atom_weights, sample_atom, G_atoms=None):
        self.schema = schema
        self.actions = actions
        self.levels = levels
        self.atom_keys = atom_keys
        self.key_features = key_features
        self.atom_weights = atom_weights
        self.sample_atom = sample_atom
        self.n_samples = int(sample_atom.shape[0])
        self.n_atoms = int(atom_weights.shape[0])
        self.n_words = kernels.n_words(self.n_atoms)
        self.all_bits = kernels.full(self.n_atoms)
        self.G_atoms = G_atoms
        self.action_nodes = [
            GraphNode("action", None, lab) for lab in actions.labels
        ]
        self.source = GraphNode("source", None, "source")
        self.sink = GraphNode("sink", None, "sink")

    # ---- structure ---------------------------------------------------
    @property
    def features(self):
        return [lv.feature for lv in self.levels]

    @property
    def n_vertices(self):
        return sum(len(lv) for lv in self.levels) + len(self.actions) + 2

    def count_paths(self):
        return prod(len(lv) for lv in self.levels) * len(self.actions)

    # ---- counterfactual aggregation ---------------------------------
    def aggregate(self, values):
        """Sum a per-sample array ``(M, ...)`` into per-atom totals ``(A, ...)``."""
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.n_samples:
            raise GraphError(
                f"expected {self.n_samples} rows, got {values.shape[0]}"
            )
        out = np.zeros((self.n_atoms,) + values.shape[1:])
        np.add.at(out, self.sample_atom, values)
        return out

    def with_counterfactuals(self, G):
        G = np.asarray(G, dtype=float)
        if G.shape != (self.n_samples, len(self.actions)):
            raise GraphError(
                f"counterfactual matrix is {G.shape}, expected "
                f"{(self.n_samples, len(self.actions))}"
            )
        g = FeatureGraph(self.schema, self.actions, self.levels, self.atom_keys,
                         self.key_features, self.atom_weights, self.sample_atom,
                         self.aggregate(G))
        return g

    # ---- paths -------------------------------------------------------
    def path_bits(self, choices):
        bits = self.all_bits.copy()
        for lv, c in zip(self.levels, choices):
            if c != SKIP:
                bits &= lv.bits[c]
        return bits

    def make_path(self, choices, action, bits=None):
        choices = tuple(int(c) for c in choices)
        if len(choices) != len(self.levels):
            raise GraphError("path must choose one node per feature level")
        if bits is None:
            bits = self.path_bits(choices)
        mask = kernels.to_bool(bits, self.n_atoms)
        n_cov = int(round(self.atom_weights[mask].sum()))
        reward = (
            float(self.G_atoms[mask, action].sum()) if self.G_atoms is not None else float("nan")
        )
        return PathRule(choices, int(action), bits, n_cov, reward,
                        self.rule_text(choices, action))

    def rule_conditions(self, choices):
        """``[(feature, node), ...]`` for the non-SKIP levels of a path."""
        return [
            (lv.feature, lv.nodes[c])
            for lv, c in zip(self.levels, choices)
            if c != SKIP
        ]

    def rule_text(self, choices, action):
        conds = []
        for feat, node in self.rule_conditions(choices):
            spec = self.schema[feat]
            if spec.kind == "categorical":
                conds.append(f"{feat}={node.label}")
            else:
                conds.append(f"{feat}∈{node.label}")
        head = " AND ".join(conds) if conds else "TRUE"
        return f"IF {head} THEN action={self.actions.labels[action]}"

    def atom_mask(self, bits):
        return kernels.to_bool(bits, self.n_atoms)

    def sample_mask(self, bits):
        return self.atom_mask(bits)[self.sample_atom]

    def matches(self, choices, levels_matrix):
        """Rows of a level-index matrix (dataset schema layout) satisfying a path."""
        ok = np.ones(levels_matrix.shape[0], dtype=bool)
        for lv, c in zip(self.levels, choices):
            if c == SKIP:
                continue
            a, b = lv.nodes[c].span
            col = levels_matrix[:, lv.schema_index]
            ok &= (col >= a) & (col < b)
        return ok


def _level_nodes(spec, interval_set):
    if spec.kind == "categorical":
        return [(lab, (k, k + 1)) for k, lab in enumerate(spec.levels)]
    if interval_set is None:
        interval_set = (
            cumulative_intervals(spec.boundaries)
            if spec.cumulative
            else base_intervals(spec.boundaries)
        )
    if not isinstance(interval_set, IntervalNodeSet):
        raise GraphError(f"feature {spec.name!r}: bad interval set")
    return list(zip(interval_set.labels(), interval_set.intervals))


def build(schema, actions, samples, interval_sets=None, features=None,
          extra_key_features=(), counterfactuals=None):
    """Construct the rule-space graph for ``samples``.

    ``features`` selects and orders the policy features (default: the
    schema's ``feature_order``). ``extra_key_features`` also split atoms
    without adding graph levels, for constraints that read features the
    policy does not use.
    """
    interval_sets = interval_sets or {}
    features = list(schema.feature_order if features is None else features)
    for name in features:
        schema.index(name)
    key_features = features + [f for f in extra_key_features if f not in features]
    key_idx = [schema.index(f) for f in key_features]

    M = len(samples)
    if M == 0:
        raise GraphError("cannot build a graph on an empty dataset")
    key_levels = samples.levels[:, key_idx] if key_idx else np.zeros((M, 0), dtype=np.int64)
    if key_idx:
        atom_keys, sample_atom, counts = np.unique(
            key_levels, axis=0, return_inverse=True, return_counts=True
        )
        sample_atom = sample_atom.reshape(-1)
    else:
        atom_keys = np.zeros((1, 0), dtype=np.int64)
        sample_atom = np.zeros(M, dtype=np.int64)
        counts = np.array([M])
    n_atoms = atom_keys.shape[0]

    levels = []
    for pos, name in enumerate(features):
        spec = schema[name]
        raw_nodes = _level_nodes(spec, interval_sets.get(name))
        if not raw_nodes:
            raise GraphError(f"feature {name!r} has no usable nodes")
        col = atom_keys[:, pos]
        nodes = [GraphNode("skip", name, "SKIP", None, kernels.full(n_atoms))]
        for lab, (a, b) in raw_nodes:
            mem = kernels.from_bool((col >= a) & (col < b))
            nodes.append(GraphNode("value", name, lab, (a, b), mem))
        bits = np.vstack([nd.membership for nd in nodes])
        levels.append(Level(name, schema.index(name), nodes, bits))

    g = FeatureGraph(schema, actions, levels, atom_keys, key_features,
                     counts.astype(float), sample_atom)
    if counterfactuals is not None:
        g = g.with_counterfactuals(counterfactuals)
    return g


def coverage(path, graph):
    """Sorted sample indices covered by ``path`` (SKIP levels are no-ops)."""
    choices = path.choices if isinstance(path, PathRule) else tuple(path)
    return np.flatnonzero(graph.sample_mask(graph.path_bits(choices)))


def count_paths(graph):
    return graph.count_paths()


def n_vertices(graph):
    return graph.n_vertices


def all_skip_path(graph, action):
    """The rule that ignores every feature: covers all samples with one action."""
    return graph.make_path((SKIP,) * len(graph.levels), action)


def enumerate_paths(graph, intra_policy=None, cap=100_000):
    """Every intra-rule feasible path, each exactly once (small graphs only)."""
    total = graph.count_paths()
    if total > cap:
        raise GraphError(f"graph has {total} paths, above the enumeration cap {cap}")
    out = []
    n_levels = len(graph.levels)

    def rec(depth, choices, bits):
        if depth == n_levels:
            if intra_policy is not None and not intra_policy.sink_ok(graph, choices):
                return
            for a in range(len(graph.actions)):
                out.append(graph.make_path(choices, a, bits))
            return
        lv = graph.levels[depth]
        for c in range(len(lv)):
            child = bits if c == SKIP else bits & lv.bits[c]
            if intra_policy is not None:
                cnt = int(round(graph.atom_weights[graph.atom_mask(child)].sum()))
                if not intra_policy.extension_ok(graph, depth, choices, c, cnt):
                    continue
            rec(depth + 1, choices + (c,), child)

    rec(0, (), graph.all_bits.copy())
    return out


def spread_scores(levels_matrix, G, feature_indices, n_levels):
    """Share of the per-sample action-response spread explained by each feature.

    The spread of sample ``i`` is ``max_a g[i,a] - min_a g[i,a]``; a feature
    scores the between-level variance of the spread over its total variance.
    """
    G = np.asarray(G, dtype=float)
    spread = G.max(axis=1) - G.min(axis=1)
    total = spread.var()
    scores = []
    for f, L in zip(feature_indices, n_levels):
        col = levels_matrix[:, f]
        cnt = np.bincount(col, minlength=L).astype(float)
        s = np.bincount(col, weights=spread, minlength=L)
        means = np.divide(s, cnt, out=np.zeros(L), where=cnt > 0)
        between = (cnt * (means - spread.mean()) ** 2).sum() / len(spread)
        scores.append(0.0 if total <= 0 else between / total)
    return np.array(scores)


def spread_order(schema, samples, G, features=None):
    """Features sorted by descending :func:`spread_scores` (ties keep schema order)."""
    features = list(schema.feature_order if features is None else features)
    idx = [schema.index(f) for f in features]
    scores = spread_scores(samples.levels, G, idx, [schema[f].n_base for f in features])
    order = sorted(range(len(features)), key=lambda j: (-scores[j], j))
    return [features[j] for j in order]

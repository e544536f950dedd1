"""Reference policies: true optimum, teacher argmax, greedy binary prescriptive tree."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .synthetic import expected_revenue


class Policy:
    """Maps every sample of a :class:`Dataset` to an action index."""

    name = "policy"

    def actions(self, dataset):  # pragma: no cover - interface
        raise NotImplementedError


@dataclass
class ConstantPolicy(Policy):
    action: int
    name: str = "constant"

    def actions(self, dataset):
        return np.full(len(dataset), self.action, dtype=np.int64)


@dataclass
class TablePolicy(Policy):
    """Fixed per-sample actions for the sample set the table was built on."""

    table: np.ndarray
    name: str = "table"

    def actions(self, dataset):
        if len(dataset) != len(self.table):
            raise ValueError("table policy applied to a different sample set")
        return np.asarray(self.table, dtype=np.int64)


@dataclass
class OptimalPolicy(Policy):
    """Per-sample best grid price under the true synthetic model."""

    model: object
    grid: np.ndarray
    name: str = "optimal"

    def actions(self, dataset):
        X = dataset.raw
        grid = np.asarray(self.grid, dtype=float)
        rev = np.stack([expected_revenue(self.model, X, np.full(len(X), p)) for p in grid], axis=1)
        return np.argmax(rev, axis=1)


@dataclass
class TeacherArgmaxPolicy(Policy):
    """Per-sample argmax of a teacher's predictions (``predict(dataset) -> G``)."""

    predict: object
    name: str = "argmax"

    def actions(self, dataset):
        return argmax_actions(self.predict(dataset))


@dataclass
class RulePolicy(Policy):
    """A multiway-split tree of selected rules (first matching rule, else default)."""

    tree: object
    name: str = "spmt"

    def actions(self, dataset):
        return self.tree.predict(dataset.levels)


def argmax_actions(G):
    """Row argmax with ties going to the lowest action index."""
    return np.argmax(np.asarray(G, dtype=float), axis=1).astype(np.int64)


def optimal_policy(model, grid):
    return OptimalPolicy(model, np.asarray(grid, dtype=float))


def argmax_policy(G):
    return TablePolicy(argmax_actions(G), "argmax")


# ---------------------------------------------------------------- greedy SPT


@dataclass
class SplitNode:
    action: int = 0
    feature: int | None = None  # schema index
    left_levels: np.ndarray | None = None  # bool over base levels routed left
    left: "SplitNode | None" = None
    right: "SplitNode | None" = None
    n: int = 0
    value: float = 0.0

    @property
    def is_leaf(self):
        return self.feature is None


@dataclass
class BinaryTreePolicy(Policy):
    root: SplitNode
    depth: int
    schema: object = None
    name: str = "spt"
    leaves: list = field(default_factory=list)

    def actions(self, dataset):
        levels = dataset.levels
        out = np.empty(levels.shape[0], dtype=np.int64)

        def route(node, idx):
            if node.is_leaf:
                out[idx] = node.action
                return
            go_left = node.left_levels[levels[idx, node.feature]]
            route(node.left, idx[go_left])
            route(node.right, idx[~go_left])

        route(self.root, np.arange(levels.shape[0]))
        return out

    def n_leaves(self):
        def count(node):
            return 1 if node.is_leaf else count(node.left) + count(node.right)

        return count(self.root)

    def render(self, actions=None):
        lines = []

        def label(a):
            return actions.labels[a] if actions is not None else str(a)

        def walk(node, pad):
            if node.is_leaf:
                lines.append(f"{pad}-> action={label(node.action)} (n={node.n})")
                return
            name = self.schema.features[node.feature].name if self.schema else f"f{node.feature}"
            lv = np.flatnonzero(node.left_levels).tolist()
            lines.append(f"{pad}{name} in levels {lv}:")
            walk(node.left, pad + "  ")
            lines.append(f"{pad}else:")
            walk(node.right, pad + "  ")

        walk(self.root, "")
        return "\n".join(lines)


def _candidate_splits(spec_kind, n_levels):
    """Boolean level masks for the left child of every candidate split."""
    if spec_kind == "categorical":
        out = []
        rest = list(range(1, n_levels))
        # fix level 0 on the left to enumerate each bipartition once
        for r in range(0, n_levels - 1):
            for comb in combinations(rest, r):
                m = np.zeros(n_levels, dtype=bool)
                m[0] = True
                m[list(comb)] = True
                out.append(m)
        return out
    return [np.arange(n_levels) < t for t in range(1, n_levels)]


def greedy_spt(dataset, G, depth, min_leaf=10, features=None):
    """Top-down greedy binary tree maximizing the summed teacher outcome.

    At each node every feature and every threshold (numeric) or level
    bipartition (categorical) is scored by the sum over the two children of
    their best single-action total; the best strictly improving split is
    taken while both children keep at least ``min_leaf`` samples.
    """
    G = np.asarray(G, dtype=float)
    levels = dataset.levels
    schema = dataset.schema
    feats = list(range(len(schema.features))) if features is None else [
        schema.index(f) if isinstance(f, str) else int(f) for f in features
    ]
    splits = {f: _candidate_splits(schema.features[f].kind, schema.features[f].n_base) for f in feats}
    tol = 1e-12 * (1.0 + np.abs(G).sum())

    def build(idx, d):
        tot = G[idx].sum(axis=0)
        node = SplitNode(action=int(np.argmax(tot)), n=len(idx), value=float(tot.max()))
        if d >= depth or len(idx) < 2 * min_leaf:
            return node
        best = (node.value + tol, None, None)
        for f in feats:
            L = schema.features[f].n_base
            col = levels[idx, f]
            S = np.zeros((L, G.shape[1]))
            np.add.at(S, col, G[idx])
            cnt = np.bincount(col, minlength=L)
            for mask in splits[f]:
                nl = int(cnt[mask].sum())
                if nl < min_leaf or len(idx) - nl < min_leaf:
                    continue
                left = S[mask].sum(axis=0)
                val = float(left.max() + (tot - left).max())
                if val > best[0]:
                    best = (val, f, mask)
        if best[1] is None:
            return node
        f, mask = best[1], best[2]
        go_left = mask[levels[idx, f]]
        node.feature = f
        node.left_levels = mask
        node.left = build(idx[go_left], d + 1)
        node.right = build(idx[~go_left], d + 1)
        return node

    root = build(np.arange(len(dataset)), 0)
    return BinaryTreePolicy(root, depth, schema)


def predicted_objective(policy, dataset, G):
    """Teacher-predicted total outcome of a policy on the samples behind ``G``."""
    a = policy.actions(dataset)
    return float(np.asarray(G)[np.arange(len(a)), a].sum())

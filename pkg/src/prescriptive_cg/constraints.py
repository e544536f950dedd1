"""Rule-level feasibility policies and cross-rule linear / pairwise rows."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .graph import SKIP, FeatureGraph, PathRule


class ConstraintError(ValueError):
    pass


# ---------------------------------------------------------------- intra-rule


@dataclass(frozen=True)
class IntraRulePolicy:
    """Conditions a single rule must meet, checked while a path is extended.

    ``forbidden`` holds partial assignments ``{feature: node label}``; a rule
    that matches every pair of one assignment is rejected. ``allowlist``
    restricts which features may appear as non-SKIP conditions.
    """

    min_samples: int = 10
    min_length: int = 0
    max_length: Optional[int] = None
    forbidden: tuple = ()
    allowlist: Optional[frozenset] = None

    def __post_init__(self):
        object.__setattr__(
            self, "forbidden", tuple(tuple(sorted(dict(f).items())) for f in self.forbidden)
        )
        if self.allowlist is not None:
            object.__setattr__(self, "allowlist", frozenset(self.allowlist))
        if self.min_samples < 0 or self.min_length < 0:
            raise ConstraintError("min_samples and min_length must be nonnegative")
        if self.max_length is not None and self.max_length < self.min_length:
            raise ConstraintError("max_length below min_length")
        for combo in self.forbidden:
            if not combo:
                raise ConstraintError("empty forbidden combination")

    def validate(self, graph: FeatureGraph):
        d = len(graph.levels)
        if self.max_length is not None and self.max_length > d:
            raise ConstraintError(f"max_length {self.max_length} exceeds {d} feature levels")
        if self.min_length > d:
            raise ConstraintError(f"min_length {self.min_length} exceeds {d} feature levels")
        names = set(graph.features)
        for combo in self.forbidden:
            for feat, _ in combo:
                if feat not in names:
                    raise ConstraintError(f"forbidden combination names unknown feature {feat!r}")
        return self

    def _max_len(self, graph):
        return len(graph.levels) if self.max_length is None else self.max_length

    def node_mask(self, graph, depth, prefix):
        """Nodes of level ``depth`` that may follow ``prefix``, ignoring sample counts."""
        lv = graph.levels[depth]
        mask = np.ones(len(lv), dtype=bool)
        used = sum(1 for c in prefix if c != SKIP)
        remaining = len(graph.levels) - depth - 1
        if used + 1 > self._max_len(graph) or (
            self.allowlist is not None and lv.feature not in self.allowlist
        ):
            mask[1:] = False
        # choosing SKIP here must still leave room to reach min_length
        if used + remaining < self.min_length:
            mask[SKIP] = False
        if used + 1 + remaining < self.min_length:
            mask[:] = False
        if self.forbidden:
            chosen = {
                graph.levels[k].feature: graph.levels[k].nodes[c].label
                for k, c in enumerate(prefix)
                if c != SKIP
            }
            for combo in self.forbidden:
                # fire only when this level completes the combination
                here = [v for f, v in combo if f == lv.feature]
                if not here:
                    continue
                if all(chosen.get(f) == v for f, v in combo if f != lv.feature):
                    for c in range(1, len(lv)):
                        if lv.nodes[c].label == here[0]:
                            mask[c] = False
        return mask

    def extension_mask(self, graph, depth, prefix, counts):
        """Vectorized :meth:`extension_ok` over all nodes of the next level."""
        return self.node_mask(graph, depth, prefix) & (np.asarray(counts) >= self.min_samples)

    def extension_ok(self, graph, depth, prefix, node, count):
        return bool(self.node_mask(graph, depth, prefix)[node]) and count >= self.min_samples

    def sink_ok(self, graph, choices):
        return sum(1 for c in choices if c != SKIP) >= self.min_length


def feasible_extension(partial_path, candidate_node, policy, current_coverage, graph):
    """Whether ``partial_path`` (a tuple of node indices) may take ``candidate_node`` next.

    ``current_coverage`` is the sample count after the extension.
    """
    depth = len(partial_path)
    return policy.extension_ok(graph, depth, tuple(partial_path), candidate_node, current_coverage)


def sink_feasible(partial_path, policy, graph=None):
    return sum(1 for c in partial_path if c != SKIP) >= policy.min_length


# ---------------------------------------------------------------- linear rows


@dataclass(eq=False)
class LinearRow:
    """``sum_j coefficient(path_j) z_j (sense) rhs`` with a sample-additive coefficient.

    ``weights[i, a]`` is the contribution of sample ``i`` when a selected rule
    covering it takes action ``a``.
    """

    weights: np.ndarray
    sense: str
    rhs: float
    label: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 2:
            raise ConstraintError("row weights must be an (M, n_actions) matrix")
        if not np.isfinite(self.weights).all():
            raise ConstraintError(f"row {self.label!r}: non-finite weights")
        if self.sense not in ("<", ">", "="):
            self.sense = {"<=": "<", ">=": ">", "==": "="}.get(self.sense, self.sense)
            if self.sense not in ("<", ">", "="):
                raise ConstraintError(f"row {self.label!r}: unknown sense")
        self.rhs = float(self.rhs)

    def atom_weights(self, graph):
        key = id(graph.sample_atom)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not graph.sample_atom:
            hit = (graph.sample_atom, graph.aggregate(self.weights))
            self._cache[key] = hit
        return hit[1]

    def coefficient(self, path: PathRule, graph):
        W = self.atom_weights(graph)
        return float(W[graph.atom_mask(path.bits), path.action].sum())

    def coefficient_from_samples(self, samples, action):
        """Reference evaluation straight from sample indices."""
        return float(self.weights[np.asarray(samples, dtype=np.int64), action].sum())

    def satisfied(self, value, tol=1e-6):
        if self.sense == "<":
            return value <= self.rhs + tol
        if self.sense == ">":
            return value >= self.rhs - tol
        return abs(value - self.rhs) <= tol


def capacity_row(group, weight, bound, sense="<", label="capacity"):
    """Row over the samples in ``group`` (boolean mask) with per-sample action weights."""
    group = np.asarray(group, dtype=bool)
    weight = np.asarray(weight, dtype=float)
    if weight.shape[0] != group.shape[0]:
        raise ConstraintError("group mask and weights disagree on sample count")
    return LinearRow(weight * group[:, None], sense, bound, label)


def band_rows(group, G, p_hist, theta, label="band"):
    """Keep the group mean of ``G`` under the policy within ``(1 +- theta) * p_hist``."""
    group = np.asarray(group, dtype=bool)
    size = int(group.sum())
    if size == 0:
        raise ConstraintError(f"{label}: empty group")
    W = np.asarray(G, dtype=float) * group[:, None] / size
    hi = LinearRow(W, "<", (1.0 + theta) * p_hist, f"{label}<=")
    lo = LinearRow(W.copy(), ">", (1.0 - theta) * p_hist, f"{label}>=")
    return hi, lo


def group_mask(dataset, selector):
    """Boolean sample mask from ``{feature: [level labels or indices]}`` (AND over features)."""
    mask = np.ones(len(dataset), dtype=bool)
    for feat, values in selector.items():
        spec = dataset.schema[feat]
        col = dataset.column(feat)
        if not isinstance(values, (list, tuple)):
            values = [values]
        idx = []
        for v in values:
            if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
                idx.append(int(v))
            elif spec.kind == "categorical":
                if str(v) not in spec.levels:
                    raise ConstraintError(f"group selector: {feat!r} has no level {v!r}")
                idx.append(spec.levels.index(str(v)))
            else:
                raise ConstraintError(f"group selector on numeric {feat!r} needs bin indices")
        mask &= np.isin(col, idx)
    return mask


# ---------------------------------------------------------------- conflicts


@dataclass(frozen=True, eq=False)
class ConflictPredicate:
    """Pure test on two rules; True means they may not both be selected."""

    test: Callable
    label: str = "conflict"

    def __call__(self, a, b):
        return bool(self.test(a, b)) or bool(self.test(b, a))


@dataclass(frozen=True)
class PairRow:
    """``z_a + z_b <= 1`` for two pooled columns identified by path key."""

    a: tuple
    b: tuple
    label: str = "conflict"
    sense: str = "<"
    rhs: float = 1.0

    def coefficient(self, path, graph=None):
        return 1.0 if path.key in (self.a, self.b) else 0.0

    def satisfied(self, value, tol=1e-6):
        return value <= self.rhs + tol


def loyalty_price_order(dataset, graph, store_feature, loyalty_feature, loyalty_level,
                        label="loyalty"):
    """Loyalty members must not pay more than non-members in the same store.

    Rules ``a`` and ``b`` conflict when ``a`` covers loyalty members of some
    store, ``b`` covers non-members of that store, and ``a``'s price exceeds
    ``b``'s. The test is directional; :class:`ConflictPredicate` applies it
    both ways.
    """
    store = dataset.column(store_feature)
    spec = dataset.schema[loyalty_feature]
    lvl = spec.levels.index(str(loyalty_level)) if spec.kind == "categorical" else int(loyalty_level)
    member = dataset.column(loyalty_feature) == lvl
    prices = graph.actions.array
    cache = {}

    def stores(path):
        hit = cache.get(path.key)
        if hit is None:
            cov = graph.sample_mask(path.bits)
            hit = (frozenset(np.unique(store[cov & member]).tolist()),
                   frozenset(np.unique(store[cov & ~member]).tolist()))
            cache[path.key] = hit
        return hit

    def test(a, b):
        if prices[a.action] <= prices[b.action]:
            return False
        return bool(stores(a)[0] & stores(b)[1])

    return ConflictPredicate(test, label)


def conflict_rows_for(new_path, existing_paths, predicate):
    """One ``z_new + z_old <= 1`` row for every pooled path that conflicts with ``new_path``."""
    rows = []
    for old in existing_paths:
        if old.key == new_path.key:
            continue
        if predicate(new_path, old):
            rows.append(PairRow(old.key, new_path.key, predicate.label))
    return rows

"""Feature schemas, action sets, datasets and counterfactual matrices.

Numeric features are discretized into half-open base bins ``[b_k, b_{k+1})``;
the last bin is closed on the right. A graph level for a numeric feature
may use the base bins alone or every contiguous run of them (cumulative
binning), which lets a multiway node express threshold conditions.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed schema, samples file or counterfactual file."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str  # "categorical" | "numeric"
    levels: tuple = ()
    boundaries: tuple = ()
    cumulative: bool = True

    def __post_init__(self):
        if self.kind == "categorical":
            object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
            if len(self.levels) < 2:
                raise DataError(f"feature {self.name!r}: categorical needs >= 2 levels")
            if len(set(self.levels)) != len(self.levels):
                raise DataError(f"feature {self.name!r}: duplicate levels")
        elif self.kind == "numeric":
            b = tuple(float(x) for x in self.boundaries)
            object.__setattr__(self, "boundaries", b)
            if len(b) < 2:
                raise DataError(f"feature {self.name!r}: numeric needs >= 2 boundaries")
            if any(not (lo < hi) for lo, hi in zip(b, b[1:])):
                raise DataError(f"feature {self.name!r}: boundaries must be strictly increasing")
        else:
            raise DataError(f"feature {self.name!r}: unknown kind {self.kind!r}")

    @property
    def n_base(self):
        """Number of base levels (categories or base bins)."""
        if self.kind == "categorical":
            return len(self.levels)
        return len(self.boundaries) - 1

    def bin_index(self, values):
        """Map numeric values to base-bin indices; -1 marks out-of-range values."""
        v = np.asarray(values, dtype=float)
        b = np.asarray(self.boundaries)
        idx = np.searchsorted(b, v, side="right") - 1
        idx = np.where(v == b[-1], len(b) - 2, idx)
        bad = (v < b[0]) | (v > b[-1]) | np.isnan(v)
        return np.where(bad, -1, idx).astype(np.int64)

    def base_label(self, k):
        if self.kind == "categorical":
            return self.levels[k]
        return _interval_text(self.boundaries[k], self.boundaries[k + 1])


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple
    feature_order: Optional[tuple] = None

    def __post_init__(self):
        feats = tuple(self.features)
        object.__setattr__(self, "features", feats)
        names = [f.name for f in feats]
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        order = tuple(self.feature_order) if self.feature_order is not None else tuple(names)
        if sorted(order) != sorted(names):
            raise DataError("feature_order must be a permutation of the feature names")
        object.__setattr__(self, "feature_order", order)

    @property
    def names(self):
        return [f.name for f in self.features]

    def index(self, name):
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise KeyError(name)

    def __getitem__(self, name):
        return self.features[self.index(name)]

    def with_order(self, order):
        return FeatureSchema(self.features, tuple(order))


@dataclass(frozen=True)
class ActionSet:
    labels: tuple
    values: tuple

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        values = tuple(float(x) for x in self.values)
        if not labels:
            raise DataError("action set is empty")
        if len(labels) != len(values):
            raise DataError("action labels and values differ in length")
        if len(set(labels)) != len(labels):
            raise DataError("action labels must be unique")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values, fmt="{:.4g}"):
        labels = [fmt.format(v) for v in values]
        # identical payloads (degenerate grids) still need distinct labels
        seen = {}
        for i, lab in enumerate(labels):
            if lab in seen:
                seen[lab] += 1
                labels[i] = f"{lab}#{seen[lab]}"
            else:
                seen[lab] = 0
        return cls(tuple(labels), tuple(values))

    def __len__(self):
        return len(self.labels)

    @property
    def array(self):
        return np.asarray(self.values, dtype=float)

    def index(self, label):
        return self.labels.index(str(label))


@dataclass(frozen=True)
class Sample:
    levels: tuple
    action: Optional[int]
    outcome: Optional[float]


@dataclass
class Dataset:
    """M samples over a schema, stored column-wise.

    ``levels[i, f]`` is the base-level index of feature ``f``; ``raw`` keeps
    the undiscretized numeric values when known. ``actions`` uses -1 for a
    missing historical action and ``outcomes`` uses NaN for a missing outcome.
    """

    schema: FeatureSchema
    levels: np.ndarray
    raw: Optional[np.ndarray] = None
    actions: Optional[np.ndarray] = None
    prices: Optional[np.ndarray] = None
    outcomes: Optional[np.ndarray] = None

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=np.int64)
        M, F = self.levels.shape
        if F != len(self.schema.features):
            raise DataError("level matrix width does not match schema")
        for f, spec in enumerate(self.schema.features):
            col = self.levels[:, f]
            if M and (col.min() < 0 or col.max() >= spec.n_base):
                raise DataError(f"feature {spec.name!r}: level index out of range")
        if self.actions is None:
            self.actions = np.full(M, -1, dtype=np.int64)
        if self.outcomes is None:
            self.outcomes = np.full(M, np.nan)
        if self.prices is None:
            self.prices = np.full(M, np.nan)

    def __len__(self):
        return self.levels.shape[0]

    def __getitem__(self, i):
        a = int(self.actions[i])
        y = float(self.outcomes[i])
        return Sample(
            tuple(int(v) for v in self.levels[i]),
            None if a < 0 else a,
            None if math.isnan(y) else y,
        )

    def column(self, name):
        return self.levels[:, self.schema.index(name)]

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(
            self.schema,
            self.levels[idx],
            None if self.raw is None else self.raw[idx],
            self.actions[idx],
            self.prices[idx],
            self.outcomes[idx],
        )

    @classmethod
    def from_raw(cls, schema, X, **kw):
        """Discretize a raw matrix (numeric values, or category indices) against ``schema``."""
        X = np.asarray(X, dtype=float)
        levels = np.empty(X.shape, dtype=np.int64)
        for f, spec in enumerate(schema.features):
            if spec.kind == "numeric":
                idx = spec.bin_index(X[:, f])
                if (idx < 0).any():
                    row = int(np.flatnonzero(idx < 0)[0])
                    raise DataError(f"row {row}: feature {spec.name!r} value out of range")
                levels[:, f] = idx
            else:
                levels[:, f] = X[:, f].astype(np.int64)
        return cls(schema, levels, raw=X, **kw)


@dataclass(frozen=True)
class CounterfactualMatrix:
    """Teacher estimates ``g[i, a]`` of the outcome of sample ``i`` under action ``a``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DataError("counterfactual matrix must be 2-D")
        if not np.isfinite(v).all():
            raise DataError("counterfactual matrix has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def check(self, M, n_actions):
        if self.values.shape != (M, n_actions):
            raise DataError(
                f"counterfactual matrix is {self.values.shape[0]}x{self.values.shape[1]}, "
                f"expected {M}x{n_actions}"
            )
        return self


@dataclass(frozen=True)
class IntervalNodeSet:
    """Graph nodes for one numeric feature: intervals over its base bins.

    ``intervals[j] = (a, b)`` covers base bins ``a..b-1``, i.e. the real
    interval ``[boundaries[a], boundaries[b])``.
    """

    boundaries: tuple
    intervals: tuple = field(default=())

    def __len__(self):
        return len(self.intervals)

    def bounds(self, j):
        a, b = self.intervals[j]
        return self.boundaries[a], self.boundaries[b]

    def labels(self):
        return [_interval_text(*self.bounds(j)) for j in range(len(self))]

    def membership(self, level_idx):
        """``(len(self), len(level_idx))`` bool matrix of base bins inside each interval."""
        level_idx = np.asarray(level_idx)
        lo = np.array([a for a, _ in self.intervals], dtype=np.int64)[:, None]
        hi = np.array([b for _, b in self.intervals], dtype=np.int64)[:, None]
        return (level_idx[None, :] >= lo) & (level_idx[None, :] < hi)


def _check_boundaries(boundaries):
    b = tuple(float(x) for x in boundaries)
    if len(b) < 2:
        raise DataError("need at least two boundaries")
    if any(not (lo < hi) for lo, hi in zip(b, b[1:])):
        raise DataError("boundaries must be strictly increasing")
    return b


def cumulative_intervals(boundaries):
    """Every contiguous run of base bins except the full range.

    With kappa base bins this yields kappa*(kappa+1)/2 - 1 intervals; the full
    interval is left out because the SKIP node already stands for it.
    """
    b = _check_boundaries(boundaries)
    kappa = len(b) - 1
    spans = [
        (a, c)
        for width in range(1, kappa + 1)
        for a in range(0, kappa - width + 1)
        for c in [a + width]
        if not (a == 0 and c == kappa)
    ]
    return IntervalNodeSet(b, tuple(spans))


def base_intervals(boundaries):
    """Plain one-node-per-bin discretization (no overlapping intervals)."""
    b = _check_boundaries(boundaries)
    kappa = len(b) - 1
    if kappa == 1:
        return IntervalNodeSet(b, ())
    return IntervalNodeSet(b, tuple((a, a + 1) for a in range(kappa)))


def quantile_boundaries(values, n_bins, open_ends=True):
    """Bin edges at empirical quantiles; the outer edges are +-inf when ``open_ends``."""
    values = np.asarray(values, dtype=float)
    qs = np.quantile(values, np.arange(1, n_bins) / n_bins) if n_bins > 1 else np.array([])
    inner = np.unique(qs)
    if open_ends:
        return (-np.inf, *inner.tolist(), np.inf)
    return (float(values.min()), *[q for q in inner if values.min() < q < values.max()], float(values.max()))


def rule_reward(S, q, G):
    """Total teacher outcome of samples ``S`` under action ``q``."""
    G = np.asarray(G)
    S = np.asarray(S, dtype=np.int64)
    if S.size == 0:
        return 0.0
    return float(G[S, q].sum())


def _interval_text(lo, hi):
    def fmt(x):
        if math.isinf(x):
            return "-inf" if x < 0 else "inf"
        return f"{x:.6g}"

    return f"[{fmt(lo)}, {fmt(hi)})"


# --------------------------------------------------------------------------
# file formats


def _sniff_delimiter(first_line, default=","):
    for d in (",", "\t", ";", "|"):
        if d in first_line:
            return d
    return default


def load_dataset(path, schema, actions=None, action_column="action",
                 outcome_column="outcome", delimiter=None, require_outcome=False):
    """Read a delimited samples file with a header row.

    Numeric columns are mapped to base-bin indices, categorical columns to
    level indices. The action column may hold action labels or numeric
    payloads; a payload that is not on the action grid is kept in
    ``Dataset.prices`` with the action marked absent.
    """
    with open(path, newline="") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    delim = delimiter or _sniff_delimiter(lines[0])
    reader = csv.reader(lines, delimiter=delim)
    header = [h.strip() for h in next(reader)]
    col = {h: j for j, h in enumerate(header)}
    for spec in schema.features:
        if spec.name not in col:
            raise DataError(f"{path}: missing column {spec.name!r}")
    if require_outcome and outcome_column not in col:
        raise DataError(f"{path}: missing column {outcome_column!r}")

    F = len(schema.features)
    rows = [r for r in reader if any(c.strip() for c in r)]
    M = len(rows)
    levels = np.empty((M, F), dtype=np.int64)
    raw = np.empty((M, F))
    acts = np.full(M, -1, dtype=np.int64)
    prices = np.full(M, np.nan)
    outcomes = np.full(M, np.nan)
    act_values = None if actions is None else np.asarray(actions.values)
    for i, r in enumerate(rows, start=0):
        rowno = i + 2  # 1-based, after the header
        if len(r) != len(header):
            raise DataError(f"{path}: row {rowno}: expected {len(header)} cells, got {len(r)}")
        for f, spec in enumerate(schema.features):
            cell = r[col[spec.name]].strip()
            if spec.kind == "categorical":
                try:
                    k = spec.levels.index(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {rowno}: unknown value {cell!r} for feature {spec.name!r}"
                    ) from None
                levels[i, f] = k
                raw[i, f] = k
            else:
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {rowno}: cannot parse {cell!r} for feature {spec.name!r}"
                    ) from None
                k = int(spec.bin_index([v])[0])
                if k < 0:
                    raise DataError(
                        f"{path}: row {rowno}: value {v} outside the range of feature {spec.name!r}"
                    )
                levels[i, f] = k
                raw[i, f] = v
        if action_column in col and actions is not None:
            cell = r[col[action_column]].strip()
            if cell:
                if cell in actions.labels:
                    acts[i] = actions.labels.index(cell)
                    prices[i] = actions.values[acts[i]]
                else:
                    try:
                        v = float(cell)
                    except ValueError:
                        raise DataError(
                            f"{path}: row {rowno}: unknown action {cell!r}"
                        ) from None
                    prices[i] = v
                    hit = np.flatnonzero(np.isclose(act_values, v, rtol=0, atol=1e-12))
                    if hit.size:
                        acts[i] = int(hit[0])
        if outcome_column in col:
            cell = r[col[outcome_column]].strip()
            if cell:
                try:
                    outcomes[i] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {rowno}: cannot parse outcome {cell!r}"
                    ) from None
    return Dataset(schema, levels, raw=raw, actions=acts, prices=prices, outcomes=outcomes), M


def save_dataset(dataset, path, actions=None, action_column="action",
                 outcome_column="outcome", delimiter=","):
    """Write a samples file readable by :func:`load_dataset`."""
    schema = dataset.schema
    header = list(schema.names)
    has_action = actions is not None and (
        (dataset.actions >= 0).any() or np.isfinite(dataset.prices).any()
    )
    has_outcome = np.isfinite(dataset.outcomes).any()
    if has_action:
        header.append(action_column)
    if has_outcome:
        header.append(outcome_column)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(header)
        for i in range(len(dataset)):
            row = []
            for f, spec in enumerate(schema.features):
                k = int(dataset.levels[i, f])
                if spec.kind == "categorical":
                    row.append(spec.levels[k])
                elif dataset.raw is not None:
                    row.append(repr(float(dataset.raw[i, f])))
                else:
                    row.append(repr(float(spec.boundaries[k])))
            if has_action:
                a = int(dataset.actions[i])
                if a >= 0:
                    row.append(actions.labels[a])
                elif np.isfinite(dataset.prices[i]):
                    row.append(repr(float(dataset.prices[i])))
                else:
                    row.append("")
            if has_outcome:
                y = dataset.outcomes[i]
                row.append("" if np.isnan(y) else repr(float(y)))
            w.writerow(row)


def load_counterfactuals(path, actions, M=None, delimiter=None):
    """Read an M x |actions| matrix; a header row of action labels is optional."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    delim = delimiter or _sniff_delimiter(lines[0])
    rows = list(csv.reader(lines, delimiter=delim))
    first = [c.strip() for c in rows[0]]
    try:
        if first == list(actions.labels):
            # numeric labels also parse as floats
            raise ValueError
        [float(c) for c in first]
        body = rows
        offset = 1
    except ValueError:
        if first != list(actions.labels):
            raise DataError(f"{path}: header {first} does not match action labels")
        body = rows[1:]
        offset = 2
    out = np.empty((len(body), len(actions)))
    for i, r in enumerate(body):
        if len(r) != len(actions):
            raise DataError(
                f"{path}: row {i + offset}: expected {len(actions)} columns, got {len(r)}"
            )
        try:
            out[i] = [float(c) for c in r]
        except ValueError:
            raise DataError(f"{path}: row {i + offset}: unparseable cell") from None
    cf = CounterfactualMatrix(out)
    if M is not None:
        cf.check(M, len(actions))
    return cf


def save_counterfactuals(G, path, actions, header=True, delimiter=","):
    G = np.asarray(G)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        if header:
            w.writerow(actions.labels)
        for row in G:
            w.writerow([repr(float(v)) for v in row])


def schema_from_config(entries, feature_order=None):
    """Build a schema from plain dicts (``name``, ``kind``, ``levels``/``boundaries``)."""
    feats = []
    for e in entries:
        kind = e.get("kind", "categorical")
        b = e.get("boundaries", ())
        feats.append(
            FeatureSpec(
                name=e["name"],
                kind=kind,
                levels=tuple(e.get("levels", ())),
                boundaries=tuple(float(x) for x in b),
                cumulative=bool(e.get("cumulative", True)),
            )
        )
    return FeatureSchema(tuple(feats), None if feature_order is None else tuple(feature_order))


def actions_from_config(entries: Sequence):
    labels, values = [], []
    for e in entries:
        if isinstance(e, dict):
            labels.append(str(e.get("label", e["value"])))
            values.append(float(e["value"]))
        else:
            labels.append(str(e))
            values.append(float(e))
    return ActionSet(tuple(labels), tuple(values))

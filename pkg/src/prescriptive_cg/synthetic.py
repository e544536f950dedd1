"""Synthetic probit demand benchmarks, teachers and policy evaluation.

Purchase happens when ``g(X) + h(X) * P + eps > 0`` with ``eps ~ N(0, 1)``,
so the purchase probability at price ``p`` is ``Phi(g(x) + h(x) p)`` and the
expected revenue is ``p * Phi(g(x) + h(x) p)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .data_model import (
    ActionSet,
    DataError,
    Dataset,
    FeatureSchema,
    FeatureSpec,
    quantile_boundaries,
)

MODEL_IDS = (1, 2, 3, 4, 5, 6)
GRID_PERCENTILES = np.arange(10, 100, 10)


def _steps(x, cuts, values):
    """Piecewise-constant function: ``values[k]`` on ``[cuts[k-1], cuts[k])``."""
    return np.asarray(values)[np.searchsorted(np.asarray(cuts), x, side="right")]


@dataclass(frozen=True)
class GenerativeModel:
    model_id: int
    n_features: int = 2
    beta: np.ndarray | None = None

    def __post_init__(self):
        if self.model_id not in MODEL_IDS:
            raise DataError(f"unknown synthetic model {self.model_id}; expected 1..6")

    def g(self, X):
        X = np.atleast_2d(X)
        k = self.model_id
        if k in (1, 5):
            return X[:, 0].astype(float)
        if k in (2, 3, 4):
            return np.full(X.shape[0], 5.0)
        return 4.0 * np.abs(X[:, 0] + X[:, 1])

    def h(self, X):
        X = np.atleast_2d(X)
        k = self.model_id
        if k in (1, 5):
            return np.full(X.shape[0], -1.0)
        if k == 2:
            return -1.5 * (X @ self.beta)
        if k == 3:
            return _steps(X[:, 0], [-1.0, 0.0, 1.0], [-1.2, -1.1, -0.9, -0.8])
        if k == 4:
            return _steps(X[:, 0], [-1.0, 0.0, 1.0], [-1.25, -1.1, -0.9, -0.75]) + np.where(
                X[:, 1] < 0, -0.1, 0.1
            )
        return -np.abs(X[:, 0] + X[:, 1])

    def sample_X(self, rng, M):
        if self.model_id in (1, 5):
            return rng.normal(5.0, 1.0, size=(M, 2))
        return rng.normal(0.0, 1.0, size=(M, self.n_features))

    def sample_P(self, rng, X):
        M = X.shape[0]
        if self.model_id == 1:
            return rng.normal(5.0, 1.0, size=M)
        if self.model_id == 2:
            return rng.normal(0.0, 2.0, size=M)
        if self.model_id == 5:
            return rng.normal(X[:, 0], 1.0)
        return rng.normal(X[:, 0] + 5.0, 2.0)

    @property
    def feature_names(self):
        return [f"x{j}" for j in range(self.n_features)]


def make_model(model_id, seed=0):
    """Model instance; dataset 2 draws its five active coefficients from ``seed``."""
    if model_id == 2:
        rng = np.random.default_rng([seed, 2, 0xB7])
        beta = np.zeros(20)
        beta[:5] = rng.normal(0.0, 1.0, size=5)
        return GenerativeModel(2, 20, beta)
    return GenerativeModel(model_id)


@dataclass
class SyntheticData:
    model: GenerativeModel
    X: np.ndarray
    P: np.ndarray
    Y: np.ndarray
    latent: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return self.X.shape[0]


def generate(model_id, M, seed, model=None):
    """Draw ``M`` samples (features, observed price, purchase indicator)."""
    if M < 1:
        raise DataError("M must be at least 1")
    model = model or make_model(model_id, seed)
    if model.model_id != model_id:
        raise DataError("model instance does not match model_id")
    rng = np.random.default_rng([seed, model_id])
    X = model.sample_X(rng, M)
    P = model.sample_P(rng, X)
    eps = rng.normal(0.0, 1.0, size=M)
    latent = model.g(X) + model.h(X) * P + eps
    return SyntheticData(model, X, P, (latent > 0).astype(float), latent)


def true_purchase_prob(model, x, p):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = ndtr(model.g(x) + model.h(x) * np.asarray(p, dtype=float))
    return out if out.size > 1 else float(out[0])


def price_grid(prices, percentiles=GRID_PERCENTILES):
    """Nine candidate prices at the 10th..90th percentiles of the observed prices."""
    prices = np.asarray(prices, dtype=float)
    prices = prices[np.isfinite(prices)]
    if prices.size < 10:
        raise DataError(f"need at least 10 observed prices, got {prices.size}")
    grid = np.percentile(prices, percentiles)
    if np.ptp(grid) == 0:
        warnings.warn("observed prices are constant; all grid actions coincide", RuntimeWarning)
    return grid


def grid_actions(grid):
    return ActionSet.from_values(grid)


def oracle_counterfactuals(model, X, grid):
    """Exact expected revenue ``p * Phi(g(x) + h(x) p)`` for every sample and grid price."""
    X = np.atleast_2d(X)
    grid = np.asarray(grid, dtype=float)
    z = model.g(X)[:, None] + model.h(X)[:, None] * grid[None, :]
    return grid[None, :] * ndtr(z)


def nearest_grid_action(prices, grid):
    """Index of the grid price whose window contains each observed price, else -1.

    Windows extend half-way to the neighbouring grid prices; the outer windows
    mirror the adjacent half-width.
    """
    grid = np.asarray(grid, dtype=float)
    prices = np.asarray(prices, dtype=float)
    if grid.size == 1:
        return np.zeros(prices.shape, dtype=np.int64)
    mids = (grid[1:] + grid[:-1]) / 2.0
    lo = grid[0] - (mids[0] - grid[0])
    hi = grid[-1] + (grid[-1] - mids[-1])
    idx = np.searchsorted(mids, prices, side="right")
    out = np.where((prices >= lo) & (prices <= hi) & np.isfinite(prices), idx, -1)
    return out.astype(np.int64)


class EmpiricalTeacher:
    """Cell-frequency purchase model over binned features and grid actions.

    A cell is (binned feature vector, grid action). The purchase probability
    of a cell is ``(buys + alpha) / (trials + 2 alpha)``; cells never observed
    use the marginal purchase rate of that action instead.
    """

    def __init__(self, alpha=1.0):
        self.alpha = float(alpha)
        self.table = None

    def fit(self, levels, prices, outcomes, grid):
        levels = np.asarray(levels, dtype=np.int64)
        if levels.shape[0] == 0:
            raise DataError("empirical teacher needs a nonempty training set")
        self.grid = np.asarray(grid, dtype=float)
        acts = nearest_grid_action(prices, self.grid)
        y = np.asarray(outcomes, dtype=float)
        ok = (acts >= 0) & np.isfinite(y)
        self.cells, inv = np.unique(levels, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        Q = self.grid.size
        buys = np.zeros((len(self.cells), Q))
        trials = np.zeros((len(self.cells), Q))
        np.add.at(buys, (inv[ok], acts[ok]), y[ok])
        np.add.at(trials, (inv[ok], acts[ok]), 1.0)
        mb = buys.sum(axis=0)
        mt = trials.sum(axis=0)
        self.marginal = (mb + self.alpha) / (mt + 2 * self.alpha)
        prob = (buys + self.alpha) / (trials + 2 * self.alpha)
        self.table = np.where(trials > 0, prob, self.marginal[None, :])
        self._index = {tuple(c): k for k, c in enumerate(self.cells.tolist())}
        return self

    def purchase_prob(self, levels):
        levels = np.asarray(levels, dtype=np.int64)
        uniq, inv = np.unique(levels, axis=0, return_inverse=True)
        rows = np.empty((len(uniq), self.grid.size))
        for u, row in enumerate(map(tuple, uniq.tolist())):
            k = self._index.get(row)
            rows[u] = self.marginal if k is None else self.table[k]
        return rows[inv.reshape(-1)]

    def predict(self, levels):
        return self.purchase_prob(levels) * self.grid[None, :]


def _heldout_loglik(levels, prices, outcomes, grid, folds, alpha):
    acts = nearest_grid_action(prices, grid)
    ll = 0.0
    for k in range(folds.max() + 1):
        test = (folds == k) & (acts >= 0)
        train = folds != k
        t = EmpiricalTeacher(alpha).fit(levels[train], prices[train], outcomes[train], grid)
        p = t.purchase_prob(levels[test])[np.arange(int(test.sum())), acts[test]]
        y = outcomes[test]
        ll += float((y * np.log(p) + (1 - y) * np.log1p(-p)).sum())
    return ll


def select_teacher_bins(X, prices, outcomes, grid, candidates=(1, 2, 3, 4, 6, 8),
                        n_folds=5, rounds=2, seed=0, alpha=1.0):
    """Per-feature quantile bin counts for the empirical teacher, by cross-validation.

    Coordinate ascent on the held-out Bernoulli log-likelihood, starting from
    one bin (feature ignored) everywhere. Returns a list of bin counts.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    prices = np.asarray(prices, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    rng = np.random.default_rng([seed, 0xF01D])
    folds = rng.permutation(np.arange(X.shape[0]) % n_folds)
    cols = {}

    def column(j, b):
        key = (j, b)
        if key not in cols:
            spec = FeatureSpec("f", "numeric", boundaries=quantile_boundaries(X[:, j], b))
            cols[key] = spec.bin_index(X[:, j])
        return cols[key]

    bins = [1] * X.shape[1]

    def score(bs):
        levels = np.stack([column(j, b) for j, b in enumerate(bs)], axis=1)
        return _heldout_loglik(levels, prices, outcomes, grid, folds, alpha)

    best = score(bins)
    for _ in range(rounds):
        changed = False
        for j in range(X.shape[1]):
            for b in candidates:
                if b == bins[j]:
                    continue
                trial = bins.copy()
                trial[j] = b
                val = score(trial)
                if val > best + 1e-9:
                    best, bins, changed = val, trial, True
        if not changed:
            break
    return bins


def empirical_teacher(levels, prices, outcomes, grid, alpha=1.0):
    """Fit on the given samples and return their counterfactual revenue matrix."""
    return EmpiricalTeacher(alpha).fit(levels, prices, outcomes, grid).predict(levels)


def binned_schema(X, n_bins, names=None, cumulative=True):
    """Numeric schema with quantile bins learned on ``X`` (outer edges open).

    ``n_bins`` is one count for all features or one per feature.
    """
    X = np.atleast_2d(X)
    names = names or [f"x{j}" for j in range(X.shape[1])]
    bins = [n_bins] * X.shape[1] if np.isscalar(n_bins) else list(n_bins)
    feats = [
        FeatureSpec(name, "numeric", boundaries=quantile_boundaries(X[:, j], bins[j]),
                    cumulative=cumulative)
        for j, name in enumerate(names)
    ]
    return FeatureSchema(tuple(feats))


def to_dataset(schema, data, grid=None):
    """Discretize synthetic samples into a :class:`Dataset`."""
    acts = None
    if grid is not None:
        acts = nearest_grid_action(data.P, grid)
    return Dataset.from_raw(schema, data.X, actions=acts, prices=np.asarray(data.P, dtype=float),
                            outcomes=np.asarray(data.Y, dtype=float))


def expected_revenue(model, X, prices):
    """Per-sample ``p * Phi(g(x) + h(x) p)`` at the prescribed prices."""
    prices = np.asarray(prices, dtype=float)
    return prices * ndtr(model.g(X) + model.h(X) * prices)


def realized_revenue(policy, dataset, model, grid):
    """Mean expected revenue of ``policy`` under the true model on ``dataset``."""
    a = np.asarray(policy.actions(dataset))
    if a.shape[0] != len(dataset) or (a < 0).any():
        raise DataError("policy left some samples without an action")
    grid = np.asarray(grid, dtype=float)
    return float(expected_revenue(model, dataset.raw, grid[a]).mean())


@dataclass
class EvalReport:
    seed: int
    model_id: int
    M: int
    realized: dict
    predicted: dict = field(default_factory=dict)
    rule_counts: list = field(default_factory=list)

    def rows(self):
        for name, val in self.realized.items():
            yield dict(seed=self.seed, dataset=self.model_id, M=self.M, method=name,
                       realized=val, predicted=self.predicted.get(name, float("nan")))

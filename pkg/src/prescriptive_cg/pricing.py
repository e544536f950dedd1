"""K-best path pricing over the rule-space graph.

Labels are partial paths. Each is ranked by an optimistic bound on the
reduced cost of any completion: the sum, over its covered atoms, of the best
nonnegative per-atom contribution under the current duals, minus ``mu``.
Extending a label can only shrink its coverage, so the bound never
underestimates a descendant.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .constraints import IntraRulePolicy, LinearRow
from .graph import SKIP


@dataclass
class Duals:
    """LP prices: ``lam`` per sample, ``mu`` for the rule-count row, ``rho`` per side row."""

    lam: np.ndarray
    mu: float = 0.0
    rho: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def zeros(cls, M, n_rows=0):
        return cls(np.zeros(M), 0.0, np.zeros(n_rows))


@dataclass
class PricingStats:
    levels: int = 0
    labels_expanded: int = 0
    pruned_bound: int = 0
    pruned_infeasible: int = 0
    truncated: int = 0
    duplicates: int = 0
    returned: int = 0
    best_rc: float = float("-inf")

    def line(self):
        return (
            f"pricing: expanded={self.labels_expanded} pruned_bound={self.pruned_bound} "
            f"pruned_infeasible={self.pruned_infeasible} truncated={self.truncated} "
            f"returned={self.returned} best_rc={self.best_rc:.6g}"
        )


@dataclass
class PricingResult:
    paths: list
    reduced_costs: np.ndarray
    exact: bool
    stats: PricingStats

    def __len__(self):
        return len(self.paths)


def reduced_cost(path, duals, rows=(), graph=None):
    """``r_j - (sum of lam over S_j + mu + sum_l rho_l * coefficient_l(path))``."""
    if graph is None:
        raise ValueError("reduced_cost needs the graph that owns the path")
    cov = graph.sample_mask(path.bits)
    total = float(duals.lam[cov].sum()) + duals.mu
    for rho, row in zip(duals.rho, rows):
        if rho != 0.0:
            total += rho * row.coefficient(path, graph)
    return path.reward - total


def optimistic_bound(coverage, lam, mu, G):
    """Per-sample bound ``sum_i max(0, max_a g[i,a] - lam_i) - mu`` over a coverage set."""
    G = np.asarray(G, dtype=float)
    idx = np.asarray(coverage, dtype=np.int64)
    if idx.size == 0:
        return -mu
    best = np.maximum(0.0, G[idx].max(axis=1) - np.asarray(lam)[idx])
    return float(best.sum()) - mu


def atom_values(graph, duals, rows=()):
    """``V[k, a]``: contribution of atom ``k`` to the reduced cost of a rule taking action ``a``.

    Only sample-additive rows enter; pair rows never involve new columns.
    """
    if graph.G_atoms is None:
        raise ValueError("graph has no counterfactuals attached")
    V = graph.G_atoms - graph.aggregate(duals.lam)[:, None]
    for rho, row in zip(duals.rho, rows):
        if rho != 0.0 and isinstance(row, LinearRow):
            V = V - rho * row.atom_weights(graph)
    return V


def label_bound(bits, best, mu):
    return float(kernels.action_sums(bits, best[:, None])[0, 0]) - mu


def default_eps_rc(G):
    return 1e-6 * (1.0 + float(np.abs(np.asarray(G)).max(initial=0.0)))


class _MaskCache:
    """Memoized structural extension masks; prefixes only matter through forbidden lists."""

    def __init__(self, policy, graph):
        self.policy = policy
        self.graph = graph
        self.memo = {}

    def get(self, depth, prefix):
        if self.policy.forbidden:
            key = (depth, prefix)
        else:
            key = (depth, sum(1 for c in prefix if c != SKIP))
        hit = self.memo.get(key)
        if hit is None:
            hit = self.policy.node_mask(self.graph, depth, prefix)
            self.memo[key] = hit
        return hit


def k_best_paths(graph, duals, K=100, beam_width=None, intra_policy=None, rows=(),
                 exclude=(), eps_rc=None):
    """Up to ``K`` intra-feasible paths with the largest reduced costs above ``eps_rc``.

    ``exclude`` holds path keys already in the column pool. ``exact`` on the
    result is True when no level dropped labels because of ``beam_width``.
    """
    policy = intra_policy or IntraRulePolicy(min_samples=0)
    beam_width = 50 * K if beam_width is None else int(beam_width)
    if eps_rc is None:
        eps_rc = 1e-6 * (1.0 + float(np.abs(graph.G_atoms).max(initial=0.0)))
    exclude = set(exclude)
    stats = PricingStats()
    V = atom_values(graph, duals, rows)
    best = np.maximum(0.0, V.max(axis=1))
    mu = float(duals.mu)
    masks = _MaskCache(policy, graph)
    weights = graph.atom_weights

    prefixes = [()]
    bits = graph.all_bits[None, :].copy()
    root_count = float(weights.sum())
    exact = True
    if root_count < policy.min_samples:
        prefixes = []
    root_bound = float(best.sum()) - mu
    if root_bound <= eps_rc:
        stats.pruned_bound += len(prefixes)
        prefixes = []

    for depth, lv in enumerate(graph.levels):
        if not prefixes:
            break
        stats.levels += 1
        stats.labels_expanded += len(prefixes)
        counts, sums = kernels.extend_scores(bits, lv.bits, weights, best)
        bounds = sums - mu
        feas = np.vstack([masks.get(depth, p) for p in prefixes]) & (
            counts + 1e-9 >= policy.min_samples
        )
        stats.pruned_infeasible += int((~feas).sum())
        keep = feas & (bounds > eps_rc)
        stats.pruned_bound += int((feas & ~keep).sum())
        li, ni = np.nonzero(keep)
        if li.size > beam_width:
            order = np.argsort(-bounds[li, ni], kind="stable")[:beam_width]
            stats.truncated += int(li.size - beam_width)
            exact = False
            sel = np.sort(order)
            li, ni = li[sel], ni[sel]
        new_bits = bits[li] & lv.bits[ni]
        prefixes = [prefixes[l] + (int(n),) for l, n in zip(li, ni)]
        bits = new_bits

    # complete paths: every action for each surviving label
    cand = []
    if prefixes:
        ok = [i for i, p in enumerate(prefixes) if policy.sink_ok(graph, p)]
        if ok:
            rc = kernels.action_sums(bits[ok], V) - mu
            for row_i, i in enumerate(ok):
                for a in np.flatnonzero(rc[row_i] > eps_rc):
                    cand.append((float(rc[row_i, a]), i, int(a)))
    cand.sort(key=lambda t: (-t[0], t[1], t[2]))
    lin = [k for k, r in enumerate(rows) if isinstance(r, LinearRow)]
    lin_rows = [rows[k] for k in lin]
    rho = np.asarray(duals.rho, dtype=float)
    lin_duals = Duals(duals.lam, mu, rho[lin] if len(lin) else np.zeros(0))
    paths, rcs = [], []
    for val, i, a in cand:
        key = (prefixes[i], a)
        if key in exclude:
            stats.duplicates += 1
            continue
        path = graph.make_path(prefixes[i], a, bits[i])
        # new columns have zero coefficients in pair rows
        exact_rc = reduced_cost(path, lin_duals, lin_rows, graph)
        if exact_rc <= eps_rc:
            continue
        paths.append(path)
        rcs.append(exact_rc)
        if len(paths) >= K:
            break
    stats.returned = len(paths)
    stats.best_rc = rcs[0] if rcs else (cand[0][0] if cand else float("-inf"))
    return PricingResult(paths, np.asarray(rcs), exact, stats)

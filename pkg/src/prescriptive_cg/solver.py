"""Column generation over rule paths and the final binary master problem.

The restricted master LP (maximization) has one partition row per atom,

    sum_j a_kj z_j + s_k = 1,       objective  sum_j r_j z_j - c * sum_k w_k s_k

where ``w_k`` is the atom's sample count. Samples in one atom are covered by
exactly the same rules, so this is the per-sample model with identical rows
merged; a per-sample dual is the atom dual split evenly, ``lam_i = L_k / w_k``.
A rule-count row ``sum_j z_j <= n`` follows, then the side rows and the
pairwise conflict rows. Each side row gets an elastic variable with a large
penalty so the LP stays feasible before enough columns exist; a positive
elastic value in a final solution is reported as a violation.
"""
from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels, lp
from .constraints import ConflictPredicate, IntraRulePolicy, conflict_rows_for
from .graph import SKIP, all_skip_path, enumerate_paths
from .pricing import Duals, k_best_paths, reduced_cost

INT_TOL = 1e-6
ELASTIC_WEIGHT = 100.0


class SolverError(RuntimeError):
    pass


@dataclass
class CGParams:
    K: int = 100
    beam_width: int | None = None  # default 50 * K
    eps_dual: float = 1e-7
    eps_rc: float | None = None  # default 1e-6 * (1 + max|g|)
    t_max: int = 50
    time_cap: float = 3600.0
    c: float | None = None  # default 2 * max|g| + 1
    widen: int = 8  # beam growth factor when a truncated pricing round finds nothing
    max_widen: int = 3


def default_penalty(G):
    return 2.0 * float(np.abs(np.asarray(G)).max(initial=0.0)) + 1.0


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    best_rc: float
    columns_added: int
    pool_size: int
    lp_seconds: float
    pricing_seconds: float
    lp_pivots: int
    dual_change: float
    exact_pricing: bool
    pricing_log: str = ""


@dataclass
class RmpState:
    graph: object
    n: int
    c: float
    pool: list = field(default_factory=list)
    keys: set = field(default_factory=set)
    side_rows: list = field(default_factory=list)
    pair_rows: list = field(default_factory=list)
    intra: IntraRulePolicy | None = None
    conflicts: list = field(default_factory=list)
    duals: Duals | None = None
    pair_duals: np.ndarray | None = None
    log: list = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""
    last_solution: object = None
    basis: object = None
    _colcache: dict = field(default_factory=dict, repr=False)

    @property
    def M(self):
        return self.graph.n_samples

    @property
    def objective(self):
        return self.log[-1].objective if self.log else float("nan")

    def add(self, paths):
        """Admit new columns and materialize their conflict rows."""
        added = []
        for p in paths:
            if p.key in self.keys:
                continue
            for pred in self.conflicts:
                self.pair_rows.extend(conflict_rows_for(p, self.pool, pred))
            self.pool.append(p)
            self.keys.add(p.key)
            added.append(p)
        return added


# ---------------------------------------------------------------- LP assembly


def _column(state, j):
    p = state.pool[j]
    hit = state._colcache.get(p.key)
    if hit is None:
        atoms = kernels.to_indices(p.bits, state.graph.n_atoms)
        side = np.array([row.coefficient(p, state.graph) for row in state.side_rows])
        hit = (atoms, side)
        state._colcache[p.key] = hit
    return hit


def _elastic_penalty(state, row):
    W = np.abs(row.weights)
    span = float(W.sum(axis=0).max(initial=0.0))
    return ELASTIC_WEIGHT * state.c * state.M / max(span, 1e-12)


def build_lp(state, z_lb=None, z_ub=None):
    """Assemble the master LP for the current pool. Returns (LinearProgram, layout dict)."""
    g = state.graph
    A_n = g.n_atoms
    P = len(state.pool)
    S = len(state.side_rows)
    key_pos = {p.key: j for j, p in enumerate(state.pool)}
    elastic = []  # (row, sign)
    for l, row in enumerate(state.side_rows):
        if row.sense == "<":
            elastic.append((l, -1.0))
        elif row.sense == ">":
            elastic.append((l, 1.0))
        else:
            elastic.append((l, -1.0))
            elastic.append((l, 1.0))
    E = len(elastic)
    card = A_n
    side0 = A_n + 1
    pair0 = side0 + S
    m = pair0 + len(state.pair_rows)
    n_var = A_n + E + P
    z0 = A_n + E

    rows, cols, vals = [], [], []
    # atom slacks
    rows.extend(range(A_n))
    cols.extend(range(A_n))
    vals.extend([1.0] * A_n)
    for e, (l, sign) in enumerate(elastic):
        rows.append(side0 + l)
        cols.append(A_n + e)
        vals.append(sign)
    for j in range(P):
        atoms, side = _column(state, j)
        rows.extend(atoms.tolist())
        cols.extend([z0 + j] * len(atoms))
        vals.extend([1.0] * len(atoms))
        rows.append(card)
        cols.append(z0 + j)
        vals.append(1.0)
        for l in np.flatnonzero(side):
            rows.append(side0 + int(l))
            cols.append(z0 + j)
            vals.append(float(side[l]))
    for q, pr in enumerate(state.pair_rows):
        for key in (pr.a, pr.b):
            rows.append(pair0 + q)
            cols.append(z0 + key_pos[key])
            vals.append(1.0)
    A = sp.csc_matrix((vals, (rows, cols)), shape=(m, n_var))

    cost = np.empty(n_var)
    cost[:A_n] = -state.c * g.atom_weights
    for e, (l, _) in enumerate(elastic):
        cost[A_n + e] = -_elastic_penalty(state, state.side_rows[l])
    cost[z0:] = [p.reward for p in state.pool]
    senses = ["="] * A_n + ["<"] + [r.sense for r in state.side_rows] + ["<"] * len(state.pair_rows)
    b = np.concatenate([np.ones(A_n), [state.n], [r.rhs for r in state.side_rows],
                        np.ones(len(state.pair_rows))])
    lb = np.zeros(n_var)
    ub = np.full(n_var, np.inf)
    if z_lb is not None:
        lb[z0:] = z_lb
    if z_ub is not None:
        ub[z0:] = z_ub
    prog = lp.LinearProgram(cost, A, senses, b, lb, ub)
    layout = dict(card=card, side0=side0, pair0=pair0, z0=z0, elastic=elastic, n_atoms=A_n)
    return prog, layout


def _scale(state):
    return state.c * float(state.graph.atom_weights.max())


def _extract_duals(state, sol, layout):
    g = state.graph
    A_n = layout["n_atoms"]
    lam_atom, mu, rho = lp.duals(
        sol,
        np.arange(A_n),
        layout["card"],
        np.arange(layout["side0"], layout["side0"] + len(state.side_rows)),
    )
    lam = (lam_atom / g.atom_weights)[g.sample_atom]
    pair = sol.y[layout["pair0"]:]
    return Duals(lam, mu, rho), pair


def solve_rmp(state, warm=True):
    prog, layout = build_lp(state)
    sol = lp.solve(prog, state.basis if warm else None, scale=_scale(state))
    if sol.status != "optimal":
        raise SolverError(f"master LP ended {sol.status}")
    state.basis = sol.basis
    state.last_solution = (sol, layout, prog)
    state.duals, state.pair_duals = _extract_duals(state, sol, layout)
    return sol


def pool_reduced_costs(state):
    """Reduced cost of every pooled column under the latest duals (pair rows included)."""
    rows = list(state.side_rows)
    out = []
    for p in state.pool:
        rc = reduced_cost(p, state.duals, rows, state.graph)
        for q, pr in enumerate(state.pair_rows):
            rc -= state.pair_duals[q] * pr.coefficient(p)
        out.append(rc)
    return np.asarray(out)


# ---------------------------------------------------------------- CG loop


def initial_pool(graph, intra=None):
    """All-SKIP rules, one per action, that the intra-rule policy admits."""
    cols = []
    for a in range(len(graph.actions)):
        p = all_skip_path(graph, a)
        if intra is not None:
            if p.n_covered < intra.min_samples or not intra.sink_ok(graph, p.choices):
                continue
        cols.append(p)
    return cols


def run_cg(graph, n, G=None, intra=None, side_rows=(), conflicts=(), params=None,
           initial_columns=None, log=None):
    """Alternate master LP solves and pricing until no improving column remains."""
    params = params or CGParams()
    if n < 1:
        raise SolverError("rule budget n must be at least 1")
    if G is not None:
        graph = graph.with_counterfactuals(G)
    if graph.G_atoms is None:
        raise SolverError("no counterfactual matrix attached to the graph")
    if intra is not None:
        intra.validate(graph)
    gmax = float(np.abs(graph.G_atoms / graph.atom_weights[:, None]).max(initial=0.0))
    c = params.c if params.c is not None else 2.0 * gmax + 1.0
    eps_rc = params.eps_rc if params.eps_rc is not None else 1e-6 * (1.0 + gmax)
    state = RmpState(graph, int(n), float(c), side_rows=list(side_rows), intra=intra,
                     conflicts=[p for p in conflicts if isinstance(p, ConflictPredicate)])
    state.add(initial_pool(graph, intra) if initial_columns is None else initial_columns)

    t0 = time.perf_counter()
    prev_lam = None
    t = 0
    beam = params.beam_width if params.beam_width is not None else 50 * params.K
    widened = 0
    while True:
        s0 = time.perf_counter()
        sol = solve_rmp(state)
        lp_time = time.perf_counter() - s0
        t += 1
        lam = state.duals.lam
        dchange = float(np.abs(lam - prev_lam).sum()) if prev_lam is not None else float("inf")
        rec = IterationRecord(t, sol.objective, float("nan"), 0, len(state.pool), lp_time,
                              0.0, sol.iterations, dchange, True)
        state.log.append(rec)
        if t >= params.t_max:
            state.stop_reason = "t_max"
            break
        if prev_lam is not None and dchange < state.M * params.eps_dual:
            state.stop_reason = "dual_stable"
            state.converged = True
            break
        if time.perf_counter() - t0 > params.time_cap:
            state.stop_reason = "time_cap"
            break
        s0 = time.perf_counter()
        res = k_best_paths(graph, state.duals, params.K, beam, intra,
                           state.side_rows, state.keys, eps_rc)
        # a truncated empty round proves nothing: retry wider (the wider beam is kept)
        while not res.paths and not res.exact and widened < params.max_widen:
            widened += 1
            beam *= params.widen
            res = k_best_paths(graph, state.duals, params.K, beam, intra,
                               state.side_rows, state.keys, eps_rc)
        rec.pricing_seconds = time.perf_counter() - s0
        rec.best_rc = res.stats.best_rc
        rec.exact_pricing = res.exact
        rec.pricing_log = res.stats.line()
        if log is not None:
            log(f"iter {t}: obj={sol.objective:.6f} pool={len(state.pool)} {rec.pricing_log}")
        if not res.paths:
            state.stop_reason = "no_columns" if res.exact else "no_columns_beam"
            state.converged = True
            break
        rec.columns_added = len(state.add(res.paths))
        prev_lam = lam
    return state


# ---------------------------------------------------------------- Master MIP


@dataclass
class MasterSolution:
    selected: list
    z: np.ndarray
    slack_samples: np.ndarray
    objective: float
    lp_bound: float
    gap: float
    status: str
    nodes: int
    side_values: list
    side_violation: float
    diagnostics: list
    default_action: int = 0
    n_samples: int = 0

    @property
    def covered(self):
        return self.n_samples - len(self.slack_samples)


def _fractional(z):
    return np.abs(z - np.round(z)) > INT_TOL


def _evaluate_integral(state, z):
    """Objective of a 0/1 selection: rewards minus slack cost (no elastic term)."""
    g = state.graph
    covered = np.zeros(g.n_atoms, dtype=bool)
    reward = 0.0
    for j in np.flatnonzero(z > 0.5):
        covered |= g.atom_mask(state.pool[j].bits)
        reward += state.pool[j].reward
    return reward - state.c * float(g.atom_weights[~covered].sum())


def _greedy_incumbent(state, n):
    g = state.graph
    order = sorted(range(len(state.pool)), key=lambda j: (-state.pool[j].reward, j))
    used = np.zeros(g.n_words, dtype=np.uint64)
    chosen = []
    pair = {(pr.a, pr.b) for pr in state.pair_rows} | {(pr.b, pr.a) for pr in state.pair_rows}
    for j in order:
        if len(chosen) >= n:
            break
        p = state.pool[j]
        if (used & p.bits).any():
            continue
        if any((p.key, state.pool[k].key) in pair for k in chosen):
            continue
        chosen.append(j)
        used |= p.bits
    z = np.zeros(len(state.pool))
    z[chosen] = 1.0
    return z


def solve_master_mip(state, n=None, node_limit=20000, time_limit=600.0):
    """Branch-and-bound over binary z with continuous slacks."""
    n = state.n if n is None else int(n)
    if n != state.n:
        state.n = n
    P = len(state.pool)
    scale = _scale(state)
    tol = 1e-9 * (1.0 + scale)
    zlb0, zub0 = np.zeros(P), np.ones(P)
    t0 = time.perf_counter()
    rewards = np.array([p.reward for p in state.pool])

    def node_lp(zlb, zub, warm):
        prog, layout = build_lp(state, zlb, zub)
        sol = lp.solve(prog, warm, scale=scale)
        if sol.status != "optimal":
            raise SolverError(f"node LP ended {sol.status}")
        return sol, layout

    root, layout = node_lp(zlb0, zub0, state.basis)
    z0 = layout["z0"]
    lp_bound = root.objective

    # incumbent: greedy selection, evaluated with slacks and elastics optimal
    zg = _greedy_incumbent(state, n)
    inc_sol, _ = node_lp(zg, zg, root.basis)
    inc_z, inc_obj = zg, inc_sol.objective

    counter = itertools.count()
    heap = []
    nodes = 0
    status = "optimal"

    def consider(sol, zlb, zub):
        nonlocal inc_z, inc_obj
        z = sol.x[z0:]
        if sol.objective <= inc_obj + tol:
            return None
        frac = _fractional(z)
        if not frac.any():
            inc_z, inc_obj = np.round(z), sol.objective
            return None
        cand = np.flatnonzero(frac)
        dist = np.abs(z[cand] - 0.5)
        j = int(cand[np.lexsort((cand, -rewards[cand], dist))[0]])
        return j

    # depth-first dive from the root (z=1 child first), pushing siblings
    stack = [(zlb0, zub0, root)]
    diving = True
    while stack or heap:
        if time.perf_counter() - t0 > time_limit:
            status = "time_limit"
            break
        if nodes >= node_limit:
            status = "node_limit"
            break
        if diving and stack:
            zlb, zub, sol = stack.pop()
        else:
            diving = False
            negb, _, zlb, zub, warm = heapq.heappop(heap)
            if -negb <= inc_obj + tol:
                continue
            sol, _ = node_lp(zlb, zub, warm)
        nodes += 1
        j = consider(sol, zlb, zub)
        if j is None:
            diving = False
            continue
        for val in (0.0, 1.0):
            clb, cub = zlb.copy(), zub.copy()
            clb[j] = cub[j] = val
            if diving and val == 1.0:
                child, _ = node_lp(clb, cub, sol.basis)
                stack.append((clb, cub, child))
            else:
                heapq.heappush(heap, (-sol.objective, next(counter), clb, cub, sol.basis))
    if status == "optimal":
        best_open = inc_obj
    else:
        opens = [-h[0] for h in heap] + [s[2].objective for s in stack]
        best_open = max([inc_obj] + opens)
    return _make_solution(state, np.round(inc_z), lp_bound, status, nodes, best_open)


def _make_solution(state, z, lp_bound, status, nodes, best_bound=None):
    g = state.graph
    sel = [j for j in np.flatnonzero(z > 0.5)]
    selected = [state.pool[j] for j in sel]
    covered = np.zeros(g.n_atoms, dtype=bool)
    for p in selected:
        m = g.atom_mask(p.bits)
        if (covered & m).any():
            raise SolverError("selected rules overlap")
        covered |= m
    slack = np.flatnonzero(~covered[g.sample_atom])
    obj = _evaluate_integral(state, z)
    side_vals, viol = [], 0.0
    for row in state.side_rows:
        v = sum(row.coefficient(p, g) for p in selected)
        side_vals.append(v)
        if row.sense == "<":
            viol = max(viol, v - row.rhs)
        elif row.sense == ">":
            viol = max(viol, row.rhs - v)
        else:
            viol = max(viol, abs(v - row.rhs))
    diag = [
        dict(rule=p.text, action=g.actions.labels[p.action], n_covered=p.n_covered,
             reward=p.reward)
        for p in selected
    ]
    gap = (lp_bound - obj) / max(1.0, abs(lp_bound))
    return MasterSolution(selected, z, slack, obj, lp_bound, gap, status, nodes, side_vals,
                          max(viol, 0.0), diag, default_action(g), g.n_samples)


def default_action(graph):
    """Fallback for regions no selected rule covers: best action over all samples."""
    if graph.G_atoms is None:
        return 0
    return int(np.argmax(graph.G_atoms.sum(axis=0)))


# ---------------------------------------------------------------- exact helpers


def exact_pool(graph, n, intra=None, side_rows=(), conflicts=(), c=None, cap=100_000):
    """RmpState whose pool is every feasible path (small graphs only)."""
    paths = enumerate_paths(graph, intra, cap)
    gmax = float(np.abs(graph.G_atoms / graph.atom_weights[:, None]).max(initial=0.0))
    state = RmpState(graph, int(n), float(c if c is not None else 2.0 * gmax + 1.0),
                     side_rows=list(side_rows), intra=intra,
                     conflicts=[p for p in conflicts if isinstance(p, ConflictPredicate)])
    state.add(paths)
    solve_rmp(state, warm=False)
    return state


def brute_force_best(paths, graph, n, c, pairs_conflict=None):
    """Best objective over pairwise-disjoint subsets of ``paths`` with size <= n.

    Objective: total reward minus ``c`` for every sample no chosen rule covers.
    Pure-Python exhaustive search; intended for tens of paths.
    """
    M = graph.n_samples
    covers = []
    for p in paths:
        idx = np.flatnonzero(graph.sample_mask(p.bits))
        covers.append(sum(1 << int(i) for i in idx))
    order = sorted(range(len(paths)), key=lambda j: -paths[j].reward)
    best = [-c * M, ()]

    def rec(start, mask, chosen, reward):
        cnt = bin(mask).count("1")
        val = reward - c * (M - cnt)
        if val > best[0] + 1e-12:
            best[0], best[1] = val, tuple(chosen)
        if len(chosen) == n:
            return
        for pos in range(start, len(order)):
            j = order[pos]
            if covers[j] & mask or covers[j] == 0:
                continue
            if pairs_conflict is not None and any(pairs_conflict(paths[j], paths[k]) for k in chosen):
                continue
            chosen.append(j)
            rec(pos + 1, mask | covers[j], chosen, reward + paths[j].reward)
            chosen.pop()

    rec(0, 0, [], 0.0)
    return best[0], [paths[j] for j in best[1]]


# ---------------------------------------------------------------- tree view


@dataclass
class TreeNode:
    feature: str | None = None
    branches: list = field(default_factory=list)  # (node label, child TreeNode)
    groups: list = field(default_factory=list)  # child TreeNodes keyed by next feature
    rule: object = None  # PathRule at a leaf


@dataclass
class MultiwayTree:
    """Selected rules grouped by their conditions in graph feature order."""

    root: TreeNode
    rules: list
    default_action: int
    graph: object

    def leaves(self):
        out = []

        def walk(node):
            if node.rule is not None:
                out.append(node.rule)
            for _, ch in node.branches:
                walk(ch)
            for ch in node.groups:
                walk(ch)

        walk(self.root)
        return out

    def predict(self, levels_matrix):
        """Action index per row: the first matching rule, else the default action."""
        levels_matrix = np.asarray(levels_matrix)
        out = np.full(levels_matrix.shape[0], -1, dtype=np.int64)
        for p in self.rules:
            hit = self.graph.matches(p.choices, levels_matrix) & (out < 0)
            out[hit] = p.action
        out[out < 0] = self.default_action
        return out

    def render(self):
        g = self.graph
        lines = []

        def walk(node, indent):
            pad = "  " * indent
            if node.rule is not None:
                p = node.rule
                lines.append(f"{pad}-> action={g.actions.labels[p.action]} "
                             f"(n={p.n_covered}, reward={p.reward:.6g})")
            for ch in node.groups:
                if ch.feature is not None:
                    lines.append(f"{pad}[{ch.feature}]")
                    walk(ch, indent + 1)
                else:
                    walk(ch, indent)
            for lab, ch in node.branches:
                lines.append(f"{pad}{node.feature} {lab}")
                walk(ch, indent + 1)

        if self.rules:
            walk(self.root, 0)
        lines.append(f"default -> action={g.actions.labels[self.default_action]}")
        return "\n".join(lines)


def _group(rules, start, graph):
    node = TreeNode()
    by_level = {}
    for p in rules:
        nxt = next((k for k in range(start, len(graph.levels)) if p.choices[k] != SKIP), None)
        by_level.setdefault(nxt, []).append(p)
    for lvl in sorted(by_level, key=lambda v: -1 if v is None else v):
        members = by_level[lvl]
        if lvl is None:
            for p in members:
                node.groups.append(TreeNode(rule=p))
            continue
        split = TreeNode(feature=graph.levels[lvl].feature)
        by_node = {}
        for p in members:
            by_node.setdefault(p.choices[lvl], []).append(p)
        for c in sorted(by_node):
            child = _group(by_node[c], lvl + 1, graph)
            split.branches.append((_branch_label(graph, lvl, c), child))
        node.groups.append(split)
    return node


def _branch_label(graph, lvl, c):
    lv = graph.levels[lvl]
    node = lv.nodes[c]
    if graph.schema[lv.feature].kind == "categorical":
        return f"= {node.label}"
    return f"∈ {node.label}"


def extract_tree(solution, graph):
    sel = list(solution.selected)
    covered = np.zeros(graph.n_atoms, dtype=bool)
    for p in sel:
        m = graph.atom_mask(p.bits)
        if (covered & m).any():
            raise SolverError("selected rules overlap; cannot build a partition tree")
        covered |= m
    sel.sort(key=lambda p: p.key)
    return MultiwayTree(_group(sel, 0, graph), sel, solution.default_action, graph)

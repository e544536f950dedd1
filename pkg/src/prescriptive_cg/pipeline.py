"""End-to-end building blocks: synthetic instances, teachers, solving and evaluation."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import baselines as bl
from . import graph as gr
from . import synthetic as sy
from .constraints import IntraRulePolicy
from .solver import (
    CGParams,
    brute_force_best,
    exact_pool,
    extract_tree,
    run_cg,
    solve_master_mip,
)

EVAL_SEED_OFFSET = 10**6


@dataclass
class SolveSettings:
    n: int = 8
    K: int = 100
    beam_width: int | None = None
    eps_dual: float = 1e-7
    eps_rc: float | None = None
    t_max: int = 50
    time_cap: float = 3600.0
    c: float | None = None
    node_limit: int = 20000
    mip_time_limit: float = 600.0
    enumerate_exact: bool = False
    enumerate_cap: int = 100_000

    def cg_params(self):
        return CGParams(K=self.K, beam_width=self.beam_width, eps_dual=self.eps_dual,
                        eps_rc=self.eps_rc, t_max=self.t_max, time_cap=self.time_cap, c=self.c)


@dataclass
class SolveOutcome:
    graph: object
    state: object
    solution: object
    tree: object
    seconds: float
    brute_force: float | None = None


def solve_policy(graph, settings, intra=None, side_rows=(), conflicts=(), log=None):
    """Column generation (or full enumeration) followed by the Master MIP."""
    t0 = time.perf_counter()
    if settings.enumerate_exact:
        state = exact_pool(graph, settings.n, intra, side_rows, conflicts, settings.c,
                           settings.enumerate_cap)
    else:
        state = run_cg(graph, settings.n, intra=intra, side_rows=side_rows,
                       conflicts=conflicts, params=settings.cg_params(), log=log)
    sol = solve_master_mip(state, settings.n, settings.node_limit, settings.mip_time_limit)
    tree = extract_tree(sol, graph)
    seconds = time.perf_counter() - t0
    brute = None
    if settings.enumerate_exact and not side_rows:
        preds = state.conflicts
        pred = (lambda a, b: any(p(a, b) for p in preds)) if preds else None
        brute, _ = brute_force_best(state.pool, graph, settings.n, state.c, pred)
    return SolveOutcome(graph, state, sol, tree, seconds, brute)


# ---------------------------------------------------------------- synthetic


@dataclass
class SyntheticInstance:
    model: object
    grid: np.ndarray
    actions: object
    train: object
    test: object
    schema: object
    dtrain: object
    dtest: object
    G: np.ndarray
    features: list
    teacher_bins: list | None = None


def build_teacher(kind, train, grid, model=None, bins="cv", seed=0):
    """Counterfactual matrix on ``train`` plus the per-feature teacher bins used."""
    if kind == "oracle":
        if model is None:
            raise ValueError("oracle teacher needs the generative model")
        return sy.oracle_counterfactuals(model, train.X, grid), None
    if kind != "empirical":
        raise ValueError(f"unknown teacher {kind!r}")
    if isinstance(bins, str):
        if bins != "cv":
            raise ValueError(f"teacher bins must be 'cv', an int or a list, got {bins!r}")
        tb = sy.select_teacher_bins(train.X, train.P, train.Y, grid, seed=seed)
    elif np.isscalar(bins):
        tb = [int(bins)] * train.X.shape[1]
    else:
        tb = [int(b) for b in bins]
    tschema = sy.binned_schema(train.X, tb)
    levels = sy.to_dataset(tschema, train).levels
    G = sy.EmpiricalTeacher().fit(levels, train.P, train.Y, grid).predict(levels)
    return G, tb


def synthetic_instance(model_id, seed, M=5000, teacher="empirical", teacher_bins="cv",
                       kappa=8, max_features=5, features=None, eval_M=None):
    """Training and evaluation draws, teacher matrix and graph feature order."""
    model = sy.make_model(model_id, seed)
    train = sy.generate(model_id, M, seed, model)
    test = sy.generate(model_id, eval_M or M, seed + EVAL_SEED_OFFSET, model)
    grid = sy.price_grid(train.P)
    G, tb = build_teacher(teacher, train, grid, model, teacher_bins, seed)
    schema = sy.binned_schema(train.X, kappa)
    dtrain = sy.to_dataset(schema, train, grid)
    dtest = sy.to_dataset(schema, test, grid)
    if features is None:
        # features the teacher actually resolves; all of them for the oracle
        cand = schema.names if tb is None else [f"x{j}" for j, b in enumerate(tb) if b > 1]
        cand = list(cand) or [schema.names[0]]
        features = gr.spread_order(schema, dtrain, G, cand)[:max_features]
    return SyntheticInstance(model, grid, sy.grid_actions(grid), train, test, schema, dtrain,
                             dtest, G, list(features), tb)


def instance_graph(inst):
    return gr.build(inst.schema, inst.actions, inst.dtrain, features=inst.features,
                    counterfactuals=inst.G)


@dataclass
class ExperimentResult:
    report: sy.EvalReport
    outcome: SolveOutcome
    spt: object = None
    extras: dict = field(default_factory=dict)


def synthetic_experiment(model_id, seed, M=5000, n=8, spt_depth=3, teacher="empirical",
                         teacher_bins="cv", min_samples=10, settings=None,
                         baselines=("optimal", "argmax", "spt"), instance=None, log=None):
    """One seed of the synthetic protocol: fit, solve, evaluate on a fresh draw."""
    inst = instance or synthetic_instance(model_id, seed, M, teacher, teacher_bins)
    settings = settings or SolveSettings(n=n)
    g = instance_graph(inst)
    out = solve_policy(g, settings, IntraRulePolicy(min_samples), log=log)
    policies = {"spmt": bl.RulePolicy(out.tree)}
    spt = None
    if "optimal" in baselines:
        policies["optimal"] = bl.optimal_policy(inst.model, inst.grid)
    if "argmax" in baselines:
        policies["argmax"] = None  # per-sample, needs the teacher on the evaluation draw
    if "spt" in baselines:
        spt = bl.greedy_spt(inst.dtrain, inst.G, spt_depth, min_leaf=min_samples,
                            features=inst.features)
        policies["spt"] = spt
    realized, predicted = {}, {}
    for name, pol in policies.items():
        if name == "argmax":
            realized[name] = _argmax_realized(inst, teacher, teacher_bins)
            predicted[name] = float(inst.G.max(axis=1).mean())
            continue
        realized[name] = sy.realized_revenue(pol, inst.dtest, inst.model, inst.grid)
        predicted[name] = bl.predicted_objective(pol, inst.dtrain, inst.G) / len(inst.dtrain)
    report = sy.EvalReport(seed, model_id, M, realized, predicted,
                           [p.n_covered for p in out.solution.selected])
    return ExperimentResult(report, out, spt, {"instance": inst})


def _argmax_realized(inst, teacher, teacher_bins):
    """Per-sample teacher argmax applied to the evaluation draw."""
    if teacher == "oracle":
        G_eval = sy.oracle_counterfactuals(inst.model, inst.test.X, inst.grid)
    else:
        tschema = sy.binned_schema(inst.train.X, inst.teacher_bins)
        t = sy.EmpiricalTeacher().fit(sy.to_dataset(tschema, inst.train).levels,
                                      inst.train.P, inst.train.Y, inst.grid)
        G_eval = t.predict(sy.to_dataset(tschema, inst.test).levels)
    a = bl.argmax_actions(G_eval)
    return float(sy.expected_revenue(inst.model, inst.test.X, inst.grid[a]).mean())

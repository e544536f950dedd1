"""Command-line driver: config file plus flag overrides in, policy and reports out.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver error.
Every failure prints one ``error: ...`` line on stderr.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import baselines as bl
from . import graph as gr
from . import synthetic as sy
from .constraints import (
    ConstraintError,
    IntraRulePolicy,
    band_rows,
    capacity_row,
    group_mask,
    loyalty_price_order,
)
from .data_model import (
    CounterfactualMatrix,
    DataError,
    actions_from_config,
    load_counterfactuals,
    load_dataset,
    save_counterfactuals,
    save_dataset,
    schema_from_config,
)
from .lp import LpError
from .pipeline import (
    SolveSettings,
    instance_graph,
    solve_policy,
    synthetic_instance,
)
from .solver import SolverError

EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 2, 3, 4


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "mode": "synthetic",
    "seed": 0,
    "out": "out",
    "synthetic": {"model_id": 1, "M": 5000, "eval_M": None, "kappa": 8},
    "file": {
        "samples": None,
        "counterfactuals": None,
        "eval_samples": None,
        "schema": None,
        "actions": None,
        "action_column": "action",
        "outcome_column": "outcome",
    },
    "teacher": {"kind": "empirical", "bins": "cv"},
    "graph": {"features": None, "max_features": 5},
    "solver": {
        "n": 8,
        "K": 100,
        "beam_width": None,
        "eps_dual": 1e-7,
        "eps_rc": None,
        "t_max": 50,
        "time_cap": 3600.0,
        "c": None,
        "node_limit": 20000,
        "mip_time_limit": 600.0,
        "enumerate_exact": False,
    },
    "constraints": {
        "intra": {"min_samples": 10, "min_length": 0, "max_length": None,
                  "forbidden": [], "allowlist": None},
        "rows": [],
        "conflicts": [],
    },
    "baselines": ["optimal", "argmax", "spt"],
    "spt_depth": 3,
    "sweeps": {"n": [], "M": []},
    "emit_data": False,
}


@dataclass
class RunConfig:
    mode: str
    seed: int
    out: str
    synthetic: dict
    file: dict
    teacher: dict
    graph: dict
    solver: dict
    constraints: dict
    baselines: list
    spt_depth: int
    sweeps: dict
    emit_data: bool
    raw: dict = field(default_factory=dict, repr=False)

    def settings(self, **over):
        s = dict(self.solver)
        s.update(over)
        return SolveSettings(**s)

    def intra(self):
        c = self.constraints["intra"]
        return IntraRulePolicy(
            min_samples=int(c["min_samples"]),
            min_length=int(c["min_length"]),
            max_length=c["max_length"],
            forbidden=tuple(c["forbidden"] or ()),
            allowlist=c["allowlist"],
        )


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {path + k!r} must be a mapping")
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def load_config(path=None, overrides=None):
    """Merge a YAML config file and flag overrides over :data:`DEFAULTS`."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        except yaml.YAMLError as e:
            raise ConfigError(f"config {path} is not valid YAML: {str(e).splitlines()[0]}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping")
    merged = _merge(DEFAULTS, data)
    for k, v in (overrides or {}).items():
        node = merged
        parts = k.split(".")
        for p in parts[:-1]:
            node = node[p]
        node[parts[-1]] = v
    return validate(merged)


def validate(d):
    if d["mode"] not in ("synthetic", "file"):
        raise ConfigError(f"mode must be 'synthetic' or 'file', got {d['mode']!r}")
    s = d["solver"]
    if not isinstance(s["n"], int) or s["n"] < 1:
        raise ConfigError(f"solver.n must be an integer >= 1, got {s['n']!r}")
    if int(s["K"]) < 1:
        raise ConfigError("solver.K must be >= 1")
    kind = d["teacher"]["kind"]
    if kind not in ("oracle", "empirical", "file"):
        raise ConfigError(f"teacher.kind must be oracle, empirical or file, got {kind!r}")
    if d["mode"] == "synthetic":
        if d["synthetic"]["model_id"] not in sy.MODEL_IDS:
            raise ConfigError(f"synthetic.model_id must be one of {sy.MODEL_IDS}")
        if int(d["synthetic"]["M"]) < 10:
            raise ConfigError("synthetic.M must be at least 10")
        if kind == "file":
            raise ConfigError("teacher.kind 'file' needs mode 'file'")
    else:
        f = d["file"]
        for key in ("samples", "schema", "actions"):
            if not f[key]:
                raise ConfigError(f"file mode needs file.{key}")
        if kind == "oracle":
            raise ConfigError("the oracle teacher exists only in synthetic mode")
        if kind == "file" and not f["counterfactuals"]:
            raise ConfigError("teacher.kind 'file' needs file.counterfactuals")
    bad = set(d["baselines"]) - {"optimal", "argmax", "spt"}
    if bad:
        raise ConfigError(f"unknown baselines {sorted(bad)}")
    if d["mode"] == "file" and "optimal" in d["baselines"]:
        d["baselines"] = [b for b in d["baselines"] if b != "optimal"]
    for key in ("n", "M"):
        vals = d["sweeps"].get(key, []) or []
        if any(int(v) < 1 for v in vals):
            raise ConfigError(f"sweeps.{key} values must be positive")
    return RunConfig(raw=copy.deepcopy(d), **{k: d[k] for k in DEFAULTS})


# ---------------------------------------------------------------- policy output


def _condition(graph, feat, node):
    spec = graph.schema[feat]
    a, b = node.span
    cond = {"feature": feat, "kind": spec.kind, "span": [int(a), int(b)], "label": node.label}
    if spec.kind == "categorical":
        cond["values"] = list(spec.levels[a:b])
    else:
        lo, hi = spec.boundaries[a], spec.boundaries[b]
        cond["interval"] = [None if not np.isfinite(lo) else float(lo),
                            None if not np.isfinite(hi) else float(hi)]
    return cond


def render_policy(solution, graph, tree=None):
    """Text rendering (tree view plus rule list) and a JSON-ready rule list."""
    from .solver import extract_tree

    tree = tree or extract_tree(solution, graph)
    labels = graph.actions.labels
    rules = []
    lines = ["# multiway-split tree", tree.render(), "", "# rules"]
    for p in tree.rules:
        lines.append(f"{p.text}  [n={p.n_covered}, reward={p.reward:.6g}]")
        rules.append({
            "conditions": [_condition(graph, f, nd) for f, nd in graph.rule_conditions(p.choices)],
            "action": labels[p.action],
            "action_index": int(p.action),
            "n_covered": int(p.n_covered),
            "reward": float(p.reward),
            "text": p.text,
        })
    lines.append(f"DEFAULT THEN action={labels[tree.default_action]}")
    doc = {
        "features": graph.features,
        "actions": list(labels),
        "action_values": [float(v) for v in graph.actions.values],
        "default_action": labels[tree.default_action],
        "rules": rules,
    }
    return "\n".join(lines) + "\n", doc


@dataclass
class StoredPolicy(bl.Policy):
    """Policy reloaded from a ``policy.rules`` file; first matching rule wins."""

    doc: dict
    name: str = "stored"

    def actions(self, dataset):
        labels = self.doc["actions"]
        out = np.full(len(dataset), -1, dtype=np.int64)
        for rule in self.doc["rules"]:
            hit = out < 0
            for c in rule["conditions"]:
                col = dataset.column(c["feature"])
                a, b = c["span"]
                hit &= (col >= a) & (col < b)
            out[hit] = labels.index(rule["action"])
        out[out < 0] = labels.index(self.doc["default_action"])
        return out


def load_policy(path):
    with open(path) as fh:
        return StoredPolicy(json.load(fh))


# ---------------------------------------------------------------- run


def _write_csv(path, rows, header):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _cg_rows(state):
    for r in state.log:
        yield dict(iteration=r.iteration, objective=repr(r.objective), best_rc=repr(r.best_rc),
                   columns_added=r.columns_added, pool_size=r.pool_size,
                   lp_seconds=f"{r.lp_seconds:.4f}", pricing_seconds=f"{r.pricing_seconds:.4f}",
                   lp_pivots=r.lp_pivots, dual_change=repr(r.dual_change),
                   exact_pricing=int(r.exact_pricing))


CG_HEADER = ["iteration", "objective", "best_rc", "columns_added", "pool_size", "lp_seconds",
             "pricing_seconds", "lp_pivots", "dual_change", "exact_pricing"]
REPORT_HEADER = ["method", "realized", "predicted", "n_rules", "seconds"]


def _side_rows(cfg, dataset, G, actions):
    rows = []
    prices = np.asarray(actions.values, dtype=float)
    for k, spec in enumerate(cfg.constraints["rows"] or []):
        kind = spec.get("type", "band")
        mask = group_mask(dataset, spec.get("group", {}))
        weight = spec.get("weight", "demand")
        if weight == "demand":
            with np.errstate(divide="ignore", invalid="ignore"):
                W = np.where(prices[None, :] != 0, G / prices[None, :], 0.0)
        elif weight == "revenue":
            W = np.asarray(G, dtype=float)
        elif weight == "count":
            W = np.ones_like(G, dtype=float)
        else:
            raise ConfigError(f"constraints.rows[{k}]: unknown weight {weight!r}")
        label = spec.get("label", f"{kind}{k}")
        if kind == "band":
            ref = spec.get("reference", "historical")
            if ref == "historical":
                acts = dataset.actions
                idx = np.flatnonzero(mask & (acts >= 0))
                if idx.size == 0:
                    raise DataError(f"{label}: no historical actions in the group")
                p_hist = float(W[idx, acts[idx]].mean())
            else:
                p_hist = float(ref)
            rows.extend(band_rows(mask, W, p_hist, float(spec.get("theta", 0.25)), label))
        elif kind == "capacity":
            rows.append(capacity_row(mask, W, float(spec["bound"]), spec.get("sense", "<"), label))
        else:
            raise ConfigError(f"constraints.rows[{k}]: unknown type {kind!r}")
    return rows


def _conflicts(cfg, dataset, graph):
    out = []
    for k, spec in enumerate(cfg.constraints["conflicts"] or []):
        if spec.get("type", "loyalty_price_order") != "loyalty_price_order":
            raise ConfigError(f"constraints.conflicts[{k}]: unknown type {spec.get('type')!r}")
        try:
            out.append(loyalty_price_order(dataset, graph, spec["store_feature"],
                                           spec["loyalty_feature"], spec["loyalty_level"]))
        except KeyError as e:
            raise ConfigError(f"constraints.conflicts[{k}]: missing {e.args[0]!r}") from None
    return out


class _Run:
    def __init__(self, cfg, log):
        self.cfg = cfg
        self.log = log

    def prepare(self, seed, M=None):
        cfg = self.cfg
        if cfg.mode == "synthetic":
            syn = cfg.synthetic
            inst = synthetic_instance(
                int(syn["model_id"]), seed, int(M or syn["M"]), cfg.teacher["kind"],
                cfg.teacher["bins"], int(syn["kappa"]), int(cfg.graph["max_features"]),
                cfg.graph["features"], syn["eval_M"],
            )
            return inst
        return self._file_instance()

    def _file_instance(self):
        cfg = self.cfg
        f = cfg.file
        schema = schema_from_config(f["schema"])
        actions = actions_from_config(f["actions"])
        dtrain, M = load_dataset(f["samples"], schema, actions, f["action_column"],
                                 f["outcome_column"])
        if cfg.teacher["kind"] == "file":
            try:
                G = np.asarray(load_counterfactuals(f["counterfactuals"], actions))
                CounterfactualMatrix(G).check(M, len(actions))
            except DataError as e:
                raise ConfigError(f"counterfactual file does not fit the samples: {e}") from None
        else:
            ok = np.isfinite(dtrain.outcomes)
            if not ok.any():
                raise DataError("empirical teacher needs an outcome column")
            t = sy.EmpiricalTeacher().fit(dtrain.levels, dtrain.prices, dtrain.outcomes,
                                          actions.array)
            G = t.predict(dtrain.levels)
        dtest = None
        if f["eval_samples"]:
            dtest, _ = load_dataset(f["eval_samples"], schema, actions, f["action_column"],
                                    f["outcome_column"])
        feats = cfg.graph["features"]
        if feats is None:
            feats = gr.spread_order(schema, dtrain, G)[: int(cfg.graph["max_features"])]
        return _FileInstance(schema, actions, dtrain, dtest, G, list(feats))

    def solve(self, inst, n=None):
        cfg = self.cfg
        graph = instance_graph(inst)
        rows = _side_rows(cfg, inst.dtrain, inst.G, inst.actions)
        conflicts = _conflicts(cfg, inst.dtrain, graph)
        settings = cfg.settings(**({} if n is None else {"n": int(n)}))
        return solve_policy(graph, settings, cfg.intra(), rows, conflicts, log=self.log)

    def evaluate(self, inst, outcome, seed):
        cfg = self.cfg
        synthetic = cfg.mode == "synthetic"
        M = len(inst.dtrain)
        rows = []

        def add(name, policy, n_rules, seconds=float("nan"), realized=None):
            pred = bl.predicted_objective(policy, inst.dtrain, inst.G) / M if policy else float("nan")
            if realized is None and synthetic and policy is not None:
                realized = sy.realized_revenue(policy, inst.dtest, inst.model, inst.grid)
            rows.append(dict(method=name, realized=repr(float("nan") if realized is None else realized),
                             predicted=repr(pred), n_rules=n_rules, seconds=f"{seconds:.3f}"))

        add("spmt", bl.RulePolicy(outcome.tree), len(outcome.solution.selected), outcome.seconds)
        if "optimal" in cfg.baselines and synthetic:
            add("optimal", bl.optimal_policy(inst.model, inst.grid), "")
        if "argmax" in cfg.baselines:
            rows.append(dict(method="argmax", realized=repr(self._argmax(inst)),
                             predicted=repr(float(inst.G.max(axis=1).mean())), n_rules="",
                             seconds="nan"))
        if "spt" in cfg.baselines:
            t = time.perf_counter()
            spt = bl.greedy_spt(inst.dtrain, inst.G, int(cfg.spt_depth),
                                min_leaf=int(cfg.constraints["intra"]["min_samples"]),
                                features=inst.features)
            add("spt", spt, spt.n_leaves(), time.perf_counter() - t)
        if outcome.brute_force is not None:
            rows.append(dict(method="brute_force", realized="nan",
                             predicted=repr(outcome.brute_force / M), n_rules="", seconds="nan"))
            rows.append(dict(method="spmt_objective", realized="nan",
                             predicted=repr(outcome.solution.objective / M), n_rules="",
                             seconds="nan"))
        return rows

    def _argmax(self, inst):
        if self.cfg.mode != "synthetic":
            return float("nan")
        from .pipeline import _argmax_realized

        return _argmax_realized(inst, self.cfg.teacher["kind"], self.cfg.teacher["bins"])


@dataclass
class _FileInstance:
    schema: object
    actions: object
    dtrain: object
    dtest: object
    G: np.ndarray
    features: list


def run(cfg, stream=None):
    """Execute one configured run; returns the process exit code."""
    stream = stream or sys.stdout
    os.makedirs(cfg.out, exist_ok=True)
    logf = open(os.path.join(cfg.out, "run.log"), "w")

    def log(msg):
        print(msg, file=stream)
        print(msg, file=logf)

    try:
        log("configuration (defaults filled in):")
        for line in yaml.safe_dump(cfg.raw, sort_keys=True).splitlines():
            log("  " + line)
        r = _Run(cfg, log)
        inst = r.prepare(cfg.seed)
        log(f"graph features: {inst.features}")
        if cfg.mode == "synthetic" and inst.teacher_bins is not None:
            log(f"teacher bins per feature: {inst.teacher_bins}")
        if cfg.emit_data:
            _emit_data(cfg, inst)
        out = r.solve(inst)
        sol = out.solution
        log(f"cg: stop={out.state.stop_reason} iterations={len(out.state.log)} "
            f"pool={len(out.state.pool)}")
        log(f"mip: status={sol.status} objective={sol.objective:.6f} lp_bound={sol.lp_bound:.6f} "
            f"gap={sol.gap:.3g} rules={len(sol.selected)}")
        text, doc = render_policy(sol, out.graph, out.tree)
        with open(os.path.join(cfg.out, "policy.txt"), "w") as fh:
            fh.write(text)
        with open(os.path.join(cfg.out, "policy.rules"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_csv(os.path.join(cfg.out, "cg_log.csv"), _cg_rows(out.state), CG_HEADER)
        report = r.evaluate(inst, out, cfg.seed)
        _write_csv(os.path.join(cfg.out, "report.csv"), report, REPORT_HEADER)
        for row in report:
            log(f"report: {row['method']} realized={row['realized']} predicted={row['predicted']}")
        _sweeps(cfg, r, inst, log)
        log(f"outputs written to {cfg.out}")
        return 0
    finally:
        logf.close()


def _emit_data(cfg, inst):
    save_dataset(inst.dtrain, os.path.join(cfg.out, "train_samples.csv"), inst.actions)
    save_counterfactuals(inst.G, os.path.join(cfg.out, "train_counterfactuals.csv"), inst.actions)
    if inst.dtest is not None:
        save_dataset(inst.dtest, os.path.join(cfg.out, "eval_samples.csv"), inst.actions)


def _sweeps(cfg, r, inst, log):
    synthetic = cfg.mode == "synthetic"
    n_vals = cfg.sweeps.get("n") or []
    if n_vals:
        rows = []
        for n in n_vals:
            out = r.solve(inst, n)
            pol = bl.RulePolicy(out.tree)
            realized = (sy.realized_revenue(pol, inst.dtest, inst.model, inst.grid)
                        if synthetic else float("nan"))
            rows.append(dict(n=n, realized=repr(realized),
                             predicted=repr(out.solution.objective / len(inst.dtrain)),
                             rules=len(out.solution.selected), iterations=len(out.state.log),
                             seconds=f"{out.seconds:.3f}"))
            log(f"sweep n={n}: realized={realized:.6g}")
        _write_csv(os.path.join(cfg.out, "sweep_n.csv"), rows,
                   ["n", "realized", "predicted", "rules", "iterations", "seconds"])
    M_vals = cfg.sweeps.get("M") or []
    if M_vals:
        if not synthetic:
            raise ConfigError("sweeps.M needs synthetic mode")
        rows = []
        for M in M_vals:
            t = time.perf_counter()
            inst_m = r.prepare(cfg.seed, int(M))
            out = r.solve(inst_m)
            pol = bl.RulePolicy(out.tree)
            realized = sy.realized_revenue(pol, inst_m.dtest, inst_m.model, inst_m.grid)
            rows.append(dict(M=M, realized=repr(realized), iterations=len(out.state.log),
                             pool=len(out.state.pool), solve_seconds=f"{out.seconds:.3f}",
                             total_seconds=f"{time.perf_counter() - t:.3f}"))
            log(f"sweep M={M}: realized={realized:.6g} seconds={out.seconds:.2f}")
        _write_csv(os.path.join(cfg.out, "sweep_M.csv"), rows,
                   ["M", "realized", "iterations", "pool", "solve_seconds", "total_seconds"])


def build_parser():
    p = argparse.ArgumentParser(prog="prescriptive-cg",
                                description="Learn a multiway-split prescriptive tree by column generation.")
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--n", type=int, help="maximum number of rules")
    p.add_argument("--mode", choices=("synthetic", "file"))
    p.add_argument("--enumerate-exact", action="store_true",
                   help="price by full path enumeration and report the brute-force optimum")
    p.add_argument("--out", help="output directory")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.n is not None:
        over["solver.n"] = args.n
    if args.mode is not None:
        over["mode"] = args.mode
    if args.enumerate_exact:
        over["solver.enumerate_exact"] = True
    if args.out is not None:
        over["out"] = args.out
    try:
        cfg = load_config(args.config, over)
        return run(cfg)
    except (ConfigError, ConstraintError) as e:
        print(f"error: config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"error: data: {e}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, LpError) as e:
        print(f"error: solver: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

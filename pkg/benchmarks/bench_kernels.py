"""Time the compiled bitset kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--atoms 4096] [--parents 512] [--repeat 5]

Inputs mimic one pricing expansion: a beam of parent labels intersected with
every node of the next feature level, over a few thousand atoms.
"""
import argparse
import time

import numpy as np

from prescriptive_cg import kernels


def make_inputs(n_atoms, n_parents, n_nodes, n_actions, seed=0):
    rng = np.random.default_rng(seed)
    parents = kernels.from_bool(rng.random((n_parents, n_atoms)) < 0.3)
    nodes = kernels.from_bool(rng.random((n_nodes, n_atoms)) < 0.4)
    weights = rng.integers(1, 20, n_atoms).astype(float)
    best = np.maximum(0.0, rng.normal(size=n_atoms))
    values = rng.normal(size=(n_atoms, n_actions))
    return parents, nodes, weights, best, values


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--atoms", type=int, default=4096)
    ap.add_argument("--parents", type=int, default=512)
    ap.add_argument("--nodes", type=int, default=36)
    ap.add_argument("--actions", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    parents, nodes, weights, best, values = make_inputs(
        args.atoms, args.parents, args.nodes, args.actions)
    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled kernels not built; timing the numpy fallback only")

    cases = {
        "extend_scores": lambda m: m.extend_scores(parents, nodes, weights, best),
        "action_sums": lambda m: m.action_sums(parents, values),
        "popcount": lambda m: m.popcount(parents),
    }
    print(f"atoms={args.atoms} parents={args.parents} nodes={args.nodes} "
          f"actions={args.actions}")
    print(f"{'kernel':<14} " + " ".join(f"{k:>12}" for k in impls) + "      speedup")
    for name, call in cases.items():
        ref = None
        row = {}
        for key, mod in impls.items():
            out = call(mod)
            out = out if isinstance(out, tuple) else (out,)
            if ref is None:
                ref = out
            else:
                # both backends must agree before their timings mean anything
                for a, b in zip(ref, out):
                    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)
            row[key] = best_of(lambda: call(mod), args.repeat)
        speed = row["numpy"] / row["cython"] if "cython" in row else float("nan")
        print(f"{name:<14} " + " ".join(f"{row[k] * 1e3:>10.2f}ms" for k in impls)
              + f"   {speed:8.1f}x")


if __name__ == "__main__":
    main()

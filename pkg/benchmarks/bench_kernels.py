"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from quantum_ucrl import _kernels_py as py_backend
from quantum_ucrl.envs import random_tabular_mdp

try:
    from quantum_ucrl import _kernels as cy_backend
except ImportError:  # extension not built
    cy_backend = None


def cases(rng):
    small = random_tabular_mdp(3, 2, 3, rng)
    large = random_tabular_mdp(30, 5, 10, rng)
    for name, mdp in (("S3A2H3", small), ("S30A5H10", large)):
        pi = np.full((mdp.H, mdp.S, mdp.A), 1.0 / mdp.A)
        bonus = rng.random((mdp.H, mdp.S, mdp.A))
        yield f"backward_induction/{name}", lambda k, m=mdp, b=bonus: k.backward_induction(m.P, m.R, b, float(m.H))
        yield f"evaluate_policy/{name}", lambda k, m=mdp, p=pi: k.evaluate_policy(m.P, m.R, p)
        u1 = rng.random((1, 2 * mdp.H))
        yield f"rollout/{name}/n=1", lambda k, m=mdp, p=pi, u=u1: k.rollout(m.P, p, m.s1, u)
        u = rng.random((10_000, 2 * mdp.H))
        yield f"rollout/{name}/n=10000", lambda k, m=mdp, p=pi, u=u: k.rollout(m.P, p, m.s1, u)


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    backends = [("python", py_backend)] + ([("cython", cy_backend)] if cy_backend else [])
    print(f"{'case':34}" + "".join(f"{name:>14}" for name, _ in backends) + ("   speedup" if cy_backend else ""))
    for label, fn in cases(rng):
        times = []
        for _, mod in backends:
            timer = timeit.Timer(lambda: fn(mod))
            n, _ = timer.autorange()
            times.append(min(timer.repeat(args.repeat, n)) / n)
        row = f"{label:34}" + "".join(f"{t * 1e6:>12.1f}us" for t in times)
        if cy_backend:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()

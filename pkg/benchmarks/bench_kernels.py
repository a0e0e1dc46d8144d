"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 2000]

Also times whole simulations of NSO on the 3-server line, once per backend
(the backend is fixed at import time, so each runs in a subprocess).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from banditnet._kernels import _fallback

try:
    from banditnet._kernels import _core
except ImportError:
    _core = None

SIM_SNIPPET = """
import time, numpy as np
from banditnet import BACKEND
from banditnet.network import Topology
from banditnet.adversary import generate_trace
from banditnet.schedulers import NSO
from banditnet.simulation import SealedEnvironment, simulate
T = {rounds}
topo = Topology.line(3)
tr, _ = generate_trace(topo, T, {{"arrivals": [[0, 2, 0.2], [2, 0, 0.2]]}}, "stability", np.random.default_rng(0))
t0 = time.perf_counter()
simulate(SealedEnvironment(tr), NSO(topo, T), "bernoulli", np.random.default_rng(1), keep_plans=False)
print(BACKEND, (time.perf_counter() - t0) / T * 1e6)
"""


def kernel_cases(rng):
    n, links, experts = 3, 4, 12
    q = rng.uniform(0, 5, (n, n))
    np.fill_diagonal(q, 0.0)
    mu = rng.uniform(0, 1, (links, n))
    lam = rng.uniform(0, 0.3, (n, n))
    src = np.array([0, 1, 1, 2], dtype=np.int64)
    dst = np.array([1, 0, 2, 1], dtype=np.int64)
    y = rng.normal(size=(links, n))
    points = rng.dirichlet(np.ones(n), size=(links, experts))
    weights = rng.dirichlet(np.ones(experts), size=links)
    sq = np.zeros(links)
    g = rng.uniform(-1, 1, (links, n))
    etas = np.geomspace(1e-3, 1.0, experts)
    return {
        "project_simplex_rows": lambda k: k.project_simplex_rows(y),
        "queue_step": lambda k: k.queue_step(q, mu, lam, src, dst),
        "grid_act": lambda k: k.grid_act(points, weights),
        "grid_feed": lambda k: k.grid_feed(points.copy(), weights.copy(), sq.copy(), g, etas, 1e-4),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--rounds", type=int, default=20000)
    args = ap.parse_args()
    cases = kernel_cases(np.random.default_rng(0))
    print(f"{'kernel':<22}{'python us':>12}{'cython us':>12}{'speedup':>10}")
    for name, fn in cases.items():
        py = timeit.timeit(lambda: fn(_fallback), number=args.repeat) / args.repeat * 1e6
        if _core is None:
            print(f"{name:<22}{py:>12.2f}{'n/a':>12}{'':>10}")
            continue
        cy = timeit.timeit(lambda: fn(_core), number=args.repeat) / args.repeat * 1e6
        print(f"{name:<22}{py:>12.2f}{cy:>12.2f}{py / cy:>9.1f}x")

    print(f"\nNSO simulation, line of 3 servers, T={args.rounds} (us per round)")
    for pure in ("1", ""):
        env = dict(os.environ, BANDITNET_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", SIM_SNIPPET.format(rounds=args.rounds)],
                             env=env, capture_output=True, text=True, check=True)
        backend, per_round = out.stdout.split()
        print(f"  {backend:<8}{float(per_round):8.1f}")


if __name__ == "__main__":
    main()

"""Compare the numba kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each backend runs in its own interpreter (the backend is fixed at import
time by PRIORREG_DISABLE_NUMBA).  Timings are the median of N repeats after
one warm-up call, so numba compilation is excluded.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import subprocess
import sys
import time


def _median_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def measure(repeat: int) -> dict:
    import numpy as np

    from priorreg import _kernels
    from priorreg.autodiff import init_mlp, loss_grad
    from priorreg.hyperopt import GPHyper, gp_fit
    from priorreg.oracles import GridSpec, NoiseSpec, OracleSpec, make_dataset
    from priorreg.priors import PriorSpec
    from priorreg.training import build_terms

    ds = make_dataset(OracleSpec("reaction_diffusion", {"rho": 10.0, "nu": 3.0}), GridSpec(), 50, NoiseSpec(0.1), 100, seed=0)
    params = init_mlp([2, 64, 64, 64, 64, 1], seed=0)
    terms = build_terms(ds, [PriorSpec("reaction_diffusion", {"rho": 5.0, "nu": 3.0})], [0.1])
    rng = np.random.default_rng(0)
    n = params.n_params
    w, m, v, g = rng.normal(size=n), np.zeros(n), np.zeros(n), rng.normal(size=n)
    x, y = rng.random((20, 3)), rng.normal(size=20)
    z = rng.normal(size=(100 * 4, 64))

    return {
        "backend": _kernels.backend(),
        "loss_grad (4x64 net, rd prior)": _median_time(lambda: loss_grad(params, terms), repeat),
        "tanh jet forward (100 pts, 2 dirs)": _median_time(lambda: _kernels.tanh_jet_forward(z, 100, 2, 1), repeat),
        "adam update": _median_time(lambda: _kernels.adam_update(w, m, v, g, 1e-4, 0.9, 0.999, 1e-8, 1), repeat),
        "gp fit (20 points, 3 dims)": _median_time(lambda: gp_fit(x, y, GPHyper(np.full(3, 0.3))), repeat),
    }


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(measure(args.repeat)))
        return 0

    results = []
    for disable in ("0", "1"):
        env = {**os.environ, "PRIORREG_DISABLE_NUMBA": disable}
        out = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(args.repeat)], env=env, capture_output=True, text=True, check=True)
        results.append(json.loads(out.stdout))
    fast, slow = results
    if fast["backend"] != "numba":
        print("numba is not importable; only the numpy path was measured")
    names = [k for k in fast if k != "backend"]
    width = max(len(k) for k in names)
    print(f"{'kernel':<{width}}  {fast['backend']:>10}  {slow['backend']:>10}  speedup")
    for k in names:
        print(f"{k:<{width}}  {1e3 * fast[k]:8.3f}ms  {1e3 * slow[k]:8.3f}ms  {slow[k] / fast[k]:6.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())

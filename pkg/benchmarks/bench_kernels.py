"""Time the compiled and numpy particle kernels on the same workload.

    python3 benchmarks/bench_kernels.py --particles 2000 20000 --steps 50

Reports mean wall time per filter step (propose + likelihood) for each
backend, and checks that both produce the same particles.
"""

import argparse
import time

import numpy as np

from changedyn import filter as pf
from changedyn import kernels, presets


def workload(p: int):
    if p == 0:
        model = presets.synthetic_model()
        xs = 1.0 + 0.05 * np.random.default_rng(0).standard_normal(4096)
        return model, (), xs
    model = presets.seizure_model([0.62, -0.18], -1.0)
    xs = np.exp(-1.0) * np.random.default_rng(0).standard_normal(4096)
    return model, xs[:2], xs[2:]


def run(model, x0, xs, n, steps, backend, workers):
    pset = pf.init(model, n, x0, seed=7, workers=workers, backend=backend)
    pset = pf.step(pset, xs[0])  # warm-up
    t0 = time.perf_counter()
    for x in xs[1:steps + 1]:
        pset = pf.step(pset, x)
    return (time.perf_counter() - t0) / steps, pset


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--particles", type=int, nargs="+", default=[2000, 5000, 20000])
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--model", choices=("synthetic", "seizure"), default="seizure")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; timing the numpy backend only")
    model, x0, xs = workload(0 if args.model == "synthetic" else 2)
    print(f"{'N':>8} " + " ".join(f"{b + ' ms/step':>18}" for b in backends) + f"{'speedup':>10}")
    for n in args.particles:
        times, sets = {}, {}
        for b in backends:
            times[b], sets[b] = run(model, x0, xs, n, args.steps, b, args.workers)
        if len(sets) == 2:
            a, c = sets["python"], sets["cython"]
            # same stream and same ancestry; likelihood agrees to rounding
            assert np.array_equal(a.runlength, c.runlength) and np.array_equal(a.state, c.state)
            assert np.allclose(a.theta, c.theta, rtol=0, atol=1e-9)
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{n:>8} " + " ".join(f"{1e3 * times[b]:>18.3f}" for b in backends)
              + f"{speed:>10.2f}")


if __name__ == "__main__":
    main()

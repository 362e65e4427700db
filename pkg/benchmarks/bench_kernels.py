"""Compare the compiled and the pure-numpy simplex kernels on model relaxations.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--sizes 4,8,12]

Both backends solve the same root relaxations; the script prints the median
wall time per LP, the speedup, and checks that the optimal values agree.
Set DECNET_DISABLE_NUMBA=1 to confirm the fallback runs without numba.
"""

from __future__ import annotations

import argparse
import statistics
import time

from decnet import kernels
from decnet.formulation import build_formulation
from decnet.instance import generate_instance
from decnet.lp import solve_lp
from decnet.relaxation import relax


def time_backend(problem, backend: str, repeat: int):
    times = []
    sol = None
    for _ in range(repeat):
        t = time.perf_counter()
        sol = solve_lp(problem, backend=backend)
        times.append(time.perf_counter() - t)
    return statistics.median(times), sol


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sizes", default="4,8,12", help="node counts of the generated trees")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    backends = ["numpy"]
    if kernels.BACKEND == "numba":
        backends.insert(0, "numba")
        # compile once outside the timed region
        warm = relax(build_formulation(generate_instance(3, "tree", seed=0))).to_lp()
        t = time.perf_counter()
        solve_lp(warm, backend="numba")
        print(f"numba warm-up (compile or cache load): {time.perf_counter() - t:.2f}s")
    else:
        print("numba disabled: timing the numpy kernel only")

    print(f"{'nodes':>5} {'rows':>6} {'cols':>6} " + " ".join(f"{b + ' [ms]':>12}" for b in backends)
          + (f" {'speedup':>8}" if len(backends) == 2 else ""))
    for n in (int(v) for v in args.sizes.split(",")):
        inst = generate_instance(n, "tree", seed=args.seed)
        problem = relax(build_formulation(inst)).to_lp()
        res = {b: time_backend(problem, b, args.repeat) for b in backends}
        m, k = problem.shape
        line = f"{n:>5} {m:>6} {k:>6} " + " ".join(f"{1e3 * res[b][0]:>12.1f}" for b in backends)
        if len(backends) == 2:
            line += f" {res['numpy'][0] / res['numba'][0]:>7.1f}x"
            a, b = res["numba"][1].objective, res["numpy"][1].objective
            if abs(a - b) > 1e-6 * max(1.0, abs(b)):
                line += f"  MISMATCH {a!r} vs {b!r}"
        print(line)


if __name__ == "__main__":
    main()

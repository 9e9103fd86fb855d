"""Time the compiled and pure-Python stepping kernels on the default arena.

    python benchmarks/bench_kernel.py [--steps 20000] [--repeat 3]

Both kernels start from the same seed; the script also checks that they end
in the same state, since the compiled kernel must be a drop-in replacement.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from evosnn import backend
from evosnn.arena import Arena
from evosnn.config import Config


def time_kernel(name: str, steps: int, seed: int) -> tuple[float, Arena]:
    arena = Arena(Config().replace(experiment={"seed": seed}), backend=name)
    t0 = time.perf_counter()
    done = 0
    while done < steps:
        before = arena.timestep
        arena.advance(steps - done)
        done += arena.timestep - before
    return time.perf_counter() - t0, arena


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--python-steps", type=int, default=2_000,
                    help="steps for the (much slower) Python kernel")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    results = {}
    for name in backend.available():
        steps = args.python_steps if name == "python" else args.steps
        best = min(time_kernel(name, steps, args.seed)[0] for _ in range(args.repeat))
        results[name] = best / steps
        print(f"{name:>9}: {1e6 * results[name]:9.2f} us/step  ({steps} steps, best of {args.repeat})")

    if "compiled" in results:
        print(f"  speedup: {results['python'] / results['compiled']:.1f}x")
        _, a = time_kernel("python", args.python_steps, args.seed)
        _, b = time_kernel("compiled", args.python_steps, args.seed)
        same = (np.array_equal(a.pop.pose, b.pop.pose) and np.array_equal(a.pop.V, b.pop.V)
                and np.array_equal(a.food, b.food))
        print(f"  identical state after {args.python_steps} steps: {same}")
    else:
        print("compiled kernel not built; only the Python kernel was timed")


if __name__ == "__main__":
    main()

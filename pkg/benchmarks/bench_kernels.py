"""Time per trajectory step for the numba and numpy backends.

Usage::

    python benchmarks/bench_kernels.py [--n-traj 256] [--steps 2000] [--repeat 3]

The first numba call includes compilation (or a cache load) and is excluded
by a warm-up run. Both backends integrate identical noise, so the final
concurrences are also compared.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from trajent import _kernels, channels, presets
from trajent.linalg2q import PHI_PLUS
from trajent.trajectory import prepare, trajectory_generator
from trajent.unraveling import (
    dephasing_opt_policy,
    fixed_policy,
    infT_opt_plus_policy,
    localized_policy,
    protection_policy,
)

CASES = [
    ("dephasing, fixed u=I", channels.dephasing(1.0), fixed_policy(np.eye(2)), presets.uneven_state()),
    ("dephasing, adaptive", channels.dephasing(1.0), dephasing_opt_policy(1), presets.uneven_state()),
    ("dephasing + hot bath, protection", presets.dephasing_and_hot_bath(1.0), protection_policy(),
     presets.uneven_state()),
    ("infinite T, adaptive (4 ops)", channels.infinite_temperature(1.0), infT_opt_plus_policy(), PHI_PLUS),
    ("amplitude damping, localized", channels.amplitude_damping(1.0), localized_policy(),
     presets.uneven_state()),
]


def time_backend(prep, psi0, n_traj, steps, backend, repeat):
    rec = np.array([steps])
    best, buf = np.inf, None
    for _ in range(repeat):
        gens = [trajectory_generator(0, i) for i in range(n_traj)]
        t0 = time.perf_counter()
        buf = _kernels.run_batch(np.tile(psi0, (n_traj, 1)), prep, 1e-3, steps, rec, gens,
                                 backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, buf.conc[:, -1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-traj", type=int, default=256)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if not _kernels.HAVE_NUMBA:
        print("numba is not importable; only the numpy backend can be timed")
    backends = ["numba", "numpy"] if _kernels.HAVE_NUMBA else ["numpy"]
    total = args.n_traj * args.steps
    print(f"{args.n_traj} trajectories x {args.steps} steps, best of {args.repeat}")
    print(f"{'case':36s} " + " ".join(f"{b + ' us/step':>15s}" for b in backends)
          + ("   speedup  max|dC|" if len(backends) == 2 else ""))
    for name, ch, pol, psi0 in CASES:
        prep = prepare(ch, pol)
        # warm-up: compile and touch caches
        for b in backends:
            _kernels.run_batch(psi0[None], prep, 1e-3, 10, np.array([10]), [trajectory_generator(0, 0)],
                               backend=b)
        res = {b: time_backend(prep, psi0, args.n_traj, args.steps, b, args.repeat) for b in backends}
        cols = " ".join(f"{1e6 * res[b][0] / total:15.3f}" for b in backends)
        if len(backends) == 2:
            speed = res["numpy"][0] / res["numba"][0]
            diff = np.max(np.abs(res["numpy"][1] - res["numba"][1]))
            cols += f"   {speed:7.1f}x  {diff:.1e}"
        print(f"{name:36s} {cols}")


if __name__ == "__main__":
    main()

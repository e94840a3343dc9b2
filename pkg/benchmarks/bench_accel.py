"""Compare the numba and numpy paths of the hot kernels.

    python benchmarks/bench_accel.py [--repeat 5] [--quick]

Each case runs once untimed per backend (JIT compilation and caches), then
reports the best of ``--repeat`` timed runs. Results of the two paths are
checked against each other before timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from seabedplan import _accel
from seabedplan.dubins import edge_cost_batch
from seabedplan.field import ScalarField, bilinear_unchecked, default_scenarios, threshold_obstacles
from seabedplan.kernels import ADDITIVE, Hyperparameters, cross_cov_matvec
from seabedplan.planners import CostWeights
from seabedplan.planners.astar import grid_search
from seabedplan.vessel import VesselParams, simulate_tracking


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(quick: bool):
    rng = np.random.default_rng(0)
    sc = default_scenarios(0)[1]
    field = sc.field
    n_pts = 20_000 if quick else 200_000
    px = rng.uniform(0, 160, n_pts)
    py = rng.uniform(0, 160, n_pts)
    yield "bilinear", lambda: bilinear_unchecked(field, px, py), n_pts

    X = rng.uniform(0, 160, size=(500 if quick else 2000, 2))
    w = rng.normal(size=len(X))
    Xs = field.cell_centers()
    h = Hyperparameters(10.0, 1.0, 0.01)
    yield "gp matvec", lambda: cross_cov_matvec(ADDITIVE, h, Xs, X, w), len(Xs) * len(X)

    occ = threshold_obstacles(field)
    m = 100 if quick else 1000
    A = np.column_stack([rng.uniform(20, 140, (m, 2)), rng.uniform(-3, 3, m)])
    B = np.column_stack([A[:, :2] + rng.uniform(-20, 20, (m, 2)), rng.uniform(-3, 3, m)])
    yield "dubins edges", lambda: edge_cost_batch(A, B, 10.0, field.values, occ.occupancy,
                                                  field.origin, 1.0), m

    weights = CostWeights(alpha=2.0)
    yield "grid A*", lambda: grid_search(field, occ, tuple(sc.start), tuple(sc.goal), weights), field.values.size

    path = np.array([[0.0, 0.0], [150.0, 0.0], [150.0, 100.0], [20.0, 120.0]])
    sea = ScalarField((-50.0, -50.0), 2.0, np.zeros((120, 130)))
    params = VesselParams()
    yield "vessel loop", lambda: simulate_tracking(path, params, sea), 1


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed")

    saved = _accel.USE_NUMBA
    print(f"{'kernel':<14}{'size':>12}{'numpy [ms]':>14}{'numba [ms]':>14}{'speedup':>10}")
    try:
        for name, fn, size in cases(args.quick):
            timings = {}
            outputs = {}
            for flag in (False, True):
                _accel.USE_NUMBA = flag
                outputs[flag] = fn()
                timings[flag] = best_of(fn, args.repeat)
            _check(name, outputs[False], outputs[True])
            print(f"{name:<14}{size:>12}{1e3 * timings[False]:>14.2f}{1e3 * timings[True]:>14.2f}"
                  f"{timings[False] / timings[True]:>9.1f}x")
    finally:
        _accel.USE_NUMBA = saved


def _check(name, a, b):
    if hasattr(a, "trajectory"):
        a, b = a.trajectory, b.trajectory
    if isinstance(a, tuple):
        a, b = a[0], b[0]
    if not np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-9, atol=1e-9):
        raise AssertionError(f"{name}: numba and numpy results differ")


if __name__ == "__main__":
    main()

"""Compare the compiled and pure-NumPy ARMA filter kernels.

Runs both backends on identical inputs across series lengths and model
orders, checks that the accumulated likelihood statistics agree, and
prints per-call timings with the speedup of the compiled kernel.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from streamgamm._kernels import _filter_py

try:
    from streamgamm._kernels import _filter_cy
except ImportError:
    _filter_cy = None

from streamgamm.arma import _state_space
from streamgamm.synthetic import simulate_arma

CASES = [
    # (n, p, q, gap share)
    (1_000, 1, 0, 0.0),
    (10_000, 2, 1, 0.0),
    (10_000, 2, 1, 0.1),
    (100_000, 2, 1, 0.0),
    (100_000, 5, 5, 0.0),
]

PARAMS = {
    1: (np.array([0.7]), np.array([])),
    2: (np.array([1.2, -0.5]), np.array([0.4])),
    5: (
        np.array([0.6, 0.1, 0.05, -0.02, 0.01]),
        np.array([0.3, 0.1, 0.05, 0.02, 0.01]),
    ),
}


def _inputs(n, p, q, gap_share, rng):
    ar, ma = PARAMS[p]
    ma = ma[:q]
    y = simulate_arma(n, ar, ma, 1.0, rng)
    if gap_share:
        drop = rng.choice(n - 2, size=int(gap_share * n), replace=False) + 1
        y[drop] = np.nan
    obs = np.isfinite(y).astype(np.uint8)
    y = np.where(np.isfinite(y), y, 0.0)
    tmat, rr, p0 = _state_space(ar, ma)
    return y, obs, tmat, rr, p0


def _time(kernel, y, obs, tmat, rr, p0, repeats):
    innov = np.full(y.shape[0], np.nan)
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = kernel(y, obs, tmat, rr, p0.copy(), False, innov)
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(repeats: int) -> None:
    backends = [("python", _filter_py.kalman_filter)]
    if _filter_cy is not None:
        backends.append(("cython", _filter_cy.kalman_filter))
    else:
        print("compiled kernel not built; timing the fallback only\n")

    header = f"{'case':>24} " + "".join(f"{name:>12}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    rng = np.random.default_rng(7)
    for n, p, q, gap in CASES:
        y, obs, tmat, rr, p0 = _inputs(n, p, q, gap, rng)
        label = f"n={n} ({p},{q}) gaps={int(100 * gap)}%"
        times = []
        stats = []
        for _, kernel in backends:
            t, out = _time(kernel, y, obs, tmat, rr, p0, repeats)
            times.append(t)
            stats.append(out)
        if len(stats) == 2:
            for a, b in zip(stats[0][:2], stats[1][:2]):
                rel = abs(a - b) / max(1.0, abs(b))
                assert rel < 1e-9, f"backends disagree on {label}: {stats}"
        row = f"{label:>24} " + "".join(f"{1e3 * t:>10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3, help="timing repeats per case")
    run(ap.parse_args().repeats)

"""Wall-time comparison of direct quadrature against transform-based solves.

1D: the midpoint-rule sum with the closed-form Green's function against the
sine-transform solve (both produce the same field to round-off).  2D: the
screened-Poisson kernel is singular on the diagonal, so the direct O(Ns^4)
sum is timed with the bounded Cucker-Smale kernel and checked against
zero-padded FFT convolution; the 2D sine-transform solve is timed alongside.
"""

from __future__ import annotations

import csv
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .domain import Domain, ScalarField, make_grid
from .kernels import CuckerSmale, ScreenedPoisson1D
from .spectral import convolve_direct, convolve_fft, sample_displacement_kernel, solve_screened_poisson

__all__ = [
    "BenchResult",
    "METHODS",
    "run_bench",
    "loglog_slope",
    "crossover_report",
    "method_agreement",
    "write_bench_csv",
]

METHODS = ("direct", "spectral", "fft_conv")
CSV_HEADER = ("dim", "method", "Ns", "threads", "seconds_median", "repeats")

K_BENCH, LAM_BENCH = 4.0, 1.0
CS_BENCH = CuckerSmale(5.0, 2.0)


@dataclass(frozen=True)
class BenchResult:
    dimension: int
    method: str
    Ns: int
    seconds: float
    repeats: int
    threads: int = 1

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.repeats < 5:
            raise ValueError("need at least 5 repeats")
        if not self.seconds > 0:
            raise ValueError("seconds must be positive")


def _field(dim: int, Ns: int, seed: int = 0) -> ScalarField:
    grid = make_grid(Domain(dim, np.pi), Ns)
    rng = np.random.default_rng(seed)
    return ScalarField(grid, rng.random(grid.shape))


def _direct_1d(q: ScalarField, threads: int) -> ScalarField:
    kernel = ScreenedPoisson1D(K_BENCH, LAM_BENCH, q.grid.length)
    if threads <= 1:
        return convolve_direct(kernel, q)
    grid = q.grid
    x = grid.centers
    bounds = np.linspace(0, grid.cells_per_axis, threads + 1).astype(int)

    def block(i):
        rows = slice(bounds[i], bounds[i + 1])
        return kernel.evaluate(x[rows, None], x[None, :]) @ q.values

    with ThreadPoolExecutor(threads) as pool:
        parts = list(pool.map(block, range(threads)))
    return ScalarField(grid, np.concatenate(parts) * grid.dx)


def _runner(dim: int, method: str, threads: int):
    if method == "spectral":
        return lambda q: solve_screened_poisson(q, K_BENCH, LAM_BENCH)
    if method == "direct":
        if dim == 1:
            return lambda q: _direct_1d(q, threads)
        return lambda q: convolve_direct(CS_BENCH, q)
    return lambda q: convolve_fft(sample_displacement_kernel(CS_BENCH, q.grid), q)


def _time(fn, q, repeats: int) -> float:
    fn(q)  # warm-up
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(q)
        samples.append(time.perf_counter() - t0)
    return max(statistics.median(samples), 1e-9)


def run_bench(dims=(1, 2), methods=("direct", "spectral"), Ns_list=None, repeats: int = 5,
              threads: int = 1, seed: int = 0) -> list[BenchResult]:
    """Median wall-time per (dim, method, Ns) on a fixed random field.

    ``Ns_list`` is one increasing list for all dimensions or a dict keyed by
    dimension.
    """
    if repeats < 5:
        raise ValueError("need at least 5 repeats")
    if Ns_list is None:
        Ns_list = {1: [256, 512, 1024, 2048, 4096, 8192], 2: [16, 32, 64, 128]}
    out = []
    for dim in dims:
        sizes = Ns_list[dim] if isinstance(Ns_list, dict) else Ns_list
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("Ns_list must be increasing")
        for method in methods:
            fn = _runner(dim, method, threads)
            for Ns in sizes:
                q = _field(dim, Ns, seed)
                used = threads if (dim == 1 and method == "direct") else 1
                out.append(BenchResult(dim, method, Ns, _time(fn, q, repeats), repeats, used))
    return out


def method_agreement(dim: int, Ns: int, seed: int = 0) -> float:
    """Relative L-inf gap between the two evaluations of the same field."""
    q = _field(dim, Ns, seed)
    if dim == 1:
        a = _direct_1d(q, 1).values
        b = solve_screened_poisson(q, K_BENCH, LAM_BENCH).values
    else:
        a = convolve_direct(CS_BENCH, q).values
        b = convolve_fft(sample_displacement_kernel(CS_BENCH, q.grid), q).values
    return float(np.max(np.abs(a - b)) / np.max(np.abs(a)))


def loglog_slope(results, dim: int, method: str) -> float:
    pts = sorted((r.Ns, r.seconds) for r in results if r.dimension == dim and r.method == method)
    if len(pts) < 2:
        raise ValueError(f"need at least two sizes for dim={dim}, method={method}")
    n, s = np.log(np.array(pts)).T
    return float(np.polyfit(n, s, 1)[0])


def crossover_report(results, fast: str = "spectral", slow: str = "direct") -> dict:
    """Per dimension: smallest Ns where ``fast`` beats ``slow`` and the speedups at both ends."""
    report = {}
    for dim in sorted({r.dimension for r in results}):
        a = {r.Ns: r.seconds for r in results if r.dimension == dim and r.method == fast}
        b = {r.Ns: r.seconds for r in results if r.dimension == dim and r.method == slow}
        common = sorted(set(a) & set(b))
        if not common:
            raise ValueError(f"dim={dim} lacks timings for both {fast} and {slow}")
        wins = [n for n in common if a[n] < b[n]]
        report[dim] = {
            "crossover_Ns": wins[0] if wins else "none within range",
            "speedup_smallest": b[common[0]] / a[common[0]],
            "speedup_largest": b[common[-1]] / a[common[-1]],
            "Ns_smallest": common[0],
            "Ns_largest": common[-1],
        }
    return report


def write_bench_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in results:
            w.writerow([r.dimension, r.method, r.Ns, r.threads, repr(r.seconds), r.repeats])

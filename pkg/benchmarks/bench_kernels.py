"""Time the compiled kernels against the numpy fallback, and one Gibbs sweep.

Run with ``python benchmarks/bench_kernels.py``. The sweep timing shows how
much of a fit the kernels account for; the rest is dense linear algebra.
"""

import argparse
import timeit

import numpy as np

from arpspline import _kernels
from arpspline.basis import KnotGrid
from arpspline.design import (
    LagSet, MarginSpec, ModelSpec, TermSpec, assemble_design, drop_incomplete_rows, lag_index,
)
from arpspline.numerics import rng_stream
from arpspline.sampler import GibbsWorkspace, _initial_state, gibbs_step
from arpspline.simulate import simulate


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_bspline(impls, n, repeat):
    grid = KnotGrid.uniform(0.0, 1.0, 20, 3)
    x = np.random.default_rng(0).uniform(size=n)
    knots = grid.padded()
    return {name: _best(lambda m=m: m.bspline_values(x, knots, 3), repeat) for name, m in impls.items()}


def bench_ar_fill(impls, draws, steps, repeat):
    rng = np.random.default_rng(1)
    lags = np.array([1, 24, 168], dtype=np.intp)
    phi = rng.uniform(-0.2, 0.2, size=(draws, 3))
    u = rng.normal(size=(draws, 168 + steps))
    base = np.full((draws, 168 + steps), np.nan)
    base[:, :168] = rng.normal(size=(draws, 168))
    return {name: _best(lambda m=m: m.ar_fill(base.copy(), phi, lags, u), repeat) for name, m in impls.items()}


def bench_sweep(n, repeat):
    spec = ModelSpec((
        TermSpec("intercept", "intercept"),
        TermSpec("time", "cyclic_bspline", (MarginSpec("cyclic_bspline", "t", 6, 2, 2, period=24.0),)),
        TermSpec("xy", "tensor", (MarginSpec("bspline", "x", 6, 2, 2, bounds=(0, 1)),
                                  MarginSpec("bspline", "y", 6, 2, 2, bounds=(0, 1)))),
    ), LagSet((1,)))
    data, _ = drop_incomplete_rows(simulate(n, 0), spec.lag_set, spec.covariates)
    X, y, ledger = assemble_design(spec, data)
    ws = GibbsWorkspace(X, y, lag_index(data.time_index, spec.lag_set))
    state = _initial_state(ws, ledger)
    rng = rng_stream(0)
    return _best(lambda: gibbs_step(state, ws, ledger, spec, rng), repeat)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=200_000)
    p.add_argument("--draws", type=int, default=4500)
    p.add_argument("--steps", type=int, default=60)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()

    impls = _kernels.backends()
    print(f"default backend: {_kernels.BACKEND}")
    rows = [
        (f"bspline_values, {args.points} points, cubic", bench_bspline(impls, args.points, args.repeat)),
        (f"ar_fill, {args.draws} draws x {args.steps} steps", bench_ar_fill(impls, args.draws, args.steps, args.repeat)),
    ]
    for label, times in rows:
        parts = ", ".join(f"{k} {v * 1e3:.2f} ms" for k, v in sorted(times.items()))
        ratio = ""
        if "compiled" in times:
            ratio = f" (speed-up {times['python'] / times['compiled']:.1f}x)"
        print(f"{label}: {parts}{ratio}")
    print(f"one Gibbs sweep, n=2400, 43 columns: {bench_sweep(2400, args.repeat) * 1e3:.2f} ms")


if __name__ == "__main__":
    main()

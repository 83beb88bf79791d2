"""Sampling cost of a single-layer model versus n_h (n_x + n_h).

Reports the instrumented multiplication count and the wall-clock time per
decoder sample on a grid of sizes, with least-squares fits
``cost = a * n_h (n_x + n_h) + b`` for both.

    python scripts/complexity_sweep.py --batch 200 --repeats 5
"""
from __future__ import annotations

import argparse
import itertools
import sys
import time
from dataclasses import dataclass

import numpy as np
from scipy.stats import linregress

from darn import Architecture, init_params, make_rng, sample_decoder
from darn.sampler import MultiplyCounter, count_multiplications

N_H = (8, 16, 32, 64, 128)
N_X = (128, 256, 512, 784)


@dataclass
class SweepConfig:
    n_h: tuple = N_H
    n_x: tuple = N_X
    batch: int = 200
    repeats: int = 5
    seed: int = 0


@dataclass
class SweepPoint:
    n_h: int
    n_x: int
    complexity: int
    multiplications: int
    analytic: int
    seconds_per_sample: float


def measure(cfg: SweepConfig, timed: bool = True) -> list[SweepPoint]:
    points = []
    for n_h, n_x in itertools.product(cfg.n_h, cfg.n_x):
        arch = Architecture.single(n_x, n_h)
        params = init_params(arch, cfg.seed, 0.1)
        counter = MultiplyCounter()
        sample_decoder(params, make_rng(cfg.seed), counter=counter)
        seconds = float("nan")
        if timed:
            rng = make_rng(cfg.seed)
            sample_decoder(params, rng, size=cfg.batch)  # warm-up
            best = []
            for _ in range(cfg.repeats):
                start = time.perf_counter()
                sample_decoder(params, rng, size=cfg.batch)
                best.append(time.perf_counter() - start)
            seconds = min(best) / cfg.batch
        points.append(SweepPoint(n_h, n_x, n_h * (n_x + n_h), counter.count,
                                 count_multiplications(arch), seconds))
    return points


def fit(points: list[SweepPoint], attr: str) -> tuple[float, float, float]:
    """Slope, intercept and R^2 of ``attr`` against n_h (n_x + n_h)."""
    x = np.array([p.complexity for p in points], dtype=float)
    y = np.array([getattr(p, attr) for p in points], dtype=float)
    res = linregress(x, y)
    return res.slope, res.intercept, res.rvalue ** 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=200)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    cfg = SweepConfig(batch=args.batch, repeats=args.repeats, seed=args.seed)
    points = measure(cfg)
    print("n_h\tn_x\tn_h(n_x+n_h)\tmults\tanalytic\tus_per_sample")
    for p in points:
        print(f"{p.n_h}\t{p.n_x}\t{p.complexity}\t{p.multiplications}\t{p.analytic}\t{1e6 * p.seconds_per_sample:.2f}")
    for attr in ("multiplications", "seconds_per_sample"):
        a, b, r2 = fit(points, attr)
        print(f"fit {attr}: a={a:.4g} b={b:.4g} R^2={r2:.5f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Binary UCI Adult benchmark: grid search on validation, test NLL of the winner.

Expects a directory holding the usual three splits of the 123-feature
binarised Adult set (5000 / 1414 / 26147 rows) as ``adult_train``,
``adult_valid`` and ``adult_test`` with extension ``.csv`` (comma separated)
or ``.amat`` / ``.txt`` (whitespace separated).

    python scripts/uci_adult.py --data-dir ~/data/adult --grid small

The reference figure for this architecture family is 13.19 nats per test
example.
"""
from __future__ import annotations

import argparse
import itertools
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from darn import Architecture, StochasticLayerSpec, TrainConfig, dataset_eval, train
from darn.data_io import Dataset, load_binary_csv

REFERENCE_NATS = 13.19

GRIDS = {
    "full": dict(det=(100, 200, 300, 400, 500), n_h=(8, 12, 16, 32, 64, 128, 256),
                 lr=(2.5e-4, 6.75e-5, 1e-5)),
    "small": dict(det=(100, 300), n_h=(8, 16), lr=(2.5e-4,)),
}


@dataclass
class AdultConfig:
    data_dir: Path
    grid: str = "small"
    epochs: int = 500
    patience: int = 30
    seed: int = 0
    exact_max_hidden: int = 10
    is_samples: int = 1_000
    is_repeats: int = 10
    threads: int = 1
    results: list = field(default_factory=list)


def load_split(data_dir: Path, name: str) -> Dataset:
    for ext in (".csv", ".amat", ".txt"):
        path = data_dir / f"adult_{name}{ext}"
        if path.exists():
            if ext == ".csv":
                return load_binary_csv(path)
            return Dataset(np.loadtxt(path, dtype=np.int64, ndmin=2))
    raise FileNotFoundError(f"no adult_{name}.{{csv,amat,txt}} in {data_dir}")


def architecture(n_x: int, n_h: int, det: int) -> Architecture:
    # tanh layer between the stochastic layer and the visibles; AR prior and AR visibles
    return Architecture(n_x, (StochasticLayerSpec(n_h, det_width=det),), visible_autoregressive=True)


def evaluate(params, data, cfg: AdultConfig):
    # exact enumeration over ~26k test rows is only affordable for small n_h
    if params.arch.total_hidden <= cfg.exact_max_hidden:
        return dataset_eval(params, data, "exact", threads=cfg.threads)
    return dataset_eval(params, data, "is", S=cfg.is_samples, repeats=cfg.is_repeats,
                        seed=cfg.seed, threads=cfg.threads)


def run(cfg: AdultConfig) -> dict:
    train_set, valid, test = (load_split(cfg.data_dir, s) for s in ("train", "valid", "test"))
    grid = GRIDS[cfg.grid]
    best = None
    for det, n_h, lr in itertools.product(grid["det"], grid["n_h"], grid["lr"]):
        start = time.perf_counter()
        arch = architecture(train_set.n_x, n_h, det)
        tcfg = TrainConfig(learning_rate=lr, epochs=cfg.epochs, seed=cfg.seed,
                           early_stop_patience=cfg.patience)
        result = train(train_set, arch, tcfg, validation=valid)
        val_nats = min(rec.val_nats for rec in result.log)
        row = dict(det=det, n_h=n_h, lr=lr, best_epoch=result.best_epoch, val_bound=val_nats,
                   seconds=time.perf_counter() - start)
        cfg.results.append(row)
        print(json.dumps(row), flush=True)
        if best is None or val_nats < best[0]:
            best = (val_nats, row, result.params)
    _, row, params = best
    summary = evaluate(params, test, cfg)
    return dict(choice=row, test_nll=summary.mean, ci_low=summary.ci_low, ci_high=summary.ci_high,
                mode=summary.mode, reference=REFERENCE_NATS)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data-dir", type=Path, required=True)
    parser.add_argument("--grid", choices=sorted(GRIDS), default="small")
    parser.add_argument("--epochs", type=int, default=500)
    parser.add_argument("--patience", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--is-samples", type=int, default=1_000)
    args = parser.parse_args(argv)
    cfg = AdultConfig(args.data_dir, args.grid, args.epochs, args.patience, args.seed,
                      is_samples=args.is_samples, threads=args.threads)
    outcome = run(cfg)
    print(json.dumps(outcome, indent=2))
    print(f"test NLL {outcome['test_nll']:.3f} nats (reference {REFERENCE_NATS}, "
          f"|diff| {abs(outcome['test_nll'] - REFERENCE_NATS):.3f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())

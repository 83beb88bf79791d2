"""Learn a uniform mixture of 8 random 8-bit patterns and compare with its entropy.

    python scripts/mixture_experiment.py --epochs 300 --lr 2.5e-4

The floor is 3 ln 2 nats; the reported gap is the exact free energy on a
held-out sample minus that floor.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from darn import Architecture, TrainConfig, free_energy_exact, train


@dataclass
class MixtureConfig:
    n_bits: int = 8
    n_patterns: int = 8
    n_h: int = 8
    n_train: int = 2000
    n_val: int = 500
    learning_rate: float = 3e-3
    epochs: int = 150
    minibatch: int = 100
    patience: int = 40
    seed: int = 0


def mixture_data(cfg: MixtureConfig):
    rng = np.random.default_rng(cfg.seed)
    codes = rng.choice(2 ** cfg.n_bits, size=cfg.n_patterns, replace=False)
    patterns = ((codes[:, None] >> np.arange(cfg.n_bits - 1, -1, -1)) & 1).astype(np.uint8)
    return (patterns, patterns[rng.integers(0, cfg.n_patterns, cfg.n_train)],
            patterns[rng.integers(0, cfg.n_patterns, cfg.n_val)])


def mean_free_energy(params, rows) -> float:
    unique, counts = np.unique(rows, axis=0, return_counts=True)
    return float(np.dot(counts, free_energy_exact(params, unique)) / counts.sum())


def run(cfg: MixtureConfig) -> dict:
    patterns, train_rows, val_rows = mixture_data(cfg)
    tcfg = TrainConfig(learning_rate=cfg.learning_rate, epochs=cfg.epochs, minibatch=cfg.minibatch,
                       seed=cfg.seed, early_stop_patience=cfg.patience)
    cpu = time.process_time()
    result = train(train_rows, Architecture.single(cfg.n_bits, cfg.n_h), tcfg, validation=val_rows)
    cpu = time.process_time() - cpu
    floor = math.log(cfg.n_patterns)
    val_fe = mean_free_energy(result.params, val_rows)
    return dict(floor=floor, val_free_energy=val_fe, gap=val_fe - floor, best_epoch=result.best_epoch,
                epochs_run=len(result.log), cpu_seconds=cpu)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--epochs", type=int, default=150)
    parser.add_argument("--lr", type=float, default=3e-3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    cfg = MixtureConfig(learning_rate=args.lr, epochs=args.epochs, seed=args.seed)
    print(json.dumps(dict(config=asdict(cfg), **run(cfg)), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())

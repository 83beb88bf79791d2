"""Exact and importance-sampled log-likelihood evaluation."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .model import (MAX_ENUMERATION_BITS, ModelParams, _as_batch, encoder_log_prob,
                    enumerate_representations, joint_log_prob)
from .objective import description_length_samples, free_energy_exact
from .sampler import make_rng, sample_encoder

Z95 = 1.96


@dataclass(frozen=True)
class LikelihoodEstimate:
    mean_nats: float
    repeats: int
    samples_per_repeat: int
    ci95_low: float
    ci95_high: float
    per_repeat_values: list[float] = field(default_factory=list)


def confidence_interval(values) -> tuple[float, float, float]:
    """Mean and mean +- 1.96 * sample std / sqrt(n); zero width for a single value."""
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    if values.size < 2:
        return mean, mean, mean
    half = Z95 * float(values.std(ddof=1)) / math.sqrt(values.size)
    return mean, mean - half, mean + half


def exact_log_likelihood(params: ModelParams, x, limit: int = MAX_ENUMERATION_BITS) -> float:
    """ln p(x) = logsumexp over every representation of ln p(x, h); one value per row of a 2-D ``x``."""
    arch = params.arch
    xv = _as_batch(x, arch.n_x, "x")
    if np.ndim(x) == 2:
        return np.array([exact_log_likelihood(params, row, limit) for row in xv])
    parts = []
    for rep in enumerate_representations(arch, limit=limit):
        xs = np.broadcast_to(xv[0], (rep.bits[0].shape[0], arch.n_x))
        parts.append(logsumexp(joint_log_prob(params, xs, rep)))
    return float(logsumexp(parts))


def _log_importance_weights(params: ModelParams, x: np.ndarray, n: int,
                            rng: np.random.Generator) -> np.ndarray:
    xs = np.broadcast_to(x, (n, x.shape[-1]))
    rep = sample_encoder(params, xs, rng)
    return joint_log_prob(params, xs, rep) - encoder_log_prob(params, xs, rep)


def importance_sampling_ll(params: ModelParams, x, S: int, repeats: int, rng: np.random.Generator,
                           chunk: int = 1 << 15) -> LikelihoodEstimate:
    """Repeated importance-sampling estimates of ln p(x) with q(h|x) as proposal."""
    if S < 1 or repeats < 1:
        raise ValueError("S and repeats must be >= 1")
    xv = _as_batch(x, params.arch.n_x, "x")[0]
    values = []
    for _ in range(repeats):
        parts = [logsumexp(_log_importance_weights(params, xv, min(chunk, S - start), rng))
                 for start in range(0, S, chunk)]
        values.append(float(logsumexp(parts) - math.log(S)))
    mean, low, high = confidence_interval(values)
    return LikelihoodEstimate(mean, repeats, S, low, high, values)


@dataclass(frozen=True)
class EvalSummary:
    """Dataset-level negative log-likelihood (or free energy) in nats per datum."""
    mean: float
    ci_low: float
    ci_high: float
    mode: str
    S: int
    repeats: int
    per_datum: np.ndarray

    def summary_line(self) -> str:
        return (f"mean={self.mean:.6f}\tci_low={self.ci_low:.6f}\tci_high={self.ci_high:.6f}"
                f"\tmode={self.mode}\tS={self.S}\trepeats={self.repeats}")


def _datum_values(params: ModelParams, x: np.ndarray, mode: str, S: int, repeats: int,
                  seed: np.random.SeedSequence) -> np.ndarray:
    """Per-repeat negative log-likelihood (or free energy) values for one datum."""
    if mode == "exact":
        return np.full(repeats, -exact_log_likelihood(params, x))
    rng = make_rng(seed)
    if mode == "is":
        return -np.asarray(importance_sampling_ll(params, x, S, repeats, rng).per_repeat_values)
    if mode == "fe":
        if params.arch.total_hidden <= MAX_ENUMERATION_BITS:
            return np.full(repeats, free_energy_exact(params, x))
        return np.array([description_length_samples(params, x, S, rng).mean() for _ in range(repeats)])
    raise ValueError(f"unknown evaluation mode {mode!r}; expected exact, is or fe")


def dataset_eval(params: ModelParams, data, mode: str = "exact", S: int = 100_000,
                 repeats: int = 10, seed: int = 0, threads: int = 1) -> EvalSummary:
    """Average negative log-likelihood per datum with a 95% CI over repeats.

    Exact modes report a zero-width interval.  Each datum draws from its own
    PCG64 stream spawned from ``seed``, so results do not depend on
    ``threads``.
    """
    rows = np.atleast_2d(np.asarray(getattr(data, "rows", data), dtype=np.float64))
    if rows.shape[0] == 0:
        raise ValueError("cannot evaluate an empty dataset")
    _as_batch(rows, params.arch.n_x, "data")
    if mode == "exact":
        repeats = 1
    seeds = np.random.SeedSequence(seed).spawn(rows.shape[0])
    work = lambda i: _datum_values(params, rows[i], mode, S, repeats, seeds[i])
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = np.array(list(pool.map(work, range(rows.shape[0]))))
    else:
        values = np.array([work(i) for i in range(rows.shape[0])])
    per_repeat = values.mean(axis=0)
    mean, low, high = confidence_interval(per_repeat)
    return EvalSummary(mean, low, high, mode, S if mode != "exact" else 0, repeats, values.mean(axis=1))

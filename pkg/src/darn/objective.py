"""Description-length decomposition and the variational free energy."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (MAX_ENUMERATION_BITS, ModelParams, _as_batch, _is_batched, _unbatch,
                    decoder_terms, encoder_log_prob, enumerate_representations, joint_log_prob)
from .sampler import sample_encoder

LN2 = math.log(2.0)


@dataclass(frozen=True)
class DescriptionLength:
    """Coding cost of one datum and its representation, in nats.

    ``residual`` is -ln p(x|h), ``prior_cost`` is -ln p(h) summed over the
    whole decoder chain above the visibles, and ``bits_back`` is ln q(h|x),
    the (non-positive) refund for the bits used to pick ``h``.
    """
    residual: float | np.ndarray
    prior_cost: float | np.ndarray
    bits_back: float | np.ndarray
    total: float | np.ndarray

    def in_bits(self) -> "DescriptionLength":
        return DescriptionLength(self.residual / LN2, self.prior_cost / LN2,
                                 self.bits_back / LN2, self.total / LN2)


def description_length_terms(params: ModelParams, x, rep) -> DescriptionLength:
    dec = decoder_terms(params, x, rep)
    batched = _is_batched(x, rep)
    residual = -dec.pop("dec.x")
    prior_cost = -sum(dec.values())
    bits_back = np.asarray(encoder_log_prob(params, x, rep), dtype=np.float64).reshape(-1)
    total = residual + prior_cost + bits_back
    return DescriptionLength(*(_unbatch(v, batched) for v in (residual, prior_cost, bits_back, total)))


def _tile(x: np.ndarray, n: int) -> np.ndarray:
    return np.broadcast_to(x, (n, x.shape[-1]))


def free_energy_exact(params: ModelParams, x, limit: int = MAX_ENUMERATION_BITS) -> float:
    """E_q[ln q(h|x) - ln p(x,h)] summed over every representation.

    A 2-D ``x`` gives one value per row.
    """
    arch = params.arch
    xv = _as_batch(x, arch.n_x, "x")
    if np.ndim(x) == 2:
        return np.array([free_energy_exact(params, row, limit) for row in xv])
    total = 0.0
    for rep in enumerate_representations(arch, limit=limit):
        xs = _tile(xv[0], rep.bits[0].shape[0])
        lq = encoder_log_prob(params, xs, rep)
        lp = joint_log_prob(params, xs, rep)
        total += float(np.sum(np.exp(lq) * (lq - lp)))
    return total


def description_length_samples(params: ModelParams, x, n_samples: int, rng: np.random.Generator,
                               chunk: int = 1 << 15) -> np.ndarray:
    """Total description length of ``n_samples`` independent encoder draws for one datum."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    arch = params.arch
    xv = _as_batch(x, arch.n_x, "x")[0]
    out = []
    for start in range(0, n_samples, chunk):
        xs = _tile(xv, min(chunk, n_samples - start))
        rep = sample_encoder(params, xs, rng)
        out.append(description_length_terms(params, xs, rep).total)
    return np.concatenate(out)


def free_energy_mc(params: ModelParams, x, n_samples: int, rng: np.random.Generator) -> float:
    """Monte Carlo estimate of the expected description length."""
    return float(np.mean(description_length_samples(params, x, n_samples, rng)))

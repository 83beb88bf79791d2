"""Ancestral sampling through the decoder and the encoder.

Random numbers always come from an explicit ``numpy.random.Generator``; the
package uses PCG64 (``make_rng``) so streams are reproducible across
platforms.  Each conditional consumes one ``(batch, n)`` block of uniforms,
and unit ``j`` of every sample is set when its uniform falls below
``p(unit j = 1 | ...)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (Architecture, Conditional, ModelParams, Representation, _as_batch,
                    clamped_sigmoid, decoder_conditionals, encoder_conditionals)


AR_BLOCK = 32


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class MultiplyCounter:
    """Counts scalar multiply-accumulates performed for a single sample."""
    count: int = 0

    def add(self, n: int) -> None:
        self.count += int(n)


def _sample_conditional(params: ModelParams, cond: Conditional, context: np.ndarray | None,
                        rng: np.random.Generator, batch: int,
                        counter: MultiplyCounter | None) -> tuple[np.ndarray, np.ndarray]:
    prefix = cond.name
    base = np.broadcast_to(params[f"{prefix}.b"], (batch, cond.n)).copy()
    if cond.context is not None:
        d = context
        if cond.det_width:
            U = params[f"{prefix}.U"]
            d = np.tanh(context @ U.T)
            if counter is not None:
                counter.add(U.size)
        W_ctx = params[f"{prefix}.W_ctx"]
        base += d @ W_ctx.T
        if counter is not None:
            counter.add(W_ctx.size)

    u = rng.random((batch, cond.n))
    if not cond.autoregressive:
        probs = clamped_sigmoid(base)
        return (u < probs).astype(np.float64), probs

    # Units are visited in blocks: contributions from earlier blocks arrive as one
    # matrix product, the strictly-lower triangle inside a block unit by unit.
    # The unit-major layout keeps bits_t[:j] contiguous.
    W_ar = params[f"{prefix}.W_ar"]
    logits_t = np.ascontiguousarray(base.T)
    u_t = np.ascontiguousarray(u.T)
    bits_t = np.zeros((cond.n, batch))
    probs_t = np.empty((cond.n, batch))
    for start in range(0, cond.n, AR_BLOCK):
        stop = min(cond.n, start + AR_BLOCK)
        if start:
            block = W_ar[start:stop, :start]
            logits_t[start:stop] += block @ bits_t[:start]
            if counter is not None:
                counter.add(block.size)
        for j in range(start, stop):
            row = W_ar[j, start:j]
            logit = logits_t[j] + row @ bits_t[start:j]
            if counter is not None:
                counter.add(row.size)
            probs_t[j] = clamped_sigmoid(logit)
            bits_t[j] = u_t[j] < probs_t[j]
    return bits_t.T.copy(), probs_t.T.copy()


def sample_decoder(params: ModelParams, rng: np.random.Generator, size: int | None = None,
                   with_probs: bool = False, counter: MultiplyCounter | None = None):
    """Draw ``(x, rep)`` top-down from the decoder.

    With ``size`` the arrays carry a leading batch axis.  ``with_probs``
    additionally returns the per-pixel Bernoulli probabilities of the
    visible layer.  ``counter`` (single samples only make sense here) is
    incremented by every multiplication the pass performs.
    """
    arch = params.arch
    batch = 1 if size is None else int(size)
    bits: dict[int, np.ndarray] = {}
    probs: dict[int, np.ndarray] = {}
    for cond in decoder_conditionals(arch):
        context = None if cond.context is None else bits[cond.context]
        bits[cond.target], probs[cond.target] = _sample_conditional(params, cond, context, rng,
                                                                    batch, counter)
    squeeze = (lambda a: a[0]) if size is None else (lambda a: a)
    rep = Representation(tuple(squeeze(bits[l]) for l in range(arch.n_layers)),
                         tuple(squeeze(probs[l]) for l in range(arch.n_layers)))
    x = squeeze(bits[-1])
    if with_probs:
        return x, rep, squeeze(probs[-1])
    return x, rep


def sample_encoder(params: ModelParams, x, rng: np.random.Generator) -> Representation:
    """Draw h ~ q(h | x) bottom-up; ``x`` may be a single vector or a batch."""
    arch = params.arch
    xb = _as_batch(x, arch.n_x, "x")
    batch = xb.shape[0]
    bits: dict[int, np.ndarray] = {-1: xb}
    probs: dict[int, np.ndarray] = {}
    for cond in encoder_conditionals(arch):
        bits[cond.target], probs[cond.target] = _sample_conditional(
            params, cond, bits[cond.context], rng, batch, None)
    squeeze = (lambda a: a) if np.ndim(x) == 2 else (lambda a: a[0])
    return Representation(tuple(squeeze(bits[l]) for l in range(arch.n_layers)),
                          tuple(squeeze(probs[l]) for l in range(arch.n_layers)))


def count_multiplications(arch: Architecture) -> int:
    """Multiplications performed by one decoder sample, masked entries excluded.

    A single layer without visible autoregression costs
    ``n_h (n_h - 1) / 2 + n_h n_x``, i.e. O(n_h (n_x + n_h)); making the
    visibles autoregressive gives ``(n_h + n_x)(n_h + n_x - 1) / 2``.
    """
    total = 0
    for cond in decoder_conditionals(arch):
        if cond.context is not None:
            if cond.det_width:
                total += cond.det_width * cond.n_context + cond.n * cond.det_width
            else:
                total += cond.n * cond.n_context
        if cond.autoregressive:
            total += cond.n * (cond.n - 1) // 2
    return total

"""Gradients, RMSprop with momentum, and the minibatch training loop.

The per-datum loss is the total description length
``F(x, h) = ln q(h|x) - ln p(x, h)`` for a representation ``h`` drawn from
the encoder.  ``backward`` differentiates it in two stages:

1. an exact reverse pass with the sampled bits held fixed, which also
   yields dF/dh for every stochastic bit treated as a real number;
2. a top-down sweep over the encoder's stochastic units (reverse sampling
   order) that turns dF/dh_i into a gradient on q(H_i = 1) by scaling with
   ``1 / (2 q(h_i))``.  This is the score-function estimator with a
   first-order Taylor baseline evaluated at h' = 1/2; it is unbiased
   whenever the downstream cost is at most quadratic in h_i.  The gradient
   on q(H_i = 1) is pushed through the unit's logit into the encoder
   weights and into every earlier stochastic bit, so the rule applies
   independently at each unit crossed.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import DataError, NumericError
from .model import (LOGIT_LIMIT, MAX_ENUMERATION_BITS, Conditional, ModelParams, _as_batch,
                    _rep_bits, block_mask, check_enumerable, clamped_sigmoid, cond_logits,
                    decoder_conditionals, encoder_conditionals, encoder_log_prob,
                    enumerate_representations, init_params, joint_log_prob, param_layout)
from .objective import description_length_terms, free_energy_exact
from .sampler import make_rng, sample_encoder

log = logging.getLogger(__name__)

GradientSet = dict[str, np.ndarray]


def zero_grads(params: ModelParams) -> GradientSet:
    return {name: np.zeros_like(value) for name, value in params.blocks.items()}


@dataclass
class _CondCache:
    cond: Conditional
    target: np.ndarray
    context: np.ndarray | None
    d: np.ndarray | None
    logits: np.ndarray


def _forward_caches(params: ModelParams, x: np.ndarray, bits: list[np.ndarray]):
    values = {-1: x, **dict(enumerate(bits))}
    caches = []
    for cond in decoder_conditionals(params.arch) + encoder_conditionals(params.arch):
        target = values[cond.target]
        context = None if cond.context is None else values[cond.context]
        logits, d = cond_logits(params, cond, target, context)
        caches.append(_CondCache(cond, target, context, d, logits))
    return caches


def _backprop_logits(params: ModelParams, cache: _CondCache, g_logits: np.ndarray,
                     grads: GradientSet, include_ar_input: bool = True):
    """Accumulate parameter gradients for ``dLoss/dlogits``.

    Returns ``(g_target, g_context)``: gradients flowing into the target
    bits through the autoregressive weights, and into the context layer.
    """
    cond, prefix = cache.cond, cache.cond.name
    grads[f"{prefix}.b"] += g_logits.sum(axis=0)
    g_target = None
    if cond.autoregressive:
        W_ar = params[f"{prefix}.W_ar"]
        mask = block_mask(f"{prefix}.W_ar", W_ar.shape)
        grads[f"{prefix}.W_ar"] += (g_logits.T @ cache.target) * mask
        if include_ar_input:
            g_target = g_logits @ W_ar
    g_context = None
    if cond.context is not None:
        grads[f"{prefix}.W_ctx"] += g_logits.T @ cache.d
        g_d = g_logits @ params[f"{prefix}.W_ctx"]
        if cond.det_width:
            g_pre = g_d * (1.0 - cache.d ** 2)
            grads[f"{prefix}.U"] += g_pre.T @ cache.context
            g_context = g_pre @ params[f"{prefix}.U"]
        else:
            g_context = g_d
    return g_target, g_context


def _gradient_pass(params: ModelParams, x: np.ndarray, bits: list[np.ndarray],
                   w_enc: np.ndarray, w_dec: np.ndarray,
                   sample_probs: list[np.ndarray] | None = None) -> GradientSet:
    """Gradient of sum_b (w_enc[b] ln q(h_b|x_b) - w_dec[b] ln p(x_b, h_b)).

    With ``sample_probs`` the stochastic-unit estimator is applied on top of
    the fixed-bit gradient.
    """
    grads = zero_grads(params)
    g_bits = {l: np.zeros_like(b) for l, b in enumerate(bits)}
    caches = _forward_caches(params, x, bits)
    for cache in caches:
        sign = (w_enc if cache.cond.side == "encoder" else -w_dec)[:, None]
        inside = np.abs(cache.logits) < LOGIT_LIMIT
        lc = np.clip(cache.logits, -LOGIT_LIMIT, LOGIT_LIMIT)
        g_logits = sign * (cache.target - clamped_sigmoid(cache.logits)) * inside
        g_target, g_context = _backprop_logits(params, cache, g_logits, grads)
        if cache.cond.target >= 0:
            # d/dt [t ln s(l) + (1 - t) ln s(-l)] = l
            g_bits[cache.cond.target] += sign * lc
            if g_target is not None:
                g_bits[cache.cond.target] += g_target
        if g_context is not None and cache.cond.context >= 0:
            g_bits[cache.cond.context] += g_context

    if sample_probs is None:
        return grads

    encoder_caches = {c.cond.target: c for c in caches if c.cond.side == "encoder"}
    for l in range(len(bits) - 1, -1, -1):
        cache = encoder_caches[l]
        p = sample_probs[l]
        h = bits[l]
        q_h = np.where(h > 0.5, p, 1.0 - p)
        inside = np.abs(cache.logits) < LOGIT_LIMIT
        dp_dlogit = clamped_sigmoid(cache.logits) * (1.0 - clamped_sigmoid(cache.logits)) * inside
        factor = dp_dlogit / (2.0 * q_h)
        g = g_bits[l]
        if cache.cond.autoregressive:
            # unit j's logit reads bits 1..j-1 of its own layer: sweep j downwards
            W_ar = params[f"{cache.cond.name}.W_ar"]
            g_logits = np.zeros_like(g)
            for j in range(g.shape[1] - 1, -1, -1):
                g_logits[:, j] = factor[:, j] * g[:, j]
                g[:, :j] += g_logits[:, j:j + 1] * W_ar[j, :j]
        else:
            g_logits = factor * g
        _, g_context = _backprop_logits(params, cache, g_logits, grads, include_ar_input=False)
        if l > 0:
            g_bits[l - 1] += g_context
    return grads


def _prepare(params: ModelParams, x, rep):
    arch = params.arch
    xb = _as_batch(x, arch.n_x, "x")
    bits = _rep_bits(arch, rep)
    if xb.shape[0] != bits[0].shape[0]:
        xb = np.broadcast_to(xb, (bits[0].shape[0], arch.n_x))
    return xb, bits


def backward(params: ModelParams, x, rep) -> GradientSet:
    """Single-sample stochastic gradient of the total description length.

    ``rep`` must come from ``sample_encoder`` for this ``x`` so that the
    sampling probabilities are recorded.  Batched inputs return the mean
    gradient over the batch.
    """
    if getattr(rep, "probs", None) is None:
        raise ValueError("backward needs a representation with recorded sampling probabilities")
    xb, bits = _prepare(params, x, rep)
    probs = _rep_bits(params.arch, rep.probs)
    if any(p.shape != b.shape for p, b in zip(probs, bits)):
        raise ValueError("recorded probabilities do not match the sampled bits")
    w = np.full(xb.shape[0], 1.0 / xb.shape[0])
    return _gradient_pass(params, xb, bits, w, w, sample_probs=probs)


def fixed_representation_grad(params: ModelParams, x, rep) -> GradientSet:
    """Exact gradient of the description length with the representation held fixed."""
    xb, bits = _prepare(params, x, rep)
    w = np.full(xb.shape[0], 1.0 / xb.shape[0])
    return _gradient_pass(params, xb, bits, w, w)


def exact_free_energy_grad(params: ModelParams, x, limit: int = MAX_ENUMERATION_BITS) -> GradientSet:
    """Analytic gradient of ``free_energy_exact`` by enumeration.

    Uses grad F = sum_h q(h) [(ln q - ln p + 1) grad ln q - grad ln p].
    """
    arch = params.arch
    xv = _as_batch(x, arch.n_x, "x")[0]
    total = zero_grads(params)
    for rep in enumerate_representations(arch, limit=limit):
        n = rep.bits[0].shape[0]
        xs = np.broadcast_to(xv, (n, arch.n_x))
        lq = encoder_log_prob(params, xs, rep)
        lp = joint_log_prob(params, xs, rep)
        q = np.exp(lq)
        grads = _gradient_pass(params, xs, list(rep.bits), q * (lq - lp + 1.0), q)
        for name in total:
            total[name] += grads[name]
    return total


def expected_backward(params: ModelParams, x, limit: int = MAX_ENUMERATION_BITS) -> GradientSet:
    """E_q[backward] computed exactly by enumerating every representation."""
    arch = params.arch
    xv = _as_batch(x, arch.n_x, "x")[0]
    total = zero_grads(params)
    for rep in enumerate_representations(arch, limit=limit):
        n = rep.bits[0].shape[0]
        xs = np.broadcast_to(xv, (n, arch.n_x))
        q = np.exp(encoder_log_prob(params, xs, rep))
        probs = _encoder_probs(params, xs, list(rep.bits))
        grads = _gradient_pass(params, xs, list(rep.bits), q, q, sample_probs=probs)
        for name in total:
            total[name] += grads[name]
    return total


def _encoder_probs(params: ModelParams, x: np.ndarray, bits: list[np.ndarray]) -> list[np.ndarray]:
    values = {-1: x, **dict(enumerate(bits))}
    return [clamped_sigmoid(cond_logits(params, c, values[c.target], values[c.context])[0])
            for c in encoder_conditionals(params.arch)]


def finite_diff_grad(params: ModelParams, x, epsilon: float = 1e-5, limit: int = 12,
                     objective: Callable[[ModelParams], float] | None = None) -> GradientSet:
    """Central differences of ``free_energy_exact`` (or ``objective``) per free parameter."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if objective is None:
        check_enumerable(params.arch, limit)
        objective = lambda p: free_energy_exact(p, x, limit=limit)
    grads = zero_grads(params)
    for name, shape in param_layout(params.arch):
        mask = block_mask(name, shape)
        base = params[name]
        for idx in np.ndindex(*shape):
            if mask is not None and not mask[idx]:
                continue
            plus, minus = base.copy(), base.copy()
            plus[idx] += epsilon
            minus[idx] -= epsilon
            f_plus = objective(params.with_blocks({name: plus}))
            f_minus = objective(params.with_blocks({name: minus}))
            grads[name][idx] = (f_plus - f_minus) / (2.0 * epsilon)
    return grads


def stochastic_unit_estimate(prob_one: float, h: int, df_dh: float) -> float:
    """Estimator of d E[f(H)] / d q(H=1) from one sample ``h``: df/dh / (2 q(h))."""
    q_h = prob_one if h else 1.0 - prob_one
    return df_dh / (2.0 * q_h)


def baseline_estimate(prob_one: float, h: int, f: Callable[[float], float],
                      df: Callable[[float], float], h_ref: float) -> float:
    """Score-function estimate of d E[f(H)] / d q(H=1) with a first-order Taylor
    baseline around ``h_ref``.  Unbiased for any ``h_ref`` when ``f`` is linear."""
    residual = f(h) - f(h_ref) - df(h_ref) * (h - h_ref)
    score = 1.0 / prob_one if h else -1.0 / (1.0 - prob_one)
    return residual * score + df(h_ref)


# --------------------------------------------------------------------------
# optimisation


@dataclass
class TrainConfig:
    learning_rate: float = 2.5e-4
    momentum: float = 0.9
    rms_decay: float = 0.95
    rms_epsilon: float = 1e-4
    minibatch: int = 100
    epochs: int = 100
    seed: int = 0
    early_stop_patience: int = 20
    init_scale: float = 0.01

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.minibatch < 1:
            raise ValueError("minibatch must be >= 1")


@dataclass
class OptimizerState:
    mean_sq: GradientSet
    step: GradientSet

    @classmethod
    def zeros(cls, params: ModelParams) -> "OptimizerState":
        return cls(zero_grads(params), zero_grads(params))


def rmsprop_step(params: ModelParams, state: OptimizerState, grads: Mapping[str, np.ndarray],
                 cfg: TrainConfig) -> tuple[ModelParams, OptimizerState]:
    """mean_sq <- r mean_sq + (1-r) g^2; step <- m step - lr g / sqrt(mean_sq + eps); param += step."""
    bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NumericError(f"non-finite gradient in blocks {bad}")
    new_blocks, mean_sq, steps = {}, {}, {}
    for name, value in params.blocks.items():
        g = grads[name]
        ms = cfg.rms_decay * state.mean_sq[name] + (1.0 - cfg.rms_decay) * g * g
        step = cfg.momentum * state.step[name] - cfg.learning_rate * g / np.sqrt(ms + cfg.rms_epsilon)
        mask = block_mask(name, value.shape)
        if mask is not None:
            step = np.where(mask, step, 0.0)
        mean_sq[name], steps[name] = ms, step
        new_blocks[name] = value + step
    return ModelParams(params.arch, new_blocks), OptimizerState(mean_sq, steps)


def mean_description_length(params: ModelParams, data: np.ndarray, rng: np.random.Generator,
                            batch: int = 4096) -> float:
    """One-sample Monte Carlo estimate of the mean expected description length."""
    totals = []
    for start in range(0, data.shape[0], batch):
        rows = data[start:start + batch]
        rep = sample_encoder(params, rows, rng)
        totals.append(description_length_terms(params, rows, rep).total)
    return float(np.mean(np.concatenate(totals)))


@dataclass
class EpochRecord:
    epoch: int
    train_nats: float
    val_nats: float
    seconds: float

    def line(self) -> str:
        return f"{self.epoch}\t{self.train_nats:.6f}\t{self.val_nats:.6f}\t{self.seconds:.3f}"


@dataclass
class TrainResult:
    params: ModelParams
    log: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    state: OptimizerState | None = None

    def log_text(self) -> str:
        return "".join(rec.line() + "\n" for rec in self.log)


def _check_dataset(data, n_x: int, what: str) -> np.ndarray:
    rows = np.asarray(getattr(data, "rows", data))
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise DataError(f"{what} is empty or not a matrix")
    if rows.shape[1] != n_x:
        raise DataError(f"{what} rows have length {rows.shape[1]}, architecture expects {n_x}")
    if np.any((rows != 0) & (rows != 1)):
        raise DataError(f"{what} contains non-binary entries")
    return rows.astype(np.float64)


def train(dataset, arch, cfg: TrainConfig, validation=None, params: ModelParams | None = None,
          log_stream=None, eval_samples: int = 1) -> TrainResult:
    """Minibatch RMSprop training with early stopping on validation description length.

    The validation objective averages ``eval_samples`` one-sample estimates
    per datum; without a validation set the training objective is used.
    """
    data = _check_dataset(dataset, arch.n_x, "dataset")
    val = None if validation is None else _check_dataset(validation, arch.n_x, "validation set")
    rng = make_rng(cfg.seed)
    eval_rng = make_rng(np.random.SeedSequence([cfg.seed, 1]))
    if params is None:
        params = init_params(arch, cfg.seed, cfg.init_scale)
    state = OptimizerState.zeros(params)
    best, best_score, best_epoch, stale = params, math.inf, 0, 0
    result = TrainResult(params)
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(data.shape[0])
        for i in range(0, data.shape[0], cfg.minibatch):
            rows = data[order[i:i + cfg.minibatch]]
            rep = sample_encoder(params, rows, rng)
            grads = backward(params, rows, rep)
            params, state = rmsprop_step(params, state, grads, cfg)
        train_nats = np.mean([mean_description_length(params, data, eval_rng) for _ in range(eval_samples)])
        val_nats = train_nats if val is None else np.mean(
            [mean_description_length(params, val, eval_rng) for _ in range(eval_samples)])
        record = EpochRecord(epoch, float(train_nats), float(val_nats), time.perf_counter() - start)
        result.log.append(record)
        if log_stream is not None:
            log_stream.write(record.line() + "\n")
            log_stream.flush()
        log.debug("epoch %d train %.4f val %.4f", epoch, train_nats, val_nats)
        if not np.isfinite(val_nats):
            raise NumericError(f"objective became non-finite at epoch {epoch}")
        if val_nats < best_score:
            best, best_score, best_epoch, stale = params, val_nats, epoch, 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    result.params, result.best_epoch, result.state = best, best_epoch, state
    return result


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)

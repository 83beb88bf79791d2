"""Independent scalar reference computations used as test oracles.

Nothing here reuses the vectorised code paths of the package: every
probability is built unit by unit with plain Python arithmetic.
"""
import itertools
import math

import numpy as np

from darn.model import EPS, Architecture, ModelParams, block_mask, param_layout


def random_params(arch: Architecture, seed: int, scale: float = 1.0, bias_scale: float = 1.0) -> ModelParams:
    """Uniform random weights and biases (init_params keeps biases at zero)."""
    rng = np.random.default_rng(seed)
    blocks = {}
    for name, shape in param_layout(arch):
        s = bias_scale if name.endswith(".b") else scale
        value = rng.uniform(-s, s, size=shape)
        mask = block_mask(name, shape)
        if mask is not None:
            value = np.where(mask, value, 0.0)
        blocks[name] = value
    return ModelParams(arch, blocks)


def _sigmoid(a):
    p = 1.0 / (1.0 + math.exp(-a)) if a >= 0 else math.exp(a) / (1.0 + math.exp(a))
    return min(max(p, EPS), 1.0 - EPS)


def _cond_prob(params, prefix, target, context, det, ar):
    """prod_j p(target_j | target_<j, context) for one conditional."""
    b = params[f"{prefix}.b"]
    d = None
    if context is not None:
        if det:
            U = params[f"{prefix}.U"]
            d = [math.tanh(sum(U[k, m] * context[m] for m in range(len(context)))) for k in range(det)]
        else:
            d = list(context)
    prob = 1.0
    for j in range(len(target)):
        a = b[j]
        if d is not None:
            W = params[f"{prefix}.W_ctx"]
            a += sum(W[j, k] * d[k] for k in range(len(d)))
        if ar:
            W = params[f"{prefix}.W_ar"]
            a += sum(W[j, i] * target[i] for i in range(j))
        p1 = _sigmoid(a)
        prob *= p1 if target[j] else 1.0 - p1
    return prob


def joint_prob(params: ModelParams, x, hs) -> float:
    arch = params.arch
    L = arch.n_layers
    prob = _cond_prob(params, f"dec.h{L - 1}", hs[L - 1], None, 0, arch.layers[L - 1].decoder_autoregressive)
    for l in range(L - 2, -1, -1):
        prob *= _cond_prob(params, f"dec.h{l}", hs[l], hs[l + 1], arch.layers[l + 1].det_width,
                           arch.layers[l].decoder_autoregressive)
    prob *= _cond_prob(params, "dec.x", x, hs[0], arch.layers[0].det_width, arch.visible_autoregressive)
    return prob


def encoder_prob(params: ModelParams, x, hs) -> float:
    arch = params.arch
    prob = 1.0
    for l, spec in enumerate(arch.layers):
        below = x if l == 0 else hs[l - 1]
        prob *= _cond_prob(params, f"enc.h{l}", hs[l], below, spec.det_width, spec.encoder_autoregressive)
    return prob


def all_reps(arch: Architecture):
    """Every representation as a list of per-layer tuples, plain counter order."""
    for flat in itertools.product((0, 1), repeat=arch.total_hidden):
        out, i = [], 0
        for spec in arch.layers:
            out.append(flat[i:i + spec.n_h])
            i += spec.n_h
        yield out


def all_patterns(n: int):
    return [tuple(p) for p in itertools.product((0, 1), repeat=n)]


def marginal_prob(params: ModelParams, x) -> float:
    return sum(joint_prob(params, x, hs) for hs in all_reps(params.arch))


def free_energy(params: ModelParams, x) -> float:
    total = 0.0
    for hs in all_reps(params.arch):
        q = encoder_prob(params, x, hs)
        total += q * (math.log(q) - math.log(joint_prob(params, x, hs)))
    return total

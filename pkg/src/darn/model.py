"""DARN architecture, parameters and exact log-probabilities.

Layer index 0 is the stochastic layer adjacent to the visibles, the last
layer is the deepest one.  Every conditional distribution in the model
(decoder prior, decoder layer conditionals, visible conditional and the
encoder conditionals) has the same shape::

    d      = tanh(U @ context)              # only when det_width > 0
    logit  = W_ctx @ d + W_ar @ target + b  # W_ar strictly lower triangular

so a single forward/backward routine serves all of them.  The deterministic
layer described by ``layers[l].det_width`` sits between stochastic layer
``l`` and the layer below it (the visibles for ``l == 0``), once on the
decoder side and once, with untied weights, on the encoder side.

All log-probabilities are in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.special import expit, log_expit

from .errors import DimensionError, EnumerationLimitError

EPS = 1e-7
# sigmoid(LOGIT_LIMIT) == 1 - EPS: clamping logits clamps probabilities to [EPS, 1 - EPS]
LOGIT_LIMIT = math.log((1.0 - EPS) / EPS)
MAX_ENUMERATION_BITS = 20


@dataclass(frozen=True)
class StochasticLayerSpec:
    n_h: int
    det_width: int = 0
    encoder_autoregressive: bool = False
    decoder_autoregressive: bool = True

    def __post_init__(self):
        if int(self.n_h) < 1:
            raise ValueError(f"n_h must be >= 1, got {self.n_h}")
        if int(self.det_width) < 0:
            raise ValueError(f"det_width must be >= 0, got {self.det_width}")


@dataclass(frozen=True)
class Architecture:
    n_x: int
    layers: tuple[StochasticLayerSpec, ...]
    visible_autoregressive: bool = False

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if int(self.n_x) < 1:
            raise ValueError(f"n_x must be >= 1, got {self.n_x}")
        if not self.layers:
            raise ValueError("an architecture needs at least one stochastic layer")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return tuple(spec.n_h for spec in self.layers)

    @property
    def total_hidden(self) -> int:
        return sum(self.layer_sizes)

    @classmethod
    def single(cls, n_x: int, n_h: int, det_width: int = 0, visible_autoregressive: bool = False,
               encoder_autoregressive: bool = False, decoder_autoregressive: bool = True) -> "Architecture":
        spec = StochasticLayerSpec(n_h, det_width, encoder_autoregressive, decoder_autoregressive)
        return cls(n_x, (spec,), visible_autoregressive)


@dataclass(frozen=True)
class Conditional:
    """One conditional distribution of the model.

    ``target`` and ``context`` are layer indices with ``-1`` standing for the
    visibles; ``context is None`` marks the top-level prior.
    """
    name: str
    side: str
    target: int
    context: int | None
    n: int
    n_context: int
    det_width: int
    autoregressive: bool

    def block_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes = []
        if self.context is not None:
            if self.det_width:
                shapes.append(("U", (self.det_width, self.n_context)))
            shapes.append(("W_ctx", (self.n, self.det_width or self.n_context)))
        if self.autoregressive:
            shapes.append(("W_ar", (self.n, self.n)))
        shapes.append(("b", (self.n,)))
        return shapes


def decoder_conditionals(arch: Architecture) -> list[Conditional]:
    """Decoder conditionals in sampling order: deepest layer first, visibles last."""
    conds = []
    top = arch.n_layers - 1
    for l in range(top, -1, -1):
        spec = arch.layers[l]
        if l == top:
            conds.append(Conditional(f"dec.h{l}", "decoder", l, None, spec.n_h, 0, 0,
                                     spec.decoder_autoregressive))
        else:
            above = arch.layers[l + 1]
            conds.append(Conditional(f"dec.h{l}", "decoder", l, l + 1, spec.n_h, above.n_h,
                                     above.det_width, spec.decoder_autoregressive))
    conds.append(Conditional("dec.x", "decoder", -1, 0, arch.n_x, arch.layers[0].n_h,
                             arch.layers[0].det_width, arch.visible_autoregressive))
    return conds


def encoder_conditionals(arch: Architecture) -> list[Conditional]:
    """Encoder conditionals in sampling order: bottom layer first."""
    conds = []
    for l, spec in enumerate(arch.layers):
        n_context = arch.n_x if l == 0 else arch.layers[l - 1].n_h
        conds.append(Conditional(f"enc.h{l}", "encoder", l, l - 1, spec.n_h, n_context,
                                 spec.det_width, spec.encoder_autoregressive))
    return conds


def param_layout(arch: Architecture) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) order of every parameter block."""
    layout = []
    for cond in decoder_conditionals(arch) + encoder_conditionals(arch):
        layout.extend((f"{cond.name}.{key}", shape) for key, shape in cond.block_shapes())
    return layout


def block_mask(name: str, shape: tuple[int, ...]) -> np.ndarray | None:
    """Strictly-lower-triangular mask for autoregressive blocks, None otherwise."""
    if name.endswith(".W_ar"):
        return np.tril(np.ones(shape, dtype=bool), k=-1)
    return None


def check_params(arch: Architecture, blocks: Mapping[str, np.ndarray]) -> None:
    """Raise DimensionError unless ``blocks`` is a valid parameter set for ``arch``."""
    layout = param_layout(arch)
    expected = {name for name, _ in layout}
    extra = set(blocks) - expected
    missing = expected - set(blocks)
    if extra or missing:
        raise DimensionError(f"parameter blocks do not match architecture "
                             f"(missing={sorted(missing)}, unexpected={sorted(extra)})")
    for name, shape in layout:
        value = np.asarray(blocks[name])
        if value.shape != shape:
            raise DimensionError(f"{name}: expected shape {shape}, got {value.shape}")
        mask = block_mask(name, shape)
        if mask is not None and np.any(value[~mask] != 0):
            raise DimensionError(f"{name}: entries on or above the diagonal must be zero")


def shapes_match(arch: Architecture, blocks: Mapping[str, np.ndarray]) -> bool:
    try:
        check_params(arch, blocks)
    except DimensionError:
        return False
    return True


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Immutable parameter set; ``blocks`` maps canonical names to float64 arrays."""
    arch: Architecture
    blocks: Mapping[str, np.ndarray]

    def __post_init__(self):
        check_params(self.arch, self.blocks)
        frozen = {}
        for name, _ in param_layout(self.arch):
            value = np.array(self.blocks[name], dtype=np.float64, copy=True)
            value.flags.writeable = False
            frozen[name] = value
        object.__setattr__(self, "blocks", frozen)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.blocks[name]

    def get(self, name: str) -> np.ndarray | None:
        return self.blocks.get(name)

    def names(self) -> list[str]:
        return list(self.blocks)

    def replace(self, **updates: np.ndarray) -> "ModelParams":
        """Copy with some blocks replaced; keys use ``__`` in place of ``.``."""
        return self.with_blocks({k.replace("__", "."): v for k, v in updates.items()})

    def with_blocks(self, updates: Mapping[str, np.ndarray]) -> "ModelParams":
        blocks = dict(self.blocks)
        blocks.update(updates)
        return ModelParams(self.arch, blocks)

    def num_parameters(self, free_only: bool = True) -> int:
        total = 0
        for name, value in self.blocks.items():
            mask = block_mask(name, value.shape)
            total += int(mask.sum()) if (mask is not None and free_only) else value.size
        return total

    def equals(self, other: "ModelParams") -> bool:
        """Bit-exact equality of architecture and every block."""
        if self.arch != other.arch:
            return False
        return all(self.blocks[k].tobytes() == other.blocks[k].tobytes() for k in self.blocks)


def zero_params(arch: Architecture) -> ModelParams:
    return ModelParams(arch, {name: np.zeros(shape) for name, shape in param_layout(arch)})


def init_params(arch: Architecture, seed: int, scale: float) -> ModelParams:
    """Weights i.i.d. uniform in [-scale, scale] from PCG64(seed); biases zero."""
    if scale < 0:
        raise ValueError(f"scale must be >= 0, got {scale}")
    rng = np.random.Generator(np.random.PCG64(seed))
    blocks = {}
    for name, shape in param_layout(arch):
        if name.endswith(".b"):
            blocks[name] = np.zeros(shape)
            continue
        value = rng.uniform(-scale, scale, size=shape) if scale > 0 else np.zeros(shape)
        mask = block_mask(name, shape)
        if mask is not None:
            value = np.where(mask, value, 0.0)
        blocks[name] = value
    return ModelParams(arch, blocks)


@dataclass(frozen=True, eq=False)
class Representation:
    """Binary activations of every stochastic layer, optionally batched.

    ``bits[l]`` has shape ``(n_h,)`` or ``(batch, n_h)``.  ``probs[l]`` holds
    the Bernoulli success probabilities the bits were drawn from, or is
    ``None`` when the representation was not produced by a sampler.
    """
    bits: tuple[np.ndarray, ...]
    probs: tuple[np.ndarray, ...] | None = field(default=None)

    def __post_init__(self):
        bits = tuple(np.asarray(b, dtype=np.float64) for b in self.bits)
        object.__setattr__(self, "bits", bits)
        if self.probs is not None:
            probs = tuple(np.asarray(p, dtype=np.float64) for p in self.probs)
            if len(probs) != len(bits) or any(p.shape != b.shape for p, b in zip(probs, bits)):
                raise DimensionError("probs must match bits layer by layer")
            object.__setattr__(self, "probs", probs)
        for b in bits:
            if np.any((b != 0) & (b != 1)):
                raise ValueError("representation bits must be 0 or 1")

    @property
    def n_layers(self) -> int:
        return len(self.bits)

    def flat(self) -> np.ndarray:
        return np.concatenate(self.bits, axis=-1)

    @classmethod
    def from_flat(cls, arch: Architecture, flat: np.ndarray, probs: np.ndarray | None = None
                  ) -> "Representation":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape[-1] != arch.total_hidden:
            raise DimensionError(f"expected {arch.total_hidden} representation bits, got {flat.shape[-1]}")
        cuts = np.cumsum(arch.layer_sizes)[:-1]
        bits = tuple(np.split(flat, cuts, axis=-1))
        split_probs = None if probs is None else tuple(np.split(np.asarray(probs), cuts, axis=-1))
        return cls(bits, split_probs)


# --------------------------------------------------------------------------
# vectorised evaluation helpers


def clamp_logits(logits: np.ndarray) -> np.ndarray:
    return np.clip(logits, -LOGIT_LIMIT, LOGIT_LIMIT)


def clamped_sigmoid(logits: np.ndarray) -> np.ndarray:
    return np.clip(expit(clamp_logits(logits)), EPS, 1.0 - EPS)


def bernoulli_log_prob(bits: np.ndarray, logits: np.ndarray) -> np.ndarray:
    """Elementwise ln p(bits) under clamped sigmoid probabilities."""
    lc = clamp_logits(logits)
    return bits * log_expit(lc) + (1.0 - bits) * log_expit(-lc)


def cond_logits(params: ModelParams, cond: Conditional, target: np.ndarray,
                context: np.ndarray | None) -> tuple[np.ndarray, np.ndarray | None]:
    """Logits for a batch of targets ``(B, n)``; also returns the tanh layer output."""
    prefix = cond.name
    logits = np.broadcast_to(params[f"{prefix}.b"], target.shape).copy()
    d = None
    if cond.context is not None:
        if cond.det_width:
            d = np.tanh(context @ params[f"{prefix}.U"].T)
        else:
            d = context
        logits += d @ params[f"{prefix}.W_ctx"].T
    if cond.autoregressive:
        logits += target @ params[f"{prefix}.W_ar"].T
    return logits, d


def cond_log_prob(params: ModelParams, cond: Conditional, target: np.ndarray,
                  context: np.ndarray | None) -> np.ndarray:
    logits, _ = cond_logits(params, cond, target, context)
    return bernoulli_log_prob(target, logits).sum(axis=-1)


def _as_batch(v, n: int, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim not in (1, 2) or v.shape[-1] != n:
        raise DimensionError(f"{what}: expected length {n}, got shape {v.shape}")
    return np.atleast_2d(v)


def _unbatch(value: np.ndarray, batched: bool):
    return value if batched else float(value[0])


def _rep_bits(arch: Architecture, rep) -> list[np.ndarray]:
    bits = rep.bits if isinstance(rep, Representation) else tuple(rep)
    if len(bits) != arch.n_layers:
        raise DimensionError(f"expected {arch.n_layers} representation layers, got {len(bits)}")
    return [_as_batch(b, spec.n_h, f"layer {l}") for l, (b, spec) in enumerate(zip(bits, arch.layers))]


def _layer_values(arch: Architecture, x: np.ndarray, bits: Sequence[np.ndarray], index: int) -> np.ndarray:
    return x if index == -1 else bits[index]


# --------------------------------------------------------------------------
# public log-probability operations


def prior_log_prob(params: ModelParams, h_top) -> float | np.ndarray:
    """ln p(h) of the deepest stochastic layer under the autoregressive prior."""
    arch = params.arch
    top = arch.n_layers - 1
    h = _as_batch(h_top, arch.layers[top].n_h, "h_top")
    cond = decoder_conditionals(arch)[0]
    return _unbatch(cond_log_prob(params, cond, h, None), np.ndim(h_top) == 2)


def layer_cond_log_prob(params: ModelParams, layer: int, bits, context, side: str) -> float | np.ndarray:
    """ln p(bits | context) of stochastic layer ``layer`` on one side of the model.

    Decoder: ``context`` is the layer above (ignored for the deepest layer,
    whose conditional is the prior).  Encoder: ``context`` is the layer below,
    or the visibles for layer 0.
    """
    arch = params.arch
    if not 0 <= layer < arch.n_layers:
        raise DimensionError(f"layer index {layer} out of range for {arch.n_layers} layers")
    if side == "decoder":
        cond = decoder_conditionals(arch)[arch.n_layers - 1 - layer]
    elif side == "encoder":
        cond = encoder_conditionals(arch)[layer]
    else:
        raise ValueError(f"unknown side {side!r}; expected 'encoder' or 'decoder'")
    target = _as_batch(bits, cond.n, "bits")
    ctx = None
    if cond.context is not None:
        ctx = _as_batch(context, cond.n_context, "context")
    return _unbatch(cond_log_prob(params, cond, target, ctx), np.ndim(bits) == 2)


def visible_log_prob(params: ModelParams, x, h_bottom) -> float | np.ndarray:
    """ln p(x | h) for the visible layer given the bottom stochastic layer."""
    arch = params.arch
    cond = decoder_conditionals(arch)[-1]
    xb = _as_batch(x, arch.n_x, "x")
    hb = _as_batch(h_bottom, arch.layers[0].n_h, "h_bottom")
    return _unbatch(cond_log_prob(params, cond, xb, hb), np.ndim(x) == 2 or np.ndim(h_bottom) == 2)


def decoder_terms(params: ModelParams, x, rep) -> dict[str, np.ndarray]:
    """Per-conditional decoder log-probabilities, batched, keyed by conditional name."""
    arch = params.arch
    xb = _as_batch(x, arch.n_x, "x")
    bits = _rep_bits(arch, rep)
    out = {}
    for cond in decoder_conditionals(arch):
        target = _layer_values(arch, xb, bits, cond.target)
        ctx = None if cond.context is None else _layer_values(arch, xb, bits, cond.context)
        out[cond.name] = cond_log_prob(params, cond, target, ctx)
    return out


def encoder_terms(params: ModelParams, x, rep) -> dict[str, np.ndarray]:
    arch = params.arch
    xb = _as_batch(x, arch.n_x, "x")
    bits = _rep_bits(arch, rep)
    out = {}
    for cond in encoder_conditionals(arch):
        out[cond.name] = cond_log_prob(params, cond, bits[cond.target],
                                       _layer_values(arch, xb, bits, cond.context))
    return out


def _is_batched(x, rep) -> bool:
    bits = rep.bits if isinstance(rep, Representation) else rep
    return np.ndim(x) == 2 or any(np.ndim(b) == 2 for b in bits)


def joint_log_prob(params: ModelParams, x, rep) -> float | np.ndarray:
    """ln p(x, h): prior + every lower decoder layer + the visible conditional."""
    terms = decoder_terms(params, x, rep)
    return _unbatch(sum(terms.values()), _is_batched(x, rep))


def encoder_log_prob(params: ModelParams, x, rep) -> float | np.ndarray:
    """ln q(h | x), accumulated bottom-up over the encoder chain."""
    terms = encoder_terms(params, x, rep)
    return _unbatch(sum(terms.values()), _is_batched(x, rep))


# --------------------------------------------------------------------------
# enumeration


def check_enumerable(arch: Architecture, limit: int = MAX_ENUMERATION_BITS) -> None:
    if arch.total_hidden > limit:
        raise EnumerationLimitError(
            f"exact enumeration needs 2^{arch.total_hidden} representations; "
            f"limit is {limit} hidden units in total")


def binary_patterns(n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows ``start..stop`` of a binary counter over ``n`` bits, most significant bit first."""
    stop = 2 ** n if stop is None else stop
    codes = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).astype(np.float64)


def enumerate_representations(arch: Architecture, chunk: int = 1 << 14,
                              limit: int = MAX_ENUMERATION_BITS) -> Iterator[Representation]:
    """Every representation of ``arch`` in binary-counter order, in batched chunks."""
    check_enumerable(arch, limit)
    n = arch.total_hidden
    total = 2 ** n
    for start in range(0, total, chunk):
        yield Representation.from_flat(arch, binary_patterns(n, start, min(total, start + chunk)))

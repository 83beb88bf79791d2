import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from darn.errors import DimensionError
from darn.model import (EPS, Architecture, Representation, StochasticLayerSpec,
                        check_params, encoder_log_prob, init_params, joint_log_prob,
                        layer_cond_log_prob, param_layout, prior_log_prob, shapes_match,
                        visible_log_prob, zero_params)
from oracles import all_patterns, all_reps, encoder_prob, joint_prob, random_params

LN2 = math.log(2.0)


def test_architecture_rejects_degenerate_sizes():
    with pytest.raises(ValueError):
        StochasticLayerSpec(0)
    with pytest.raises(ValueError):
        Architecture(0, (StochasticLayerSpec(2),))
    with pytest.raises(ValueError):
        Architecture(3, ())


def test_init_params_zero_scale_is_all_zero(tiny_arch):
    params = init_params(tiny_arch, seed=7, scale=0.0)
    assert all(np.all(v == 0) for v in params.blocks.values())


def test_init_params_is_deterministic(tiny_arch):
    a = init_params(tiny_arch, seed=7, scale=0.1)
    b = init_params(tiny_arch, seed=7, scale=0.1)
    assert a.equals(b)


def test_init_params_differs_between_seeds(tiny_arch):
    a = init_params(tiny_arch, seed=7, scale=0.1)
    b = init_params(tiny_arch, seed=8, scale=0.1)
    serial = lambda p: b"".join(p[n].tobytes() for n in p.names())
    assert serial(a) != serial(b)


def test_init_params_respects_masks(deep_arch):
    params = init_params(deep_arch, seed=3, scale=1.0)
    for name in params.names():
        if name.endswith("W_ar"):
            assert np.all(np.triu(params[name]) == 0)
        if name.endswith(".b"):
            assert np.all(params[name] == 0)


def test_negative_scale_rejected(tiny_arch):
    with pytest.raises(ValueError):
        init_params(tiny_arch, 0, -1.0)


def test_shape_check_accepts_and_rejects(deep_arch):
    params = init_params(deep_arch, 0, 0.5)
    assert shapes_match(deep_arch, params.blocks)
    other = Architecture.single(4, 2)
    assert not shapes_match(other, params.blocks)
    bad = dict(params.blocks)
    bad["dec.x.b"] = np.zeros(5)
    with pytest.raises(DimensionError):
        check_params(deep_arch, bad)
    upper = dict(params.blocks)
    w = np.array(upper["dec.x.W_ar"])
    w[0, 1] = 1.0
    upper["dec.x.W_ar"] = w
    assert not shapes_match(deep_arch, upper)


def test_encoder_without_autoregression_has_no_within_layer_weights():
    arch = Architecture.single(3, 2)
    names = [n for n, _ in param_layout(arch)]
    assert "enc.h0.W_ar" not in names
    assert "dec.h0.W_ar" in names


def test_params_are_immutable(tiny_arch):
    params = init_params(tiny_arch, 0, 0.1)
    with pytest.raises(ValueError):
        params["dec.x.b"][0] = 1.0


def test_prior_zero_params():
    arch = Architecture.single(2, 3)
    for h in all_patterns(3):
        assert prior_log_prob(zero_params(arch), h) == pytest.approx(-3 * LN2, abs=1e-12)


def test_prior_hand_example():
    arch = Architecture.single(1, 2)
    params = zero_params(arch).with_blocks({"dec.h0.W_ar": np.array([[0.0, 0.0], [2.0, 0.0]])})
    expected = math.log(0.5) + math.log(1 / (1 + math.exp(-2)))
    assert prior_log_prob(params, [1, 1]) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-0.8201, abs=1e-4)
    assert prior_log_prob(params, [0, 0]) == pytest.approx(2 * math.log(0.5), abs=1e-12)


def test_prior_dimension_mismatch():
    params = zero_params(Architecture.single(2, 3))
    with pytest.raises(DimensionError):
        prior_log_prob(params, [1, 0])


def test_layer_cond_zero_params():
    arch = Architecture(2, (StochasticLayerSpec(4), StochasticLayerSpec(3)))
    params = zero_params(arch)
    bits = [1, 0, 1, 1]
    assert layer_cond_log_prob(params, 0, bits, [1, 0, 1], "decoder") == pytest.approx(-4 * LN2)
    assert layer_cond_log_prob(params, 0, bits, [0, 1], "encoder") == pytest.approx(-4 * LN2)


def test_layer_cond_tanh_chain():
    arch = Architecture(2, (StochasticLayerSpec(1), StochasticLayerSpec(1, det_width=1)))
    params = zero_params(arch).with_blocks({"dec.h0.U": np.array([[1.0]]), "dec.h0.W_ctx": np.array([[1.0]])})
    expected = math.log(1 / (1 + math.exp(-math.tanh(1.0))))
    assert math.exp(expected) == pytest.approx(0.68170, abs=1e-5)
    assert layer_cond_log_prob(params, 0, [1], [1], "decoder") == pytest.approx(expected, abs=1e-12)


def test_layer_cond_unknown_side_and_bad_shapes(tiny_arch):
    params = zero_params(tiny_arch)
    with pytest.raises(ValueError):
        layer_cond_log_prob(params, 0, [1, 0], [1, 0, 0], "sideways")
    with pytest.raises(DimensionError):
        layer_cond_log_prob(params, 0, [1, 0], [1, 0], "encoder")
    with pytest.raises(DimensionError):
        layer_cond_log_prob(params, 3, [1, 0], [1, 0, 0], "encoder")


def test_encoder_without_autoregression_ignores_own_layer_order():
    arch = Architecture.single(3, 4)
    params = random_params(arch, 5)
    x = [1, 0, 1]
    # each unit's conditional reads x only, so the log-prob is a sum of per-unit terms
    base = layer_cond_log_prob(params, 0, [1, 1, 0, 0], x, "encoder")
    swapped = layer_cond_log_prob(params, 0, [1, 1, 0, 0][::-1], x, "encoder")
    singles = [layer_cond_log_prob(params, 0, v, x, "encoder") for v in ([1, 0, 0, 0], [0, 0, 0, 0])]
    assert base != swapped
    logits = params["enc.h0.W_ctx"] @ np.array(x, float) + params["enc.h0.b"]
    per_unit = np.where([1, 1, 0, 0], -np.log1p(np.exp(-logits)), -np.log1p(np.exp(logits)))
    assert base == pytest.approx(per_unit.sum(), abs=1e-12)
    assert singles[0] - singles[1] == pytest.approx(logits[0], abs=1e-12)


def test_joint_zero_params(tiny_arch):
    params = zero_params(tiny_arch)
    assert joint_log_prob(params, [1, 0, 1], Representation(([0, 1],))) == pytest.approx(-5 * LN2)


def test_joint_is_sum_of_terms(deep_arch):
    params = random_params(deep_arch, 2)
    x = np.array([1, 0, 0, 1])
    h0, h1 = np.array([1, 0]), np.array([0, 1, 1])
    total = (prior_log_prob(params, h1) + layer_cond_log_prob(params, 0, h0, h1, "decoder")
             + visible_log_prob(params, x, h0))
    assert joint_log_prob(params, x, Representation((h0, h1))) == pytest.approx(total, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_joint_and_encoder_match_scalar_oracle(deep_arch, seed):
    params = random_params(deep_arch, seed, scale=1.5)
    rng = np.random.default_rng(seed)
    for _ in range(5):
        x = tuple(rng.integers(0, 2, 4))
        hs = [tuple(rng.integers(0, 2, 2)), tuple(rng.integers(0, 2, 3))]
        rep = Representation(tuple(np.array(h) for h in hs))
        assert joint_log_prob(params, x, rep) == pytest.approx(math.log(joint_prob(params, x, hs)), abs=1e-12)
        assert encoder_log_prob(params, x, rep) == pytest.approx(math.log(encoder_prob(params, x, hs)), abs=1e-12)


def test_encoder_zero_params_any_x(deep_arch):
    params = zero_params(deep_arch)
    for x in all_patterns(4):
        rep = Representation((np.array([1, 1]), np.array([0, 1, 0])))
        assert encoder_log_prob(params, x, rep) == pytest.approx(-5 * LN2, abs=1e-15)


def test_batched_matches_single(deep_arch):
    params = random_params(deep_arch, 9)
    xs = np.array(all_patterns(4), dtype=float)
    rng = np.random.default_rng(0)
    h0 = rng.integers(0, 2, (16, 2))
    h1 = rng.integers(0, 2, (16, 3))
    batch = joint_log_prob(params, xs, Representation((h0, h1)))
    singles = [joint_log_prob(params, xs[i], Representation((h0[i], h1[i]))) for i in range(16)]
    np.testing.assert_allclose(batch, singles, atol=1e-13)


def _joint_table(params):
    arch = params.arch
    return np.array([[joint_log_prob(params, x, Representation(tuple(np.array(h) for h in hs)))
                      for hs in all_reps(arch)] for x in all_patterns(arch.n_x)])


@pytest.mark.parametrize("seed", range(3))
def test_joint_normalises(deep_arch, seed):
    params = random_params(deep_arch, seed, scale=2.0)
    assert np.exp(_joint_table(params)).sum() == pytest.approx(1.0, abs=1e-9)


def test_saturated_logits_stay_finite():
    arch = Architecture.single(2, 2, visible_autoregressive=True)
    params = random_params(arch, 0, scale=500.0, bias_scale=500.0)
    table = _joint_table(params)
    assert np.all(np.isfinite(table))
    assert table.min() >= 4 * math.log(EPS) - 1e-9
    assert np.exp(table).sum() == pytest.approx(1.0, abs=1e-9)


@st.composite
def architectures(draw, max_bits=8):
    n_x = draw(st.integers(1, 3))
    n_layers = draw(st.integers(1, 2))
    layers = []
    for _ in range(n_layers):
        layers.append(StochasticLayerSpec(draw(st.integers(1, 2)), draw(st.integers(0, 2)),
                                          draw(st.booleans()), draw(st.booleans())))
    return Architecture(n_x, tuple(layers), draw(st.booleans()))


@settings(max_examples=25, deadline=None)
@given(architectures(), st.integers(0, 2 ** 32 - 1))
def test_normalisation_property(arch, seed):
    params = random_params(arch, seed, scale=2.0)
    assert np.exp(_joint_table(params)).sum() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(architectures(), st.integers(0, 2 ** 32 - 1), st.data())
def test_triangularity_property(arch, seed, data):
    """Flipping bit j of a layer never changes the conditionals of bits 1..j."""
    from darn.model import clamped_sigmoid, cond_logits, decoder_conditionals, encoder_conditionals
    params = random_params(arch, seed, scale=2.0)
    conds = decoder_conditionals(arch) + encoder_conditionals(arch)
    cond = data.draw(st.sampled_from(conds))
    target = np.array([data.draw(st.integers(0, 1)) for _ in range(cond.n)], dtype=float)[None]
    context = None
    if cond.context is not None:
        context = np.array([data.draw(st.integers(0, 1)) for _ in range(cond.n_context)], dtype=float)[None]
    j = data.draw(st.integers(0, cond.n - 1))
    flipped = target.copy()
    flipped[0, j] = 1 - flipped[0, j]
    p = clamped_sigmoid(cond_logits(params, cond, target, context)[0])
    q = clamped_sigmoid(cond_logits(params, cond, flipped, context)[0])
    np.testing.assert_array_equal(p[0, :j + 1], q[0, :j + 1])


def test_representation_validation():
    with pytest.raises(ValueError):
        Representation((np.array([0, 2]),))
    with pytest.raises(DimensionError):
        Representation((np.array([0, 1]),), (np.array([0.5]),))
    arch = Architecture(2, (StochasticLayerSpec(2), StochasticLayerSpec(1)))
    rep = Representation.from_flat(arch, np.array([1, 0, 1]))
    assert [b.tolist() for b in rep.bits] == [[1, 0], [1]]

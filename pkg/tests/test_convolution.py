import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaconv_srl import autograd as ag
from adaconv_srl.autograd import Parameter, ShapeError, finite_difference_check
from adaconv_srl.config import ConfigError, TrainConfig
from adaconv_srl.convolution import (ConvBlock, ConvBlockConfig, ConvStack, adaptive_convolve,
                                     block_layout, conv_max_pool, max_pool_over_time, param_count,
                                     pad_to_window)
from adaconv_srl.params import ParamStore

from conftest import SEEDS


def conv_oracle(X, filters, s):
    """Triple loop: windows j, filters i, taps t."""
    m, d = X.shape
    out = np.zeros((m - s + 1, len(filters)))
    for j in range(m - s + 1):
        for i, f in enumerate(filters):
            acc = 0.0
            for t in range(s * d):
                acc += f[t] * X[j + t // d, t % d]
            out[j, i] = max(acc, 0.0)
    return out


def test_all_ones_window():
    out = adaptive_convolve(ag.constant(np.ones((5, 2))), ag.constant(np.ones((3, 6))), 3).value
    assert out.shape == (3, 3) and (out == 6).all()


def test_single_window_when_m_equals_s():
    assert adaptive_convolve(ag.constant(np.ones((3, 2))), ag.constant(np.ones((1, 6))), 3).shape == (1, 1)


@pytest.mark.parametrize("seed", SEEDS)
def test_convolution_matches_triple_loop(seed):
    rng = np.random.default_rng(seed)
    d, s, n = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    X = rng.normal(size=(int(rng.integers(s, 9)), d))
    F = rng.normal(size=(n, s * d))
    np.testing.assert_allclose(adaptive_convolve(ag.constant(X), ag.constant(F), s).value,
                               conv_oracle(X, F, s), atol=1e-12, rtol=0)


def test_filter_length_mismatch():
    with pytest.raises(ShapeError):
        adaptive_convolve(ag.constant(np.ones((4, 2))), ag.constant(np.ones((2, 5))), 3)


def test_max_pool_examples():
    one = np.array([[1.0, -2.0, 3.0]])
    np.testing.assert_array_equal(max_pool_over_time(ag.constant(one)).value, one[0])
    two = np.array([[1.0, 5.0, 3.0], [4.0, 2.0, 3.0]])
    np.testing.assert_array_equal(max_pool_over_time(ag.constant(two)).value, [4, 5, 3])
    with pytest.raises(ShapeError):
        max_pool_over_time(ag.constant(np.zeros((0, 3))))


def test_max_pool_gradient_goes_to_first_argmax():
    p = Parameter("p", np.array([[1.0, 5.0, 3.0], [4.0, 2.0, 3.0]]))
    with ag.Tape() as tape:
        loss = ag.sum(max_pool_over_time(ag.param(p)))
    ag.backward(loss, tape)
    np.testing.assert_array_equal(p.grad, [[0, 1, 1], [1, 0, 0]])
    # away from ties the subgradient is the true derivative
    q = Parameter("q", np.array([[1.0, 5.0, 3.5], [4.0, 2.0, 3.0]]))
    assert finite_difference_check(lambda: ag.sum(max_pool_over_time(ag.param(q))), [q]) <= 1e-9


@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_adding_a_row_never_lowers_the_pool(rows, cols, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(rows, cols))
    extra = np.vstack([A, rng.normal(size=(1, cols))])
    assert (max_pool_over_time(ag.constant(extra)).value >= max_pool_over_time(ag.constant(A)).value).all()


def test_fused_conv_pool_matches_unfused():
    rng = np.random.default_rng(0)
    F, X = rng.normal(size=(4, 3, 6)), rng.normal(size=(5, 2))
    windows = ag.unfold(ag.constant(X), 3)
    fused = conv_max_pool(ag.constant(F), windows).value
    for k in range(4):
        ref = np.max(windows.value @ F[k].T, axis=0)
        np.testing.assert_allclose(fused[k], ref, atol=1e-14)


# --------------------------------------------------------------------------
# blocks and stacks
# --------------------------------------------------------------------------


def _cfg(**kw):
    base = dict(groups=[(2, 3)], pool_size=3, importance=2, hash_seed=5)
    base.update(kw)
    return ConvBlockConfig(**base)


def test_block_shape_example():
    block = ConvBlock(ParamStore(0), "b", 4, [(2, 3)], _cfg(), 0)
    assert block(ag.constant(np.ones((4, 4)))).shape == (4, 2)


def test_cnn_default_groups_give_300_columns():
    cfg = ConvBlockConfig()
    stack = ConvStack(ParamStore(0, 0.01), 8, cfg)
    assert stack(ag.constant(np.random.default_rng(0).normal(size=(6, 8)))).shape == (6, 300)


@pytest.mark.parametrize("seed", SEEDS[:8])
def test_input_independent_filters_equal_static_oracle(seed):
    rng = np.random.default_rng(seed)
    m, d, n, s = int(rng.integers(3, 8)), 3, 2, 3
    block = ConvBlock(ParamStore(seed), "b", d, [(n, s)], _cfg(), 0)
    bank = rng.normal(size=(n, s * d))
    block.generators[0] = lambda C: ag.constant(np.broadcast_to(bank, (C.shape[0], n, s * d)).copy())
    X = rng.normal(size=(m, d))
    out = block(ag.constant(X)).value
    expect = conv_oracle(X, bank, s).max(axis=0)
    for row in out:
        np.testing.assert_allclose(row, expect, atol=1e-12, rtol=0)


def test_short_sequences_are_padded_symmetrically():
    X = ag.constant(np.ones((2, 1)))
    padded = pad_to_window(X, 5).value[:, 0]
    np.testing.assert_array_equal(padded, [0, 1, 1, 0, 0])
    assert pad_to_window(X, 2) is X


VARIANT_CASES = list(itertools.product(["cnn", "dpcnn", "densecnn"], ["full", "hashed"],
                                       ["per_position", "per_sentence"]))


@pytest.mark.parametrize("variant,generation,mode", VARIANT_CASES)
def test_output_is_m_by_n_total(variant, generation, mode):
    groups = [(2, 2), (3, 4)] if variant == "cnn" else [(3, 3)]
    cfg = _cfg(variant=variant, groups=groups, depth=2, generation=generation, context_mode=mode,
               pad_length=20)
    stack = ConvStack(ParamStore(1), 4, cfg)
    rng = np.random.default_rng(0)
    for m in range(1, 21):
        assert stack(ag.constant(rng.normal(size=(m, 4)))).shape == (m, stack.n_out)


def test_static_mode_shape():
    stack = ConvStack(ParamStore(1), 4, _cfg(groups=[(2, 2), (3, 5)], generation="static"))
    for m in (1, 2, 7):
        assert stack(ag.constant(np.ones((m, 4)))).shape == (m, 5)


@pytest.mark.parametrize("variant", ["cnn", "densecnn"])
def test_depth_one_stack_is_one_block(variant):
    cfg = _cfg(variant=variant, depth=1, pad_length=0)
    stack = ConvStack(ParamStore(2), 3, cfg)
    X = ag.constant(np.random.default_rng(1).normal(size=(5, 3)))
    np.testing.assert_array_equal(stack(X).value, stack.blocks[0](X).value)


def test_dpcnn_depth_one_is_block_plus_shortcut():
    stack = ConvStack(ParamStore(2), 3, _cfg(variant="dpcnn", depth=1))
    X = np.random.default_rng(1).normal(size=(5, 3))
    expect = stack.blocks[0](ag.constant(X)).value + X @ stack.shortcut.value.T
    np.testing.assert_allclose(stack(ag.constant(X)).value, expect, atol=1e-14)


def test_dpcnn_zero_conv_leaves_residual_path():
    store = ParamStore(3)
    stack = ConvStack(store, 3, _cfg(variant="dpcnn", depth=2))
    for t in stack.generator_tensors:
        t.value[...] = 0.0
    X = np.random.default_rng(1).normal(size=(4, 3))
    np.testing.assert_allclose(stack(ag.constant(X)).value, X @ stack.shortcut.value.T, atol=1e-14)


def test_densecnn_widths():
    layout = block_layout(ConvBlockConfig(variant="densecnn", groups=[(75, 3)], depth=3), 10)
    assert [w for w, _ in layout] == [10, 85, 160]


def test_densecnn_pads_to_fixed_length():
    stack = ConvStack(ParamStore(0), 3, _cfg(variant="densecnn", depth=2, pad_length=9))
    rng = np.random.default_rng(0)
    H = rng.normal(size=(4, 3))
    out = stack(ag.constant(H)).value
    # the same sentence padded by hand gives identical first rows
    manual = stack.blocks[0](ag.constant(np.vstack([H, np.zeros((5, 3))])))
    second = stack.blocks[1](ag.concat([ag.constant(np.vstack([H, np.zeros((5, 3))])), manual], axis=1))
    np.testing.assert_allclose(out, second.value[:4], atol=1e-14)


@pytest.mark.parametrize("variant,generation", [("dpcnn", "full"), ("densecnn", "hashed"),
                                                ("cnn", "static"), ("cnn", "hashed")])
def test_two_block_stack_gradients(variant, generation):
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        store = ParamStore(seed, 0.5)
        groups = [(2, 2), (2, 3)] if variant == "cnn" else [(2, 2)]
        stack = ConvStack(store, 3, _cfg(variant=variant, groups=groups, depth=2, generation=generation,
                                         activation="tanh", pad_length=5))
        m = int(rng.integers(1, 5))
        H = Parameter("H", rng.normal(size=(m, 3)))
        R = rng.normal(size=(m, stack.n_out))
        f = lambda: ag.sum(ag.mul(stack(ag.param(H)), ag.constant(R)))
        worst = max(worst, finite_difference_check(f, [H, *store.trainable()]))
    assert worst <= 1e-4


# --------------------------------------------------------------------------
# parameter accounting
# --------------------------------------------------------------------------


def _enumerated(cfg, d):
    store = ParamStore(0)
    ConvStack(store, d, cfg)
    return sum(t.size for t in store if ".g" in t.name)


def test_count_example():
    rep = param_count(ConvBlockConfig(groups=[(2, 3)], pool_size=5, importance=2), 4)
    assert (rep.full, rep.hashed, rep.static) == (96, 76, 24)
    for mode in ("full", "hashed", "static"):
        cfg = ConvBlockConfig(groups=[(2, 3)], pool_size=5, importance=2, generation=mode)
        assert _enumerated(cfg, 4) == rep.as_dict()[mode]


@pytest.mark.parametrize("variant", ["cnn", "dpcnn", "densecnn"])
def test_counts_equal_registered_tensors(variant):
    groups = [(3, 2), (2, 4)] if variant == "cnn" else [(3, 2)]
    for mode in ("full", "hashed", "static"):
        cfg = ConvBlockConfig(variant=variant, groups=groups, depth=3, generation=mode, pool_size=4,
                              importance=2)
        assert _enumerated(cfg, 5) == param_count(cfg, 5).as_dict()[mode]


def test_empty_pool_rejected():
    with pytest.raises(ValueError):
        param_count(ConvBlockConfig(pool_size=0), 4)
    with pytest.raises(ConfigError):
        TrainConfig(pool_size=0).validate()
    with pytest.raises(ConfigError):
        TrainConfig(importance=0).validate()


@pytest.mark.parametrize("d", [8, 16, 64, 512])
@pytest.mark.parametrize("s", [3, 4, 5])
def test_ordering_at_defaults(d, s):
    rep = param_count(ConvBlockConfig(groups=[(100, s)]), d)
    assert rep.full > rep.hashed > rep.static


def test_full_to_hashed_ratio_linear_in_sd():
    # with g = d the ratio n*s*d*g / (n*z*g + l*s*d) is exactly (s*d) * n / (n*z + l*s)
    for s in (3, 4, 5):
        xs, ys = [], []
        for d in (64, 128, 256, 512):
            rep = param_count(ConvBlockConfig(groups=[(100, s)]), d)
            xs.append(s * d)
            ys.append(rep.full / rep.hashed)
        slope, intercept = np.polyfit(xs, ys, 1)
        resid = np.array(ys) - (slope * np.array(xs) + intercept)
        assert slope == pytest.approx(100 / (100 * 5 + 20 * s), rel=1e-12)
        assert abs(intercept) < 1e-9
        assert np.abs(resid).max() < 1e-9

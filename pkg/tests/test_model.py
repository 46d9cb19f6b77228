import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvit import tensor as tn
from cvit.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from cvit.gradcheck import check_gradients
from cvit.grid import NormStats
from cvit.model import (
    CvitModel,
    ModelConfig,
    closed_form_param_count,
    patchify,
    positional_encoding,
    scaled_dot_product_attention,
)
from cvit.tensor import Tensor
from cvit.training import weighted_mse

from conftest import TINY

DEFAULT = ModelConfig()


# ---------------------------------------------------------------- patchify


def test_default_patch_layout():
    out = patchify(np.zeros((7, 20, 20)), 5)
    assert out.shape == (16, 175)


def test_single_patch_is_flattened_input(rng):
    x = rng.normal(size=(3, 5, 5))
    np.testing.assert_array_equal(patchify(x, 5), x.reshape(1, -1))


def test_impulse_7_12_lands_in_patch_6():
    x = np.zeros((7, 20, 20))
    x[2, 7, 12] = 1.0
    out = patchify(x, 5)
    assert np.flatnonzero(out.any(axis=1)).tolist() == [6]
    # (channel, row-in-patch, col-in-patch) = (2, 2, 2)
    assert out[6, 2 * 25 + 2 * 5 + 2] == 1.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 6), st.integers(0, 19), st.integers(0, 19))
def test_impulse_locality(ch, r, c):
    x = np.zeros((7, 20, 20))
    x[ch, r, c] = 1.0
    out = patchify(x, 5)
    n = (r // 5) * 4 + c // 5
    assert np.flatnonzero(out).tolist() == [n * 175 + ch * 25 + (r % 5) * 5 + c % 5]


def test_patchify_tensor_matches_array(rng):
    x = rng.normal(size=(2, 7, 10, 10))
    np.testing.assert_array_equal(patchify(Tensor(x), 5).data, patchify(x, 5))


def test_patchify_rejects_indivisible():
    with pytest.raises(ValueError):
        patchify(np.zeros((7, 12, 20)), 5)
    with pytest.raises(ValueError):
        ModelConfig(rows=12)


# ---------------------------------------------------------------- positional encoding


def test_position_zero_row():
    pe = positional_encoding(17, 64)
    assert pe[0].tolist() == [0.0, 1.0] * 32


def test_pe_first_entry():
    assert abs(positional_encoding(2, 64)[1, 0] - 0.841471) < 1e-6
    assert positional_encoding(2, 64)[1, 0] == math.sin(1.0)


def test_pe_matches_direct_evaluation():
    pe = positional_encoding(17, 64)
    for a in range(17):
        for k in range(32):
            denom = 10000 ** (2 * k / 64)
            assert abs(pe[a, 2 * k] - math.sin(a / denom)) < 1e-12
            assert abs(pe[a, 2 * k + 1] - math.cos(a / denom)) < 1e-12
    assert np.all(np.abs(pe) <= 1.0)


# ---------------------------------------------------------------- attention


def test_attention_constant_values(rng):
    q, k = Tensor(rng.normal(size=(5, 4))), Tensor(rng.normal(size=(5, 4)))
    row = rng.normal(size=4)
    out, _ = scaled_dot_product_attention(q, k, Tensor(np.tile(row, (5, 1))))
    np.testing.assert_allclose(out.data, np.tile(row, (5, 1)), atol=1e-14)


def test_attention_single_token(rng):
    v = rng.normal(size=(1, 3))
    out, w = scaled_dot_product_attention(Tensor(rng.normal(size=(1, 3))), Tensor(rng.normal(size=(1, 3))), Tensor(v))
    assert w.data.tolist() == [[1.0]]
    np.testing.assert_array_equal(out.data, v)


def test_attention_hand_case():
    q = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
    k = [[1.0, 2.0], [0.5, -1.0], [-1.0, 0.0]]
    v = [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]
    expected = []
    for qi in q:
        s = [(qi[0] * kj[0] + qi[1] * kj[1]) / math.sqrt(2) for kj in k]
        e = [math.exp(x) for x in s]
        w = [x / sum(e) for x in e]
        expected.append([sum(w[j] * v[j][c] for j in range(3)) for c in range(2)])
    out, _ = scaled_dot_product_attention(Tensor(q), Tensor(k), Tensor(v))
    np.testing.assert_allclose(out.data, expected, rtol=0, atol=1e-12)


def _default_inputs(rng, b=2, cfg=DEFAULT):
    return rng.normal(size=(b, cfg.channels, cfg.rows, cfg.cols)), rng.normal(size=(b, cfg.channels, cfg.context_dim))


def test_attention_rows_sum_to_one_everywhere(rng):
    m = CvitModel(DEFAULT, seed=1)
    with tn.no_grad():
        m.forward(*_default_inputs(rng))
    assert len(m.last_attention) == 6
    for w in m.last_attention:
        assert w.shape == (2, 8, 17, 17)
        np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-9)


def test_attention_scale_is_inverse_sqrt_head_dim(rng):
    m = CvitModel(DEFAULT, seed=1)
    h, c = _default_inputs(rng, b=1)
    with tn.no_grad():
        m.forward(h, c)
    p = {k: t.data for k, t in m.params.items()}
    tokens = patchify(h, 5) @ p["patch_embed.weight"] + p["patch_embed.bias"]
    x = np.concatenate([p["reg_token"][None, None], tokens], axis=1) + m.pos_encoding
    q = (x @ p["layers.0.attn.wq.weight"] + p["layers.0.attn.wq.bias"]).reshape(1, 17, 8, 8).transpose(0, 2, 1, 3)
    k = (x @ p["layers.0.attn.wk.weight"] + p["layers.0.attn.wk.bias"]).reshape(1, 17, 8, 8).transpose(0, 2, 1, 3)
    s = q @ k.transpose(0, 1, 3, 2) / math.sqrt(8)
    w = np.exp(s - s.max(-1, keepdims=True))
    w /= w.sum(-1, keepdims=True)
    assert DEFAULT.head_dim == 8
    np.testing.assert_allclose(m.last_attention[0], w, atol=1e-12)


# ---------------------------------------------------------------- forward


def test_forward_shape(rng):
    m = CvitModel(DEFAULT)
    h, c = _default_inputs(rng, b=3)
    with tn.no_grad():
        assert m.forward(h, c).shape == (3, 20, 20)
        assert m.forward(h[0], c[0]).shape == (20, 20)


def test_forward_uses_context(rng):
    m = CvitModel(DEFAULT, seed=5)
    h, c = _default_inputs(rng, b=1)
    with tn.no_grad():
        a = m.forward(h, c).data
        b = m.forward(h, c + rng.normal(size=c.shape)).data
    assert not np.allclose(a, b)


def test_forward_deterministic(rng):
    m = CvitModel(DEFAULT, seed=5)
    h, c = _default_inputs(rng)
    with tn.no_grad():
        assert m.forward(h, c).data.tobytes() == m.forward(h, c).data.tobytes()


def test_forward_shape_mismatch(rng):
    m = CvitModel(TINY)
    h, c = _default_inputs(rng)
    with pytest.raises(ValueError):
        m.forward(h, c)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_patch_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    m = CvitModel(TINY, seed=seed % 1000)
    h = rng.normal(size=(1, 7, 10, 10))
    perm = rng.permutation(TINY.n_patches)
    with tn.no_grad():
        tokens = m.embed_patches(h)
        base = m.encode_tokens(tokens).data[:, 0]
        pe = m.pos_encoding.copy()
        pe[1:] = pe[1:][perm]
        shuffled = m.encode_tokens(Tensor(tokens.data[:, perm]), pe).data[:, 0]
    np.testing.assert_allclose(shuffled, base, atol=1e-12)


# ---------------------------------------------------------------- parameters


def test_param_count_hand_derived():
    patch = 175 * 64 + 64
    reg = 64
    ctx = 280 * 64 + 64
    layer = 4 * (64 * 64 + 64) + (64 * 256 + 256) + (256 * 64 + 64) + 2 * (64 + 64)
    head = (128 * 128 + 128) + (128 * 400 + 400)
    expected = patch + reg + ctx + 6 * layer + head
    assert expected == 397328
    assert CvitModel(DEFAULT, seed=0).param_count() == expected == closed_form_param_count(DEFAULT)
    assert expected < 1_000_000


@pytest.mark.parametrize("seed", [0, 1, 99])
def test_param_count_seed_invariant(seed):
    assert CvitModel(TINY, seed=seed).param_count() == closed_form_param_count(TINY)


def test_pe_is_not_a_parameter():
    m = CvitModel(TINY)
    assert not any("pos" in k for k in m.params)


def test_init_bounds():
    m = CvitModel(DEFAULT, seed=4)
    w = m.params["patch_embed.weight"].data
    assert np.abs(w).max() <= 1 / math.sqrt(175)
    assert not m.params["reg_token"].data.any()


def test_gradients_match_finite_differences_sampled(tiny_model, tiny_batch):
    # the full sweep over every parameter is an acceptance check; sample here
    b = tiny_batch
    rng = np.random.default_rng(0)
    subset = {k: rng.choice(t.size, size=min(t.size, 6), replace=False) for k, t in tiny_model.params.items()}
    res = check_gradients(
        tiny_model.params,
        lambda: weighted_mse(tiny_model.forward(b["history"], b["context"]), b["target"], b["raw"]),
        subset=subset,
    )
    assert res.max_rel_error < 1e-4, res.worst


# ---------------------------------------------------------------- checkpoint


def test_checkpoint_round_trip_bit_exact(tmp_path, rng):
    m = CvitModel(TINY, seed=8)
    for t in m.params.values():
        t.data = t.data + rng.normal(size=t.shape) * 1e-3
    stats = NormStats(0.1 / 3, 7.0 / 9, {"temperature": (1 / 7, 2 / 3)})
    path = tmp_path / "m.cvit"
    save_checkpoint(path, m, stats, {"note": [1, 2]})
    m2, s2, extra = load_checkpoint(path)
    assert m2.config == m.config
    assert s2 == stats
    assert extra == {"note": [1, 2]}
    for k, t in m.params.items():
        assert m2.params[k].data.tobytes() == t.data.tobytes()
    save_checkpoint(tmp_path / "again.cvit", m2, s2, extra)
    assert (tmp_path / "again.cvit").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "x.cvit"
    p.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(p)

"""Model-zoo: heads, causality, positional-encoding properties, checkpoints."""

import itertools

import numpy as np
import pytest

from longshort.autodiff import Tensor
from longshort.model import (
    ModelConfig,
    PositionalEncoding,
    TransformerModel,
    attention_bias,
    default_alibi_slopes,
    load_checkpoint,
    lm_config,
    save_checkpoint,
    synthetic_config,
)
from longshort.optim import grad_check
from longshort.tasks import encode_bits


def tiny_lm(pe="nope", seed=0, vocab=8, **kw):
    base = dict(d_model=16, n_layers=2, n_heads=2, vocab_size=vocab)
    base.update(kw)
    return TransformerModel(lm_config(pe, seed=seed, **base))


def test_fresh_scalar_head_predicts_zero():
    model = TransformerModel(synthetic_config("rope", seed=3))
    for bits in ([1, 0, 1], [0], [1, 1, 1, 1, 0, 0]):
        assert model.forward_scalar(encode_bits(bits)).item() == 0.0


def test_fresh_lm_head_is_uniform():
    model = tiny_lm(vocab=8)
    rows = model.forward_lm(np.array([1, 2, 3]))
    assert np.allclose(rows.data, -np.log(8), atol=1e-12)


def test_causality_rows_bitwise_invariant_to_future_tokens():
    for pe in ("nope", "learnable", "alibi", "rope"):
        model = tiny_lm(pe, seed=11, pe_kwargs={"max_position": 32} if pe == "learnable" else {})
        # train-ish weights: nudge head so rows are not all uniform
        rng = np.random.default_rng(0)
        model.params["head.w"].data = rng.normal(0, 0.5, model.params["head.w"].shape)
        ids = np.array([1, 2, 3, 4, 5, 6])
        base = model.forward_lm(ids).data
        for t in range(len(ids) - 1):
            mutated = ids.copy()
            mutated[t + 1 :] = (mutated[t + 1 :] + 3) % 8
            rows = model.forward_lm(mutated).data
            assert np.array_equal(rows[: t + 1], base[: t + 1]), f"{pe} leaked at row {t}"


def test_change_before_last_position_changes_scalar_output():
    model = TransformerModel(synthetic_config("nope", seed=5))
    # give the zero head nontrivial weights so the output responds to content
    rng = np.random.default_rng(1)
    model.params["head.w2"].data = rng.normal(0, 0.5, model.params["head.w2"].shape)
    a = model.forward_scalar(encode_bits([1, 0, 1, 1])).item()
    b = model.forward_scalar(encode_bits([0, 0, 1, 1])).item()
    assert a != b


def test_single_layer_nope_permutation_invariance():
    cfg = synthetic_config("nope", seed=7, n_layers=1)
    model = TransformerModel(cfg)
    rng = np.random.default_rng(2)
    model.params["head.w2"].data = rng.normal(0, 0.5, model.params["head.w2"].shape)
    bits = [1, 0, 1, 0]
    outs = [
        model.forward_scalar(encode_bits(list(perm))).item()
        for perm in itertools.permutations(bits)
    ]
    assert max(outs) - min(outs) < 1e-10


def test_nope_vs_rope_differ_on_order_sensitive_input():
    # single layer, identical non-PE weights: swapping two earlier tokens is
    # invisible without positions but visible through rotary ones
    nope = tiny_lm("nope", seed=21, n_layers=1)
    rope = tiny_lm("rope", seed=21, n_layers=1)
    rng = np.random.default_rng(3)
    head = rng.normal(0, 0.5, nope.params["head.w"].shape)
    emb = rng.normal(0, 0.5, nope.params["embed.tok"].shape)
    for m in (nope, rope):
        m.params["head.w"].data = head.copy()
        m.params["embed.tok"].data = emb.copy()
    for name in nope.params:
        assert np.array_equal(nope.params[name].data, rope.params[name].data)
    ids = np.array([1, 2, 5, 3])
    swapped = np.array([2, 1, 5, 3])
    d_nope = np.abs(nope.forward_lm(ids).data[-1] - nope.forward_lm(swapped).data[-1]).max()
    d_rope = np.abs(rope.forward_lm(ids).data[-1] - rope.forward_lm(swapped).data[-1]).max()
    assert d_nope < 1e-10
    assert d_rope > 1e-6
    d_models = np.abs(nope.forward_lm(ids).data[-1] - rope.forward_lm(ids).data[-1]).max()
    assert d_models > 1e-6


def test_rope_attention_logits_depend_only_on_relative_position():
    # single attention layer, fixed content vectors planted at moving positions
    cfg = lm_config("rope", seed=9, d_model=16, n_layers=1, n_heads=2, vocab_size=8)
    model = TransformerModel(cfg)
    dh = cfg.head_dim
    rng = np.random.default_rng(4)
    q_vec = rng.normal(size=dh)
    k_vec = rng.normal(size=dh)

    def logit(i, j, t=12):
        cos, sin = model._rope_tables(t)

        def rot(vec, pos):
            x = vec
            half = dh // 2
            rx = np.concatenate([-x[half:], x[:half]])
            return x * cos[pos] + rx * sin[pos]

        return rot(q_vec, i) @ rot(k_vec, j)

    for delta in (1, 3, 5):
        vals = [logit(i + delta, i) for i in range(6)]
        assert max(vals) - min(vals) < 1e-10


def test_attention_bias_contract():
    alibi = PositionalEncoding.alibi(slopes=(0.5, 0.25))
    assert attention_bias(alibi, 6, 2, head=0) == -2.0
    assert attention_bias(alibi, 4, 4, head=1) == 0.0
    for pe in (PositionalEncoding.nope(), PositionalEncoding.rope(),
               PositionalEncoding.learnable(16)):
        assert attention_bias(pe, 5, 1, head=0) == 0.0
    with pytest.raises(ValueError, match="masked"):
        attention_bias(alibi, 2, 3, head=0)


def test_default_alibi_slopes_are_positive_geometric():
    slopes = default_alibi_slopes(4)
    assert all(s > 0 for s in slopes)
    ratios = [slopes[i + 1] / slopes[i] for i in range(3)]
    assert np.allclose(ratios, ratios[0])


def test_deterministic_init_and_param_count():
    a = TransformerModel(synthetic_config("alibi", seed=13))
    b = TransformerModel(synthetic_config("alibi", seed=13))
    assert a.n_params == b.n_params
    for name in a.params:
        assert np.array_equal(a.params[name].data, b.params[name].data)
    c = TransformerModel(synthetic_config("alibi", seed=14))
    assert c.n_params == a.n_params  # count depends on config, not seed
    assert any(not np.array_equal(a.params[n].data, c.params[n].data) for n in a.params)


def test_learnable_rejects_long_sequences():
    cfg = synthetic_config("learnable", seed=1, pe_kwargs={"max_position": 6})
    model = TransformerModel(cfg)
    model.forward_scalar(encode_bits([1, 0, 1, 0]))  # length 6 fits
    with pytest.raises(ValueError, match="max_position"):
        model.forward_scalar(encode_bits([1, 0, 1, 0, 1]))


def test_checkpoint_roundtrip_bitwise(tmp_path):
    model = tiny_lm("alibi", seed=17)
    rng = np.random.default_rng(5)
    model.params["head.w"].data = rng.normal(0, 0.3, model.params["head.w"].shape)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert loaded.config == model.config
    for name in model.params:
        assert np.array_equal(loaded.params[name].data, model.params[name].data)
    ids = np.array([1, 2, 3, 4])
    assert np.array_equal(loaded.forward_lm(ids).data, model.forward_lm(ids).data)


def test_config_validation():
    with pytest.raises(ValueError, match="divisible"):
        ModelConfig(d_model=10, n_layers=1, n_heads=3, ffn_multiplier=2, vocab_size=8,
                    pe=PositionalEncoding.nope(), head_kind="lm")
    with pytest.raises(ValueError, match="vocab"):
        ModelConfig(d_model=8, n_layers=1, n_heads=2, ffn_multiplier=2, vocab_size=2,
                    pe=PositionalEncoding.nope(), head_kind="lm")
    with pytest.raises(ValueError, match="positive"):
        PositionalEncoding.alibi(slopes=(0.5, -0.1))
    with pytest.raises(ValueError, match="base"):
        PositionalEncoding.rope(base=0.5)


def test_transformer_loss_gradient_matches_finite_differences():
    # end-to-end scalar loss on a 4-token input through a 2-layer model; the
    # check runs at a generic parameter point (fresh init leaves zero heads
    # and near-constant embedding rows right on LayerNorm's high-curvature
    # eps region, which degrades central differences)
    cfg = synthetic_config("rope", seed=23, d_model=8, n_heads=2)
    model = TransformerModel(cfg)
    rng = np.random.default_rng(6)
    for p in model.params.values():
        p.data = p.data + rng.normal(0, 0.3, p.data.shape)
    ids = encode_bits([1, 0])  # 4 tokens with BOS/EOS
    names = ["layers.0.attn.wq", "layers.1.ffn.w1", "embed.tok", "head.w1", "ln_f.g"]
    params = [model.params[n] for n in names]

    def f(_):
        pred = model.forward_scalar(ids)
        diff = pred.reshape(1).addc(-1.5)
        return (diff * diff).mean()

    assert grad_check(f, params, step=1e-5) < 1e-4

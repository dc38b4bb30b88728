"""Misalignment: SCE/L2 properties, overlap-plan slicing, combined-loss oracles."""

import numpy as np
import pytest

from longshort.autodiff import Tensor
from longshort.misalign import (
    MisalignConfig,
    combined_loss,
    l2_divergence,
    misalign_estimate,
    overlap_plan,
    sce,
)
from longshort.model import TransformerModel, lm_config
from longshort.optim import grad_check
from longshort.seeding import stream


def log_rows(rng, n, v, spread=2.0):
    """Random log-probability rows via log-softmax of random logits."""
    logits = rng.normal(size=(n, v)) * spread
    m = logits.max(axis=-1, keepdims=True)
    return logits - (m + np.log(np.exp(logits - m).sum(axis=-1, keepdims=True)))


def entropy(p_log):
    return float(-(np.exp(p_log) * p_log).sum())


def kl(p_log, q_log):
    return float((np.exp(p_log) * (p_log - q_log)).sum())


class ConstantLM:
    """Stub model that ignores its input and emits one fixed row everywhere."""

    def __init__(self, row_log):
        self.row = np.asarray(row_log, dtype=np.float64)

    def forward_lm(self, ids):
        ids = np.asarray(ids)
        out = np.broadcast_to(self.row, ids.shape + self.row.shape)
        return Tensor(out.copy())


def tiny_lm(seed=0, vocab=4, layers=1, d=8):
    model = TransformerModel(lm_config("nope", seed=seed, d_model=d, n_layers=layers,
                                       n_heads=2, vocab_size=vocab))
    rng = np.random.default_rng(seed + 1000)
    model.params["head.w"].data = rng.normal(0, 0.5, model.params["head.w"].shape)
    return model


# -- divergences -------------------------------------------------------------


def test_sce_uniform_pair_is_twice_log2():
    p = np.log([0.5, 0.5])
    assert abs(sce(p, p) - 2 * np.log(2)) < 1e-12


def test_sce_symmetric_exactly_on_1000_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p, q = log_rows(rng, 2, 6)
        assert sce(p, q) == sce(q, p)


def test_sce_gibbs_bound_and_kl_identity():
    rng = np.random.default_rng(1)
    for _ in range(200):
        p, q = log_rows(rng, 2, 8)
        gap = sce(p, q) - entropy(p) - entropy(q)
        assert gap >= -1e-12
        assert abs(gap - (kl(p, q) + kl(q, p))) < 1e-10
    p = log_rows(rng, 1, 8)[0]
    assert abs(sce(p, p) - entropy(p) - entropy(p)) <= 1e-9


def test_sce_rejects_unnormalized_rows():
    with pytest.raises(ValueError, match="exp-sum"):
        sce(np.log([0.5, 0.4]), np.log([0.5, 0.5]))


def test_sce_appendix_e_variant_is_asymmetric_cross_entropy_plus_entropy():
    rng = np.random.default_rng(2)
    p, q = log_rows(rng, 2, 5)
    val = sce(p, q, variant="appendix-e")
    expect = -(np.exp(q) * p).sum() + entropy(p)
    assert abs(val - expect) < 1e-12
    assert val != sce(q, p, variant="appendix-e")


def test_l2_divergence_examples_and_oracle():
    p = log_rows(np.random.default_rng(3), 1, 6)[0]
    assert l2_divergence(p, p) == 0.0
    # (near) one-hot rows on different symbols
    a = np.full(4, -60.0)
    a[0] = 0.0
    b = np.full(4, -60.0)
    b[2] = 0.0
    a = a - np.log(np.exp(a).sum())
    b = b - np.log(np.exp(b).sum())
    assert abs(l2_divergence(a, b) - 2.0) < 1e-9
    rng = np.random.default_rng(4)
    p, q = log_rows(rng, 2, 9)
    brute = sum((np.exp(p[i]) - np.exp(q[i])) ** 2 for i in range(9))
    assert abs(l2_divergence(p, q) - brute) < 1e-12


# -- overlap plan -------------------------------------------------------------


def test_overlap_plan_8_2():
    plan = overlap_plan(8, 2)
    assert plan.seq1_idx.tolist() == [6, 7]
    assert plan.seq2_idx.tolist() == [4, 5]
    assert plan.n_pairs == 2
    # both locals name the same full-window position
    assert [j + plan.l_extra for j in plan.seq2_idx] == plan.seq1_idx.tolist()


def test_overlap_plan_degenerate_max_extra():
    assert overlap_plan(8, 4).n_pairs == 0


def test_overlap_plan_10_1_context_lengths():
    plan = overlap_plan(10, 1)
    assert plan.n_pairs == 4
    assert plan.context_lengths() == [(7, 6), (8, 7), (9, 8), (10, 9)]


def test_overlap_plan_pair_count_closed_form_exhaustive():
    for l_train in range(2, 65):
        for l_extra in range(1, l_train // 2 + 1):
            plan = overlap_plan(l_train, l_extra)
            assert plan.n_pairs == max(0, l_train - l_train // 2 - l_extra)
            for l1, l2 in plan.context_lengths():
                assert l1 - l2 == l_extra
                assert l_train // 2 <= l2 < l1 <= l_train


def test_overlap_plan_rejects_out_of_range():
    with pytest.raises(ValueError):
        overlap_plan(8, 0)
    with pytest.raises(ValueError):
        overlap_plan(8, 5)


# -- estimator ----------------------------------------------------------------


def test_constant_model_l2_misalignment_is_zero():
    rng = np.random.default_rng(5)
    row = log_rows(rng, 1, 4)[0]
    model = ConstantLM(row)
    cfg = MisalignConfig(l_train=8, variant="l2", n_samples=32)
    corpus = rng.integers(0, 4, size=200)
    report = misalign_estimate(model, corpus, cfg, stream(0, "t"))
    assert abs(report.estimate) < 1e-9


def test_constant_model_sce_misalignment_is_entropy_floor():
    rng = np.random.default_rng(6)
    row = log_rows(rng, 1, 4)[0]
    model = ConstantLM(row)
    cfg = MisalignConfig(l_train=8, variant="sce", n_samples=16)
    corpus = rng.integers(0, 4, size=200)
    report = misalign_estimate(model, corpus, cfg, stream(0, "t"))
    assert abs(report.estimate - 2 * entropy(row)) < 1e-9


def test_sce_estimate_at_least_mean_entropy_sum():
    model = tiny_lm(seed=7)
    rng = np.random.default_rng(8)
    corpus = rng.integers(0, 4, size=400)
    cfg = MisalignConfig(l_train=8, variant="sce", n_samples=64)
    est = misalign_estimate(model, corpus, cfg, stream(1, "a")).estimate

    # entropy floor over the same draws, reconstructed with the same stream
    rng2 = stream(1, "a")
    floors = []
    remaining = cfg.n_samples
    while remaining > 0:
        nb = min(16, remaining)
        l_extra = int(rng2.integers(1, 8 // 2 + 1))
        plan = overlap_plan(8, l_extra)
        if plan.n_pairs == 0:
            continue
        starts = rng2.integers(0, corpus.size - plan.full_length + 1, size=nb)
        for s in starts:
            w = corpus[s : s + plan.full_length]
            r1 = model.forward_lm(w[:8]).data[plan.seq1_idx]
            r2 = model.forward_lm(w[l_extra:]).data[plan.seq2_idx]
            pair_floor = [entropy(a) + entropy(b) for a, b in zip(r1, r2)]
            floors.append(np.mean(pair_floor))
        remaining -= nb
    assert est >= np.mean(floors) - 1e-12


def test_estimator_matches_exhaustive_enumeration():
    # 2-token content on a tiny vocab: enumerate every (l_extra, window) pair
    model = tiny_lm(seed=9, vocab=4)
    rng = np.random.default_rng(10)
    corpus = rng.integers(0, 2, size=60)
    l_train = 6
    cfg = MisalignConfig(l_train=l_train, variant="sce", n_samples=3000)
    report = misalign_estimate(model, corpus, cfg, stream(2, "mc"))

    exact_per_extra = []
    for l_extra in range(1, l_train // 2 + 1):
        plan = overlap_plan(l_train, l_extra)
        if plan.n_pairs == 0:
            continue
        vals = []
        for s in range(corpus.size - plan.full_length + 1):
            w = corpus[s : s + plan.full_length]
            r1 = model.forward_lm(w[:l_train]).data[plan.seq1_idx]
            r2 = model.forward_lm(w[l_extra:]).data[plan.seq2_idx]
            per_pair = [sce(a, b) for a, b in zip(r1, r2)]
            vals.append(np.mean(per_pair))
        exact_per_extra.append(np.mean(vals))
    exact = np.mean(exact_per_extra)
    assert abs(report.estimate - exact) <= 3 * report.std_error + 1e-12


def test_estimator_window_too_short_error():
    model = ConstantLM(log_rows(np.random.default_rng(0), 1, 4)[0])
    cfg = MisalignConfig(l_train=16, n_samples=4)
    with pytest.raises(ValueError, match="24"):
        misalign_estimate(model, np.zeros(10, dtype=int), cfg, stream(0, "x"))


def test_misalign_config_validation():
    with pytest.raises(ValueError, match="alpha"):
        MisalignConfig(l_train=8, alpha=-0.1)
    with pytest.raises(ValueError, match="variant"):
        MisalignConfig(l_train=8, variant="js")
    with pytest.raises(ValueError, match="l_extra"):
        MisalignConfig(l_train=8, l_extra_range=(1, 8))


# -- combined loss ------------------------------------------------------------


def test_combined_loss_alpha_zero_equals_ce_exactly():
    model = tiny_lm(seed=11)
    rng = np.random.default_rng(12)
    window = rng.integers(0, 4, size=(3, 10))
    plan = overlap_plan(8, 2)
    total, ce, mis = combined_loss(model, window, 0.0, plan)
    assert total.item() == ce.item()
    assert mis.item() > 0.0


def _naive_combined(model, window, alpha, plan, variant="sce"):
    """Oracle: two independent passes + per-pair suffix extraction."""
    l, e = plan.l_train, plan.l_extra
    window = np.asarray(window)
    ces = []
    for row in window:
        for seq in (row[:l], row[e:]):
            rows = model.forward_lm(seq).data
            nll = [-rows[t, seq[t + 1]] for t in range(l - 1)]
            ces.append(np.mean(nll))
    ce = np.mean(ces)
    pair_vals = []
    for row in window:
        for l1, l2 in plan.context_lengths():
            # explicit suffixes ending at the same full-window position
            m = l1 - 1
            r_long = model.forward_lm(row[: m + 1]).data[-1]
            r_short = model.forward_lm(row[m + 1 - l2 : m + 1]).data[-1]
            pair_vals.append(sce(r_long, r_short) if variant == "sce"
                             else l2_divergence(r_long, r_short))
    mis = np.mean(pair_vals) if pair_vals else 0.0
    return ce + alpha * mis, ce, mis


@pytest.mark.parametrize("variant", ["sce", "l2"])
def test_combined_loss_matches_naive_two_pass_oracle(variant):
    model = tiny_lm(seed=13)
    rng = np.random.default_rng(14)
    for l_train, l_extra in [(8, 2), (10, 1), (6, 3), (9, 4)]:
        plan = overlap_plan(l_train, l_extra)
        window = rng.integers(0, 4, size=(2, plan.full_length))
        total, ce, mis = combined_loss(model, window, 0.3, plan, variant=variant)
        n_total, n_ce, n_mis = _naive_combined(model, window, 0.3, plan, variant)
        assert abs(ce.item() - n_ce) < 1e-12
        assert abs(mis.item() - n_mis) < 1e-12
        assert abs(total.item() - n_total) < 1e-12


def test_combined_loss_window_length_mismatch():
    model = tiny_lm(seed=15)
    plan = overlap_plan(8, 2)
    with pytest.raises(ValueError, match="full_length"):
        combined_loss(model, np.zeros((1, 9), dtype=int), 0.1, plan)


def test_combined_loss_gradient_matches_finite_differences():
    model = tiny_lm(seed=16, d=8)
    rng = np.random.default_rng(17)
    for p in model.params.values():
        p.data = p.data + rng.normal(0, 0.2, p.data.shape)
    plan = overlap_plan(6, 2)
    window = rng.integers(0, 4, size=(2, 8))
    names = ["embed.tok", "layers.0.attn.wv", "head.w", "ln_f.g"]
    params = [model.params[n] for n in names]

    def f(_):
        total, _, _ = combined_loss(model, window, 0.25, plan)
        return total

    assert grad_check(f, params, step=1e-5) < 1e-4

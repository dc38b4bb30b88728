"""Long-short misalignment: SCE/L2 divergences, overlap slicing, combined loss.

The misalignment of a model is the expected divergence between its output
distributions on a sequence and on a shorter suffix of the same sequence.
The divergence is the symmetric cross-entropy

    SCE(p, q) = -(<q, log p> + <p, log q>),

computed here from log-probability rows (exponentials taken explicitly, so no
probability is ever logged after flooring). SCE is symmetric and bounded
below by H(p) + H(q), with equality iff p = q.

Training uses the two-pass overlap trick: draw l_extra in [1, l_train//2],
take one window of l_train + l_extra tokens, feed its first l_train tokens as
sequence 1 and its last l_train tokens as sequence 2, and compare prediction
rows at the positions where the two windows describe the same context ending.
``OverlapPlan`` owns that index bookkeeping; the aligned pairs correspond to
context lengths (l1, l2) with l1 - l2 = l_extra, both in [l_train//2, l_train].

A compatibility flag ``sce_variant="appendix-e"`` reproduces an asymmetric
expression (-<p2, log p1> - <p1, log p1>) seen in one published pseudocode
listing of this loss; the default follows the symmetric definition above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

__all__ = [
    "MisalignConfig",
    "OverlapPlan",
    "MetricReport",
    "sce",
    "l2_divergence",
    "overlap_plan",
    "misalign_estimate",
    "combined_loss",
]

VARIANTS = ("sce", "l2")
SCE_VARIANTS = ("paper", "appendix-e")


def _check_rows(name: str, p: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if not np.isfinite(p).all():
        raise ValueError(f"{name}: log-probability row has non-finite entries")
    sums = np.exp(p).sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise ValueError(f"{name}: row exp-sum deviates from 1 by {np.abs(sums - 1.0).max():.3e}")
    return p


def sce(p, q, variant: str = "paper") -> float:
    """Symmetric cross-entropy between two log-probability rows."""
    p = _check_rows("sce", p)
    q = _check_rows("sce", q)
    if variant == "paper":
        return float(-(np.exp(q) * p).sum(axis=-1) - (np.exp(p) * q).sum(axis=-1))
    if variant == "appendix-e":
        return float(-(np.exp(q) * p).sum(axis=-1) - (np.exp(p) * p).sum(axis=-1))
    raise ValueError(f"unknown sce variant {variant!r}")


def l2_divergence(p, q) -> float:
    """Squared L2 distance between the probability vectors exp(p) and exp(q)."""
    p = _check_rows("l2_divergence", p)
    q = _check_rows("l2_divergence", q)
    d = np.exp(p) - np.exp(q)
    return float((d * d).sum(axis=-1))


def _divergence_rows(p: np.ndarray, q: np.ndarray, variant: str, sce_variant: str) -> np.ndarray:
    """Vectorized per-row divergence for (..., V) stacks of log-prob rows."""
    if variant == "l2":
        d = np.exp(p) - np.exp(q)
        return (d * d).sum(axis=-1)
    if sce_variant == "appendix-e":
        return -(np.exp(q) * p).sum(axis=-1) - (np.exp(p) * p).sum(axis=-1)
    return -(np.exp(q) * p).sum(axis=-1) - (np.exp(p) * q).sum(axis=-1)


@dataclass(frozen=True)
class MisalignConfig:
    """Sampling parameters for the misalignment estimator and regularizer."""

    l_train: int
    l_extra_range: tuple[int, int] | None = None  # default [1, l_train//2]
    variant: str = "sce"
    sce_variant: str = "paper"
    n_samples: int = 1024
    alpha: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown divergence variant {self.variant!r}")
        if self.sce_variant not in SCE_VARIANTS:
            raise ValueError(f"unknown sce variant {self.sce_variant!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        lo, hi = self.extra_range()
        if not (1 <= lo <= hi <= self.l_train - 1):
            raise ValueError(f"l_extra range [{lo}, {hi}] invalid for l_train {self.l_train}")

    def extra_range(self) -> tuple[int, int]:
        if self.l_extra_range is not None:
            return self.l_extra_range
        return (1, self.l_train // 2)


@dataclass(frozen=True)
class OverlapPlan:
    """Index bookkeeping that lets one long window act as two training inputs.

    seq1 holds full-window positions [0, l_train); seq2 holds positions
    [l_extra, l_train + l_extra). Aligned prediction pairs are seq1-local
    indices i in [l_train//2 + l_extra, l_train) matched with seq2-local
    i - l_extra; both refer to the same full-window position.
    """

    l_train: int
    l_extra: int
    seq1_idx: np.ndarray = field(repr=False)
    seq2_idx: np.ndarray = field(repr=False)

    @property
    def full_length(self) -> int:
        return self.l_train + self.l_extra

    @property
    def n_pairs(self) -> int:
        return int(self.seq1_idx.size)

    def context_lengths(self) -> list[tuple[int, int]]:
        """Implied (l1, l2) context lengths for each aligned pair."""
        return [(int(i) + 1, int(j) + 1) for i, j in zip(self.seq1_idx, self.seq2_idx)]


def overlap_plan(l_train: int, l_extra: int) -> OverlapPlan:
    """Build the aligned-index plan for one (l_train, l_extra) draw."""
    if not (1 <= l_extra <= l_train // 2):
        raise ValueError(f"l_extra {l_extra} outside [1, {l_train // 2}] for l_train {l_train}")
    start = l_train // 2 + l_extra
    seq1 = np.arange(start, l_train, dtype=np.int64)
    seq2 = seq1 - l_extra
    return OverlapPlan(l_train=l_train, l_extra=l_extra, seq1_idx=seq1, seq2_idx=seq2)


@dataclass
class MetricReport:
    variant: str
    l_train: int
    n_samples: int
    estimate: float
    std_error: float
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "l_train": self.l_train,
            "n_samples": self.n_samples,
            "estimate": self.estimate,
            "std_error": self.std_error,
            "seed": self.seed,
        }


def misalign_estimate(
    model,
    corpus_tokens: np.ndarray,
    cfg: MisalignConfig,
    rng: np.random.Generator,
    batch_windows: int = 16,
    seed: int | None = None,
) -> MetricReport:
    """Monte Carlo estimate of the long-short misalignment of an LM.

    Each draw takes one window of l_train + l_extra tokens and one l_extra
    (shared by the windows of a batch, as in training), runs the two forward
    passes, and averages the per-pair divergence over aligned positions.
    """
    corpus_tokens = np.asarray(corpus_tokens, dtype=np.int64)
    lo, hi = cfg.extra_range()
    need = cfg.l_train + hi
    if corpus_tokens.size < need:
        raise ValueError(f"corpus too short: need at least {need} tokens, got {corpus_tokens.size}")
    if all(overlap_plan(cfg.l_train, e).n_pairs == 0 for e in range(lo, hi + 1)):
        raise ValueError(f"no l_extra in [{lo}, {hi}] yields aligned pairs for l_train {cfg.l_train}")
    values: list[float] = []
    remaining = cfg.n_samples
    while remaining > 0:
        nb = min(batch_windows, remaining)
        l_extra = int(rng.integers(lo, hi + 1))
        plan = overlap_plan(cfg.l_train, l_extra)
        if plan.n_pairs == 0:
            # the draw carries no aligned positions; redraw l_extra
            continue
        width = plan.full_length
        starts = rng.integers(0, corpus_tokens.size - width + 1, size=nb)
        windows = np.stack([corpus_tokens[s : s + width] for s in starts])
        rows1 = model.forward_lm(windows[:, : cfg.l_train]).data
        rows2 = model.forward_lm(windows[:, l_extra:]).data
        p1 = rows1[:, plan.seq1_idx, :]
        p2 = rows2[:, plan.seq2_idx, :]
        per_pair = _divergence_rows(p1, p2, cfg.variant, cfg.sce_variant)
        values.extend(per_pair.mean(axis=-1).tolist())
        remaining -= nb
    arr = np.asarray(values)
    std_err = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return MetricReport(
        variant=cfg.variant,
        l_train=cfg.l_train,
        n_samples=cfg.n_samples,
        estimate=float(arr.mean()),
        std_error=std_err,
        seed=seed,
    )


def _next_token_ce(rows: Tensor, ids: np.ndarray) -> Tensor:
    """Mean next-token negative log-likelihood over all predictable positions."""
    picked = rows[:, :-1, :].take_index_last(ids[:, 1:])
    return -picked.mean()


def combined_loss(
    model,
    full_seq: np.ndarray,
    alpha: float,
    plan: OverlapPlan,
    variant: str = "sce",
    sce_variant: str = "paper",
) -> tuple[Tensor, Tensor, Tensor]:
    """Regularized training loss from two forward passes over one long window.

    Returns (total, ce_part, misalign_part) as scalar Tensors with
    total = ce_part + alpha * misalign_part, differentiable end to end.
    ce_part is the mean of the two sequences' next-token losses; misalign_part
    is the mean divergence over the plan's aligned prediction pairs.
    """
    full_seq = np.asarray(full_seq, dtype=np.int64)
    if full_seq.ndim == 1:
        full_seq = full_seq[None, :]
    if full_seq.shape[1] != plan.full_length:
        raise ValueError(
            f"combined_loss: window length {full_seq.shape[1]} != plan full_length {plan.full_length}"
        )
    seq1 = full_seq[:, : plan.l_train]
    seq2 = full_seq[:, plan.l_extra :]
    rows1 = model.forward_lm(seq1)
    rows2 = model.forward_lm(seq2)
    ce = (_next_token_ce(rows1, seq1) + _next_token_ce(rows2, seq2)).scale(0.5)

    if plan.n_pairs == 0:
        misalign = Tensor(0.0)
    else:
        i0, i1 = int(plan.seq1_idx[0]), int(plan.seq1_idx[-1]) + 1
        j0, j1 = int(plan.seq2_idx[0]), int(plan.seq2_idx[-1]) + 1
        p1 = rows1[:, i0:i1, :]
        p2 = rows2[:, j0:j1, :]
        if variant == "l2":
            diff = p1.exp() - p2.exp()
            misalign = (diff * diff).sum(axis=-1).mean()
        elif sce_variant == "appendix-e":
            misalign = (-(p2.exp() * p1).sum(axis=-1) - (p1.exp() * p1).sum(axis=-1)).mean()
        else:
            misalign = (-(p2.exp() * p1).sum(axis=-1) - (p1.exp() * p2).sum(axis=-1)).mean()

    total = ce + misalign.scale(alpha)
    return total, ce, misalign

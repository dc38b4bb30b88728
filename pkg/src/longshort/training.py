"""Training loops and length-sweep evaluation.

``train_synthetic`` fits the scalar-head transformer on a binary-sequence
task with squared error on (possibly reparameterized) targets, sampling
lengths uniformly in [1, l_train]. ``train_lm`` fits a byte LM with the
overlap-based combined loss: each step draws one l_extra, slices one long
window into two overlapping inputs, and optimizes ce + alpha * misalign.

Everything is deterministic under the config seed: data comes from named
streams split off the root seed, and report rows are plain floats written
with round-trip formatting.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .artifacts import write_csv
from .autodiff import Tensor, zero_grads
from .misalign import combined_loss, overlap_plan
from .model import ModelConfig, TransformerModel
from .optim import AdamState, adam_step
from .seeding import stream
from .tasks import EOS, Reparameterization, clamp_count, reparam_invert, sample_batch

__all__ = [
    "TrainConfig",
    "TrainReport",
    "EvalCurve",
    "TrainingDiverged",
    "train_synthetic",
    "train_lm",
    "eval_length_curve",
    "eval_ppl_at_length",
]


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; the model was rolled back to the last snapshot."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run (synthetic or LM)."""

    model: ModelConfig
    task: str = "mean"
    scheme: str = "bernoulli-half"
    reparam: Reparameterization = field(default_factory=Reparameterization)
    steps: int = 5000
    batch_size: int = 128
    lr: float = 1e-3
    alpha: float = 0.0
    l_train: int = 10
    seed: int = 0
    eval_every: int = 100
    variant: str = "sce"
    sce_variant: str = "paper"

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


def lm_train_config(model: ModelConfig, **overrides) -> TrainConfig:
    """LM defaults: l_train 128, Adam 3e-4, batch 32, 2k steps."""
    cfg = dict(model=model, steps=2000, batch_size=32, lr=3e-4, l_train=128)
    cfg.update(overrides)
    return TrainConfig(**cfg)


@dataclass
class TrainReport:
    rows: list[tuple[int, float, float, float]]  # (step, total, ce, misalign)
    wall_clock: float
    final_loss: float
    checkpoint_path: str | None = None

    def to_csv(self, path) -> None:
        write_csv(path, ["step", "total", "ce", "misalign"], self.rows)


@dataclass
class EvalCurve:
    task: str
    rows: list[tuple[int, float, int, int]]  # (length, loss, n, clamped)
    model_id: str = ""

    def losses(self) -> dict[int, float]:
        return {length: loss for length, loss, _, _ in self.rows}

    def clamp_counts(self) -> dict[int, int]:
        return {length: clamped for length, _, _, clamped in self.rows}

    def to_csv(self, path) -> None:
        write_csv(path, ["length", "loss", "n", "clamped"], self.rows)


def _pad_samples(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-pad token rows with EOS; the causal mask keeps padding inert."""
    t_max = max(s.tokens.size for s in samples)
    ids = np.full((len(samples), t_max), EOS, dtype=np.int64)
    last = np.empty(len(samples), dtype=np.int64)
    tgt = np.empty(len(samples))
    for r, s in enumerate(samples):
        ids[r, : s.tokens.size] = s.tokens
        last[r] = s.tokens.size - 1
        tgt[r] = s.target
    return ids, last, tgt


def train_synthetic(cfg: TrainConfig) -> tuple[TransformerModel, TrainReport]:
    """Squared-error training of the scalar head on a synthetic task.

    alpha plays no role here (no misalignment term is defined for scalar
    outputs): report rows carry ce = total and misalign = 0.
    """
    if cfg.model.head_kind != "scalar":
        raise ValueError("train_synthetic requires a scalar-head model config")
    t0 = time.perf_counter()
    model = TransformerModel(cfg.model)
    state = AdamState.for_params(model.params)
    rng = stream(cfg.seed, "synthetic-train-data")
    rows = []
    snapshot = model.clone_params()
    for step in range(1, cfg.steps + 1):
        samples = sample_batch(cfg.task, cfg.scheme, (1, cfg.l_train), cfg.batch_size,
                               rng, cfg.reparam)
        ids, last, tgt = _pad_samples(samples)
        zero_grads(model.params)
        preds = model.forward_scalar(ids, last)
        diff = preds - Tensor(tgt)
        loss = (diff * diff).mean()
        value = loss.item()
        if not np.isfinite(value):
            model.restore_params(snapshot)
            raise TrainingDiverged(
                f"train_synthetic: non-finite loss at step {step}; "
                f"model rolled back to step {((step - 1) // cfg.eval_every) * cfg.eval_every}",
                step,
            )
        loss.backward()
        adam_step(model.params, state, cfg.lr)
        rows.append((step, value, value, 0.0))
        if step % cfg.eval_every == 0:
            snapshot = model.clone_params()
    report = TrainReport(rows=rows, wall_clock=time.perf_counter() - t0, final_loss=rows[-1][1])
    return model, report


def train_lm(cfg: TrainConfig, corpus_tokens: np.ndarray) -> tuple[TransformerModel, TrainReport]:
    """Combined-loss LM training: ce + alpha * misalign via the overlap plan."""
    if cfg.model.head_kind != "lm":
        raise ValueError("train_lm requires an lm-head model config")
    corpus_tokens = np.asarray(corpus_tokens, dtype=np.int64)
    if corpus_tokens.size < 10 * cfg.l_train:
        raise ValueError(
            f"train_lm: corpus too short ({corpus_tokens.size} tokens; need >= {10 * cfg.l_train})"
        )
    t0 = time.perf_counter()
    model = TransformerModel(cfg.model)
    state = AdamState.for_params(model.params)
    rng = stream(cfg.seed, "lm-train-data")
    half = cfg.l_train // 2
    rows = []
    snapshot = model.clone_params()
    for step in range(1, cfg.steps + 1):
        l_extra = int(rng.integers(1, half + 1))
        plan = overlap_plan(cfg.l_train, l_extra)
        width = plan.full_length
        starts = rng.integers(0, corpus_tokens.size - width + 1, size=cfg.batch_size)
        windows = np.stack([corpus_tokens[s : s + width] for s in starts])
        zero_grads(model.params)
        total, ce, mis = combined_loss(model, windows, cfg.alpha, plan,
                                       variant=cfg.variant, sce_variant=cfg.sce_variant)
        value = total.item()
        if not np.isfinite(value):
            model.restore_params(snapshot)
            raise TrainingDiverged(
                f"train_lm: non-finite loss at step {step}; model rolled back", step
            )
        total.backward()
        adam_step(model.params, state, cfg.lr)
        rows.append((step, value, ce.item(), mis.item()))
        if step % cfg.eval_every == 0:
            snapshot = model.clone_params()
    report = TrainReport(rows=rows, wall_clock=time.perf_counter() - t0, final_loss=rows[-1][1])
    return model, report


def eval_length_curve(
    model,
    task: str,
    reparam: Reparameterization,
    lengths: list[int],
    n_per_length: int,
    scheme: str,
    seed: int,
    chunk: int = 256,
) -> EvalCurve:
    """Mean squared error of inverted predictions against raw targets per length."""
    if not lengths:
        raise ValueError("eval_length_curve: lengths must be non-empty")
    rng = stream(seed, "eval-length-curve")
    rows = []
    for l in lengths:
        samples = sample_batch(task, scheme, (l, l), n_per_length, rng, reparam)
        raw = np.array([s.raw_target for s in samples])
        ids = np.stack([s.tokens for s in samples])
        preds = np.empty(n_per_length)
        for lo in range(0, n_per_length, chunk):
            hi = min(lo + chunk, n_per_length)
            preds[lo:hi] = model.forward_scalar(ids[lo:hi]).data
        clamped = clamp_count(reparam, preds)
        inverted = reparam_invert(reparam, preds)
        mse = float(((inverted - raw) ** 2).mean())
        rows.append((int(l), mse, int(n_per_length), int(clamped)))
    return EvalCurve(task=task, rows=rows)


def eval_ppl_at_length(
    model,
    corpus_tokens: np.ndarray,
    l: int,
    n_windows: int,
    seed: int,
    chunk: int = 8,
) -> float:
    """Mean next-token NLL (natural log) over windows of length l.

    Only positions in the second half of each window count, so every scored
    prediction has context length >= l/2 (matching the misalignment metric's
    sampling regime).
    """
    corpus_tokens = np.asarray(corpus_tokens, dtype=np.int64)
    if corpus_tokens.size < l:
        raise ValueError(
            f"eval_ppl_at_length: corpus has {corpus_tokens.size} tokens; need >= {l}"
        )
    rng = stream(seed, "eval-ppl")
    starts = rng.integers(0, corpus_tokens.size - l + 1, size=n_windows)
    windows = np.stack([corpus_tokens[s : s + l] for s in starts])
    first_row = l // 2          # row t predicts token t+1
    nlls = []
    for lo in range(0, n_windows, chunk):
        hi = min(lo + chunk, n_windows)
        rows = model.forward_lm(windows[lo:hi]).data
        part = rows[:, first_row:-1, :]
        tgt = windows[lo:hi, first_row + 1 :]
        picked = np.take_along_axis(part, tgt[..., None], axis=-1)[..., 0]
        nlls.append(-picked.reshape(-1))
    return float(np.concatenate(nlls).mean())

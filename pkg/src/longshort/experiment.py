"""Corpus ingestion and the variant-grid correlation experiment.

The grid is a desk-scale analogue of comparing models by their misalignment:
train one LM per variant (positional encoding x regularization strength),
then measure the training-length log-perplexity, the misalignment estimate,
and the log-perplexity at the longest evaluation length, and correlate the
two candidate predictors with the long-length result.

Tokenization is byte-level (ids 0..255) with BOS/EOS/PAD reserved above the
byte range, so no tokenizer training enters the comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .artifacts import write_csv, write_json
from .misalign import MisalignConfig, misalign_estimate
from .model import lm_config
from .seeding import stream
from .training import TrainConfig, eval_ppl_at_length, train_lm

__all__ = [
    "BYTE_BOS",
    "BYTE_EOS",
    "BYTE_PAD",
    "BYTE_VOCAB",
    "Corpus",
    "VariantSpec",
    "GridConfig",
    "CorrelationReport",
    "ingest_corpus",
    "tokenize",
    "detokenize",
    "pearson",
    "run_grid",
]

BYTE_BOS = 256
BYTE_EOS = 257
BYTE_PAD = 258
BYTE_VOCAB = 259


def tokenize(text: bytes | str) -> np.ndarray:
    """Bytes to ids; characters outside latin-1 must be encoded by the caller."""
    if isinstance(text, str):
        text = text.encode("utf-8")
    return np.frombuffer(text, dtype=np.uint8).astype(np.int64)


def detokenize(ids: np.ndarray) -> bytes:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() > 255):
        raise ValueError("detokenize: ids outside the byte range")
    return ids.astype(np.uint8).tobytes()


@dataclass
class Corpus:
    raw: bytes
    train_tokens: np.ndarray
    val_tokens: np.ndarray
    path: str = ""

    @property
    def n_train(self) -> int:
        return int(self.train_tokens.size)

    @property
    def n_val(self) -> int:
        return int(self.val_tokens.size)


def ingest_corpus(path, split_fraction: float = 0.9) -> Corpus:
    """Byte-level corpus with a deterministic head/tail split.

    The train split takes floor(n * split_fraction) bytes; validation gets
    the remainder.
    """
    p = Path(path)
    raw = p.read_bytes()
    if not raw:
        raise ValueError(f"ingest_corpus: {path} is empty")
    if not (0.0 < split_fraction < 1.0):
        raise ValueError("split_fraction must be in (0, 1)")
    tokens = tokenize(raw)
    n_train = int(len(raw) * split_fraction)
    if n_train == 0 or n_train == len(raw):
        raise ValueError(f"split_fraction {split_fraction} leaves an empty split")
    return Corpus(raw=raw, train_tokens=tokens[:n_train], val_tokens=tokens[n_train:],
                  path=str(path))


@dataclass(frozen=True)
class VariantSpec:
    label: str
    pe_kind: str
    alpha: float
    l_train: int
    seed: int


@dataclass(frozen=True)
class GridConfig:
    """Shared architecture/training knobs for every variant in a grid."""

    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    steps: int = 2000
    batch_size: int = 32
    lr: float = 3e-4
    metric_samples: int = 1024
    ppl_windows: int = 32
    learnable_max_position: int = 1024


@dataclass
class CorrelationReport:
    rows: list[dict]                    # per-variant measurements
    r_misalign: float | None            # Pearson r(L_misalign, long log-ppl)
    r_train: float | None               # Pearson r(L_train, long log-ppl)
    eval_length: int

    def to_csv(self, path) -> None:
        header = ["label", "pe", "alpha", "l_train", "loss_train", "misalign", "long_logppl"]
        rows = [
            (r["label"], r["pe"], r["alpha"], r["l_train"],
             r["loss_train"], r["misalign"], r["long_logppl"])
            for r in self.rows
        ]
        write_csv(path, header, rows)

    def to_json(self, path) -> None:
        write_json(path, {
            "rows": self.rows,
            "r_misalign": self.r_misalign,
            "r_train": self.r_train,
            "eval_length": self.eval_length,
        })


def pearson(xs, ys) -> float | None:
    """Pearson product-moment correlation; None marks undefined (zero variance)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError(f"pearson: need equal 1-d inputs, got {xs.shape} and {ys.shape}")
    if xs.size < 3:
        raise ValueError(f"pearson: need at least 3 points, got {xs.size}")
    xc = xs - xs.mean()
    yc = ys - ys.mean()
    sx = float(np.sqrt((xc * xc).sum()))
    sy = float(np.sqrt((yc * yc).sum()))
    if sx == 0.0 or sy == 0.0:
        return None
    return float((xc * yc).sum() / (sx * sy))


def run_grid(
    variants: list[VariantSpec],
    corpus: Corpus,
    eval_lengths: list[int],
    grid: GridConfig | None = None,
    progress=None,
) -> CorrelationReport:
    """Train every variant and correlate misalignment with long-length log-ppl.

    Each variant trains its own model (independent seed), then reports
    loss_train = log-ppl at l_train on the validation split, the SCE
    misalignment estimate, and log-ppl at max(eval_lengths).
    """
    if len(variants) < 3:
        raise ValueError(f"run_grid: need >= 3 variants for a correlation, got {len(variants)}")
    labels = [v.label for v in variants]
    if len(set(labels)) != len(labels):
        raise ValueError(f"run_grid: duplicate variant labels in {labels}")
    if not eval_lengths:
        raise ValueError("run_grid: eval_lengths must be non-empty")
    grid = grid or GridConfig()
    long_len = max(eval_lengths)
    rows = []
    for v in variants:
        pe_kwargs = {}
        if v.pe_kind == "learnable":
            pe_kwargs["max_position"] = grid.learnable_max_position
        mcfg = lm_config(
            v.pe_kind, seed=v.seed, d_model=grid.d_model, n_layers=grid.n_layers,
            n_heads=grid.n_heads, pe_kwargs=pe_kwargs,
        )
        tcfg = TrainConfig(model=mcfg, steps=grid.steps, batch_size=grid.batch_size,
                           lr=grid.lr, alpha=v.alpha, l_train=v.l_train, seed=v.seed)
        if progress:
            progress(f"training variant {v.label}")
        model, _ = train_lm(tcfg, corpus.train_tokens)
        loss_train = eval_ppl_at_length(model, corpus.val_tokens, v.l_train,
                                        grid.ppl_windows, seed=v.seed)
        mcfg_metric = MisalignConfig(l_train=v.l_train, variant="sce",
                                     n_samples=grid.metric_samples)
        metric = misalign_estimate(model, corpus.val_tokens, mcfg_metric,
                                   stream(v.seed, "grid-misalign"), seed=v.seed)
        long_logppl = eval_ppl_at_length(model, corpus.val_tokens, long_len,
                                         grid.ppl_windows, seed=v.seed)
        rows.append({
            "label": v.label,
            "pe": v.pe_kind,
            "alpha": v.alpha,
            "l_train": v.l_train,
            "loss_train": loss_train,
            "misalign": metric.estimate,
            "long_logppl": long_logppl,
        })
    rows.sort(key=lambda r: r["label"])
    r_mis = pearson([r["misalign"] for r in rows], [r["long_logppl"] for r in rows])
    r_train = pearson([r["loss_train"] for r in rows], [r["long_logppl"] for r in rows])
    return CorrelationReport(rows=rows, r_misalign=r_mis, r_train=r_train,
                             eval_length=long_len)

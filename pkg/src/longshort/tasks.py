"""Binary-sequence task data: targets, sampling schemes, and output reparameterization.

Tasks are mean / length / sum of a {0,1} sequence. Two dataset schemes exist:
``bernoulli-half`` fills positions with i.i.d. fair bits; ``uniform-count``
first draws the number of ones uniformly in [0, l] and then shuffles them in
(which makes the mean target uniform instead of concentrating near 0.5).

Output reparameterization trains the model on f(y) for an invertible f and
inverts at evaluation time. Inversion clamps out-of-range model outputs
(delta = 1e-6 by default) and evaluation reports carry a clamp counter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TASKS",
    "SCHEMES",
    "BIT0",
    "BIT1",
    "BOS",
    "EOS",
    "Reparameterization",
    "SyntheticSample",
    "target",
    "encode_bits",
    "sample_batch",
    "reparam_apply",
    "reparam_invert",
    "clamp_count",
    "dump_jsonl",
]

TASKS = ("mean", "length", "sum")
SCHEMES = ("bernoulli-half", "uniform-count")
REPARAM_KINDS = ("identity", "sqrt", "log", "inv-sqrt")

# fixed synthetic vocabulary
BIT0, BIT1, BOS, EOS = 0, 1, 2, 3


def target(task: str, bits) -> float:
    """Task target for a binary sequence: mean, length, or sum."""
    bits = np.asarray(bits)
    if bits.size == 0:
        raise ValueError("target: empty bit sequence")
    if task == "mean":
        return float(bits.mean())
    if task == "length":
        return float(bits.size)
    if task == "sum":
        return float(bits.sum())
    raise ValueError(f"unknown task {task!r}")


def encode_bits(bits) -> np.ndarray:
    """Token ids with BOS prepended and EOS appended."""
    bits = np.asarray(bits, dtype=np.int64)
    return np.concatenate([[BOS], bits, [EOS]])


@dataclass(frozen=True)
class Reparameterization:
    """Invertible target transform f with a clamp threshold for inversion."""

    kind: str = "identity"
    delta: float = 1e-6

    def __post_init__(self):
        if self.kind not in REPARAM_KINDS:
            raise ValueError(f"unknown reparameterization {self.kind!r}")
        if self.delta <= 0:
            raise ValueError("delta must be positive")


def reparam_apply(f: Reparameterization, y):
    """Apply f to a raw target; errors outside f's domain."""
    y = np.asarray(y, dtype=np.float64)
    if f.kind == "identity":
        out = y
    elif f.kind == "sqrt":
        if np.any(y < 0):
            raise ValueError("sqrt reparameterization needs y >= 0")
        out = np.sqrt(y)
    elif f.kind == "log":
        if np.any(y < f.delta):
            raise ValueError(f"log reparameterization needs y >= delta ({f.delta})")
        out = np.log(y)
    else:  # inv-sqrt
        if np.any(y < f.delta):
            raise ValueError(f"inv-sqrt reparameterization needs y >= delta ({f.delta})")
        out = 1.0 / np.sqrt(y)
    return float(out) if out.ndim == 0 else out


def reparam_invert(f: Reparameterization, z):
    """Invert f on a model output; out-of-range values are clamped first."""
    z = np.asarray(z, dtype=np.float64)
    if f.kind == "identity":
        out = z
    elif f.kind == "sqrt":
        out = np.maximum(z, 0.0) ** 2
    elif f.kind == "log":
        out = np.exp(np.minimum(z, 700.0))
    else:  # inv-sqrt
        out = 1.0 / np.maximum(z, f.delta) ** 2
    return float(out) if out.ndim == 0 else out


def clamp_count(f: Reparameterization, z) -> int:
    """How many entries of z would be clamped by reparam_invert."""
    z = np.asarray(z, dtype=np.float64)
    if f.kind == "sqrt":
        return int(np.sum(z < 0.0))
    if f.kind == "log":
        return int(np.sum(z > 700.0))
    if f.kind == "inv-sqrt":
        return int(np.sum(z < f.delta))
    return 0


@dataclass
class SyntheticSample:
    tokens: np.ndarray   # BOS + bits + EOS
    target: float        # f(raw_target)
    raw_target: float
    length: int

    @property
    def bits(self) -> np.ndarray:
        return self.tokens[1:-1]


def sample_batch(
    task: str,
    scheme: str,
    length_range: tuple[int, int],
    batch: int,
    rng: np.random.Generator,
    reparam: Reparameterization | None = None,
) -> list[SyntheticSample]:
    """Draw a batch of samples with lengths uniform in [lo, hi]."""
    lo, hi = length_range
    if not (1 <= lo <= hi):
        raise ValueError(f"invalid length range [{lo}, {hi}]")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    f = reparam or Reparameterization()
    out = []
    for _ in range(batch):
        l = int(rng.integers(lo, hi + 1))
        if scheme == "bernoulli-half":
            bits = rng.integers(0, 2, size=l)
        else:
            k = int(rng.integers(0, l + 1))
            bits = np.zeros(l, dtype=np.int64)
            bits[:k] = 1
            rng.shuffle(bits)
        raw = target(task, bits)
        out.append(SyntheticSample(tokens=encode_bits(bits), target=float(reparam_apply(f, raw)),
                                   raw_target=raw, length=l))
    return out


def dump_jsonl(samples: list[SyntheticSample], task: str, scheme: str, path) -> None:
    """Optional dataset dump, one JSON row per sample."""
    with open(path, "w") as fh:
        for s in samples:
            row = {"bits": [int(b) for b in s.bits], "task": task,
                   "target": s.target, "scheme": scheme}
            fh.write(json.dumps(row, sort_keys=True) + "\n")

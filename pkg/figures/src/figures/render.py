"""CSV parsing and the four plot kinds."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

KINDS = ("length-curve", "reparam-compare", "correlation-scatter", "loss-parts")

SCHEMAS = {
    "length-curve": ["length", "loss", "n", "clamped"],
    "reparam-compare": ["length", "loss", "n", "clamped"],
    "correlation-scatter": ["label", "pe", "alpha", "l_train", "loss_train",
                            "misalign", "long_logppl"],
    "loss-parts": ["step", "total", "ce", "misalign"],
}

TRAIN_SHADE = dict(color="red", alpha=0.12, zorder=0)


class SchemaError(ValueError):
    """A CSV is missing a column the plot kind requires."""


@dataclass
class PlotSpec:
    kind: str
    inputs: list[Path]
    output: Path
    l_train: int | None = None
    labels: list[str] = field(default_factory=list)
    y_scale: str | None = None  # default by kind

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}")
        if not self.inputs:
            raise ValueError("need at least one input CSV")
        missing = [str(p) for p in self.inputs if not Path(p).exists()]
        if missing:
            raise FileNotFoundError(f"input CSV not found: {', '.join(missing)}")

    def label_for(self, i: int) -> str:
        if i < len(self.labels):
            return self.labels[i]
        return Path(self.inputs[i]).stem


def read_table(path: Path, required: list[str]) -> dict[str, list[str]]:
    """Read a CSV and verify the required columns, naming any missing one."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise SchemaError(f"{path}: missing required column `{col}`")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return {col: [row[col] for row in rows] for col in header}


def _floats(table, col):
    return np.asarray([float(v) for v in table[col]])


def _shade_training_range(ax, l_train):
    if l_train is not None:
        ax.axvspan(1, l_train, label="_train_range", **TRAIN_SHADE)


def _pearson(xs, ys):
    xc, yc = xs - xs.mean(), ys - ys.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    return float((xc * yc).sum() / denom) if denom > 0 else float("nan")


def render(spec: PlotSpec):
    """Draw the figure for a spec, write it to spec.output, return the figure."""
    required = SCHEMAS[spec.kind]
    tables = [read_table(Path(p), required) for p in spec.inputs]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))

    if spec.kind in ("length-curve", "reparam-compare"):
        for i, table in enumerate(tables):
            ax.plot(_floats(table, "length"), _floats(table, "loss"),
                    marker=".", label=spec.label_for(i))
        _shade_training_range(ax, spec.l_train)
        ax.set_xlabel("test sequence length")
        ax.set_ylabel("test loss")
        ax.set_yscale(spec.y_scale or "log")
    elif spec.kind == "correlation-scatter":
        for i, table in enumerate(tables):
            xs, ys = _floats(table, "misalign"), _floats(table, "long_logppl")
            ax.scatter(xs, ys, label=spec.label_for(i))
            for label, x, y in zip(table["label"], xs, ys):
                ax.annotate(label, (x, y), fontsize=7,
                            textcoords="offset points", xytext=(4, 3))
        all_x = np.concatenate([_floats(t, "misalign") for t in tables])
        all_y = np.concatenate([_floats(t, "long_logppl") for t in tables])
        ax.set_title(f"Pearson r = {_pearson(all_x, all_y):.3f}")
        ax.set_xlabel("misalignment estimate")
        ax.set_ylabel("long-length log-perplexity")
        if spec.y_scale:
            ax.set_yscale(spec.y_scale)
    else:  # loss-parts
        for i, table in enumerate(tables):
            steps = _floats(table, "step")
            prefix = f"{spec.label_for(i)}: " if len(tables) > 1 else ""
            for part in ("total", "ce", "misalign"):
                ax.plot(steps, _floats(table, part), label=f"{prefix}{part}")
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        if spec.y_scale:
            ax.set_yscale(spec.y_scale)

    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output, dpi=130)
    return fig

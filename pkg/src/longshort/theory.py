"""Analytic linear-attention results: closed-form optima, error curves, bounds.

The tractable model is single-layer causal linear attention with
position-normalized output: on a binary prefix of length k the prediction is
(1/k) * Q_k * sum_i kappa(x_i), where Q_k is the query value of the last
token and kappa fuses the key and value of token x_i. Binary inputs reduce
the model to four numbers (q1, q0, kappa1, kappa0), and the all-prefix
training objective has closed-form optima:

    length: Gamma* = (l_train + 1) / 2          (q1 = q0, kappa1 = kappa0)
    sum:    Gamma* = l(l + 3) / (2 (l + H_l))   (q1 = q0, kappa0 = 0)
    mean:   q * kappa1 = 1, kappa0 = 0, loss 0

where Gamma is the query-kappa product and H_l the l-th harmonic number.
``fit_linear`` runs gradient descent with each task's optimality conditions
tied into the parameterization, so the fitted optimum lands on the manifold
the closed forms describe. Expectations over binary sequences are computed
exactly by enumerating ones-counts with binomial weights (no sampling).

For the language-side analysis the model gains an output projection W, and
the generalization error at length l_test is bounded by
C1 * misalign + C2 * train_loss + C0 with constants built from
N_l = floor((l_test - l_train) / l_extra); ``bound_constants`` computes them
and ``bound_check`` evaluates both sides of the inequality on truncation-
invariant data. The degenerate l = l_train point (l_extra = 0) is excluded
from the expectation over l, which is taken uniform on [1, l_train - 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

from .tasks import TASKS

__all__ = [
    "ReducedLinearParams",
    "FitConfig",
    "FitResult",
    "FitDiverged",
    "LinearAttentionModel",
    "TruncationInvariantData",
    "BoundReport",
    "harmonic",
    "gamma_star",
    "gen_error",
    "linear_forward",
    "enumerated_loss",
    "measured_gen_error",
    "achieved_mean_eps",
    "fit_linear",
    "bound_constants",
    "bound_check",
    "random_linear_model",
    "constant_target_data",
]


def harmonic(n: int) -> tuple[Fraction, float]:
    """n-th harmonic number, exact rational plus float rendering."""
    if n < 1:
        raise ValueError(f"harmonic: n must be >= 1, got {n}")
    h = sum((Fraction(1, i) for i in range(1, n + 1)), Fraction(0))
    return h, float(h)


def gamma_star(task: str, l_train: int) -> float:
    """Closed-form optimum of the shared query-kappa product for a task."""
    if l_train < 1:
        raise ValueError(f"gamma_star: l_train must be >= 1, got {l_train}")
    if task == "length":
        return (l_train + 1) / 2
    if task == "sum":
        h, _ = harmonic(l_train)
        return float(Fraction(l_train * (l_train + 3)) / (2 * (l_train + h)))
    if task == "mean":
        return 1.0
    raise ValueError(f"unknown task {task!r}")


def gen_error(task: str, l_train: int, l_test: int, eps: float = 0.0) -> float:
    """Closed-form generalization error of the fitted model at l_test."""
    if l_test < 1:
        raise ValueError(f"gen_error: l_test must be >= 1, got {l_test}")
    g = gamma_star(task, l_train)
    if task == "length":
        return (l_test - g) ** 2
    if task == "sum":
        return (l_test + 1) / (2 * l_test) * (g - l_test) ** 2
    if task == "mean":
        return (l_test + 1) / (2 * l_test) * eps ** 2
    raise ValueError(f"unknown task {task!r}")


@dataclass(frozen=True)
class ReducedLinearParams:
    """The four numbers a binary-input linear attention model reduces to."""

    q1: float      # query value when the last token is 1
    q0: float      # query value when the last token is 0
    kappa1: float  # fused key*value for token 1
    kappa0: float  # fused key*value for token 0

    def products(self) -> tuple[float, float, float, float]:
        """(q1*kappa1, q1*kappa0, q0*kappa1, q0*kappa0)."""
        return (self.q1 * self.kappa1, self.q1 * self.kappa0,
                self.q0 * self.kappa1, self.q0 * self.kappa0)

    def implied_gamma(self, task: str) -> float:
        a, b, c, d = self.products()
        if task == "length":
            return (a + b + c + d) / 4
        if task in ("sum", "mean"):
            return (a + c) / 2
        raise ValueError(f"unknown task {task!r}")


def linear_forward(params: ReducedLinearParams, prefix) -> float:
    """Prediction of the reduced model on a binary prefix."""
    prefix = np.asarray(prefix)
    if prefix.size == 0:
        raise ValueError("linear_forward: empty prefix")
    if not np.isin(prefix, (0, 1)).all():
        raise ValueError("linear_forward: prefix entries must be 0 or 1")
    k = prefix.size
    q = params.q1 if prefix[-1] == 1 else params.q0
    s = params.kappa1 * prefix.sum() + params.kappa0 * (k - prefix.sum())
    return float(q * s / k)


# ---------------------------------------------------------------------------
# exact enumeration of the all-prefix expected squared error
# ---------------------------------------------------------------------------

_TABLES: dict[tuple[str, int], tuple] = {}


def _length_table(task: str, l: int):
    """Per-length enumeration weights: counts i with last-token-split binomials."""
    key = (task, l)
    if key not in _TABLES:
        i = np.arange(l + 1, dtype=np.float64)
        denom = 2 ** l
        w1 = np.array([comb(l - 1, j - 1) / denom if j >= 1 else 0.0 for j in range(l + 1)])
        w0 = np.array([comb(l - 1, j) / denom if j <= l - 1 else 0.0 for j in range(l + 1)])
        if task == "length":
            y = np.full(l + 1, float(l))
        elif task == "sum":
            y = i.copy()
        else:
            y = i / l
        _TABLES[key] = (i, w1, w0, y)
    return _TABLES[key]


def _products_loss_grad(task: str, l_train: int, a: float, b: float, c: float, d: float):
    """Exact loss and gradient in product space (a, b, c, d).

    Overflow is tolerated (divergent fits are detected on the loss value).
    """
    loss = 0.0
    grad = np.zeros(4)
    with np.errstate(over="ignore", invalid="ignore"):
        for l in range(1, l_train + 1):
            i, w1, w0, y = _length_table(task, l)
            r1 = (i * a + (l - i) * b) / l - y
            r0 = (i * c + (l - i) * d) / l - y
            loss += (w1 * r1 * r1).sum() + (w0 * r0 * r0).sum()
            grad[0] += (w1 * 2 * r1 * i / l).sum()
            grad[1] += (w1 * 2 * r1 * (l - i) / l).sum()
            grad[2] += (w0 * 2 * r0 * i / l).sum()
            grad[3] += (w0 * 2 * r0 * (l - i) / l).sum()
    return loss / l_train, grad / l_train


def enumerated_loss(task: str, l_train: int, params: ReducedLinearParams) -> float:
    """Exact all-prefix expected squared error of the reduced model."""
    a, b, c, d = params.products()
    loss, _ = _products_loss_grad(task, l_train, a, b, c, d)
    return loss


def measured_gen_error(task: str, l_test: int, params: ReducedLinearParams) -> float:
    """Exact E over {0,1}^l_test of the squared error at a single test length."""
    a, b, c, d = params.products()
    i, w1, w0, y = _length_table(task, l_test)
    r1 = (i * a + (l_test - i) * b) / l_test - y
    r0 = (i * c + (l_test - i) * d) / l_test - y
    return float((w1 * r1 * r1).sum() + (w0 * r0 * r0).sum())


def achieved_mean_eps(params: ReducedLinearParams) -> float:
    """Deviation of a fitted mean-task model from the exact optimum (1, 0)."""
    a, b, c, d = params.products()
    return max(abs(a - 1.0), abs(c - 1.0), abs(b), abs(d))


@dataclass(frozen=True)
class FitConfig:
    lr: float = 1e-2
    max_steps: int = 20000
    tol: float = 1e-12
    init: float = 0.5


@dataclass
class FitResult:
    task: str
    l_train: int
    params: ReducedLinearParams
    implied_gamma: float
    final_loss: float
    steps_run: int
    loss_trace: list[float] = field(repr=False, default_factory=list)


class FitDiverged(RuntimeError):
    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


def fit_linear(task: str, l_train: int, opt: FitConfig | None = None) -> FitResult:
    """Full-batch gradient descent on the all-prefix objective.

    The optimality conditions of each task are tied into the parameterization
    (length: q1=q0 and kappa1=kappa0; sum/mean: q1=q0 and kappa0=0), so the
    fit converges onto the manifold the closed forms describe. Gradients come
    from the exact enumerated objective via the chain rule.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if l_train < 1:
        raise ValueError(f"fit_linear: l_train must be >= 1, got {l_train}")
    opt = opt or FitConfig()
    q, kappa = opt.init, opt.init
    trace: list[float] = []

    def assemble(qv: float, kv: float) -> tuple[float, float, float, float]:
        if task == "length":
            return qv * kv, qv * kv, qv * kv, qv * kv
        return qv * kv, 0.0, qv * kv, 0.0

    prev = None
    steps = 0
    for steps in range(1, opt.max_steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            a, b, c, d = assemble(q, kappa)
        loss, g = _products_loss_grad(task, l_train, a, b, c, d)
        trace.append(loss)
        if not np.isfinite(loss):
            raise FitDiverged(f"fit_linear({task}, {l_train}): loss diverged at step {steps}", trace)
        if task == "length":
            gq = kappa * (g[0] + g[1] + g[2] + g[3])
            gk = q * (g[0] + g[1] + g[2] + g[3])
        else:
            gq = kappa * (g[0] + g[2])
            gk = q * (g[0] + g[2])
        q -= opt.lr * gq
        kappa -= opt.lr * gk
        if prev is not None and abs(prev - loss) < opt.tol:
            break
        prev = loss

    if task == "length":
        params = ReducedLinearParams(q1=q, q0=q, kappa1=kappa, kappa0=kappa)
    else:
        params = ReducedLinearParams(q1=q, q0=q, kappa1=kappa, kappa0=0.0)
    final = enumerated_loss(task, l_train, params)
    return FitResult(task=task, l_train=l_train, params=params,
                     implied_gamma=params.implied_gamma(task),
                     final_loss=final, steps_run=steps, loss_trace=trace)


# ---------------------------------------------------------------------------
# Theorem-2 style bound for the language-task model
# ---------------------------------------------------------------------------


@dataclass
class LinearAttentionModel:
    """Full-matrix causal linear attention with an output projection."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    bq: np.ndarray
    bk: np.ndarray
    bv: np.ndarray
    w: np.ndarray

    def forward(self, emb_seq: np.ndarray) -> np.ndarray:
        """Output at the final position for embedded sequences (..., T, d)."""
        emb_seq = np.asarray(emb_seq, dtype=np.float64)
        single = emb_seq.ndim == 2
        if single:
            emb_seq = emb_seq[None]
        t = emb_seq.shape[-2]
        q_last = emb_seq[:, -1, :] @ self.wq + self.bq
        k = emb_seq @ self.wk + self.bk
        v = emb_seq @ self.wv + self.bv
        scores = np.einsum("bd,btd->bt", q_last, k)
        vw = v @ self.w
        out = np.einsum("bt,bto->bo", scores, vw) / t
        return out[0] if single else out

    def projection_norm_const(self) -> float:
        """Squared spectral norm of Wq Wk^T Wv W (the proof's operator constant)."""
        m = self.wq @ self.wk.T @ self.wv @ self.w
        return float(np.linalg.norm(m, 2) ** 2)


def random_linear_model(d: int, out_dim: int, scale: float, rng: np.random.Generator) -> LinearAttentionModel:
    return LinearAttentionModel(
        wq=rng.normal(0.0, scale, (d, d)),
        wk=rng.normal(0.0, scale, (d, d)),
        wv=rng.normal(0.0, scale, (d, d)),
        bq=rng.normal(0.0, scale, (d,)),
        bk=rng.normal(0.0, scale, (d,)),
        bv=rng.normal(0.0, scale, (d,)),
        w=rng.normal(0.0, scale, (d, out_dim)),
    )


@dataclass(frozen=True)
class TruncationInvariantData:
    """Token distribution plus a target that truncation cannot change.

    Tokens are i.i.d. uniform over the vocabulary; each id maps to a fixed
    unit-norm embedding row. The target is one constant vector for every
    sequence, which satisfies the bound's Pr(y differs under truncation) = 0
    assumption by construction.
    """

    embeddings: np.ndarray       # (vocab, d), unit rows
    target: np.ndarray           # (out_dim,)
    truncation_invariant: bool = True

    @property
    def vocab_size(self) -> int:
        return self.embeddings.shape[0]

    def sample_sequences(self, n: int, length: int, rng: np.random.Generator) -> np.ndarray:
        ids = rng.integers(0, self.vocab_size, size=(n, length))
        return self.embeddings[ids]


def constant_target_data(vocab_size: int, d: int, out_dim: int,
                         rng: np.random.Generator | None = None,
                         zero_target: bool = False) -> TruncationInvariantData:
    if rng is None and vocab_size != d:
        raise ValueError("one-hot embeddings need vocab_size == d; pass an rng otherwise")
    if rng is None:
        emb = np.eye(vocab_size)
    else:
        emb = rng.normal(0.0, 1.0, (vocab_size, d))
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    tgt = np.zeros(out_dim) if zero_target else np.full(out_dim, 1.0 / out_dim)
    return TruncationInvariantData(embeddings=emb, target=tgt)


@dataclass
class BoundReport:
    l_train: int
    l_test: int
    l_values: list[int]
    l_extra_values: list[int]
    n_values: list[int]
    c1_exp: float     # E_l[N_l + 2]
    c2_exp: float     # E_l[N_l (N_l + 2)]
    c1: float         # misalignment coefficient
    c2: float         # training-loss coefficient
    c0: float         # additive constant
    w_norm: float     # squared spectral norm of Wq Wk^T Wv W
    bound: float | None = None
    measured: float | None = None
    misalign: float | None = None
    train_loss: float | None = None


def bound_constants(l_train: int, l_test: int, w_norm: float = 0.0) -> BoundReport:
    """Bound constants from the piecewise l_extra rule and N_l counts.

    l ranges over [1, l_train - 1]; the l = l_train point makes l_extra zero
    and is excluded. For l below floor(l_train/2) the rule gives
    floor(l_train/2) - l, otherwise l_train - l.
    """
    if not (l_test > l_train >= 2):
        raise ValueError(f"bound_constants: need l_test > l_train >= 2, got {l_train}, {l_test}")
    half = l_train // 2
    ls, extras, ns = [], [], []
    for l in range(1, l_train):
        l_extra = half - l if l < half else l_train - l
        ls.append(l)
        extras.append(l_extra)
        ns.append((l_test - l_train) // l_extra)
    n_arr = np.asarray(ns, dtype=np.float64)
    c1_exp = float((n_arr + 2).mean())
    c2_exp = float((n_arr * (n_arr + 2)).mean())
    c1 = c2_exp + ((l_train - 1) // 2) / l_train
    c2 = c1_exp
    c0 = (c2_exp * l_test ** 2 * (w_norm ** 2 + 1) / (4 * l_train ** 2)
          + c1_exp * (6 * l_train - 3 - (-1) ** l_train) / (2 * l_train))
    return BoundReport(l_train=l_train, l_test=l_test, l_values=ls, l_extra_values=extras,
                       n_values=ns, c1_exp=c1_exp, c2_exp=c2_exp, c1=c1, c2=c2, c0=c0,
                       w_norm=w_norm)


def bound_check(
    model: LinearAttentionModel,
    data: TruncationInvariantData,
    l_train: int,
    l_test: int,
    rng: np.random.Generator,
    n_mc: int = 512,
) -> BoundReport:
    """Measure the L2 generalization error and evaluate the bound's right side."""
    if not data.truncation_invariant:
        raise ValueError("bound_check: data spec violates the truncation-invariance assumption")
    report = bound_constants(l_train, l_test, w_norm=model.projection_norm_const())
    y = data.target

    seqs = data.sample_sequences(n_mc, l_test, rng)
    err = model.forward(seqs) - y
    report.measured = float((err * err).sum(axis=-1).mean())

    seqs = data.sample_sequences(n_mc, l_train, rng)
    err = model.forward(seqs) - y
    report.train_loss = float((err * err).sum(axis=-1).mean())

    half = l_train // 2
    seqs = data.sample_sequences(n_mc, l_train, rng)
    l1 = rng.integers(half, l_train + 1, size=n_mc)
    l2 = rng.integers(half, l_train + 1, size=n_mc)
    vals = np.empty(n_mc)
    for i in range(n_mc):
        d1 = model.forward(seqs[i, l_train - l1[i]:, :])
        d2 = model.forward(seqs[i, l_train - l2[i]:, :])
        diff = d1 - d2
        vals[i] = (diff * diff).sum()
    report.misalign = float(vals.mean())

    report.bound = report.c1 * report.misalign + report.c2 * report.train_loss + report.c0
    return report

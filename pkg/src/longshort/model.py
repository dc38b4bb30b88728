"""Decoder-only transformer with swappable positional encodings.

The model is the empirical side of the study: a pre-norm causal transformer
with four positional-encoding variants (NoPE, learnable absolute, ALiBi,
RoPE) and either a scalar regression head (reads the last position) or an
LM head producing per-position next-token log-distributions.

All math runs on the autodiff Tensor, float64 throughout. Forward passes on a
frozen model are pure; training mutates parameters single-threaded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .artifacts import load_container, save_container
from .autodiff import Tensor, concat

__all__ = [
    "PositionalEncoding",
    "ModelConfig",
    "TransformerModel",
    "attention_bias",
    "default_alibi_slopes",
    "synthetic_config",
    "lm_config",
    "save_checkpoint",
    "load_checkpoint",
]

PE_KINDS = ("nope", "learnable", "alibi", "rope")
HEAD_KINDS = ("scalar", "lm")

MASK_FILL = -1e30  # drives masked attention weights to exactly 0 after softmax


class SequenceTooLong(ValueError):
    """Sequence exceeds the learnable positional table."""


def default_alibi_slopes(n_heads: int) -> tuple[float, ...]:
    """Geometric slope schedule 2^(-8k/n_heads), k = 1..n_heads."""
    return tuple(2.0 ** (-8.0 * (k + 1) / n_heads) for k in range(n_heads))


@dataclass(frozen=True)
class PositionalEncoding:
    """One of nope / learnable / alibi / rope, with its variant parameters."""

    kind: str
    max_position: int | None = None          # learnable
    slopes: tuple[float, ...] | None = None  # alibi; default derived from n_heads
    base: float = 10000.0                    # rope

    def __post_init__(self):
        if self.kind not in PE_KINDS:
            raise ValueError(f"unknown positional encoding kind {self.kind!r}")
        if self.kind == "learnable":
            if self.max_position is None or self.max_position < 1:
                raise ValueError("learnable positional encoding needs max_position >= 1")
        if self.kind == "alibi" and self.slopes is not None:
            if any(s <= 0 for s in self.slopes):
                raise ValueError("alibi slopes must be strictly positive")
        if self.kind == "rope" and self.base <= 1.0:
            raise ValueError("rope base must be > 1")

    @classmethod
    def nope(cls) -> "PositionalEncoding":
        return cls(kind="nope")

    @classmethod
    def learnable(cls, max_position: int = 512) -> "PositionalEncoding":
        return cls(kind="learnable", max_position=max_position)

    @classmethod
    def alibi(cls, slopes: tuple[float, ...] | None = None) -> "PositionalEncoding":
        return cls(kind="alibi", slopes=slopes)

    @classmethod
    def rope(cls, base: float = 10000.0) -> "PositionalEncoding":
        return cls(kind="rope", base=base)

    @classmethod
    def of(cls, kind: str, **kwargs) -> "PositionalEncoding":
        if kind not in PE_KINDS:
            raise ValueError(f"unknown positional encoding kind {kind!r}")
        return getattr(cls, kind if kind != "nope" else "nope")(**kwargs)


@dataclass(frozen=True)
class ModelConfig:
    d_model: int
    n_layers: int
    n_heads: int
    ffn_multiplier: int
    vocab_size: int
    pe: PositionalEncoding
    head_kind: str
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.vocab_size < 4:
            raise ValueError("vocab_size must be >= 4 (0, 1, BOS, EOS)")
        if self.head_kind not in HEAD_KINDS:
            raise ValueError(f"unknown head kind {self.head_kind!r}")
        if self.pe.kind == "rope" and (self.d_model // self.n_heads) % 2 != 0:
            raise ValueError("rope needs an even head dimension")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def alibi_slopes(self) -> tuple[float, ...]:
        return self.pe.slopes if self.pe.slopes is not None else default_alibi_slopes(self.n_heads)

    def to_dict(self) -> dict:
        pe = {"kind": self.pe.kind}
        if self.pe.kind == "learnable":
            pe["max_position"] = self.pe.max_position
        if self.pe.kind == "alibi" and self.pe.slopes is not None:
            pe["slopes"] = list(self.pe.slopes)
        if self.pe.kind == "rope":
            pe["base"] = self.pe.base
        return {
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "ffn_multiplier": self.ffn_multiplier,
            "vocab_size": self.vocab_size,
            "head_kind": self.head_kind,
            "seed": self.seed,
            "pe": pe,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        pe_d = dict(d["pe"])
        kind = pe_d.pop("kind")
        if "slopes" in pe_d:
            pe_d["slopes"] = tuple(pe_d["slopes"])
        pe = PositionalEncoding(kind=kind, **pe_d)
        return cls(
            d_model=d["d_model"],
            n_layers=d["n_layers"],
            n_heads=d["n_heads"],
            ffn_multiplier=d["ffn_multiplier"],
            vocab_size=d["vocab_size"],
            pe=pe,
            head_kind=d["head_kind"],
            seed=d["seed"],
        )


def synthetic_config(pe_kind: str = "nope", seed: int = 0, **overrides) -> ModelConfig:
    """Default architecture for the binary-sequence tasks (fits l_train=10 in minutes)."""
    pe_kwargs = overrides.pop("pe_kwargs", {})
    cfg = dict(d_model=64, n_layers=2, n_heads=2, ffn_multiplier=4, vocab_size=4,
               pe=PositionalEncoding.of(pe_kind, **pe_kwargs), head_kind="scalar", seed=seed)
    cfg.update(overrides)
    return ModelConfig(**cfg)


def lm_config(pe_kind: str = "nope", seed: int = 0, **overrides) -> ModelConfig:
    """Default byte-level LM architecture (256 bytes + BOS/EOS/PAD)."""
    pe_kwargs = overrides.pop("pe_kwargs", {})
    cfg = dict(d_model=128, n_layers=4, n_heads=4, ffn_multiplier=4, vocab_size=259,
               pe=PositionalEncoding.of(pe_kind, **pe_kwargs), head_kind="lm", seed=seed)
    cfg.update(overrides)
    return ModelConfig(**cfg)


def attention_bias(pe: PositionalEncoding, query_pos: int, key_pos: int, head: int,
                   n_heads: int = 1) -> float:
    """Additive attention-score bias for one (query, key, head) triple.

    Only ALiBi contributes here; the other kinds act on embeddings or on
    query/key rotations and return 0.
    """
    if key_pos > query_pos:
        raise ValueError(f"attention_bias: key_pos {key_pos} > query_pos {query_pos} is masked")
    if pe.kind != "alibi":
        return 0.0
    slopes = pe.slopes if pe.slopes is not None else default_alibi_slopes(n_heads)
    return -slopes[head] * (query_pos - key_pos)


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    out = x @ w
    return out + b.broadcast_to(out.shape)


def _layernorm(x: Tensor, g: Tensor, b: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    mu = x.sum(axis=-1, keepdims=True).scale(1.0 / d)
    xc = x - mu.broadcast_to(x.shape)
    var = (xc * xc).sum(axis=-1, keepdims=True).scale(1.0 / d)
    inv = var.addc(eps).sqrt().reciprocal()
    y = xc * inv.broadcast_to(x.shape)
    return y * g.broadcast_to(x.shape) + b.broadcast_to(x.shape)


_GELU_C = math.sqrt(2.0 / math.pi)


def _gelu(x: Tensor) -> Tensor:
    # tanh approximation; smooth everywhere so finite-difference checks pass
    x3 = x * x * x
    inner = (x + x3.scale(0.044715)).scale(_GELU_C)
    return x.scale(0.5) * inner.tanh().addc(1.0)


def _rotate_half(x: Tensor) -> Tensor:
    half = x.shape[-1] // 2
    return concat([-x[..., half:], x[..., :half]], axis=-1)


class TransformerModel:
    """Causal transformer; parameters live in a flat name->Tensor dict."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.params: dict[str, Tensor] = {}
        self._mask_cache: dict[int, np.ndarray] = {}
        self._alibi_cache: dict[int, np.ndarray] = {}
        self._rope_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._init_params(np.random.default_rng(config.seed))

    def _add_param(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(value, requires_grad=True)

    def _init_params(self, rng: np.random.Generator) -> None:
        cfg = self.config
        d, f = cfg.d_model, cfg.d_model * cfg.ffn_multiplier

        def w(shape, std):
            return rng.normal(0.0, std, size=shape)

        self._add_param("embed.tok", w((cfg.vocab_size, d), 0.02))
        if cfg.pe.kind == "learnable":
            self._add_param("embed.pos", w((cfg.pe.max_position, d), 0.02))
        for i in range(cfg.n_layers):
            pfx = f"layers.{i}"
            self._add_param(f"{pfx}.ln1.g", np.ones(d))
            self._add_param(f"{pfx}.ln1.b", np.zeros(d))
            for nm in ("wq", "wk", "wv", "wo"):
                self._add_param(f"{pfx}.attn.{nm}", w((d, d), d ** -0.5))
            for nm in ("bq", "bk", "bv", "bo"):
                self._add_param(f"{pfx}.attn.{nm}", np.zeros(d))
            self._add_param(f"{pfx}.ln2.g", np.ones(d))
            self._add_param(f"{pfx}.ln2.b", np.zeros(d))
            self._add_param(f"{pfx}.ffn.w1", w((d, f), d ** -0.5))
            self._add_param(f"{pfx}.ffn.b1", np.zeros(f))
            self._add_param(f"{pfx}.ffn.w2", w((f, d), f ** -0.5))
            self._add_param(f"{pfx}.ffn.b2", np.zeros(d))
        self._add_param("ln_f.g", np.ones(d))
        self._add_param("ln_f.b", np.zeros(d))
        # heads start at zero: a fresh scalar head predicts 0.0 and a fresh LM
        # head is exactly uniform over the vocabulary
        if cfg.head_kind == "scalar":
            self._add_param("head.w1", w((d, d), d ** -0.5))
            self._add_param("head.b1", np.zeros(d))
            self._add_param("head.w2", np.zeros((d, 1)))
            self._add_param("head.b2", np.zeros(1))
        else:
            self._add_param("head.w", np.zeros((d, cfg.vocab_size)))
            self._add_param("head.b", np.zeros(cfg.vocab_size))

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- cached position-dependent constants --------------------------------

    def _causal_mask(self, t: int) -> np.ndarray:
        if t not in self._mask_cache:
            self._mask_cache[t] = np.triu(np.ones((t, t), dtype=bool), k=1)
        return self._mask_cache[t]

    def _alibi_bias(self, t: int) -> np.ndarray:
        if t not in self._alibi_cache:
            slopes = np.asarray(self.config.alibi_slopes())
            dist = np.arange(t)[:, None] - np.arange(t)[None, :]
            bias = -slopes[:, None, None] * np.maximum(dist, 0)[None, :, :]
            self._alibi_cache[t] = bias
        return self._alibi_cache[t]

    def _rope_tables(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        if t not in self._rope_cache:
            dh = self.config.head_dim
            freqs = self.config.pe.base ** (-np.arange(0, dh, 2) / dh)
            angles = np.arange(t)[:, None] * freqs[None, :]
            cos = np.concatenate([np.cos(angles), np.cos(angles)], axis=-1)
            sin = np.concatenate([np.sin(angles), np.sin(angles)], axis=-1)
            self._rope_cache[t] = (cos, sin)
        return self._rope_cache[t]

    # -- forward --------------------------------------------------------------

    def _validate_ids(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            raise ValueError("forward: empty token sequence")
        if ids.min() < 0 or ids.max() >= self.config.vocab_size:
            raise ValueError(
                f"forward: token ids must lie in [0, {self.config.vocab_size}), "
                f"got range [{ids.min()}, {ids.max()}]"
            )
        return ids

    def forward_hidden(self, ids: np.ndarray) -> Tensor:
        """Hidden states (B, T, d_model) after the final layer norm."""
        ids = self._validate_ids(ids)
        if ids.ndim == 1:
            ids = ids[None, :]
        cfg, p = self.config, self.params
        b, t = ids.shape
        h_heads, dh = cfg.n_heads, cfg.head_dim

        x = p["embed.tok"].embedding(ids)
        if cfg.pe.kind == "learnable":
            if t > cfg.pe.max_position:
                raise SequenceTooLong(
                    f"sequence length {t} exceeds learnable max_position {cfg.pe.max_position}"
                )
            x = x + p["embed.pos"][0:t].broadcast_to((b, t, cfg.d_model))

        mask = np.broadcast_to(self._causal_mask(t), (b, h_heads, t, t))
        if cfg.pe.kind == "alibi":
            alibi = Tensor(np.broadcast_to(self._alibi_bias(t), (b, h_heads, t, t)))
        if cfg.pe.kind == "rope":
            cos_np, sin_np = self._rope_tables(t)
            cos = Tensor(np.broadcast_to(cos_np, (b, h_heads, t, dh)))
            sin = Tensor(np.broadcast_to(sin_np, (b, h_heads, t, dh)))

        for i in range(cfg.n_layers):
            pfx = f"layers.{i}"
            hn = _layernorm(x, p[f"{pfx}.ln1.g"], p[f"{pfx}.ln1.b"])
            q = _linear(hn, p[f"{pfx}.attn.wq"], p[f"{pfx}.attn.bq"])
            k = _linear(hn, p[f"{pfx}.attn.wk"], p[f"{pfx}.attn.bk"])
            v = _linear(hn, p[f"{pfx}.attn.wv"], p[f"{pfx}.attn.bv"])
            q = q.reshape(b, t, h_heads, dh).transpose(0, 2, 1, 3)
            k = k.reshape(b, t, h_heads, dh).transpose(0, 2, 1, 3)
            v = v.reshape(b, t, h_heads, dh).transpose(0, 2, 1, 3)
            if cfg.pe.kind == "rope":
                q = q * cos + _rotate_half(q) * sin
                k = k * cos + _rotate_half(k) * sin
            att = (q @ k.transpose(0, 1, 3, 2)).scale(dh ** -0.5)
            if cfg.pe.kind == "alibi":
                att = att + alibi
            att = att.masked_fill(mask, MASK_FILL)
            w = att.log_softmax().exp()
            ctx = (w @ v).transpose(0, 2, 1, 3).reshape(b, t, cfg.d_model)
            x = x + _linear(ctx, p[f"{pfx}.attn.wo"], p[f"{pfx}.attn.bo"])

            hn2 = _layernorm(x, p[f"{pfx}.ln2.g"], p[f"{pfx}.ln2.b"])
            up = _gelu(_linear(hn2, p[f"{pfx}.ffn.w1"], p[f"{pfx}.ffn.b1"]))
            x = x + _linear(up, p[f"{pfx}.ffn.w2"], p[f"{pfx}.ffn.b2"])

        return _layernorm(x, p["ln_f.g"], p["ln_f.b"])

    def forward_lm(self, ids: np.ndarray) -> Tensor:
        """Per-position next-token log-probability rows.

        Row t is the log-distribution over the token following position t,
        conditioned on tokens 0..t. Shape matches the input rank: (T, V) for
        a single sequence, (B, T, V) for a batch.
        """
        if self.config.head_kind != "lm":
            raise ValueError("forward_lm requires head_kind='lm'")
        ids = np.asarray(ids, dtype=np.int64)
        single = ids.ndim == 1
        h = self.forward_hidden(ids)
        logits = _linear(h, self.params["head.w"], self.params["head.b"])
        rows = logits.log_softmax()
        return rows[0] if single else rows

    def forward_scalar(self, ids: np.ndarray, last_index: np.ndarray | None = None) -> Tensor:
        """Scalar prediction from the FFN head applied at the last position.

        For right-padded batches pass ``last_index`` (per-sample index of the
        final real token); the causal mask keeps padding from leaking into it.
        """
        if self.config.head_kind != "scalar":
            raise ValueError("forward_scalar requires head_kind='scalar'")
        ids = np.asarray(ids, dtype=np.int64)
        single = ids.ndim == 1
        h = self.forward_hidden(ids)
        b, t, d = h.shape
        if last_index is None:
            h_last = h[:, t - 1, :]
        else:
            last_index = np.asarray(last_index, dtype=np.int64)
            h_last = h[np.arange(b), last_index]
        p = self.params
        y = _gelu(_linear(h_last, p["head.w1"], p["head.b1"]))
        out = _linear(y, p["head.w2"], p["head.b2"])[:, 0]
        return out[0] if single else out

    # -- persistence ------------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {f"param.{name}": p.data.copy() for name, p in self.params.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        expect = {f"param.{name}" for name in self.params}
        got = set(arrays)
        if expect != got:
            missing, extra = sorted(expect - got), sorted(got - expect)
            raise ValueError(f"checkpoint mismatch: missing {missing}, unexpected {extra}")
        for name, p in self.params.items():
            arr = arrays[f"param.{name}"]
            if arr.shape != p.data.shape:
                raise ValueError(f"checkpoint param {name}: shape {arr.shape} vs {p.data.shape}")
            p.data = arr.astype(np.float64)

    def clone_params(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def restore_params(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, arr in snapshot.items():
            self.params[name].data = arr.copy()


def save_checkpoint(model: TransformerModel, path) -> None:
    save_container(path, {"config": model.config.to_dict()}, model.state_arrays())


def load_checkpoint(path) -> TransformerModel:
    header, arrays = load_container(path)
    model = TransformerModel(ModelConfig.from_dict(header["config"]))
    model.load_state_arrays(arrays)
    return model

"""A small transformer encoder for token tagging, with manual backprop.

Four input/output wirings share one encoder stack:

``text_only``
    token + position + segment embeddings, 2-way tag head.
``redace``
    adds a learned confidence-bin embedding to each token's input sum; the
    lookup matrix has ``num_bins + 1`` rows, the extra row serving CLS/SEP/
    PAD which carry no confidence.
``concat_score``
    appends the raw word confidence to each final hidden vector, so the tag
    head takes ``hidden + 1`` inputs (0.0 at special tokens).
``mlm``
    vocabulary-sized head for masked-token prediction.

Everything runs in float64 and the analytic gradients are verified against
central finite differences in the test suite, so numerical shortcuts are
deliberately avoided.
"""

from dataclasses import dataclass
from pathlib import Path

import json

import numpy as np
from scipy.special import erf

from .encode import CLS_ID, MASK_ID, PAD_ID, SEP_ID, TokenizedExample
from .errors import ConfigurationError, DataError, NumericalError

TEXT_ONLY = "text_only"
REDACE = "redace"
CONCAT_SCORE = "concat_score"
MLM = "mlm"
MODES = (TEXT_ONLY, REDACE, CONCAT_SCORE, MLM)

_LN_EPS = 1e-12
_MASK_BIAS = -1e9
_INIT_STD = 0.02
_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 2
    num_heads: int = 4
    hidden: int = 64
    ffn_dim: int = 256
    vocab_size: int = 2048
    num_bins: int = 10
    max_len: int = 128
    dropout: float = 0.1
    mode: str = REDACE

    def __post_init__(self):
        if self.hidden % self.num_heads != 0:
            raise ConfigurationError(
                f"hidden {self.hidden} not divisible by num_heads {self.num_heads}"
            )
        if self.num_bins < 1:
            raise ConfigurationError("num_bins must be >= 1")
        if self.max_len < 3:
            raise ConfigurationError("max_len must be >= 3 (CLS + token + SEP)")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must be in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.num_heads

    @property
    def num_classes(self) -> int:
        return self.vocab_size if self.mode == MLM else 2

    def to_dict(self) -> dict:
        return {
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "hidden": self.hidden,
            "ffn_dim": self.ffn_dim,
            "vocab_size": self.vocab_size,
            "num_bins": self.num_bins,
            "max_len": self.max_len,
            "dropout": self.dropout,
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every parameter tensor of this configuration."""
    h, f = cfg.hidden, cfg.ffn_dim
    shapes: dict[str, tuple[int, ...]] = {
        "token_embedding": (cfg.vocab_size, h),
        "position_embedding": (cfg.max_len, h),
        "segment_embedding": (2, h),
        "confidence_embedding": (cfg.num_bins + 1, h),
    }
    for l in range(cfg.num_layers):
        p = f"layer{l}."
        for name in ("wq", "wk", "wv", "wo"):
            shapes[p + f"attn.{name}"] = (h, h)
            shapes[p + f"attn.b{name[1]}"] = (h,)
        shapes[p + "ln1.gamma"] = (h,)
        shapes[p + "ln1.beta"] = (h,)
        shapes[p + "ffn.w1"] = (h, f)
        shapes[p + "ffn.b1"] = (f,)
        shapes[p + "ffn.w2"] = (f, h)
        shapes[p + "ffn.b2"] = (h,)
        shapes[p + "ln2.gamma"] = (h,)
        shapes[p + "ln2.beta"] = (h,)
    if cfg.mode == MLM:
        shapes["mlm_head.w"] = (h, cfg.vocab_size)
        shapes["mlm_head.b"] = (cfg.vocab_size,)
    else:
        head_in = h + 1 if cfg.mode == CONCAT_SCORE else h
        shapes["tag_head.w"] = (head_in, 2)
        shapes["tag_head.b"] = (2,)
    return shapes


def _truncated_normal(rng: np.random.Generator, shape, std=_INIT_STD, clip=2.0):
    out = rng.standard_normal(shape)
    bad = np.abs(out) > clip
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > clip
    return out * std


def init_params(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Truncated-normal weights (sigma 0.02, cut at 2 sigma), zero biases,
    identity layer norms. Deterministic given the seed."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg).items():
        base = name.rsplit(".", 1)[-1]
        if base in ("gamma",):
            params[name] = np.ones(shape)
        elif base.startswith("b") or base == "beta":
            params[name] = np.zeros(shape)
        else:
            params[name] = _truncated_normal(rng, shape)
    return params


def validate_params(cfg: ModelConfig, params: dict[str, np.ndarray]) -> None:
    expected = param_shapes(cfg)
    if set(params) != set(expected):
        missing = set(expected) - set(params)
        extra = set(params) - set(expected)
        raise ConfigurationError(f"parameter names mismatch: -{missing} +{extra}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ConfigurationError(
                f"{name}: shape {params[name].shape}, config wants {shape}"
            )
        if not np.isfinite(params[name]).all():
            raise NumericalError(f"{name} contains non-finite values")


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return cdf + x * pdf


def _softmax(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _layer_norm(x, gamma, beta):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv_std
    return gamma * xhat + beta, (xhat, inv_std)


def _layer_norm_backward(dy, cache, gamma):
    xhat, inv_std = cache
    dgamma = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    dbeta = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * gamma
    dx = inv_std * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgamma, dbeta


def embed(
    token_ids: np.ndarray,
    positions: np.ndarray,
    segments: np.ndarray,
    conf_bins: np.ndarray,
    params: dict[str, np.ndarray],
    mode: str,
) -> np.ndarray:
    """Input representation: token + position + segment sums, plus the
    confidence-bin embedding when the mode is confidence-aware."""
    tok = params["token_embedding"]
    pos = params["position_embedding"]
    seg = params["segment_embedding"]
    if token_ids.min() < 0 or token_ids.max() >= tok.shape[0]:
        raise DataError("token id out of range")
    if positions.min() < 0 or positions.max() >= pos.shape[0]:
        raise DataError("position out of range")
    if segments.min() < 0 or segments.max() >= seg.shape[0]:
        raise DataError("segment id out of range")
    x = tok[token_ids] + pos[positions] + seg[segments]
    if mode == REDACE:
        conf = params["confidence_embedding"]
        if conf_bins.min() < 0 or conf_bins.max() >= conf.shape[0]:
            raise DataError("confidence bin out of range")
        x = x + conf[conf_bins]
    return x


@dataclass
class ForwardTrace:
    logits: np.ndarray  # (attention_len, num_classes) for single examples
    cache: dict


def _dropout_mask(rng, shape, rate):
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _forward_batch(params, cfg, batch, train=False, drop_rng=None):
    """Encoder forward over a padded batch. Returns (logits, cache)."""
    ids = batch["token_ids"]
    n, t = ids.shape
    lengths = batch["lengths"]
    positions = np.broadcast_to(np.arange(t), (n, t))
    segments = np.zeros((n, t), dtype=np.int64)
    valid = np.arange(t) < lengths[:, None]  # (n, t) key mask

    x = embed(ids, positions, segments, batch["conf_bins"], params, cfg.mode)
    cache = {"batch": batch, "cfg": cfg, "params": params, "valid": valid, "layers": []}

    use_dropout = train and cfg.dropout > 0.0
    if use_dropout:
        cache["drop_embed"] = _dropout_mask(drop_rng, x.shape, cfg.dropout)
        x = x * cache["drop_embed"]

    bias = np.where(valid, 0.0, _MASK_BIAS)[:, None, None, :]  # (n,1,1,t)
    a, dh = cfg.num_heads, cfg.head_dim
    scale = 1.0 / np.sqrt(dh)

    def split_heads(z):
        return z.reshape(n, t, a, dh).transpose(0, 2, 1, 3)

    def merge_heads(z):
        return z.transpose(0, 2, 1, 3).reshape(n, t, a * dh)

    for l in range(cfg.num_layers):
        p = f"layer{l}."
        lc = {"x_in": x}
        q = x @ params[p + "attn.wq"] + params[p + "attn.bq"]
        k = x @ params[p + "attn.wk"] + params[p + "attn.bk"]
        v = x @ params[p + "attn.wv"] + params[p + "attn.bv"]
        qh, kh, vh = split_heads(q), split_heads(k), split_heads(v)
        scores = qh @ kh.transpose(0, 1, 3, 2) * scale + bias
        probs = _softmax(scores)
        ctx = merge_heads(probs @ vh)
        attn_out = ctx @ params[p + "attn.wo"] + params[p + "attn.bo"]
        if use_dropout:
            lc["drop_attn"] = _dropout_mask(drop_rng, attn_out.shape, cfg.dropout)
            attn_out = attn_out * lc["drop_attn"]
        lc.update(qh=qh, kh=kh, vh=vh, probs=probs, ctx=ctx)
        x1, lc["ln1"] = _layer_norm(x + attn_out, params[p + "ln1.gamma"], params[p + "ln1.beta"])

        f1 = x1 @ params[p + "ffn.w1"] + params[p + "ffn.b1"]
        g = _gelu(f1)
        f2 = g @ params[p + "ffn.w2"] + params[p + "ffn.b2"]
        if use_dropout:
            lc["drop_ffn"] = _dropout_mask(drop_rng, f2.shape, cfg.dropout)
            f2 = f2 * lc["drop_ffn"]
        lc.update(x1=x1, f1=f1, g=g)
        x, lc["ln2"] = _layer_norm(x1 + f2, params[p + "ln2.gamma"], params[p + "ln2.beta"])
        cache["layers"].append(lc)

    if cfg.mode == MLM:
        logits = x @ params["mlm_head.w"] + params["mlm_head.b"]
        cache["head_in"] = x
    else:
        head_in = x
        if cfg.mode == CONCAT_SCORE:
            head_in = np.concatenate([x, batch["conf_scores"][..., None]], axis=-1)
        logits = head_in @ params["tag_head.w"] + params["tag_head.b"]
        cache["head_in"] = head_in

    if not np.isfinite(logits).all():
        raise NumericalError("non-finite logits in forward pass")
    return logits, cache


def token_cross_entropy(logits, labels, loss_mask):
    """Mean cross entropy over masked-in positions; also returns dlogits."""
    n_valid = int(loss_mask.sum())
    if n_valid == 0:
        raise DataError("no positions contribute to the loss")
    probs = _softmax(logits)
    rows = np.take_along_axis(probs, labels[..., None], axis=-1)[..., 0]
    loss = float(-(np.log(np.clip(rows, 1e-300, None)) * loss_mask).sum() / n_valid)
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
    dlogits = (probs - onehot) * (loss_mask[..., None] / n_valid)
    return loss, dlogits


def _backward_batch(params, cfg, cache, dlogits):
    """Exact gradients of the scalar loss whose dlogits are given."""
    grads = {name: np.zeros_like(arr) for name, arr in params.items()}
    batch = cache["batch"]
    n, t = batch["token_ids"].shape
    a, dh = cfg.num_heads, cfg.head_dim
    scale = 1.0 / np.sqrt(dh)
    drops = list(cache["drops"])

    head_in = cache["head_in"]
    if cfg.mode == MLM:
        grads["mlm_head.w"] = np.einsum("nth,ntc->hc", head_in, dlogits)
        grads["mlm_head.b"] = dlogits.sum(axis=(0, 1))
        dx = dlogits @ params["mlm_head.w"].T
    else:
        grads["tag_head.w"] = np.einsum("nth,ntc->hc", head_in, dlogits)
        grads["tag_head.b"] = dlogits.sum(axis=(0, 1))
        dhead_in = dlogits @ params["tag_head.w"].T
        dx = dhead_in[..., : cfg.hidden] if cfg.mode == CONCAT_SCORE else dhead_in

    def split_heads(z):
        return z.reshape(n, t, a, dh).transpose(0, 2, 1, 3)

    def merge_heads(z):
        return z.transpose(0, 2, 1, 3).reshape(n, t, a * dh)

    for l in reversed(range(cfg.num_layers)):
        p = f"layer{l}."
        lc = cache["layers"][l]

        dr2, dg2, db2 = _layer_norm_backward(dx, lc["ln2"], params[p + "ln2.gamma"])
        grads[p + "ln2.gamma"] = dg2
        grads[p + "ln2.beta"] = db2
        df2 = dr2
        if drops and cache["cfg"].dropout > 0.0 and len(drops) == 1 + 2 * l + 2:
            df2 = df2 * drops.pop()
        grads[p + "ffn.w2"] = np.einsum("ntf,nth->fh", lc["g"], df2)
        grads[p + "ffn.b2"] = df2.sum(axis=(0, 1))
        dg = df2 @ params[p + "ffn.w2"].T
        df1 = dg * _gelu_grad(lc["f1"])
        grads[p + "ffn.w1"] = np.einsum("nth,ntf->hf", lc["x1"], df1)
        grads[p + "ffn.b1"] = df1.sum(axis=(0, 1))
        dx1 = dr2 + df1 @ params[p + "ffn.w1"].T

        dr1, dg1, db1 = _layer_norm_backward(dx1, lc["ln1"], params[p + "ln1.gamma"])
        grads[p + "ln1.gamma"] = dg1
        grads[p + "ln1.beta"] = db1
        dattn = dr1
        if drops and cache["cfg"].dropout > 0.0 and len(drops) == 1 + 2 * l + 1:
            dattn = dattn * drops.pop()
        grads[p + "attn.wo"] = np.einsum("nth,ntk->hk", lc["ctx"], dattn)
        grads[p + "attn.bo"] = dattn.sum(axis=(0, 1))
        dctx = split_heads(dattn @ params[p + "attn.wo"].T)
        dprobs = dctx @ lc["vh"].transpose(0, 1, 3, 2)
        dvh = lc["probs"].transpose(0, 1, 3, 2) @ dctx
        probs = lc["probs"]
        dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
        dqh = dscores @ lc["kh"] * scale
        dkh = dscores.transpose(0, 1, 3, 2) @ lc["qh"] * scale
        dq, dk, dv = merge_heads(dqh), merge_heads(dkh), merge_heads(dvh)
        x_in = lc["x_in"]
        grads[p + "attn.wq"] = np.einsum("nth,ntk->hk", x_in, dq)
        grads[p + "attn.bq"] = dq.sum(axis=(0, 1))
        grads[p + "attn.wk"] = np.einsum("nth,ntk->hk", x_in, dk)
        grads[p + "attn.bk"] = dk.sum(axis=(0, 1))
        grads[p + "attn.wv"] = np.einsum("nth,ntk->hk", x_in, dv)
        grads[p + "attn.bv"] = dv.sum(axis=(0, 1))
        dx = (
            dr1
            + dq @ params[p + "attn.wq"].T
            + dk @ params[p + "attn.wk"].T
            + dv @ params[p + "attn.wv"].T
        )

    if drops:
        dx = dx * drops.pop()

    ids = batch["token_ids"]
    np.add.at(grads["token_embedding"], ids, dx)
    grads["position_embedding"][:t] = dx.sum(axis=0)
    grads["segment_embedding"][0] = dx.sum(axis=(0, 1))
    if cfg.mode == REDACE:
        np.add.at(grads["confidence_embedding"], batch["conf_bins"], dx)
    return grads


def example_batch(example: TokenizedExample, with_labels=False) -> dict:
    """Batch-of-one view of a tokenized example (full padded length)."""
    batch = {
        "token_ids": example.token_ids[None, :].copy(),
        "conf_bins": example.conf_bins[None, :],
        "conf_scores": example.conf_scores[None, :],
        "lengths": np.array([example.attention_len]),
    }
    if with_labels:
        if example.labels_tok is None:
            raise DataError(f"example {example.example_id} carries no labels")
        batch["labels"] = example.labels_tok[None, :]
        batch["loss_mask"] = np.arange(example.token_ids.shape[0])[None, :] < example.attention_len
    return batch


def forward(example: TokenizedExample, params, cfg: ModelConfig) -> ForwardTrace:
    """Inference-mode forward for one example; logits cover attention_len."""
    batch = example_batch(example, with_labels=example.labels_tok is not None)
    logits, cache = _forward_batch(params, cfg, batch, train=False)
    return ForwardTrace(logits=logits[0, : example.attention_len], cache=cache)


def backward(trace: ForwardTrace, gold_labels: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of mean token cross entropy over non-PAD positions."""
    cache = trace.cache
    batch = cache["batch"]
    cfg = cache["cfg"]
    n, t = batch["token_ids"].shape
    labels = np.zeros((n, t), dtype=np.int64)
    gold = np.asarray(gold_labels)
    labels[0, : gold.shape[0]] = gold
    loss_mask = (np.arange(t)[None, :] < batch["lengths"][:, None]).astype(np.float64)
    logits, _ = _forward_batch(_params_of(cache), cfg, batch, train=False)
    _, dlogits = token_cross_entropy(logits, labels, loss_mask)
    return _backward_batch(_params_of(cache), cfg, cache, dlogits)


def _params_of(cache):
    params = cache.get("params")
    if params is None:
        raise DataError("trace does not carry parameters; use loss_and_grads")
    return params


def loss_and_grads(params, cfg, batch, train=False, drop_rng=None):
    """Forward + backward in one call; the training-loop workhorse."""
    logits, cache = _forward_batch(params, cfg, batch, train=train, drop_rng=drop_rng)
    loss, dlogits = token_cross_entropy(logits, batch["labels"], batch["loss_mask"])
    grads = _backward_batch(params, cfg, cache, dlogits)
    return loss, grads, logits


def mlm_mask_and_score(
    example: TokenizedExample, word_index: int, params, cfg: ModelConfig, k: int
) -> bool:
    """Mask out one word and ask the MLM whether it would suggest it back.

    True iff every original token id of the word appears in the top-k logits
    at its own masked position (ties broken toward lower token ids).
    """
    ranks = mlm_word_rank(example, word_index, params, cfg)
    return ranks < k


def mlm_word_rank(
    example: TokenizedExample, word_index: int, params, cfg: ModelConfig
) -> int:
    """Rank of the hardest token of a masked-out word (0 = top suggestion)."""
    if not 0 <= word_index < len(example.word_to_tokens):
        raise DataError(f"word index {word_index} out of range")
    start, end = example.word_to_tokens[word_index]
    ids = example.token_ids.copy()
    original = ids[start:end].copy()
    ids[start:end] = MASK_ID
    batch = {
        "token_ids": ids[None, :],
        "conf_bins": example.conf_bins[None, :],
        "conf_scores": example.conf_scores[None, :],
        "lengths": np.array([example.attention_len]),
    }
    logits, _ = _forward_batch(params, cfg, batch, train=False)
    worst = 0
    for offset, true_id in enumerate(original):
        row = logits[0, start + offset]
        order = np.lexsort((np.arange(row.shape[0]), -row))
        rank = int(np.nonzero(order == true_id)[0][0])
        worst = max(worst, rank)
    return worst


def save_checkpoint(
    path: str | Path,
    cfg: ModelConfig,
    params: dict[str, np.ndarray],
    extra_meta: dict | None = None,
) -> None:
    """Versioned npz container: model config plus named parameter tensors."""
    validate_params(cfg, params)
    meta = {
        "format_version": _CHECKPOINT_VERSION,
        "model_config": cfg.to_dict(),
        **(extra_meta or {}),
    }
    arrays = {f"param/{name}": arr for name, arr in params.items()}
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    np.savez(str(path), **arrays)


def load_checkpoint(path: str | Path):
    """Returns (cfg, params, meta); shapes are validated against the config."""
    with np.load(str(path), allow_pickle=False) as data:
        try:
            meta = json.loads(str(data["meta"]))
        except KeyError:
            raise ConfigurationError(f"{path}: not a checkpoint (no meta entry)")
        if meta.get("format_version") != _CHECKPOINT_VERSION:
            raise ConfigurationError(
                f"{path}: unsupported checkpoint version {meta.get('format_version')}"
            )
        cfg = ModelConfig.from_dict(meta["model_config"])
        params = {
            key[len("param/"):]: data[key] for key in data.files if key.startswith("param/")
        }
    validate_params(cfg, params)
    return cfg, params, meta

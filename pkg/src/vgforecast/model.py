"""Attention-based direction model over structural embeddings.

Per channel, an encoder LSTM with input attention over the embedding
dimensions feeds a decoder whose temporal attention scores are shifted by
a learned multiple of the node weights.  The six decoder states merge by
elementwise addition into one representation per stock; a self-attention
layer across the stocks of a same-date batch and a sigmoid head produce
the upward-move score.

All parameters live in a flat-ordered registry so the whole model can be
round-tripped through a single vector for optimisation, checkpointing and
finite-difference verification.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

N_CHANNELS = 6


class ModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelDims:
    lookback: int          # T: window length = node count
    embed: int             # E: embedding width = driving-series count
    enc_hidden: int        # m: encoder state size
    dec_hidden: int        # p: decoder state size

    def __post_init__(self):
        for name in ("lookback", "embed", "enc_hidden", "dec_hidden"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1")


def _param_shapes(dims: ModelDims) -> "OrderedDict[str, tuple[int, ...]]":
    T, E, m, p = dims.lookback, dims.embed, dims.enc_hidden, dims.dec_hidden
    shapes: OrderedDict[str, tuple[int, ...]] = OrderedDict()
    for ch in range(N_CHANNELS):
        pre = f"ch{ch}."
        shapes[pre + "enc_Wx"] = (4 * m, E)
        shapes[pre + "enc_Wh"] = (4 * m, m)
        shapes[pre + "enc_b"] = (4 * m,)
        shapes[pre + "iatt_v"] = (T,)
        shapes[pre + "iatt_W"] = (T, 2 * m)
        shapes[pre + "iatt_U"] = (T, T)
        shapes[pre + "dec_Wx"] = (4 * p, m)
        shapes[pre + "dec_Wh"] = (4 * p, p)
        shapes[pre + "dec_b"] = (4 * p,)
        shapes[pre + "tatt_v"] = (m,)
        shapes[pre + "tatt_W"] = (m, 2 * p)
        shapes[pre + "tatt_U"] = (m, m)
        shapes[pre + "tatt_wd"] = (1,)
        if p != m:
            shapes[pre + "bridge_W"] = (m, p)
            shapes[pre + "bridge_b"] = (m,)
    shapes["caan_Wq"] = (m, m)
    shapes["caan_Wk"] = (m, m)
    shapes["caan_Wv"] = (m, m)
    shapes["head_w"] = (m,)
    shapes["head_b"] = (1,)
    return shapes


class ModelParams:
    """Named parameter tensors with an exact flat-vector view."""

    def __init__(self, dims: ModelDims, tensors: "OrderedDict[str, Tensor]"):
        self.dims = dims
        self.tensors = tensors

    @classmethod
    def init(cls, dims: ModelDims, seed: int) -> "ModelParams":
        rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), 0x6D6F64]))
        tensors: OrderedDict[str, Tensor] = OrderedDict()
        for name, shape in _param_shapes(dims).items():
            if name.endswith("_b") or name.endswith("enc_b") or name.endswith("dec_b"):
                data = np.zeros(shape)
            else:
                bound = 1.0 / math.sqrt(shape[-1])
                data = rng.uniform(-bound, bound, size=shape)
            tensors[name] = Tensor(data, requires_grad=True)
        return cls(dims, tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    @property
    def names(self) -> list[str]:
        return list(self.tensors)

    @property
    def n_params(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self.tensors.values()])

    def load_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_params:
            raise ModelError(f"flat vector has {vec.size} entries, expected {self.n_params}")
        offset = 0
        for t in self.tensors.values():
            size = t.data.size
            t.data = vec[offset:offset + size].reshape(t.data.shape).copy()
            offset += size

    def copy(self) -> "ModelParams":
        dup = OrderedDict(
            (name, Tensor(t.data.copy(), requires_grad=True))
            for name, t in self.tensors.items()
        )
        return ModelParams(self.dims, dup)

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()


@dataclass
class Batch:
    """Same-date stocks: per-channel embeddings, node weights, labels."""

    xs: np.ndarray      # (6, I, T, E)
    cis: np.ndarray     # (6, I, T)
    labels: np.ndarray  # (I,)

    @property
    def size(self) -> int:
        return self.xs.shape[1]


def _lstm_step(x: Tensor, h: Tensor, c: Tensor, WxT: Tensor, WhT: Tensor,
               b: Tensor, hidden: int) -> tuple[Tensor, Tensor]:
    # WxT/WhT are pre-transposed once per sequence, not per step
    z = (x @ WxT) + (h @ WhT) + b
    gi = ad.sigmoid(z[:, 0:hidden])
    gf = ad.sigmoid(z[:, hidden:2 * hidden])
    go = ad.sigmoid(z[:, 2 * hidden:3 * hidden])
    gc = ad.tanh(z[:, 3 * hidden:4 * hidden])
    c_new = gf * c + gi * gc
    h_new = go * ad.tanh(c_new)
    return h_new, c_new


def encoder_forward(X: Tensor | np.ndarray, params: ModelParams, channel: int,
                    alphas_out: list | None = None) -> Tensor:
    """Run the input-attention encoder over a (I, T, E) batch; returns (I, T, m).

    ``alphas_out``, when given, collects the per-step attention weights as
    plain arrays for inspection.
    """
    X = X if isinstance(X, Tensor) else Tensor(X)
    dims = params.dims
    T, E, m = dims.lookback, dims.embed, dims.enc_hidden
    if X.data.ndim != 3 or X.data.shape[1:] != (T, E):
        raise ModelError(f"encoder input must be (I, {T}, {E}), got {X.data.shape}")
    batch = X.data.shape[0]
    pre = f"ch{channel}."
    U = params[pre + "iatt_U"]
    W = params[pre + "iatt_W"]
    v = params[pre + "iatt_v"]
    # (U x^k) is step-independent: precompute for all driving series at once
    Xt = ad.transpose(X, (0, 2, 1))                       # (I, E, T)
    UX = ad.reshape(ad.reshape(Xt, (batch * E, T)) @ ad.transpose(U), (batch, E, T))
    WT = ad.transpose(W)
    WxT = ad.transpose(params[pre + "enc_Wx"])
    WhT = ad.transpose(params[pre + "enc_Wh"])
    b = params[pre + "enc_b"]
    h = Tensor(np.zeros((batch, m)))
    c = Tensor(np.zeros((batch, m)))
    states = []
    for t in range(T):
        hs = ad.concat([h, c], axis=1)
        base = ad.reshape(hs @ WT, (batch, 1, T))
        act = ad.tanh(base + UX)                          # (I, E, T)
        scores = ad.reshape(ad.reshape(act, (batch * E, T)) @ v, (batch, E))
        alpha = ad.softmax(scores, axis=1)
        if alphas_out is not None:
            alphas_out.append(alpha.data.copy())
        x_t = alpha * X[:, t, :]
        h, c = _lstm_step(x_t, h, c, WxT, WhT, b, m)
        states.append(ad.reshape(h, (batch, 1, m)))
    if not np.all(np.isfinite(states[-1].data)):
        raise ModelError("encoder produced non-finite activations")
    return ad.concat(states, axis=1)


def decoder_forward_ci(H: Tensor, ci: np.ndarray | Tensor, params: ModelParams,
                       channel: int, scores_out: list | None = None,
                       betas_out: list | None = None) -> Tensor:
    """Temporal-attention decoder with node-weight-shifted scores; returns (I, m).

    ``scores_out`` / ``betas_out`` collect the raw attention scores and the
    normalised weights per step.
    """
    dims = params.dims
    T, m, p = dims.lookback, dims.enc_hidden, dims.dec_hidden
    batch = H.data.shape[0]
    if H.data.shape != (batch, T, m):
        raise ModelError(f"decoder expects (I, {T}, {m}) encoder states, got {H.data.shape}")
    ci_t = ci if isinstance(ci, Tensor) else Tensor(ci)
    if ci_t.data.shape != (batch, T):
        raise ModelError(f"node weights must be (I, {T}), got {ci_t.data.shape}")
    pre = f"ch{channel}."
    UH = ad.reshape(ad.reshape(H, (batch * T, m)) @ ad.transpose(params[pre + "tatt_U"]),
                    (batch, T, m))
    ci_term = ad.reshape(ci_t, (batch, T, 1)) * params[pre + "tatt_wd"]
    v = params[pre + "tatt_v"]
    WT = ad.transpose(params[pre + "tatt_W"])
    WxT = ad.transpose(params[pre + "dec_Wx"])
    WhT = ad.transpose(params[pre + "dec_Wh"])
    b = params[pre + "dec_b"]
    h = Tensor(np.zeros((batch, p)))
    c = Tensor(np.zeros((batch, p)))
    for _ in range(T):
        hs = ad.concat([h, c], axis=1)
        base = ad.reshape(hs @ WT, (batch, 1, m))
        act = ad.tanh(UH + base + ci_term)                # (I, T, m)
        scores = ad.reshape(ad.reshape(act, (batch * T, m)) @ v, (batch, T))
        beta = ad.softmax(scores, axis=1)
        if scores_out is not None:
            scores_out.append(scores.data.copy())
        if betas_out is not None:
            betas_out.append(beta.data.copy())
        context = (ad.reshape(beta, (batch, T, 1)) * H).sum(axis=1)
        h, c = _lstm_step(context, h, c, WxT, WhT, b, p)
    if not np.all(np.isfinite(h.data)):
        raise ModelError("decoder produced non-finite activations")
    if p == m:
        return h
    return (h @ ad.transpose(params[pre + "bridge_W"])) + params[pre + "bridge_b"]


def merge(reps: list[Tensor]) -> Tensor:
    """Elementwise addition of the per-channel stock representations."""
    if not reps:
        raise ModelError("merge requires at least one representation")
    shape = reps[0].data.shape
    for r in reps[1:]:
        if r.data.shape != shape:
            raise ModelError(f"representation shapes differ: {r.data.shape} vs {shape}")
    out = reps[0]
    for r in reps[1:]:
        out = out + r
    return out


def caan_forward(R: Tensor, params: ModelParams) -> Tensor:
    """Cross-stock self-attention over an (I, m) batch of representations."""
    m = params.dims.enc_hidden
    if R.data.ndim != 2 or R.data.shape[1] != m:
        raise ModelError(f"caan expects (I, {m}) representations, got {R.data.shape}")
    q = R @ ad.transpose(params["caan_Wq"])
    k = R @ ad.transpose(params["caan_Wk"])
    v = R @ ad.transpose(params["caan_Wv"])
    scale = 1.0 / math.sqrt(m)  # key dimension D_k = m
    logits = (q @ ad.transpose(k)) * scale
    gamma = ad.softmax(logits, axis=1)
    return gamma @ v


def predict_logits(A: Tensor, params: ModelParams) -> Tensor:
    return (A @ params["head_w"]) + params["head_b"]


def predict_score(a: np.ndarray | Tensor, params: ModelParams) -> np.ndarray:
    """Sigmoid score in (0, 1) for one or more attention representations."""
    t = a if isinstance(a, Tensor) else Tensor(np.atleast_2d(np.asarray(a, dtype=np.float64)))
    return ad.sigmoid(predict_logits(t, params)).data


def model_forward(batch: Batch, params: ModelParams) -> Tensor:
    """Full forward pass; returns the (I,) logits tensor."""
    if batch.size < 1:
        raise ModelError("batch must contain at least one stock")
    reps = []
    for ch in range(N_CHANNELS):
        H = encoder_forward(batch.xs[ch], params, ch)
        reps.append(decoder_forward_ci(H, batch.cis[ch], params, ch))
    r = merge(reps)
    a = caan_forward(r, params)
    return predict_logits(a, params)


def model_loss(batch: Batch, params: ModelParams) -> Tensor:
    """Mean binary cross entropy of the batch."""
    logits = model_forward(batch, params)
    return ad.bce_with_logits(logits, batch.labels).mean()


def loss_and_probs(batch: Batch, params: ModelParams) -> tuple[Tensor, np.ndarray]:
    """One forward pass yielding both the loss node and the probabilities."""
    from .autodiff import _stable_sigmoid

    logits = model_forward(batch, params)
    loss = ad.bce_with_logits(logits, batch.labels).mean()
    return loss, _stable_sigmoid(logits.data)


def predict_batch(batch: Batch, params: ModelParams) -> np.ndarray:
    """Upward-move probabilities for every stock of the batch."""
    logits = model_forward(batch, params)
    from .autodiff import _stable_sigmoid

    return _stable_sigmoid(logits.data)

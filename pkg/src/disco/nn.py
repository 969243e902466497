"""Dense numerical core: MLP noise predictor, reverse-mode gradients, Adam.

Everything here is a pure function of its inputs (no hidden state, no global
RNG), so repeated calls are bit-identical and any thread may call in. Arrays
are float64 throughout the production path; the functions themselves are
dtype-polymorphic so tests can run in whatever precision they need.

The noise predictor is a plain MLP over the concatenation of a flattened
observation window, a flattened noisy action sequence, and a sinusoidal
embedding of the diffusion level ``k``.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


@dataclass(frozen=True)
class DenoiserParams:
    """Weights of the noise-prediction MLP plus its input-assembly config.

    ``weights[i]`` has shape (fan_in, fan_out); consecutive layers chain.
    The embedding config travels with the parameters because the network is
    meaningless without knowing how its ``k`` input was encoded.
    """

    weights: tuple
    biases: tuple
    activation: str  # "relu" | "gelu"
    embed_dim: int
    embed_max_period: float
    arch_id: str

    def __post_init__(self):
        if self.activation not in ("relu", "gelu"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.embed_dim % 2 != 0 or self.embed_dim <= 0:
            raise ConfigError("embedding dimension must be even and positive")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigError("weights/biases length mismatch")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ShapeError(f"layer {i}: weight {w.shape} vs bias {b.shape}")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(
                    f"layer {i - 1} output {self.weights[i - 1].shape[1]} "
                    f"!= layer {i} input {w.shape[0]}"
                )
        if not all(np.isfinite(w).all() and np.isfinite(b).all()
                   for w, b in zip(self.weights, self.biases)):
            raise NumericError("non-finite parameter entries")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layer_sizes(self) -> list:
        return [self.input_dim] + [w.shape[1] for w in self.weights]

    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def init_mlp(layer_sizes, rng, activation="relu", embed_dim=64,
             embed_max_period=10000.0, arch_id=None) -> DenoiserParams:
    """He-uniform weights, zero biases.

    ``layer_sizes`` is the full chain [input_dim, hidden..., output_dim];
    input_dim must already include the embedding width.
    """
    if len(layer_sizes) < 2:
        raise ConfigError("need at least an input and an output size")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    if arch_id is None:
        arch_id = "mlp-" + "x".join(str(s) for s in layer_sizes) + f"-{activation}"
    return DenoiserParams(tuple(weights), tuple(biases), activation,
                          embed_dim, embed_max_period, arch_id)


def timestep_embed(k, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Sinusoidal embedding of the diffusion level.

    Interleaved (sin, cos) pairs over ``dim/2`` angular periods spaced
    geometrically from 1 to ``max_period`` inclusive, so every entry lies in
    [-1, 1] and k=0 maps to alternating zeros and ones. ``k`` may be a scalar
    or an array of levels (vectorized for batch training).
    """
    if dim % 2 != 0 or dim <= 0:
        raise ConfigError(f"embedding dim must be even and positive, got {dim}")
    half = dim // 2
    if half == 1:
        periods = np.ones(1)
    else:
        periods = max_period ** (np.arange(half) / (half - 1))
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise ConfigError("diffusion level must be non-negative")
    angles = k[..., None] / periods
    out = np.empty(k.shape + (dim,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def _act(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    u = _GELU_C * (z + _GELU_A * z**3)
    return 0.5 * z * (1.0 + np.tanh(u))


def _act_grad(z, activation):
    if activation == "relu":
        return (z > 0).astype(z.dtype)
    t = np.tanh(_GELU_C * (z + _GELU_A * z**3))
    return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * z**2)


def mlp_forward(params: DenoiserParams, x: np.ndarray) -> np.ndarray:
    """Forward pass; accepts a single input vector or a (batch, in) matrix."""
    if x.shape[-1] != params.input_dim:
        raise ShapeError(f"input dim {x.shape[-1]} != expected {params.input_dim}")
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = _act(h, params.activation)
    return h


def mlp_forward_cached(params: DenoiserParams, x: np.ndarray):
    """Forward pass keeping pre-activations for the backward pass."""
    if x.shape[-1] != params.input_dim:
        raise ShapeError(f"input dim {x.shape[-1]} != expected {params.input_dim}")
    pre, post = [], [x]
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        h = _act(z, params.activation) if i < last else z
        post.append(h)
    return h, (pre, post)


def mlp_backward(params: DenoiserParams, cache, grad_out: np.ndarray):
    """Backpropagate ``grad_out`` (dL/d output) through the cached forward.

    Returns per-layer (dW, db) in layer order. Inputs may be batched; the
    gradients are summed over the batch dimension (the caller owns any
    averaging, which it typically folds into ``grad_out``).
    """
    pre, post = cache
    batched = grad_out.ndim == 2
    g = grad_out
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    last = len(params.weights) - 1
    for i in range(last, -1, -1):
        if i < last:
            g = g * _act_grad(pre[i], params.activation)
        a = post[i]
        if batched:
            grads_w[i] = a.T @ g
            grads_b[i] = g.sum(axis=0)
        else:
            grads_w[i] = np.outer(a, g)
            grads_b[i] = g.copy()
        g = g @ params.weights[i].T
    return list(zip(grads_w, grads_b))


def gradient(params: DenoiserParams, xs: np.ndarray, loss_fn):
    """Mean loss over a minibatch and its gradient w.r.t. the parameters.

    ``loss_fn(pred)`` receives the (batch, out) predictions and returns
    (per_item_loss, d per_item_loss / d pred), both batch-shaped. The result
    is averaged over the batch, so duplicating items leaves it unchanged.
    """
    xs = np.atleast_2d(xs)
    if xs.shape[0] == 0:
        raise ConfigError("empty minibatch")
    pred, cache = mlp_forward_cached(params, xs)
    per_item, dper = loss_fn(pred)
    per_item = np.asarray(per_item, dtype=float)
    if per_item.shape != (xs.shape[0],):
        raise ShapeError("loss_fn must return one loss per batch item")
    bad = np.flatnonzero(~np.isfinite(per_item))
    if bad.size:
        raise NumericError(f"non-finite loss at batch index {bad[0]}")
    n = xs.shape[0]
    grads = mlp_backward(params, cache, dper / n)
    return float(per_item.mean()), grads


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators plus the step hyperparameters."""

    m: tuple  # per-layer (mW, mb)
    v: tuple
    step: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: DenoiserParams, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        zeros = tuple(
            (np.zeros_like(w), np.zeros_like(b))
            for w, b in zip(params.weights, params.biases)
        )
        return cls(m=zeros, v=zeros, step=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: DenoiserParams, grads, state: AdamState):
    """One bias-corrected Adam update; returns (new params, new state)."""
    if len(grads) != len(params.weights):
        raise ShapeError("gradient count does not match layer count")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_w, new_b, new_m, new_v = [], [], [], []
    for (w, b), (gw, gb), (mw, mb), (vw, vb) in zip(
        zip(params.weights, params.biases), grads, state.m, state.v
    ):
        if gw.shape != w.shape or gb.shape != b.shape:
            raise ShapeError("gradient shape does not match parameter shape")
        mw = b1 * mw + (1 - b1) * gw
        mb = b1 * mb + (1 - b1) * gb
        vw = b2 * vw + (1 - b2) * gw * gw
        vb = b2 * vb + (1 - b2) * gb * gb
        new_w.append(w - state.lr * (mw / c1) / (np.sqrt(vw / c2) + state.eps))
        new_b.append(b - state.lr * (mb / c1) / (np.sqrt(vb / c2) + state.eps))
        new_m.append((mw, mb))
        new_v.append((vw, vb))
    new_params = replace(params, weights=tuple(new_w), biases=tuple(new_b))
    new_state = replace(state, m=tuple(new_m), v=tuple(new_v), step=t)
    return new_params, new_state


def assemble_input(params: DenoiserParams, obs_window: np.ndarray,
                   noisy_seq: np.ndarray, k) -> np.ndarray:
    """concat(flatten(obs window), flatten(action sequence), embed(k)).

    Batched when the leading dimensions carry a batch axis: obs_window
    (N, O, obs_dim), noisy_seq (N, P, A), k (N,).
    """
    batched = obs_window.ndim == 3
    if noisy_seq.ndim != obs_window.ndim:
        raise ShapeError("observation window and action sequence batching differ")
    emb = timestep_embed(k, params.embed_dim, params.embed_max_period)
    if batched:
        n = obs_window.shape[0]
        x = np.concatenate(
            [obs_window.reshape(n, -1), noisy_seq.reshape(n, -1), emb], axis=1
        )
    else:
        x = np.concatenate([obs_window.ravel(), noisy_seq.ravel(), np.atleast_1d(emb).ravel()])
    if x.shape[-1] != params.input_dim:
        raise ShapeError(
            f"assembled input dim {x.shape[-1]} != network input {params.input_dim}"
        )
    return x


def denoise(params: DenoiserParams, obs_window: np.ndarray,
            noisy_seq: np.ndarray, k) -> np.ndarray:
    """Predict the injected noise for a noisy action sequence at level ``k``.

    Returns an array shaped like ``noisy_seq``. Deterministic.
    """
    seq_size = noisy_seq.shape[-2] * noisy_seq.shape[-1]
    if params.output_dim != seq_size:
        raise ShapeError(
            f"network output dim {params.output_dim} != sequence size {seq_size}"
        )
    x = assemble_input(params, obs_window, noisy_seq, k)
    out = mlp_forward(params, x)
    return out.reshape(noisy_seq.shape)

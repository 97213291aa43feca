"""Fully-connected Q-network (480-256-128-7) with analytic gradients.

Plain numpy throughout: forward pass, backprop for the squared TD error of a
single selected output, bias-corrected Adam, deep parameter copies, and a
self-describing binary checkpoint format.  ReLU hidden activations, linear
Q-value outputs.

Initialization is uniform scaled by fan-in, U[-1/sqrt(n_in), 1/sqrt(n_in)].
Inputs are raw m/s-scale tile values (the codec applies no normalization),
which this scheme tolerates.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

LAYER_SIZES = (480, 256, 128, 7)

CHECKPOINT_MAGIC = b"FWLQNET1"


@dataclass
class MlpParams:
    weights: list   # weights[i]: (n_in, n_out) float64
    biases: list    # biases[i]: (n_out,) float64

    @property
    def layer_sizes(self) -> tuple:
        return tuple([self.weights[0].shape[0]] + [w.shape[1] for w in self.weights])


@dataclass
class AdamState:
    m_w: list
    v_w: list
    m_b: list
    v_b: list
    step: int = 0
    lr: float = 0.003
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_params(rng: np.random.Generator, layer_sizes=LAYER_SIZES) -> MlpParams:
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return MlpParams(weights, biases)


def init_adam(params: MlpParams, lr: float = 0.003) -> AdamState:
    return AdamState(
        m_w=[np.zeros_like(w) for w in params.weights],
        v_w=[np.zeros_like(w) for w in params.weights],
        m_b=[np.zeros_like(b) for b in params.biases],
        v_b=[np.zeros_like(b) for b in params.biases],
        lr=lr,
    )


def _forward_cached(params: MlpParams, x: np.ndarray):
    """Forward pass keeping pre- and post-activation caches for backprop."""
    acts = [x]
    pre = []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return pre, acts


def forward(params: MlpParams, state: np.ndarray) -> np.ndarray:
    """Q-values for one state vector."""
    x = np.asarray(state, dtype=float)
    if x.ndim != 1 or x.shape[0] != params.weights[0].shape[0]:
        raise ValueError(f"state must be a vector of length "
                         f"{params.weights[0].shape[0]}, got shape {x.shape}")
    _, acts = _forward_cached(params, x)
    return acts[-1]


def forward_batch(params: MlpParams, states: np.ndarray) -> np.ndarray:
    """Q-values for a (batch, n_in) matrix of states."""
    x = np.asarray(states, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"states must have shape (batch, "
                         f"{params.weights[0].shape[0]}), got {x.shape}")
    _, acts = _forward_cached(params, x)
    return acts[-1]


def _zero_grads(params: MlpParams):
    return ([np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases])


def backward(params: MlpParams, state: np.ndarray, action_index: int,
             td_target: float):
    """Gradient of 0.5 * (td_target - Q(s, a))^2 w.r.t. all parameters.

    Only the selected action's output contributes; returns (grad_w, grad_b)
    lists shaped like the parameters.
    """
    states = np.asarray(state, dtype=float).reshape(1, -1)
    targets = np.array([float(td_target)])
    actions = np.array([int(action_index)])
    grad_w, grad_b, _ = backward_batch(params, states, actions, targets)
    return grad_w, grad_b


def backward_batch(params: MlpParams, states: np.ndarray, actions: np.ndarray,
                   targets: np.ndarray):
    """Mean over the batch of per-sample squared-TD-error gradients.

    Loss = mean_i 0.5 * (y_i - Q(s_i, a_i))^2.  Returns (grad_w, grad_b,
    loss).
    """
    x = np.asarray(states, dtype=float)
    n = x.shape[0]
    pre, acts = _forward_cached(params, x)
    q = acts[-1]
    idx = np.arange(n)
    q_sel = q[idx, actions]
    residual = q_sel - targets          # d(loss_i)/d(q_sel_i)
    loss = float(np.mean(0.5 * residual ** 2))

    delta = np.zeros_like(q)
    delta[idx, actions] = residual / n  # mean reduction folded in
    grad_w, grad_b = _zero_grads(params)
    for i in range(len(params.weights) - 1, -1, -1):
        grad_w[i] = acts[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (pre[i - 1] > 0)
    return grad_w, grad_b, loss


def adam_step(params: MlpParams, grads, opt: AdamState) -> None:
    """One bias-corrected Adam update, in place."""
    grad_w, grad_b = grads
    opt.step += 1
    t = opt.step
    b1, b2 = opt.beta1, opt.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for i in range(len(params.weights)):
        for p, g, m, v in ((params.weights[i], grad_w[i], opt.m_w[i], opt.v_w[i]),
                           (params.biases[i], grad_b[i], opt.m_b[i], opt.v_b[i])):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / corr1
            v_hat = v / corr2
            p -= opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)


def copy_params(src: MlpParams) -> MlpParams:
    return MlpParams([w.copy() for w in src.weights],
                     [b.copy() for b in src.biases])


def save_checkpoint(params: MlpParams, opt: AdamState, metadata: dict) -> bytes:
    """Serialize network + optimizer to bytes.

    Layout: 8-byte magic, uint32 header length, JSON header (layer sizes,
    Adam scalars, metadata, array manifest), then the manifest's float64
    little-endian arrays back to back.  Round-trips bit-exactly.
    """
    arrays = {}
    for i in range(len(params.weights)):
        arrays[f"w{i}"] = params.weights[i]
        arrays[f"b{i}"] = params.biases[i]
        arrays[f"adam_mw{i}"] = opt.m_w[i]
        arrays[f"adam_vw{i}"] = opt.v_w[i]
        arrays[f"adam_mb{i}"] = opt.m_b[i]
        arrays[f"adam_vb{i}"] = opt.v_b[i]
    manifest = [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()]
    header = {
        "layer_sizes": list(params.layer_sizes),
        "adam": {"step": opt.step, "lr": opt.lr, "beta1": opt.beta1,
                 "beta2": opt.beta2, "eps": opt.eps},
        "metadata": metadata,
        "arrays": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", len(header_bytes))
    blob += header_bytes
    for item in manifest:
        arr = np.ascontiguousarray(arrays[item["name"]], dtype="<f8")
        blob += arr.tobytes()
    return bytes(blob)


def load_checkpoint(data: bytes):
    """Inverse of save_checkpoint; returns (params, opt, metadata)."""
    if len(data) < len(CHECKPOINT_MAGIC) + 4 or not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError("not a checkpoint: bad magic")
    off = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    try:
        header = json.loads(data[off:off + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"corrupted checkpoint header: {exc}") from exc
    off += hlen
    arrays = {}
    for item in header["arrays"]:
        shape = tuple(item["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if off + nbytes > len(data):
            raise ValueError("checkpoint truncated")
        arrays[item["name"]] = np.frombuffer(
            data, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        off += nbytes

    sizes = header["layer_sizes"]
    n_layers = len(sizes) - 1
    weights, biases = [], []
    for i in range(n_layers):
        w = arrays[f"w{i}"]
        if w.shape != (sizes[i], sizes[i + 1]):
            raise ValueError(f"layer {i} shape mismatch: header says "
                             f"{(sizes[i], sizes[i + 1])}, data has {w.shape}")
        weights.append(w)
        biases.append(arrays[f"b{i}"])
    params = MlpParams(weights, biases)
    a = header["adam"]
    opt = AdamState(
        m_w=[arrays[f"adam_mw{i}"] for i in range(n_layers)],
        v_w=[arrays[f"adam_vw{i}"] for i in range(n_layers)],
        m_b=[arrays[f"adam_mb{i}"] for i in range(n_layers)],
        v_b=[arrays[f"adam_vb{i}"] for i in range(n_layers)],
        step=a["step"], lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"],
        eps=a["eps"])
    return params, opt, header["metadata"]

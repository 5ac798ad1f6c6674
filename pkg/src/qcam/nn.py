"""Small numpy neural-network core with hand-written backprop.

Layer kinds: dense, conv (3x3 "same" by default), relu, maxpool, flatten.
Losses (softmax cross-entropy, mean squared error) sit outside the network and
return the gradient with respect to the network output.

Activations are batch-first: images are (N, C, H, W), vectors (N, F).
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_KINDS = ("dense", "conv", "relu", "maxpool", "flatten")
_MAGIC = b"QCAMNN01"
GRAD_FLOOR = 1e-5


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, ...]  # per-sample shape
    layers: tuple[dict, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "layers", tuple(dict(l) for l in self.layers))
        self.output_shape  # validates adjacent shapes

    @property
    def output_shape(self) -> tuple[int, ...]:
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            shape = _out_shape(layer, shape, i)
        return shape

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": [dict(l) for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(tuple(d["input_shape"]), tuple(d["layers"]))


def _out_shape(layer: dict, shape: tuple, i: int) -> tuple:
    kind = layer["kind"]
    if kind == "dense":
        if shape != (layer["in"],):
            raise ValueError(f"layer {i} (dense) expects ({layer['in']},), got {shape}")
        return (layer["out"],)
    if kind == "conv":
        if len(shape) != 3 or shape[0] != layer["in"]:
            raise ValueError(f"layer {i} (conv) expects {layer['in']} channels, got {shape}")
        k, pad = layer.get("k", 3), layer.get("pad", layer.get("k", 3) // 2)
        return (layer["out"], shape[1] + 2 * pad - k + 1, shape[2] + 2 * pad - k + 1)
    if kind == "maxpool":
        s = layer.get("size", 2)
        if len(shape) != 3 or shape[1] % s or shape[2] % s:
            raise ValueError(f"layer {i} (maxpool {s}) cannot pool shape {shape}")
        return (shape[0], shape[1] // s, shape[2] // s)
    if kind == "flatten":
        return (int(np.prod(shape)),)
    if kind == "relu":
        return shape
    raise ValueError(f"unknown layer kind {kind!r}")


@dataclass
class Network:
    spec: NetworkSpec
    params: dict[str, np.ndarray]
    seed: int | None = None

    def copy(self) -> "Network":
        return Network(self.spec, {k: v.copy() for k, v in self.params.items()}, self.seed)

    @property
    def num_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def digest(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name], dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass
class Trace:
    inputs: list = field(default_factory=list)
    caches: list = field(default_factory=list)


def init_network(spec: NetworkSpec, seed: int) -> Network:
    """He-uniform weights, zero biases."""
    rng = np.random.Generator(np.random.Philox(int(seed)))
    params: dict[str, np.ndarray] = {}
    for i, layer in enumerate(spec.layers):
        if layer["kind"] == "dense":
            fan_in = layer["in"]
            lim = np.sqrt(6.0 / fan_in)
            params[f"{i}.W"] = rng.uniform(-lim, lim, (layer["in"], layer["out"]))
            params[f"{i}.b"] = np.zeros(layer["out"])
        elif layer["kind"] == "conv":
            k = layer.get("k", 3)
            fan_in = layer["in"] * k * k
            lim = np.sqrt(6.0 / fan_in)
            params[f"{i}.W"] = rng.uniform(-lim, lim, (layer["out"], layer["in"], k, k))
            params[f"{i}.b"] = np.zeros(layer["out"])
    return Network(spec, params, int(seed))


# -- layer kernels ---------------------------------------------------------

def _conv_forward(x, W, b, pad):
    n, c, hgt, wid = x.shape
    out_c, _, k, _ = W.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # n, c, oh, ow, k, k
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
    out = cols @ W.reshape(out_c, -1).T + b
    return out.reshape(n, oh, ow, out_c).transpose(0, 3, 1, 2), (cols, xp.shape)


def _conv_backward(dout, W, cache, pad):
    cols, xp_shape = cache
    out_c, c, k, _ = W.shape
    n, _, oh, ow = dout.shape
    dflat = dout.transpose(0, 2, 3, 1).reshape(-1, out_c)
    dW = (dflat.T @ cols).reshape(W.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ W.reshape(out_c, -1)).reshape(n, oh, ow, c, k, k)
    dxp = np.zeros(xp_shape)
    for di in range(k):
        for dj in range(k):
            dxp[:, :, di:di + oh, dj:dj + ow] += dcols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    hgt, wid = xp_shape[2] - 2 * pad, xp_shape[3] - 2 * pad
    return dxp[:, :, pad:pad + hgt, pad:pad + wid], dW, db


def _pool_forward(x, s):
    n, c, hgt, wid = x.shape
    blocks = x.reshape(n, c, hgt // s, s, wid // s, s).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, hgt // s, wid // s, s * s)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape)


def _pool_backward(dout, cache, s):
    arg, shape = cache
    n, c, hgt, wid = shape
    dblocks = np.zeros((n, c, hgt // s, wid // s, s * s))
    np.put_along_axis(dblocks, arg[..., None], dout[..., None], axis=-1)
    dblocks = dblocks.reshape(n, c, hgt // s, wid // s, s, s).transpose(0, 1, 2, 4, 3, 5)
    return dblocks.reshape(shape)


# -- forward / backward ----------------------------------------------------

def forward(net: Network, x: np.ndarray, record: bool = False, upto: int | None = None):
    """Run the network on a batch.

    Returns ``(output, trace)``; ``trace`` is None unless ``record``. With
    ``upto`` the pass stops after that many layers.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != net.spec.input_shape:
        raise ValueError(f"input shape {x.shape[1:]} does not match {net.spec.input_shape}")
    trace = Trace() if record else None
    layers = net.spec.layers if upto is None else net.spec.layers[:upto]
    for i, layer in enumerate(layers):
        kind = layer["kind"]
        cache = None
        if trace is not None:
            trace.inputs.append(x)
        if kind == "dense":
            y = x @ net.params[f"{i}.W"] + net.params[f"{i}.b"]
        elif kind == "conv":
            pad = layer.get("pad", layer.get("k", 3) // 2)
            y, cache = _conv_forward(x, net.params[f"{i}.W"], net.params[f"{i}.b"], pad)
        elif kind == "relu":
            y = np.maximum(x, 0.0)
        elif kind == "maxpool":
            y, cache = _pool_forward(x, layer.get("size", 2))
        elif kind == "flatten":
            y = x.reshape(x.shape[0], -1)
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        if trace is not None:
            trace.caches.append(cache)
        x = y
    return x, trace


def backward(net: Network, trace: Trace | None, grad_out: np.ndarray, need_input_grad: bool = False):
    """Backpropagate ``grad_out`` (dLoss/dOutput) through a recorded forward pass."""
    if trace is None or len(trace.inputs) != len(net.spec.layers):
        raise ValueError("backward needs the trace of a full forward pass with record=True")
    grads: dict[str, np.ndarray] = {}
    g = np.asarray(grad_out, dtype=np.float64)
    for i in range(len(net.spec.layers) - 1, -1, -1):
        layer = net.spec.layers[i]
        kind = layer["kind"]
        x = trace.inputs[i]
        if kind == "dense":
            grads[f"{i}.W"] = x.T @ g
            grads[f"{i}.b"] = g.sum(axis=0)
            if i or need_input_grad:
                g = g @ net.params[f"{i}.W"].T
        elif kind == "conv":
            pad = layer.get("pad", layer.get("k", 3) // 2)
            g, grads[f"{i}.W"], grads[f"{i}.b"] = _conv_backward(
                g, net.params[f"{i}.W"], trace.caches[i], pad
            )
        elif kind == "relu":
            g = g * (x > 0)
        elif kind == "maxpool":
            g = _pool_backward(g, trace.caches[i], layer.get("size", 2))
        elif kind == "flatten":
            g = g.reshape(x.shape)
    if need_input_grad:
        return grads, g
    return grads


# -- losses ----------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient w.r.t. ``logits``."""
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def mse(pred: np.ndarray, target: np.ndarray):
    diff = pred - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


# -- Adam ------------------------------------------------------------------

@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(net: Network, grads: dict, opt: OptimizerState) -> Network:
    """One bias-corrected Adam update, applied in place to ``net.params``."""
    opt.step += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1**opt.step
    c2 = 1.0 - b2**opt.step
    for name, g in grads.items():
        p = net.params[name]
        m = opt.m.get(name)
        if m is None:
            m = opt.m[name] = np.zeros_like(p)
            opt.v[name] = np.zeros_like(p)
        v = opt.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    return net


# -- gradient check --------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < 1e-4


def grad_check(
    spec: NetworkSpec,
    seed: int,
    loss: str = "linear",
    batch: int = 3,
    step: float = 1e-5,
    samples_per_param: int = 25,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``loss`` is "linear" (fixed random projection of the output), "mse" or
    "xent" (softmax cross-entropy head; the output must be a vector).
    Relative error is ``|a - n| / max(|a|, |n|, GRAD_FLOOR)``. The floor sits
    above the central-difference roundoff (about eps * |loss| / step), so
    near-zero gradients are compared absolutely.
    """
    rng = np.random.Generator(np.random.Philox(int(seed) + 7919))
    net = init_network(spec, seed)
    for name in net.params:
        if name.endswith(".b"):
            net.params[name] = rng.normal(0, 0.1, net.params[name].shape)
    x = rng.normal(size=(batch, *spec.input_shape))
    out_shape = (batch, *spec.output_shape)
    proj = rng.normal(size=out_shape)
    target = rng.normal(size=out_shape)
    labels = rng.integers(0, spec.output_shape[-1], size=batch)

    def f(n: Network):
        out, tr = forward(n, x, record=True)
        if loss == "linear":
            return float((out * proj).sum()), proj, tr
        if loss == "mse":
            val, g = mse(out, target)
            return val, g, tr
        if loss == "xent":
            val, g = softmax_cross_entropy(out, labels)
            return val, g, tr
        raise ValueError(f"unknown loss {loss!r}")

    _, g_out, tr = f(net)
    analytic = backward(net, tr, g_out)
    worst, worst_name, checked = 0.0, "", 0
    for name, p in net.params.items():
        flat = p.reshape(-1)
        picks = rng.choice(flat.size, size=min(samples_per_param, flat.size), replace=False)
        for j in picks:
            orig = flat[j]
            flat[j] = orig + step
            fp = f(net)[0]
            flat[j] = orig - step
            fm = f(net)[0]
            flat[j] = orig
            num = (fp - fm) / (2 * step)
            a = analytic[name].reshape(-1)[j]
            rel = abs(a - num) / max(abs(a), abs(num), GRAD_FLOOR)
            checked += 1
            if rel > worst:
                worst, worst_name = rel, name
    return GradCheckReport(worst, worst_name, checked)


# -- parameter files -------------------------------------------------------

def save_network(path, net: Network, extra: dict | None = None) -> Path:
    """JSON header (spec, tensor shapes, seed) then little-endian float64 tensors."""
    names = list(net.params)
    header = {
        "spec": net.spec.to_dict(),
        "tensors": [[n, list(net.params[n].shape)] for n in names],
        "seed": net.seed,
    }
    if extra:
        header["extra"] = extra
    hbytes = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for n in names:
            fh.write(np.ascontiguousarray(net.params[n], dtype="<f8").tobytes())
    return path


def load_network(path) -> Network:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path}: not a network parameter file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen])
    offset = 16 + hlen
    params = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        params[name] = arr.reshape(shape).astype(np.float64)
        offset += 8 * count
    if offset != len(raw):
        raise ValueError(f"{path}: payload size mismatch")
    return Network(NetworkSpec.from_dict(header["spec"]), params, header.get("seed"))


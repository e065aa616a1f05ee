"""Fully connected tanh network usable from every differentiation engine.

Parameter layout of the flat vector (stable, used by the optimizer and the
binary dump): layer by layer, the weight matrix of shape ``(fan_in,
fan_out)`` in row-major order followed by the bias vector.
"""
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import tensor as T

ACTIVATIONS = ("tanh",)
_MAGIC = b"GPNN"
_VERSION = 1


@dataclass
class Mlp:
    widths: list
    activation: str = "tanh"
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def __post_init__(self):
        _check_widths(self.widths)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; choose from {ACTIVATIONS}")
        self.widths = [int(w) for w in self.widths]
        if not self.weights:
            self.weights = [np.zeros((i, o)) for i, o in zip(self.widths[:-1], self.widths[1:])]
            self.biases = [np.zeros(o) for o in self.widths[1:]]

    @property
    def n_inputs(self):
        return self.widths[0]

    @property
    def n_outputs(self):
        return self.widths[-1]

    @property
    def n_params(self):
        return param_count(self.widths)

    # -- flat parameter view -------------------------------------------
    def get_params(self):
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    def set_params(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {v.shape}")
        pos = 0
        for k, (i, o) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            self.weights[k] = v[pos:pos + i * o].reshape(i, o).copy()
            pos += i * o
            self.biases[k] = v[pos:pos + o].copy()
            pos += o

    def copy(self):
        return Mlp(list(self.widths), self.activation,
                   [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    # -- evaluation ------------------------------------------------------
    def bind_tensor(self, params=None):
        """Parameters as differentiable :class:`Tensor` leaves.

        Returns ``(layers, leaves)``; ``leaves`` is ordered like the flat
        parameter vector.
        """
        if params is not None:
            net = self.copy()
            net.set_params(params)
        else:
            net = self
        layers, leaves = [], []
        for W, b in zip(net.weights, net.biases):
            tw, tb = T.variable(W), T.variable(b)
            layers.append((tw, tb))
            leaves += [tw, tb]
        return layers, leaves

    def bind_scalar(self, ctx, differentiable=True):
        """Parameters as DiffScalars in ``ctx`` (variables or constants).

        Variables are created contiguously in flat-vector order, so the
        id of the first one plus :attr:`n_params` spans them all.
        """
        make = ctx.variable if differentiable else ctx.lift
        layers = []
        for W, b in zip(self.weights, self.biases):
            Ws = [[make(W[i, j]) for j in range(W.shape[1])] for i in range(W.shape[0])]
            bs = [make(v) for v in b]
            layers.append((Ws, bs))
        return layers

    def forward(self, xs, layers=None):
        """Evaluate the network on a list of input coordinates.

        ``xs`` is a list of length :attr:`n_inputs` holding DiffScalars,
        batched Tensors (shape (N,)), or floats/arrays.  Returns a list of
        :attr:`n_outputs` items of the same kind.  ``layers`` are bound
        parameters from :meth:`bind_tensor` / :meth:`bind_scalar`; without
        them the stored values are used as constants.
        """
        xs = list(xs)
        if len(xs) != self.n_inputs:
            raise ValueError(f"network expects {self.n_inputs} inputs, got {len(xs)}")
        probe = list(xs)
        if layers is not None:
            probe.append(layers[0][1] if isinstance(layers[0][1], ad.Tensor) else layers[0][1][0])
        if any(isinstance(x, ad.DiffScalar) for x in probe):
            ctx = next(x.ctx for x in probe if isinstance(x, ad.DiffScalar))
            if layers is None:
                layers = self.bind_scalar(ctx, differentiable=False)
            return _forward_scalar(xs, layers, ctx)
        if any(isinstance(x, ad.Tensor) for x in probe):
            if layers is None:
                layers = [(T.constant(W), T.constant(b)) for W, b in zip(self.weights, self.biases)]
            return _forward_tensor(xs, layers)
        if layers is None:
            layers = list(zip(self.weights, self.biases))
        return _forward_numeric(xs, layers)

    __call__ = forward


def _check_widths(widths):
    widths = list(widths)
    if len(widths) < 2:
        raise ValueError("a network needs at least an input and an output width")
    for w in widths:
        if int(w) != w or w <= 0:
            raise ValueError(f"layer widths must be positive integers, got {widths}")


def param_count(widths):
    return sum(i * o + o for i, o in zip(widths[:-1], widths[1:]))


def init(widths, activation="tanh", seed=0):
    """Glorot-uniform weights, zero biases, deterministic for ``seed``."""
    _check_widths(widths)
    rng = np.random.default_rng(seed)
    net = Mlp(list(widths), activation)
    for k, (i, o) in enumerate(zip(net.widths[:-1], net.widths[1:])):
        limit = np.sqrt(6.0 / (i + o))
        net.weights[k] = rng.uniform(-limit, limit, size=(i, o))
        net.biases[k] = np.zeros(o)
    return net


def forward(net, xs, layers=None):
    return net.forward(xs, layers)


def params_get(net):
    return net.get_params()


def params_set(net, v):
    net.set_params(v)


def _forward_numeric(xs, layers):
    h = np.stack([np.asarray(x, dtype=np.float64) for x in np.broadcast_arrays(*xs)], axis=-1)
    last = len(layers) - 1
    for k, (W, b) in enumerate(layers):
        h = h @ W + b
        if k < last:
            h = np.tanh(h)
    return [h[..., j] for j in range(h.shape[-1])]


def _forward_tensor(xs, layers):
    n = max(np.size(ad.value_of(x)) for x in xs)
    cols = [x if isinstance(x, ad.Tensor) else T.constant(np.broadcast_to(np.asarray(x, dtype=float), (n,)))
            for x in xs]
    h = T.stack_columns(cols)
    last = len(layers) - 1
    for k, (W, b) in enumerate(layers):
        h = T.add(T.matmul(h, W), b)
        if k < last:
            h = T.tanh(h)
    return [T.column(h, j) for j in range(h.shape[1])]


def _forward_scalar(xs, layers, ctx):
    h = list(xs)
    last = len(layers) - 1
    for k, (Ws, bs) in enumerate(layers):
        out = []
        for j, bj in enumerate(bs):
            acc = bj
            for i, hi in enumerate(h):
                acc = acc + hi * Ws[i][j]
            out.append(acc)
        h = [z.tanh() for z in out] if k < last else out
    return h


# -- binary dump ------------------------------------------------------------

def save(net, path):
    """Little-endian dump: magic, version, widths, activation, float64 params."""
    act = net.activation.encode("ascii")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(net.widths)))
        fh.write(struct.pack(f"<{len(net.widths)}I", *net.widths))
        fh.write(struct.pack("<B", len(act)) + act)
        fh.write(net.get_params().astype("<f8").tobytes())


def load(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a network dump")
    version, k = struct.unpack_from("<II", data, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported dump version {version}")
    pos = 12
    widths = list(struct.unpack_from(f"<{k}I", data, pos))
    pos += 4 * k
    (alen,) = struct.unpack_from("<B", data, pos)
    pos += 1
    activation = data[pos:pos + alen].decode("ascii")
    pos += alen
    params = np.frombuffer(data[pos:], dtype="<f8").astype(np.float64)
    net = Mlp(widths, activation)
    net.set_params(params)
    return net

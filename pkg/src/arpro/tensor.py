"""Dense float64 tensors with a reverse-mode tape, a small MLP, and AdamW.

Everything downstream runs on this module: values are numpy float64 arrays,
and any operation whose inputs require gradients is recorded on a tape so a
scalar loss can be differentiated back to its leaves. Randomness comes from
counter-based streams addressed by an explicit (seed, name) pair, which keeps
paired experiment arms and re-runs bit-reproducible.
"""

from __future__ import annotations

import hashlib
import math
from typing import Sequence

import numpy as np

Array = np.ndarray

ACTIVATIONS = ("linear", "relu", "silu")


def _coerce(value) -> Array:
    return np.asarray(value, dtype=np.float64)


def _sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Array value doubling as a node on the differentiation tape.

    A tensor produced by an operation keeps its operation tag, references to
    its parents, and a closure that routes adjoints backwards. ``backward`` on
    a scalar root fills ``grad`` for every tensor the root depends on; leaves
    the root never touched read back as zeros through ``gradient()``.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf", parents=()):
        self.data = _coerce(data)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self.op = op
        self._parents = tuple(parents) if self.requires_grad else ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a scalar, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def _accum(self, g: Array) -> None:
        if not self.requires_grad:
            return
        self.grad = g if self.grad is None else self.grad + g

    def gradient(self) -> Array:
        """Adjoint after backward; zeros for leaves the root did not reach."""
        if self.grad is None:
            return np.zeros_like(self.data)
        return self.grad

    # -- elementwise arithmetic -------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        data = _apply2("add", self, other, lambda a, b: a + b)
        out = _result(data, "add", self, other)
        if out.requires_grad:
            def _bw(g, a=self, b=other):
                a._accum(_unbroadcast(g, a.data.shape))
                b._accum(_unbroadcast(g, b.data.shape))
            out._backward = _bw
        return out

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = as_tensor(other)
        data = _apply2("sub", self, other, lambda a, b: a - b)
        out = _result(data, "sub", self, other)
        if out.requires_grad:
            def _bw(g, a=self, b=other):
                a._accum(_unbroadcast(g, a.data.shape))
                b._accum(_unbroadcast(-g, b.data.shape))
            out._backward = _bw
        return out

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        data = _apply2("mul", self, other, lambda a, b: a * b)
        out = _result(data, "mul", self, other)
        if out.requires_grad:
            def _bw(g, a=self, b=other):
                a._accum(_unbroadcast(g * b.data, a.data.shape))
                b._accum(_unbroadcast(g * a.data, b.data.shape))
            out._backward = _bw
        return out

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return self * (-1.0)

    # -- matrix multiply ---------------------------------------------------

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError(
                f"matmul needs 2-D operands, got {self.data.shape} @ {other.data.shape}"
            )
        if self.data.shape[1] != other.data.shape[0]:
            raise ValueError(
                f"matmul shape mismatch: {self.data.shape} @ {other.data.shape}"
            )
        out = _result(self.data @ other.data, "matmul", self, other)
        if out.requires_grad:
            def _bw(g, a=self, b=other):
                a._accum(g @ b.data.T)
                b._accum(a.data.T @ g)
            out._backward = _bw
        return out

    # -- nonlinearities and shape ops ---------------------------------------

    def relu(self) -> "Tensor":
        out = _result(np.maximum(self.data, 0.0), "relu", self)
        if out.requires_grad:
            mask = (self.data > 0.0).astype(np.float64)
            out._backward = lambda g, a=self, m=mask: a._accum(g * m)
        return out

    def silu(self) -> "Tensor":
        sig = _sigmoid(self.data)
        out = _result(self.data * sig, "silu", self)
        if out.requires_grad:
            deriv = sig * (1.0 + self.data * (1.0 - sig))
            out._backward = lambda g, a=self, d=deriv: a._accum(g * d)
        return out

    def square(self) -> "Tensor":
        out = _result(self.data * self.data, "square", self)
        if out.requires_grad:
            out._backward = lambda g, a=self: a._accum(g * 2.0 * a.data)
        return out

    def sqrt(self) -> "Tensor":
        if np.any(self.data < 0.0):
            raise ValueError("sqrt of negative operand")
        root = np.sqrt(self.data)
        out = _result(root, "sqrt", self)
        if out.requires_grad:
            out._backward = lambda g, a=self, r=root: a._accum(g / (2.0 * r))
        return out

    def log(self) -> "Tensor":
        if np.any(self.data <= 0.0):
            raise ValueError("log of non-positive operand")
        out = _result(np.log(self.data), "log", self)
        if out.requires_grad:
            out._backward = lambda g, a=self: a._accum(g / a.data)
        return out

    def sum(self) -> "Tensor":
        out = _result(self.data.sum(), "sum", self)
        if out.requires_grad:
            out._backward = lambda g, a=self: a._accum(np.broadcast_to(g, a.data.shape).copy())
        return out

    def mean(self) -> "Tensor":
        n = self.data.size
        out = _result(self.data.mean(), "mean", self)
        if out.requires_grad:
            out._backward = lambda g, a=self, k=n: a._accum(
                np.broadcast_to(g / k, a.data.shape).copy()
            )
        return out

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _result(self.data.reshape(shape), "reshape", self)
        if out.requires_grad:
            out._backward = lambda g, a=self: a._accum(g.reshape(a.data.shape))
        return out

    def __getitem__(self, key) -> "Tensor":
        out = _result(np.array(self.data[key]), "slice", self)
        if out.requires_grad:
            def _bw(g, a=self, k=key):
                buf = np.zeros_like(a.data)
                np.add.at(buf, k, g)
                a._accum(buf)
            out._backward = _bw
        return out

    # -- backward pass ------------------------------------------------------

    def backward(self) -> None:
        """Populate adjoints of every reachable tensor from this scalar root."""
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar root, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        for node in topo:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, grad={self.requires_grad})"


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: Array, op: str, *parents: Tensor) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, op=op, parents=parents)
    return Tensor(data, op=op)


def _apply2(op: str, a: Tensor, b: Tensor, fn) -> Array:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError as exc:
        raise ValueError(f"shape mismatch for {op}: {a.data.shape} vs {b.data.shape}") from exc
    return fn(a.data, b.data)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along `axis`, splitting the adjoint back on backward."""
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat of empty sequence")
    data = np.concatenate([t.data for t in ts], axis=axis)
    out = _result(data, "concat", *ts)
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in ts]
        def _bw(g, parts=ts, sz=sizes, ax=axis):
            offset = 0
            for t, k in zip(parts, sz):
                index = [slice(None)] * g.ndim
                index[ax] = slice(offset, offset + k)
                t._accum(g[tuple(index)])
                offset += k
        out._backward = _bw
    return out


# -- random streams ----------------------------------------------------------


def stream(seed: int, name: str) -> np.random.Generator:
    """Counter-based generator addressed by (seed, name).

    Distinct names under the same seed give statistically independent,
    individually reproducible streams.
    """
    digest = hashlib.sha256(f"{int(seed)}\x1f{name}".encode("utf-8")).digest()
    key = np.frombuffer(digest[:16], dtype="<u8")
    return np.random.Generator(np.random.Philox(key=key))


def normal(seed: int, name: str, shape=()) -> Array:
    """One-shot standard-normal draw from the (seed, name) stream."""
    return stream(seed, name).standard_normal(shape)


# -- sinusoidal step embedding ------------------------------------------------


def time_embedding(t, dim: int) -> Array:
    """Sinusoidal embedding of step indices; `dim` must be even.

    Accepts a scalar or a batch of step indices and returns ``(len(t), dim)``.
    """
    if dim % 2 != 0 or dim <= 0:
        raise ValueError(f"embedding dimension must be positive and even, got {dim}")
    tv = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = tv[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


# -- feed-forward network ------------------------------------------------------


class Mlp:
    """Fully connected network with optional sinusoidal step conditioning.

    When `time_embed` is set, the embedding of the step index is concatenated
    to the input before the first layer, so the first weight matrix has
    ``in_dim + time_embed`` rows.
    """

    def __init__(
        self,
        in_dim: int,
        hidden: Sequence[int],
        out_dim: int,
        *,
        acts: Sequence[str] | None = None,
        time_embed: int | None = None,
        seed: int = 0,
        stream_name: str = "mlp-init",
    ):
        if in_dim <= 0 or out_dim <= 0 or any(h <= 0 for h in hidden):
            raise ValueError("layer dimensions must be positive")
        if time_embed is not None and (time_embed % 2 != 0 or time_embed <= 0):
            raise ValueError(f"time embedding dimension must be even, got {time_embed}")
        dims = [in_dim + (time_embed or 0), *hidden, out_dim]
        n_layers = len(dims) - 1
        if acts is None:
            acts = ["silu"] * (n_layers - 1) + ["linear"]
        acts = list(acts)
        if len(acts) != n_layers:
            raise ValueError(f"expected {n_layers} activations, got {len(acts)}")
        for a in acts:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.time_embed = int(time_embed) if time_embed else None
        self.acts = acts
        g = stream(seed, stream_name)
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for i in range(n_layers):
            fan_in = dims[i]
            gain = 2.0 if acts[i] in ("relu", "silu") else 1.0
            w = g.standard_normal((dims[i], dims[i + 1])) * math.sqrt(gain / fan_in)
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(np.zeros(dims[i + 1]), requires_grad=True))

    def parameters(self) -> list[Tensor]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.append(w)
            params.append(b)
        return params

    def layer_dims(self) -> list[dict]:
        return [
            {"in": w.data.shape[0], "out": w.data.shape[1], "act": a}
            for w, a in zip(self.weights, self.acts)
        ]

    def _prepare(self, x, t):
        was_1d = False
        if isinstance(x, Tensor):
            xt = x
        else:
            xt = Tensor(x)
        if xt.data.ndim == 1:
            xt = xt.reshape(1, xt.data.shape[0])
            was_1d = True
        elif xt.data.ndim != 2:
            raise ValueError(f"expected a vector or a batch, got shape {xt.data.shape}")
        if xt.data.shape[1] != self.in_dim:
            raise ValueError(
                f"input dimension mismatch: expected {self.in_dim}, got {xt.data.shape[1]}"
            )
        emb = None
        if self.time_embed is not None:
            if t is None:
                raise ValueError("this network is step-conditioned; a step index is required")
            emb = time_embedding(t, self.time_embed)
            if emb.shape[0] == 1 and xt.data.shape[0] > 1:
                emb = np.broadcast_to(emb, (xt.data.shape[0], self.time_embed)).copy()
            if emb.shape[0] != xt.data.shape[0]:
                raise ValueError(
                    f"step batch {emb.shape[0]} does not match input batch {xt.data.shape[0]}"
                )
        return xt, emb, was_1d

    def __call__(self, x, t=None) -> Tensor:
        """Tape-recorded forward pass; accepts a vector or a batch."""
        xt, emb, was_1d = self._prepare(x, t)
        h = xt if emb is None else concat([xt, Tensor(emb)], axis=1)
        for w, b, act in zip(self.weights, self.biases, self.acts):
            h = h @ w + b
            if act == "relu":
                h = h.relu()
            elif act == "silu":
                h = h.silu()
        if was_1d:
            h = h.reshape(self.out_dim)
        return h

    def forward_np(self, x: Array, t=None) -> Array:
        """Plain numpy forward pass (no tape), for scoring and sampling loops."""
        xt, emb, was_1d = self._prepare(np.asarray(x, dtype=np.float64), t)
        h = xt.data if emb is None else np.concatenate([xt.data, emb], axis=1)
        for w, b, act in zip(self.weights, self.biases, self.acts):
            h = h @ w.data + b.data
            if act == "relu":
                h = np.maximum(h, 0.0)
            elif act == "silu":
                h = h * _sigmoid(h)
        return h.reshape(self.out_dim) if was_1d else h


# -- optimizer -----------------------------------------------------------------


class AdamW:
    """Adam with decoupled weight decay.

    The decay multiplies parameters by ``1 - lr*weight_decay`` independently of
    the moment-based update, so a zero gradient with nonzero decay still
    shrinks the weights.
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        if lr < 0.0:
            raise ValueError(f"learning rate must be nonnegative, got {lr}")
        if not (0.0 <= beta1 < 1.0) or not (0.0 <= beta2 < 1.0):
            raise ValueError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        if eps <= 0.0:
            raise ValueError(f"eps must be positive, got {eps}")
        if weight_decay < 0.0:
            raise ValueError(f"weight decay must be nonnegative, got {weight_decay}")
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.weight_decay != 0.0:
                p.data *= 1.0 - self.lr * self.weight_decay
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

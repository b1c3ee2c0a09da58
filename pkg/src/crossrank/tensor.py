"""Dense float64 tensors with reverse-mode automatic differentiation.

Just enough of a tensor library to train a miniature transformer on a CPU:
numpy holds the raw values, a tape of parent links holds the graph, and
``Tensor.backward`` walks it once in reverse topological order.  Everything
runs in 64-bit so finite-difference gradient checks are meaningful.

Reductions that cross the candidate axis of a ranked set (the softmax
denominator and value mixing inside global attention, the per-set loss mean)
have exactly-rounded variants (``exact_sum``, ``softmax_exact``,
``matmul_exact``) built on ``math.fsum``, which makes those forward results
invariant to the order the candidates arrive in.
"""

from __future__ import annotations

import math
import struct

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


class Tensor:
    """A numpy array plus an optional gradient and a link into the graph.

    Tensors are immutable after construction except for ``grad``, which
    accumulates during ``backward``.  A graph is meant to live on a single
    thread; parameters (leaf tensors) may be shared read-only.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)  # NB: keeps 0-d shape, unlike calling it directly
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data.item())

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)  # copy: g may be shared
        else:
            self.grad += g

    def backward(self, seed=None):
        """Backpropagate from this tensor; visits each graph node once.

        Without ``seed`` the tensor must be a scalar (gradient 1.0).
        """
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without seed requires a scalar tensor")
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != self.data.shape:
                raise ShapeError(f"seed shape {seed.shape} != tensor shape {self.data.shape}")

        # Iterative topological sort; recursion would overflow on deep graphs.
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and p.requires_grad:
                    stack.append((p, False))

        self._accumulate(seed)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; scalars are treated as constants.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(data, parents, backward_fn):
    """Build a graph node; skips bookkeeping when no parent needs gradients."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn(out)
    return out


def _unbroadcast(grad, shape):
    """Reduce ``grad`` back to ``shape`` by summing the broadcast axes."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from None

    def bw(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.data.shape))
        return run

    return _make(data, (a, b), bw)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from None

    def bw(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.data.shape))
        return run

    return _make(data, (a, b), bw)


def matmul(a, b):
    """Matrix product; leading batch dimensions follow numpy matmul rules."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree for {a.shape} and {b.shape}")
    data = np.matmul(a.data, b.data)

    def bw(out):
        def run(g):
            if a.requires_grad:
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            if a.requires_grad:
                a._accumulate(_unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(gb, b.data.shape))
        return run

    return _make(data, (a, b), bw)


def _fsum_along(arr, axis):
    """Exactly-rounded sum along one axis via math.fsum (slow, small arrays only)."""
    moved = np.moveaxis(arr, axis, -1)
    flat = moved.reshape(-1, moved.shape[-1])
    out = np.empty(flat.shape[0], dtype=np.float64)
    for i in range(flat.shape[0]):
        out[i] = math.fsum(flat[i])
    return out.reshape(moved.shape[:-1])


def matmul_exact(a, b):
    """Like matmul but each inner sum is exactly rounded (order-invariant).

    Used where the contraction axis enumerates candidates, so permuting the
    candidates cannot change the forward result even in the last ulp.
    Backward uses ordinary matmul.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul_exact: inner dimensions disagree for {a.shape} and {b.shape}")
    prod = a.data[..., :, None, :] * np.swapaxes(b.data, -1, -2)[..., None, :, :]
    data = _fsum_along(prod, -1)

    def bw(out):
        def run(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape))
        return run

    return _make(data, (a, b), bw)


def reshape(a, shape):
    a = _as_tensor(a)
    data = a.data.reshape(shape)

    def bw(out):
        def run(g):
            a._accumulate(g.reshape(a.data.shape))
        return run

    return _make(data, (a,), bw)


def transpose(a, axes):
    a = _as_tensor(a)
    data = np.transpose(a.data, axes)
    inv = np.argsort(axes)

    def bw(out):
        def run(g):
            a._accumulate(np.transpose(g, inv))
        return run

    return _make(data, (a,), bw)


def concat(tensors, axis):
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def bw(out):
        def run(g):
            offset = 0
            for t, s in zip(tensors, sizes):
                if t.requires_grad:
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(offset, offset + s)
                    t._accumulate(g[tuple(idx)])
                offset += s
        return run

    return _make(data, tuple(tensors), bw)


def narrow(a, axis, start, stop):
    """Contiguous slice along one axis."""
    a = _as_tensor(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    data = a.data[idx]

    def bw(out):
        def run(g):
            full = np.zeros_like(a.data)
            full[idx] = g
            a._accumulate(full)
        return run

    return _make(data, (a,), bw)


def reduce_sum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(out):
        def run(g):
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.data.shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(gg, a.data.shape).copy())
        return run

    return _make(data, (a,), bw)


def reduce_mean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def exact_sum(a, axis, keepdims=False):
    """Sum along one axis with exact rounding; order-invariant forward."""
    a = _as_tensor(a)
    data = _fsum_along(a.data, axis)
    if keepdims:
        data = np.expand_dims(data, axis)

    def bw(out):
        def run(g):
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.data.shape).copy())
        return run

    return _make(data, (a,), bw)


def relu(a):
    a = _as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def bw(out):
        def run(g):
            a._accumulate(g * (a.data > 0.0))
        return run

    return _make(data, (a,), bw)


def gelu(a):
    """Gaussian error linear unit, exact erf form."""
    a = _as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + _erf_array(x / math.sqrt(2.0)))
    data = x * cdf

    def bw(out):
        def run(g):
            pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
            a._accumulate(g * (cdf + x * pdf))
        return run

    return _make(data, (a,), bw)


_erf = np.frompyfunc(math.erf, 1, 1)


def _erf_array(x):
    return _erf(x).astype(np.float64)


def softmax(a, axis=-1):
    """Numerically stabilized softmax; rows sum to 1 along ``axis``."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def bw(out):
        def run(g):
            y = out.data
            dot = (g * y).sum(axis=axis, keepdims=True)
            a._accumulate(y * (g - dot))
        return run

    return _make(data, (a,), bw)


def softmax_exact(a, axis=-1):
    """Softmax whose denominator is exactly rounded (order-invariant)."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    denom = np.expand_dims(_fsum_along(e, axis), axis)
    data = e / denom

    def bw(out):
        def run(g):
            y = out.data
            dot = (g * y).sum(axis=axis, keepdims=True)
            a._accumulate(y * (g - dot))
        return run

    return _make(data, (a,), bw)


def layer_norm(x, gain, bias, eps=1e-6):
    """Normalize over the last axis to zero mean / unit variance, then scale."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gain.data + bias.data
    d = x.data.shape[-1]

    def bw(out):
        def run(g):
            if gain.requires_grad:
                gain._accumulate(_unbroadcast(g * xhat, gain.data.shape))
            if bias.requires_grad:
                bias._accumulate(_unbroadcast(g, bias.data.shape))
            if x.requires_grad:
                gx = g * gain.data
                term = gx - gx.mean(axis=-1, keepdims=True) \
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
                x._accumulate(term * inv)
        return run

    return _make(data, (x, gain, bias), bw)


def embedding(weight, ids):
    """Row lookup into ``weight``; gradients scatter-add back into the rows."""
    weight = _as_tensor(weight)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.data.shape[0]):
        raise ShapeError(f"embedding: id out of range for table of {weight.data.shape[0]} rows")
    data = weight.data[ids]

    def bw(out):
        def run(g):
            if weight.grad is None:
                weight.grad = np.zeros_like(weight.data)
            np.add.at(weight.grad, ids.reshape(-1),
                      g.reshape(-1, weight.data.shape[1]))
        return run

    return _make(data, (weight,), bw)


def cross_entropy_with_logits(logits, targets):
    """Per-row cross entropy from raw logits.

    ``logits`` is [rows, classes], ``targets`` an int vector of class indices.
    Returns a [rows] tensor of losses; callers reduce it themselves.
    """
    logits = _as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != (logits.data.shape[0],):
        raise ShapeError(
            f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    z = logits.data
    zmax = z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z - zmax).sum(axis=-1)) + zmax[:, 0]
    data = lse - z[np.arange(z.shape[0]), targets]

    def bw(out):
        def run(g):
            p = np.exp(z - zmax)
            p /= p.sum(axis=-1, keepdims=True)
            p[np.arange(z.shape[0]), targets] -= 1.0
            logits._accumulate(p * g[:, None])
        return run

    return _make(data, (logits,), bw)


# ---------------------------------------------------------------------------
# Checkpoint serialization: flat archive of parameter-path -> array, with a
# version header.  All values little-endian float64; round-trips bit-exactly.
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"TNSR"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised on a malformed or unsupported checkpoint file."""


def save_checkpoint(path, params):
    """Write a name->Tensor/array mapping to ``path``."""
    entries = sorted(params.items())
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(entries)))
        for name, value in entries:
            arr = value.data if isinstance(value, Tensor) else np.asarray(value)
            arr = arr.astype("<f8", copy=False)
            if not arr.flags["C_CONTIGUOUS"]:
                arr = np.ascontiguousarray(arr)  # 0-d arrays never hit this branch
            raw_name = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw_name)))
            f.write(raw_name)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(arr.tobytes())


def load_checkpoint(path):
    """Read a checkpoint written by ``save_checkpoint``; returns name->ndarray."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (count,) = struct.unpack_from("<I", blob, 8)
    offset = 12
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(shape)
        offset += 8 * n
        out[name] = arr.astype(np.float64)
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    return out

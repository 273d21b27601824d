"""Dense-array primitives and a minimal reverse-mode tape.

Feature maps are plain numpy arrays in NHWC layout (row-major, channels
fastest-varying). Every op here is pure: inputs are never mutated, and a
fresh array is returned. Ops accept either numpy arrays (eager) or `Var`
handles bound to a `Tape`; if any input is a `Var` the op is recorded so
`backward` can replay adjoints. One tape serves one forward pass.

Precision is a property of the arrays, not a global switch: float32 for
inference, float64 for gradient checks (central differences are useless
at float32).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence, Union

import numpy as np
from scipy.special import erf

from .errors import ConfigError, InvalidInputError, ShapeError, UnsupportedOpError

Array = np.ndarray

# plain Python floats so float32 inputs are not promoted
_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT2PI = float(1.0 / np.sqrt(2.0 * np.pi))


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------


class Var:
    """Handle to one node of a tape-recorded computation."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: "Tape", idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> Array:
        return self.tape.nodes[self.idx].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __add__(self, other: "ArrayLike") -> "Var":
        return add(self, other)

    def __radd__(self, other: "ArrayLike") -> "Var":
        return add(other, self)

    def __repr__(self) -> str:
        node = self.tape.nodes[self.idx]
        return f"Var(#{self.idx} {node.op} {node.value.shape})"


ArrayLike = Union[Array, Var]


@dataclass
class _Node:
    op: str
    value: Array
    # one entry per op input: node index, or None for a constant input
    parents: tuple[int | None, ...]
    ctx: dict


class Tape:
    """Append-only operation record; node order is topological by construction."""

    def __init__(self) -> None:
        self.nodes: list[_Node] = []

    def leaf(self, value: Array, name: str | None = None) -> Var:
        """Register an input/parameter array as a differentiable leaf."""
        value = np.asarray(value)
        self.nodes.append(_Node("leaf", value, (), {"name": name}))
        return Var(self, len(self.nodes) - 1)

    def _record(self, op: str, value: Array, parents: tuple[int | None, ...], ctx: dict) -> Var:
        self.nodes.append(_Node(op, value, parents, ctx))
        return Var(self, len(self.nodes) - 1)


def _value(x: ArrayLike) -> Array:
    return x.value if isinstance(x, Var) else np.asarray(x)


def _find_tape(*xs: ArrayLike | None) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif tape is not x.tape:
                raise InvalidInputError("operands are bound to different tapes")
    return tape


def _parent(x: ArrayLike | None) -> int | None:
    return x.idx if isinstance(x, Var) else None


# adjoint registry: op kind -> fn(node, grad_out) -> list[(parent_slot, grad)]
_ADJOINTS: dict[str, Callable[[_Node, Array], list[tuple[int, Array]]]] = {}


def _adjoint(op: str):
    def deco(fn):
        _ADJOINTS[op] = fn
        return fn

    return deco


class Gradients:
    """Result of `backward`: per-leaf gradients keyed by Var."""

    def __init__(self, tape: Tape, grads: list[Array | None]):
        self._tape = tape
        self._grads = grads

    def wrt(self, var: Var) -> Array:
        if var.tape is not self._tape:
            raise InvalidInputError("Var belongs to a different tape")
        g = self._grads[var.idx]
        if g is None:
            # leaf never touched the output: zero gradient by contract
            return np.zeros_like(var.value)
        return g


def backward(tape: Tape, output: Var) -> Gradients:
    """Reverse-accumulate d(output)/d(leaf) for every leaf on the tape.

    `output` must be a scalar (size-1) node recorded on `tape`. Raises
    UnsupportedOpError if a recorded op has no registered adjoint.
    """
    if output.tape is not tape:
        raise InvalidInputError("output Var is not bound to this tape")
    out_node = tape.nodes[output.idx]
    if out_node.value.size != 1:
        raise InvalidInputError(
            f"backward target must be scalar, got shape {out_node.value.shape}"
        )
    grads: list[Array | None] = [None] * len(tape.nodes)
    grads[output.idx] = np.ones_like(out_node.value)
    for idx in range(output.idx, -1, -1):
        g = grads[idx]
        if g is None:
            continue
        node = tape.nodes[idx]
        if node.op == "leaf":
            continue
        adj = _ADJOINTS.get(node.op)
        if adj is None:
            raise UnsupportedOpError(f"no adjoint registered for op '{node.op}'")
        for slot, contrib in adj(node, g):
            pidx = node.parents[slot]
            if pidx is None:
                continue
            # accumulation always allocates a fresh array, so aliasing g is safe
            if grads[pidx] is None:
                grads[pidx] = contrib
            else:
                grads[pidx] = grads[pidx] + contrib
    return Gradients(tape, grads)


# ---------------------------------------------------------------------------
# Primitive ops
# ---------------------------------------------------------------------------


def add(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """Elementwise sum; shapes must match exactly (no broadcasting)."""
    av, bv = _value(a), _value(b)
    if av.shape != bv.shape:
        raise ShapeError(f"add: shape mismatch {av.shape} vs {bv.shape}")
    out = av + bv
    tape = _find_tape(a, b)
    if tape is None:
        return out
    return tape._record("add", out, (_parent(a), _parent(b)), {})


@_adjoint("add")
def _adj_add(node: _Node, g: Array):
    return [(0, g), (1, g)]


def linear(x: ArrayLike, weight: ArrayLike, bias: ArrayLike | None = None) -> ArrayLike:
    """Affine map on the last axis: out[..., j] = sum_i x[..., i] W[i, j] + b[j]."""
    xv, wv = _value(x), _value(weight)
    if wv.ndim != 2:
        raise ShapeError(f"linear: weight must be rank-2, got {wv.shape}")
    if xv.shape[-1] != wv.shape[0]:
        raise ShapeError(
            f"linear: input last dim {xv.shape} does not match weight {wv.shape}"
        )
    bv = None
    if bias is not None:
        bv = _value(bias)
        if bv.shape != (wv.shape[1],):
            raise ShapeError(f"linear: bias {bv.shape} does not match weight {wv.shape}")
    x2 = xv.reshape(-1, xv.shape[-1])
    out2 = x2 @ wv
    if bv is not None:
        out2 = out2 + bv
    out = out2.reshape(xv.shape[:-1] + (wv.shape[1],))
    tape = _find_tape(x, weight, bias)
    if tape is None:
        return out
    ctx = {"x": xv, "w": wv}
    return tape._record("linear", out, (_parent(x), _parent(weight), _parent(bias)), ctx)


@_adjoint("linear")
def _adj_linear(node: _Node, g: Array):
    xv, wv = node.ctx["x"], node.ctx["w"]
    g2 = g.reshape(-1, g.shape[-1])
    out = []
    if node.parents[0] is not None:
        out.append((0, (g2 @ wv.T).reshape(xv.shape)))
    if node.parents[1] is not None:
        x2 = xv.reshape(-1, xv.shape[-1])
        out.append((1, x2.T @ g2))
    if node.parents[2] is not None:
        out.append((2, g2.sum(axis=0)))
    return out


def relu(x: ArrayLike) -> ArrayLike:
    xv = _value(x)
    out = np.maximum(xv, 0)
    tape = _find_tape(x)
    if tape is None:
        return out
    return tape._record("relu", out, (_parent(x),), {"mask": xv > 0})


@_adjoint("relu")
def _adj_relu(node: _Node, g: Array):
    return [(0, g * node.ctx["mask"])]


def gelu(x: ArrayLike) -> ArrayLike:
    """Exact-erf GELU: 0.5 x (1 + erf(x / sqrt 2))."""
    xv = _value(x)
    out = 0.5 * xv * (1.0 + erf(xv * _INV_SQRT2))
    tape = _find_tape(x)
    if tape is None:
        return out
    return tape._record("gelu", out, (_parent(x),), {"x": xv})


@_adjoint("gelu")
def _adj_gelu(node: _Node, g: Array):
    xv = node.ctx["x"]
    cdf = 0.5 * (1.0 + erf(xv * _INV_SQRT2))
    pdf = np.exp(-0.5 * xv * xv) * _INV_SQRT2PI
    return [(0, g * (cdf + xv * pdf))]


def activation(x: ArrayLike, kind: str) -> ArrayLike:
    if kind == "gelu":
        return gelu(x)
    if kind == "relu":
        return relu(x)
    raise ConfigError(f"unknown activation kind '{kind}'")


def batch_norm(
    x: ArrayLike,
    gamma: ArrayLike,
    beta: ArrayLike,
    *,
    mode: str,
    running_mean: Array | None = None,
    running_var: Array | None = None,
    eps: float = 1e-5,
) -> ArrayLike:
    """Per-channel normalization over all leading axes (channels last).

    mode="batch" normalizes with statistics of x itself (the differentiable
    path); mode="running" applies the stored statistics (inference only —
    recording it on a tape and calling backward raises UnsupportedOpError,
    since no adjoint is registered for it).
    """
    xv = _value(x)
    gv, bv = _value(gamma), _value(beta)
    c = xv.shape[-1]
    if gv.shape != (c,) or bv.shape != (c,):
        raise ShapeError(
            f"batch_norm: gamma/beta {gv.shape}/{bv.shape} do not match channels {c}"
        )
    axes = tuple(range(xv.ndim - 1))
    if mode == "batch":
        count = int(np.prod([xv.shape[a] for a in axes])) if xv.ndim > 1 else xv.size
        if count == 0 or xv.size == 0:
            raise InvalidInputError("batch_norm: zero-size batch in batch-statistics mode")
        mean = xv.mean(axis=axes)
        var = xv.var(axis=axes)
    elif mode == "running":
        if running_mean is None or running_var is None:
            raise ConfigError("batch_norm: running mode requires stored statistics")
        # stored statistics are buffers, never differentiated
        mean, var = _value(running_mean), _value(running_var)
    else:
        raise ConfigError(f"batch_norm: unknown mode '{mode}'")
    invstd = 1.0 / np.sqrt(var + eps)
    xhat = (xv - mean) * invstd
    out = xhat * gv + bv
    tape = _find_tape(x, gamma, beta)
    if tape is None:
        return out
    op = "batch_norm" if mode == "batch" else "batch_norm_running"
    ctx = {"xhat": xhat, "invstd": invstd, "gamma": gv, "axes": axes}
    return tape._record(op, out, (_parent(x), _parent(gamma), _parent(beta)), ctx)


@_adjoint("batch_norm")
def _adj_batch_norm(node: _Node, g: Array):
    # standard batch-statistics adjoint; running mode intentionally unregistered
    xhat, invstd, gv = node.ctx["xhat"], node.ctx["invstd"], node.ctx["gamma"]
    axes = node.ctx["axes"]
    out = []
    if node.parents[0] is not None:
        m = np.prod([g.shape[a] for a in axes])
        g_mean = g.mean(axis=axes)
        gx_mean = (g * xhat).mean(axis=axes)
        dx = (gv * invstd) * (g - g_mean - xhat * gx_mean)
        out.append((0, dx))
    if node.parents[1] is not None:
        out.append((1, (g * xhat).sum(axis=axes)))
    if node.parents[2] is not None:
        out.append((2, g.sum(axis=axes)))
    return out


def reshape(x: ArrayLike, shape: Sequence[int]) -> ArrayLike:
    xv = _value(x)
    shape = tuple(shape)
    try:
        out = xv.reshape(shape).copy()
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {xv.shape} as {shape}: {e}") from None
    tape = _find_tape(x)
    if tape is None:
        return out
    return tape._record("reshape", out, (_parent(x),), {"in_shape": xv.shape})


@_adjoint("reshape")
def _adj_reshape(node: _Node, g: Array):
    return [(0, g.reshape(node.ctx["in_shape"]))]


def transpose(x: ArrayLike, perm: Sequence[int]) -> ArrayLike:
    xv = _value(x)
    perm = tuple(perm)
    out = np.ascontiguousarray(xv.transpose(perm))
    tape = _find_tape(x)
    if tape is None:
        return out
    return tape._record("transpose", out, (_parent(x),), {"perm": perm})


@_adjoint("transpose")
def _adj_transpose(node: _Node, g: Array):
    perm = node.ctx["perm"]
    inv = np.argsort(perm)
    return [(0, np.ascontiguousarray(g.transpose(inv)))]


def take(x: ArrayLike, idx: Array, axis: int) -> ArrayLike:
    """Gather along one axis: out[..., i, ...] = x[..., idx[i], ...].

    idx may repeat entries (the adjoint scatter-adds), which is how the
    circular/reflect/replicate paddings and all token permutations are built.
    """
    xv = _value(x)
    idx = np.asarray(idx, dtype=np.intp)
    extent = xv.shape[axis]
    if idx.size and (idx.min() < 0 or idx.max() >= extent):
        raise InvalidInputError(
            f"take: index out of range for extent {extent} along axis {axis}"
        )
    out = np.take(xv, idx, axis=axis)
    tape = _find_tape(x)
    if tape is None:
        return out
    return tape._record("take", out, (_parent(x),), {"idx": idx, "axis": axis, "in_shape": xv.shape})


@_adjoint("take")
def _adj_take(node: _Node, g: Array):
    idx, axis, in_shape = node.ctx["idx"], node.ctx["axis"], node.ctx["in_shape"]
    gx = np.zeros(in_shape, dtype=g.dtype)
    np.add.at(np.moveaxis(gx, axis, 0), idx, np.moveaxis(g, axis, 0))
    return [(0, gx)]


def pad_zero(x: ArrayLike, axis: int, before: int, after: int) -> ArrayLike:
    xv = _value(x)
    if before < 0 or after < 0:
        raise InvalidInputError("pad_zero: negative pad")
    widths = [(0, 0)] * xv.ndim
    widths[axis] = (before, after)
    out = np.pad(xv, widths, mode="constant")
    tape = _find_tape(x)
    if tape is None:
        return out
    return tape._record("pad_zero", out, (_parent(x),), {"axis": axis, "before": before, "extent": xv.shape[axis]})


@_adjoint("pad_zero")
def _adj_pad_zero(node: _Node, g: Array):
    axis, before, extent = node.ctx["axis"], node.ctx["before"], node.ctx["extent"]
    sl = [slice(None)] * g.ndim
    sl[axis] = slice(before, before + extent)
    return [(0, np.ascontiguousarray(g[tuple(sl)]))]


def crop(x: ArrayLike, axis: int, start: int, stop: int) -> ArrayLike:
    xv = _value(x)
    extent = xv.shape[axis]
    if not (0 <= start <= stop <= extent):
        raise ShapeError(f"crop: [{start}:{stop}] out of range for extent {extent}")
    sl = [slice(None)] * xv.ndim
    sl[axis] = slice(start, stop)
    out = np.ascontiguousarray(xv[tuple(sl)])
    tape = _find_tape(x)
    if tape is None:
        return out
    return tape._record("crop", out, (_parent(x),), {"axis": axis, "start": start, "in_shape": xv.shape})


@_adjoint("crop")
def _adj_crop(node: _Node, g: Array):
    axis, start, in_shape = node.ctx["axis"], node.ctx["start"], node.ctx["in_shape"]
    gx = np.zeros(in_shape, dtype=g.dtype)
    sl = [slice(None)] * g.ndim
    sl[axis] = slice(start, start + g.shape[axis])
    gx[tuple(sl)] = g
    return [(0, gx)]


def mean_axes(x: ArrayLike, axes: tuple[int, ...]) -> ArrayLike:
    xv = _value(x)
    out = xv.mean(axis=axes)
    tape = _find_tape(x)
    if tape is None:
        return out
    return tape._record("mean_axes", out, (_parent(x),), {"axes": axes, "in_shape": xv.shape})


@_adjoint("mean_axes")
def _adj_mean_axes(node: _Node, g: Array):
    axes, in_shape = node.ctx["axes"], node.ctx["in_shape"]
    count = 1
    ge = g
    for a in sorted(axes):
        ge = np.expand_dims(ge, a)
        count *= in_shape[a]
    return [(0, np.broadcast_to(ge / count, in_shape).copy())]


def sum_all(x: ArrayLike) -> ArrayLike:
    xv = _value(x)
    out = np.asarray(xv.sum())
    tape = _find_tape(x)
    if tape is None:
        return out
    return tape._record("sum_all", out, (_parent(x),), {"in_shape": xv.shape, "dtype": xv.dtype})


@_adjoint("sum_all")
def _adj_sum_all(node: _Node, g: Array):
    return [(0, np.full(node.ctx["in_shape"], g, dtype=node.ctx["dtype"]))]


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass
class LinearParams:
    """Weight [in_dim, out_dim] and optional bias [out_dim]."""

    weight: ArrayLike
    bias: ArrayLike | None = None

    def __post_init__(self):
        w = _value(self.weight)
        if w.ndim != 2:
            raise ConfigError(f"LinearParams: weight must be rank-2, got {w.shape}")
        if self.bias is not None:
            b = _value(self.bias)
            if b.shape != (w.shape[1],):
                raise ConfigError(
                    f"LinearParams: bias {b.shape} inconsistent with weight {w.shape}"
                )

    @property
    def in_dim(self) -> int:
        return _value(self.weight).shape[0]

    @property
    def out_dim(self) -> int:
        return _value(self.weight).shape[1]


@dataclass
class NormParams:
    """Batch-norm state: affine (gamma, beta), running stats, epsilon, mode."""

    gamma: ArrayLike
    beta: ArrayLike
    running_mean: Array
    running_var: Array
    eps: float = 1e-5
    mode: str = "running"  # "batch" | "running"

    def __post_init__(self):
        if self.eps <= 0:
            raise ConfigError("NormParams: eps must be positive")
        if np.any(_value(self.running_var) < 0):
            raise ConfigError("NormParams: running variance must be nonnegative")
        if self.mode not in ("batch", "running"):
            raise ConfigError(f"NormParams: unknown mode '{self.mode}'")

    @property
    def channels(self) -> int:
        return _value(self.gamma).shape[0]


def identity_norm(channels: int, dtype=np.float32, mode: str = "running") -> NormParams:
    return NormParams(
        gamma=np.ones(channels, dtype=dtype),
        beta=np.zeros(channels, dtype=dtype),
        running_mean=np.zeros(channels, dtype=dtype),
        running_var=np.ones(channels, dtype=dtype),
        mode=mode,
    )


def apply_linear(x: ArrayLike, p: LinearParams) -> ArrayLike:
    return linear(x, p.weight, p.bias)


def apply_norm(x: ArrayLike, p: NormParams) -> ArrayLike:
    return batch_norm(
        x,
        p.gamma,
        p.beta,
        mode=p.mode,
        running_mean=p.running_mean,
        running_var=p.running_var,
        eps=p.eps,
    )


# ---------------------------------------------------------------------------
# Parameter-tree utilities
# ---------------------------------------------------------------------------


def map_arrays(obj, fn: Callable[[Array], ArrayLike]):
    """Rebuild a nested dataclass/list/tuple/dict structure, applying fn to arrays."""
    if isinstance(obj, np.ndarray):
        return fn(obj)
    if isinstance(obj, Var):
        return fn(obj.value)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        kwargs = {f.name: map_arrays(getattr(obj, f.name), fn) for f in dataclasses.fields(obj)}
        return obj.__class__(**kwargs)
    if isinstance(obj, (list, tuple)):
        return type(obj)(map_arrays(v, fn) for v in obj)
    if isinstance(obj, dict):
        return {k: map_arrays(v, fn) for k, v in obj.items()}
    return obj


def iter_arrays(obj, prefix: str = "") -> Iterator[tuple[str, Array]]:
    """Yield (dotted_path, array) for every ndarray in a parameter tree."""
    if isinstance(obj, np.ndarray):
        yield prefix, obj
        return
    if isinstance(obj, Var):
        yield prefix, obj.value
        return
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            sub = f"{prefix}.{f.name}" if prefix else f.name
            yield from iter_arrays(getattr(obj, f.name), sub)
        return
    if isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            yield from iter_arrays(v, f"{prefix}.{i}" if prefix else str(i))
        return
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from iter_arrays(v, f"{prefix}.{k}" if prefix else str(k))


def cast_tree(obj, dtype):
    """Copy a parameter tree with every array cast to dtype."""
    return map_arrays(obj, lambda a: a.astype(dtype))


def bind_tree(obj, tape: Tape):
    """Copy a parameter tree with every array replaced by a tape leaf."""
    return map_arrays(obj, lambda a: tape.leaf(a))


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


def finite_difference_grad(f: Callable[[Array], float], x: Array, eps: float) -> Array:
    """Central-difference gradient estimate of a scalar function of x."""
    if eps <= 0:
        raise InvalidInputError("finite_difference_grad: eps must be positive")
    x = np.asarray(x)
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def finite_difference_grad_sample(
    f: Callable[[Array], float], x: Array, eps: float, coords: Sequence[int]
) -> np.ndarray:
    """Central differences at selected flat coordinates only."""
    x = np.asarray(x)
    flat = x.reshape(-1)
    out = np.zeros(len(coords), dtype=np.float64)
    for k, i in enumerate(coords):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        out[k] = (fp - fm) / (2.0 * eps)
    return out

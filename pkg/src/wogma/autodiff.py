"""Minimal reverse-mode autodiff on dense float64 arrays.

Provides exactly the primitives the detection model needs. Every operation
records a node on the active tape; backward() replays the tape in reverse
execution order and accumulates gradients additively at fan-out points.
All values are 64-bit floats so central finite differences are a reliable
oracle for every primitive (see grad_check).
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class DTensor:
    """Dense n-dimensional float64 array with an optional gradient buffer."""

    __slots__ = ("values", "grad", "requires_grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        return self.grad

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"DTensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


class Parameter:
    """Trainable tensor plus Adam moment buffers and a step counter."""

    __slots__ = ("name", "tensor", "adam_m", "adam_v", "step_count")

    def __init__(self, values, name: str = ""):
        self.name = name
        self.tensor = DTensor(values, requires_grad=True)
        self.adam_m = np.zeros_like(self.tensor.values)
        self.adam_v = np.zeros_like(self.tensor.values)
        self.step_count = 0

    @property
    def values(self) -> np.ndarray:
        return self.tensor.values

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Parameter({self.name!r}, shape={self.tensor.values.shape})"


def init_uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int, name: str) -> Parameter:
    """Uniform init in +-sqrt(1/fan_in), the convention used for every weight."""
    bound = math.sqrt(1.0 / fan_in)
    return Parameter(rng.uniform(-bound, bound, size=tuple(shape)), name=name)


def init_zeros(shape: Sequence[int], name: str) -> Parameter:
    return Parameter(np.zeros(tuple(shape)), name=name)


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

class Tape:
    """Ordered record of executed primitives for one forward pass."""

    __slots__ = ("_nodes",)

    def __init__(self):
        self._nodes: list[tuple[DTensor, Callable[[np.ndarray], None]]] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, output: DTensor) -> None:
        """Seed d(output)=1 and pull gradients back through the tape.

        `output` must be a scalar (size-1) tensor. Nodes whose output never
        received a gradient are dead branches and are skipped.
        """
        if output.values.size != 1:
            raise ShapeError(f"backward needs a scalar output, got shape {output.values.shape}")
        output.ensure_grad()[...] = 1.0
        for out, pull in reversed(self._nodes):
            if out.grad is not None:
                pull(out.grad)

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()


_TAPE_STACK: list[Tape] = []


def _as_tensor(x) -> DTensor:
    if isinstance(x, Parameter):
        return x.tensor
    if isinstance(x, DTensor):
        return x
    return DTensor(x)


def _record(out: DTensor, pull: Callable[[np.ndarray], None]) -> None:
    if _TAPE_STACK and out.requires_grad:
        _TAPE_STACK[-1]._nodes.append((out, pull))


def _needs(*tensors: DTensor) -> bool:
    return bool(_TAPE_STACK) and any(t.requires_grad for t in tensors)


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def affine(x, w, b) -> DTensor:
    """out = x @ w + b with x: (..., k), w: (k, n), b: (n,)."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.values.shape[-1] != w.values.shape[0]:
        raise ShapeError(f"affine: x shape {x.values.shape} does not match w shape {w.values.shape}")
    if b.values.shape != (w.values.shape[1],):
        raise ShapeError(f"affine: b shape {b.values.shape} does not match w shape {w.values.shape}")
    out = DTensor(x.values @ w.values + b.values, requires_grad=_needs(x, w, b))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            x.ensure_grad()[...] += g @ w.values.T
        if w.requires_grad:
            g2 = g.reshape(-1, g.shape[-1])
            x2 = x.values.reshape(-1, x.values.shape[-1])
            w.ensure_grad()[...] += x2.T @ g2
        if b.requires_grad:
            b.ensure_grad()[...] += g.reshape(-1, g.shape[-1]).sum(axis=0)

    _record(out, pull)
    return out


def linear(x, w) -> DTensor:
    """out = x @ w, the bias-free affine map."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.values.shape[-1] != w.values.shape[0]:
        raise ShapeError(f"linear: x shape {x.values.shape} does not match w shape {w.values.shape}")
    out = DTensor(x.values @ w.values, requires_grad=_needs(x, w))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            x.ensure_grad()[...] += g @ w.values.T
        if w.requires_grad:
            g2 = g.reshape(-1, g.shape[-1])
            x2 = x.values.reshape(-1, x.values.shape[-1])
            w.ensure_grad()[...] += x2.T @ g2

    _record(out, pull)
    return out


def graph_apply(a: np.ndarray, x) -> DTensor:
    """Left-multiply by a constant (non-learnable) matrix: out = a @ x.

    x may carry leading batch dimensions: (..., n, c) with a: (n, n).
    """
    x = _as_tensor(x)
    a = np.asarray(a, dtype=np.float64)
    if x.values.shape[-2] != a.shape[1]:
        raise ShapeError(f"graph_apply: matrix {a.shape} does not match x {x.values.shape}")
    out = DTensor(np.matmul(a, x.values), requires_grad=_needs(x))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            x.ensure_grad()[...] += np.matmul(a.T, g)

    _record(out, pull)
    return out


def temporal_conv1d(x, w, b) -> DTensor:
    """Same-length 1D convolution over the leading (time) axis.

    x: (L, C_in), w: (C_out, C_in, k) with k odd, b: (C_out,). The input is
    zero-padded by (k-1)/2 frames on each side so the output is (L, C_out).
    """
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    c_out, c_in, k = w.values.shape
    if k % 2 == 0:
        raise ConfigurationError(f"temporal_conv1d kernel size must be odd, got {k}")
    if x.values.ndim != 2 or x.values.shape[1] != c_in:
        raise ShapeError(f"temporal_conv1d: x shape {x.values.shape} does not match w shape {w.values.shape}")
    length = x.values.shape[0]
    half = (k - 1) // 2
    padded = np.zeros((length + k - 1, c_in))
    padded[half:half + length] = x.values
    # windows[i] = padded[i : i+k] flattened as (k, C_in)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, c_in)).reshape(length, k * c_in)
    # kernel laid out to match the (k, C_in) window flattening
    w2 = np.transpose(w.values, (2, 1, 0)).reshape(k * c_in, c_out)
    out = DTensor(windows @ w2 + b.values, requires_grad=_needs(x, w, b))

    def pull(g: np.ndarray) -> None:
        if w.requires_grad:
            gw2 = windows.T @ g  # (k*C_in, C_out)
            w.ensure_grad()[...] += np.transpose(gw2.reshape(k, c_in, c_out), (2, 1, 0))
        if b.requires_grad:
            b.ensure_grad()[...] += g.sum(axis=0)
        if x.requires_grad:
            gwin = (g @ w2.T).reshape(length, k, c_in)
            gpad = np.zeros_like(padded)
            for j in range(k):
                gpad[j:j + length] += gwin[:, j, :]
            x.ensure_grad()[...] += gpad[half:half + length]

    _record(out, pull)
    return out


def collapse_window(x, w) -> DTensor:
    """Weighted sum over the window's time axis, mixing channels per joint.

    x: (L, tau, N, C), w: (C, tau, D) -> (L, N, D); no mixing across joints.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    if x.values.ndim != 4 or w.values.ndim != 3:
        raise ShapeError(f"collapse_window: x {x.values.shape}, w {w.values.shape}")
    if x.values.shape[1] != w.values.shape[1] or x.values.shape[3] != w.values.shape[0]:
        raise ShapeError(f"collapse_window: x {x.values.shape} does not match w {w.values.shape}")
    out = DTensor(np.einsum("ltnc,ctd->lnd", x.values, w.values, optimize=True),
                  requires_grad=_needs(x, w))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            x.ensure_grad()[...] += np.einsum("lnd,ctd->ltnc", g, w.values, optimize=True)
        if w.requires_grad:
            w.ensure_grad()[...] += np.einsum("ltnc,lnd->ctd", x.values, g, optimize=True)

    _record(out, pull)
    return out


def _sigmoid_vals(v: np.ndarray) -> np.ndarray:
    # Branching on the sign keeps exp() in the underflow-safe half plane.
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def _softmax_vals(v: np.ndarray) -> np.ndarray:
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def relu(x) -> DTensor:
    x = _as_tensor(x)
    out = DTensor(np.maximum(x.values, 0.0), requires_grad=_needs(x))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            x.ensure_grad()[...] += g * (x.values > 0.0)

    _record(out, pull)
    return out


def sigmoid(x) -> DTensor:
    x = _as_tensor(x)
    y = _sigmoid_vals(x.values)
    out = DTensor(y, requires_grad=_needs(x))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            x.ensure_grad()[...] += g * y * (1.0 - y)

    _record(out, pull)
    return out


def tanh(x) -> DTensor:
    x = _as_tensor(x)
    y = np.tanh(x.values)
    out = DTensor(y, requires_grad=_needs(x))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            x.ensure_grad()[...] += g * (1.0 - y * y)

    _record(out, pull)
    return out


def softmax(x) -> DTensor:
    """Softmax over the last dimension, computed with max subtraction."""
    x = _as_tensor(x)
    y = _softmax_vals(x.values)
    out = DTensor(y, requires_grad=_needs(x))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            dot = (g * y).sum(axis=-1, keepdims=True)
            x.ensure_grad()[...] += y * (g - dot)

    _record(out, pull)
    return out


def add(a, b) -> DTensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.values.shape != b.values.shape:
        raise ShapeError(f"add: shapes {a.values.shape} and {b.values.shape} differ")
    out = DTensor(a.values + b.values, requires_grad=_needs(a, b))

    def pull(g: np.ndarray) -> None:
        if a.requires_grad:
            a.ensure_grad()[...] += g
        if b.requires_grad:
            b.ensure_grad()[...] += g

    _record(out, pull)
    return out


def mul(a, b) -> DTensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.values.shape != b.values.shape:
        raise ShapeError(f"mul: shapes {a.values.shape} and {b.values.shape} differ")
    out = DTensor(a.values * b.values, requires_grad=_needs(a, b))

    def pull(g: np.ndarray) -> None:
        if a.requires_grad:
            a.ensure_grad()[...] += g * b.values
        if b.requires_grad:
            b.ensure_grad()[...] += g * a.values

    _record(out, pull)
    return out


def scale(x, k: float) -> DTensor:
    x = _as_tensor(x)
    out = DTensor(x.values * k, requires_grad=_needs(x))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            x.ensure_grad()[...] += g * k

    _record(out, pull)
    return out


def add_const(x, k: float) -> DTensor:
    x = _as_tensor(x)
    out = DTensor(x.values + k, requires_grad=_needs(x))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            x.ensure_grad()[...] += g

    _record(out, pull)
    return out


def log(x) -> DTensor:
    """Natural log; callers must keep inputs positive (clip_min first)."""
    x = _as_tensor(x)
    out = DTensor(np.log(x.values), requires_grad=_needs(x))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            x.ensure_grad()[...] += g / x.values

    _record(out, pull)
    return out


def clip_min(x, lo: float) -> DTensor:
    """max(x, lo); the gradient is zero where the clamp is active."""
    x = _as_tensor(x)
    out = DTensor(np.maximum(x.values, lo), requires_grad=_needs(x))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            x.ensure_grad()[...] += g * (x.values > lo)

    _record(out, pull)
    return out


def reduce_sum(x, axis: int | None = None) -> DTensor:
    x = _as_tensor(x)
    out = DTensor(x.values.sum(axis=axis), requires_grad=_needs(x))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            if axis is None:
                x.ensure_grad()[...] += g
            else:
                x.ensure_grad()[...] += np.expand_dims(g, axis)

    _record(out, pull)
    return out


def reduce_mean(x, axis: int | None = None) -> DTensor:
    x = _as_tensor(x)
    count = x.values.size if axis is None else x.values.shape[axis]
    out = DTensor(x.values.mean(axis=axis), requires_grad=_needs(x))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            if axis is None:
                x.ensure_grad()[...] += g / count
            else:
                x.ensure_grad()[...] += np.expand_dims(g, axis) / count

    _record(out, pull)
    return out


def reshape(x, shape: Sequence[int]) -> DTensor:
    x = _as_tensor(x)
    out = DTensor(x.values.reshape(tuple(shape)), requires_grad=_needs(x))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            x.ensure_grad()[...] += g.reshape(x.values.shape)

    _record(out, pull)
    return out


def slice_rows(x, start: int, stop: int) -> DTensor:
    """View rows [start:stop) along axis 0 (works for 1-D vectors too)."""
    x = _as_tensor(x)
    out = DTensor(x.values[start:stop].copy(), requires_grad=_needs(x))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            x.ensure_grad()[start:stop] += g

    _record(out, pull)
    return out


def take_entries(x, rows: np.ndarray, cols: np.ndarray) -> DTensor:
    """Gather x[rows[j], cols[j]] into a vector; backward scatter-adds."""
    x = _as_tensor(x)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    out = DTensor(x.values[rows, cols], requires_grad=_needs(x))

    def pull(g: np.ndarray) -> None:
        if x.requires_grad:
            np.add.at(x.ensure_grad(), (rows, cols), g)

    _record(out, pull)
    return out


def stack_rows(tensors: Sequence[DTensor]) -> DTensor:
    """Stack 1-D tensors of equal length into a matrix (len, d)."""
    ts = [_as_tensor(t) for t in tensors]
    out = DTensor(np.stack([t.values for t in ts]), requires_grad=_needs(*ts))

    def pull(g: np.ndarray) -> None:
        for i, t in enumerate(ts):
            if t.requires_grad:
                t.ensure_grad()[...] += g[i]

    _record(out, pull)
    return out


# ---------------------------------------------------------------------------
# LSTM cell (composite of the primitives above)
# ---------------------------------------------------------------------------

def lstm_cell(h_prev, c_prev, f, w_ih, w_hh, b) -> tuple[DTensor, DTensor]:
    """One step of the standard gated recurrence.

    f: (C_f,), h_prev/c_prev: (H,), w_ih: (C_f, 4H), w_hh: (H, 4H), b: (4H,).
    Gate layout along the 4H axis: input, forget, candidate, output.
    Returns (h, c); h is bounded in (-1, 1) by construction.
    """
    hidden = _as_tensor(h_prev).values.shape[0]
    z = add(affine(f, w_ih, b), linear(h_prev, w_hh))
    gate_i = sigmoid(slice_rows(z, 0, hidden))
    gate_f = sigmoid(slice_rows(z, hidden, 2 * hidden))
    cand = tanh(slice_rows(z, 2 * hidden, 3 * hidden))
    gate_o = sigmoid(slice_rows(z, 3 * hidden, 4 * hidden))
    c = add(mul(gate_f, c_prev), mul(gate_i, cand))
    h = mul(gate_o, tanh(c))
    return h, c


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def grad_check(fn: Callable[..., DTensor], inputs: Sequence[np.ndarray], h: float = 1e-6,
               seed: int = 0) -> float:
    """Max relative error between analytic gradients and central differences.

    `fn` maps DTensor arguments to a DTensor of any shape; the output is
    reduced to a scalar with a fixed random projection so the full Jacobian
    is exercised. Relative error follows
    |analytic - numeric| / max(1e-8, |numeric|), maximised over all input
    elements.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in inputs]
    rng = np.random.default_rng(seed)
    probe: np.ndarray | None = None

    def loss_value(arrs: Sequence[np.ndarray]) -> float:
        nonlocal probe
        out = fn(*[DTensor(a) for a in arrs])
        if probe is None:
            probe = rng.standard_normal(out.values.shape)
        return float((out.values * probe).sum())

    # analytic pass
    tensors = [DTensor(a.copy(), requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = fn(*tensors)
        if probe is None:
            probe = rng.standard_normal(out.values.shape)
        loss = reduce_sum(mul(out, DTensor(probe)))
    tape.backward(loss)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.values) for t in tensors]

    worst = 0.0
    for idx, base in enumerate(arrays):
        flat = base.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = loss_value(arrays)
            flat[j] = orig - h
            down = loss_value(arrays)
            flat[j] = orig
            numeric = (up - down) / (2.0 * h)
            err = abs(analytic[idx].reshape(-1)[j] - numeric) / max(1e-8, abs(numeric))
            worst = max(worst, err)
    return worst

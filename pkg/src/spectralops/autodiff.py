"""
Reverse-mode automatic differentiation on numpy arrays.

A :class:`Tape` records every primitive applied to :class:`Var` operands
in execution order; :meth:`Tape.backward` walks the record in exact
reverse order, which is a valid reverse-topological order because nodes
are appended as they are computed.

Every op in this module accepts either a ``Var`` or a plain ndarray for
each operand.  When no operand is a ``Var`` the op computes with numpy
directly and returns an ndarray, so forward-only code (rollouts,
oracles) runs the same implementation without tape overhead.

Complex arrays are first-class citizens of the tape, but trainable
parameters are always real: spectral filters enter as (magnitude logit,
phase) pairs and dense weights as (real, imag) pairs.  For complex
intermediates the cotangent of ``z`` is stored as
``dL/d(Re z) + i * dL/d(Im z)``; with this convention the adjoint of a
holomorphic op ``f`` is ``conj(f'(z)) * g``, and the adjoint of the
forward transform is the inverse transform scaled by the normalization
convention (verified by a dot-product identity in the test suite).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from spectralops.grid import hermitian_fold_weights

__all__ = [
    "Tape",
    "Var",
    "Gradients",
    "OptimState",
    "adam_step",
    "grad_check",
    "mse_loss",
]


class _Node:
    __slots__ = ("parents", "vjp", "replay", "value", "name")

    def __init__(self, parents, vjp, replay, value, name=None):
        self.parents = parents
        self.vjp = vjp
        self.replay = replay
        self.value = value
        self.name = name


class Var:
    """Handle to one recorded array on a tape."""

    __slots__ = ("value", "tape", "idx")

    def __init__(self, value: np.ndarray, tape: "Tape", idx: int):
        self.value = value
        self.tape = tape
        self.idx = idx

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self):
        return f"Var(idx={self.idx}, shape={self.value.shape}, dtype={self.value.dtype})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, idx):
        return getitem(self, idx)


class Tape:
    """Ordered record of primitive ops with saved values and adjoint rules."""

    def __init__(self) -> None:
        self.nodes: list[_Node] = []

    def _emit(self, value, parents, vjp, replay, name=None) -> Var:
        self.nodes.append(_Node(tuple(parents), vjp, replay, value, name))
        return Var(value, self, len(self.nodes) - 1)

    def leaf(self, value: np.ndarray, name: str | None = None) -> Var:
        """Record an input array; named leaves are parameters."""
        value = np.asarray(value)
        return self._emit(value, (), None, None, name=name)

    def param(self, name: str, value: np.ndarray) -> Var:
        return self.leaf(value, name=name)

    def backward(self, loss: Var, seed: float = 1.0) -> "Gradients":
        """Accumulate adjoints from a scalar output back to every leaf."""
        if not isinstance(loss, Var) or loss.tape is not self:
            raise ValueError("loss must be a Var recorded on this tape")
        if np.size(loss.value) != 1:
            raise ValueError(f"backward needs a scalar output, got shape {loss.value.shape}")
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[loss.idx] = np.asarray(seed, dtype=np.float64).reshape(loss.value.shape)
        by_name: dict[str, np.ndarray] = {}
        by_idx: dict[int, np.ndarray] = {}
        for i in range(loss.idx, -1, -1):
            g = grads[i]
            if g is None:
                continue
            node = self.nodes[i]
            if node.vjp is None:
                if node.name is not None:
                    by_name[node.name] = g
                by_idx[i] = g
            else:
                for p, pg in zip(node.parents, node.vjp(g)):
                    if pg is None:
                        continue
                    grads[p] = pg if grads[p] is None else grads[p] + pg
            grads[i] = None  # free as we go
        return Gradients(by_name=by_name, _by_idx=by_idx)

    def replay(self) -> bool:
        """Re-execute the recorded forward pass and check bit-exact equality."""
        values: list[np.ndarray] = []
        for node in self.nodes:
            if node.replay is None:
                values.append(node.value)
            else:
                values.append(node.replay(*(values[p] for p in node.parents)))
        for i, (node, v) in enumerate(zip(self.nodes, values)):
            if not np.array_equal(node.value, v):
                raise AssertionError(f"replay mismatch at node {i}")
        return True


@dataclass
class Gradients:
    """Gradient bundle returned by :meth:`Tape.backward`."""

    by_name: dict[str, np.ndarray]
    _by_idx: dict[int, np.ndarray] = field(default_factory=dict)

    def wrt(self, var: Var) -> np.ndarray:
        g = self._by_idx.get(var.idx)
        if g is None:
            g = np.zeros_like(var.value)
        return g

    def get(self, name: str, like: np.ndarray | None = None) -> np.ndarray:
        g = self.by_name.get(name)
        if g is None and like is not None:
            return np.zeros_like(like)
        return g


# ---------------------------------------------------------------------------
# dispatch helpers
# ---------------------------------------------------------------------------


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x)


def _tape(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over axes introduced or expanded by broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _match(g: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Cast a gradient onto the dtype class of the primal it belongs to."""
    if not np.iscomplexobj(ref) and np.iscomplexobj(g):
        return np.ascontiguousarray(g.real)
    return g


def _binary(a, b, fwd, vjp_a, vjp_b):
    av, bv = _val(a), _val(b)
    out = fwd(av, bv)
    t = _tape(a, b)
    if t is None:
        return out
    parents, slots = [], []
    if isinstance(a, Var):
        parents.append(a.idx)
        slots.append("a")
    if isinstance(b, Var):
        parents.append(b.idx)
        slots.append("b")

    def vjp(g):
        grads = []
        for s in slots:
            if s == "a":
                grads.append(_unbroadcast(_match(vjp_a(g, av, bv), av), av.shape))
            else:
                grads.append(_unbroadcast(_match(vjp_b(g, av, bv), bv), bv.shape))
        return grads

    if len(slots) == 2:
        replay = fwd
    elif slots == ["a"]:
        replay = lambda x: fwd(x, bv)
    else:
        replay = lambda x: fwd(av, x)
    return t._emit(out, parents, vjp, replay)


def _unary(x, fwd, vjp_fn):
    xv = _val(x)
    out = fwd(xv)
    t = _tape(x)
    if t is None:
        return out

    def vjp(g):
        return (_match(vjp_fn(g, xv, out), xv),)

    return t._emit(out, (x.idx,), vjp, fwd)


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------


def add(a, b):
    return _binary(a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(
        a,
        b,
        lambda x, y: x * y,
        lambda g, x, y: g * np.conj(y),
        lambda g, x, y: g * np.conj(x),
    )


def div(a, b):
    return _binary(
        a,
        b,
        lambda x, y: x / y,
        lambda g, x, y: g * np.conj(1.0 / y),
        lambda g, x, y: -g * np.conj(x / (y * y)),
    )


def neg(x):
    return _unary(x, lambda v: -v, lambda g, v, o: -g)


def square(x):
    return _unary(x, lambda v: v * v, lambda g, v, o: g * 2.0 * np.conj(v))


def sqrt(x):
    return _unary(x, np.sqrt, lambda g, v, o: g * (0.5 / o))


def exp(x):
    return _unary(x, np.exp, lambda g, v, o: g * o)


def log(x):
    return _unary(x, np.log, lambda g, v, o: g / v)


def sin(x):
    return _unary(x, np.sin, lambda g, v, o: g * np.cos(v))


def cos(x):
    return _unary(x, np.cos, lambda g, v, o: -g * np.sin(v))


def tanh(x):
    return _unary(x, np.tanh, lambda g, v, o: g * (1.0 - o * o))


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x):
    return _unary(x, _sigmoid, lambda g, v, o: g * o * (1.0 - o))


def silu(x):
    def fwd(v):
        return v * _sigmoid(v)

    def vjp(g, v, o):
        s = _sigmoid(v)
        return g * (s + v * s * (1.0 - s))

    return _unary(x, fwd, vjp)


def gelu(x):
    def fwd(v):
        return 0.5 * v * (1.0 + erf(v / np.sqrt(2.0)))

    def vjp(g, v, o):
        cdf = 0.5 * (1.0 + erf(v / np.sqrt(2.0)))
        pdf = np.exp(-0.5 * v * v) / np.sqrt(2.0 * np.pi)
        return g * (cdf + v * pdf)

    return _unary(x, fwd, vjp)


def relu(x):
    return _unary(x, lambda v: np.maximum(v, 0.0), lambda g, v, o: g * (v > 0))


def atan2(y, x):
    def vjp_y(g, yv, xv):
        return g * xv / (xv * xv + yv * yv)

    def vjp_x(g, yv, xv):
        return -g * yv / (xv * xv + yv * yv)

    return _binary(y, x, np.arctan2, vjp_y, vjp_x)


# ---------------------------------------------------------------------------
# complex pack / unpack
# ---------------------------------------------------------------------------


def make_complex(re, im):
    return _binary(
        re,
        im,
        lambda r, i: r + 1j * i,
        lambda g, r, i: g.real,
        lambda g, r, i: g.imag,
    )


def real_part(z):
    return _unary(z, lambda v: np.ascontiguousarray(v.real), lambda g, v, o: g.astype(np.complex128))


def imag_part(z):
    return _unary(z, lambda v: np.ascontiguousarray(v.imag), lambda g, v, o: 1j * g)


def conj(z):
    return _unary(z, np.conj, lambda g, v, o: np.conj(g))


def cabs(z):
    def fwd(v):
        return np.abs(v)

    def vjp(g, v, o):
        safe = np.where(o == 0.0, 1.0, o)
        return g * (v / safe)

    return _unary(z, fwd, vjp)


def cangle(z):
    def fwd(v):
        return np.angle(v)

    def vjp(g, v, o):
        r2 = np.real(v * np.conj(v))
        safe = np.where(r2 == 0.0, 1.0, r2)
        return g * (1j * v) / safe

    return _unary(z, fwd, vjp)


# ---------------------------------------------------------------------------
# reductions and contractions
# ---------------------------------------------------------------------------


def sum_all(x):
    xv = _val(x)
    return _unary(x, np.sum, lambda g, v, o: np.broadcast_to(g, xv.shape))


def mean_all(x):
    xv = _val(x)
    n = xv.size
    return _unary(x, np.mean, lambda g, v, o: np.broadcast_to(g / n, xv.shape))


def einsum2(spec: str, a, b):
    """Binary einsum; every index must appear in at least two operands."""
    in_spec, out_sub = spec.split("->")
    a_sub, b_sub = in_spec.split(",")
    av, bv = _val(a), _val(b)
    out = np.einsum(spec, av, bv, optimize=True)
    t = _tape(a, b)
    if t is None:
        return out
    parents, slots = [], []
    if isinstance(a, Var):
        parents.append(a.idx)
        slots.append("a")
    if isinstance(b, Var):
        parents.append(b.idx)
        slots.append("b")

    def vjp(g):
        grads = []
        for s in slots:
            if s == "a":
                ga = np.einsum(f"{out_sub},{b_sub}->{a_sub}", g, np.conj(bv), optimize=True)
                grads.append(_match(ga, av))
            else:
                gb = np.einsum(f"{out_sub},{a_sub}->{b_sub}", g, np.conj(av), optimize=True)
                grads.append(_match(gb, bv))
        return grads

    if len(slots) == 2:
        replay = lambda x, y: np.einsum(spec, x, y, optimize=True)
    elif slots == ["a"]:
        replay = lambda x: np.einsum(spec, x, bv, optimize=True)
    else:
        replay = lambda y: np.einsum(spec, av, y, optimize=True)
    return t._emit(out, parents, vjp, replay)


def channel_mix(w, x):
    """Per-pixel channel mixing: ``out[..., o, i, j] = sum_c w[o, c] x[..., c, i, j]``.

    Implemented with batched matmul so BLAS carries the contraction.
    """

    def fwd(wv, xv):
        lead = xv.shape[:-3]
        c = xv.shape[-3]
        pix = xv.shape[-2] * xv.shape[-1]
        out = np.matmul(wv, xv.reshape(lead + (c, pix)))
        return out.reshape(lead + (wv.shape[0],) + xv.shape[-2:])

    def vjp_w(g, wv, xv):
        lead = xv.shape[:-3]
        c = xv.shape[-3]
        pix = xv.shape[-2] * xv.shape[-1]
        gm = g.reshape(lead + (wv.shape[0], pix))
        xm = xv.reshape(lead + (c, pix))
        gw = np.matmul(gm, np.conj(xm).swapaxes(-1, -2))
        if gw.ndim > 2:
            gw = gw.sum(axis=tuple(range(gw.ndim - 2)))
        return gw

    def vjp_x(g, wv, xv):
        lead = xv.shape[:-3]
        pix = xv.shape[-2] * xv.shape[-1]
        gm = g.reshape(lead + (wv.shape[0], pix))
        gx = np.matmul(np.conj(wv).T, gm)
        return gx.reshape(xv.shape)

    return _binary(w, x, fwd, vjp_w, vjp_x)


def mode_matmul(r, s):
    """Per-mode channel contraction for dense spectral convolution.

    ``r`` has shape ``(m1, m2, D_out, D_in)`` and ``s`` has shape
    ``(..., D_in, m1, m2)``; output is ``(..., D_out, m1, m2)``.
    """

    def fwd(rv, sv):
        lead = sv.shape[:-3]
        b = int(np.prod(lead)) if lead else 1
        st = sv.reshape((b,) + sv.shape[-3:]).transpose(2, 3, 1, 0)  # (m1,m2,C,B)
        ot = np.matmul(rv, st)  # (m1,m2,O,B)
        out = ot.transpose(3, 2, 0, 1).reshape(lead + (rv.shape[2],) + sv.shape[-2:])
        return np.ascontiguousarray(out)

    def vjp_r(g, rv, sv):
        lead = sv.shape[:-3]
        b = int(np.prod(lead)) if lead else 1
        gt = g.reshape((b,) + g.shape[len(lead):]).transpose(2, 3, 1, 0)  # (m1,m2,O,B)
        st = np.conj(sv.reshape((b,) + sv.shape[-3:])).transpose(2, 3, 0, 1)  # (m1,m2,B,C)
        return np.matmul(gt, st)

    def vjp_s(g, rv, sv):
        lead = sv.shape[:-3]
        b = int(np.prod(lead)) if lead else 1
        gt = g.reshape((b,) + g.shape[len(lead):]).transpose(2, 3, 1, 0)  # (m1,m2,O,B)
        rt = np.conj(rv).swapaxes(-1, -2)  # (m1,m2,C,O)
        st = np.matmul(rt, gt)  # (m1,m2,C,B)
        return np.ascontiguousarray(st.transpose(3, 2, 0, 1).reshape(sv.shape))

    return _binary(r, s, fwd, vjp_r, vjp_s)


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------


def getitem(x, idx):
    xv = _val(x)

    def fwd(v):
        return np.ascontiguousarray(v[idx])

    def vjp(g, v, o):
        z = np.zeros_like(v)
        z[idx] = g
        return z

    return _unary(x, fwd, vjp)


def reshape(x, shape):
    xv = _val(x)
    return _unary(x, lambda v: v.reshape(shape), lambda g, v, o: g.reshape(xv.shape))


def roll(x, shift: int, axis: int):
    return _unary(
        x,
        lambda v: np.roll(v, shift, axis=axis),
        lambda g, v, o: np.roll(g, -shift, axis=axis),
    )


def flip(x, axis: int):
    return _unary(
        x,
        lambda v: np.flip(v, axis=axis).copy(),
        lambda g, v, o: np.flip(g, axis=axis).copy(),
    )


def concat(xs, axis: int):
    vals = [_val(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    t = _tape(*xs)
    if t is None:
        return out
    if not all(isinstance(x, Var) for x in xs):
        raise ValueError("concat requires all-Var or all-array operands")
    sizes = [v.shape[axis] for v in vals]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        sl = [slice(None)] * g.ndim
        grads = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl[axis] = slice(int(lo), int(hi))
            grads.append(np.ascontiguousarray(g[tuple(sl)]))
        return grads

    return t._emit(out, [x.idx for x in xs], vjp, lambda *vs: np.concatenate(vs, axis=axis))


def pad_zeros(x, before: int, after: int, axis: int):
    xv = _val(x)
    pads = [(0, 0)] * xv.ndim
    pads[axis] = (before, after)

    def fwd(v):
        return np.pad(v, pads)

    def vjp(g, v, o):
        sl = [slice(None)] * g.ndim
        sl[axis] = slice(before, before + v.shape[axis])
        return np.ascontiguousarray(g[tuple(sl)])

    return _unary(x, fwd, vjp)


def unpack_mask(packed, mask: np.ndarray):
    """Scatter a packed 1D parameter vector into the True slots of ``mask``."""

    def fwd(v):
        out = np.zeros(mask.shape, dtype=v.dtype)
        out[mask] = v
        return out

    def vjp(g, v, o):
        return np.ascontiguousarray(g[mask])

    return _unary(packed, fwd, vjp)


def conv_rows_valid(x, kernel):
    """1D spatial convolution along the row axis (axis -2), 'valid' extent.

    ``kernel`` is a length-K tap vector shared by every channel and column;
    output rows = input rows - K + 1.
    """

    def fwd(xv, kv):
        k = kv.shape[0]
        n_out = xv.shape[-2] - k + 1
        out = np.zeros(xv.shape[:-2] + (n_out,) + xv.shape[-1:], dtype=xv.dtype)
        for j in range(k):
            out += kv[j] * xv[..., j : j + n_out, :]
        return out

    def vjp_x(g, xv, kv):
        k = kv.shape[0]
        n_out = g.shape[-2]
        gx = np.zeros_like(xv)
        for j in range(k):
            gx[..., j : j + n_out, :] += kv[j] * g
        return gx

    def vjp_k(g, xv, kv):
        k = kv.shape[0]
        n_out = g.shape[-2]
        gk = np.empty_like(kv)
        for j in range(k):
            gk[j] = np.sum(g * xv[..., j : j + n_out, :])
        return gk

    return _binary(x, kernel, fwd, vjp_x, vjp_k)


# ---------------------------------------------------------------------------
# Fourier transform primitives (1/N-forward normalization)
# ---------------------------------------------------------------------------


def rfft_last(x):
    """rfft along the last axis with 1/N normalization."""
    xv = _val(x)
    n = xv.shape[-1]
    w = hermitian_fold_weights(n)

    def fwd(v):
        return np.fft.rfft(v, axis=-1) / n

    def vjp(g, v, o):
        return np.fft.irfft(g / w, n=n, axis=-1)

    return _unary(x, fwd, vjp)


def irfft_last(z, n: int):
    """Inverse of :func:`rfft_last` (multiplies by N)."""
    w = hermitian_fold_weights(n)

    def fwd(v):
        return np.fft.irfft(v, n=n, axis=-1) * n

    def vjp(g, v, o):
        return np.fft.rfft(g, axis=-1) * w

    return _unary(z, fwd, vjp)


def rfft2(x):
    """2D real transform over the trailing two axes, 1/(H*W) normalized."""
    xv = _val(x)
    h, wn = xv.shape[-2], xv.shape[-1]
    wc = hermitian_fold_weights(wn)

    def fwd(v):
        return np.fft.rfft2(v, axes=(-2, -1)) / (h * wn)

    def vjp(g, v, o):
        return np.fft.irfft2(g / wc, s=(h, wn), axes=(-2, -1))

    return _unary(x, fwd, vjp)


def hermitianize_cols(z, n_cols_full: int):
    """Project the self-conjugate columns of an rfft2 layout onto valid
    real-field structure: column k_c=0 (and k_c=W/2 for even W) must satisfy
    z[k_r] = conj(z[-k_r]) along the row axis.

    The projection is the average of the column with its conjugate row
    reflection; it is linear, self-adjoint, and non-expansive, and matches
    what ``irfft2`` does implicitly to inconsistent input.
    """

    def _project(col):
        return 0.5 * (col + np.conj(np.roll(col[..., ::-1], 1, axis=-1)))

    def fwd(v):
        out = v.copy()
        out[..., :, 0] = _project(v[..., :, 0])
        if n_cols_full % 2 == 0 and v.shape[-1] == n_cols_full // 2 + 1:
            out[..., :, -1] = _project(v[..., :, -1])
        return out

    return _unary(z, fwd, lambda g, v, o: fwd(g))


def irfft2(z, hw: tuple[int, int]):
    """Inverse of :func:`rfft2` (multiplies by H*W)."""
    h, wn = hw
    wc = hermitian_fold_weights(wn)

    def fwd(v):
        return np.fft.irfft2(v, s=(h, wn), axes=(-2, -1)) * (h * wn)

    def vjp(g, v, o):
        return np.fft.rfft2(g, axes=(-2, -1)) * wc

    return _unary(z, fwd, vjp)


# ---------------------------------------------------------------------------
# loss, optimizer, finite-difference checking
# ---------------------------------------------------------------------------


def mse_loss(pred, target, rescale: float = 1.0):
    """Mean squared error divided by a fixed rescale (dataset mean square norm)."""
    if float(rescale) <= 0.0:
        raise ValueError(f"rescale must be positive, got {rescale}")
    pv, tv = _val(pred), _val(target)
    if pv.shape != tv.shape:
        raise ValueError(f"shape mismatch {pv.shape} vs {tv.shape}")
    d = sub(pred, target)
    return mul(mean_all(square(d)), 1.0 / float(rescale))


@dataclass
class OptimState:
    """Adam accumulator state keyed by parameter name."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)

    def lr_at(self, step: int, total: int | None = None) -> float:
        """Optionally cosine-decayed learning rate."""
        if total is None or total <= 0:
            return self.lr
        frac = min(step / total, 1.0)
        return self.lr * 0.5 * (1.0 + np.cos(np.pi * frac))


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimState,
    lr: float | None = None,
) -> tuple[dict[str, np.ndarray], OptimState]:
    """Bias-corrected Adam update, in place on ``params``.

    Parameters with a non-finite gradient are skipped for the step and
    counted in ``state.skipped``.
    """
    state.step += 1
    t = state.step
    lr_t = state.lr if lr is None else lr
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            state.skipped[name] = state.skipped.get(name, 0) + 1
            continue
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            state.m[name] = m
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p
        p -= lr_t * update
    return params, state


def grad_check(
    closure,
    point: dict[str, np.ndarray],
    h: float = 1e-5,
    max_coords: int = 24,
    seed: int = 0,
) -> float:
    """Compare tape gradients of a scalar closure against central differences.

    ``closure`` maps a dict of arrays (or Vars) to a scalar; it is evaluated
    once on a tape for the reverse-mode gradient and twice per sampled
    coordinate for the finite difference.  Returns the max relative error,
    where each parameter's errors are normalized by the larger of the two
    gradient magnitudes (with a small absolute floor).
    """
    tape = Tape()
    wrapped = {k: tape.param(k, v) for k, v in point.items()}
    out = closure(wrapped)
    grads = tape.backward(out).by_name

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, value in point.items():
        g_ad = grads.get(name)
        if g_ad is None:
            g_ad = np.zeros_like(value)
        flat = value.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        scale = max(float(np.max(np.abs(g_ad))), 1e-8)
        for c in coords:
            orig = flat[c]
            pert = dict(point)
            bumped = value.copy().reshape(-1)
            bumped[c] = orig + h
            pert[name] = bumped.reshape(value.shape)
            f_plus = float(_val(closure(pert)))
            bumped[c] = orig - h
            pert[name] = bumped.reshape(value.shape)
            f_minus = float(_val(closure(pert)))
            g_fd = (f_plus - f_minus) / (2.0 * h)
            g_tape = float(g_ad.reshape(-1)[c])
            denom = max(abs(g_fd), abs(g_tape), scale * 1e-2, 1e-8)
            worst = max(worst, abs(g_fd - g_tape) / denom)
    return worst

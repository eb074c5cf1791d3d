"""
Spectral-domain convolution operators and pointwise channel mixing.

Three convolution parameterizations over a retained mode block:

* dense — an independent ``D_out x D_in`` complex matrix per mode;
* depthwise-separable (DS) — one complex coefficient per (mode, channel)
  plus a real channel-mixing matrix shared across modes;
* dynamic DS — the DS filter plus a mode-wise MLP producing
  data-dependent offsets of the filter's magnitude logit and phase.

DS and dynamic filters store the polar parameterization ``(a, theta)``
whose effective coefficient is ``sigmoid(a) * exp(i*theta)``; the sigmoid
keeps every per-mode magnitude strictly below one, which bounds the
operator norm of the convolution.  The channel mix is optionally
constrained the conventional way, dividing by a power-iteration estimate
of its largest singular value.

All apply_* functions accept tape Vars or plain ndarrays and tolerate a
leading batch axis; the channel axis is always -3.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from spectralops import autodiff as ad
from spectralops.grid import ComplexSpectrum, RealField, hermitian_fold_weights


class Activation(enum.Enum):
    IDENTITY = "identity"
    SILU = "silu"
    GELU = "gelu"
    RELU = "relu"
    GLU = "glu"
    GLU_LINEAR = "glu_linear"
    SQUARE = "square"


# ---------------------------------------------------------------------------
# retained mode block
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModeBlock:
    """Retained low-mode block of a 2D rfft2 spectrum.

    Keeps row frequencies ``|k| <= k_modes`` (both signs, fft order) and
    column bins ``0..k_modes``; ``gather`` extracts the block from a full
    spectrum, ``scatter`` embeds it back amid zeros.
    """

    n_rows: int
    n_cols: int
    k_modes: int

    def __post_init__(self) -> None:
        if not 0 <= self.k_modes <= min(self.n_rows, self.n_cols) // 2:
            raise ValueError(
                f"k_modes={self.k_modes} outside [0, {min(self.n_rows, self.n_cols) // 2}]"
            )

    @property
    def rows_kept(self) -> tuple[int, int]:
        """(top, bottom) row counts; top holds k=0..K, bottom k=-K..-1."""
        if 2 * self.k_modes + 1 >= self.n_rows:
            return self.n_rows, 0
        return self.k_modes + 1, self.k_modes

    @property
    def n_rows_kept(self) -> int:
        return sum(self.rows_kept)

    @property
    def n_cols_kept(self) -> int:
        return min(self.k_modes, self.n_cols // 2) + 1

    @property
    def n_modes(self) -> int:
        return self.n_rows_kept * self.n_cols_kept

    @property
    def mode_shape(self) -> tuple[int, int]:
        return (self.n_rows_kept, self.n_cols_kept)

    def row_frequencies(self) -> np.ndarray:
        top, bot = self.rows_kept
        freqs = np.fft.fftfreq(self.n_rows, d=1.0 / self.n_rows).astype(int)
        return np.concatenate([freqs[:top], freqs[self.n_rows - bot:]]) if bot else freqs[:top]

    def gather(self, s):
        top, bot = self.rows_kept
        kc = self.n_cols_kept
        if bot == 0:
            return s[..., :top, :kc]
        return ad.concat([s[..., :top, :kc], s[..., self.n_rows - bot:, :kc]], axis=-2)

    def scatter(self, block):
        top, bot = self.rows_kept
        kc = self.n_cols_kept
        full_cols = self.n_cols // 2 + 1
        if bot == 0:
            out = block
        else:
            top_part = ad.pad_zeros(block[..., :top, :], 0, self.n_rows - top, axis=-2)
            bot_part = ad.pad_zeros(block[..., top:, :], self.n_rows - bot, 0, axis=-2)
            out = ad.add(top_part, bot_part)
        return ad.pad_zeros(out, 0, full_cols - kc, axis=-1)


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------


@dataclass
class DenseSpectralWeights:
    """Per-mode dense channel-mixing weights, stored as (real, imag) pairs.

    Shapes are ``mode_shape + (D_out, D_in)``.
    """

    re: np.ndarray
    im: np.ndarray

    @classmethod
    def init(cls, rng: np.random.Generator, block: ModeBlock, d_out: int, d_in: int):
        shape = block.mode_shape + (d_out, d_in)
        scale = 1.0 / (d_in * max(block.n_modes, 1))
        return cls(
            re=rng.standard_normal(shape) * scale,
            im=rng.standard_normal(shape) * scale,
        )

    def params(self, prefix: str):
        yield f"{prefix}.re", self.re
        yield f"{prefix}.im", self.im

    def bind(self, tape, prefix: str) -> SimpleNamespace:
        if tape is None:
            return SimpleNamespace(re=self.re, im=self.im)
        return SimpleNamespace(
            re=tape.param(f"{prefix}.re", self.re),
            im=tape.param(f"{prefix}.im", self.im),
        )

    @property
    def n_complex(self) -> int:
        return self.re.size

    @property
    def n_params(self) -> int:
        return self.re.size + self.im.size


@dataclass
class DsFilter:
    """Depthwise spectral filter in polar form: magnitude logits and phases.

    Shapes are ``(D,) + mode_shape`` (channels first, matching data layout).
    """

    a: np.ndarray
    theta: np.ndarray

    @classmethod
    def init(cls, rng: np.random.Generator, block: ModeBlock, d: int):
        shape = (d,) + block.mode_shape
        return cls(
            a=rng.standard_normal(shape),
            theta=rng.uniform(-np.pi, np.pi, size=shape),
        )

    def params(self, prefix: str):
        yield f"{prefix}.a", self.a
        yield f"{prefix}.theta", self.theta

    def bind(self, tape, prefix: str) -> SimpleNamespace:
        if tape is None:
            return SimpleNamespace(a=self.a, theta=self.theta)
        return SimpleNamespace(
            a=tape.param(f"{prefix}.a", self.a),
            theta=tape.param(f"{prefix}.theta", self.theta),
        )

    @property
    def n_params(self) -> int:
        return self.a.size + self.theta.size


def orthogonal_init(rng: np.random.Generator, d_out: int, d_in: int) -> np.ndarray:
    n = max(d_out, d_in)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    return np.ascontiguousarray(q[:d_out, :d_in])


@dataclass
class ChannelMix:
    """Channel-mixing matrix with optional spectral normalization.

    ``u_vec``/``v_vec`` persist the power-iteration pair; they are buffers,
    not trainable parameters, and are refreshed once per training step
    (20 iterations at initialization).  The singular-value estimate is
    differentiated through the weight with the vectors held fixed.
    """

    weight: np.ndarray
    bias: np.ndarray | None = None
    normalize: bool = False
    u_vec: np.ndarray = field(default=None)  # type: ignore[assignment]
    v_vec: np.ndarray = field(default=None)  # type: ignore[assignment]

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        d_out: int,
        d_in: int,
        normalize: bool = False,
        bias: bool = True,
    ):
        mix = cls(
            weight=orthogonal_init(rng, d_out, d_in),
            bias=np.zeros((d_out, 1, 1)) if bias else None,
            normalize=normalize,
            u_vec=rng.standard_normal(d_out),
            v_vec=rng.standard_normal(d_in),
        )
        mix.u_vec /= np.linalg.norm(mix.u_vec)
        mix.v_vec /= np.linalg.norm(mix.v_vec)
        mix.power_iterate(20)
        return mix

    def power_iterate(self, n_iters: int = 1) -> float:
        w = self.weight
        for _ in range(n_iters):
            self.v_vec = w.T @ self.u_vec
            self.v_vec /= max(np.linalg.norm(self.v_vec), 1e-300)
            self.u_vec = w @ self.v_vec
            self.u_vec /= max(np.linalg.norm(self.u_vec), 1e-300)
        return float(self.u_vec @ w @ self.v_vec)

    def sigma_estimate(self) -> float:
        return float(self.u_vec @ self.weight @ self.v_vec)

    def params(self, prefix: str):
        yield f"{prefix}.weight", self.weight
        if self.bias is not None:
            yield f"{prefix}.bias", self.bias

    def buffers(self, prefix: str):
        yield f"{prefix}.u_vec", self.u_vec
        yield f"{prefix}.v_vec", self.v_vec

    def bind(self, tape, prefix: str) -> SimpleNamespace:
        if tape is None:
            w, b = self.weight, self.bias
        else:
            w = tape.param(f"{prefix}.weight", self.weight)
            b = tape.param(f"{prefix}.bias", self.bias) if self.bias is not None else None
        if self.normalize:
            mv = ad.einsum2("oc,c->o", w, self.v_vec)
            sigma = ad.einsum2("o,o->", self.u_vec, mv)
            w = ad.div(w, sigma)
        return SimpleNamespace(weight=w, bias=b)

    @property
    def n_params(self) -> int:
        return self.weight.size + (self.bias.size if self.bias is not None else 0)


@dataclass
class DynamicFilterMlp:
    """Mode-wise two-layer perceptron mapping per-mode features to offsets.

    Inputs are the per-channel magnitude and phase of the spectrum at one
    mode (2D features), standardized by running statistics; outputs are
    per-channel offsets (delta_a, delta_theta).  The same weights apply at
    every mode.  The output layer is zero-initialized so a fresh dynamic
    filter coincides with its static counterpart.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    feat_mean: np.ndarray = field(default=None)  # type: ignore[assignment]
    feat_var: np.ndarray = field(default=None)  # type: ignore[assignment]
    momentum: float = 0.1

    @classmethod
    def init(cls, rng: np.random.Generator, d: int, hidden: int | None = None):
        hidden = 2 * d if hidden is None else hidden
        return cls(
            w1=rng.standard_normal((hidden, 2 * d)) / np.sqrt(2 * d),
            b1=np.zeros((hidden, 1, 1)),
            w2=np.zeros((2 * d, hidden)),
            b2=np.zeros((2 * d, 1, 1)),
            feat_mean=np.zeros(2 * d),
            feat_var=np.ones(2 * d),
        )

    def params(self, prefix: str):
        yield f"{prefix}.w1", self.w1
        yield f"{prefix}.b1", self.b1
        yield f"{prefix}.w2", self.w2
        yield f"{prefix}.b2", self.b2

    def buffers(self, prefix: str):
        yield f"{prefix}.feat_mean", self.feat_mean
        yield f"{prefix}.feat_var", self.feat_var

    def bind(self, tape, prefix: str) -> SimpleNamespace:
        if tape is None:
            return SimpleNamespace(w1=self.w1, b1=self.b1, w2=self.w2, b2=self.b2)
        return SimpleNamespace(
            w1=tape.param(f"{prefix}.w1", self.w1),
            b1=tape.param(f"{prefix}.b1", self.b1),
            w2=tape.param(f"{prefix}.w2", self.w2),
            b2=tape.param(f"{prefix}.b2", self.b2),
        )

    def update_stats(self, feats: np.ndarray) -> None:
        axes = tuple(i for i in range(feats.ndim) if i != feats.ndim - 3)
        mean = feats.mean(axis=axes)
        var = feats.var(axis=axes)
        self.feat_mean = (1 - self.momentum) * self.feat_mean + self.momentum * mean
        self.feat_var = (1 - self.momentum) * self.feat_var + self.momentum * var

    @property
    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size


# ---------------------------------------------------------------------------
# core math (Var- or ndarray-valued)
# ---------------------------------------------------------------------------


def normalized_filter_coeff(a, theta):
    """Polar filter coefficient ``sigmoid(a) * exp(i*theta)``, |result| < 1."""
    mag = ad.sigmoid(a)
    return ad.make_complex(ad.mul(mag, ad.cos(theta)), ad.mul(mag, ad.sin(theta)))


def apply_dense_conv(s, w_ns, block: ModeBlock):
    """Dense per-mode conv on a full (..., C, H, Wc) spectrum."""
    r = ad.make_complex(w_ns.re, w_ns.im)
    sb = block.gather(s)
    out = ad.mode_matmul(r, sb)
    return block.scatter(out)


def apply_ds_conv(s, f_ns, m_ns, block: ModeBlock, extra_coeff=None):
    """Depthwise-separable conv: per-mode filter then channel mix."""
    coeff = normalized_filter_coeff(f_ns.a, f_ns.theta)
    if extra_coeff is not None:
        coeff = ad.mul(coeff, extra_coeff)
    sb = block.gather(s)
    out = ad.channel_mix(m_ns.weight, ad.mul(coeff, sb))
    return block.scatter(out)


def dynamic_offsets(sb, mlp: DynamicFilterMlp, mlp_ns, update_stats: bool = False):
    """Per-mode (delta_a, delta_theta) from the magnitude/phase features of sb."""
    feats = ad.concat([ad.cabs(sb), ad.cangle(sb)], axis=-3)
    if update_stats:
        mlp.update_stats(ad._val(feats))
    std = np.sqrt(mlp.feat_var + 1e-5).reshape(-1, 1, 1)
    feats = ad.div(ad.sub(feats, mlp.feat_mean.reshape(-1, 1, 1)), std)
    h = ad.silu(ad.add(ad.channel_mix(mlp_ns.w1, feats), mlp_ns.b1))
    out = ad.add(ad.channel_mix(mlp_ns.w2, h), mlp_ns.b2)
    d = ad._val(out).shape[-3] // 2
    return out[..., :d, :, :], out[..., d:, :, :]


def apply_dynamic_conv(
    s,
    f_ns,
    mlp: DynamicFilterMlp,
    mlp_ns,
    m_ns,
    block: ModeBlock,
    update_stats: bool = False,
):
    """DS conv with data-dependent filter offsets (linear in s once fixed)."""
    sb = block.gather(s)
    da, dth = dynamic_offsets(sb, mlp, mlp_ns, update_stats=update_stats)
    coeff = normalized_filter_coeff(ad.add(f_ns.a, da), ad.add(f_ns.theta, dth))
    out = ad.channel_mix(m_ns.weight, ad.mul(coeff, sb))
    return block.scatter(out)


def apply_pointwise(x, m_ns):
    """Per-pixel channel mixing with optional bias."""
    out = ad.channel_mix(m_ns.weight, x)
    if m_ns.bias is not None:
        out = ad.add(out, m_ns.bias)
    return out


def apply_activation(x, kind: Activation):
    if kind is Activation.IDENTITY:
        return x
    if kind is Activation.SILU:
        return ad.silu(x)
    if kind is Activation.GELU:
        return ad.gelu(x)
    if kind is Activation.RELU:
        return ad.relu(x)
    if kind is Activation.SQUARE:
        return ad.square(x)
    n_ch = ad._val(x).shape[-3]
    if n_ch % 2 != 0:
        raise ValueError(f"GLU needs an even channel count, got {n_ch}")
    first = x[..., : n_ch // 2, :, :]
    second = x[..., n_ch // 2:, :, :]
    if kind is Activation.GLU:
        return ad.mul(first, ad.sigmoid(second))
    if kind is Activation.GLU_LINEAR:
        return ad.mul(first, second)
    raise ValueError(f"unknown activation {kind}")


# ---------------------------------------------------------------------------
# container-level spec surface (numpy path)
# ---------------------------------------------------------------------------


def _check_spectrum_2d(s: ComplexSpectrum) -> None:
    if s.axes != "both" or len(s.spatial_shape) != 2:
        raise ValueError("spectral convolutions expect a full 2D spectrum")


def dense_spectral_conv(
    s: ComplexSpectrum, weights: DenseSpectralWeights, k_modes: int
) -> ComplexSpectrum:
    _check_spectrum_2d(s)
    block = ModeBlock(*s.spatial_shape, k_modes)
    if weights.re.shape[:2] != block.mode_shape:
        raise ValueError(
            f"weight mode shape {weights.re.shape[:2]} != block {block.mode_shape}"
        )
    if weights.re.shape[-1] != s.data.shape[-3]:
        raise ValueError(
            f"weights expect {weights.re.shape[-1]} channels, got {s.data.shape[-3]}"
        )
    out = apply_dense_conv(s.data, weights.bind(None, ""), block)
    return ComplexSpectrum(
        out, s.spatial_shape, axes="both", domain=s.domain,
        bandlimit=(k_modes, k_modes),
    )


def ds_spectral_conv(
    s: ComplexSpectrum, flt: DsFilter, mix: ChannelMix, k_modes: int
) -> ComplexSpectrum:
    _check_spectrum_2d(s)
    block = ModeBlock(*s.spatial_shape, k_modes)
    if flt.a.shape != (s.data.shape[-3],) + block.mode_shape:
        raise ValueError(
            f"filter shape {flt.a.shape} != {(s.data.shape[-3],) + block.mode_shape}"
        )
    out = apply_ds_conv(s.data, flt.bind(None, ""), mix.bind(None, ""), block)
    return ComplexSpectrum(
        out, s.spatial_shape, axes="both", domain=s.domain,
        bandlimit=(k_modes, k_modes),
    )


def dynamic_ds_conv(
    s: ComplexSpectrum,
    flt: DsFilter,
    mlp: DynamicFilterMlp,
    mix: ChannelMix,
    k_modes: int,
) -> ComplexSpectrum:
    _check_spectrum_2d(s)
    block = ModeBlock(*s.spatial_shape, k_modes)
    if flt.a.shape != (s.data.shape[-3],) + block.mode_shape:
        raise ValueError(
            f"filter shape {flt.a.shape} != {(s.data.shape[-3],) + block.mode_shape}"
        )
    out = apply_dynamic_conv(
        s.data, flt.bind(None, ""), mlp, mlp.bind(None, ""), mix.bind(None, ""), block
    )
    return ComplexSpectrum(
        out, s.spatial_shape, axes="both", domain=s.domain,
        bandlimit=(k_modes, k_modes),
    )


def pointwise_linear(f: RealField, mix: ChannelMix) -> RealField:
    if mix.weight.shape[1] != f.n_channels:
        raise ValueError(f"mix expects {mix.weight.shape[1]} channels, got {f.n_channels}")
    out = apply_pointwise(f.data, mix.bind(None, ""))
    parity = f.parity if mix.weight.shape[0] == f.n_channels else ()
    return RealField(out, domain=f.domain, parity=parity)


def activation(f: RealField, kind: Activation) -> RealField:
    out = apply_activation(f.data, kind)
    parity = f.parity if out.shape[0] == f.n_channels else ()
    return RealField(out, domain=f.domain, parity=parity)


def spectrum_energy(data: np.ndarray, n_cols_full: int) -> float:
    """Spatial-domain L2 energy of an rfft2 spectrum via Parseval weights."""
    w = hermitian_fold_weights(n_cols_full)
    return float(np.sum(np.abs(data) ** 2 * w))

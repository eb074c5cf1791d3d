"""
Gridded field containers and discrete Fourier transform utilities.

Conventions used throughout the package:

* Fields are real-valued arrays of shape ``(C, H, W)`` (channels, rows,
  columns).  Periodic axes are normalized to the unit interval ``[0, 1)``
  so the wavenumber ``k`` counts whole cycles per domain and derivatives
  carry a ``2*pi*k`` factor.
* The forward transform carries the ``1/N`` normalization (per transformed
  axis) and the inverse carries none.  With this choice the coefficient of
  ``cos(2*pi*k*x)`` is ``1/2`` at ``+k`` and ``-k``, which keeps
  hand-checked examples simple.
* Real input implies Hermitian symmetry, so only non-negative frequencies
  are stored along the last transformed axis (``W//2 + 1`` bins).
* Spherical fields live on an equirectangular grid whose rows are the
  offset colatitudes ``theta_j = pi*(j + 1/2)/H`` — the poles themselves
  are never sampled, which makes the glide reflection used by the sphere
  module an exact row permutation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np


class Domain(enum.Enum):
    """Geometry tag for a gridded field."""

    TORUS = "torus"
    SPHERE = "sphere"


class Parity(enum.IntEnum):
    """Behaviour of a channel under meridional reflection.

    ODD marks vector components that flip sign when reflected across a
    line of latitude (e.g. the meridional velocity).
    """

    EVEN = 1
    ODD = -1


def colatitudes(n_rows: int) -> np.ndarray:
    """Offset colatitude grid ``theta_j = pi*(j + 1/2)/H``, poles excluded."""
    return np.pi * (np.arange(n_rows) + 0.5) / n_rows


def longitudes(n_cols: int) -> np.ndarray:
    """Uniform longitude grid ``lambda_i = 2*pi*i/W``."""
    return 2.0 * np.pi * np.arange(n_cols) / n_cols


def _check_finite(data: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(data)):
        bad = int(np.size(data) - np.count_nonzero(np.isfinite(data)))
        raise ValueError(f"{what} contains {bad} non-finite entries")


@dataclass(frozen=True)
class RealField:
    """Real gridded state: ``data`` has shape ``(C, H, W)``.

    Attributes
    ----------
    data : ndarray
        Channel-major float64 samples.
    domain : Domain
        TORUS for doubly periodic data, SPHERE for equirectangular data
        on the offset colatitude grid.
    parity : tuple of Parity
        Per-channel reflection parity; defaults to all EVEN.
    """

    data: np.ndarray
    domain: Domain = Domain.TORUS
    parity: tuple[Parity, ...] = field(default=())

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError(f"field data must be (C, H, W), got shape {data.shape}")
        c, h, w = data.shape
        if c < 1 or h < 2 or w < 2:
            raise ValueError(f"field needs C >= 1, H >= 2, W >= 2, got {data.shape}")
        _check_finite(data, "field data")
        object.__setattr__(self, "data", data)
        parity = self.parity or tuple(Parity.EVEN for _ in range(c))
        if len(parity) != c:
            raise ValueError(f"parity has {len(parity)} entries for {c} channels")
        object.__setattr__(self, "parity", tuple(Parity(p) for p in parity))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_rows(self) -> int:
        return self.data.shape[1]

    @property
    def n_cols(self) -> int:
        return self.data.shape[2]

    @property
    def dx(self) -> float:
        """Zonal grid spacing on the normalized [0, 1) domain."""
        return 1.0 / self.n_cols

    @property
    def dy(self) -> float:
        """Meridional grid spacing on the normalized [0, 1) domain."""
        return 1.0 / self.n_rows

    @property
    def colatitudes(self) -> np.ndarray:
        if self.domain is not Domain.SPHERE:
            raise ValueError("colatitudes are defined only for SPHERE fields")
        return colatitudes(self.n_rows)

    def parity_signs(self) -> np.ndarray:
        """Per-channel reflection signs as a broadcastable (C, 1, 1) array."""
        return np.array([int(p) for p in self.parity], dtype=np.float64).reshape(-1, 1, 1)

    def with_data(self, data: np.ndarray) -> "RealField":
        return replace(self, data=data)


@dataclass(frozen=True)
class ComplexSpectrum:
    """Frequency-domain coefficients of a real field.

    ``data`` stores only non-negative frequencies along the last axis
    (``W//2 + 1`` bins); negative zonal modes are implied by conjugate
    symmetry.  ``axes`` records which spatial axes were transformed:
    ``"both"`` for a full 2D transform (row axis holds both frequency
    signs in fft order) and ``"zonal"`` for independent per-row 1D
    transforms.  1D signals are represented with ``spatial_shape=(N,)``.

    ``bandlimit`` is the guaranteed per-axis bandlimit after a truncation
    (None means no guarantee beyond Nyquist).
    """

    data: np.ndarray
    spatial_shape: tuple[int, ...]
    axes: str = "both"
    domain: Domain = Domain.TORUS
    parity: tuple[Parity, ...] = field(default=())
    bandlimit: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.complex128)
        object.__setattr__(self, "data", data)
        if self.axes not in ("both", "zonal"):
            raise ValueError(f"axes must be 'both' or 'zonal', got {self.axes!r}")
        w = self.spatial_shape[-1]
        if data.shape[-1] != w // 2 + 1:
            raise ValueError(
                f"last axis has {data.shape[-1]} bins, expected {w // 2 + 1} for W={w}"
            )
        if self.axes == "both" and len(self.spatial_shape) != 2:
            raise ValueError("axes='both' requires a 2D spatial shape")
        _check_finite(data, "spectrum data")

    @property
    def n_cols(self) -> int:
        return self.spatial_shape[-1]

    def nyquist(self) -> tuple[int, ...]:
        return tuple(n // 2 for n in self.spatial_shape)


@dataclass(frozen=True)
class Spectrum1D:
    """Zonally averaged power spectrum over wavenumbers ``0..W//2``.

    ``power[k]`` carries the Hermitian fold weight (2 for interior bins,
    1 for k=0 and the even-size Nyquist bin) so that ``power.sum()``
    equals the mean per-row spatial energy ``mean_rows((1/W) * sum u^2)``.
    """

    power: np.ndarray
    n_cols: int

    def __post_init__(self) -> None:
        power = np.asarray(self.power, dtype=np.float64)
        if power.ndim != 1 or power.shape[0] != self.n_cols // 2 + 1:
            raise ValueError(f"power must have {self.n_cols // 2 + 1} bins")
        if np.any(power < 0):
            raise ValueError("power spectrum has negative entries")
        object.__setattr__(self, "power", power)

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(self.power.shape[0])


# ---------------------------------------------------------------------------
# Normalized transform primitives (shared by the autodiff engine)
# ---------------------------------------------------------------------------


def rfft_norm(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Forward real transform along one axis with 1/N normalization."""
    n = x.shape[axis]
    return np.fft.rfft(x, axis=axis) / n


def irfft_norm(z: np.ndarray, n: int, axis: int = -1) -> np.ndarray:
    """Inverse of :func:`rfft_norm` (no normalization on the inverse)."""
    return np.fft.irfft(z, n=n, axis=axis) * n


def rfft2_norm(x: np.ndarray) -> np.ndarray:
    """Forward 2D real transform over the last two axes, 1/(H*W) normalized."""
    h, w = x.shape[-2], x.shape[-1]
    return np.fft.rfft2(x, axes=(-2, -1)) / (h * w)


def irfft2_norm(z: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`rfft2_norm`."""
    h, w = hw
    return np.fft.irfft2(z, s=(h, w), axes=(-2, -1)) * (h * w)


def hermitian_fold_weights(n: int) -> np.ndarray:
    """Multiplicity of each stored rfft bin in the full spectrum.

    1 for self-conjugate bins (k=0 and, for even n, k=n/2), 2 otherwise.
    """
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w


# ---------------------------------------------------------------------------
# Spec operations
# ---------------------------------------------------------------------------


def dft_forward(f: RealField, axes: str = "both") -> ComplexSpectrum:
    """Transform a field to coefficient space.

    ``axes='both'`` performs the full 2D transform; ``axes='zonal'``
    transforms each row independently (used for latitude-wise filtering).
    """
    _check_finite(f.data, "field data")
    if axes == "both":
        data = rfft2_norm(f.data)
    elif axes == "zonal":
        data = rfft_norm(f.data, axis=-1)
    else:
        raise ValueError(f"axes must be 'both' or 'zonal', got {axes!r}")
    return ComplexSpectrum(
        data=data,
        spatial_shape=(f.n_rows, f.n_cols),
        axes=axes,
        domain=f.domain,
        parity=f.parity,
    )


def dft_inverse(s: ComplexSpectrum, rtol: float = 1e-12) -> RealField:
    """Invert a spectrum back to a real field.

    Rejects spectra whose implied signal is not real to within ``rtol``
    (relative to the field magnitude), i.e. Hermitian-inconsistent input.
    """
    if len(s.spatial_shape) != 2:
        raise ValueError("dft_inverse expects a 2D spectrum; use irfft_norm for 1D")
    h, w = s.spatial_shape
    if s.axes == "both":
        data = irfft2_norm(s.data, (h, w))
        check = rfft2_norm(data)
    else:
        data = irfft_norm(s.data, w, axis=-1)
        check = rfft_norm(data, axis=-1)
    # irfft silently discards any non-Hermitian component; compare round trip.
    scale = max(float(np.max(np.abs(s.data))), 1e-300)
    err = float(np.max(np.abs(check - s.data)))
    if err > rtol * scale:
        raise ValueError(
            f"spectrum is not Hermitian-consistent (relative error {err / scale:.3e})"
        )
    return RealField(data=data, domain=s.domain, parity=s.parity)


def mode_mask(s: ComplexSpectrum, k_keep: int | tuple[int, int]) -> np.ndarray:
    """Boolean mask over spectrum bins with |k| <= k_keep per transformed axis."""
    if isinstance(k_keep, tuple):
        k_row, k_col = k_keep
    else:
        k_row = k_col = int(k_keep)
    col_k = np.arange(s.data.shape[-1])
    mask = col_k <= k_col
    if s.axes == "both":
        h = s.spatial_shape[0]
        row_k = np.abs(np.fft.fftfreq(h, d=1.0 / h))
        mask = (row_k[:, None] <= k_row) & mask[None, :]
    return mask


def truncate_modes(s: ComplexSpectrum, k_keep: int | tuple[int, int]) -> ComplexSpectrum:
    """Zero all modes above ``k_keep`` per axis, preserving the rest bit-exactly."""
    nyq = s.nyquist()
    if s.axes == "both":
        ks = k_keep if isinstance(k_keep, tuple) else (int(k_keep), int(k_keep))
        limits = (nyq[0], nyq[1])
    else:
        ks = (k_keep if not isinstance(k_keep, tuple) else k_keep[-1],)
        limits = (nyq[-1],)
    for k, lim in zip(ks, limits):
        if not 0 <= k <= lim:
            raise ValueError(f"k_keep={k} outside [0, Nyquist={lim}]")
    mask = mode_mask(s, k_keep if isinstance(k_keep, tuple) else int(k_keep))
    data = np.where(mask, s.data, 0.0 + 0.0j)
    if s.axes == "both":
        bl: tuple[int, ...] = tuple(ks)
    elif len(s.spatial_shape) == 2:
        bl = (nyq[0], ks[0])
    else:
        bl = (ks[0],)
    return replace(s, data=data, bandlimit=bl)


def resample_axis(x: np.ndarray, n_new: int, axis: int) -> np.ndarray:
    """Fourier resampling of one periodic axis (complex intermediate allowed).

    Upsampling zero-pads the spectrum (splitting an even-size Nyquist bin
    across +/-N/2 so real signals stay real); downsampling truncates and
    folds the new Nyquist pair.  Amplitude-normalized coefficients are
    preserved exactly for bandlimited content.
    """
    n_old = x.shape[axis]
    if n_new == n_old:
        return x.copy()
    spec = np.fft.fft(x, axis=axis) / n_old
    spec = np.moveaxis(spec, axis, -1)
    new_shape = spec.shape[:-1] + (n_new,)
    out = np.zeros(new_shape, dtype=np.complex128)
    if n_new > n_old:
        h = n_old // 2
        if n_old % 2 == 0:
            out[..., :h] = spec[..., :h]
            out[..., h] = 0.5 * spec[..., h]
            out[..., n_new - h] = 0.5 * spec[..., h]
            if h > 1:
                out[..., n_new - h + 1:] = spec[..., h + 1:]
        else:
            out[..., : h + 1] = spec[..., : h + 1]
            out[..., n_new - h:] = spec[..., h + 1:]
    else:
        h = n_new // 2
        if n_new % 2 == 0:
            out[..., :h] = spec[..., :h]
            out[..., h] = spec[..., h] + spec[..., n_old - h]
            if h > 1:
                out[..., h + 1:] = spec[..., n_old - h + 1:]
        else:
            out[..., : h + 1] = spec[..., : h + 1]
            out[..., h + 1:] = spec[..., n_old - h:]
    out = np.fft.ifft(out * n_new, axis=-1)
    return np.moveaxis(out, -1, axis)


def fourier_resample(f: RealField, factor) -> RealField:
    """Resample a field by trigonometric interpolation / truncation.

    ``factor`` may be a scalar or a per-axis pair ``(row_factor,
    col_factor)``; each entry is a rational (int, float, or Fraction) and
    the resulting grid sizes must be integral.
    """
    if isinstance(factor, tuple):
        fr, fc = factor
    else:
        fr = fc = factor
    sizes = []
    for n, fac in ((f.n_rows, fr), (f.n_cols, fc)):
        frac = Fraction(fac).limit_denominator(10**9)
        target = n * frac
        if target.denominator != 1:
            raise ValueError(f"resampling factor {fac} gives non-integral size {n}*{fac}")
        new_n = int(target)
        if new_n < 2:
            raise ValueError(f"resampled axis length {new_n} < 2")
        sizes.append(new_n)
    out = f.data.astype(np.complex128)
    out = resample_axis(out, sizes[0], axis=-2)
    out = resample_axis(out, sizes[1], axis=-1)
    imag_max = float(np.max(np.abs(out.imag)))
    scale = max(float(np.max(np.abs(out.real))), 1e-300)
    if imag_max > 1e-9 * scale:
        raise ValueError("resampled field has a non-negligible imaginary part")
    return f.with_data(np.ascontiguousarray(out.real))


def zonal_avg_spectrum(f: RealField) -> Spectrum1D:
    """Zonally averaged 1D power spectrum.

    Each row is transformed along the zonal axis; per-bin squared
    magnitudes are weighted by the Hermitian fold multiplicity and then
    averaged over rows and channels.
    """
    if f.n_cols < 2:
        raise ValueError("zonal spectrum needs W >= 2")
    z = rfft_norm(f.data, axis=-1)
    w = hermitian_fold_weights(f.n_cols)
    power = (np.abs(z) ** 2).mean(axis=(0, 1)) * w
    return Spectrum1D(power=power, n_cols=f.n_cols)


def random_field(
    rng: np.random.Generator,
    n_channels: int,
    n_rows: int,
    n_cols: int,
    domain: Domain = Domain.TORUS,
    bandlimit: int | tuple[int, int] | None = None,
    parity: tuple[Parity, ...] = (),
) -> RealField:
    """Gaussian random field, optionally bandlimited by spectral truncation."""
    data = rng.standard_normal((n_channels, n_rows, n_cols))
    f = RealField(data=data, domain=domain, parity=parity)
    if bandlimit is not None:
        spec = truncate_modes(dft_forward(f), bandlimit)
        f = replace(dft_inverse(spec), domain=domain, parity=f.parity)
    return f

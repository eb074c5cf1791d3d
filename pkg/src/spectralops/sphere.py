"""
Double Fourier Sphere geometry handling.

An equirectangular sphere field (offset colatitude grid, poles excluded)
becomes doubly periodic by appending its half-phase glide reflection:
reflect across the equator, shift half a period in longitude, and negate
odd-parity channels.  A column of the extended field then traces a full
great circle of longitude, so meridional operations see physically
adjacent data instead of an artificial pole seam.

Latitude-dependent bandlimiting keeps the zonal resolution roughly
uniform over the sphere: a wave with zonal wavenumber ``k`` at colatitude
``theta`` has the physical wavelength of wavenumber ``k / sin(theta)`` at
the equator, so rows keep only ``k <= round(K_eq * sin(theta))`` (with a
floor of 1 so polar rows retain their mean and one wave).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from types import SimpleNamespace

import numpy as np

from spectralops import autodiff as ad
from spectralops.grid import Domain, RealField, colatitudes


def _require_sphere(f: RealField) -> None:
    if f.domain is not Domain.SPHERE:
        raise ValueError(f"expected a SPHERE field, got {f.domain}")


def _require_even_cols(n_cols: int) -> None:
    if n_cols % 2 != 0:
        raise ValueError(f"glide reflection needs even W (half-phase shift), got W={n_cols}")


# ---------------------------------------------------------------------------
# core data-path ops (Var- or ndarray-valued, channel axis -3)
# ---------------------------------------------------------------------------


def glide_data(x, signs: np.ndarray):
    """Row flip + half-period zonal roll + per-channel parity signs."""
    w = ad._val(x).shape[-1]
    out = ad.roll(ad.flip(x, axis=-2), w // 2, axis=-1)
    return ad.mul(out, signs)


def dfs_pad_rows(x, pad: int, signs: np.ndarray):
    """Prepend/append ``pad`` glide-reflected rows (pole-adjacent data)."""
    if pad == 0:
        return x
    h = ad._val(x).shape[-2]
    g = glide_data(x, signs)
    top = g[..., h - pad:, :]
    bottom = g[..., :pad, :]
    return ad.concat([top, x, bottom], axis=-2)


def k_cut(theta, k_eq: int):
    """Latitude-dependent zonal cutoff ``max(1, round(K_eq * sin(theta)))``."""
    return np.maximum(1, np.rint(k_eq * np.sin(theta))).astype(int)


def latitude_mask(n_rows: int, n_cols: int, k_eq: int) -> np.ndarray:
    """Boolean (H, W//2+1) mask of retained zonal modes per row."""
    cuts = k_cut(colatitudes(n_rows), k_eq)
    k = np.arange(n_cols // 2 + 1)
    return k[None, :] <= cuts[:, None]


def zonal_filter_data(x, coeff, mask: np.ndarray):
    """Per-row zonal spectral multiply: transform, apply coeff*mask, invert.

    ``coeff`` broadcasts against the per-row spectrum (e.g. shape
    ``(D, H, W//2+1)``); ``mask`` is the latitude bandlimit.
    """
    w = ad._val(x).shape[-1]
    z = ad.rfft_last(x)
    z = ad.mul(z, mask.astype(np.float64))
    if coeff is not None:
        z = ad.mul(z, coeff)
    return ad.irfft_last(z, w)


def hybrid_conv_data(x, coeff, mask, kernel, weight, bias, signs):
    """Zonal spectral conv -> meridional spatial conv -> channel mix."""
    y = zonal_filter_data(x, coeff, mask)
    k_m = ad._val(kernel).shape[0]
    pad = (k_m - 1) // 2
    y = dfs_pad_rows(y, pad, signs)
    y = ad.conv_rows_valid(y, kernel)
    out = ad.channel_mix(weight, y)
    if bias is not None:
        out = ad.add(out, bias)
    return out


# ---------------------------------------------------------------------------
# parameter container for per-latitude filters
# ---------------------------------------------------------------------------


@dataclass
class LatitudeFilterBank:
    """Per-row zonal DS filters stored packed within the latitude bandlimit.

    Only coefficients with ``k <= k_cut(theta_row)`` are parameters (the
    shaping step of the cost table); they are scattered into the full
    ``(D, H, W//2+1)`` grid at application time.
    """

    a_packed: np.ndarray
    theta_packed: np.ndarray
    mask3: np.ndarray  # (D, H, W//2+1) bool
    k_eq: int

    @classmethod
    def init(cls, rng: np.random.Generator, d: int, n_rows: int, n_cols: int, k_eq: int):
        mask = latitude_mask(n_rows, n_cols, k_eq)
        mask3 = np.broadcast_to(mask, (d,) + mask.shape).copy()
        n = int(mask3.sum())
        return cls(
            a_packed=rng.standard_normal(n),
            theta_packed=rng.uniform(-np.pi, np.pi, size=n),
            mask3=mask3,
            k_eq=k_eq,
        )

    def params(self, prefix: str):
        yield f"{prefix}.a_packed", self.a_packed
        yield f"{prefix}.theta_packed", self.theta_packed

    def bind(self, tape, prefix: str) -> SimpleNamespace:
        if tape is None:
            a, th = self.a_packed, self.theta_packed
        else:
            a = tape.param(f"{prefix}.a_packed", self.a_packed)
            th = tape.param(f"{prefix}.theta_packed", self.theta_packed)
        return SimpleNamespace(a=a, theta=th)

    def coeff(self, bound) -> object:
        """Full-grid complex coefficients, zero outside the bandlimit."""
        a = ad.unpack_mask(bound.a, self.mask3)
        th = ad.unpack_mask(bound.theta, self.mask3)
        mag = ad.mul(ad.sigmoid(a), self.mask3.astype(np.float64))
        return ad.make_complex(ad.mul(mag, ad.cos(th)), ad.mul(mag, ad.sin(th)))

    @property
    def n_params(self) -> int:
        return self.a_packed.size + self.theta_packed.size


# ---------------------------------------------------------------------------
# field-level spec surface
# ---------------------------------------------------------------------------


def glide_reflect(f: RealField) -> RealField:
    """Half-phase glide reflection; output row j holds input row H-1-j."""
    _require_sphere(f)
    _require_even_cols(f.n_cols)
    out = glide_data(f.data, f.parity_signs())
    return f.with_data(out)


def dfs_extend(f: RealField) -> RealField:
    """Append the glide reflection: (C, 2H, W) torus field.

    A column of the result samples a full great circle of longitude at
    uniform spacing pi/H.
    """
    _require_sphere(f)
    _require_even_cols(f.n_cols)
    ext = np.concatenate([f.data, glide_data(f.data, f.parity_signs())], axis=-2)
    return RealField(ext, domain=Domain.TORUS, parity=f.parity)


def dfs_restrict(f: RealField) -> RealField:
    """Inverse of :func:`dfs_extend`: keep the first half of the rows."""
    if f.n_rows % 2 != 0:
        raise ValueError(f"dfs_restrict needs an even row count, got {f.n_rows}")
    return RealField(
        f.data[:, : f.n_rows // 2, :].copy(), domain=Domain.SPHERE, parity=f.parity
    )


def latitude_bandlimit(f: RealField, k_eq: int) -> RealField:
    """Zero zonal modes above the latitude-dependent cutoff, row by row."""
    _require_sphere(f)
    if not 1 <= k_eq <= f.n_cols // 2:
        raise ValueError(f"k_eq={k_eq} outside [1, {f.n_cols // 2}]")
    mask = latitude_mask(f.n_rows, f.n_cols, k_eq)
    out = zonal_filter_data(f.data, None, mask)
    return f.with_data(out)


def dfs_pad_meridional(f: RealField, pad: int) -> RealField:
    """Extend the row axis by ``pad`` glide-reflected rows on each side."""
    _require_sphere(f)
    _require_even_cols(f.n_cols)
    if not 0 <= pad <= f.n_rows:
        raise ValueError(f"pad={pad} outside [0, H={f.n_rows}]")
    out = dfs_pad_rows(f.data, pad, f.parity_signs())
    return replace(f, data=out)


def hybrid_conv(
    f: RealField,
    zonal,
    merid_kernel: np.ndarray,
    mix,
    k_eq: int,
) -> RealField:
    """Hybrid spherical convolution on a field.

    ``zonal`` is either a :class:`LatitudeFilterBank` or a raw complex
    coefficient array broadcastable to the per-row spectrum (used by
    tests to realize exact all-pass filters).  ``mix`` is a ChannelMix.
    """
    _require_sphere(f)
    _require_even_cols(f.n_cols)
    merid_kernel = np.asarray(merid_kernel, dtype=np.float64)
    if merid_kernel.ndim != 1 or merid_kernel.shape[0] % 2 == 0:
        raise ValueError("merid_kernel must be a 1D array of odd length")
    mask = latitude_mask(f.n_rows, f.n_cols, k_eq)
    if isinstance(zonal, LatitudeFilterBank):
        coeff = zonal.coeff(zonal.bind(None, ""))
    else:
        coeff = np.asarray(zonal, dtype=np.complex128)
    m_ns = mix.bind(None, "")
    out = hybrid_conv_data(
        f.data, coeff, mask, merid_kernel, m_ns.weight, m_ns.bias, f.parity_signs()
    )
    parity = f.parity if out.shape[-3] == f.n_channels else ()
    return RealField(out, domain=Domain.SPHERE, parity=parity)

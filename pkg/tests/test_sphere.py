"""DFS geometry: glide reflection, extension, latitude filters, hybrid conv."""

import numpy as np
import pytest

from spectralops.grid import Domain, Parity, RealField, colatitudes, longitudes, random_field
from spectralops.specops import ChannelMix
from spectralops.sphere import (
    LatitudeFilterBank,
    dfs_extend,
    dfs_pad_meridional,
    dfs_restrict,
    glide_reflect,
    hybrid_conv,
    k_cut,
    latitude_bandlimit,
    latitude_mask,
)


def _sphere_field(rng, c=1, h=8, w=16, parity=()):
    f = random_field(rng, c, h, w)
    return RealField(f.data, domain=Domain.SPHERE, parity=parity)


def _analytic_field(h, w, fn, parity=(Parity.EVEN,)):
    theta = colatitudes(h)
    lam = longitudes(w)
    data = fn(lam[None, :], theta[:, None])[None]
    return RealField(data, domain=Domain.SPHERE, parity=parity)


class TestGlideReflect:
    def test_constant_even(self):
        f = RealField(np.full((1, 4, 8), 2.5), domain=Domain.SPHERE)
        out = glide_reflect(f)
        np.testing.assert_array_equal(out.data, f.data)

    def test_constant_odd_negates(self):
        f = RealField(np.full((1, 4, 8), 2.5), domain=Domain.SPHERE, parity=(Parity.ODD,))
        out = glide_reflect(f)
        np.testing.assert_array_equal(out.data, -f.data)

    def test_involution(self):
        rng = np.random.default_rng(0)
        f = _sphere_field(rng, c=2, parity=(Parity.EVEN, Parity.ODD))
        out = glide_reflect(glide_reflect(f))
        np.testing.assert_array_equal(out.data, f.data)

    def test_row_permutation(self):
        rng = np.random.default_rng(1)
        f = _sphere_field(rng, h=6, w=8)
        out = glide_reflect(f)
        for j in range(6):
            np.testing.assert_array_equal(out.data[0, j], np.roll(f.data[0, 5 - j], 4))

    def test_odd_width_rejected(self):
        f = RealField(np.ones((1, 4, 7)), domain=Domain.SPHERE)
        with pytest.raises(ValueError, match="even W"):
            glide_reflect(f)


class TestDfsExtend:
    def test_constant_even(self):
        f = RealField(np.full((1, 4, 8), 1.5), domain=Domain.SPHERE)
        out = dfs_extend(f)
        assert out.domain is Domain.TORUS
        assert out.data.shape == (1, 8, 8)
        np.testing.assert_array_equal(out.data, np.full((1, 8, 8), 1.5))

    def test_restrict_round_trip_bit_exact(self):
        rng = np.random.default_rng(2)
        f = _sphere_field(rng, c=2, h=8, w=12, parity=(Parity.EVEN, Parity.ODD))
        back = dfs_restrict(dfs_extend(f))
        assert np.array_equal(back.data, f.data)
        assert back.domain is Domain.SPHERE

    def test_restrict_takes_first_half(self):
        rng = np.random.default_rng(3)
        top = rng.standard_normal((1, 3, 4))
        bottom = rng.standard_normal((1, 3, 4))
        f = RealField(np.concatenate([top, bottom], axis=1), domain=Domain.TORUS)
        out = dfs_restrict(f)
        np.testing.assert_array_equal(out.data, top)

    def test_restrict_rejects_odd_rows(self):
        f = RealField(np.ones((1, 7, 4)), domain=Domain.TORUS)
        with pytest.raises(ValueError, match="even row"):
            dfs_restrict(f)

    def test_column_traces_great_circle(self):
        # f = sin(theta)*cos(lambda) continues as a pure sine wave along
        # a full meridional great circle; the extension must sample it
        # exactly, so its meridional spectrum is a single mode.
        h, w = 16, 32
        f = _analytic_field(h, w, lambda lam, th: np.sin(th) * np.cos(lam))
        ext = dfs_extend(f)
        col = ext.data[0, :, 0]  # lambda = 0 column
        phi = np.pi * (np.arange(2 * h) + 0.5) / h
        np.testing.assert_allclose(col, np.sin(phi), atol=1e-12)

    def test_smooth_field_seam_continuity(self):
        # Oracle: evaluate the analytic great-circle continuation on the
        # doubled grid and compare jumps across the seam vs interior.
        h, w = 16, 32
        f = _analytic_field(h, w, lambda lam, th: np.sin(th) * np.cos(lam))
        ext = dfs_extend(f).data[0]
        jumps = np.abs(np.diff(ext, axis=0, append=ext[:1]))
        seam = max(jumps[h - 1].max(), jumps[-1].max())
        interior = jumps[: h - 1].max()
        assert seam <= 2 * interior


class TestLatitudeBandlimit:
    def test_equator_no_truncation(self):
        assert k_cut(np.pi / 2, 20) == 20

    def test_thirty_degrees(self):
        assert k_cut(np.pi / 6, 20) == 10

    def test_polar_floor(self):
        assert k_cut(0.001, 20) == 1

    def test_surviving_rows_oracle(self):
        # cos(2*pi*8*lambda/W-domain) uniform in theta, K_eq=16, H=32: rows
        # keep the wave exactly when round(16 sin theta_j) >= 8.
        h, w, k_eq, k_wave = 32, 64, 16, 8
        lam = np.arange(w) / w
        row = np.cos(2 * np.pi * k_wave * lam)
        f = RealField(np.tile(row, (1, h, 1)), domain=Domain.SPHERE)
        out = latitude_bandlimit(f, k_eq)
        survive = np.rint(k_eq * np.sin(colatitudes(h))) >= k_wave
        for j in range(h):
            if survive[j]:
                np.testing.assert_allclose(out.data[0, j], row, atol=1e-12)
            else:
                np.testing.assert_allclose(out.data[0, j], 0.0, atol=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        f = _sphere_field(rng, h=16, w=32)
        once = latitude_bandlimit(f, 10)
        twice = latitude_bandlimit(once, 10)
        np.testing.assert_allclose(once.data, twice.data, atol=1e-14)

    def test_commutes_with_glide(self):
        rng = np.random.default_rng(5)
        f = _sphere_field(rng, c=2, h=16, w=32, parity=(Parity.EVEN, Parity.ODD))
        lhs = latitude_bandlimit(glide_reflect(f), 9)
        rhs = glide_reflect(latitude_bandlimit(f, 9))
        np.testing.assert_allclose(lhs.data, rhs.data, atol=1e-12)

    def test_out_of_range_rejected(self):
        rng = np.random.default_rng(6)
        f = _sphere_field(rng, h=8, w=16)
        with pytest.raises(ValueError, match="k_eq"):
            latitude_bandlimit(f, 9)


class TestDfsPadMeridional:
    def test_pad_zero_identity(self):
        rng = np.random.default_rng(7)
        f = _sphere_field(rng)
        np.testing.assert_array_equal(dfs_pad_meridional(f, 0).data, f.data)

    def test_pad_one_even(self):
        rng = np.random.default_rng(8)
        f = _sphere_field(rng, h=6, w=8)
        out = dfs_pad_meridional(f, 1)
        assert out.data.shape == (1, 8, 8)
        np.testing.assert_array_equal(out.data[0, 0], np.roll(f.data[0, 0], 4))
        np.testing.assert_array_equal(out.data[0, -1], np.roll(f.data[0, -1], 4))
        np.testing.assert_array_equal(out.data[0, 1:-1], f.data[0])

    def test_pad_one_odd_negates(self):
        rng = np.random.default_rng(9)
        f = _sphere_field(rng, h=6, w=8, parity=(Parity.ODD,))
        out = dfs_pad_meridional(f, 1)
        np.testing.assert_array_equal(out.data[0, 0], -np.roll(f.data[0, 0], 4))

    def test_pad_matches_extension_rows(self):
        # Padded rows must equal the corresponding rows of the full torus
        # extension read periodically.
        rng = np.random.default_rng(10)
        f = _sphere_field(rng, h=6, w=8)
        ext = dfs_extend(f).data
        out = dfs_pad_meridional(f, 2).data
        np.testing.assert_array_equal(out[:, :2], ext[:, -2:])
        np.testing.assert_array_equal(out[:, 2:8], ext[:, :6])
        np.testing.assert_array_equal(out[:, 8:], ext[:, 6:8])

    def test_pad_too_large_rejected(self):
        rng = np.random.default_rng(11)
        f = _sphere_field(rng, h=6, w=8)
        with pytest.raises(ValueError, match="pad"):
            dfs_pad_meridional(f, 7)


class TestHybridConv:
    def test_allpass_delta_is_latitude_bandlimit(self):
        rng = np.random.default_rng(12)
        f = _sphere_field(rng, c=2, h=8, w=16)
        mix = ChannelMix(weight=np.eye(2))
        out = hybrid_conv(f, np.ones((8, 9), dtype=complex), np.array([1.0]), mix, k_eq=6)
        ref = latitude_bandlimit(f, 6)
        np.testing.assert_allclose(out.data, ref.data, atol=1e-13)

    def test_center_tap_kernel_identity_within_bandlimit(self):
        rng = np.random.default_rng(13)
        f = _sphere_field(rng, c=2, h=8, w=16)
        f = RealField(latitude_bandlimit(f, 6).data, domain=Domain.SPHERE)
        mix = ChannelMix(weight=np.eye(2))
        out = hybrid_conv(f, np.ones((8, 9), dtype=complex), np.array([0.0, 1.0, 0.0]), mix, k_eq=6)
        np.testing.assert_allclose(out.data, f.data, atol=1e-13)

    def test_even_kernel_rejected(self):
        rng = np.random.default_rng(14)
        f = _sphere_field(rng)
        mix = ChannelMix(weight=np.eye(1))
        with pytest.raises(ValueError, match="odd length"):
            hybrid_conv(f, np.ones((8, 9), dtype=complex), np.array([0.5, 0.5]), mix, k_eq=4)

    def test_staged_oracle(self):
        rng = np.random.default_rng(15)
        c, h, w, k_m, k_eq = 3, 8, 16, 3, 5
        f = _sphere_field(rng, c=c, h=h, w=w)
        bank = LatitudeFilterBank.init(rng, c, h, w, k_eq)
        mix = ChannelMix.init(rng, c, c)
        kernel = rng.standard_normal(k_m)
        out = hybrid_conv(f, bank, kernel, mix, k_eq)

        # Stage 1: per-row zonal multiply, directly per row and mode.
        coeff = np.zeros((c, h, w // 2 + 1), dtype=complex)
        sig = 1.0 / (1.0 + np.exp(-bank.a_packed))
        coeff[bank.mask3] = sig * np.exp(1j * bank.theta_packed)
        stage1 = np.zeros_like(f.data)
        for ch in range(c):
            for j in range(h):
                z = np.fft.rfft(f.data[ch, j]) / w
                z = z * coeff[ch, j] * latitude_mask(h, w, k_eq)[j]
                stage1[ch, j] = np.fft.irfft(z, n=w) * w
        # Stage 2: meridional conv over explicit glide padding.
        pad = (k_m - 1) // 2
        g = np.stack([np.roll(stage1[ch, ::-1], w // 2, axis=-1) for ch in range(c)])
        padded = np.concatenate([g[:, h - pad:], stage1, g[:, :pad]], axis=1)
        stage2 = np.zeros_like(stage1)
        for j in range(h):
            for t in range(k_m):
                stage2[:, j] += kernel[t] * padded[:, j + t]
        # Stage 3: channel mix.
        oracle = np.einsum("oc,chw->ohw", mix.weight, stage2) + mix.bias
        np.testing.assert_allclose(out.data, oracle, atol=1e-12)

    def test_no_cross_polar_leakage(self):
        # Perturbing any southern-third pixel leaves northern-row outputs
        # exactly unchanged for a K_m=3 hybrid layer.
        rng = np.random.default_rng(16)
        c, h, w, k_eq = 1, 12, 16, 6
        f = _sphere_field(rng, c=c, h=h, w=w)
        bank = LatitudeFilterBank.init(rng, c, h, w, k_eq)
        mix = ChannelMix.init(rng, c, c)
        kernel = rng.standard_normal(3)
        base = hybrid_conv(f, bank, kernel, mix, k_eq).data

        bumped = f.data.copy()
        bumped[0, 10, 3] += 1.0  # southern third
        out = hybrid_conv(RealField(bumped, domain=Domain.SPHERE), bank, kernel, mix, k_eq).data
        np.testing.assert_array_equal(out[0, :2], base[0, :2])
        assert np.max(np.abs(out[0, 9:] - base[0, 9:])) > 0


class TestSeamSpectralDecay:
    def test_dfs_tail_two_orders_below_naive_wrap(self):
        # Property at H=32, W=64: the meridional spectrum of the DFS
        # extension decays at least 100x faster near Nyquist than the
        # naive periodic wrap of the same smooth field.
        h, w = 32, 64
        f = _analytic_field(h, w, lambda lam, th: np.sin(th) * np.cos(lam))

        def tail_fraction(cols):
            spec = np.abs(np.fft.rfft(cols, axis=0) / cols.shape[0]) ** 2
            total = spec.sum()
            tail = spec[int(0.75 * spec.shape[0]):].sum()
            return tail / total

        naive = tail_fraction(f.data[0])
        ext = dfs_extend(f)
        dfs = tail_fraction(ext.data[0])
        assert dfs < 1e-2 * naive

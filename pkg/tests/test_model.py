"""Blocks, network assembly, rollout, and the pseudospectral construction."""

import numpy as np
import pytest

from spectralops.grid import (
    Domain,
    RealField,
    dft_forward,
    irfft_norm,
    random_field,
    rfft_norm,
    truncate_modes,
)
from spectralops.model import (
    BlockKind,
    EmbeddingKind,
    FnoBlock,
    Geometry,
    HybridReBlock,
    Network,
    NetworkSpec,
    PositionTimeEmbedding,
    ReBlock,
    build_network,
    fno_block_forward,
    network_forward,
    pseudospectral_fno_construct,
    re_block_forward,
    redfno_hybrid_block_forward,
    rollout,
)
from spectralops.pde import Dealias, SolverConfig, advection_rhs
from spectralops.specops import Activation


def _spec(**kw) -> NetworkSpec:
    base = dict(n_rows=16, n_cols=16, in_channels=2, out_channels=2, n_blocks=1,
                width=4, modes=4, block_kind=BlockKind.FNO_DENSE)
    base.update(kw)
    return NetworkSpec(**base)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class TestNetworkSpec:
    def test_round_trip_dict(self):
        spec = _spec(block_kind=BlockKind.RE_BLOCK, activation=Activation.GELU,
                     spectral_norm=True, embedding=EmbeddingKind.STATIC)
        again = NetworkSpec.from_dict(spec.to_dict())
        assert again == spec

    def test_unknown_keys_rejected(self):
        d = _spec().to_dict()
        d["wobble"] = 3
        with pytest.raises(ValueError, match="unknown"):
            NetworkSpec.from_dict(d)

    def test_modes_beyond_nyquist_rejected(self):
        with pytest.raises(ValueError, match="modes"):
            _spec(modes=9)

    def test_hybrid_requires_sphere(self):
        with pytest.raises(ValueError, match="sphere"):
            _spec(block_kind=BlockKind.RE_DFNO_HYBRID, geometry=Geometry.TORUS)


class TestFnoBlock:
    def test_identity_config_adds_truncation(self):
        rng = np.random.default_rng(0)
        spec = _spec()
        blk = FnoBlock(np.random.default_rng(1), spec, dense=True)
        blk.activation = Activation.IDENTITY
        blk.w.weight = np.eye(4)
        blk.w.bias = np.zeros((4, 1, 1))
        eye = np.tile(np.eye(4), blk.block.mode_shape + (1, 1))
        blk.conv.re = eye
        blk.conv.im = np.zeros_like(eye)
        v = random_field(rng, 4, 16, 16)
        out = fno_block_forward(v, blk)
        ref = v.data + (
            truncate_modes(dft_forward(v), 4).data,
        )[0]
        from spectralops.grid import dft_inverse

        trunc = dft_inverse(truncate_modes(dft_forward(v), 4)).data
        np.testing.assert_allclose(out.data, v.data + trunc, atol=1e-12)
        assert ref is not None

    def test_zero_params_silu_gives_zero(self):
        spec = _spec(activation=Activation.SILU)
        blk = FnoBlock(np.random.default_rng(2), spec, dense=True)
        blk.w.weight[...] = 0.0
        blk.w.bias[...] = 0.0
        blk.conv.re[...] = 0.0
        blk.conv.im[...] = 0.0
        v = random_field(np.random.default_rng(3), 4, 16, 16)
        out = fno_block_forward(v, blk)
        assert np.all(out.data == 0.0)

    def test_matches_straight_line_reference(self):
        # Direct per-pixel / per-mode evaluation of the block equations.
        rng = np.random.default_rng(4)
        spec = _spec(activation=Activation.SILU)
        blk = FnoBlock(np.random.default_rng(5), spec, dense=True)
        blk.conv.re *= 50
        blk.conv.im *= 50
        v = random_field(rng, 4, 16, 16)

        out = fno_block_forward(v, blk)

        n = 16
        vh = np.fft.rfft2(v.data) / (n * n)
        r = blk.conv.re + 1j * blk.conv.im
        rows = blk.block.row_frequencies()
        conv_hat = np.zeros_like(vh)
        for i, kr in enumerate(rows):
            ri = kr % n
            for kc in range(blk.block.n_cols_kept):
                conv_hat[:, ri, kc] = r[i, kc] @ vh[:, ri, kc]
        conv = np.fft.irfft2(conv_hat, s=(n, n)) * (n * n)
        lin = np.einsum("oc,chw->ohw", blk.w.weight, v.data) + blk.w.bias
        pre = lin + conv
        ref = pre * _sigmoid(pre)
        np.testing.assert_allclose(out.data, ref, atol=1e-12)

    def test_ds_variant_runs(self):
        spec = _spec(block_kind=BlockKind.FNO_DS)
        blk = FnoBlock(np.random.default_rng(6), spec, dense=False)
        v = random_field(np.random.default_rng(7), 4, 16, 16)
        out = fno_block_forward(v, blk)
        assert np.all(np.isfinite(out.data))


class TestReBlock:
    def test_dead_filters_pure_skip(self):
        spec = _spec(block_kind=BlockKind.RE_BLOCK)
        blk = ReBlock(np.random.default_rng(8), spec)
        blk.filter.a[...] = -40.0
        v = random_field(np.random.default_rng(9), 4, 16, 16)
        out = re_block_forward(v, blk)
        np.testing.assert_allclose(out.data, v.data, atol=1e-12)

    def test_allpass_identity_config(self):
        spec = _spec(block_kind=BlockKind.RE_BLOCK)
        blk = ReBlock(np.random.default_rng(10), spec)
        blk.activation = Activation.IDENTITY
        blk.w.weight = np.eye(4)
        blk.w.bias[...] = 0.0
        blk.filter.a[...] = 40.0
        blk.filter.theta[...] = 0.0
        blk.cmix.weight = np.eye(4)
        v = random_field(np.random.default_rng(11), 4, 16, 16)
        out = re_block_forward(v, blk)
        from spectralops.grid import dft_inverse

        trunc = dft_inverse(truncate_modes(dft_forward(v), 4)).data
        np.testing.assert_allclose(out.data, v.data + trunc, atol=1e-12)

    def test_staged_reference(self):
        rng = np.random.default_rng(12)
        spec = _spec(block_kind=BlockKind.RE_BLOCK, dynamic_filter=True)
        blk = ReBlock(np.random.default_rng(13), spec)
        blk.dyn.w2 = rng.standard_normal(blk.dyn.w2.shape) * 0.3
        v = random_field(rng, 4, 16, 16)
        out = re_block_forward(v, blk)

        # Stage oracle built from the container-level ops.
        from spectralops.grid import dft_inverse
        from spectralops.specops import dynamic_ds_conv

        lin = np.einsum("oc,chw->ohw", blk.w.weight, v.data) + blk.w.bias
        act = lin * _sigmoid(lin)
        s = dft_forward(RealField(act))
        conv = dynamic_ds_conv(s, blk.filter, blk.dyn, blk.cmix, 4)
        ref = v.data + dft_inverse(conv).data
        np.testing.assert_allclose(out.data, ref, atol=1e-12)

    def test_bandlimit_preservation_above_k(self):
        # Only the identity skip carries modes above K through the block.
        spec = _spec(block_kind=BlockKind.RE_BLOCK)
        blk = ReBlock(np.random.default_rng(14), spec)
        v = random_field(np.random.default_rng(15), 4, 16, 16)
        out = re_block_forward(v, blk)
        s_in = dft_forward(v).data
        s_out = dft_forward(out).data
        from spectralops.grid import mode_mask

        mask = mode_mask(dft_forward(v), 4)
        np.testing.assert_allclose(s_out[:, ~mask], s_in[:, ~mask], atol=1e-13)


class TestHybridBlock:
    def _spec(self):
        return _spec(
            n_rows=8,
            n_cols=16,
            block_kind=BlockKind.RE_DFNO_HYBRID,
            geometry=Geometry.SPHERE_DFS,
            modes=4,
        )

    def test_dead_filters_pure_skip(self):
        blk = HybridReBlock(np.random.default_rng(16), self._spec())
        packed = blk.zonal.a_packed
        packed[...] = -40.0
        v = RealField(np.random.default_rng(17).standard_normal((4, 8, 16)), domain=Domain.SPHERE)
        out = redfno_hybrid_block_forward(v, blk)
        np.testing.assert_allclose(out.data, v.data, atol=1e-12)

    def test_constant_preserving_config(self):
        # With uniform unit filters, a center-tap kernel, identity mixes and
        # no bias, every stage maps constants to constants.
        blk = HybridReBlock(np.random.default_rng(18), self._spec())
        blk.activation = Activation.IDENTITY
        blk.w.weight = np.eye(4)
        blk.w.bias = None
        blk.zonal.a_packed[...] = 40.0
        blk.zonal.theta_packed[...] = 0.0
        blk.merid_kernel = np.array([0.0, 1.0, 0.0])
        blk.cmix.weight = np.eye(4)
        v = RealField(np.full((4, 8, 16), 1.7), domain=Domain.SPHERE)
        out = redfno_hybrid_block_forward(v, blk)
        np.testing.assert_allclose(out.data, 2 * 1.7 * np.ones_like(v.data), atol=1e-10)

    def test_constant_input_zonally_constant_output(self):
        blk = HybridReBlock(np.random.default_rng(19), self._spec())
        v = RealField(np.full((4, 8, 16), 0.9), domain=Domain.SPHERE)
        out = redfno_hybrid_block_forward(v, blk)
        assert np.max(np.abs(out.data - out.data[..., :1])) < 1e-12

    def test_staged_reference(self):
        rng = np.random.default_rng(20)
        blk = HybridReBlock(np.random.default_rng(21), self._spec())
        v = RealField(rng.standard_normal((4, 8, 16)), domain=Domain.SPHERE)
        out = redfno_hybrid_block_forward(v, blk)

        from spectralops.sphere import hybrid_conv

        lin = np.einsum("oc,chw->ohw", blk.w.weight, v.data) + blk.w.bias
        act = lin * _sigmoid(lin)
        coeff = np.zeros((4, 8, 9), dtype=complex)
        coeff[blk.zonal.mask3] = _sigmoid(blk.zonal.a_packed) * np.exp(1j * blk.zonal.theta_packed)
        from spectralops.specops import ChannelMix

        mix = ChannelMix(weight=blk.cmix.weight, bias=None, normalize=False)
        conv = hybrid_conv(
            RealField(act, domain=Domain.SPHERE), coeff, blk.merid_kernel, mix, k_eq=4
        )
        ref = v.data + conv.data
        np.testing.assert_allclose(out.data, ref, atol=1e-12)

    def test_rejects_torus_field(self):
        blk = HybridReBlock(np.random.default_rng(22), self._spec())
        v = random_field(np.random.default_rng(23), 4, 8, 16)
        with pytest.raises(ValueError, match="SPHERE"):
            redfno_hybrid_block_forward(v, blk)


class TestPseudospectralConstruct:
    def test_constant_unchanged(self):
        step = pseudospectral_fno_construct(64, 1e-3)
        u = np.full(64, 1.3)
        np.testing.assert_allclose(step.forward(u), u, atol=1e-14)

    def test_matches_euler_step_on_sine(self):
        n, dt = 64, 1e-3
        step = pseudospectral_fno_construct(n, dt)
        x = np.arange(n) / n
        u = np.sin(2 * np.pi * x)
        out = step.forward(u)

        cfg = SolverConfig(n=n, dt=dt, nu=0.0, dealias=Dealias.NONE)
        u_hat = rfft_norm(u)
        euler = irfft_norm(u_hat + dt * advection_rhs(u_hat, cfg), n)
        np.testing.assert_allclose(out, euler, rtol=1e-12, atol=1e-14)

    def test_matches_euler_on_random_bandlimited(self):
        n, dt = 64, 1e-3
        rng = np.random.default_rng(24)
        step = pseudospectral_fno_construct(n, dt)
        cfg = SolverConfig(n=n, dt=dt, nu=0.0, dealias=Dealias.NONE)
        for _ in range(20):
            spec = np.zeros(n // 2 + 1, dtype=complex)
            spec[1 : n // 8 + 1] = rng.standard_normal(n // 8) + 1j * rng.standard_normal(n // 8)
            u = irfft_norm(spec, n)
            out = step.forward(u)
            euler = irfft_norm(rfft_norm(u) + dt * advection_rhs(rfft_norm(u), cfg), n)
            err = np.linalg.norm(out - euler) / np.linalg.norm(euler)
            assert err < 1e-12


class TestEmbeddings:
    def test_daily_yearly_periodicity(self):
        spec = _spec(embedding=EmbeddingKind.TIME)
        emb = PositionTimeEmbedding(np.random.default_rng(25), spec)
        e0 = emb.forward(5.0)
        np.testing.assert_allclose(emb.forward(5.0 + 1008.0), e0, atol=1e-12)
        from spectralops.model import time_phase_features

        f = time_phase_features(3.0)
        f24 = time_phase_features(27.0)
        np.testing.assert_allclose(f[:2], f24[:2], atol=1e-12)

    def test_zero_weights_bias_only(self):
        spec = _spec(embedding=EmbeddingKind.TIME)
        emb = PositionTimeEmbedding(np.random.default_rng(26), spec)
        emb.w1[...] = 0.0
        emb.w2[...] = 0.0
        emb.b2[...] = 0.7
        e1 = emb.forward(0.0)
        e2 = emb.forward(123.4)
        np.testing.assert_allclose(e1, np.full((4, 16, 16), 0.7), atol=1e-14)
        np.testing.assert_array_equal(e1, e2)


class TestNetwork:
    def test_forward_finite_and_shapes(self):
        for kind in (BlockKind.FNO_DENSE, BlockKind.FNO_DS, BlockKind.RE_BLOCK):
            spec = _spec(block_kind=kind, n_blocks=2, spectral_norm=True,
                         embedding=EmbeddingKind.STATIC)
            net = build_network(spec)
            u = random_field(np.random.default_rng(27), 2, 16, 16)
            out = network_forward(net, u)
            assert out.data.shape == (2, 16, 16)
            assert np.all(np.isfinite(out.data))

    def test_matches_naive_composition(self):
        spec = _spec(n_blocks=2, block_kind=BlockKind.RE_BLOCK)
        net = build_network(spec)
        u = random_field(np.random.default_rng(28), 2, 16, 16)
        out = network_forward(net, u)

        v = np.einsum("oc,chw->ohw", net.lift.weight, u.data) + net.lift.bias
        for blk in net.blocks:
            v = blk.forward(v)
        ref = np.einsum("oc,chw->ohw", net.project.weight, v) + net.project.bias
        np.testing.assert_allclose(out.data, ref, atol=1e-13)

    def test_determinism_same_seed(self):
        spec = _spec(block_kind=BlockKind.RE_BLOCK, dynamic_filter=True, seed=5)
        a, b = build_network(spec), build_network(spec)
        for (na, pa), (nb, pb) in zip(a.params(), b.params()):
            assert na == nb
            assert np.array_equal(pa, pb)
        u = random_field(np.random.default_rng(29), 2, 16, 16)
        assert np.array_equal(a.forward(u.data), b.forward(u.data))

    def test_batched_forward_matches_loop(self):
        spec = _spec(n_blocks=1, block_kind=BlockKind.RE_BLOCK)
        net = build_network(spec)
        rng = np.random.default_rng(30)
        batch = rng.standard_normal((3, 2, 16, 16))
        out = net.forward(batch)
        for b in range(3):
            np.testing.assert_allclose(out[b], net.forward(batch[b]), atol=1e-13)

    def test_channel_mismatch_rejected(self):
        net = build_network(_spec())
        u = random_field(np.random.default_rng(31), 3, 16, 16)
        with pytest.raises(ValueError, match="channels"):
            network_forward(net, u)


class TestRollout:
    class _Identity:
        def forward(self, x, t=0.0):
            return x

    class _Doubler:
        def forward(self, x, t=0.0):
            return 2.0 * x

    def test_single_step_is_single_forward(self):
        net = build_network(_spec())
        u = random_field(np.random.default_rng(32), 2, 16, 16)
        traj = rollout(net, u, n_steps=1)
        np.testing.assert_array_equal(traj.fields[1], net.forward(u.data))
        assert not traj.diverged

    def test_identity_network_persistence(self):
        u = random_field(np.random.default_rng(33), 1, 8, 8)
        traj = rollout(self._Identity(), u, n_steps=5)
        for k in range(6):
            np.testing.assert_array_equal(traj.fields[k], u.data)

    def test_divergence_flagged_not_raised(self):
        u = RealField(np.full((1, 4, 4), 1e300))
        traj = rollout(self._Doubler(), u, n_steps=10)
        assert traj.diverged
        assert traj.divergence_step is not None
        assert traj.fields.shape[0] == traj.divergence_step

    def test_external_loop_oracle(self):
        net = build_network(_spec(block_kind=BlockKind.RE_BLOCK))
        u = random_field(np.random.default_rng(34), 2, 16, 16)
        traj = rollout(net, u, n_steps=4)
        state = u.data
        for k in range(1, 5):
            state = net.forward(state)
            np.testing.assert_array_equal(traj.fields[k], state)

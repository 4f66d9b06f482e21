"""Channel-fusion block tests: residual identity, permutation behavior,
numpy oracles, and finite-difference gradient verification."""

import numpy as np
import pytest

from mcvt.errors import EmptyInputError, ShapeError
from mcvt.ndcore import (
    collect_parameters,
    constant,
    gradcheck,
    mul_const,
    sum_all,
)
from mcvt.ndcore.tensor import add
from mcvt.tac import (
    ModTacBlock,
    MultichannelBatch,
    TacBlock,
    channel_average_pool,
    modtac_forward,
    tac_forward,
)


def make_channels(rng, n, t, f, dtype=np.float64):
    return [rng.standard_normal((t, f)).astype(dtype) for _ in range(n)]


def np_transform(x, tf):
    """Plain-numpy mirror of the linear + PReLU unit."""
    y = x @ tf.lin.weight.data.T + tf.lin.bias.data
    return np.where(y >= 0, y, tf.act.slope.data * y)


def np_tac(block, chans):
    hs = [np_transform(z, block.P) for z in chans]
    avg = np_transform(sum(hs) / len(hs), block.Q)
    return [z + np_transform(np.concatenate([h, avg], axis=1), block.R)
            for z, h in zip(chans, hs)]


def np_modtac(block, chans, sel):
    hs = [np_transform(z, block.P) for z in chans]
    h_sc = np_transform(sel, block.P)
    avg = np_transform(sum(hs) / len(hs), block.Q)
    outs = [z + np_transform(np.concatenate([h, avg, h_sc], axis=1), block.R)
            for z, h in zip(chans, hs)]
    return outs, sel + np_transform(h_sc, block.S)


class TestResidualFloor:
    def test_zero_init_standard_block_is_bitwise_identity(self):
        rng = np.random.default_rng(7)
        block = TacBlock(feat_dim=6, hidden=4)
        chans = make_channels(rng, 3, 5, 6, dtype=np.float32)
        outs = tac_forward(block, chans)
        for z, out in zip(chans, outs):
            assert out.dtype == z.dtype
            assert np.array_equal(out, z)

    def test_zero_init_selected_block_is_bitwise_identity(self):
        rng = np.random.default_rng(8)
        block = ModTacBlock(feat_dim=6, hidden=4)
        chans = make_channels(rng, 3, 5, 6, dtype=np.float32)
        sel = rng.standard_normal((5, 6)).astype(np.float32)
        outs, out_sc = modtac_forward(block, chans, sel)
        for z, out in zip(chans, outs):
            assert np.array_equal(out, z)
        assert np.array_equal(out_sc, sel)


class TestForwardOracle:
    def test_single_channel_formula(self):
        rng = np.random.default_rng(11)
        block = TacBlock(feat_dim=5, hidden=3, rng=rng, dtype=np.float64)
        z = rng.standard_normal((4, 5))
        (out,) = tac_forward(block, [z])
        h = np_transform(z, block.P)
        expected = z + np_transform(np.concatenate([h, np_transform(h, block.Q)], axis=1),
                                    block.R)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_standard_block_matches_numpy(self):
        rng = np.random.default_rng(12)
        block = TacBlock(feat_dim=7, hidden=4, rng=rng, dtype=np.float64)
        chans = make_channels(rng, 4, 3, 7)
        outs = tac_forward(block, chans)
        expected = np_tac(block, chans)
        for got, want in zip(outs, expected):
            np.testing.assert_allclose(got, want, atol=1e-10)

    def test_selected_block_matches_numpy(self):
        rng = np.random.default_rng(13)
        block = ModTacBlock(feat_dim=7, hidden=4, rng=rng, dtype=np.float64)
        chans = make_channels(rng, 4, 3, 7)
        sel = rng.standard_normal((3, 7))
        outs, out_sc = modtac_forward(block, chans, sel)
        exp_outs, exp_sc = np_modtac(block, chans, sel)
        for got, want in zip(outs, exp_outs):
            np.testing.assert_allclose(got, want, atol=1e-10)
        np.testing.assert_allclose(out_sc, exp_sc, atol=1e-10)

    def test_output_shapes_and_count(self):
        rng = np.random.default_rng(14)
        block = TacBlock(feat_dim=6, hidden=4, rng=rng, dtype=np.float64)
        chans = make_channels(rng, 5, 9, 6)
        outs = tac_forward(block, chans)
        assert len(outs) == 5
        for out in outs:
            assert out.shape == (9, 6)


class TestPermutationBehavior:
    def test_standard_block_is_equivariant(self):
        rng = np.random.default_rng(21)
        block = TacBlock(feat_dim=6, hidden=5, rng=rng, dtype=np.float64)
        chans = make_channels(rng, 4, 3, 6)
        base = tac_forward(block, chans)
        for perm in ([3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1]):
            outs = tac_forward(block, [chans[p] for p in perm])
            for i, p in enumerate(perm):
                assert np.max(np.abs(outs[i] - base[p])) < 1e-9

    def test_selected_output_ignores_regular_order(self):
        rng = np.random.default_rng(22)
        block = ModTacBlock(feat_dim=6, hidden=5, rng=rng, dtype=np.float64)
        chans = make_channels(rng, 4, 3, 6)
        sel = rng.standard_normal((3, 6))
        base_outs, base_sc = modtac_forward(block, chans, sel)
        for perm in ([3, 2, 1, 0], [1, 3, 0, 2]):
            outs, out_sc = modtac_forward(block, [chans[p] for p in perm], sel)
            assert np.array_equal(out_sc, base_sc)
            for i, p in enumerate(perm):
                assert np.max(np.abs(outs[i] - base_outs[p])) < 1e-9

    def test_selected_channel_breaks_symmetry(self):
        # changing only the selected input must move every regular output
        rng = np.random.default_rng(23)
        block = ModTacBlock(feat_dim=6, hidden=5, rng=rng, dtype=np.float64)
        chans = make_channels(rng, 3, 4, 6)
        sel_a = rng.standard_normal((4, 6))
        sel_b = rng.standard_normal((4, 6))
        outs_a, _ = modtac_forward(block, chans, sel_a)
        outs_b, _ = modtac_forward(block, chans, sel_b)
        for a, b in zip(outs_a, outs_b):
            assert np.max(np.abs(a - b)) > 1e-6


class TestHeadSeparation:
    def test_selected_head_only_touches_selected_output(self):
        rng = np.random.default_rng(31)
        block = ModTacBlock(feat_dim=5, hidden=4, rng=rng, dtype=np.float64)
        chans = make_channels(rng, 3, 4, 5)
        sel = rng.standard_normal((4, 5))
        outs0, sc0 = modtac_forward(block, chans, sel)
        block.S.lin.weight.data += 0.5
        outs1, sc1 = modtac_forward(block, chans, sel)
        for a, b in zip(outs0, outs1):
            assert np.array_equal(a, b)
        assert np.max(np.abs(sc1 - sc0)) > 1e-6

    def test_shared_projection_only_touches_regular_outputs(self):
        rng = np.random.default_rng(32)
        block = ModTacBlock(feat_dim=5, hidden=4, rng=rng, dtype=np.float64)
        chans = make_channels(rng, 3, 4, 5)
        sel = rng.standard_normal((4, 5))
        outs0, sc0 = modtac_forward(block, chans, sel)
        block.R.lin.weight.data += 0.5
        outs1, sc1 = modtac_forward(block, chans, sel)
        assert np.array_equal(sc0, sc1)
        for a, b in zip(outs0, outs1):
            assert np.max(np.abs(a - b)) > 1e-6


class TestChannelAveragePool:
    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(41)
        chans = make_channels(rng, 4, 2, 3)
        pooled = channel_average_pool(chans).data
        for t in range(2):
            for f in range(3):
                acc = 0.0
                for c in chans:
                    acc += c[t, f]
                assert abs(pooled[t, f] - acc / 4) < 1e-12

    def test_identical_channels_pool_to_themselves(self):
        rng = np.random.default_rng(42)
        z = rng.standard_normal((3, 4))
        pooled = channel_average_pool([z.copy() for _ in range(5)]).data
        np.testing.assert_allclose(pooled, z, atol=1e-15)

    def test_opposite_channels_cancel(self):
        rng = np.random.default_rng(43)
        z = rng.standard_normal((3, 4))
        pooled = channel_average_pool([z, -z]).data
        np.testing.assert_allclose(pooled, np.zeros_like(z), atol=1e-15)

    def test_accepts_stacked_array(self):
        rng = np.random.default_rng(44)
        stacked = rng.standard_normal((4, 2, 3))
        pooled = channel_average_pool(stacked).data
        np.testing.assert_allclose(pooled, stacked.mean(axis=0), atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            channel_average_pool([])


class TestValidation:
    def test_mismatched_channel_shapes_rejected(self):
        rng = np.random.default_rng(51)
        block = TacBlock(feat_dim=5, hidden=3, rng=rng, dtype=np.float64)
        with pytest.raises(ShapeError):
            block([constant(rng.standard_normal((3, 5))),
                   constant(rng.standard_normal((4, 5)))])

    def test_wrong_feature_dim_rejected(self):
        rng = np.random.default_rng(52)
        block = TacBlock(feat_dim=5, hidden=3, rng=rng, dtype=np.float64)
        with pytest.raises(ShapeError):
            block([constant(rng.standard_normal((3, 6)))])

    def test_empty_channel_list_rejected(self):
        block = TacBlock(feat_dim=5, hidden=3)
        with pytest.raises(EmptyInputError):
            block([])

    def test_selected_shape_mismatch_rejected(self):
        rng = np.random.default_rng(53)
        block = ModTacBlock(feat_dim=5, hidden=3, rng=rng, dtype=np.float64)
        chans = make_channels(rng, 2, 3, 5)
        with pytest.raises(ShapeError):
            block([constant(c) for c in chans],
                  constant(rng.standard_normal((4, 5))))

    def test_batch_container_validates(self):
        rng = np.random.default_rng(54)
        with pytest.raises(EmptyInputError):
            MultichannelBatch(channels=[])
        with pytest.raises(ShapeError):
            MultichannelBatch(channels=[rng.standard_normal((3, 5)),
                                        rng.standard_normal((2, 5))])
        batch = MultichannelBatch(channels=make_channels(rng, 3, 4, 5))
        block = TacBlock(feat_dim=5, hidden=3, rng=rng, dtype=np.float64)
        outs = block(batch)
        assert len(outs) == 3


class TestGradients:
    def _loss(self, outs, weights):
        total = sum_all(mul_const(outs[0], weights[0]))
        for out, w in zip(outs[1:], weights[1:]):
            total = add(total, sum_all(mul_const(out, w)))
        return total

    def test_standard_block_gradcheck(self):
        rng = np.random.default_rng(61)
        block = TacBlock(feat_dim=5, hidden=3, rng=rng, dtype=np.float64)
        chans = [constant(c) for c in make_channels(rng, 3, 2, 5)]
        weights = [rng.standard_normal((2, 5)) for _ in range(3)]
        params = collect_parameters("tac", block)
        report = gradcheck(lambda: self._loss(block(chans), weights),
                           params, tolerance=1e-6)
        assert report.passed, str(report)

    def test_selected_block_gradcheck(self):
        rng = np.random.default_rng(62)
        block = ModTacBlock(feat_dim=5, hidden=3, rng=rng, dtype=np.float64)
        chans = [constant(c) for c in make_channels(rng, 3, 2, 5)]
        sel = constant(rng.standard_normal((2, 5)))
        weights = [rng.standard_normal((2, 5)) for _ in range(4)]

        def forward():
            outs, out_sc = block(chans, sel)
            return self._loss(outs + [out_sc], weights)

        params = collect_parameters("tac", block)
        report = gradcheck(forward, params, tolerance=1e-6)
        assert report.passed, str(report)

    def test_all_parameters_receive_gradient(self):
        rng = np.random.default_rng(63)
        block = ModTacBlock(feat_dim=5, hidden=3, rng=rng, dtype=np.float64)
        chans = [constant(c) for c in make_channels(rng, 3, 2, 5)]
        sel = constant(rng.standard_normal((2, 5)))
        outs, out_sc = block(chans, sel)
        total = sum_all(out_sc)
        for out in outs:
            total = add(total, sum_all(out))
        total.backward()
        for name, p in collect_parameters("tac", block).items():
            assert p.grad is not None, name
            assert np.all(np.isfinite(p.grad)), name
            assert np.any(p.grad != 0), name

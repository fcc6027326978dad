import numpy as np
import numpy.testing as npt
import pytest

from gradcheck import TOL, check_module_grads
from kvseg.engine import Tensor
from kvseg.errors import ConfigError
from kvseg.model import (
    ClassHead,
    ClipFusion,
    EmbedHead,
    FeatureMap,
    KernelFusion,
    KernelInteraction,
    KernelLinker,
    KernelSet,
    KernelUpdate,
    ModelConfig,
    Segmenter,
    VideoSegmenter,
    assemble_group_features,
    make_roles,
    predict_masks,
    sinusoidal_positions,
)

RNG = np.random.default_rng(2024)


def tiny_config(**overrides) -> ModelConfig:
    base = dict(
        num_thing_kernels=5,
        channels=16,
        heads=2,
        ffn_hidden=24,
        backbone_widths=(8, 12, 16, 20),
        embed_dim=8,
    )
    base.update(overrides)
    return ModelConfig(**base)


def feat_map(values: np.ndarray) -> FeatureMap:
    return FeatureMap(values=Tensor(values), stride=4)


def zero_linear(lin) -> None:
    lin.weight.data = np.zeros_like(lin.weight.data)
    if lin.bias is not None:
        lin.bias.data = np.zeros_like(lin.bias.data)


def identity_linear(lin) -> None:
    lin.weight.data = np.eye(*lin.weight.data.shape, dtype=lin.weight.data.dtype)
    lin.bias.data = np.zeros_like(lin.bias.data)


class TestAssemble:
    def test_hand_value(self):
        vals = np.stack([np.array([[1.0, 2.0], [3.0, 4.0]])] * 3).astype(np.float64)
        logits = Tensor(np.zeros((1, 2, 2)))
        out = assemble_group_features(feat_map(vals), logits).numpy()
        npt.assert_array_equal(out, np.full((1, 3), 5.0))

    def test_saturated_high_sums_everything(self):
        vals = np.full((2, 3, 3), 0.7)
        logits = Tensor(np.full((4, 3, 3), 50.0))
        out = assemble_group_features(feat_map(vals), logits).numpy()
        npt.assert_allclose(out, np.full((4, 2), 9 * 0.7), rtol=1e-9)

    def test_saturated_low_is_zero(self):
        vals = RNG.normal(size=(2, 3, 3))
        logits = Tensor(np.full((4, 3, 3), -50.0))
        out = assemble_group_features(feat_map(vals), logits).numpy()
        npt.assert_allclose(out, 0.0, atol=1e-15)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            assemble_group_features(feat_map(np.zeros((2, 3, 3))), Tensor(np.zeros((4, 2, 2))))


class TestKernelUpdate:
    def make(self, channels=4):
        return KernelUpdate(channels, np.random.default_rng(0), dtype=np.float64)

    def test_forced_halves(self):
        up = self.make()
        identity_linear(up.phi_f)
        identity_linear(up.phi_k)
        zero_linear(up.psi)
        k = RNG.normal(size=(3, 4))
        f = RNG.normal(size=(3, 4))
        out = up(Tensor(k), Tensor(f)).numpy()
        npt.assert_array_equal(out, 0.5 * f + 0.5 * k)

    def test_row_locality_bit_identical(self):
        up = self.make()
        k = RNG.normal(size=(4, 4))
        f = RNG.normal(size=(4, 4))
        base = up(Tensor(k), Tensor(f)).numpy()
        k2, f2 = k.copy(), f.copy()
        k2[2] += 1.0
        f2[2] -= 3.0
        moved = up(Tensor(k2), Tensor(f2)).numpy()
        rows = [0, 1, 3]
        npt.assert_array_equal(base[rows], moved[rows])
        assert not np.array_equal(base[2], moved[2])

    def test_permutation_equivariance(self):
        up = self.make()
        k = RNG.normal(size=(5, 4))
        f = RNG.normal(size=(5, 4))
        perm = np.array([3, 0, 4, 1, 2])
        out = up(Tensor(k), Tensor(f)).numpy()
        out_p = up(Tensor(k[perm]), Tensor(f[perm])).numpy()
        npt.assert_allclose(out_p, out[perm], rtol=1e-12)

    def test_single_row_matches_batch(self):
        up = self.make()
        k = RNG.normal(size=(3, 4))
        f = RNG.normal(size=(3, 4))
        full = up(Tensor(k), Tensor(f)).numpy()
        solo = up(Tensor(k[1:2]), Tensor(f[1:2])).numpy()
        npt.assert_allclose(solo[0], full[1], rtol=1e-12)

    def test_rejects_non_finite(self):
        up = self.make()
        bad = np.zeros((2, 4))
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            up(Tensor(np.zeros((2, 4))), Tensor(bad))

    def test_grad(self):
        up = self.make()
        k = Tensor(RNG.normal(size=(2, 4)), requires_grad=True)
        f = Tensor(RNG.normal(size=(2, 4)), requires_grad=True)
        assert check_module_grads(up, lambda: (up(k, f) ** 2.0).sum(), [k, f]) <= TOL


class TestKernelInteraction:
    def make(self):
        return KernelInteraction(4, 2, 6, np.random.default_rng(1), dtype=np.float64)

    def test_permutation_equivariance(self):
        block = self.make()
        k = RNG.normal(size=(6, 4))
        perm = RNG.permutation(6)
        out = block(Tensor(k)).numpy()
        out_p = block(Tensor(k[perm])).numpy()
        npt.assert_allclose(out_p, out[perm], rtol=1e-5, atol=1e-9)

    def test_single_kernel_deterministic(self):
        block = self.make()
        k = RNG.normal(size=(1, 4))
        a = block(Tensor(k)).numpy()
        b = block(Tensor(k)).numpy()
        npt.assert_array_equal(a, b)

    def test_identical_rows_stay_identical(self):
        block = self.make()
        row = RNG.normal(size=4)
        out = block(Tensor(np.stack([row, row]))).numpy()
        npt.assert_allclose(out[0], out[1], rtol=1e-12)

    def test_grad(self):
        block = self.make()
        k = Tensor(RNG.normal(size=(3, 4)), requires_grad=True)
        # The block ends in a LayerNorm, so a sum-of-squares probe is nearly
        # constant (unit row variance) and leaves only eps-scale gradients.
        # A fixed linear readout keeps the objective well conditioned.
        readout = RNG.normal(size=(3, 4))
        assert check_module_grads(block, lambda: (block(k) * readout).sum(), [k]) <= TOL


class TestPredictMasks:
    def test_one_hot_kernel_selects_channel(self):
        vals = RNG.normal(size=(3, 4, 5))
        k = np.zeros((1, 3))
        k[0, 1] = 1.0
        out = predict_masks(Tensor(k), feat_map(vals)).numpy()
        npt.assert_array_equal(out[0], vals[1])

    def test_zero_kernel(self):
        out = predict_masks(Tensor(np.zeros((2, 3))), feat_map(RNG.normal(size=(3, 4, 4)))).numpy()
        npt.assert_array_equal(out, 0.0)

    def test_linearity_in_kernels(self):
        vals = RNG.normal(size=(6, 5, 5))
        fm = feat_map(vals)
        a = RNG.normal(size=(3, 6))
        b = RNG.normal(size=(3, 6))
        lhs = predict_masks(Tensor(2.0 * a + b), fm).numpy()
        rhs = 2.0 * predict_masks(Tensor(a), fm).numpy() + predict_masks(Tensor(b), fm).numpy()
        npt.assert_allclose(lhs, rhs, rtol=1e-6)

    def test_channel_mismatch(self):
        with pytest.raises(ConfigError):
            predict_masks(Tensor(np.zeros((2, 4))), feat_map(np.zeros((3, 2, 2))))


class TestClassHead:
    def test_grad(self):
        head = ClassHead(4, 3, np.random.default_rng(2), dtype=np.float64)
        k = Tensor(RNG.normal(size=(2, 4)), requires_grad=True)
        assert check_module_grads(head, lambda: (head(k) ** 2.0).sum(), [k]) <= TOL


class TestSegmenter:
    def test_stage_output_shapes(self):
        model = Segmenter(tiny_config())
        img = RNG.integers(0, 255, size=(64, 64, 3), dtype=np.uint8)
        outs = model.forward_image(img)
        assert len(outs) == 3
        for out in outs:
            assert out.mask_logits.shape == (8, 16, 16)
            assert out.class_logits.shape == (5, 3)

    def test_deterministic(self):
        model = Segmenter(tiny_config())
        img = RNG.integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
        a = model.forward_image(img)
        b = model.forward_image(img)
        for oa, ob in zip(a, b):
            npt.assert_array_equal(oa.mask_logits.numpy(), ob.mask_logits.numpy())
            npt.assert_array_equal(oa.class_logits.numpy(), ob.class_logits.numpy())

    def test_single_stage_config(self):
        model = Segmenter(tiny_config(stages=1))
        img = RNG.integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
        assert len(model.forward_image(img)) == 1

    def test_thing_permutation_equivariance(self):
        cfg = tiny_config()
        model = Segmenter(cfg, np.random.default_rng(5), dtype=np.float64)
        img = RNG.integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
        base = model.forward_image(img)
        perm = RNG.permutation(cfg.num_thing_kernels)
        bank = model.kernel_bank.data.copy()
        bank[: cfg.num_thing_kernels] = bank[perm]
        model.kernel_bank.data = bank
        permuted = model.forward_image(img)
        n = cfg.num_thing_kernels
        for ref, got in zip(base, permuted):
            npt.assert_allclose(got.mask_logits.numpy()[:n], ref.mask_logits.numpy()[perm], rtol=1e-5, atol=1e-8)
            npt.assert_allclose(got.mask_logits.numpy()[n:], ref.mask_logits.numpy()[n:], rtol=1e-5, atol=1e-8)
            npt.assert_allclose(got.class_logits.numpy(), ref.class_logits.numpy()[perm], rtol=1e-5, atol=1e-8)

    def test_indivisible_image_rejected(self):
        model = Segmenter(tiny_config())
        with pytest.raises(ConfigError):
            model.forward_image(RNG.integers(0, 255, size=(30, 32, 3), dtype=np.uint8))

    def test_positional_encoding_shape_and_range(self):
        pos = sinusoidal_positions(16, 7, 9)
        assert pos.shape == (16, 7, 9)
        assert np.all(np.abs(pos) <= 1.0 + 1e-6)
        assert not np.array_equal(pos[:, 0, 0], pos[:, 3, 5])


class TestEmbedHead:
    def test_forced_identity(self):
        head = EmbedHead(2, 2, np.random.default_rng(3), dtype=np.float64)
        identity_linear(head.proj)
        zero_linear(head.block1.lin2)
        zero_linear(head.block2.lin2)
        k = RNG.normal(size=(4, 2))
        npt.assert_array_equal(head(Tensor(k)).numpy(), k)

    def test_identical_rows_identical_embeddings(self):
        head = EmbedHead(6, 4, np.random.default_rng(4), dtype=np.float64)
        row = RNG.normal(size=6)
        out = head(Tensor(np.stack([row, row, row]))).numpy()
        npt.assert_allclose(out[0], out[1], rtol=1e-12)
        npt.assert_allclose(out[0], out[2], rtol=1e-12)

    def test_permutation_equivariance(self):
        head = EmbedHead(6, 4, np.random.default_rng(5), dtype=np.float64)
        k = RNG.normal(size=(5, 6))
        perm = RNG.permutation(5)
        npt.assert_allclose(head(Tensor(k[perm])).numpy(), head(Tensor(k)).numpy()[perm], rtol=1e-12)

    def test_grad(self):
        head = EmbedHead(4, 3, np.random.default_rng(6), dtype=np.float64)
        k = Tensor(RNG.normal(size=(2, 4)), requires_grad=True)
        assert check_module_grads(head, lambda: (head(k) ** 2.0).sum(), [k]) <= TOL


class TestKernelLinker:
    def make(self, channels=4, heads=1):
        return KernelLinker(channels, heads, 6, np.random.default_rng(7), dtype=np.float64)

    def test_reference_permutation_invariance(self):
        link = self.make()
        cur = RNG.normal(size=(5, 4))
        ref = RNG.normal(size=(5, 4))
        perm = RNG.permutation(5)
        a = link(Tensor(cur), Tensor(ref)).numpy()
        b = link(Tensor(cur), Tensor(ref[perm])).numpy()
        npt.assert_allclose(b, a, rtol=1e-5, atol=1e-10)

    def test_key_permutation_equivariance(self):
        link = self.make()
        cur = RNG.normal(size=(6, 4))
        ref = RNG.normal(size=(6, 4))
        perm = RNG.permutation(6)
        a = link(Tensor(cur), Tensor(ref)).numpy()
        b = link(Tensor(cur[perm]), Tensor(ref)).numpy()
        npt.assert_allclose(b, a[perm], rtol=1e-5, atol=1e-10)

    def test_uniform_reference_scalar_oracle(self):
        link = self.make(channels=2, heads=1)
        r = RNG.normal(size=2)
        ref = Tensor(np.tile(r, (4, 1)))
        cur = Tensor(RNG.normal(size=(3, 2)))
        got = link.attn(cur, ref, ref).numpy()
        attn = link.attn
        vp = r @ attn.proj_v.weight.numpy() + attn.proj_v.bias.numpy()
        expect = vp @ attn.proj_out.weight.numpy() + attn.proj_out.bias.numpy()
        npt.assert_allclose(got, np.tile(expect, (3, 1)), rtol=1e-10)

    def test_row_gating_passthrough(self):
        link = self.make()
        cur = RNG.normal(size=(4, 4))
        ref = RNG.normal(size=(4, 4))
        rows = np.array([True, False, True, False])
        out = link(Tensor(cur), Tensor(ref), cur_rows=rows).numpy()
        full = link(Tensor(cur), Tensor(ref)).numpy()
        npt.assert_array_equal(out[~rows], cur[~rows])
        npt.assert_array_equal(out[rows], full[rows])

    def test_all_reference_rows_hidden_rejected(self):
        link = self.make()
        with pytest.raises(ConfigError):
            link(Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 4))), ref_rows=np.zeros(2, dtype=bool))

    def test_channel_mismatch(self):
        link = self.make()
        with pytest.raises(ConfigError):
            link(Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 3))))

    def test_grad(self):
        link = self.make()
        cur = Tensor(RNG.normal(size=(3, 4)), requires_grad=True)
        ref = Tensor(RNG.normal(size=(3, 4)), requires_grad=True)
        assert check_module_grads(link, lambda: (link(cur, ref) ** 2.0).sum(), [cur, ref]) <= TOL


def numpy_fusion_reference(fuse: KernelFusion, prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    """Independent forward of the joint-attention path (update step skipped)."""
    joint = np.concatenate([prev, cur], axis=0)
    attn = fuse.attn
    qp = joint @ attn.proj_q.weight.numpy() + attn.proj_q.bias.numpy()
    kp = joint @ attn.proj_k.weight.numpy() + attn.proj_k.bias.numpy()
    vp = joint @ attn.proj_v.weight.numpy() + attn.proj_v.bias.numpy()
    scores = qp @ kp.T / np.sqrt(joint.shape[1])
    weights = np.exp(scores - scores.max(axis=-1, keepdims=True))
    weights /= weights.sum(axis=-1, keepdims=True)
    h = joint + (weights @ vp) @ attn.proj_out.weight.numpy() + attn.proj_out.bias.numpy()
    norm = fuse.ffn.norm
    mu = h.mean(axis=-1, keepdims=True)
    var = ((h - mu) ** 2).mean(axis=-1, keepdims=True)
    ln = (h - mu) / np.sqrt(var + norm.eps) * norm.gain.numpy() + norm.shift.numpy()
    hid = ln @ fuse.ffn.lin1.weight.numpy() + fuse.ffn.lin1.bias.numpy()
    hid = hid / (1.0 + np.exp(-hid))  # silu
    out = h + hid @ fuse.ffn.lin2.weight.numpy() + fuse.ffn.lin2.bias.numpy()
    return out[prev.shape[0] :]


class TestKernelFusion:
    def make(self, channels=4, heads=1):
        return KernelFusion(channels, heads, 6, np.random.default_rng(8), dtype=np.float64)

    def feat_and_logits(self, n, channels=4, side=3):
        vals = RNG.normal(size=(channels, side, side))
        logits = RNG.normal(size=(n, side, side))
        return feat_map(vals), Tensor(logits)

    def test_matches_numpy_reference(self):
        fuse = self.make(channels=2)
        fm, logits = self.feat_and_logits(1, channels=2)
        prev = RNG.normal(size=(1, 2))
        cur = RNG.normal(size=(1, 2))
        got = fuse(Tensor(prev), fm, logits, Tensor(cur), update_prev=False).numpy()
        npt.assert_allclose(got, numpy_fusion_reference(fuse, prev, cur), rtol=1e-12)

    def test_repeat_calls_identical(self):
        fuse = self.make()
        fm, logits = self.feat_and_logits(3)
        prev, cur = Tensor(RNG.normal(size=(3, 4))), Tensor(RNG.normal(size=(3, 4)))
        a = fuse(prev, fm, logits, cur).numpy()
        b = fuse(prev, fm, logits, cur).numpy()
        npt.assert_array_equal(a, b)

    def test_masked_prev_rows_have_no_influence(self):
        fuse = self.make()
        fm, logits = self.feat_and_logits(3)
        cur = Tensor(RNG.normal(size=(3, 4)))
        prev_a = Tensor(RNG.normal(size=(3, 4)))
        prev_b = Tensor(RNG.normal(size=(3, 4)))
        for update in (False, True):
            a = fuse(prev_a, fm, logits, cur, update_prev=update, attend_prev=False).numpy()
            b = fuse(prev_b, fm, logits, cur, update_prev=update, attend_prev=False).numpy()
            npt.assert_array_equal(a, b)

    def test_prev_influences_when_attended(self):
        fuse = self.make()
        fm, logits = self.feat_and_logits(3)
        cur = Tensor(RNG.normal(size=(3, 4)))
        a = fuse(Tensor(RNG.normal(size=(3, 4))), fm, logits, cur).numpy()
        b = fuse(Tensor(RNG.normal(size=(3, 4))), fm, logits, cur).numpy()
        assert not np.allclose(a, b)

    def test_update_flag_changes_result(self):
        fuse = self.make()
        fm, logits = self.feat_and_logits(2)
        prev, cur = Tensor(RNG.normal(size=(2, 4))), Tensor(RNG.normal(size=(2, 4)))
        with_update = fuse(prev, fm, logits, cur, update_prev=True).numpy()
        without = fuse(prev, fm, logits, cur, update_prev=False).numpy()
        assert not np.allclose(with_update, without)

    def test_shape_mismatch(self):
        fuse = self.make()
        fm, logits = self.feat_and_logits(2)
        with pytest.raises(ConfigError):
            fuse(Tensor(np.zeros((3, 4))), fm, logits, Tensor(np.zeros((2, 4))))

    def test_grad(self):
        fuse = self.make()
        fm, logits = self.feat_and_logits(2)
        fm.values.requires_grad = True
        logits.requires_grad = True
        prev = Tensor(RNG.normal(size=(2, 4)), requires_grad=True)
        cur = Tensor(RNG.normal(size=(2, 4)), requires_grad=True)
        fn = lambda: (fuse(prev, fm, logits, cur) ** 2.0).sum()
        assert check_module_grads(fuse, fn, [prev, cur, fm.values, logits]) <= TOL


class TestClipFusion:
    def make(self, layers=2):
        return ClipFusion(4, 1, 6, layers, np.random.default_rng(9), dtype=np.float64)

    def test_single_frame_clip_equals_refined_frame(self):
        clip_fuse = self.make()
        k = Tensor(RNG.normal(size=(3, 4)))
        clip, refined = clip_fuse([k])
        npt.assert_array_equal(clip.numpy(), refined[0].numpy())

    def test_identical_frames_mean_is_any_frame(self):
        clip_fuse = self.make()
        k = RNG.normal(size=(3, 4))
        clip, refined = clip_fuse([Tensor(k), Tensor(k), Tensor(k)])
        npt.assert_allclose(refined[0].numpy(), refined[1].numpy(), rtol=1e-12)
        npt.assert_allclose(clip.numpy(), refined[0].numpy(), rtol=1e-12)

    def test_forced_passthrough_gives_arithmetic_mean(self):
        clip_fuse = self.make(layers=3)
        for attn in clip_fuse.attns:
            zero_linear(attn.proj_out)
        for ffn in clip_fuse.ffns:
            zero_linear(ffn.lin2)
        a = RNG.normal(size=(1, 4))
        b = RNG.normal(size=(1, 4))
        clip, refined = clip_fuse([Tensor(a), Tensor(b)])
        npt.assert_array_equal(refined[0].numpy(), a)
        npt.assert_array_equal(refined[1].numpy(), b)
        npt.assert_allclose(clip.numpy(), (a + b) / 2.0, rtol=1e-15)

    def test_ragged_frames_rejected(self):
        clip_fuse = self.make()
        with pytest.raises(ConfigError):
            clip_fuse([Tensor(np.zeros((2, 4))), Tensor(np.zeros((3, 4)))])

    def test_grad(self):
        clip_fuse = self.make()
        a = Tensor(RNG.normal(size=(2, 4)), requires_grad=True)
        b = Tensor(RNG.normal(size=(2, 4)), requires_grad=True)

        def fn():
            clip, refined = clip_fuse([a, b])
            return (clip ** 2.0).sum() + (refined[0] ** 2.0).sum()

        assert check_module_grads(clip_fuse, fn, [a, b]) <= TOL


class TestVideoSegmenter:
    def test_pair_forward_shapes_and_determinism(self):
        model = VideoSegmenter(tiny_config())
        rng = np.random.default_rng(11)
        key = rng.integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
        ref = rng.integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
        out1 = model.forward_pair(key, ref)
        out2 = model.forward_pair(key, ref)
        assert len(out1.key) == len(out1.ref) == 3
        npt.assert_array_equal(out1.key_final.mask_logits.numpy(), out2.key_final.mask_logits.numpy())
        assert out1.key_final.mask_logits.shape == (8, 8, 8)

    def test_fusion_memory_feeds_next_frame(self):
        model = VideoSegmenter(tiny_config())
        rng = np.random.default_rng(12)
        img0 = rng.integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
        img1 = rng.integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
        f0 = model.forward_frame(img0)
        with_memory = model.forward_frame(img1, memory=f0.fuse_memory)
        without = model.forward_frame(img1)
        assert not np.allclose(
            with_memory.final.mask_logits.numpy(), without.final.mask_logits.numpy()
        )

    def test_fusion_disabled_ignores_memory(self):
        model = VideoSegmenter(tiny_config(use_fuse=False))
        rng = np.random.default_rng(13)
        img0 = rng.integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
        img1 = rng.integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
        f0 = model.forward_frame(img0)
        a = model.forward_frame(img1, memory=f0.fuse_memory)
        b = model.forward_frame(img1)
        npt.assert_array_equal(a.final.mask_logits.numpy(), b.final.mask_logits.numpy())

    def test_link_disabled_passthrough(self):
        model = VideoSegmenter(tiny_config(use_link=False))
        cur = Tensor(RNG.normal(size=(5, 16)).astype(np.float32))
        ref = Tensor(RNG.normal(size=(5, 16)).astype(np.float32))
        assert model.link_things(cur, ref) is cur

    def test_embed_disabled_raises(self):
        model = VideoSegmenter(tiny_config(use_embed=False))
        with pytest.raises(ConfigError):
            model.embed_things(Tensor(np.zeros((2, 16), dtype=np.float32)))

    def test_clip_forward(self):
        model = VideoSegmenter(tiny_config(clip_mode=True, clip_fusion_layers=2))
        rng = np.random.default_rng(14)
        frames = [rng.integers(0, 255, size=(32, 32, 3), dtype=np.uint8) for _ in range(3)]
        out = model.forward_clip(frames)
        assert out.clip_kernels.kernels.shape == (8, 16)
        assert out.class_logits.shape == (5, 3)
        assert len(out.frame_mask_logits) == 3
        assert out.frame_mask_logits[0].shape == (8, 8, 8)

    def test_clip_mode_off_raises(self):
        model = VideoSegmenter(tiny_config())
        with pytest.raises(ConfigError):
            model.forward_clip([np.zeros((32, 32, 3), dtype=np.uint8)])

    def test_state_roundtrip_preserves_forward(self):
        cfg = tiny_config()
        a = VideoSegmenter(cfg, np.random.default_rng(15))
        b = VideoSegmenter(cfg, np.random.default_rng(16))
        img = np.random.default_rng(17).integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
        before = b.forward_frame(img).final.mask_logits.numpy()
        b.load_state_dict(a.state_dict())
        after_a = a.forward_frame(img).final.mask_logits.numpy()
        after_b = b.forward_frame(img).final.mask_logits.numpy()
        npt.assert_array_equal(after_a, after_b)
        assert not np.array_equal(before, after_b)


class TestModelConfig:
    def test_rejects_bad_heads(self):
        with pytest.raises(ConfigError):
            tiny_config(heads=3).check()

    def test_rejects_link_stage_out_of_range(self):
        with pytest.raises(ConfigError):
            tiny_config(link_stage=4).check()

    def test_rejects_overlapping_classes(self):
        with pytest.raises(ConfigError):
            tiny_config(thing_classes=(1, 2), stuff_classes=(2, 3)).check()

    def test_roundtrip_dict(self):
        cfg = tiny_config(use_link=False, link_stage=2)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_rejects_unknown_keys(self):
        with pytest.raises(ConfigError):
            ModelConfig.from_dict({"bogus": 1})

    def test_fusion_stage_defaults_to_last(self):
        assert tiny_config().fusion_stage == 3
        assert tiny_config(link_stage=1).fusion_stage == 1


class TestKernelSet:
    def test_validate_role_layout(self):
        ks = KernelSet(kernels=Tensor(np.zeros((5, 4), dtype=np.float32)), roles=make_roles(3, (7, 9)))
        ks.validate((7, 9))
        with pytest.raises(ValueError):
            ks.validate((9, 7))

    def test_row_count_mismatch(self):
        with pytest.raises(ValueError):
            KernelSet(kernels=Tensor(np.zeros((4, 4), dtype=np.float32)), roles=make_roles(2, (7,)))

import numpy as np
import pytest

from habitmask import autodiff as ad
from habitmask.autodiff import Tensor
from habitmask.errors import ContractError, ShapeError
from habitmask.rgb_net import RgbNet, temporal_subsample


class TestTemporalSubsample:
    def test_keeps_every_stride_th_frame(self):
        clip = np.arange(2 * 8 * 2 * 2, dtype=np.float64).reshape(2, 8, 2, 2)
        out = temporal_subsample(clip, 4)
        np.testing.assert_array_equal(out, clip[:, ::4])
        assert out.shape[1] == 2

    def test_stride_one_identity(self):
        clip = np.random.default_rng(0).uniform(0, 1, (3, 6, 4, 4))
        np.testing.assert_array_equal(temporal_subsample(clip, 1), clip)

    def test_batched_rank5(self):
        clip = np.random.default_rng(1).uniform(0, 1, (2, 3, 8, 4, 4))
        out = temporal_subsample(clip, 2)
        np.testing.assert_array_equal(out, clip[:, :, ::2])

    def test_tensor_input_keeps_gradient_path(self):
        x = Tensor(np.random.default_rng(2).uniform(0, 1, (1, 3, 4, 2, 2)), requires_grad=True)
        out = temporal_subsample(x, 2)
        ad.backprop(ad.sum_(out))
        # only the kept frames receive gradient
        assert np.all(x.grad[:, :, ::2] == 1.0)
        assert np.all(x.grad[:, :, 1::2] == 0.0)

    def test_nondivisible_stride(self):
        with pytest.raises(ContractError):
            temporal_subsample(np.zeros((3, 7, 4, 4)), 2)

    def test_bad_rank(self):
        with pytest.raises(ShapeError):
            temporal_subsample(np.zeros((3, 4, 4)), 2)


class TestRgbNet:
    def make_net(self, **kw):
        kw.setdefault("full_channels", (2, 3))
        kw.setdefault("sub_channels", (3, 4))
        return RgbNet(num_classes=5, **kw)

    def test_forward_shapes(self):
        net = self.make_net()
        x = np.random.default_rng(3).uniform(0, 1, (2, 3, 8, 16, 16)).astype(np.float32)
        out = net.forward(x)
        assert out.logits.shape == (2, 5)
        assert out.feature.shape == (2, net.feature_dim)
        assert net.feature_dim == 3 + 4

    def test_deterministic_per_seed(self):
        x = np.random.default_rng(4).uniform(0, 1, (1, 3, 8, 16, 16))
        a = self.make_net(seed=1).forward(x).logits.data
        b = self.make_net(seed=1).forward(x).logits.data
        c = self.make_net(seed=2).forward(x).logits.data
        np.testing.assert_array_equal(a, b)
        assert not np.allclose(a, c)

    def test_rejects_wrong_channels(self):
        with pytest.raises(ShapeError):
            self.make_net().forward(np.zeros((1, 4, 8, 16, 16)))

    def test_rejects_rank4(self):
        with pytest.raises(ShapeError):
            self.make_net().forward(np.zeros((3, 8, 16, 16)))

    def test_translation_invariant_feature(self):
        # global mean pooling: a spatially shifted input yields the same
        # feature when the content wraps cleanly (uniform background)
        net = self.make_net(seed=5)
        rng = np.random.default_rng(5)
        x = np.full((1, 3, 8, 16, 16), 0.5)
        out1 = net.forward(x).feature.data
        out2 = net.forward(np.roll(x, 4, axis=3)).feature.data
        np.testing.assert_allclose(out1, out2, atol=1e-6)

    def test_param_roundtrip(self):
        net = self.make_net(seed=6)
        table = {k: v.data.copy() for k, v in net.params().items()}
        other = self.make_net(seed=99)
        other.load_params(table)
        x = np.random.default_rng(6).uniform(0, 1, (1, 3, 8, 16, 16))
        np.testing.assert_array_equal(net.forward(x).logits.data, other.forward(x).logits.data)

    def test_load_rejects_bad_shape(self):
        net = self.make_net()
        table = {k: v.data.copy() for k, v in net.params().items()}
        table["head_w"] = table["head_w"][:, :2]
        with pytest.raises(ShapeError):
            self.make_net().load_params(table)

    def test_gradients_flow_to_all_params(self):
        net = self.make_net(seed=7, dtype=np.float64)
        x = np.random.default_rng(7).uniform(0, 1, (2, 3, 8, 16, 16))
        loss = ad.cross_entropy(net.forward(x).logits, [0, 1])
        ad.backprop(loss)
        for name, p in net.params().items():
            assert np.any(p.grad != 0), f"no gradient reached {name}"

    def test_fast_pathway_sees_subsampled_frames_only(self):
        # altering a frame skipped by the fast pathway leaves fb unchanged
        net = self.make_net(seed=8, fast_stride=4)
        rng = np.random.default_rng(8)
        x = rng.uniform(0, 1, (1, 3, 8, 16, 16))
        x2 = x.copy()
        x2[:, :, 1] = rng.uniform(0, 1, (1, 3, 16, 16))  # frame 1 not in 0,4
        cb2 = net.b2.w.shape[0]
        fb1 = net.forward(x).feature.data[:, -cb2:]
        fb2 = net.forward(x2).feature.data[:, -cb2:]
        np.testing.assert_allclose(fb1, fb2, atol=1e-12)

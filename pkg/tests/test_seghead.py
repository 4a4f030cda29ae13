"""Segmentation head: logits contract, linearity, scalar oracle."""

import math

import numpy as np
import pytest

from pvlseg import tensor as T
from pvlseg.encoders import ConfigurationError
from pvlseg.seghead import (
    init_seg_head,
    mask_probability,
    seg_logits,
    text_mask_embedding,
    upscale_channel_plan,
)
from gradcheck import assert_grad_matches


def make_head(dv=8, dt=8, out=16, blocks=1, seed=0):
    return init_seg_head(dv, dt, out, out, blocks, T.Rng(seed))


class TestSegLogits:
    def test_output_shape_for_any_block_count(self):
        rng = np.random.default_rng(0)
        patches = T.Tensor(rng.normal(size=(2, 4, 8)))
        eos = T.Tensor(rng.normal(size=(2, 8)))
        for blocks in (0, 1, 2, 3):
            head = make_head(blocks=blocks, seed=blocks)
            m = seg_logits(head, patches, eos)
            assert m.shape == (2, 16, 16)

    def test_channel_plan_halves_with_floor(self):
        assert upscale_channel_plan(128, 2) == [128, 64, 32]
        assert upscale_channel_plan(128, 3) == [128, 64, 32, 32]
        assert upscale_channel_plan(40, 1) == [40, 32]

    def test_zero_text_embedding_zeroes_logits(self):
        head = make_head(seed=1)
        # zero phi output regardless of input
        head.phi_w2.data[:] = 0.0
        head.phi_b2.data[:] = 0.0
        rng = np.random.default_rng(1)
        patches = T.Tensor(rng.normal(size=(1, 4, 8)))
        eos = T.Tensor(rng.normal(size=(1, 8)))
        m = seg_logits(head, patches, eos)
        np.testing.assert_allclose(m.data, 0.0, atol=1e-12)

    def test_logits_linear_in_text_embedding(self):
        head = make_head(seed=2)
        rng = np.random.default_rng(2)
        patches = T.Tensor(rng.normal(size=(1, 4, 8)))
        eos = T.Tensor(rng.normal(size=(1, 8)))
        m1 = seg_logits(head, patches, eos).data
        # doubling phi's output doubles every logit
        head.phi_w2.data *= 2.0
        head.phi_b2.data *= 2.0
        m2 = seg_logits(head, patches, eos).data
        np.testing.assert_allclose(m2, 2.0 * m1, atol=1e-10)

    def test_single_patch_scalar_oracle(self):
        # P=1, zero upscale blocks: logit is <psi(v), phi(t)> where psi is
        # the identity on the normalized patch vector
        head = make_head(dv=3, dt=2, out=4, blocks=0, seed=3)
        v = np.array([[1.0, 2.0, -2.0]])
        t = np.array([[0.6, -0.8]])
        m = seg_logits(head, T.Tensor(v[None]), T.Tensor(t)).data

        # independent scalar path
        vn = v[0] / math.sqrt(sum(x * x for x in v[0]))
        tn = t[0] / math.sqrt(sum(x * x for x in t[0]))
        h = [sum(tn[i] * head.phi_w1.data[i, j] for i in range(2)) + head.phi_b1.data[j]
             for j in range(2)]
        gelu = [0.5 * x * (1 + math.erf(x / math.sqrt(2))) for x in h]
        phi = [sum(gelu[i] * head.phi_w2.data[i, j] for i in range(2)) + head.phi_b2.data[j]
               for j in range(3)]
        expected = sum(vn[c] * phi[c] for c in range(3))
        np.testing.assert_allclose(m, expected, atol=1e-12)

    def test_non_square_patch_count_rejected(self):
        head = make_head()
        with pytest.raises(ConfigurationError):
            seg_logits(head, T.Tensor(np.zeros((1, 3, 8))), T.Tensor(np.zeros((1, 8))))

    def test_gradients_reach_all_head_params(self):
        head = make_head(blocks=2, seed=4)
        rng = np.random.default_rng(4)
        patches = T.Tensor(rng.normal(size=(1, 4, 8)))
        eos = T.Tensor(rng.normal(size=(1, 8)))
        loss = T.sum_axes(T.square(seg_logits(head, patches, eos)))
        loss.backward()
        for name, p in head.tensors().items():
            assert p.grad is not None, name
            assert np.isfinite(p.grad).all(), name

    def test_conv_weight_gradcheck_through_head(self):
        head = make_head(dv=4, dt=4, out=8, blocks=1, seed=5)
        rng = np.random.default_rng(5)
        patches = rng.normal(size=(1, 4, 4))
        eos = rng.normal(size=(1, 4))
        x0 = head.conv_w[0].data.copy()

        def build(p):
            head.conv_w[0] = p
            return T.sum_axes(T.square(seg_logits(head, T.Tensor(patches), T.Tensor(eos))))

        assert_grad_matches(build, x0, rtol=1e-4)
        head.conv_w[0] = T.parameter(x0)


class TestMaskProbability:
    def test_analytic_points(self):
        p = mask_probability(T.Tensor(np.array([0.0, 50.0]))).data
        assert abs(p[0] - 0.5) < 1e-15
        assert abs(p[1] - 1.0) < 1e-9

    def test_monotone(self):
        xs = np.linspace(-20, 20, 101)
        p = mask_probability(T.Tensor(xs)).data
        assert (np.diff(p) >= 0).all()


class TestTextMaskEmbedding:
    def test_output_width_matches_channel_plan(self):
        head = make_head(dv=8, dt=6, blocks=2, seed=6)
        out = text_mask_embedding(head, T.Tensor(np.ones((2, 6))))
        assert out.shape == (2, upscale_channel_plan(8, 2)[-1])

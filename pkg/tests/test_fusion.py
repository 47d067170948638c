#!/usr/bin/env python3
"""
Tests for the fusion module.

This script tests the anchor, positive and negative commonsense fusion.
"""

import os
import sys
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

# Add the parent directory to the path so we can import from vchgcl
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from vchgcl.core.errors import DegenerateInputError, ShapeError
from vchgcl.core.schemas import ModelConfig
from vchgcl.model.fusion import (
    Box,
    ObjectFrame,
    anchor_raw,
    build_triplet,
    fuse_anchor,
    init_fusion_params,
    make_negative,
    make_positive,
    negative_raw,
    noise_sigma,
    perturb,
)
from vchgcl.tensor import ParameterStore, Tensor


def frame(f_vc, f_o):
    f_vc, f_o = np.atleast_2d(f_vc), np.atleast_2d(f_o)
    return ObjectFrame(f_o=f_o, f_vc=f_vc, bboxes=[(0, 0, 1, 1)] * f_o.shape[0])


class TestAnchorFusion(unittest.TestCase):
    """Test cases for fuse_anchor."""

    def test_identity_projection_preserves_concatenation(self):
        out = fuse_anchor(frame([1.0, 2.0], [3.0, 4.0]), Tensor(np.eye(4)), Tensor(np.zeros(4)))
        assert_allclose(out.fused.data, [[1.0, 2.0, 3.0, 4.0]])
        assert_allclose(out.raw.data, [[1.0, 2.0, 3.0, 4.0]])

    def test_bias_only(self):
        f = frame(np.ones((3, 2)), np.ones((3, 2)) * 5)
        out = fuse_anchor(f, Tensor(np.zeros((4, 2))), Tensor([1.0, 2.0])).fused
        assert_allclose(out.data, np.tile([1.0, 2.0], (3, 1)))

    def test_hand_affine(self):
        out = fuse_anchor(frame([5.0], [7.0]), Tensor([[2.0], [3.0]]), Tensor([1.0])).fused
        assert_allclose(out.data, [[32.0]])

    def test_frame_validation(self):
        with self.assertRaises(ShapeError):
            ObjectFrame(f_o=np.ones((2, 3)), f_vc=np.ones((3, 2)), bboxes=[(0, 0, 1, 1)] * 2)
        with self.assertRaises(ShapeError):
            ObjectFrame(f_o=np.ones((2, 3)), f_vc=np.ones((2, 2)), bboxes=[(0, 0, 1, 1)])
        with self.assertRaises(DegenerateInputError):
            ObjectFrame(f_o=np.ones((1, 3)), f_vc=np.ones((1, 2)), bboxes=[(2, 0, 1, 1)])

    def test_box_area(self):
        self.assertEqual(Box(0, 0, 2, 3).area, 6)


class TestContrastiveSamples(unittest.TestCase):
    """Test cases for the positive and negative samples."""

    def test_noise_scale_is_population_std(self):
        self.assertAlmostEqual(noise_sigma(Tensor([[1.0, 3.0]])), 1.0)

    def test_constant_anchor_gives_no_noise(self):
        raw = Tensor(np.full((2, 4), 0.5))
        assert_array_equal(perturb(raw, rng_seed=3).data, raw.data)

    def test_positive_is_deterministic_per_seed(self):
        raw = anchor_raw(frame(np.random.default_rng(0).standard_normal((3, 2)),
                               np.random.default_rng(1).standard_normal((3, 4))))
        w, b = Tensor(np.random.default_rng(2).standard_normal((6, 5))), Tensor(np.zeros(5))
        first = make_positive(raw, w, b, rng_seed=[0, 7])
        assert_array_equal(first.data, make_positive(raw, w, b, rng_seed=[0, 7]).data)
        self.assertFalse(np.array_equal(first.data, make_positive(raw, w, b, rng_seed=[0, 8]).data))

    def test_fixed_sigma(self):
        raw = Tensor(np.zeros((50, 40)))
        noisy = perturb(raw, rng_seed=0, sigma=2.0).data
        self.assertAlmostEqual(noisy.std(), 2.0, delta=0.1)

    def test_negative_zeroes_commonsense_slots(self):
        f = frame(np.random.default_rng(0).standard_normal((4, 3)), np.ones((4, 2)))
        assert_array_equal(negative_raw(f).data[:, :3], np.zeros((4, 3)))

    def test_negative_identity(self):
        out = make_negative(frame([9.0, 9.0], [3.0, 4.0]), Tensor(np.eye(4)), Tensor(np.zeros(4)))
        assert_allclose(out.data, [[0.0, 0.0, 3.0, 4.0]])

    def test_negative_zero_input(self):
        c = np.array([0.5, -1.0])
        out = make_negative(frame(np.ones((3, 2)), np.zeros((3, 2))), Tensor(np.ones((4, 2))), Tensor(c))
        assert_allclose(out.data, np.tile(c, (3, 1)))

    def test_triplet_shapes(self):
        store = ParameterStore(seed=0)
        config = ModelConfig(d_vc=2, d_o=3, d=4)
        anchor, positive, negative = init_fusion_params(store, config, contrastive=True)
        f = frame(np.ones((5, 2)), np.ones((5, 3)))
        triplet = build_triplet(f, anchor, positive, negative, rng_seed=0)
        self.assertEqual(triplet.anchor.shape, (5, 4))
        self.assertEqual(triplet.negative.shape, (5, 4))


class TestFusionParams(unittest.TestCase):
    """Test cases for parameter registration."""

    def test_without_contrastive_path(self):
        store = ParameterStore(seed=0)
        anchor, positive, negative = init_fusion_params(store, ModelConfig(), contrastive=False)
        self.assertIsNone(positive)
        self.assertIsNone(negative)
        self.assertEqual(store.names(), ["fusion.W", "fusion.b"])

    def test_separate_projections(self):
        store = ParameterStore(seed=0)
        config = ModelConfig()
        init_fusion_params(store, config, contrastive=True)
        self.assertEqual(store.group_counts()["contrastive"], 2 * ((config.d_vc + config.d_o) * config.d + config.d))

    def test_shared_projections(self):
        store = ParameterStore(seed=0)
        anchor, positive, negative = init_fusion_params(store, ModelConfig(share_fusion_weights=True), True)
        self.assertIs(positive, anchor)
        self.assertIs(negative, anchor)
        self.assertNotIn("contrastive", store.group_counts())


if __name__ == "__main__":
    unittest.main()

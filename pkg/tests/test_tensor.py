#!/usr/bin/env python3
"""
Tests for the tensor module.

This script tests reverse-mode differentiation, the numerically guarded
operations, gradient checking and the parameter store.
"""

import os
import sys
import shutil
import tempfile
import unittest

import numpy as np
from numpy.testing import assert_allclose

# Add the parent directory to the path so we can import from vchgcl
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from vchgcl.core.errors import ContractError, DegenerateInputError, NumericError, ShapeError
from vchgcl.tensor import (
    ParameterStore,
    Tensor,
    broadcast_to,
    concat,
    cosine_similarity,
    gradient_check,
    graph_leaves,
    layer_norm,
    load_snapshot,
    matmul,
    parameter,
    save_snapshot,
    softmax,
    tape_size,
)
from vchgcl.tensor.gradcheck import check_parameters, max_relative_error


class TestAutograd(unittest.TestCase):
    """Test cases for Tensor and its operations."""

    def test_backward_accumulates(self):
        """Two backward passes over the same graph double the gradient."""
        x = parameter([1.0, -2.0, 3.0])
        loss = (x * x).sum()
        loss.backward()
        first = x.grad.copy()
        assert_allclose(first, [2.0, -4.0, 6.0])

        (x * x).sum().backward()
        assert_allclose(x.grad, 2 * first)

    def test_shared_subexpression(self):
        """A node used twice receives the sum of both contributions."""
        x = parameter(2.0)
        y = x * 3.0
        (y * y + y).backward()
        # d/dx (9x^2 + 3x) = 18x + 3
        self.assertAlmostEqual(float(x.grad), 39.0)

    def test_broadcast_gradient(self):
        """Broadcast operands receive gradients summed to their own shape."""
        bias = parameter(np.zeros(3))
        matrix = Tensor(np.ones((4, 3)))
        (matrix + bias).sum().backward()
        assert_allclose(bias.grad, [4.0, 4.0, 4.0])

    def test_matmul_shape_error_names_both_shapes(self):
        with self.assertRaises(ShapeError) as ctx:
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
        self.assertIn("(2, 3)", str(ctx.exception))
        self.assertIn("(4, 5)", str(ctx.exception))

    def test_batched_matmul(self):
        a = np.random.default_rng(0).standard_normal((2, 3, 4))
        b = np.random.default_rng(1).standard_normal((4, 5))
        assert_allclose(matmul(Tensor(a), Tensor(b)).data, np.matmul(a, b))

    def test_softmax_large_logits(self):
        """Softmax subtracts the max, so huge equal logits stay finite."""
        assert_allclose(softmax(Tensor([1000.0, 1000.0])).data, [0.5, 0.5])
        rows = softmax(Tensor(np.random.default_rng(0).standard_normal((5, 7)) * 50), axis=-1).data
        assert_allclose(rows.sum(axis=-1), np.ones(5), atol=1e-12)

    def test_softmax_rejects_nan(self):
        with self.assertRaises(NumericError):
            softmax(Tensor([0.0, np.nan]))

    def test_cosine_similarity(self):
        self.assertAlmostEqual(cosine_similarity(Tensor([1.0, 0.0]), Tensor([2.0, 0.0])).item(), 1.0)
        self.assertAlmostEqual(cosine_similarity(Tensor([1.0, 0.0]), Tensor([-3.0, 0.0])).item(), -1.0)
        self.assertAlmostEqual(cosine_similarity(Tensor([1.0, 0.0]), Tensor([0.0, 5.0])).item(), 0.0)

    def test_cosine_similarity_zero_norm(self):
        with self.assertRaises(DegenerateInputError):
            cosine_similarity(Tensor([0.0, 0.0]), Tensor([1.0, 2.0]))

    def test_division_by_tensor_is_rejected(self):
        with self.assertRaises(ContractError):
            Tensor([1.0]) / Tensor([2.0])
        assert_allclose((Tensor([3.0]) / 2.0).data, [1.5])

    def test_backward_needs_scalar(self):
        x = parameter([1.0, 2.0])
        with self.assertRaises(ContractError):
            (x * 2.0).backward()

    def test_item_needs_single_element(self):
        self.assertEqual(Tensor([[4.0]]).item(), 4.0)
        with self.assertRaises(ContractError):
            Tensor([1.0, 2.0]).item()

    def test_untracked_operations_keep_no_tape(self):
        out = (Tensor([1.0, 2.0]) * 3.0).sum()
        self.assertEqual(tape_size(out), 1)
        self.assertFalse(out.requires_grad)

    def test_graph_leaves(self):
        a, b = parameter([1.0], name="a"), parameter([2.0], name="b")
        out = (a * b + Tensor([1.0])).sum()
        self.assertEqual({leaf.name for leaf in graph_leaves(out)}, {"a", "b"})

    def test_concat_and_getitem_gradients(self):
        x = parameter(np.arange(6.0).reshape(2, 3))
        y = concat([x, x[:, :1]], axis=1)
        self.assertEqual(y.shape, (2, 4))
        y.sum().backward()
        assert_allclose(x.grad, [[2.0, 1.0, 1.0], [2.0, 1.0, 1.0]])

    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            logits = rng.standard_normal((3, 6)) * 4
            shift = rng.uniform(-100.0, 100.0, size=(3, 1))
            assert_allclose(softmax(Tensor(logits + shift), axis=-1).data, softmax(Tensor(logits), axis=-1).data,
                            atol=1e-12)

    def test_cosine_scale_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            a, b = rng.standard_normal(4), rng.standard_normal(4)
            s, t = rng.uniform(0.01, 100.0, size=2)
            self.assertAlmostEqual(cosine_similarity(Tensor(a * s), Tensor(b * t)).item(),
                                   cosine_similarity(Tensor(a), Tensor(b)).item(), delta=1e-12)

    def test_broadcast_to(self):
        x = parameter([[1.0], [2.0]])
        y = broadcast_to(x, (3, 2, 4))
        self.assertEqual(y.shape, (3, 2, 4))
        (y * Tensor(np.arange(24.0).reshape(3, 2, 4))).sum().backward()
        assert_allclose(x.grad, np.arange(24.0).reshape(3, 2, 4).sum(axis=(0, 2), keepdims=False).reshape(2, 1))
        with self.assertRaises(ShapeError):
            broadcast_to(Tensor(np.ones(3)), (2, 4))

    def test_layer_norm_statistics(self):
        x = Tensor(np.random.default_rng(3).standard_normal((4, 6)) * 5 + 2)
        out = layer_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6)), eps=0.0).data
        assert_allclose(out.mean(axis=-1), np.zeros(4), atol=1e-12)
        assert_allclose(out.std(axis=-1), np.ones(4), atol=1e-9)


class TestGradientCheck(unittest.TestCase):
    """Test cases for finite-difference verification."""

    def test_relative_error_floor(self):
        self.assertEqual(max_relative_error(np.zeros(3), np.zeros(3)), 0.0)
        self.assertAlmostEqual(max_relative_error(np.array([1.0]), np.array([1.1])), 0.1 / 1.1)

    def test_composite_function(self):
        weights = np.random.default_rng(0).standard_normal((3, 4))
        err = gradient_check(lambda t: (softmax(t, axis=-1) * weights).sum() + t.tanh().sum(),
                             np.random.default_rng(1).standard_normal((3, 4)))
        self.assertLess(err, 1e-6)

    def test_check_parameters_restores_values(self):
        store = ParameterStore(seed=0)
        w = store.create("layer.w", (3, 2))
        before = w.data.copy()
        x = Tensor(np.random.default_rng(2).standard_normal((4, 3)))
        errors = check_parameters(lambda: matmul(x, w).tanh().sum(), store)
        self.assertLess(errors["layer.w"], 1e-6)
        assert_allclose(w.data, before)

    def test_invalid_step(self):
        with self.assertRaises(ContractError):
            gradient_check(lambda t: t.sum(), [1.0], h=0.0)


class TestParameterStore(unittest.TestCase):
    """Test cases for parameter registration and snapshots."""

    @classmethod
    def setUpClass(cls):
        cls.temp_dir = tempfile.mkdtemp()

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.temp_dir)

    def test_initialization_depends_on_seed_and_name(self):
        a, b = ParameterStore(seed=7), ParameterStore(seed=7)
        b.create("other.w", (2, 2))
        assert_allclose(a.create("fusion.W", (4, 3)).data, b.create("fusion.W", (4, 3)).data)
        self.assertFalse(np.allclose(ParameterStore(seed=8).create("fusion.W", (4, 3)).data,
                                     a["fusion.W"].data))

    def test_uniform_bound(self):
        w = ParameterStore(seed=0).create("w", (16, 50))
        self.assertLessEqual(np.abs(w.data).max(), 1.0 / np.sqrt(16))

    def test_duplicate_name(self):
        store = ParameterStore()
        store.create("x", (1,))
        with self.assertRaises(ContractError):
            store.create("x", (1,))

    def test_group_counts(self):
        store = ParameterStore()
        store.create("fusion.W", (3, 2))
        store.create("fusion.b", (2,), fan_in=3)
        store.create("head.out.w", (2, 2))
        self.assertEqual(store.group_counts(), {"fusion": 8, "head": 4})

    def test_snapshot_layout_and_reload(self):
        store = ParameterStore(seed=1)
        store.create("a.w", (2, 3))
        store.create("a.b", (3,), init="zeros")
        path = store.save(os.path.join(self.temp_dir, "params.vchg"))

        with open(path, "rb") as f:
            blob = f.read()
        self.assertEqual(blob[:5], b"VCHG\x01")
        # header + two records: name length, name, rank, extents, data
        expected = 5 + (4 + 3 + 4 + 16 + 48) + (4 + 3 + 4 + 8 + 24)
        self.assertEqual(len(blob), expected)

        loaded = load_snapshot(path)
        self.assertEqual(list(loaded), ["a.w", "a.b"])
        assert_allclose(loaded["a.w"], store["a.w"].data)

        fresh = ParameterStore(seed=99)
        fresh.create("a.w", (2, 3))
        fresh.create("a.b", (3,))
        fresh.load_state(loaded)
        assert_allclose(fresh["a.w"].data, store["a.w"].data)

    def test_load_state_mismatch(self):
        store = ParameterStore()
        store.create("a", (2,))
        with self.assertRaises(ContractError):
            store.load_state({"b": np.zeros(2)})
        with self.assertRaises(ShapeError):
            store.load_state({"a": np.zeros(3)})

    def test_bad_magic(self):
        path = os.path.join(self.temp_dir, "bogus.bin")
        with open(path, "wb") as f:
            f.write(b"NOPE\x01")
        with self.assertRaises(ContractError):
            load_snapshot(path)

    def test_truncated_header(self):
        for index, header in enumerate([b"", b"VC", b"VCHG"]):
            path = os.path.join(self.temp_dir, f"short{index}.bin")
            with open(path, "wb") as f:
                f.write(header)
            with self.assertRaises(ContractError):
                load_snapshot(path)

    def test_missing_snapshot(self):
        with self.assertRaises(ContractError):
            load_snapshot(os.path.join(self.temp_dir, "absent.vchg"))

    def test_save_snapshot_function(self):
        path = save_snapshot({"x": np.eye(2)}, os.path.join(self.temp_dir, "nested", "x.vchg"))
        assert_allclose(load_snapshot(path)["x"], np.eye(2))


if __name__ == "__main__":
    unittest.main()

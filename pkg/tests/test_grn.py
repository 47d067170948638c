#!/usr/bin/env python3
"""
Tests for the grn module.

This script tests IoU gating, edge scoring, aggregation and the graph head.
"""

import os
import sys
import unittest
from dataclasses import replace

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

# Add the parent directory to the path so we can import from vchgcl
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from vchgcl.core.errors import ContractError, ShapeError
from vchgcl.model.encoders import AttentionParams
from vchgcl.model.grn import (
    HeteroGraph,
    NodeKind,
    aggregate_and_update,
    build_graph,
    edge_scores,
    gate_edges,
    graph_head,
    init_grn_params,
    iou,
    mlp_relation,
    pairwise_iou,
    relate,
)
from vchgcl.model.layers import MLPParams
from vchgcl.tensor import ParameterStore, Tensor

V, T = NodeKind.VISUAL, NodeKind.TEXT


def brute_force_overlap(a, b):
    """Reference intersection test on integer grids of unit cells."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    return max(ax0, bx0) < min(ax1, bx1) and max(ay0, by0) < min(ay1, by1)


class TestIoU(unittest.TestCase):
    """Test cases for box overlap."""

    def test_examples(self):
        self.assertEqual(iou((0, 0, 2, 2), (0, 0, 2, 2)), 1.0)
        self.assertEqual(iou((0, 0, 1, 1), (2, 2, 3, 3)), 0.0)
        self.assertAlmostEqual(iou((0, 0, 2, 2), (1, 1, 3, 3)), 1.0 / 7.0, delta=1e-12)

    def test_touching_boxes_do_not_overlap(self):
        self.assertEqual(iou((0, 0, 1, 1), (1, 0, 2, 1)), 0.0)

    def test_gate_decisions_match_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            corners = rng.integers(0, 10, size=(2, 2, 2))
            a = (*np.min(corners[0], axis=0), *(np.max(corners[0], axis=0) + 1))
            b = (*np.min(corners[1], axis=0), *(np.max(corners[1], axis=0) + 1))
            self.assertEqual(iou(a, b) > 0, brute_force_overlap(a, b))

    def test_pairwise_matches_scalar(self):
        boxes = [(0, 0, 2, 2), (1, 1, 3, 3), (5, 5, 6, 6), (0, 0, 2, 2)]
        matrix = pairwise_iou(boxes)
        for i, a in enumerate(boxes):
            for j, b in enumerate(boxes):
                self.assertAlmostEqual(matrix[i, j], iou(a, b), delta=1e-12)


class TestEdges(unittest.TestCase):
    """Test cases for edge scoring and gating."""

    def test_constant_map(self):
        d = 3
        mlp = MLPParams(layers=[(Tensor(np.zeros((2 * d, 4))), Tensor(np.zeros(4))),
                                (Tensor(np.zeros((4, 1))), Tensor([0.7]))])
        scores = edge_scores(Tensor(np.random.default_rng(0).standard_normal((5, d))), mlp)
        assert_allclose(scores.data, np.full((5, 5), 0.7))

    def test_identical_nodes(self):
        params = init_grn_params(ParameterStore(seed=0), 3)
        node = np.array([0.2, -0.4, 1.0])
        scores = edge_scores(Tensor(np.stack([node, node, node])), params.mlp_r).data
        self.assertEqual(scores[0, 1], scores[0, 2])

    def test_sum_of_inputs(self):
        mlp = MLPParams(layers=[(Tensor([[1.0], [1.0]]), Tensor([0.0]))])
        scores = edge_scores(Tensor([[1.0], [2.0]]), mlp).data
        self.assertEqual(scores[0, 1], 3.0)
        self.assertEqual(scores[1, 0], 3.0)

    def test_single_node(self):
        params = init_grn_params(ParameterStore(seed=0), 3)
        with self.assertRaises(ContractError):
            edge_scores(Tensor(np.ones((1, 3))), params.mlp_r)

    def graph(self, boxes, n_text=1, edges=None):
        n = len(boxes) + n_text
        return HeteroGraph(nodes=Tensor(np.zeros((n, 2))), node_kind=[V] * len(boxes) + [T] * n_text,
                           edges=Tensor(edges if edges is not None else np.ones((n, n))), bboxes=boxes)

    def test_identical_boxes(self):
        gated = gate_edges(self.graph([(0, 0, 2, 2)] * 3))
        assert_array_equal(gated.edges.data, np.ones((4, 4)))
        self.assertTrue(gated.gated)

    def test_disjoint_pair(self):
        gated = gate_edges(self.graph([(0, 0, 1, 1), (2, 2, 3, 3)])).edges.data
        self.assertEqual(gated[0, 1], 0.0)
        self.assertEqual(gated[1, 0], 0.0)
        # text edges are never gated
        self.assertEqual(gated[0, 2], 1.0)
        self.assertEqual(gated[2, 1], 1.0)

    def test_mixed_case(self):
        boxes = [(0, 0, 2, 2), (1, 1, 3, 3), (5, 5, 6, 6)]
        edges = np.random.default_rng(0).standard_normal((5, 5))
        gated = gate_edges(self.graph(boxes, n_text=2, edges=edges)).edges.data
        for i in range(5):
            for j in range(5):
                both_visual = i < 3 and j < 3
                cut = both_visual and iou(boxes[i], boxes[j]) == 0.0
                self.assertEqual(gated[i, j], 0.0 if cut else edges[i, j])

    def test_no_boxes_is_identity(self):
        graph = HeteroGraph(nodes=Tensor(np.zeros((3, 2))), node_kind=[V, V, T], edges=Tensor(np.ones((3, 3))))
        assert_array_equal(gate_edges(graph).edges.data, np.ones((3, 3)))

    def test_box_count_mismatch(self):
        with self.assertRaises(ShapeError):
            build_graph(Tensor(np.ones((2, 3))), Tensor(np.ones((1, 3))), bboxes=[(0, 0, 1, 1)])


class TestAggregation(unittest.TestCase):
    """Test cases for aggregate_and_update and the relation variants."""

    def selector(self, row):
        """Single-layer MLP_N adding one input slot (e_i, global or node) to the 1-d node."""
        weight = np.zeros((3, 1))
        weight[row, 0] = 1.0
        return MLPParams(layers=[(Tensor(weight), Tensor([0.0]))])

    def test_constant_edges(self):
        nodes = np.array([[0.5], [-1.0], [2.0]])
        graph = HeteroGraph(nodes=Tensor(nodes), node_kind=[V, T, T], edges=Tensor(np.full((3, 3), 0.4)))
        assert_allclose(aggregate_and_update(graph, self.selector(0)).data, nodes + 0.4)
        assert_allclose(aggregate_and_update(graph, self.selector(1)).data, nodes + 0.4)

    def test_zero_update_is_pure_residual(self):
        nodes = np.random.default_rng(0).standard_normal((4, 3))
        mlp = MLPParams(layers=[(Tensor(np.zeros((5, 6))), Tensor(np.zeros(6))),
                                (Tensor(np.zeros((6, 3))), Tensor(np.zeros(3)))])
        graph = HeteroGraph(nodes=Tensor(nodes), node_kind=[V, V, T, T],
                            edges=Tensor(np.random.default_rng(1).standard_normal((4, 4))))
        assert_array_equal(aggregate_and_update(graph, mlp).data, nodes)

    def test_hand_mean(self):
        edges = np.zeros((3, 3))
        edges[0, 1], edges[0, 2] = 1.0, 3.0
        edges[0, 0] = 100.0  # self-loop is excluded
        graph = HeteroGraph(nodes=Tensor(np.zeros((3, 1))), node_kind=[V, T, T], edges=Tensor(edges))
        self.assertAlmostEqual(aggregate_and_update(graph, self.selector(0)).data[0, 0], 2.0)

    def test_mlp_relation_zero_update(self):
        nodes = np.random.default_rng(0).standard_normal((4, 3))
        mlp = MLPParams(layers=[(Tensor(np.zeros((3, 6))), Tensor(np.zeros(6))),
                                (Tensor(np.zeros((6, 3))), Tensor(np.zeros(3)))])
        assert_array_equal(mlp_relation(Tensor(nodes), mlp).data, nodes)

    def test_relate(self):
        params = init_grn_params(ParameterStore(seed=0), 4)
        rng = np.random.default_rng(0)
        graph = build_graph(Tensor(rng.standard_normal((3, 4))), Tensor(rng.standard_normal((2, 4))),
                            bboxes=[(0, 0, 1, 1), (2, 2, 3, 3), (0, 0, 1, 1)])
        related = relate(graph, params)
        self.assertTrue(related.gated)
        self.assertEqual(related.nodes.shape, (5, 4))
        self.assertEqual(related.edges.data[0, 1], 0.0)
        self.assertNotEqual(related.edges.data[0, 2], 0.0)


class TestGraphHead(unittest.TestCase):
    """Test cases for graph_head."""

    @classmethod
    def setUpClass(cls):
        rng = np.random.default_rng(0)
        cls.attn = AttentionParams(W_a=Tensor(rng.standard_normal((3, 1))), b_a=Tensor(rng.standard_normal(1)))
        cls.identity = Tensor(np.eye(5))
        cls.zero_bias = Tensor(np.zeros(5))

    def test_single_node(self):
        node = np.array([[1.0, -2.0, 0.5]])
        out = graph_head(Tensor(node), self.attn, Tensor(np.zeros(2)), self.identity, self.zero_bias)
        assert_allclose(out.output.data, [1.0, -2.0, 0.5, 0.0, 0.0])
        assert_allclose(out.attention.weights.data, [1.0])

    def test_identical_nodes(self):
        nodes = np.tile([0.3, 0.1, -0.7], (4, 1))
        out = graph_head(Tensor(nodes), self.attn, Tensor([9.0, 8.0]), self.identity, self.zero_bias)
        assert_allclose(out.output.data, [0.3, 0.1, -0.7, 9.0, 8.0])


class TestRelationInvariances(unittest.TestCase):
    """Test cases for self-loops, node order and leading axes in relate."""

    def random_graph(self, rng, d=3):
        n_visual, n_text = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        corners = rng.uniform(0.0, 10.0, size=(n_visual, 2))
        sizes = rng.uniform(0.5, 5.0, size=(n_visual, 2))
        boxes = [(x, y, x + w, y + h) for (x, y), (w, h) in zip(corners, sizes)]
        return build_graph(Tensor(rng.standard_normal((n_visual, d))), Tensor(rng.standard_normal((n_text, d))),
                           boxes)

    def test_self_loops_never_reach_the_update(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            params = init_grn_params(ParameterStore(seed=seed), 3)
            graph = self.random_graph(rng)
            reference = relate(graph, params).nodes.data
            n = graph.num_nodes
            loops = np.diag(rng.standard_normal(n) * 100.0)
            edges = Tensor(edge_scores(graph.nodes, params.mlp_r).data + loops)
            perturbed = aggregate_and_update(replace(graph, edges=edges), params.mlp_n).data
            assert_array_equal(perturbed, reference)

    def test_permutation_equivariance(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            params = init_grn_params(ParameterStore(seed=seed), 3)
            graph = self.random_graph(rng)
            perm = rng.permutation(graph.num_nodes)
            kinds = [graph.node_kind[i] for i in perm]
            boxes = [graph.bboxes[i] for i in perm if graph.node_kind[i] == V]
            permuted = HeteroGraph(nodes=Tensor(graph.nodes.data[perm]), node_kind=kinds, bboxes=boxes)
            assert_array_equal(permuted.gate_mask, graph.gate_mask[np.ix_(perm, perm)])
            assert_allclose(relate(permuted, params).nodes.data, relate(graph, params).nodes.data[perm],
                            atol=1e-12)

    def test_leading_axes_match_single_graphs(self):
        rng = np.random.default_rng(0)
        params = init_grn_params(ParameterStore(seed=0), 3)
        visual = rng.standard_normal((2, 1, 3, 3))
        text = rng.standard_normal((1, 4, 2, 3))
        boxes = [(0, 0, 2, 2), (1, 1, 3, 3), (5, 5, 6, 6)]
        batched = relate(build_graph(Tensor(visual), Tensor(text), boxes), params)
        self.assertEqual(batched.nodes.shape, (2, 4, 5, 3))
        self.assertEqual(batched.num_nodes, 5)
        for b in range(2):
            for g in range(4):
                single = relate(build_graph(Tensor(visual[b, 0]), Tensor(text[0, g]), boxes), params)
                assert_allclose(batched.nodes.data[b, g], single.nodes.data, atol=1e-12)
                assert_allclose(batched.edges.data[b, g], single.edges.data, atol=1e-12)

    def test_graph_head_over_leading_axes(self):
        rng = np.random.default_rng(1)
        attn = AttentionParams(W_a=Tensor(rng.standard_normal((3, 1))), b_a=Tensor(rng.standard_normal(1)))
        out_weight, out_bias = Tensor(rng.standard_normal((5, 4))), Tensor(rng.standard_normal(4))
        nodes, f_m = rng.standard_normal((2, 3, 4, 3)), rng.standard_normal((2, 3, 2))
        batched = graph_head(Tensor(nodes), attn, Tensor(f_m), out_weight, out_bias)
        self.assertEqual(batched.output.shape, (2, 3, 4))
        single = graph_head(Tensor(nodes[1, 2]), attn, Tensor(f_m[1, 2]), out_weight, out_bias)
        assert_allclose(batched.output.data[1, 2], single.output.data, atol=1e-12)


if __name__ == "__main__":
    unittest.main()

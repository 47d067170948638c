"""
Graph Relation Network over a fully connected graph of visual and text nodes.

Edge scores come from an MLP over node pairs. Edges between two visual nodes whose
boxes do not intersect are cut to zero. Every node is then updated from the mean of
its incident edges, the global mean, and its own embedding, with a residual link.
"""

from dataclasses import dataclass, replace
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from vchgcl.core.errors import ContractError, ShapeError
from vchgcl.model.encoders import AttentionParams, AttentionResult, soft_attention
from vchgcl.model.fusion import Box
from vchgcl.model.layers import MLPParams, init_mlp, linear, mlp_forward
from vchgcl.tensor import ParameterStore, Tensor, activation, as_tensor, broadcast_to, concat, matmul


class NodeKind(str, Enum):
    VISUAL = "visual"
    TEXT = "text"


@dataclass
class HeteroGraph:
    """
    Nodes (visual first, then text), pairwise edge scores and the IoU gate.

    ``nodes`` is [..., n x d]; leading axes hold independent graphs that share the
    node kinds and boxes.
    """
    nodes: Tensor
    node_kind: List[NodeKind]
    edges: Optional[Tensor] = None
    gate_mask: Optional[np.ndarray] = None
    bboxes: Optional[List[Box]] = None
    gated: bool = False

    def __post_init__(self):
        self.nodes = as_tensor(self.nodes)
        if self.nodes.ndim < 2 or len(self.node_kind) != self.nodes.shape[-2]:
            raise ShapeError("one kind per node row is required", self.nodes.shape, (len(self.node_kind),))
        if self.bboxes is not None and len(self.bboxes) != self.num_visual:
            raise ShapeError("one box per visual node is required", (len(self.bboxes),), (self.num_visual,))
        if self.gate_mask is None:
            self.gate_mask = build_gate_mask(self.node_kind, self.bboxes)

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[-2]

    @property
    def num_visual(self) -> int:
        return sum(kind == NodeKind.VISUAL for kind in self.node_kind)


@dataclass
class GRNParams:
    mlp_r: MLPParams
    mlp_n: MLPParams


@dataclass
class HeadParams:
    attention: AttentionParams
    out_weight: Tensor
    out_bias: Tensor


class GraphHeadResult(NamedTuple):
    output: Tensor
    attention: AttentionResult


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    """Intersection over union of two boxes; 0 when they share no area."""
    a, b = Box(*a).validate(), Box(*b).validate()
    width = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    height = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if width <= 0 or height <= 0:
        return 0.0
    intersection = width * height
    return intersection / (a.area + b.area - intersection)


def pairwise_iou(boxes: Sequence[Sequence[float]]) -> np.ndarray:
    """IoU matrix of a list of boxes."""
    arr = np.array([Box(*box).validate() for box in boxes], dtype=np.float64).reshape(-1, 4)
    width = np.minimum(arr[:, None, 2], arr[None, :, 2]) - np.maximum(arr[:, None, 0], arr[None, :, 0])
    height = np.minimum(arr[:, None, 3], arr[None, :, 3]) - np.maximum(arr[:, None, 1], arr[None, :, 1])
    intersection = np.where((width > 0) & (height > 0), width * height, 0.0)
    areas = (arr[:, 2] - arr[:, 0]) * (arr[:, 3] - arr[:, 1])
    return intersection / (areas[:, None] + areas[None, :] - intersection)


def build_gate_mask(node_kind: Sequence[NodeKind], bboxes: Optional[Sequence[Box]]) -> np.ndarray:
    """True where information may flow; False only for visual pairs with zero IoU."""
    n = len(node_kind)
    mask = np.ones((n, n), dtype=bool)
    if bboxes is None:
        return mask
    visual = [i for i, kind in enumerate(node_kind) if kind == NodeKind.VISUAL]
    overlap = pairwise_iou(bboxes) > 0
    for a, i in enumerate(visual):
        for b, j in enumerate(visual):
            mask[i, j] = overlap[a, b]
    return mask


def build_graph(visual: Tensor, text: Tensor, bboxes: Optional[Sequence[Box]] = None) -> HeteroGraph:
    """Visual rows then text rows; leading axes of the two streams broadcast together."""
    visual, text = as_tensor(visual), as_tensor(text)
    lead = np.broadcast_shapes(visual.shape[:-2], text.shape[:-2])
    visual = broadcast_to(visual, (*lead, *visual.shape[-2:]))
    text = broadcast_to(text, (*lead, *text.shape[-2:]))
    kinds = [NodeKind.VISUAL] * visual.shape[-2] + [NodeKind.TEXT] * text.shape[-2]
    return HeteroGraph(nodes=concat([visual, text], axis=-2), node_kind=kinds,
                       bboxes=list(bboxes) if bboxes is not None else None)


def init_grn_params(store: ParameterStore, d: int) -> GRNParams:
    return GRNParams(mlp_r=init_mlp(store, "relation.mlp_r", [2 * d, 2 * d, 1]),
                     mlp_n=init_mlp(store, "relation.mlp_n", [2 + d, 2 * d, d]))


def init_mlp_relation_params(store: ParameterStore, d: int) -> MLPParams:
    return init_mlp(store, "relation.mlp", [d, 2 * d, d])


def init_head_params(store: ParameterStore, d: int, d_m: int, d_out: int) -> HeadParams:
    return HeadParams(
        attention=AttentionParams(W_a=store.create("head.W_a", (d, 1)),
                                  b_a=store.create("head.b_a", (1,), fan_in=d)),
        out_weight=store.create("head.out.w", (d + d_m, d_out)),
        out_bias=store.create("head.out.b", (d_out,), fan_in=d + d_m),
    )


def edge_scores(nodes: Tensor, mlp_r: MLPParams, hidden_activation: str = "tanh") -> Tensor:
    """
    Score every ordered node pair with MLP_R(node_i : node_j).

    The first layer is split into the halves acting on node_i and node_j so the
    [n x n x 2d] pair tensor is never materialized.

    Returns:
        [..., n x n] edge scores; the diagonal is computed but never aggregated
    """
    nodes = as_tensor(nodes)
    if nodes.ndim < 2:
        raise ShapeError("nodes need shape [..., n x d]", nodes.shape)
    *lead, n, d = nodes.shape
    if n < 2:
        raise ContractError(f"a relation graph needs at least two nodes, got {n}")
    first_w, first_b = mlp_r.layers[0]
    if first_w.shape[0] != 2 * d or mlp_r.out_dim != 1:
        raise ShapeError("MLP_R must map a node pair to a scalar", first_w.shape, (2 * d, 1))
    hidden = first_w.shape[1]
    left = matmul(nodes, first_w[:d]).reshape(*lead, n, 1, hidden)
    right = matmul(nodes, first_w[d:]).reshape(*lead, 1, n, hidden)
    x = left + right + first_b
    for weight, bias in mlp_r.layers[1:]:
        x = linear(activation(x, hidden_activation), weight, bias)
    return x.reshape(*lead, n, n)


def gate_edges(graph: HeteroGraph) -> HeteroGraph:
    """Zero the edges between visual nodes whose boxes do not intersect."""
    if graph.edges is None:
        raise ContractError("edges must be scored before gating")
    if graph.gated:
        return graph
    if graph.bboxes is None:
        # no boxes (video frames): nothing to cut
        return replace(graph, gated=True)
    mask = Tensor(graph.gate_mask.astype(np.float64))
    return replace(graph, edges=graph.edges * mask, gated=True)


def aggregate_and_update(graph: HeteroGraph, mlp_n: MLPParams, hidden_activation: str = "tanh") -> Tensor:
    """
    Residual node update from mean incident edge scores.

    e_i is the mean of the gated scores e_ij over the n - 1 other nodes (cut edges
    count as zeros), the global term is the mean of all e_i, and the output is
    node_i + MLP_N(e_i : global : node_i).
    """
    graph = gate_edges(graph)
    nodes, n = graph.nodes, graph.num_nodes
    lead = nodes.shape[:-2]
    off_diagonal = Tensor(1.0 - np.eye(n))
    per_node = (graph.edges * off_diagonal).sum(axis=-1) * (1.0 / (n - 1))
    global_term = broadcast_to(per_node.mean(axis=-1, keepdims=True).reshape(*lead, 1, 1), (*lead, n, 1))
    inputs = concat([per_node.reshape(*lead, n, 1), global_term, nodes], axis=-1)
    return nodes + mlp_forward(inputs, mlp_n, hidden_activation)


def mlp_relation(nodes: Tensor, mlp: MLPParams, hidden_activation: str = "tanh") -> Tensor:
    """Edge-free variant: residual per-node MLP update."""
    nodes = as_tensor(nodes)
    return nodes + mlp_forward(nodes, mlp, hidden_activation)


def relate(graph: HeteroGraph, params: GRNParams, hidden_activation: str = "tanh") -> HeteroGraph:
    """Score, gate and update a graph; the returned graph carries the updated nodes."""
    scored = replace(graph, edges=edge_scores(graph.nodes, params.mlp_r, hidden_activation))
    gated = gate_edges(scored)
    return replace(gated, nodes=aggregate_and_update(gated, params.mlp_n, hidden_activation))


def graph_head(updated: Tensor, attn: AttentionParams, f_m: Tensor, out_weight: Tensor,
               out_bias: Tensor, attention_activation: str = "tanh") -> GraphHeadResult:
    """Pool the nodes with a second soft attention and project [pooled : F_M]."""
    pooled = soft_attention(updated, attn.W_a, attn.b_a, attention_activation)
    joined = concat([pooled.pooled, as_tensor(f_m)], axis=-1)
    return GraphHeadResult(output=linear(joined, out_weight, out_bias), attention=pooled)

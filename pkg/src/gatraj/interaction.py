"""Global interaction: one-shot state refinement at the last observed step.

Each round ``l`` every agent i gathers its neighbors' hidden states through a
sigmoid motion gate and a softmax attention over neighbors,

    c_i <- phi_mp(sum_j alpha_ij * (g_ij * h_j)) + c_i
    h_i <- h_i + tanh(c_i)

where the gate and attention logits are MLPs of [phi_r(x_i - x_j), h_j, h_i].
There is no output gate. Agents without neighbors receive a zero message and
still go through both updates.
"""

from dataclasses import dataclass

import numpy as np

from gatraj.autodiff import Tensor, concat, gather_rows, scatter_add_rows, segment_softmax
from gatraj.nn import MLP, Module


@dataclass
class NeighborGraph:
    """Directed edge list: message flows from ``src`` (j) to ``dst`` (i)."""

    dst: np.ndarray  # [E]
    src: np.ndarray  # [E]
    rel: np.ndarray  # [E, 2]  x_i - x_j at the last observed step
    n_nodes: int

    @property
    def n_edges(self):
        return len(self.dst)

    def neighbor_lists(self):
        out = [[] for _ in range(self.n_nodes)]
        for i, j in zip(self.dst, self.src):
            out[i].append(int(j))
        return out


def neighbors(positions, d_max, offset=0):
    """Agents within ``d_max`` meters (inclusive) of each other, excluding self."""
    positions = np.asarray(positions, dtype=np.float64)
    n = len(positions)
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    adj = (dist <= d_max) & ~np.eye(n, dtype=bool)
    dst, src = np.nonzero(adj)
    rel = diff[dst, src]
    # Order each agent's neighbors by relative position rather than by index,
    # so floating-point sums over neighbors do not depend on agent labelling.
    order = np.lexsort((src, rel[:, 1], rel[:, 0], dst))
    return NeighborGraph(dst[order] + offset, src[order] + offset, rel[order], n + offset)


def merge_graphs(graphs, n_nodes):
    if not graphs:
        return NeighborGraph(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 2)), n_nodes)
    return NeighborGraph(
        np.concatenate([g.dst for g in graphs]).astype(np.int64),
        np.concatenate([g.src for g in graphs]).astype(np.int64),
        np.concatenate([g.rel for g in graphs]),
        n_nodes,
    )


@dataclass
class RefinedState:
    h_hat: Tensor
    c_hat: Tensor
    rounds_completed: int
    alphas: list  # per-round attention weights over edges, for inspection


class GlobalInteraction(Module):
    def __init__(self, dim, rel_dim, rng):
        self.phi_r = MLP([2, rel_dim, rel_dim], rng)
        self.phi_m = MLP([rel_dim + 2 * dim, dim, dim], rng)
        self.phi_a = MLP([rel_dim + 2 * dim, dim, 1], rng)
        self.phi_mp = MLP([dim, dim, dim], rng)
        self.dim = dim

    def relative_embedding(self, rel):
        return self.phi_r(rel if isinstance(rel, Tensor) else Tensor(rel))

    def pair_features(self, r, h_j, h_i):
        return concat([r, h_j, h_i], axis=-1)

    def motion_gate(self, r, h_j, h_i):
        return self.phi_m(self.pair_features(r, h_j, h_i)).sigmoid()

    def attention_logits(self, r, h_j, h_i):
        return self.phi_a(self.pair_features(r, h_j, h_i))

    def attention_weights(self, r, h_j, h_i, dst, n_nodes):
        u = self.attention_logits(r, h_j, h_i)
        return segment_softmax(u.reshape(u.shape[0]), dst, n_nodes)

    def refine(self, h, c, graph: NeighborGraph, rounds) -> RefinedState:
        if rounds < 1:
            raise ValueError(f"message passing needs at least one round, got {rounds}")
        n = h.shape[0]
        h_hat, c_hat = h, c
        alphas = []
        r = self.relative_embedding(graph.rel) if graph.n_edges else None
        for _ in range(rounds):
            if graph.n_edges:
                h_j = gather_rows(h_hat, graph.src)
                h_i = gather_rows(h_hat, graph.dst)
                gate = self.motion_gate(r, h_j, h_i)
                alpha = self.attention_weights(r, h_j, h_i, graph.dst, n)
                alphas.append(alpha.data)
                weighted = gate * h_j * alpha.reshape(graph.n_edges, 1)
                message = scatter_add_rows(weighted, graph.dst, n)
            else:
                message = Tensor(np.zeros((n, self.dim)))
            c_hat = self.phi_mp(message) + c_hat
            h_hat = h_hat + c_hat.tanh()
        return RefinedState(h_hat, c_hat, rounds, alphas)


def refine(encoder_state, graph, interaction: GlobalInteraction, rounds) -> RefinedState:
    return interaction.refine(encoder_state.h, encoder_state.c, graph, rounds)

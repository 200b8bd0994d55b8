"""Model assembly, configuration and batching."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from gatraj.autodiff import Tensor
from gatraj.decoder import LaplaceMixture, MixtureDecoder, to_world
from gatraj.encoder import TemporalEncoder
from gatraj.interaction import GlobalInteraction, merge_graphs, neighbors
from gatraj.losses import wta_loss
from gatraj.nn import Module

INPUT_MODES = {"offset": 2, "position": 2, "both": 4}


@dataclass
class ModelConfig:
    hidden: int = 64
    heads: int = 8
    n_blocks: int = 3
    ff_width: int = 128
    rel_width: int = 32
    n_modes: int = 20
    obs_len: int = 8
    pred_len: int = 12
    rounds: int = 2
    d_max: float = 10.0
    input_mode: str = "offset"
    no_sa: bool = False
    no_gcn: bool = False
    gmm_head: bool = False
    mlp_decoder: bool = False
    dropout: float = 0.0
    init_seed: int = 0

    def __post_init__(self):
        if self.input_mode not in INPUT_MODES:
            raise ValueError(f"input_mode must be one of {sorted(INPUT_MODES)}, got {self.input_mode!r}")
        if self.hidden % self.heads:
            raise ValueError("hidden width must be divisible by the head count")
        if self.n_modes < 1 or self.rounds < 1 or self.obs_len < 2 or self.pred_len < 1:
            raise ValueError("n_modes, rounds, pred_len must be >= 1 and obs_len >= 2")

    def canonical(self):
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()


@dataclass
class Batch:
    """Agents of several scenes flattened into one set.

    Edges only connect agents of the same scene, so scenes never interact.
    """

    inputs: np.ndarray  # [N, T-1, C]
    graph: object
    origins: np.ndarray  # [N, 2]
    ground_truth: np.ndarray  # [N, T', 2]
    scene_of_agent: np.ndarray  # [N]
    scene_ids: list = field(default_factory=list)
    agent_ids: np.ndarray = None

    @property
    def n_agents(self):
        return len(self.inputs)


def scene_inputs(scene, input_mode):
    if input_mode == "offset":
        return scene.offsets
    if input_mode == "position":
        return scene.observed[:, 1:]
    return np.concatenate([scene.offsets, scene.observed[:, 1:]], axis=-1)


def make_batch(scenes, input_mode="offset", d_max=10.0) -> Batch:
    inputs, graphs, origins, truth, owner, agent_ids = [], [], [], [], [], []
    start = 0
    for s, scene in enumerate(scenes):
        inputs.append(scene_inputs(scene, input_mode))
        graphs.append(neighbors(scene.world_positions[:, -1], d_max, offset=start))
        origins.append(scene.origins)
        truth.append(scene.ground_truth)
        owner.append(np.full(scene.n_agents, s))
        agent_ids.append(scene.agent_ids)
        start += scene.n_agents
    return Batch(
        inputs=np.concatenate(inputs),
        graph=merge_graphs(graphs, start),
        origins=np.concatenate(origins),
        ground_truth=np.concatenate(truth),
        scene_of_agent=np.concatenate(owner),
        scene_ids=[sc.scene_id for sc in scenes],
        agent_ids=np.concatenate(agent_ids),
    )


class GATraj(Module):
    def __init__(self, config: ModelConfig, rng=None):
        self.config = config
        rng = np.random.default_rng(config.init_seed) if rng is None else rng
        d = config.hidden
        self.encoder = TemporalEncoder(
            INPUT_MODES[config.input_mode], d, config.heads, config.n_blocks, config.ff_width, rng,
            use_attention=not config.no_sa,
        )
        self.interaction = None if config.no_gcn else GlobalInteraction(d, config.rel_width, rng)
        self.decoder = MixtureDecoder(d, config.n_modes, config.pred_len, rng, use_lstm=not config.mlp_decoder)
        self._dropout_rng = np.random.default_rng(config.init_seed + 1)
        self.training = False

    def forward(self, batch: Batch) -> LaplaceMixture:
        cfg = self.config
        rate = cfg.dropout if self.training else 0.0
        state = self.encoder(Tensor(batch.inputs), rate, self._dropout_rng)
        if self.interaction is None:
            h_hat, c_hat = state.h, state.c
        else:
            refined = self.interaction.refine(state.h, state.c, batch.graph, cfg.rounds)
            h_hat, c_hat = refined.h_hat, refined.c_hat
        return self.decoder(state.h, h_hat, c_hat, family="gaussian" if cfg.gmm_head else "laplace")

    __call__ = forward

    def loss(self, batch: Batch, cls_weight=1.0, **kwargs):
        return wta_loss(self.forward(batch), batch.ground_truth, cls_weight, **kwargs)


def predict_world(model, batch, top_k=None):
    """World-frame locations [N, K, T', 2] and probabilities [N, K].

    With ``top_k`` only the most probable modes are kept, most probable first.
    """
    from gatraj.autodiff import no_grad

    with no_grad():
        mix = model(batch)
    loc = to_world(mix.loc, batch.origins)
    probs = mix.probs.data
    scale = mix.scale.data
    if top_k is not None:
        if top_k > probs.shape[1]:
            raise ValueError(f"requested {top_k} modes but the model predicts {probs.shape[1]}")
        order = np.argsort(-probs, axis=1, kind="stable")[:, :top_k]
        rows = np.arange(len(probs))[:, None]
        loc, scale, probs = loc[rows, order], scale[rows, order], probs[rows, order]
    return loc, scale, probs

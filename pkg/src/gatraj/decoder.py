"""Mixture decoder: K modes per agent, each a sequence of Laplace (or Gaussian) steps."""

from dataclasses import dataclass

import numpy as np

from gatraj.autodiff import Tensor, concat, softmax, stack
from gatraj.nn import LSTM, MLP, Module

SCALE_FLOOR = 1e-6


@dataclass
class LaplaceMixture:
    """Locations and scales are [N, K, T', 2] in each agent's centered frame."""

    loc: Tensor
    scale: Tensor
    probs: Tensor  # [N, K]
    family: str = "laplace"

    @property
    def n_modes(self):
        return self.loc.shape[1]


def scale_transform(raw):
    """softplus(raw) + 1e-6, keeping every scale strictly positive."""
    return raw.softplus() + SCALE_FLOOR


class MixtureDecoder(Module):
    def __init__(self, dim, n_modes, pred_len, rng, use_lstm=True):
        if n_modes < 1:
            raise ValueError(f"need at least one mode, got {n_modes}")
        self.dim = dim
        self.n_modes = n_modes
        self.pred_len = pred_len
        self.project = MLP([3 * dim, dim, n_modes * dim], rng)
        self.prob_head = MLP([dim, dim, 1], rng)
        if use_lstm:
            self.lstm = LSTM(dim, dim, rng)
        else:
            self.step_mlp = MLP([dim, dim, pred_len * dim], rng)
        self.loc_head = MLP([dim, dim, 2], rng)
        self.scale_head = MLP([dim, dim, 2], rng)

    def mode_project(self, h, h_hat, c_hat):
        """Fuse (h, h_hat, c_hat) [N, D] each into mode embeddings [K, N, D]."""
        n = h.shape[0]
        z = self.project(concat([h, h_hat, c_hat], axis=-1))
        return z.reshape(n, self.n_modes, self.dim).transpose(1, 0, 2)

    def mode_probs(self, z):
        k, n, _ = z.shape
        logits = self.prob_head(z).reshape(k, n).transpose()
        return softmax(logits, axis=-1)

    def unroll(self, z, pred_len=None):
        """Decode mode embeddings into per-step features [K*N, T', D].

        The LSTM starts from zero state and sees the mode embedding as its
        input at every step.
        """
        pred_len = self.pred_len if pred_len is None else pred_len
        k, n, d = z.shape
        flat = z.reshape(k * n, d)
        if not hasattr(self, "lstm"):
            if pred_len != self.pred_len:
                raise ValueError("the MLP decoder is built for a fixed horizon")
            return self.step_mlp(flat).reshape(k * n, pred_len, d)
        h, c = self.lstm.zero_state(k * n)
        x_proj = self.lstm.project(flat)  # the input is the same at every step
        outputs = []
        for _ in range(pred_len):
            h, c = self.lstm.step_projected(x_proj, h, c)
            outputs.append(h)
        return stack(outputs, axis=1)

    def heads(self, features, n_agents):
        kn, steps, _ = features.shape
        k = kn // n_agents
        loc = self.loc_head(features).reshape(k, n_agents, steps, 2).transpose(1, 0, 2, 3)
        raw = self.scale_head(features).reshape(k, n_agents, steps, 2).transpose(1, 0, 2, 3)
        return loc, scale_transform(raw)

    def __call__(self, h, h_hat, c_hat, family="laplace"):
        z = self.mode_project(h, h_hat, c_hat)
        probs = self.mode_probs(z)
        loc, scale = self.heads(self.unroll(z), h.shape[0])
        return LaplaceMixture(loc, scale, probs, family)

    def tie_modes(self):
        """Copy mode 0's projection block to every mode (all modes identical)."""
        last = self.project.layers[-1]
        w, b = last.weight.data, last.bias.data
        d = self.dim
        for k in range(1, self.n_modes):
            w[:, k * d : (k + 1) * d] = w[:, :d]
            b[k * d : (k + 1) * d] = b[:d]


def to_world(loc, origins):
    """Shift centered locations [N, K, T', 2] back by each agent's origin."""
    loc = loc.data if isinstance(loc, Tensor) else np.asarray(loc)
    return loc + np.asarray(origins)[:, None, None, :]

"""Parameter containers: a tiny module system over autodiff tensors."""

import numpy as np

from gatraj.autodiff import Tensor, layer_norm, linear, lstm_cell, lstm_cell_projected


class Module:
    """Walks attributes in definition order to enumerate parameters."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self):
        return sum(p.size for p in self.parameters())


def _uniform(rng, shape, fan_in, name):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, bias=True):
        self.weight = _uniform(rng, (n_in, n_out), n_in, "weight")
        self.bias = _uniform(rng, (n_out,), n_in, "bias") if bias else None

    def __call__(self, x):
        return linear(x, self.weight, self.bias)


class MLP(Module):
    """Linear layers with ReLU between them and none after the last."""

    def __init__(self, sizes, rng):
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]

    def __call__(self, x):
        for k, layer in enumerate(self.layers):
            x = layer(x)
            if k < len(self.layers) - 1:
                x = x.relu()
        return x


class LayerNorm(Module):
    def __init__(self, width):
        self.gain = Tensor(np.ones(width), requires_grad=True, name="gain")
        self.bias = Tensor(np.zeros(width), requires_grad=True, name="bias")

    def __call__(self, x):
        return layer_norm(x, self.gain, self.bias)


class LSTM(Module):
    """Single-layer LSTM; ``step`` advances one time step."""

    def __init__(self, n_in, hidden, rng):
        self.hidden = hidden
        self.w_x = _uniform(rng, (n_in, 4 * hidden), hidden, "w_x")
        self.w_h = _uniform(rng, (hidden, 4 * hidden), hidden, "w_h")
        self.bias = _uniform(rng, (4 * hidden,), hidden, "bias")

    def zero_state(self, batch):
        zeros = np.zeros((batch, self.hidden))
        return Tensor(zeros), Tensor(zeros.copy())

    def step(self, x, h, c):
        return lstm_cell(x, h, c, self.w_x, self.w_h, self.bias)

    def project(self, x):
        """Input projection x @ w_x + bias for any leading shape."""
        return x @ self.w_x + self.bias

    def step_projected(self, x_proj, h, c):
        return lstm_cell_projected(x_proj, h, c, self.w_h)

"""Winner-takes-all mixture losses and best-of-K displacement metrics."""

from dataclasses import dataclass

import numpy as np

from gatraj.autodiff import Tensor, gather_rows

PROB_FLOOR = 1e-12
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class LossBreakdown:
    k_star: np.ndarray  # [N]
    reg_loss: Tensor
    cls_loss: Tensor
    total: Tensor
    target: np.ndarray  # [N, K] soft mode targets

    def values(self):
        return {"total": self.total.item(), "reg": self.reg_loss.item(), "cls": self.cls_loss.item()}


def best_mode(loc, truth):
    """Index of the mode with the smallest summed squared error; ties -> lowest.

    ``loc`` is [K, T', 2] (one agent) or [N, K, T', 2]; ``truth`` matches
    without the K axis.
    """
    loc = np.asarray(loc.data if isinstance(loc, Tensor) else loc)
    truth = np.asarray(truth)
    err = ((loc - truth[..., None, :, :]) ** 2).sum(axis=(-1, -2))
    return np.argmin(err, axis=-1)


def _select(t, k_star):
    n, k = t.shape[:2]
    flat = t.reshape(n * k, *t.shape[2:])
    return gather_rows(flat, np.arange(n) * k + np.asarray(k_star))


def laplace_nll(loc, scale, truth):
    """Per-agent mean over steps of sum over x/y of log(2b) + |y - mu| / b,
    averaged over agents. Inputs are [N, T', 2]."""
    if np.any(scale.data <= 0):
        raise ValueError("Laplace scale must be strictly positive")
    steps = loc.shape[1]
    per_elem = (scale * 2.0).log() + (Tensor(truth) - loc).abs() / scale
    return per_elem.sum() * (1.0 / (steps * loc.shape[0]))


def gaussian_nll(loc, scale, truth):
    """Gaussian counterpart of :func:`laplace_nll` (``scale`` is the std)."""
    if np.any(scale.data <= 0):
        raise ValueError("Gaussian scale must be strictly positive")
    steps = loc.shape[1]
    z = (Tensor(truth) - loc) / scale
    per_elem = scale.log() + z * z * 0.5 + _HALF_LOG_2PI
    return per_elem.sum() * (1.0 / (steps * loc.shape[0]))


def soft_target(loc, truth):
    """Softmax over modes of minus the average displacement error (temperature 1).

    Computed on plain arrays: no gradient reaches the trajectories through it.
    """
    loc = np.asarray(loc.data if isinstance(loc, Tensor) else loc)
    dist = np.linalg.norm(loc - np.asarray(truth)[..., None, :, :], axis=-1).mean(axis=-1)
    z = -dist - (-dist).max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cls_loss(target, probs):
    """Cross-entropy sum_k -pi_k log(pi_hat_k), averaged over agents."""
    target = np.asarray(target)
    logp = probs.clamp_min(PROB_FLOOR).log()
    return -(Tensor(target) * logp).sum() * (1.0 / target.shape[0])


def total_loss(reg, cls, cls_weight=1.0):
    return reg + cls * cls_weight


def wta_loss(mixture, truth, cls_weight=1.0, k_star=None, target=None):
    """Regression on each agent's best mode plus soft-target classification.

    ``k_star`` and ``target`` may be supplied to hold the discrete/detached
    parts fixed (finite-difference checks do this).
    """
    truth = np.asarray(truth)
    if k_star is None:
        k_star = best_mode(mixture.loc, truth)
    if target is None:
        target = soft_target(mixture.loc, truth)
    loc = _select(mixture.loc, k_star)
    scale = _select(mixture.scale, k_star)
    nll = gaussian_nll if mixture.family == "gaussian" else laplace_nll
    reg = nll(loc, scale, truth)
    cls = cls_loss(target, mixture.probs)
    return LossBreakdown(np.asarray(k_star), reg, cls, total_loss(reg, cls, cls_weight), target)


# -- metrics ------------------------------------------------------------------


@dataclass
class MetricReport:
    min_ade: float
    min_fde: float
    k: int
    n_agents: int

    def lines(self):
        return [f"minADE {self.k} {self.min_ade!r}", f"minFDE {self.k} {self.min_fde!r}"]


def displacement(pred, truth):
    """Euclidean error per agent, mode and step: [N, K, T']."""
    return np.linalg.norm(np.asarray(pred) - np.asarray(truth)[:, None], axis=-1)


def min_ade(pred, truth):
    """Mean over agents of the per-agent best mode's mean step error."""
    return float(displacement(pred, truth).mean(axis=-1).min(axis=-1).mean())


def min_fde(pred, truth):
    """Mean over agents of the per-agent best mode's final step error."""
    return float(displacement(pred, truth)[..., -1].min(axis=-1).mean())


def evaluate_predictions(pred, truth):
    pred = np.asarray(pred)
    return MetricReport(min_ade(pred, truth), min_fde(pred, truth), pred.shape[1], pred.shape[0])


def format_metrics(reports):
    return "".join(line + "\n" for r in reports for line in r.lines())

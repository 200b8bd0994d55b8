import numpy as np

from gatraj.autodiff.tensor import no_grad


class GradCheckError(ArithmeticError):
    pass


def grad_check(fn, params, eps=1e-5, max_coords=None, rng=None):
    """Compare autodiff gradients of scalar ``fn()`` against central differences.

    ``params`` are leaf tensors that ``fn`` reads. Returns the maximum over the
    checked coordinates of ``|autodiff - fd| / max(1, |fd|)``. With
    ``max_coords`` set, at most that many randomly chosen coordinates of each
    tensor are perturbed (large models); otherwise every coordinate is.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    for p in params:
        p.requires_grad = True
        p.grad = None
    loss = fn()
    if loss.size != 1:
        raise ValueError(f"grad_check: fn must be scalar-valued, got shape {loss.shape}")
    loss.backward()
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for k in coords:
            orig = flat[k]
            with no_grad():  # the perturbed evaluations never need a tape
                flat[k] = orig + eps
                up = fn().item()
                flat[k] = orig - eps
                down = fn().item()
            flat[k] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise GradCheckError(f"non-finite function value perturbing coordinate {k} of {p.name or p.shape}")
            fd = (up - down) / (2 * eps)
            err = abs(grad.reshape(-1)[k] - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
    return worst

"""Hot inner-loop kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; set ``GATRAJ_KERNELS=python``
to force the fallback. ``use()`` switches backends at runtime, which the
benchmarks rely on to compare the two in one process.
"""

import os

import numpy as np

from gatraj._kernels import _pykernels as python

try:
    from gatraj._kernels import _ckernels as compiled
except ImportError:  # extension not built
    compiled = None

KERNEL_NAMES = (
    "scatter_add_rows",
    "segment_softmax",
    "segment_softmax_backward",
    "lstm_pointwise",
    "lstm_pointwise_backward",
)

_active = None
backend = "python"


def available_backends():
    return ["python"] + (["compiled"] if compiled is not None else [])


def use(name):
    """Select the kernel backend ("compiled" or "python")."""
    global _active, backend
    if name == "compiled":
        if compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _active = compiled
    elif name == "python":
        _active = python
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    backend = name


def _contig(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _idx(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def scatter_add_rows(src, index, n_rows):
    return _active.scatter_add_rows(_contig(src), _idx(index), n_rows)


def segment_softmax(scores, segment, n_segments):
    return _active.segment_softmax(_contig(scores), _idx(segment), n_segments)


def segment_softmax_backward(alpha, grad, segment, n_segments):
    return _active.segment_softmax_backward(_contig(alpha), _contig(grad), _idx(segment), n_segments)


def lstm_pointwise(pre, c):
    return _active.lstm_pointwise(_contig(pre), _contig(c))


def lstm_pointwise_backward(acts, c, c_new, grad_h, grad_c):
    return _active.lstm_pointwise_backward(
        _contig(acts), _contig(c), _contig(c_new), _contig(grad_h), _contig(grad_c)
    )


_requested = os.environ.get("GATRAJ_KERNELS", "").strip().lower()
if _requested == "python" or compiled is None:
    use("python")
else:
    use("compiled")

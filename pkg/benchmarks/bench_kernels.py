"""Compiled vs numpy kernels, alone and inside a full training step.

    python3 benchmarks/bench_kernels.py [--repeat 7] [--out kernels.txt]

Each row times the same call on both backends, alternating between them so
host drift hits both equally. Sizes match a batch of 32 three-agent scenes
with K=20 modes (1920 decoder rows, hidden width 64).
"""

import argparse
import sys
import time

import numpy as np

from gatraj import _kernels
from gatraj.bench import host_descriptor
from gatraj.perf import limit_threads, tune_allocator


def best_ms(fn, number, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        best = min(best, (time.perf_counter() - t0) / number)
    return best * 1e3


def kernel_cases(rng):
    rows, hidden = 1920, 64
    pre = rng.normal(size=(rows, 4 * hidden))
    c = rng.normal(size=(rows, hidden))
    h_new, c_new, acts = _kernels.python.lstm_pointwise(pre, c)
    grad = rng.normal(size=(rows, hidden))
    n_nodes, n_edges, width = 192, 768, 64
    src = rng.normal(size=(n_edges, width))
    dst = np.sort(rng.integers(0, n_nodes, n_edges))
    scores = rng.normal(size=n_edges)
    alpha = _kernels.python.segment_softmax(scores, dst, n_nodes)
    return [
        ("lstm_pointwise", lambda m: m.lstm_pointwise(pre, c)),
        ("lstm_pointwise_backward", lambda m: m.lstm_pointwise_backward(acts, c, c_new, grad, grad)),
        ("scatter_add_rows", lambda m: m.scatter_add_rows(src, dst, n_nodes)),
        ("segment_softmax", lambda m: m.segment_softmax(scores, dst, n_nodes)),
        ("segment_softmax_backward", lambda m: m.segment_softmax_backward(alpha, scores, dst, n_nodes)),
    ]


def model_cases():
    from gatraj.autodiff import no_grad
    from gatraj.data import junction_scenes
    from gatraj.model import GATraj, ModelConfig, make_batch

    model = GATraj(ModelConfig())
    batch = make_batch(junction_scenes(32, seed=0, agents_per_scene=3))

    def forward():
        with no_grad():
            model(batch)

    def train_step():
        for p in model.parameters():
            p.grad = None
        model.loss(batch).total.backward()

    return [("model forward (batch 32)", forward), ("model forward+backward", train_step)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--out", help="also write the table here")
    args = ap.parse_args(argv)
    tune_allocator()
    limit_threads(1)
    if _kernels.compiled is None:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    lines = [f"# host {host_descriptor()}", "# case python_ms compiled_ms speedup"]

    for name, call in kernel_cases(rng):
        py = best_ms(lambda: call(_kernels.python), 20, args.repeat)
        cc = best_ms(lambda: call(_kernels.compiled), 20, args.repeat)
        lines.append(f"{name} {py:.4f} {cc:.4f} {py / cc:.2f}")

    for name, fn in model_cases():
        times = {"python": [], "compiled": []}
        for _ in range(args.repeat):
            for backend in times:
                _kernels.use(backend)
                times[backend].append(best_ms(fn, 1, 1))
        py, cc = np.median(times["python"]), np.median(times["compiled"])
        lines.append(f"{name.replace(' ', '_')} {py:.2f} {cc:.2f} {py / cc:.2f}")
    _kernels.use("compiled")

    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())

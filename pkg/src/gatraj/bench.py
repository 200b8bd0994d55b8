"""Forward-pass latency measurement."""

from __future__ import annotations

import os
import platform
import time
from dataclasses import dataclass

import numpy as np

from gatraj import _kernels
from gatraj.autodiff import no_grad
from gatraj.model import make_batch


@dataclass
class BenchReport:
    label: str
    n_params: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    warmup: int
    iterations: int
    batch_scenes: int
    host: str
    backend: str

    def __post_init__(self):
        if self.iterations <= 0 or self.warmup < 0:
            raise ValueError("iteration counts must be positive")

    def lines(self):
        return [
            f"label {self.label}",
            f"params {self.n_params}",
            f"mean_ms {self.mean_ms:.4f}",
            f"median_ms {self.median_ms:.4f}",
            f"p95_ms {self.p95_ms:.4f}",
            f"warmup {self.warmup}",
            f"iterations {self.iterations}",
            f"batch_scenes {self.batch_scenes}",
            f"backend {self.backend}",
            f"host {self.host}",
        ]


def host_descriptor():
    cpu = platform.processor() or platform.machine()
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return f"{platform.system()} {platform.release()}; {cpu}; {os.cpu_count()} cpu; numpy {np.__version__}"


def time_forward(model, batches, warmup=5, iterations=30):
    """Wall-clock milliseconds of each measured forward call (graph off)."""
    if iterations < 10:
        raise ValueError("need at least 10 measured iterations")
    times = []
    with no_grad():
        for i in range(warmup + iterations):
            batch = batches[i % len(batches)]
            t0 = time.perf_counter()
            model(batch)
            dt = time.perf_counter() - t0
            if i >= warmup:
                times.append(dt * 1e3)
    return np.asarray(times)


def _batches(scenes, cfg, batch_scenes):
    if len(scenes) < batch_scenes:
        raise ValueError(f"need at least {batch_scenes} scenes, got {len(scenes)}")
    return [
        make_batch(scenes[i : i + batch_scenes], cfg.input_mode, cfg.d_max)
        for i in range(0, len(scenes) - batch_scenes + 1, batch_scenes)
    ]


def _report(label, model, ms, warmup, batch_scenes):
    return BenchReport(
        label=label,
        n_params=model.num_parameters(),
        mean_ms=float(ms.mean()),
        median_ms=float(np.median(ms)),
        p95_ms=float(np.percentile(ms, 95)),
        warmup=warmup,
        iterations=len(ms),
        batch_scenes=batch_scenes,
        host=host_descriptor(),
        backend=_kernels.backend,
    )


def bench_model(model, scenes, label="model", batch_scenes=32, warmup=5, iterations=30):
    """Time end-to-end forward passes on prebuilt batches of ``batch_scenes`` scenes.

    Windowing, normalization and batch assembly happen before the clock starts.
    """
    batches = _batches(scenes, model.config, batch_scenes)
    model.training = False
    ms = time_forward(model, batches, warmup, iterations)
    return _report(label, model, ms, warmup, batch_scenes)


def bench_compare(models, scenes, batch_scenes=32, warmup=5, iterations=30):
    """Benchmark several ``{label: model}`` entries round-robin.

    Interleaving the calls spreads slow drift of the host (frequency scaling,
    noisy neighbours) evenly over all models, so their medians stay comparable
    even when the differences are a few percent.
    """
    if iterations < 10:
        raise ValueError("need at least 10 measured iterations")
    labels = list(models)
    batches = {k: _batches(scenes, models[k].config, batch_scenes) for k in labels}
    times = {k: [] for k in labels}
    with no_grad():
        for i in range(warmup + iterations):
            for k in labels:
                models[k].training = False
                batch = batches[k][i % len(batches[k])]
                t0 = time.perf_counter()
                models[k](batch)
                dt = time.perf_counter() - t0
                if i >= warmup:
                    times[k].append(dt * 1e3)
    return [_report(k, models[k], np.asarray(times[k]), warmup, batch_scenes) for k in labels]

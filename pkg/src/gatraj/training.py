"""Adam with cosine-annealed learning rate, the epoch loop, and checkpoints."""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from gatraj.losses import evaluate_predictions
from gatraj.model import GATraj, ModelConfig, make_batch, predict_world

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr_init: float = 5e-4
    lr_final: float = 1e-5
    batch_size: int = 32
    max_epochs: int = 100
    seed: int = 0
    grad_clip: float = 10.0
    cls_weight: float = 1.0

    def __post_init__(self):
        if not (self.lr_init > self.lr_final > 0):
            raise ValueError("need lr_init > lr_final > 0")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


def cosine_lr(step, total_steps, lr_init=5e-4, lr_final=1e-5):
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if total_steps == 0:
        return lr_init
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + math.cos(math.pi * step / total_steps))


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0
        self.skipped = 0

    def step(self, lr, grads=None):
        """Apply one update; returns False (and counts it) on a non-finite gradient."""
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params] if grads is None else grads
        if not all(np.all(np.isfinite(g)) for g in grads):
            self.skipped += 1
            log.warning("non-finite gradient; step skipped (%d so far)", self.skipped)
            return False
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return True


def adam_step(params, grads, state: Adam, lr):
    return state.step(lr, grads)


def clip_gradients(params, max_norm):
    grads = [p.grad for p in params if p.grad is not None]
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm and norm > max_norm:
        for g in grads:
            g *= max_norm / norm
    return norm


@dataclass
class EpochRecord:
    epoch: int
    total: float
    reg: float
    cls: float
    val_minade: float
    val_minfde: float
    lr: float

    def line(self):
        return (
            f"{self.epoch} {self.total:.10g} {self.reg:.10g} {self.cls:.10g} "
            f"{self.val_minade:.10g} {self.val_minfde:.10g} {self.lr:.10g}"
        )


EPOCH_LOG_HEADER = "# epoch total reg cls val_minade val_minfde lr"


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: TrainConfig
    params: dict  # name -> ndarray
    adam_m: dict
    adam_v: dict
    step: int
    history: list = field(default_factory=list)

    def build_model(self):
        model = GATraj(self.model_config)
        for name, p in model.named_parameters():
            p.data[...] = self.params[name]
        return model


class TrainingError(RuntimeError):
    pass


def _predict_chunk(model, scenes, top_k):
    batch = make_batch(scenes, model.config.input_mode, model.config.d_max)
    loc, _, _ = predict_world(model, batch, top_k)
    return loc, batch.ground_truth + batch.origins[:, None]


def evaluate(model, scenes, batch_size=32, top_k=None, threads=1):
    """Best-of-K metrics over ``scenes``; ``threads`` > 1 runs batches concurrently.

    Batches are independent and results are gathered in order, so the report
    does not depend on the thread count.
    """
    if not scenes:
        raise ValueError("no scenes to evaluate")
    chunks = [scenes[i : i + batch_size] for i in range(0, len(scenes), batch_size)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda ch: _predict_chunk(model, ch, top_k), chunks))
    else:
        results = [_predict_chunk(model, ch, top_k) for ch in chunks]
    preds = np.concatenate([r[0] for r in results])
    truth = np.concatenate([r[1] for r in results])
    return evaluate_predictions(preds, truth)


def fit(train_scenes, model_config: ModelConfig, config: TrainConfig, val_scenes=None, on_epoch=None, model=None):
    """Train from scratch (or continue ``model``); returns (checkpoint, history)."""
    if not train_scenes:
        raise TrainingError("empty training set")
    model = GATraj(model_config) if model is None else model
    params = model.parameters()
    names = [n for n, _ in model.named_parameters()]
    opt = Adam(params)
    rng = np.random.default_rng(config.seed)
    n_batches = math.ceil(len(train_scenes) / config.batch_size)
    total_steps = n_batches * config.max_epochs
    history = []
    step = 0
    model.training = True
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_scenes))
        sums = np.zeros(3)
        agents = 0
        lr = config.lr_init
        for b in range(n_batches):
            chunk = [train_scenes[i] for i in order[b * config.batch_size : (b + 1) * config.batch_size]]
            batch = make_batch(chunk, model_config.input_mode, model_config.d_max)
            for p in params:
                p.grad = None
            parts = model.loss(batch, config.cls_weight)
            if not np.isfinite(parts.total.item()):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}: {parts.values()}")
            parts.total.backward()
            clip_gradients(params, config.grad_clip)
            lr = cosine_lr(step, total_steps, config.lr_init, config.lr_final)
            opt.step(lr)
            step += 1
            v = parts.values()
            sums += batch.n_agents * np.array([v["total"], v["reg"], v["cls"]])
            agents += batch.n_agents
        model.training = False
        if val_scenes:
            report = evaluate(model, val_scenes, config.batch_size)
            val = (report.min_ade, report.min_fde)
        else:
            val = (float("nan"), float("nan"))
        model.training = True
        rec = EpochRecord(epoch, *(sums / agents), *val, lr)
        history.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
    model.training = False
    ckpt = Checkpoint(
        model_config,
        config,
        {n: p.data.copy() for n, p in zip(names, params)},
        {n: m.copy() for n, m in zip(names, opt.m)},
        {n: v.copy() for n, v in zip(names, opt.v)},
        opt.step_count,
        history,
    )
    return ckpt, history


# -- checkpoint files -----------------------------------------------------------
#
# Layout (little-endian):
#   magic        8 bytes  b"GATRAJCK"
#   version      u32
#   config hash  64 bytes ASCII sha256 hex of the model config JSON
#   model cfg    u32 length + UTF-8 JSON
#   train cfg    u32 length + UTF-8 JSON
#   step         u64
#   n_tensors    u32, then per tensor:
#       u16 name length, UTF-8 name ("param/...", "adam_m/...", "adam_v/...")
#       u8 ndim, ndim x u32 dims, float64 data in C order
#   checksum     32 bytes sha256 of everything above

MAGIC = b"GATRAJCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _dump(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    mc = ckpt.model_config.canonical().encode()
    tc = json.dumps(dataclasses.asdict(ckpt.train_config), sort_keys=True).encode()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(ckpt.model_config.hash().encode())
    buf.write(struct.pack("<I", len(mc)) + mc)
    buf.write(struct.pack("<I", len(tc)) + tc)
    buf.write(struct.pack("<Q", ckpt.step))
    tensors = []
    for prefix, table in (("param", ckpt.params), ("adam_m", ckpt.adam_m), ("adam_v", ckpt.adam_v)):
        tensors += [(f"{prefix}/{k}", table[k]) for k in table]
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        raw = name.encode()
        arr = np.ascontiguousarray(arr, dtype="<f8")
        buf.write(struct.pack("<H", len(raw)) + raw)
        buf.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    body = buf.getvalue()
    return body + hashlib.sha256(body).digest()


def save(ckpt: Checkpoint, path):
    with open(path, "wb") as fh:
        fh.write(_dump(ckpt))


def load(path, expected_config: ModelConfig | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 36 or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (corrupt file)")
    view = memoryview(body)
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, view, pos)
        pos += struct.calcsize(fmt)
        return vals

    (version,) = take("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    stored_hash = bytes(view[pos : pos + 64]).decode()
    pos += 64
    (n,) = take("<I")
    model_cfg = ModelConfig(**json.loads(bytes(view[pos : pos + n])))
    pos += n
    (n,) = take("<I")
    train_cfg = TrainConfig(**json.loads(bytes(view[pos : pos + n])))
    pos += n
    if model_cfg.hash() != stored_hash:
        raise CheckpointError(f"{path}: stored config hash does not match its config")
    if expected_config is not None and expected_config.hash() != stored_hash:
        raise CheckpointError(
            f"{path}: config hash {stored_hash[:12]} does not match expected {expected_config.hash()[:12]}"
        )
    (step,) = take("<Q")
    (count,) = take("<I")
    tables = {"param": {}, "adam_m": {}, "adam_v": {}}
    for _ in range(count):
        (ln,) = take("<H")
        name = bytes(view[pos : pos + ln]).decode()
        pos += ln
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I")
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(body, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size
        prefix, key = name.split("/", 1)
        tables[prefix][key] = arr
    if pos != len(body):
        raise CheckpointError(f"{path}: trailing bytes after tensor table")
    return Checkpoint(model_cfg, train_cfg, tables["param"], tables["adam_m"], tables["adam_v"], step)

"""Command-line entry point. Every command writes its report to a file.

    gatraj train        --config run.cfg --out runs/a
    gatraj eval         --checkpoint runs/a/model.ckpt --config run.cfg --k 5 --out metrics.txt
    gatraj predict      --checkpoint runs/a/model.ckpt --data test.txt --out preds.txt
    gatraj bench        --config run.cfg --out bench.txt
    gatraj sweep-k      --config run.cfg --ks 1,2,3,5 --out sweep.txt
    gatraj count-params --config run.cfg --out params.txt
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from gatraj import _kernels
from gatraj.config import ConfigError, RunConfig, format_config, load_config, parse_config, resolve_data_path
from gatraj.data import junction_scenes, load_scenes
from gatraj.model import GATraj, ModelConfig, make_batch, predict_world
from gatraj.perf import limit_threads, tune_allocator
from gatraj.training import (
    EPOCH_LOG_HEADER,
    CheckpointError,
    TrainingError,
    evaluate,
    fit,
    load,
    save,
)

log = logging.getLogger("gatraj")

CHECKPOINT_NAME = "model.ckpt"
EPOCH_LOG_NAME = "epochs.log"
# Offset between the train and test junction seeds so the splits never share scenes.
_TEST_SEED_OFFSET = 1_000_003


class UsageError(Exception):
    pass


# -- data -------------------------------------------------------------------


def scenes_for(cfg: RunConfig, split, files=None):
    """Scenes for ``split`` ("train" or "test"); explicit ``files`` win over the config."""
    m, d = cfg.model, cfg.data
    if files:
        return load_scenes([resolve_data_path(f) for f in files], m.obs_len, m.pred_len, d.frame_stride, d.swap_xy)
    if d.source == "files":
        names = d.train_files if split == "train" else d.test_files
        if not names:
            raise UsageError(f"no {split}_files configured for source = files")
        return load_scenes([resolve_data_path(f) for f in names], m.obs_len, m.pred_len, d.frame_stride, d.swap_xy)
    n = d.junction_train if split == "train" else d.junction_test
    seed = d.junction_seed + (0 if split == "train" else _TEST_SEED_OFFSET)
    return junction_scenes(
        n, seed=seed, obs_len=m.obs_len, pred_len=m.pred_len,
        n_exits=d.junction_exits, noise_std=d.junction_noise, agents_per_scene=d.junction_agents,
    )


def _require(scenes, what):
    if not scenes:
        raise UsageError(f"missing data: no complete {what} windows found")
    return scenes


# -- commands -----------------------------------------------------------------


def _run_config(args) -> RunConfig:
    overrides = dict(kv.split("=", 1) for kv in (args.set or []))
    overrides = {k.strip(): v.strip() for k, v in overrides.items()}
    if args.seed is not None:
        overrides.setdefault("seed", args.seed)
        overrides.setdefault("init_seed", args.seed)
    if getattr(args, "config", None):
        return load_config(args.config, overrides)
    return parse_config("", overrides)


def cmd_train(args):
    cfg = _run_config(args)
    train = _require(scenes_for(cfg, "train", args.data), "training")
    val = _require(scenes_for(cfg, "test", args.val), "validation") if (args.val or not args.no_val) else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(cfg))
    with open(out / EPOCH_LOG_NAME, "w") as fh:
        fh.write(EPOCH_LOG_HEADER + "\n")

        def on_epoch(rec):
            fh.write(rec.line() + "\n")
            fh.flush()
            log.info("epoch %d total %.4f val minADE %.4f", rec.epoch, rec.total, rec.val_minade)

        ckpt, _ = fit(train, cfg.model, cfg.train, val_scenes=val, on_epoch=on_epoch)
    save(ckpt, out / CHECKPOINT_NAME)
    log.info("wrote %s", out / CHECKPOINT_NAME)
    return 0


def _load_model(path):
    ckpt = load(path)
    return ckpt.build_model(), ckpt


def _eval_scenes(args, model_cfg):
    cfg = load_config(args.config) if args.config else RunConfig(model=model_cfg)
    cfg.model = model_cfg  # windows must match the trained horizons
    if not (args.data or args.config):
        raise UsageError("missing data: pass --data files or a --config with a data section")
    return _require(scenes_for(cfg, "test", args.data), "test")


def cmd_eval(args):
    model, ckpt = _load_model(args.checkpoint)
    k = args.k or ckpt.model_config.n_modes
    if k > ckpt.model_config.n_modes:
        raise UsageError(f"K={k} exceeds the trained K={ckpt.model_config.n_modes}")
    scenes = _eval_scenes(args, ckpt.model_config)
    report = evaluate(model, scenes, ckpt.train_config.batch_size, top_k=k, threads=args.threads)
    Path(args.out).write_text("# metric K value\n" + "\n".join(report.lines()) + "\n")
    return 0


def cmd_predict(args):
    model, ckpt = _load_model(args.checkpoint)
    k = args.k or ckpt.model_config.n_modes
    if k > ckpt.model_config.n_modes:
        raise UsageError(f"K={k} exceeds the trained K={ckpt.model_config.n_modes}")
    scenes = _eval_scenes(args, ckpt.model_config)
    bs = ckpt.train_config.batch_size
    with open(args.out, "w") as fh:
        fh.write("# scene agent mode t x y bx by pi\n")
        for i in range(0, len(scenes), bs):
            chunk = scenes[i : i + bs]
            batch = make_batch(chunk, model.config.input_mode, model.config.d_max)
            loc, scale, probs = predict_world(model, batch, top_k=k)
            scene_of = [chunk[s].scene_id for s in batch.scene_of_agent]
            for a in range(batch.n_agents):
                for mode in range(k):
                    for t in range(loc.shape[2]):
                        vals = (*loc[a, mode, t], *scale[a, mode, t], probs[a, mode])
                        nums = " ".join(repr(float(v)) for v in vals)
                        fh.write(f"{scene_of[a]} {batch.agent_ids[a]} {mode} {t} {nums}\n")
    return 0


def cmd_bench(args):
    from gatraj.bench import bench_model

    if args.checkpoint:
        model, ckpt = _load_model(args.checkpoint)
        cfg = RunConfig(model=ckpt.model_config)
        label = args.label or Path(args.checkpoint).name
    else:
        cfg = _run_config(args)
        model = GATraj(cfg.model)
        label = args.label or (Path(args.config).stem if args.config else "default")
    scenes = junction_scenes(
        args.batch * 2, seed=0, obs_len=cfg.model.obs_len, pred_len=cfg.model.pred_len,
        agents_per_scene=args.agents,
    )
    report = bench_model(model, scenes, label, args.batch, args.warmup, args.iterations)
    Path(args.out).write_text("\n".join(report.lines()) + "\n")
    return 0


def sweep_k(cfg: RunConfig, ks, threads=1, files=None, test_files=None):
    """Train one model per K and evaluate it; returns [(K, minADE, minFDE)]."""
    if not ks:
        raise UsageError("empty K list")
    train = _require(scenes_for(cfg, "train", files), "training")
    test = _require(scenes_for(cfg, "test", test_files), "test")
    rows = []
    for k in ks:
        mc = dataclasses.replace(cfg.model, n_modes=k)
        ckpt, _ = fit(train, mc, cfg.train)
        report = evaluate(ckpt.build_model(), test, cfg.train.batch_size, top_k=k, threads=threads)
        log.info("K=%d minADE %.4f minFDE %.4f", k, report.min_ade, report.min_fde)
        rows.append((k, report.min_ade, report.min_fde))
    return rows


def cmd_sweep_k(args):
    cfg = _run_config(args)
    ks = [int(k) for k in args.ks.split(",") if k.strip()]
    rows = sweep_k(cfg, ks, args.threads, args.data, args.val)
    with open(args.out, "w") as fh:
        fh.write("# K minADE minFDE\n")
        for k, ade, fde in rows:
            fh.write(f"{k} {ade!r} {fde!r}\n")
    return 0


def count_params(model):
    return model.num_parameters()


def ablation_configs(base: ModelConfig):
    return [
        ("full", base),
        ("no_gcn", dataclasses.replace(base, no_gcn=True)),
        ("no_gcn_no_sa", dataclasses.replace(base, no_gcn=True, no_sa=True)),
    ]


def cmd_count_params(args):
    if args.checkpoint:
        mc = load(args.checkpoint).model_config
    else:
        mc = _run_config(args).model
    rows = ablation_configs(mc) if args.ablations else [("model", mc)]
    with open(args.out, "w") as fh:
        fh.write("# label params\n")
        for label, c in rows:
            fh.write(f"{label} {count_params(GATraj(c))}\n")
    return 0


# -- argument parsing ---------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="gatraj", description=__doc__.split("\n")[0])
    p.add_argument("--seed", type=int, help="training and init seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="concurrent evaluation batches")
    p.add_argument("--backend", choices=["auto", "compiled", "python"], default="auto")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, data=True):
        if config:
            sp.add_argument("--config", help="key = value run configuration")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        if data:
            sp.add_argument("--data", nargs="+", help="trajectory files (relative to $GATRAJ_DATA)")
        sp.add_argument("--out", required=True, help="output file or directory")

    sp = sub.add_parser("train", help="fit a model; writes checkpoint and epoch log")
    common(sp)
    sp.add_argument("--val", nargs="+", help="validation files")
    sp.add_argument("--no-val", action="store_true", help="skip per-epoch validation")
    sp.set_defaults(func=cmd_train)

    for name, func, text in (("eval", cmd_eval, "minADE/minFDE report"), ("predict", cmd_predict, "prediction dump")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--checkpoint", required=True)
        sp.add_argument("--config", help="data section for the test split")
        sp.add_argument("--data", nargs="+", help="test trajectory files")
        sp.add_argument("--k", type=int, help="modes kept, most probable first (default: trained K)")
        sp.add_argument("--out", required=True)
        sp.set_defaults(func=func)

    sp = sub.add_parser("bench", help="forward latency per batch of scenes")
    common(sp, data=False)
    sp.add_argument("--checkpoint")
    sp.add_argument("--label")
    sp.add_argument("--batch", type=int, default=32, help="scenes per batch")
    sp.add_argument("--agents", type=int, default=3, help="agents per synthetic scene")
    sp.add_argument("--warmup", type=int, default=5)
    sp.add_argument("--iterations", type=int, default=30)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("sweep-k", help="train and evaluate one model per K")
    common(sp)
    sp.add_argument("--val", nargs="+", help="test files")
    sp.add_argument("--ks", default="1,2,3,5", help="comma separated K values")
    sp.set_defaults(func=cmd_sweep_k)

    sp = sub.add_parser("count-params", help="learnable scalar count")
    common(sp, data=False)
    sp.add_argument("--checkpoint")
    sp.add_argument("--ablations", action="store_true", help="also count the w/o GCN and w/o GCN,SA variants")
    sp.set_defaults(func=cmd_count_params)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    tune_allocator()
    limits = limit_threads(1)  # BLAS stays single-threaded: stable timings, reproducible sums
    try:
        if args.backend != "auto":
            _kernels.use(args.backend)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        if getattr(args, "set", None):
            bad = [kv for kv in args.set if "=" not in kv]
            if bad:
                raise UsageError(f"--set expects KEY=VALUE, got {bad[0]!r}")
        return args.func(args)
    except (UsageError, ConfigError, CheckpointError, TrainingError, FileNotFoundError, RuntimeError, ValueError) as exc:
        print(f"gatraj {args.command}: error: {exc}", file=sys.stderr)
        return 2
    finally:
        if limits is not None:
            limits.unregister()


if __name__ == "__main__":
    sys.exit(main())

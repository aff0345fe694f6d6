"""Command-line interface.

Subcommands cover the full workflow: corpus ingestion or synthesis,
dataset statistics, model training for every controller kind, sampling
to MIDI, controllability sweeps, fidelity scoring, and serving the HTTP
API. Report-producing commands write delimited CSV output and render
matplotlib figures alongside it.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__, baselines, corpus, dataset as dataset_io, pipeline
from .attributes import ATTRIBUTE_NAMES, measure
from .baselines import ArConfig, CondVaeConfig, CondVaeTrainConfig
from .checkpoint import (
    load_model,
    save_arvae,
    save_diffusion,
    save_lcvae,
    save_vae,
)
from .config import ConfigError, apply_overrides, load_config
from .evaluation import attribute_sweep, eval_fidelity
from .generate import UnconditionalGenerator
from .lcdiff import DenoiserConfig, DiffusionTrainConfig, SamplerConfig, build_schedule
from .midi import write_midi
from .seqvae import TrainSchedule, VaeConfig, reconstruction_accuracy
from .tokens import detokenize

log = logging.getLogger(__name__)


def _load_cfg(args) -> dict:
    if getattr(args, "config", None):
        return load_config(args.config)
    return {}


def _section(cfg: dict, name: str, default):
    return apply_overrides(default, cfg.get(name))


def _schedule_from(cfg: dict):
    params = cfg.get("schedule", {})
    return build_schedule(
        params.get("num_steps", 1000),
        params.get("beta_min", 1e-6),
        params.get("beta_max", 1e-2),
    )


def _write_training_report(out_path: Path, log_rows: list[dict]) -> None:
    from .report import render_training_curve, write_training_csv

    write_training_csv(out_path.with_suffix(".train.csv"), log_rows)
    render_training_curve(out_path.with_suffix(".loss.png"), log_rows)


def cmd_ingest(args) -> int:
    paths = sorted(Path(args.midi_dir).rglob("*.mid")) + sorted(
        Path(args.midi_dir).rglob("*.midi")
    )
    if not paths:
        print(f"no MIDI files under {args.midi_dir}", file=sys.stderr)
        return 1
    try:
        ratios = tuple(float(r) for r in args.splits.split(","))
    except ValueError:
        print(f"bad --splits value {args.splits!r}", file=sys.stderr)
        return 1
    if len(ratios) != 3:
        print("--splits needs three comma-separated ratios", file=sys.stderr)
        return 1
    ds, counters = corpus.build_dataset(
        paths,
        split_ratios=ratios,
        augmentation_count=0 if args.no_augment else args.augment,
        seed=args.seed,
    )
    dataset_io.save(ds, args.out)
    print(f"dataset: {len(ds)} windows -> {args.out}")
    for key, value in counters.as_dict().items():
        print(f"{key},{value}")
    return 0


def cmd_synth_corpus(args) -> int:
    ds = corpus.synth_corpus(args.n, seed=args.seed)
    dataset_io.save(ds, args.out)
    sizes = ",".join(f"{s}={ds.splits[s][1] - ds.splits[s][0]}" for s in ds.splits)
    print(f"dataset: {len(ds)} windows ({sizes}) -> {args.out}")
    return 0


def cmd_stats(args) -> int:
    ds = dataset_io.load(args.dataset)
    print("attribute,mean,std,min,max,p99")
    for name in ds.attribute_names:
        s = ds.stats[name]
        print(f"{name},{s.mean:.6g},{s.std:.6g},{s.min:.6g},{s.max:.6g},{s.p99:.6g}")
    return 0


def cmd_attrs(args) -> int:
    import hashlib

    ds = dataset_io.load(args.dataset)
    lines = ["tokens_sha1," + ",".join(ds.attribute_names)]
    for index in range(len(ds)):
        digest = hashlib.sha1(ds.tokens[index].tobytes()).hexdigest()[:12]
        cells = ",".join(f"{v:.6g}" for v in ds.attributes[index])
        lines.append(f"{digest},{cells}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
        print(f"rows,{len(ds)}")
        print(f"csv,{args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_train_vae(args) -> int:
    cfg = _load_cfg(args)
    ds = dataset_io.load(args.dataset)
    vae_cfg = _section(cfg, "vae", VaeConfig())
    sched = _section(cfg, "vae_train", TrainSchedule())
    out = Path(args.out)

    def checkpoint_cb(it, model, log_rows):
        save_vae(out, model)

    result = pipeline.fit_vae(ds, vae_cfg, sched, seed=args.seed, checkpoint_cb=checkpoint_cb)
    save_vae(out, result.model)
    _write_training_report(out, result.log)
    accuracy = reconstruction_accuracy(result.model, ds.split_tokens("val"))
    print(f"final_loss,{result.log[-1]['loss']:.6g}")
    print(f"val_token_accuracy,{accuracy:.4f}")
    print(f"checkpoint,{out}")
    return 0


def cmd_train_diffusion(args) -> int:
    cfg = _load_cfg(args)
    ds = dataset_io.load(args.dataset)
    vae = load_model(args.vae).model
    den_cfg = _section(
        cfg, "denoiser", DenoiserConfig(latent_dim=vae.config.latent_dim)
    )
    train_cfg = _section(cfg, "diffusion_train", DiffusionTrainConfig())
    schedule = _schedule_from(cfg)
    result, schedule, scaler = pipeline.fit_diffusion(
        ds, vae, args.attribute, den_cfg, schedule, train_cfg, seed=args.seed
    )
    out = Path(args.out)
    save_diffusion(
        out, result.model, schedule, args.attribute, ds.stats[args.attribute], scaler
    )
    _write_training_report(out, result.log)
    print(f"final_loss,{result.log[-1]['loss']:.6g}")
    print(f"checkpoint,{out}")
    return 0


def cmd_train_arvae(args) -> int:
    cfg = _load_cfg(args)
    ds = dataset_io.load(args.dataset)
    vae_cfg = _section(cfg, "vae", VaeConfig())
    sched = _section(cfg, "vae_train", TrainSchedule())
    ar = _section(cfg, "ar", ArConfig(variant=args.variant))
    result, qmap = pipeline.fit_arvae(ds, args.attribute, vae_cfg, sched, ar, seed=args.seed)
    out = Path(args.out)
    save_arvae(out, result.model, ar, args.attribute, ds.stats[args.attribute], qmap)
    _write_training_report(out, result.log)
    print(f"final_loss,{result.log[-1]['loss']:.6g}")
    print(f"checkpoint,{out}")
    return 0


def cmd_train_lcvae(args) -> int:
    cfg = _load_cfg(args)
    ds = dataset_io.load(args.dataset)
    vae = load_model(args.vae).model
    conditioning = "value" if args.variant == "a" else "encoding"
    cvae_cfg = _section(
        cfg, "cvae",
        CondVaeConfig(latent_dim=vae.config.latent_dim, conditioning=conditioning),
    )
    train_cfg = _section(cfg, "cvae_train", CondVaeTrainConfig())
    result = pipeline.fit_lcvae(ds, vae, args.attribute, cvae_cfg, train_cfg, seed=args.seed)
    out = Path(args.out)
    save_lcvae(out, result.model, args.attribute, ds.stats[args.attribute])
    _write_training_report(out, result.log)
    print(f"final_loss,{result.log[-1]['loss']:.6g}")
    print(f"checkpoint,{out}")
    return 0


def cmd_sample(args) -> int:
    vae = load_model(args.vae).model
    if args.model:
        loaded = load_model(args.model)
        sampler = SamplerConfig(steps=args.steps, guidance=args.w)
        generator = pipeline.generator_for(loaded, vae, sampler=sampler)
        sequences = generator(args.target, args.count, args.seed)
        label = f"{loaded.kind}:{loaded.attribute}"
    else:
        sequences = UnconditionalGenerator(vae).batch(args.count, args.seed)
        label = "unconditional"
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    print("index,file," + ",".join(ATTRIBUTE_NAMES))
    for index, tokens in enumerate(sequences):
        path = out_dir / f"sample_{index:03d}.mid"
        write_midi(path, detokenize(tokens))
        values = measure(tokens)
        cells = ",".join(f"{v:.6g}" for v in values.as_array())
        print(f"{index},{path},{cells}")
    log.info("sampled %d sequences from %s", len(sequences), label)
    return 0


def cmd_sweep(args) -> int:
    from .report import render_sweep_figure, write_sweep_csv

    vae = load_model(args.vae).model
    loaded = load_model(args.model)
    sampler = SamplerConfig(steps=args.steps, guidance=args.w)
    generator = pipeline.generator_for(loaded, vae, sampler=sampler)
    result = attribute_sweep(
        generator, loaded.attribute, loaded.stats,
        n=args.n, per_target=args.per, seed=args.seed,
    )
    out = Path(args.out)
    write_sweep_csv(out, result)
    fig_path = Path(args.fig) if args.fig else out.with_suffix(".png")
    render_sweep_figure(fig_path, result)
    print(f"attribute,{loaded.attribute}")
    print(f"pcc,{result.pcc:.6f}")
    print(f"failures,{result.failures}")
    print(f"csv,{out}")
    print(f"figure,{fig_path}")
    return 0


def cmd_fmd(args) -> int:
    vae = load_model(args.vae).model
    loaded = load_model(args.model)
    ds = dataset_io.load(args.reference)
    sampler = SamplerConfig(steps=args.steps, guidance=args.w)
    generator = pipeline.generator_for(loaded, vae, sampler=sampler)
    refs = ds.split_attributes(args.split).astype(np.float64)
    targets = ds.attribute_column(loaded.attribute, args.split).astype(np.float64)
    if args.limit and args.limit < len(refs):
        rng = np.random.default_rng(args.seed)
        keep = rng.choice(len(refs), size=args.limit, replace=False)
        refs, targets = refs[keep], targets[keep]
    result = eval_fidelity(
        refs, targets, generator.batch,
        UnconditionalGenerator(vae).batch, seed=args.seed,
    )
    print(f"conditional_fd,{result.conditional:.6f}")
    print(f"unconditional_fd,{result.unconditional:.6f}")
    print(f"count,{result.count}")
    if args.fig:
        from .report import render_fidelity_figure

        render_fidelity_figure(args.fig, result, f"{loaded.kind}:{loaded.attribute}")
        print(f"figure,{args.fig}")
    return 0


def cmd_serve(args) -> int:
    from .service import create_app, run_app

    app = create_app(args.vae, args.model)
    port = args.port or int(os.environ.get("FADERLAB_PORT", "8000"))
    run_app(app, host=args.host, port=port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faderlab",
        description="Attribute-controllable melody generation toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"faderlab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=fn)
        return p

    p = add("ingest", cmd_ingest, "build a dataset from a MIDI directory")
    p.add_argument("--in", dest="midi_dir", required=True, metavar="DIR")
    p.add_argument("--out", required=True)
    p.add_argument("--splits", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--augment", type=int, default=1, help="transpositions per window")
    p.add_argument("--no-augment", action="store_true")

    p = add("synth-corpus", cmd_synth_corpus, "build a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = add("stats", cmd_stats, "print per-attribute training statistics")
    p.add_argument("--dataset", required=True)

    p = add("attrs", cmd_attrs, "emit per-record attribute rows (token hash + values)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", help="CSV path (default: stdout)")

    p = add("train-vae", cmd_train_vae, "train the unconditional sequence VAE")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")

    p = add("train-diffusion", cmd_train_diffusion, "train an attribute denoiser")
    p.add_argument("--dataset", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--attribute", required=True, choices=ATTRIBUTE_NAMES)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")

    p = add("train-arvae", cmd_train_arvae, "train an attribute-regularized VAE")
    p.add_argument("--dataset", required=True)
    p.add_argument("--variant", required=True, choices=("nm", "pl"))
    p.add_argument("--attribute", required=True, choices=ATTRIBUTE_NAMES)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")

    p = add("train-lcvae", cmd_train_lcvae, "train a conditional latent VAE")
    p.add_argument("--dataset", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--variant", required=True, choices=("a", "se"))
    p.add_argument("--attribute", required=True, choices=ATTRIBUTE_NAMES)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")

    p = add("sample", cmd_sample, "generate sequences and write MIDI files")
    p.add_argument("--vae", required=True)
    p.add_argument("--model", help="conditional checkpoint (omit for unconditional)")
    p.add_argument("--target", type=float, default=0.0)
    p.add_argument("--w", type=float, default=3.0)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="samples")

    p = add("sweep", cmd_sweep, "target sweep with CSV and regression figure")
    p.add_argument("--model", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--per", type=int, default=20)
    p.add_argument("--w", type=float, default=3.0)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--fig", help="figure path (default: CSV path with .png)")

    p = add("fmd", cmd_fmd, "attribute-feature Fréchet distance vs a reference")
    p.add_argument("--model", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--reference", required=True, help="dataset path")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--limit", type=int, default=0, help="cap reference records")
    p.add_argument("--w", type=float, default=3.0)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fig", help="optional bar-chart path")

    p = add("serve", cmd_serve, "serve the HTTP API for the fader UI")
    p.add_argument("--vae", required=True)
    p.add_argument("--model", required=True, nargs="+", help="conditional checkpoints")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0, help="default: $FADERLAB_PORT or 8000")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    torch.set_num_threads(max(1, os.cpu_count() or 1))
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line entry point: ``farfield <command> [flags]``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
Flags override values from the config file (``--config`` or
``$FARFIELD_CONFIG``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import CONFIG_ENV, PipelineConfig, load_config
from .errors import ConfigurationError, FarfieldError, ManifestError

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _dump(doc, path=None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _echo(cfg: PipelineConfig) -> dict:
    return {"config": cfg.to_dict()}


# ---------------------------------------------------------------- commands

def cmd_gen_rirs(args, cfg: PipelineConfig) -> int:
    from .roomsim import batch_generate

    cfg = cfg.override("geometry", topology=args.topology)
    cfg = cfg.override("roomsim", max_order=args.max_order)
    rows = batch_generate(args.count, cfg.geometry.build(), args.seed, args.out, cfg.sampler_bounds(),
                          cfg.rir_config(), sources_per_scenario=args.sources_per_room, jobs=args.jobs,
                          extra=_echo(cfg))
    print(f"wrote {len(rows)} RIRs to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_make_corpus(args, cfg) -> int:
    from .synthetic import make_corpus

    speech, noise = make_corpus(args.out, args.speech, args.noise, args.seconds, args.seed, cfg.mixer.sample_rate)
    print(f"wrote {len(speech)} speech and {len(noise)} noise files to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_make_specs(args, cfg) -> int:
    from .jsonl import read_jsonl, write_jsonl
    from .synthetic import make_specs

    corpus = Path(args.corpus)
    speech = sorted(str(p.resolve()) for p in (corpus / "speech").glob("*.wav"))
    noise = sorted(str(p.resolve()) for p in (corpus / "noise").glob("*.wav"))
    if not speech or not noise:
        raise ManifestError(f"{corpus} needs speech/*.wav and noise/*.wav",
                            [str(corpus / d) for d, f in (("speech", speech), ("noise", noise)) if not f])
    seconds = args.clip_seconds if args.clip_seconds is not None else cfg.mixer.clip_seconds
    specs = make_specs(speech, noise, read_jsonl(args.rirs), args.count, args.seed, tuple(cfg.mixer.snr_range),
                       seconds, args.prefix)
    write_jsonl(args.out, [s.to_dict() for s in specs])
    print(f"wrote {len(specs)} specs to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_synth(args, cfg: PipelineConfig) -> int:
    from .jsonl import read_jsonl
    from .mixer import synthesize_dataset

    cfg = cfg.override("mixer", target=args.target, ref_channel=args.ref_channel)
    rows = synthesize_dataset(read_jsonl(args.specs), args.rirs, args.out, cfg.mixer.sample_rate,
                              cfg.mixer.ref_channel, cfg.mixer.target, tuple(cfg.mixer.snr_range),
                              jobs=args.jobs, extra=_echo(cfg))
    print(f"wrote {len(rows)} clips to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_train(args, cfg: PipelineConfig) -> int:
    from .enhance.estimator import MaskEstimator, save_checkpoint
    from .enhance.training import ManifestDataset, train

    cfg = cfg.override("train", epochs=args.epochs, lr=args.lr, batch_size=args.batch_size, loss=args.loss,
                       seed=args.seed, max_clips=args.max_clips, segment_seconds=args.segment_seconds)
    cfg = cfg.override("model", hidden=args.hidden, layers=args.layers)
    cfg = cfg.override("geometry", topology=args.topology)
    stft_config = cfg.stft_config()
    selection = cfg.selection()
    train_set = ManifestDataset(args.train, stft_config, selection, cfg.train.max_clips)
    dev_set = ManifestDataset(args.dev, stft_config, selection)
    model = MaskEstimator(stft_config.n_bins, cfg.model.hidden, cfg.model.layers, cfg.model.bound, cfg.model.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    def progress(row):
        print(f"epoch {row['epoch']}: train {row['train_loss']:.4f} dev {row['dev_loss']:.4f} lr {row['lr']:g}",
              file=sys.stderr)

    model, _ = train(model, train_set, dev_set, cfg.train, stft_config, Path(str(out) + ".log.jsonl"), progress)
    save_checkpoint(model, out, cfg.to_dict())
    return EXIT_OK


def _streaming_config(cfg: PipelineConfig):
    if cfg.stft.get("padding", "causal") != "causal":
        raise ConfigurationError("--streaming needs causal framing; remove stft.padding or set it to 'causal'")
    return cfg.stft_config().with_padding("causal")


def cmd_enhance(args, cfg: PipelineConfig) -> int:
    from .audio import read_wav, write_wav
    from .enhance.estimator import load_checkpoint
    from .enhance.pipeline import enhance_clip

    cfg = cfg.override("geometry", topology=args.topology)
    stft_config = _streaming_config(cfg) if args.streaming else cfg.stft_config()
    mode = "streaming" if args.streaming else "offline"
    model = load_checkpoint(args.model)
    selection = cfg.selection()
    if args.manifest:
        from .jsonl import read_jsonl, resolve

        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        rows = read_jsonl(args.manifest)
        for row in rows:
            samples, rate = read_wav(resolve(args.manifest, row["mixture"]))
            y = enhance_clip(samples, model, selection, stft_config, mode)
            write_wav(out_dir / f"{row['clip_id']}.wav", y, rate)
        print(f"enhanced {len(rows)} clips into {out_dir}", file=sys.stderr)
        return EXIT_OK
    samples, rate = read_wav(args.input)
    if rate != stft_config.sample_rate:
        raise ConfigurationError(f"{args.input}: sample rate {rate} != {stft_config.sample_rate}")
    write_wav(args.out, enhance_clip(samples, model, selection, stft_config, mode), rate)
    return EXIT_OK


def cmd_eval(args, cfg: PipelineConfig) -> int:
    from .evaluate.report import evaluate_dataset

    pesq = args.pesq or cfg.evaluate.pesq_executable
    report = evaluate_dataset(args.manifest, args.enhanced, pesq)
    if args.out:
        report.write(args.out)
    summary = report.summary()
    _dump(summary["aggregate"])
    for item in report.missing:
        print(f"missing: {item['clip_id']}: {', '.join(item['files'])}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_RUNTIME


def cmd_rtf(args, cfg: PipelineConfig) -> int:
    from .audio import read_wav
    from .enhance.estimator import MaskEstimator, load_checkpoint
    from .enhance.pipeline import StreamingEnhancer, enhance_clip
    from .evaluate.rtf import measure_rtf

    cfg = cfg.override("geometry", topology=args.topology)
    selection = cfg.selection()
    if args.model:
        model = load_checkpoint(args.model)
    else:
        model = MaskEstimator(cfg.stft_config().n_bins, cfg.model.hidden, cfg.model.layers, cfg.model.bound,
                              cfg.model.seed)
        model.eval()
    if args.input:
        samples, rate = read_wav(args.input)
    else:
        rate = cfg.mixer.sample_rate
        n_ch = cfg.geometry.build().num_mics
        samples = np.random.default_rng(0).standard_normal((n_ch, int(args.seconds * rate))) * 0.05
    if args.offline:
        stft_config = cfg.stft_config()

        def processor(x):
            return enhance_clip(x, model, selection, stft_config, "offline")
    else:
        stft_config = _streaming_config(cfg)

        def processor(x):
            return StreamingEnhancer(model, selection, stft_config).run(x)

    reps = args.repetitions or cfg.evaluate.rtf_repetitions
    report = measure_rtf(processor, samples, reps, sample_rate=rate)
    doc = report.to_dict()
    doc["mode"] = "offline" if args.offline else "streaming"
    _dump(doc, args.out)
    if args.out:
        print(f"rtf {report.rtf:.4f}", file=sys.stderr)
    return EXIT_OK


def cmd_mos(args, cfg) -> int:
    from .evaluate.mos import aggregate_mos, read_ratings

    ratings = read_ratings(args.ratings)
    baseline = None
    if args.baseline:
        per_clip: dict = {}
        for rec in read_ratings(args.baseline):
            per_clip.setdefault(rec.clip_id, []).append(rec)
        baseline = {c: {s: float(np.mean([getattr(r, s) for r in recs])) for s in ("mos", "smos", "nmos")}
                    for c, recs in per_clip.items()}
    _dump(aggregate_mos(ratings, baseline), args.out)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="farfield", description="Far-field multi-array speech enhancement toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help=f"TOML config file (default: ${CONFIG_ENV})")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help_text, aliases=()):
        p = sub.add_parser(name, help=help_text, description=help_text, aliases=list(aliases))
        p.add_argument("--config", default=argparse.SUPPRESS, help=f"TOML config file (default: ${CONFIG_ENV})")
        p.set_defaults(func=func)
        return p

    p = add("gen-rirs", cmd_gen_rirs, "Sample rooms and write multichannel RIRs plus rirs.jsonl.")
    p.add_argument("--topology", help="circular16, linear_uniform8, linear_nonuniform8 or dual_linear16")
    p.add_argument("--count", type=int, required=True, help="number of RIR files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sources-per-room", type=int, default=2, help="RIRs drawn from each sampled room")
    p.add_argument("--max-order", type=int, help="reflection order limit (default: until the tail is covered)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = add("make-corpus", cmd_make_corpus, "Write synthetic speech-like and noise source WAVs.")
    p.add_argument("--out", required=True)
    p.add_argument("--speech", type=int, default=20, help="number of speech files")
    p.add_argument("--noise", type=int, default=10, help="number of noise files")
    p.add_argument("--seconds", type=float, default=8.0)
    p.add_argument("--seed", type=int, default=0)

    p = add("make-specs", cmd_make_specs, "Draw random mixture specs from a source corpus and an RIR manifest.")
    p.add_argument("--corpus", required=True, help="directory with speech/ and noise/ subdirectories")
    p.add_argument("--rirs", required=True, help="rirs.jsonl")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clip-seconds", type=float)
    p.add_argument("--prefix", default="clip")
    p.add_argument("--out", required=True, help="specs.jsonl to write")

    p = add("synth", cmd_synth, "Render noisy multichannel mixtures from specs.", aliases=("synthesize",))
    p.add_argument("--specs", required=True, help="specs.jsonl")
    p.add_argument("--rirs", required=True, help="rirs.jsonl")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--target", choices=("reverberant", "direct"))
    p.add_argument("--ref-channel", type=int, help="0-based reference channel")
    p.add_argument("--jobs", type=int, default=1)

    p = add("train", cmd_train, "Train the mask estimator.")
    p.add_argument("--train", required=True, help="training dataset.jsonl")
    p.add_argument("--dev", required=True, help="dev dataset.jsonl")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--topology")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--loss", choices=("neg_sisnr", "mask_mse"))
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--max-clips", type=int, help="use only the first N training clips")
    p.add_argument("--segment-seconds", type=float, help="random training crops of this length")

    p = add("enhance", cmd_enhance, "Enhance a multichannel WAV (or every clip of a manifest).")
    p.add_argument("--model", required=True, help="checkpoint")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="input", help="multichannel input WAV")
    src.add_argument("--manifest", help="dataset.jsonl; writes <out>/<clip_id>.wav")
    p.add_argument("--out", required=True, help="output WAV (or directory with --manifest)")
    p.add_argument("--topology")
    p.add_argument("--streaming", action="store_true", help="causal frame-by-frame processing")

    p = add("eval", cmd_eval, "Score enhanced files against clean references.")
    p.add_argument("--manifest", required=True)
    p.add_argument("--enhanced", required=True, help="directory of <clip_id>.wav files")
    p.add_argument("--out", help="directory for metrics.jsonl, metrics.csv, summary.json")
    p.add_argument("--pesq", help="external PESQ executable")

    p = add("rtf", cmd_rtf, "Measure the real-time factor of the enhancement path on one thread.")
    p.add_argument("--model", help="checkpoint (default: untrained full-size model)")
    p.add_argument("--in", dest="input", help="multichannel WAV (default: synthetic noise)")
    p.add_argument("--seconds", type=float, default=6.0, help="length of the synthetic clip")
    p.add_argument("--topology")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--offline", action="store_true", help="time the offline path instead of streaming")
    p.add_argument("--out", help="report JSON (default: stdout)")

    p = add("mos", cmd_mos, "Aggregate ACR ratings (CSV: clip_id,rater_id,mos,smos,nmos).")
    p.add_argument("--ratings", required=True)
    p.add_argument("--baseline", help="ratings CSV of the noisy baseline")
    p.add_argument("--out", help="summary JSON (default: stdout)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(getattr(args, "config", None))
        return args.func(args, cfg)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for item in exc.missing:
            print(f"  missing: {item}", file=sys.stderr)
        return EXIT_RUNTIME
    except (FarfieldError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""``twotrack`` command line: data synthesis, codec and decoder training, generation, evaluation."""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError, NumericError, PlanError, TwoTrackError
from .commands import (cmd_evaluate, cmd_generate, cmd_inspect_attention, cmd_synth_data,
                       cmd_train, cmd_train_codec, mix_stems, score_clip)
from .config import ExperimentConfig
from .evaluation import ClipScore, EvalReport, parity_masses, snr_db

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
# for these --out names the experiment root; the others write results into --out
BUILD_COMMANDS = ("synth-data", "train-codec", "train")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--pattern", help="token pattern, e.g. Mixed or InterleavingAV")
    common.add_argument("--out", help="experiment root (synth-data, train-codec, train) or "
                        "results directory (generate, evaluate, inspect-attention)")

    parser = _Parser(prog="twotrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("synth-data", parents=[common], help="synthesize and filter the corpus")
    sub.add_parser("train-codec", parents=[common], help="fit the residual quantizer")

    p = sub.add_parser("train", parents=[common], help="run training stages")
    p.add_argument("--stage", action="append", help="stage to run (repeatable); default all")
    p.add_argument("--resume", action="store_true", help="continue from periodic checkpoints")

    def model_flags(p):
        p.add_argument("--checkpoint", help="model checkpoint (default: latest stage)")
        p.add_argument("--codec", help="codebook file (default: the experiment's codec)")

    p = sub.add_parser("generate", parents=[common], help="sample a song")
    model_flags(p)
    p.add_argument("--lyrics", required=True)
    p.add_argument("--caption", required=True)
    p.add_argument("--voice-ref", help="16-bit mono WAV; omit for voice-free generation")
    p.add_argument("--temperature", type=float)
    p.add_argument("--top-k", type=int)
    p.add_argument("--max-frames", type=int)

    p = sub.add_parser("evaluate", parents=[common], help="score a checkpoint on held-out clips")
    model_flags(p)
    p.add_argument("--manifest", help="clips to score (default: held-out manifest)")
    p.add_argument("--limit", type=int, help="score at most this many clips (0 = all)")
    p.add_argument("--ground-truth", action="store_true",
                   help="score the reference stems instead of generated audio")

    p = sub.add_parser("inspect-attention", parents=[common], help="export attention maps")
    model_flags(p)
    p.add_argument("--clip", required=True, help="clip id from the manifest")
    p.add_argument("--manifest", help="manifest holding the clip (default: training corpus)")
    return parser


def load_config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.experiment.seed = args.seed
    if args.pattern is not None:
        cfg.experiment.pattern = args.pattern
    if args.out is not None and args.command in BUILD_COMMANDS:
        cfg.experiment.out = args.out
    return cfg.validate()


def run(args, out=print):
    cfg = load_config(args)
    cmd = args.command
    if cmd == "synth-data":
        report = cmd_synth_data(cfg)
        out(f"kept {report['kept']} of {report['total']} clips; rejected {report['rejected']}; "
            f"{report['heldout']} held out")
    elif cmd == "train-codec":
        cb, path = cmd_train_codec(cfg)
        energies = ", ".join(f"{e:.4f}" for e in cb.train_residuals)
        out(f"wrote {path}; mean residual energy per stage: {energies}")
    elif cmd == "train":
        cmd_train(cfg, args.stage, args.resume, log=out)
    elif cmd == "generate":
        dest = args.out or str(cfg.root / "generated")
        paths = cmd_generate(cfg, args.lyrics, args.caption, dest, args.checkpoint,
                             args.voice_ref, args.temperature, args.top_k, args.max_frames,
                             args.codec)
        out("wrote " + ", ".join(str(p) for p in paths.values()))
    elif cmd == "evaluate":
        dest = args.out or str(cfg.root / "eval")
        report = cmd_evaluate(cfg, dest, args.checkpoint, args.manifest, args.limit,
                              "ground-truth" if args.ground_truth else "generated", args.codec)
        agg = report.aggregate
        out(" ".join(f"{k}={v:.4f}" for k, v in agg.items()) + f" over {len(report.clips)} clips")
    elif cmd == "inspect-attention":
        dest = args.out or str(cfg.root / "attention" / args.clip)
        maps = cmd_inspect_attention(cfg, args.clip, dest, args.checkpoint, args.manifest,
                                     args.codec)
        for i, (w, _) in enumerate(maps):
            same, cross = parity_masses(w)
            out(f"layer {i}: same-parity mass {same:.4f}, cross-parity mass {cross:.4f}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except (ConfigError, PlanError) as exc:
        print(f"twotrack: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"twotrack: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TwoTrackError, OSError) as exc:
        print(f"twotrack: {exc}", file=sys.stderr)
        return EXIT_DATA


__all__ = ["ClipScore", "EvalReport", "EXIT_DATA", "EXIT_NUMERIC", "EXIT_OK", "EXIT_USAGE",
           "ExperimentConfig", "build_parser", "cmd_evaluate", "cmd_generate",
           "cmd_inspect_attention", "cmd_synth_data", "cmd_train", "cmd_train_codec", "main",
           "mix_stems", "parity_masses", "run", "score_clip", "snr_db"]

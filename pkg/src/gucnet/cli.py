"""``gucnet`` command line: gen-data, train, eval, ablate.

Exit codes: 0 success, 2 usage or config error, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .checkpoint import BadCheckpoint, load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .data import DataError, gen_gaussian_mixture, load_csv, load_gfv1, save_gfv1, stratified_split
from .evaluation import HAMMING_CONDITIONS, ablate_binning, ablate_hamming, evaluate
from .model import Mode
from .numeric import ShapeError
from .prototypes import PrototypeError
from .training import ConfigError, train_baseline, train_prototype, train_texture

log = logging.getLogger("gucnet")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2)


def cmd_gen_data(args) -> int:
    sigma = args.sigma if args.sigma is not None else (0.9 if args.kind == "cluttered" else 0.05)
    if sigma < 0 or args.radius <= 0:
        raise UsageError("sigma must be >= 0 and radius > 0")
    if args.classes < 2 or args.dim < args.classes or args.per_class < 1:
        raise UsageError("need --classes >= 2, --dim >= --classes and --per-class >= 1")
    bundle = gen_gaussian_mixture(args.classes, args.dim, args.per_class, args.radius, sigma, args.seed,
                                  name=f"{args.kind}-seed{args.seed}")
    save_gfv1(bundle, args.output)
    print(f"N={bundle.n} D={bundle.dim} C={bundle.num_classes} -> {args.output}")
    return EXIT_OK


def run_experiment(cfg: ExperimentConfig, output_dir: Path) -> dict:
    """Train per ``cfg``; write model.gucw, metrics.jsonl and report.json into ``output_dir``."""
    output_dir.mkdir(parents=True, exist_ok=True)
    x = cfg.data.load()
    tc = cfg.train
    lines = []

    def on_epoch(m):
        lines.append(json.dumps(m.to_record(cfg.record_wall_time)))
        log.info("epoch %d ce=%.4f test_acc=%.4f", m.epoch, m.ce_loss, m.test_acc)

    extra = {}
    if cfg.mode is Mode.BASELINE:
        result = train_baseline(x, tc, on_epoch=on_epoch)
    elif cfg.mode is Mode.PROTOTYPE:
        g = cfg.guide.prototypes(x.num_classes, tc.latent_dim)
        result = train_prototype(x, g, tc, on_epoch=on_epoch)
        extra["prototype"] = {"kind": g.kind, "ones": g.ones, "seed": g.seed}
    else:
        y = cfg.guide.data.load()
        binning = cfg.guide.cobinning(x.num_classes)
        result = train_texture(x, y, binning, tc, on_epoch=on_epoch)
        extra["binning"] = {"kind": binning.kind, "seed": binning.seed, "permutation": binning.mapping.tolist()}

    save_checkpoint(result.model, output_dir / "model.gucw")
    (output_dir / "metrics.jsonl").write_text("".join(line + "\n" for line in lines))
    _, test = result.split.apply(x)
    final_eval = evaluate(result.model.eval(), test)
    report = {
        "mode": cfg.mode.value,
        "test_accuracy": final_eval.accuracy,
        "train_accuracy": result.final.train_acc,
        "epochs": tc.epochs,
        "split": {"ratio": tc.split_ratio, "seed": tc.seed,
                  "num_train": int(result.split.train.size), "num_test": int(result.split.test.size)},
        "eval": final_eval.to_dict(),
        **extra,
        "config": cfg.to_dict(),
    }
    (output_dir / "report.json").write_text(_dump(report) + "\n")
    return report


def _load_config(path) -> ExperimentConfig:
    try:
        return ExperimentConfig.load(path)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except (ConfigError, PrototypeError) as exc:
        raise UsageError(f"invalid config: {exc}") from None


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    out = Path(args.output_dir) if args.output_dir else Path(cfg.output_dir)
    report = run_experiment(cfg, out)
    print(_dump({k: report[k] for k in ("mode", "test_accuracy", "train_accuracy", "epochs")}))
    return EXIT_OK


def _load_data(path, label_column):
    if str(path).endswith(".csv"):
        return load_csv(path, label_column)
    return load_gfv1(path)


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    data = _load_data(args.data, args.label_column)
    if args.split_seed is not None:
        _, data = stratified_split(data, args.split_ratio, args.split_seed).apply(data)
    print(_dump(evaluate(model, data).to_dict()))
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _load_config(args.config)
    study_mode = {"hamming": Mode.PROTOTYPE, "binning": Mode.TEXTURE}[args.study]
    if cfg.mode is not study_mode:
        raise UsageError(f"--study {args.study} needs a {study_mode.value}-mode config, got {cfg.mode.value}")
    x = cfg.data.load()
    if args.study == "hamming":
        report = ablate_hamming(x, cfg.train, args.conditions or HAMMING_CONDITIONS,
                                prototype_seed=cfg.guide.prototype_seed, jobs=args.jobs)
    else:
        y = cfg.guide.data.load()
        report = ablate_binning(x, y, cfg.train, args.shuffle_seeds, jobs=args.jobs)
    out = Path(args.output_dir) if args.output_dir else Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {**report.to_dict(), "configs": report.configs}
    text = _dump(payload) + "\n"
    (out / f"ablation-{args.study}.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gucnet", description="Guided-clustering classifier experiments.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic Gaussian-mixture GFV1 file")
    g.add_argument("--kind", choices=["cluttered", "separable"], default="cluttered")
    g.add_argument("--classes", type=int, default=7)
    g.add_argument("--dim", type=int, default=64)
    g.add_argument("--per-class", type=int, default=400)
    g.add_argument("--radius", type=float, default=1.0)
    g.add_argument("--sigma", type=float, default=None, help="noise std (default 0.9 cluttered, 0.05 separable)")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train from a JSON experiment config")
    t.add_argument("config")
    t.add_argument("--output-dir", default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a GFV1 or CSV file")
    e.add_argument("checkpoint")
    e.add_argument("data")
    e.add_argument("--label-column", type=int, default=-1)
    e.add_argument("--split-seed", type=int, default=None, help="evaluate only the test side of this split")
    e.add_argument("--split-ratio", type=float, default=0.7)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="run the Hamming-separation or co-binning ablation")
    a.add_argument("config")
    a.add_argument("--study", choices=["hamming", "binning"], required=True)
    a.add_argument("--conditions", nargs="+", choices=list(HAMMING_CONDITIONS), default=None)
    a.add_argument("--shuffle-seeds", nargs="+", type=int, default=[1, 2, 3])
    a.add_argument("--jobs", type=int, default=1)
    a.add_argument("--output-dir", default=None)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with 2
    except BadCheckpoint as exc:
        print(f"gucnet: BadCheckpoint: {exc}", file=sys.stderr)
    except DataError as exc:
        print(f"gucnet: {type(exc).__name__}: {exc}", file=sys.stderr)
    except (ShapeError, ConfigError, OSError) as exc:
        print(f"gucnet: error: {exc}", file=sys.stderr)
    return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

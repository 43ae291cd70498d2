"""Baseline vs prototype-guided vs texture-guided on the frozen cluttered benchmark.

    python3 scripts/run_benchmark.py --seeds 0 1 2 --out runs/benchmark.json
"""
import argparse
import json
import time
from pathlib import Path

from gucnet import benchmark as bm
from gucnet.data import make_cobinning, stratified_split
from gucnet.prototypes import make_prototypes
from gucnet.training import train_baseline, train_prototype, train_texture


def run(seed, epochs, alternation):
    x, guide = bm.cluttered(), bm.separable()
    cfg = bm.config(seed=seed, epochs=epochs)
    split = stratified_split(x, cfg.split_ratio, seed)
    out = {}
    for name, fn in [
        ("baseline", lambda: train_baseline(x, cfg, split=split)),
        ("prototype", lambda: train_prototype(
            x, make_prototypes(x.num_classes, cfg.latent_dim, "hmax"),
            cfg.with_(mode="prototype", alternation=alternation), split=split)),
        ("texture", lambda: train_texture(x, guide, make_cobinning(x.num_classes, "identity"),
                                          cfg.with_(mode="texture"), split=split)),
    ]:
        t0 = time.perf_counter()
        res = fn()
        out[name] = {"test_acc": res.final.test_acc, "train_acc": res.final.train_acc,
                     "best_test_acc": max(m.test_acc for m in res.history),
                     "seconds": round(time.perf_counter() - t0, 1)}
        print(f"seed {seed} {name:9s} test {res.final.test_acc:.4f} train {res.final.train_acc:.4f}", flush=True)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[bm.TRAIN_SEED])
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--alternation", choices=["per_batch", "joint"], default="per_batch")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    results = {str(s): run(s, args.epochs, args.alternation) for s in args.seeds}
    text = json.dumps(results, indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)


if __name__ == "__main__":
    main()

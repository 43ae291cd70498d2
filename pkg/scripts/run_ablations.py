"""Hamming-separation and co-binning ablations on the frozen benchmark.

    python3 scripts/run_ablations.py --study both --jobs 2 --out runs/ablations.json
"""
import argparse
import json
from pathlib import Path

from gucnet import benchmark as bm
from gucnet.evaluation import ablate_binning, ablate_hamming


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--study", choices=["hamming", "binning", "both"], default="both")
    ap.add_argument("--shuffle-seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    x = bm.cluttered()
    out = {}
    if args.study in ("hamming", "both"):
        rep = ablate_hamming(x, bm.config("prototype", epochs=args.epochs), jobs=args.jobs)
        out["hamming"] = rep.to_dict()
        for name, r, _ in rep.conditions:
            print(f"hamming {name:7s} {r.accuracy:.4f}", flush=True)
    if args.study in ("binning", "both"):
        rep = ablate_binning(x, bm.separable(), bm.config("texture", epochs=args.epochs),
                             shuffle_seeds=args.shuffle_seeds, jobs=args.jobs)
        out["binning"] = rep.to_dict()
        for name, r, _ in rep.conditions:
            print(f"binning {name:11s} {r.accuracy:.4f}", flush=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()

"""Accuracy reports and the two ablation harnesses."""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import DatasetBundle, SplitView, make_cobinning, stratified_split
from .model import GucnetModel, Mode
from .numeric import ShapeError
from .prototypes import Separation, make_prototypes
from .training import ConfigError, TrainConfig, train_prototype, train_texture


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # rows: true class, cols: predicted class
    per_class_recall: list
    num_test: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "per_class_recall": self.per_class_recall,
            "num_test": self.num_test,
        }


def report_from_predictions(predicted, labels, num_classes: int) -> EvalReport:
    predicted = np.asarray(predicted, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predicted), 1)
    n = int(labels.size)
    support = confusion.sum(axis=1)
    recall = [float(confusion[c, c] / support[c]) if support[c] else None for c in range(num_classes)]
    acc = float(np.trace(confusion) / n) if n else 0.0
    return EvalReport(acc, confusion, recall, n)


def evaluate(model: GucnetModel, data: DatasetBundle) -> EvalReport:
    """Argmax predictions of the X tower + head; guide data is never needed."""
    if data.dim != model.tower_x.in_dim:
        raise ShapeError(f"model expects {model.tower_x.in_dim}-dim features, data has {data.dim}")
    if data.num_classes != model.num_classes:
        raise ShapeError(f"model has {model.num_classes} classes, data has {data.num_classes}")
    return report_from_predictions(model.predict(data.features), data.labels, model.num_classes)


@dataclass
class AblationReport:
    study: str
    conditions: list  # [(label, EvalReport, details dict)]
    fingerprint: str
    configs: dict = field(default_factory=dict)

    def accuracy(self, label: str) -> float:
        for name, rep, _ in self.conditions:
            if name == label:
                return rep.accuracy
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "study": self.study,
            "fingerprint": self.fingerprint,
            "conditions": [
                {"label": name, **details, "report": rep.to_dict()} for name, rep, details in self.conditions
            ],
        }


def split_fingerprint(split: SplitView, cfg: TrainConfig) -> str:
    h = hashlib.sha256()
    h.update(split.train.astype("<i8").tobytes())
    h.update(b"|")
    h.update(split.test.astype("<i8").tobytes())
    h.update(f"|seed={cfg.seed}".encode())
    return h.hexdigest()[:16]


def _run_prototype_condition(args):
    x, cfg, split, separation, proto_seed = args
    g = make_prototypes(x.num_classes, cfg.latent_dim, separation, proto_seed)
    result = train_prototype(x, g, cfg, split=split)
    _, test = split.apply(x)
    details = {"separation": separation, "ones": g.ones, "final_test_acc": result.final.test_acc}
    return evaluate(result.model.eval(), test), details


def _run_texture_condition(args):
    x, y, cfg, split, kind, seed = args
    binning = make_cobinning(x.num_classes, kind, seed)
    result = train_texture(x, y, binning, cfg, split=split)
    _, test = split.apply(x)
    details = {"binning": kind, "binning_seed": seed, "permutation": binning.mapping.tolist(),
               "final_test_acc": result.final.test_acc}
    return evaluate(result.model.eval(), test), details


def _map(fn, jobs, jobs_n: int):
    if jobs_n <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=jobs_n) as pool:
        return list(pool.map(fn, jobs))


HAMMING_CONDITIONS = ("random", "h2", "hhalf", "hmax")


def ablate_hamming(
    x: DatasetBundle,
    cfg: TrainConfig,
    conditions: Sequence[str] = HAMMING_CONDITIONS,
    prototype_seed: Optional[int] = None,
    split: Optional[SplitView] = None,
    jobs: int = 1,
) -> AblationReport:
    """Train the prototype model once per prototype separation, everything else fixed."""
    if Mode(cfg.mode) is not Mode.PROTOTYPE:
        raise ConfigError("the Hamming ablation needs a prototype-mode config")
    conditions = [Separation(c).value for c in conditions]
    split = split or stratified_split(x, cfg.split_ratio, cfg.seed)
    seed = cfg.seed if prototype_seed is None else prototype_seed
    jobs_args = [(x, cfg, split, c, seed) for c in conditions]
    results = _map(_run_prototype_condition, jobs_args, jobs)
    configs = {c: {**cfg.to_dict(), "prototype": c} for c in conditions}
    return AblationReport(
        "hamming",
        [(c, rep, det) for c, (rep, det) in zip(conditions, results)],
        split_fingerprint(split, cfg),
        configs,
    )


def ablate_binning(
    x: DatasetBundle,
    y: DatasetBundle,
    cfg: TrainConfig,
    shuffle_seeds: Sequence[int] = (1,),
    split: Optional[SplitView] = None,
    jobs: int = 1,
) -> AblationReport:
    """One identity-binned texture run and one run per shuffled binning seed."""
    if Mode(cfg.mode) is not Mode.TEXTURE:
        raise ConfigError("the binning ablation needs a texture-mode config")
    split = split or stratified_split(x, cfg.split_ratio, cfg.seed)
    plan = [("identity", None)] + [("shuffled", int(s)) for s in shuffle_seeds]
    results = _map(_run_texture_condition, [(x, y, cfg, split, k, s) for k, s in plan], jobs)
    labels = ["identity" if k == "identity" else f"shuffled-{s}" for k, s in plan]
    configs = {lab: {**cfg.to_dict(), "binning": k, "binning_seed": s} for lab, (k, s) in zip(labels, plan)}
    return AblationReport(
        "binning",
        [(lab, rep, det) for lab, (rep, det) in zip(labels, results)],
        split_fingerprint(split, cfg),
        configs,
    )


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False)

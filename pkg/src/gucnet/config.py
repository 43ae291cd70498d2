"""JSON experiment configs: training hyperparameters plus data and guide sources."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .data import (CoBinning, DatasetBundle, gen_gaussian_mixture, load_csv, load_gfv1, make_cobinning)
from .model import Mode
from .prototypes import PrototypeSet, Separation, make_multi_hot, make_prototypes
from .training import ConfigError, TrainConfig

_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_SYNTH_KEYS = {"classes", "dim", "per_class", "radius", "sigma", "seed"}
_TOP_KEYS = _TRAIN_KEYS | {"data", "guide", "output_dir", "record_wall_time"}


def _reject_unknown(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a JSON object")
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


@dataclass(frozen=True)
class DataSource:
    """Exactly one of a GFV1 path, a CSV path or synthetic generator parameters."""

    gfv1: Optional[str] = None
    csv: Optional[str] = None
    label_column: int = -1
    synthetic: Optional[dict] = None

    @classmethod
    def parse(cls, d, where: str, base: Path) -> "DataSource":
        _reject_unknown(d, {"gfv1", "csv", "label_column", "synthetic"}, where)
        given = [k for k in ("gfv1", "csv", "synthetic") if d.get(k) is not None]
        if len(given) != 1:
            raise ConfigError(f"{where} needs exactly one of gfv1, csv, synthetic (got {given or 'none'})")
        if "label_column" in d and "csv" not in given:
            raise ConfigError(f"{where}: label_column only applies to csv sources")
        synth = d.get("synthetic")
        if synth is not None:
            _reject_unknown(synth, _SYNTH_KEYS, f"{where}.synthetic")
            missing = {"classes", "dim", "per_class", "sigma"} - set(synth)
            if missing:
                raise ConfigError(f"{where}.synthetic is missing {', '.join(sorted(missing))}")
        resolve = lambda p: str((base / p).resolve()) if p is not None else None  # noqa: E731
        return cls(resolve(d.get("gfv1")), resolve(d.get("csv")), int(d.get("label_column", -1)), synth)

    def load(self) -> DatasetBundle:
        if self.gfv1 is not None:
            return load_gfv1(self.gfv1)
        if self.csv is not None:
            return load_csv(self.csv, self.label_column)
        s = self.synthetic
        return gen_gaussian_mixture(int(s["classes"]), int(s["dim"]), int(s["per_class"]),
                                    float(s.get("radius", 1.0)), float(s["sigma"]), int(s.get("seed", 0)))

    def to_dict(self) -> dict:
        if self.gfv1 is not None:
            return {"gfv1": self.gfv1}
        if self.csv is not None:
            return {"csv": self.csv, "label_column": self.label_column}
        return {"synthetic": dict(self.synthetic)}


@dataclass(frozen=True)
class GuideSource:
    """Prototype choice (prototype mode) or guide data plus co-binning (texture mode)."""

    prototype: Optional[str] = None
    ones: Optional[int] = None
    prototype_seed: int = 0
    data: Optional[DataSource] = None
    binning: str = "identity"
    binning_seed: Optional[int] = None

    def prototypes(self, num_classes: int, dim: int) -> PrototypeSet:
        if self.prototype == "multi_hot":
            return make_multi_hot(num_classes, dim, self.ones)
        return make_prototypes(num_classes, dim, self.prototype, self.prototype_seed)

    def cobinning(self, num_classes: int) -> CoBinning:
        return make_cobinning(num_classes, self.binning, self.binning_seed)

    def to_dict(self) -> dict:
        if self.prototype is not None:
            d = {"prototype": self.prototype, "seed": self.prototype_seed}
            if self.ones is not None:
                d["ones"] = self.ones
            return d
        return {"data": self.data.to_dict(), "binning": self.binning, "binning_seed": self.binning_seed}


def _parse_guide(d, mode: Mode, base: Path) -> Optional[GuideSource]:
    if mode is Mode.BASELINE:
        if d is not None:
            raise ConfigError("baseline mode takes no guide")
        return None
    if d is None:
        raise ConfigError(f"{mode.value} mode needs a guide section")
    if mode is Mode.PROTOTYPE:
        _reject_unknown(d, {"prototype", "ones", "seed"}, "guide")
        kind = d.get("prototype", "hmax")
        if kind == "multi_hot":
            if not isinstance(d.get("ones"), int):
                raise ConfigError("guide.prototype=multi_hot needs an integer 'ones'")
        else:
            try:
                Separation(kind)
            except ValueError:
                raise ConfigError(f"unknown prototype kind {kind!r}") from None
            if "ones" in d:
                raise ConfigError("guide.ones only applies to prototype=multi_hot")
        return GuideSource(prototype=kind, ones=d.get("ones"), prototype_seed=int(d.get("seed", 0)))
    _reject_unknown(d, {"data", "binning", "binning_seed"}, "guide")
    if "data" not in d:
        raise ConfigError("texture mode needs guide.data")
    binning = d.get("binning", "identity")
    if binning not in ("identity", "shuffled"):
        raise ConfigError(f"unknown binning {binning!r}")
    seed = d.get("binning_seed")
    if binning == "shuffled" and seed is None:
        raise ConfigError("shuffled binning needs binning_seed")
    return GuideSource(data=DataSource.parse(d["data"], "guide.data", base), binning=binning,
                       binning_seed=None if seed is None else int(seed))


@dataclass(frozen=True)
class ExperimentConfig:
    train: TrainConfig
    data: DataSource
    guide: Optional[GuideSource]
    output_dir: str = "runs/default"
    record_wall_time: bool = False
    source: dict = field(default_factory=dict, compare=False)

    @property
    def mode(self) -> Mode:
        return Mode(self.train.mode)

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "ExperimentConfig":
        _reject_unknown(d, _TOP_KEYS, "config")
        if "data" not in d:
            raise ConfigError("config needs a data section")
        train_kwargs = {k: v for k, v in d.items() if k in _TRAIN_KEYS}
        try:
            train = TrainConfig(**train_kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        mode = Mode(train.mode)
        return cls(
            train=train,
            data=DataSource.parse(d["data"], "data", base),
            guide=_parse_guide(d.get("guide"), mode, base),
            output_dir=str((base / d.get("output_dir", "runs/default")).resolve()),
            record_wall_time=bool(d.get("record_wall_time", False)),
            source=d,
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d, path.parent)

    def to_dict(self) -> dict:
        out = self.train.to_dict()
        out["data"] = self.data.to_dict()
        if self.guide is not None:
            out["guide"] = self.guide.to_dict()
        out["output_dir"] = self.output_dir
        out["record_wall_time"] = self.record_wall_time
        return out

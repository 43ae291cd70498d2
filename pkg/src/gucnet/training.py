"""Optimizers and the baseline, prototype-guided and texture-guided training loops."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .data import CoBinning, DataError, DatasetBundle, SplitView, batches, paired_batches, stratified_split
from .model import GucnetModel, Mode, build_model
from .numeric import Rng64, ShapeError
from .prototypes import PrototypeSet


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "baseline"
    epochs: int = 50
    learning_rate: float = 0.001
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    batch_size: int = 32
    alpha: float = 0.01
    alternation: str = "per_batch"
    seed: int = 0
    latent_dim: int = 128
    hidden: tuple = (1024, 512)
    dropout: float = 0.5
    split_ratio: float = 0.7

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        try:
            Mode(self.mode)
        except ValueError:
            raise ConfigError(f"unknown mode {self.mode!r}") from None
        if not self.alpha < 1.0:
            raise ConfigError("alpha must be < 1.0")
        if self.alpha < 0.0:
            raise ConfigError("alpha must be non-negative")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if not self.learning_rate > 0.0:
            raise ConfigError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.alternation not in ("per_batch", "joint"):
            raise ConfigError(f"unknown alternation {self.alternation!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be at least 1")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError("split_ratio must lie strictly between 0 and 1")

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update of ``param`` in place.

    Computes ``lr * m_hat / (sqrt(v_hat) + eps)`` with m_hat, v_hat the
    bias-corrected moments, reusing buffers to keep large layers cheap.
    """
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise ShapeError(f"Adam shape mismatch: param {param.shape}, grad {grad.shape}, state {state.m.shape}")
    state.t += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * grad
    state.v *= beta2
    sq = np.square(grad)
    sq *= 1.0 - beta2
    state.v += sq
    # sq is reused as the denominator sqrt(v_hat) + eps
    np.sqrt(state.v, out=sq)
    sq /= np.sqrt(1.0 - beta2 ** state.t)
    sq += eps
    step = np.divide(state.m, sq, out=sq)
    step *= lr / (1.0 - beta1 ** state.t)
    param -= step


class Adam:
    """One state per parameter name; parameters missing from ``grads`` are left alone."""

    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state: dict[str, AdamState] = {}

    def step(self, model: GucnetModel, grads: dict) -> None:
        params = model.parameters()
        for name, g in grads.items():
            p = params[name]
            st = self.state.get(name)
            if st is None:
                st = self.state[name] = AdamState(np.zeros_like(p), np.zeros_like(p))
            adam_step(p, g, st, self.lr, self.beta1, self.beta2, self.eps)
        model.touch()


class Sgd:
    def __init__(self, lr: float = 0.01, momentum: float = 0.0):
        self.lr, self.momentum = lr, momentum
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, model: GucnetModel, grads: dict) -> None:
        params = model.parameters()
        for name, g in grads.items():
            p = params[name]
            if p.shape != g.shape:
                raise ShapeError(f"SGD shape mismatch for {name}: {p.shape} vs {g.shape}")
            v = self.velocity.setdefault(name, np.zeros_like(p))
            v *= self.momentum
            v += g
            p -= self.lr * v
        model.touch()


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    return Sgd(cfg.learning_rate, cfg.momentum)


@dataclass
class EpochMetrics:
    epoch: int
    ce_loss: float
    ml_loss: Optional[float]
    train_acc: float
    test_acc: float
    wall_ms: int
    ce_steps: int = 0
    ml_steps: int = 0

    def to_record(self, record_wall_time: bool = True) -> dict:
        return {
            "epoch": self.epoch,
            "ce_loss": self.ce_loss,
            "ml_loss": self.ml_loss,
            "train_acc": self.train_acc,
            "test_acc": self.test_acc,
            "wall_ms": self.wall_ms if record_wall_time else 0,
        }


@dataclass
class TrainResult:
    model: GucnetModel
    history: list
    split: SplitView
    config: TrainConfig
    extras: dict = field(default_factory=dict)

    @property
    def final(self) -> EpochMetrics:
        return self.history[-1]


def accuracy(model: GucnetModel, data: DatasetBundle) -> float:
    if data.n == 0:
        return 0.0
    return float(np.mean(model.predict(data.features) == data.labels))


def _check_mode(cfg: TrainConfig, mode: Mode):
    if Mode(cfg.mode) is not mode:
        raise ConfigError(f"config mode is {cfg.mode!r}, expected {mode.value!r}")


def _epoch_end(model, train, test, epoch, t0, ce_sum, ce_n, ml_sum, ml_n, ce_steps, ml_steps, on_epoch):
    model.eval()
    m = EpochMetrics(
        epoch=epoch,
        ce_loss=ce_sum / ce_n if ce_n else float("nan"),
        ml_loss=ml_sum / ml_n if ml_n else None,
        train_acc=accuracy(model, train),
        test_acc=accuracy(model, test),
        wall_ms=int(round((time.perf_counter() - t0) * 1000)),
        ce_steps=ce_steps,
        ml_steps=ml_steps,
    )
    if on_epoch is not None:
        on_epoch(m)
    return m


def _run_single_stream(x, cfg, model, split, on_epoch):
    train, test = split.apply(x)
    opt = make_optimizer(cfg)
    root = Rng64(cfg.seed)
    alternate = model.prototypes is not None and cfg.alternation == "per_batch"
    history = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        model.train()
        dropout_rng = root.child("dropout", epoch)
        ce_sum = ml_sum = 0.0
        ce_n = ml_n = ce_steps = ml_steps = 0
        for step, idx in enumerate(batches(train, cfg.batch_size, root.child("batches", epoch))):
            if not alternate:
                objective = "joint" if model.prototypes is not None else "ce"
            else:
                objective = "ce" if step % 2 == 0 else "ml"
            res = model.compute_gradients(
                train.features[idx], train.labels[idx], objective=objective, alpha=cfg.alpha, rng=dropout_rng
            )
            opt.step(model, res.grads)
            if res.ce_loss is not None:
                ce_sum += res.ce_loss * idx.size
                ce_n += idx.size
            if res.ml_loss is not None:
                ml_sum += res.ml_loss * idx.size
                ml_n += idx.size
            if objective == "ml":
                ml_steps += 1
            else:
                ce_steps += 1
        history.append(_epoch_end(model, train, test, epoch, t0, ce_sum, ce_n, ml_sum, ml_n,
                                  ce_steps, ml_steps, on_epoch))
    return history


def train_baseline(x: DatasetBundle, cfg: TrainConfig, split: Optional[SplitView] = None,
                   on_epoch=None) -> TrainResult:
    """Tower + head trained with cross-entropy on ``x`` alone."""
    _check_mode(cfg, Mode.BASELINE)
    split = split or stratified_split(x, cfg.split_ratio, cfg.seed)
    model = build_model(Mode.BASELINE, x.dim, x.num_classes, cfg.latent_dim,
                        hidden=cfg.hidden, dropout=cfg.dropout, seed=cfg.seed)
    history = _run_single_stream(x, cfg, model, split, on_epoch)
    return TrainResult(model, history, split, cfg)


def train_prototype(x: DatasetBundle, g: PrototypeSet, cfg: TrainConfig, split: Optional[SplitView] = None,
                    on_epoch=None) -> TrainResult:
    """Cross-entropy plus ``alpha`` times the L1 pull of each latent toward its class prototype.

    With ``alternation="per_batch"`` even batches step on the cross-entropy
    and odd batches on the weighted matching loss, sharing one optimizer.
    ``"joint"`` steps on the sum.
    """
    _check_mode(cfg, Mode.PROTOTYPE)
    if g.num_classes != x.num_classes:
        raise ConfigError(f"{g.num_classes} prototypes for {x.num_classes} classes")
    if g.dim != cfg.latent_dim:
        raise ConfigError(f"prototype dimension {g.dim} != latent_dim {cfg.latent_dim}")
    split = split or stratified_split(x, cfg.split_ratio, cfg.seed)
    model = build_model(Mode.PROTOTYPE, x.dim, x.num_classes, cfg.latent_dim,
                        hidden=cfg.hidden, dropout=cfg.dropout, seed=cfg.seed, prototypes=g)
    history = _run_single_stream(x, cfg, model, split, on_epoch)
    return TrainResult(model, history, split, cfg)


def train_texture(x: DatasetBundle, y: DatasetBundle, binning: CoBinning, cfg: TrainConfig,
                  split: Optional[SplitView] = None, on_epoch=None) -> TrainResult:
    """Two towers into one shared head, trained with cross-entropy on paired X/guide half-batches.

    Only the training part of ``x`` is used for fitting; the whole guide set
    is available to the guide stream. Accuracies are measured on ``x`` only.
    """
    _check_mode(cfg, Mode.TEXTURE)
    if not (x.num_classes == y.num_classes == binning.size):
        raise DataError(f"class counts differ: X {x.num_classes}, guide {y.num_classes}, binning {binning.size}")
    split = split or stratified_split(x, cfg.split_ratio, cfg.seed)
    train, test = split.apply(x)
    model = build_model(Mode.TEXTURE, x.dim, x.num_classes, cfg.latent_dim,
                        hidden=cfg.hidden, dropout=cfg.dropout, seed=cfg.seed, guide_dim=y.dim)
    opt = make_optimizer(cfg)
    root = Rng64(cfg.seed)
    history = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        model.train()
        dropout_rng = root.child("dropout", epoch)
        ce_sum, ce_n, steps = 0.0, 0, 0
        for xb, xl, yb, yl in paired_batches(train, y, binning, cfg.batch_size, root.child("batches", epoch)):
            res = model.compute_gradients(xb, xl, y=yb, y_labels=yl, rng=dropout_rng)
            opt.step(model, res.grads)
            ce_sum += res.ce_loss * (xl.size + yl.size)
            ce_n += xl.size + yl.size
            steps += 1
        history.append(_epoch_end(model, train, test, epoch, t0, ce_sum, ce_n, 0.0, 0, steps, 0, on_epoch))
    return TrainResult(model, history, split, cfg, {"binning": binning.mapping.tolist()})

"""Fully connected towers, shared classifier head, and the guided losses.

Backpropagation is written out by hand per layer. Weights are stored as
``(fan_in, fan_out)`` so a layer is ``x @ W + b``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .numeric import Rng64, ShapeError, relu, relu_backward, softmax_rows
from .prototypes import PrototypeSet


class Mode(str, Enum):
    BASELINE = "baseline"
    PROTOTYPE = "prototype"
    TEXTURE = "texture"


class StaleCacheError(RuntimeError):
    """Backward was called with a cache from before the last parameter update."""


class LabelError(ValueError):
    pass


def _he_uniform(rng: Rng64, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, (fan_in, fan_out))


class _Versioned:
    version = 0

    def touch(self):
        self.version += 1


@dataclass
class TowerCache:
    owner: "FcnTower"
    version: int
    inputs: list  # input to each linear layer
    pre: list  # pre-activation of each hidden layer
    masks: list  # scaled dropout mask per hidden layer, or None


class FcnTower(_Versioned):
    """Linear -> ReLU -> dropout for every hidden layer, then a plain linear layer to the latent."""

    def __init__(self, dims: Sequence[int], dropout: float = 0.5, rng: Optional[Rng64] = None):
        if len(dims) < 2:
            raise ShapeError("a tower needs at least an input and an output dimension")
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout probability must be in [0, 1)")
        self.dims = [int(d) for d in dims]
        self.dropout = float(dropout)
        self.training = True
        rng = rng or Rng64(0)
        self.weights = [_he_uniform(rng, a, b) for a, b in zip(self.dims[:-1], self.dims[1:])]
        self.biases = [np.zeros(b) for b in self.dims[1:]]

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    def params(self, prefix: str):
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            yield f"{prefix}.W{i}", w
            yield f"{prefix}.b{i}", b


def forward_latent(tower: FcnTower, x: np.ndarray, rng: Optional[Rng64] = None):
    """Map a batch to the latent layer. Returns ``(latent, cache)``.

    In training mode a fresh inverted-dropout mask is drawn from ``rng`` for
    every hidden layer; in eval mode dropout is the identity.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != tower.in_dim:
        raise ShapeError(f"tower expects inputs with {tower.in_dim} columns, got shape {x.shape}")
    use_dropout = tower.training and tower.dropout > 0.0
    if use_dropout and rng is None:
        raise ValueError("training-mode forward needs an rng for dropout")
    keep = 1.0 - tower.dropout
    inputs, pre, masks = [], [], []
    h = x
    last = len(tower.weights) - 1
    for i, (w, b) in enumerate(zip(tower.weights, tower.biases)):
        inputs.append(h)
        z = h @ w + b
        if i == last:
            h = z
            break
        pre.append(z)
        h = relu(z)
        if use_dropout:
            mask = (rng.random(h.shape) < keep) / keep
            masks.append(mask)
            h = h * mask
        else:
            masks.append(None)
    return h, TowerCache(tower, tower.version, inputs, pre, masks)


def backward_tower(tower: FcnTower, cache: TowerCache, d_latent: np.ndarray, prefix: str) -> dict:
    """Gradients for every weight and bias of ``tower`` given dL/d(latent)."""
    if cache.owner is not tower or cache.version != tower.version:
        raise StaleCacheError("tower parameters changed since this forward pass")
    grads = {}
    delta = d_latent
    for i in reversed(range(len(tower.weights))):
        grads[f"{prefix}.W{i}"] = cache.inputs[i].T @ delta
        grads[f"{prefix}.b{i}"] = delta.sum(axis=0)
        if i == 0:
            break
        delta = delta @ tower.weights[i].T
        if cache.masks[i - 1] is not None:
            delta = delta * cache.masks[i - 1]
        delta = relu_backward(cache.pre[i - 1], delta)
    return grads


class ClassifierHead(_Versioned):
    """Latent (K) -> logits (C); probabilities via a row softmax."""

    def __init__(self, latent_dim: int, num_classes: int, rng: Optional[Rng64] = None):
        rng = rng or Rng64(0)
        self.weight = _he_uniform(rng, latent_dim, num_classes)
        self.bias = np.zeros(num_classes)

    @property
    def num_classes(self) -> int:
        return self.weight.shape[1]

    def logits(self, latent: np.ndarray) -> np.ndarray:
        if latent.shape[1] != self.weight.shape[0]:
            raise ShapeError(f"head expects {self.weight.shape[0]} latent columns, got {latent.shape[1]}")
        return latent @ self.weight + self.bias

    def probabilities(self, latent: np.ndarray) -> np.ndarray:
        return softmax_rows(self.logits(latent))

    def backward(self, latent: np.ndarray, d_logits: np.ndarray):
        """Returns ``(grads, d_latent)``."""
        grads = {"head.W": latent.T @ d_logits, "head.b": d_logits.sum(axis=0)}
        return grads, d_logits @ self.weight.T

    def params(self):
        yield "head.W", self.weight
        yield "head.b", self.bias


def _check_labels(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelError(f"labels must lie in [0, {num_classes})")
    return labels


def cross_entropy_loss(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient ``(softmax - onehot) / B``."""
    logits = np.asarray(logits, dtype=np.float64)
    n, c = logits.shape
    labels = _check_labels(labels, c)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - shifted[rows, labels]))
    grad = softmax_rows(logits)
    grad[rows, labels] -= 1.0
    return loss, grad / n


def matching_loss(latent: np.ndarray, labels, prototypes: Optional[PrototypeSet]) -> tuple[float, np.ndarray]:
    """Mean absolute deviation of each latent row from its class prototype.

    Normalised by ``B*K``; the gradient uses sign(0) = 0.
    """
    if prototypes is None:
        raise ValueError("matching loss needs a prototype set")
    n, k = latent.shape
    if prototypes.dim != k:
        raise ShapeError(f"prototype dimension {prototypes.dim} != latent dimension {k}")
    labels = _check_labels(labels, prototypes.num_classes)
    diff = latent - prototypes.vectors[labels]
    scale = 1.0 / (n * k)
    return float(np.abs(diff).sum() * scale), np.sign(diff) * scale


def total_loss(ce: float, ml: float, alpha: float) -> float:
    if alpha >= 1.0:
        raise ValueError("alpha must be < 1.0")
    return ce + alpha * ml


@dataclass
class StepResult:
    grads: dict
    ce_loss: Optional[float] = None
    ml_loss: Optional[float] = None
    logits_x: Optional[np.ndarray] = None


class GucnetModel:
    """Tower(s) into a shared latent space, one shared classifier head."""

    def __init__(
        self,
        mode: Mode | str,
        tower_x: FcnTower,
        head: ClassifierHead,
        tower_y: Optional[FcnTower] = None,
        prototypes: Optional[PrototypeSet] = None,
    ):
        self.mode = Mode(mode)
        self.tower_x = tower_x
        self.head = head
        self.tower_y = tower_y
        self.prototypes = prototypes
        k, c = head.weight.shape
        if tower_x.out_dim != k:
            raise ShapeError("tower_x latent dimension must match the head input")
        if self.mode is Mode.PROTOTYPE:
            if prototypes is None:
                raise ValueError("prototype mode needs a prototype set")
            if prototypes.dim != k or prototypes.num_classes != c:
                raise ShapeError(
                    f"prototypes are {prototypes.num_classes}x{prototypes.dim}, model needs {c}x{k}"
                )
        if self.mode is Mode.TEXTURE:
            if tower_y is None:
                raise ValueError("texture mode needs a guide tower")
            if tower_y.out_dim != k:
                raise ShapeError("tower_y latent dimension must match the head input")

    @property
    def num_classes(self) -> int:
        return self.head.num_classes

    @property
    def latent_dim(self) -> int:
        return self.tower_x.out_dim

    def towers(self):
        return [t for t in (self.tower_x, self.tower_y) if t is not None]

    def parameters(self) -> dict:
        """Name -> array (live references), in declaration order."""
        out = dict(self.tower_x.params("x"))
        if self.tower_y is not None:
            out.update(self.tower_y.params("y"))
        out.update(self.head.params())
        return out

    def train(self):
        for t in self.towers():
            t.training = True
        return self

    def eval(self):
        for t in self.towers():
            t.training = False
        return self

    def touch(self):
        for t in self.towers():
            t.touch()
        self.head.touch()

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities for X-stream inputs, dropout off."""
        was = self.tower_x.training
        self.tower_x.training = False
        try:
            latent, _ = forward_latent(self.tower_x, x)
        finally:
            self.tower_x.training = was
        return self.head.probabilities(latent)

    def predict(self, x: np.ndarray) -> np.ndarray:
        # argmax returns the lowest index on ties
        return np.argmax(self.predict_proba(x), axis=1)

    def compute_gradients(
        self,
        x: np.ndarray,
        labels,
        *,
        objective: str = "ce",
        alpha: float = 0.0,
        rng: Optional[Rng64] = None,
        y: Optional[np.ndarray] = None,
        y_labels=None,
    ) -> StepResult:
        """Forward, loss and backward for one batch.

        ``objective`` is ``"ce"`` (cross-entropy only), ``"ml"`` (``alpha`` times
        the matching loss only; the head receives no gradient) or ``"joint"``
        (cross-entropy plus ``alpha`` times matching). In texture mode the
        guide half ``y``/``y_labels`` goes through ``tower_y`` into the same
        head and the cross-entropy is averaged over both halves.
        """
        if objective not in ("ce", "ml", "joint"):
            raise ValueError(f"unknown objective {objective!r}")
        labels = _check_labels(labels, self.num_classes)
        latent_x, cache_x = forward_latent(self.tower_x, x, rng)

        if self.mode is Mode.TEXTURE:
            if objective != "ce":
                raise ValueError("texture guiding is trained with cross-entropy only")
            if y is None or y_labels is None:
                raise ValueError("texture mode needs a guide batch")
            y_labels = _check_labels(y_labels, self.num_classes)
            latent_y, cache_y = forward_latent(self.tower_y, y, rng)
            latent = np.vstack([latent_x, latent_y])
            logits = self.head.logits(latent)
            ce, d_logits = cross_entropy_loss(logits, np.concatenate([labels, y_labels]))
            grads, d_latent = self.head.backward(latent, d_logits)
            nx = latent_x.shape[0]
            grads.update(backward_tower(self.tower_x, cache_x, d_latent[:nx], "x"))
            grads.update(backward_tower(self.tower_y, cache_y, d_latent[nx:], "y"))
            return StepResult(self._ordered(grads), ce_loss=ce, logits_x=logits[:nx])

        ce = ml = None
        grads = {}
        d_latent = np.zeros_like(latent_x)
        logits = None
        if objective in ("ce", "joint"):
            logits = self.head.logits(latent_x)
            ce, d_logits = cross_entropy_loss(logits, labels)
            grads, d_latent = self.head.backward(latent_x, d_logits)
        if self.mode is Mode.PROTOTYPE:
            # the value is reported on every batch; the gradient only enters ml/joint steps
            ml, d_ml = matching_loss(latent_x, labels, self.prototypes)
            if objective in ("ml", "joint") and alpha != 0.0:
                d_latent = d_latent + alpha * d_ml
        elif objective == "ml":
            raise ValueError("matching loss needs a prototype-mode model")
        grads.update(backward_tower(self.tower_x, cache_x, d_latent, "x"))
        return StepResult(self._ordered(grads), ce_loss=ce, ml_loss=ml, logits_x=logits)

    def _ordered(self, grads: dict) -> dict:
        return {name: grads[name] for name in self.parameters() if name in grads}


def build_model(
    mode: Mode | str,
    in_dim: int,
    num_classes: int,
    latent_dim: int,
    *,
    hidden: Sequence[int] = (1024, 512),
    dropout: float = 0.5,
    seed: int = 0,
    guide_dim: Optional[int] = None,
    prototypes: Optional[PrototypeSet] = None,
) -> GucnetModel:
    """Freshly initialised model; each tower and the head draw from their own seed stream."""
    mode = Mode(mode)
    rng = Rng64(seed).child("init")
    tower_x = FcnTower([in_dim, *hidden, latent_dim], dropout, rng.child("x"))
    tower_y = None
    if mode is Mode.TEXTURE:
        if guide_dim is None:
            raise ValueError("texture mode needs the guide feature dimension")
        tower_y = FcnTower([guide_dim, *hidden, latent_dim], dropout, rng.child("y"))
    head = ClassifierHead(latent_dim, num_classes, rng.child("head"))
    return GucnetModel(mode, tower_x, head, tower_y, prototypes if mode is Mode.PROTOTYPE else None)

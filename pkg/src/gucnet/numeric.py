"""Dense float64 helpers, activations, seeded RNG and a finite-difference checker.

Matrices are plain 2-D ``numpy.float64`` arrays; the functions here only add
shape contracts on top of numpy.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class NonFiniteError(FloatingPointError):
    """A loss evaluation produced NaN or Inf."""


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Pass ``upstream`` where ``x > 0``; the subgradient at exactly 0 is 0."""
    if x.shape != upstream.shape:
        raise ShapeError(f"relu_backward shape mismatch: {x.shape} vs {upstream.shape}")
    return np.where(x > 0.0, upstream, 0.0)


def softmax_rows(z: np.ndarray) -> np.ndarray:
    z = as_matrix(z)
    if z.shape[1] < 1:
        raise ShapeError("softmax needs at least one column")
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class Rng64:
    """Seeded generator backed by numpy's PCG64.

    PCG64 is the single generator used everywhere in the package. Independent
    sub-streams are derived with :meth:`child` so that adding a draw in one
    place (say, a second tower's init) never shifts another stream.
    """

    ALGORITHM = "PCG64"

    def __init__(self, seed: int | tuple[int, ...] = 0):
        self.seed = seed
        entropy = list(seed) if isinstance(seed, tuple) else int(seed)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def child(self, *tags: int | str) -> "Rng64":
        base = self.seed if isinstance(self.seed, tuple) else (int(self.seed),)
        return Rng64(base + tuple(_tag_int(t) for t in tags))

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def random(self, size) -> np.ndarray:
        """Uniform draws on [0, 1)."""
        return self._gen.random(size)

    def normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def bytes(self, n: int) -> bytes:
        return self._gen.bytes(n)


def _tag_int(tag: int | str) -> int:
    if isinstance(tag, int):
        return tag
    # stable across processes, unlike hash()
    return int.from_bytes(tag.encode("utf-8")[:8].ljust(8, b"\0"), "little")


def grad_check(
    f: Callable[[np.ndarray], float],
    params: np.ndarray,
    analytic_grad: np.ndarray,
    h: float = 1e-5,
    skip: Optional[np.ndarray] = None,
) -> float:
    """Max relative error between ``analytic_grad`` and central differences of ``f``.

    ``f`` is called with a perturbed copy of ``params``. Coordinates where
    ``skip`` is True are ignored (used to step around L1/ReLU kinks).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = np.array(params, dtype=np.float64)
    analytic_grad = np.asarray(analytic_grad, dtype=np.float64)
    if analytic_grad.shape != params.shape:
        raise ShapeError(f"gradient shape {analytic_grad.shape} != params shape {params.shape}")
    flat = params.reshape(-1)
    g = analytic_grad.reshape(-1)
    skip_flat = None if skip is None else np.asarray(skip, dtype=bool).reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        if skip_flat is not None and skip_flat[i]:
            continue
        old = flat[i]
        flat[i] = old + h
        fp = f(params)
        flat[i] = old - h
        fm = f(params)
        flat[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"loss is not finite at coordinate {i}")
        numeric = (fp - fm) / (2.0 * h)
        err = abs(numeric - g[i]) / max(1e-8, abs(numeric) + abs(g[i]))
        worst = max(worst, err)
    return worst

"""Guide prototype matrices: disjoint-support m-hot blocks and random [0, 1) vectors."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .numeric import Rng64


class PrototypeError(ValueError):
    pass


class Separation(str, Enum):
    HMAX = "hmax"
    HHALF = "hhalf"
    H2 = "h2"
    RANDOM = "random"


@dataclass(frozen=True)
class PrototypeSet:
    """C prototype rows of dimension K.

    ``kind`` is ``"multi_hot"`` (with ``ones`` per row) or ``"random_unit"``
    (with ``seed``).
    """

    vectors: np.ndarray
    kind: str
    ones: Optional[int] = None
    seed: Optional[int] = None

    @property
    def num_classes(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def permuted(self, perm) -> "PrototypeSet":
        """Rows reordered so that new row ``i`` is old row ``perm[i]``."""
        return PrototypeSet(self.vectors[np.asarray(perm)], self.kind, self.ones, self.seed)


def make_multi_hot(num_classes: int, dim: int, ones: int) -> PrototypeSet:
    """Prototype ``i`` has ones at columns ``[i*ones, (i+1)*ones)``; other columns are 0."""
    if dim < num_classes:
        raise PrototypeError(f"dimension K={dim} is smaller than the class count C={num_classes}")
    cap = dim // num_classes
    if ones < 1 or ones > cap:
        raise PrototypeError(
            f"cannot place {ones} ones per prototype on disjoint supports: K={dim}, C={num_classes} allows at most {cap}"
        )
    v = np.zeros((num_classes, dim))
    for i in range(num_classes):
        v[i, i * ones:(i + 1) * ones] = 1.0
    v.flags.writeable = False
    return PrototypeSet(v, "multi_hot", ones=ones)


def ones_for(num_classes: int, dim: int, level: Separation | str) -> int:
    level = Separation(level)
    if dim < num_classes:
        raise PrototypeError(f"dimension K={dim} is smaller than the class count C={num_classes}")
    cap = dim // num_classes
    if level is Separation.HMAX:
        return cap
    if level is Separation.HHALF:
        return max(1, cap // 2)
    if level is Separation.H2:
        return 1
    raise PrototypeError(f"{level.value} is not a multi-hot separation level")


def make_hmax_variant(num_classes: int, dim: int, level: Separation | str) -> PrototypeSet:
    return make_multi_hot(num_classes, dim, ones_for(num_classes, dim, level))


def make_random_unit(num_classes: int, dim: int, seed: int) -> PrototypeSet:
    """Entries i.i.d. uniform on [0, 1), a stand-in for word-embedding prototypes."""
    if dim < 1:
        raise PrototypeError("dimension must be at least 1")
    v = Rng64(seed).child("prototypes").random((num_classes, dim))
    v.flags.writeable = False
    return PrototypeSet(v, "random_unit", seed=seed)


def make_prototypes(num_classes: int, dim: int, separation: Separation | str, seed: int = 0) -> PrototypeSet:
    separation = Separation(separation)
    if separation is Separation.RANDOM:
        return make_random_unit(num_classes, dim, seed)
    return make_hmax_variant(num_classes, dim, separation)


def pairwise_hamming(p: PrototypeSet) -> np.ndarray:
    if p.kind != "multi_hot":
        raise PrototypeError(f"Hamming distance is undefined for {p.kind} prototypes")
    bits = p.vectors.astype(np.int64)
    weight = bits.sum(axis=1)
    # for 0/1 rows: |a xor b| = |a| + |b| - 2<a, b>
    return weight[:, None] + weight[None, :] - 2 * (bits @ bits.T)

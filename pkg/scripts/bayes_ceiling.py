"""Accuracy of the nearest-true-mean rule on the cluttered benchmark's test split.

With isotropic noise and equal priors this rule is Bayes-optimal, so no
classifier can be expected to beat it by more than sampling noise.
"""
import numpy as np

from gucnet import benchmark as bm
from gucnet.data import stratified_split
from gucnet.numeric import Rng64


def true_means(classes, dim, radius, seed):
    # mirrors the draw order in gen_gaussian_mixture
    m = Rng64(seed).child("means").normal((classes, dim))
    return radius * m / np.linalg.norm(m, axis=1, keepdims=True)


def main():
    x = bm.cluttered()
    means = true_means(bm.CLASSES, bm.DIM, bm.RADIUS, bm.DATA_SEED)
    _, test = stratified_split(x, 0.7, bm.TRAIN_SEED).apply(x)
    d = ((test.features[:, None, :] - means[None]) ** 2).sum(axis=2)
    acc = float(np.mean(d.argmin(axis=1) == test.labels))
    print(f"nearest-true-mean test accuracy: {acc:.4f} (n={test.n})")


if __name__ == "__main__":
    main()

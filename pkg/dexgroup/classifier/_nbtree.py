"""Decision trees with naive Bayes leaves."""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

__all__ = ["NBTreeClassifier", "fit_gaussian_leaf"]

from typing import List

import numpy as np

from dexgroup.classifier import (
    Classifier,
    GaussianLeaf,
    Node,
    TreeModel,
)
from dexgroup.classifier._tree import grow_tree


def fit_gaussian_leaf(X: np.ndarray, y: np.ndarray, var_smoothing: float = 1e-9) -> Node:
    """Build a leaf holding a Gaussian naive Bayes model of its rows.

    Each variance gets ``var_smoothing`` times the largest variance in
    the leaf added to it, with a small absolute floor, so a feature
    that's constant within a class doesn't divide by zero.
    """
    n = len(y)
    epsilon = var_smoothing * float(np.var(X, axis=0).max(initial=0.0)) + 1e-9
    priors = []
    means = []
    variances = []
    for c in (0, 1):
        rows = X[y == c]
        priors.append(len(rows) / n)
        if len(rows) == 0:
            means.append(tuple(0.0 for _ in range(X.shape[1])))
            variances.append(tuple(1.0 for _ in range(X.shape[1])))
            continue
        means.append(tuple(rows.mean(axis=0).tolist()))
        variances.append(tuple((rows.var(axis=0) + epsilon).tolist()))
    malicious = priors[1]
    return Node(
        n_samples=n,
        distribution=(1.0 - malicious, malicious),
        gaussian=GaussianLeaf(
            priors=(priors[0], priors[1]),
            means=(means[0], means[1]),
            variances=(variances[0], variances[1]),
        ),
    )


class NBTreeClassifier(Classifier):
    """Grow a gain-ratio tree, but stop at nodes smaller than
    ``nb_leaf_size`` and classify with naive Bayes there. Leaves that
    stop early because no split helps get naive Bayes models too.
    """

    NAME: str = "nb-tree"
    features = [NAME, "nbt", "nbtree"]

    def fit(self, X: np.ndarray, y: np.ndarray, seed: int) -> List[TreeModel]:
        hyper = self.hyper
        smoothing = hyper.var_smoothing
        root = grow_tree(
            X,
            y,
            hyper.min_leaf,
            leaf_below=hyper.nb_leaf_size,
            make_leaf=lambda Xn, yn: fit_gaussian_leaf(Xn, yn, smoothing),
        )
        return [TreeModel(root, seed)]

"""A single C4.5-style decision tree on numeric features.

Every split is a binary test ``x[f] <= t``. Candidate thresholds are
the midpoints between consecutive distinct training values of a
feature; the split kept is the one with the highest information gain
ratio. Growth stops at pure nodes, at nodes too small to split into
two legal leaves, and where no split gains any information.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

__all__ = [
    "Split",
    "TreeClassifier",
    "best_split",
    "grow_tree",
]

import logging
from typing import (
    Callable,
    List,
    NamedTuple,
    Optional,
    Sequence,
)

import numpy as np
from typing_extensions import Literal

from dexgroup.classifier import (
    Classifier,
    Node,
    TreeModel,
    derive_seed,
)

logger = logging.getLogger(__name__)

# Gains smaller than this are rounding noise.
MIN_GAIN = 1e-12

_Criterion = Literal["gain_ratio", "gain"]


class Split(NamedTuple):
    feature: int
    threshold: float
    gain: float
    gain_ratio: float


def _binary_entropy(k: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Entropy in bits of a two-class node with ``k`` of ``n`` in
    class 1. Works elementwise.
    """
    p = k / n
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log2(p), 0.0) + np.where(q > 0, q * np.log2(q), 0.0))
    return h


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    features: Sequence[int],
    min_leaf: int,
    criterion: _Criterion = "gain_ratio",
) -> Optional[Split]:
    """Find the best binary split of the rows of ``X``.

    :param features: Columns to consider, in the order ties are broken.
    :param min_leaf: Each side of the split must keep this many rows.
    :return: The best split, or None if no split has positive gain.
        Ties go to the earlier feature, then the lower threshold.
    """
    n = len(y)
    if n < 2 * min_leaf:
        return None
    total_malicious = int(y.sum())
    parent_entropy = float(_binary_entropy(np.array(total_malicious), np.array(n)))
    if parent_entropy == 0.0:
        return None

    left_n = np.arange(1, n)
    right_n = n - left_n
    size_ok = (left_n >= min_leaf) & (right_n >= min_leaf)

    best: Optional[Split] = None
    best_score = -np.inf
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        valid = size_ok & (xs[1:] != xs[:-1])
        if not valid.any():
            continue
        positions = np.nonzero(valid)[0]
        ln = left_n[positions]
        rn = right_n[positions]
        lm = np.cumsum(ys)[positions]
        rm = total_malicious - lm
        conditional = (ln * _binary_entropy(lm, ln) + rn * _binary_entropy(rm, rn)) / n
        gain = parent_entropy - conditional
        if criterion == "gain_ratio":
            score = gain / _binary_entropy(ln, np.full_like(ln, n))
        else:
            score = gain
        score = np.where(gain > MIN_GAIN, score, -np.inf)
        i = int(np.argmax(score))
        if score[i] > best_score:
            best_score = float(score[i])
            p = positions[i]
            best = Split(
                feature=int(f),
                threshold=float((xs[p] + xs[p + 1]) / 2.0),
                gain=float(gain[i]),
                gain_ratio=float(gain[i] / _binary_entropy(np.array(ln[i]), np.array(n))),
            )
    return best


def _distribution(y: np.ndarray) -> tuple:
    n = len(y)
    malicious = float(y.sum()) / n
    return (1.0 - malicious, malicious)


#: Given the rows that reached a leaf, build the leaf.
_LeafFactory = Callable[[np.ndarray, np.ndarray], Node]


def _plain_leaf(X: np.ndarray, y: np.ndarray) -> Node:
    return Node(n_samples=len(y), distribution=_distribution(y))


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    min_leaf: int,
    criterion: _Criterion = "gain_ratio",
    rng: Optional[np.random.Generator] = None,
    features_per_split: Optional[int] = None,
    leaf_below: int = 0,
    make_leaf: _LeafFactory = _plain_leaf,
) -> Node:
    """Grow a tree greedily from the root.

    :param rng: With ``features_per_split``, draws the subset of
        features each split may use.
    :param leaf_below: Nodes with fewer rows than this aren't split.
    :param make_leaf: Builds leaf nodes; naive Bayes trees pass their
        own.
    """
    n_features = X.shape[1]

    def grow(rows: np.ndarray) -> Node:
        Xn, yn = X[rows], y[rows]
        if len(rows) < leaf_below:
            return make_leaf(Xn, yn)
        if rng is not None and features_per_split is not None:
            features: Sequence[int] = sorted(
                rng.choice(n_features, size=features_per_split, replace=False).tolist()
            )
        else:
            features = range(n_features)
        split = best_split(Xn, yn, features, min_leaf, criterion)
        if split is None:
            return make_leaf(Xn, yn)
        goes_left = Xn[:, split.feature] <= split.threshold
        return Node(
            n_samples=len(rows),
            distribution=_distribution(yn),
            feature=split.feature,
            threshold=split.threshold,
            left=grow(rows[goes_left]),
            right=grow(rows[~goes_left]),
        )

    return grow(np.arange(len(y)))


def _errors(node: Node, X: np.ndarray, y: np.ndarray) -> int:
    """Misclassified rows if ``node`` were a leaf."""
    predicted = 1 if node.distribution[1] > 0.5 else 0
    return int(np.sum(y != predicted))


def reduced_error_prune(node: Node, X: np.ndarray, y: np.ndarray) -> int:
    """Collapse subtrees that don't beat a single leaf on held-out data.

    Works bottom-up. A subtree becomes a leaf when the leaf would make
    no more errors on the held-out rows that reach it.

    :return: Errors the pruned subtree makes on ``X``, ``y``.
    """
    if node.is_leaf:
        return _errors(node, X, y)
    assert node.left is not None and node.right is not None
    goes_left = X[:, node.feature] <= node.threshold
    subtree_errors = reduced_error_prune(node.left, X[goes_left], y[goes_left])
    subtree_errors += reduced_error_prune(node.right, X[~goes_left], y[~goes_left])
    leaf_errors = _errors(node, X, y)
    if leaf_errors <= subtree_errors:
        node.feature = -1
        node.threshold = 0.0
        node.left = node.right = None
        return leaf_errors
    return subtree_errors


class TreeClassifier(Classifier):
    """A gain-ratio decision tree, optionally with reduced-error
    pruning.
    """

    NAME: str = "tree"
    features = [NAME, "j48", "c4.5"]

    def fit(self, X: np.ndarray, y: np.ndarray, seed: int) -> List[TreeModel]:
        hyper = self.hyper
        if not hyper.prune:
            root = grow_tree(X, y, hyper.min_leaf)
            return [TreeModel(root, seed)]

        tree_seed = derive_seed(seed, 0)
        rng = np.random.default_rng(tree_seed)
        rows = rng.permutation(len(y))
        n_holdout = int(len(y) * hyper.prune_fraction)
        grow_rows, prune_rows = np.sort(rows[n_holdout:]), np.sort(rows[:n_holdout])
        if n_holdout == 0 or len(np.unique(y[grow_rows])) < 2:
            logger.info("Too little data to hold some out for pruning; growing unpruned.")
            return [TreeModel(grow_tree(X, y, hyper.min_leaf), tree_seed)]
        root = grow_tree(X[grow_rows], y[grow_rows], hyper.min_leaf)
        reduced_error_prune(root, X[prune_rows], y[prune_rows])
        return [TreeModel(root, tree_seed)]

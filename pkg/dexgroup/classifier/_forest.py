"""Random forests of gain-ratio trees."""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

__all__ = ["ForestClassifier"]

from typing import List

import numpy as np

from dexgroup.classifier import (
    Classifier,
    Label,
    Prediction,
    TrainedModel,
    TreeModel,
    derive_seed,
)
from dexgroup.classifier._tree import (
    _Criterion,
    grow_tree,
)


class ForestClassifier(Classifier):
    """Bagged trees with random feature subsets.

    Tree ``t`` draws its bootstrap sample and all of its feature
    subsets from a generator seeded with ``derive_seed(seed, t)``, so
    each tree can be rebuilt on its own and the forest doesn't depend
    on the order trees were grown in.

    Each split looks only at the features drawn for that node. If none
    of them gives a split with positive gain the node becomes a leaf;
    no second subset is drawn.
    """

    NAME: str = "forest"
    features = [NAME, "rf", "random-forest"]

    #: How every tree in the forest scores candidate splits.
    CRITERION: _Criterion = "gain_ratio"

    def fit(self, X: np.ndarray, y: np.ndarray, seed: int) -> List[TreeModel]:
        hyper = self.hyper
        n = len(y)
        m = hyper.features_per_split(X.shape[1])
        trees = []
        for t in range(hyper.n_trees):
            tree_seed = derive_seed(seed, t)
            rng = np.random.default_rng(tree_seed)
            sample = np.sort(rng.integers(0, n, size=n))
            root = grow_tree(
                X[sample],
                y[sample],
                hyper.forest_min_leaf,
                criterion=self.CRITERION,
                rng=rng,
                features_per_split=m,
            )
            trees.append(TreeModel(root, tree_seed))
        return trees

    def votes(self, model: TrainedModel, x: np.ndarray) -> int:
        """How many trees call ``x`` malicious."""
        return sum(1 for tree in model.trees if tree.root.p_malicious(x) > 0.5)

    def p_malicious(self, model: TrainedModel, x: np.ndarray) -> float:
        return self.votes(model, x) / len(model.trees)

    def predict(self, model: TrainedModel, x: np.ndarray) -> Prediction:
        b = len(model.trees)
        malicious = self.votes(model, x)
        p = malicious / b
        # A split vote goes to benign.
        if 2 * malicious > b:
            return Prediction(Label.MALICIOUS, p, p)
        return Prediction(Label.BENIGN, (b - malicious) / b, p)

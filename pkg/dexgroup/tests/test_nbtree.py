"""Tests of decision trees with naive Bayes leaves."""

import random
import numpy as np
import pytest # type:ignore

from dexgroup.classifier import (
    FeatureVector,
    Hyperparameters,
    Label,
    predict,
    predict_many,
    train,
)
from dexgroup.classifier._nbtree import fit_gaussian_leaf


def vectors(X, y):
    return [FeatureVector(tuple(row), Label(label)) for row, label in zip(X, y)]


class TestGaussianLeaf(object):

    def test_equal_gaussians_tie_to_benign(self):
        model = train("nb-tree", vectors([[1.0], [3.0], [1.0], [3.0]], [0, 0, 1, 1]))
        assert model.trees[0].root.is_leaf
        prediction = predict(model, (2.0,))
        assert prediction.p_malicious == 0.5
        assert prediction.label is Label.BENIGN
        assert prediction.score == 0.5

    def test_estimates(self):
        X = np.array([[1.0, 10.0], [3.0, 10.0], [5.0, 0.0], [7.0, 2.0]])
        y = np.array([0, 0, 1, 1])
        node = fit_gaussian_leaf(X, y, var_smoothing=0.0)
        g = node.gaussian
        assert g.priors == (0.5, 0.5)
        assert g.means[0] == (2.0, 10.0)
        assert g.means[1] == (6.0, 1.0)
        assert g.variances[0][0] == pytest.approx(1.0)
        # A feature constant within a class still has a positive variance.
        assert 0.0 < g.variances[0][1] < 1e-6
        assert node.distribution == (0.5, 0.5)

    def test_one_class_leaf(self):
        node = fit_gaussian_leaf(np.array([[1.0], [2.0]]), np.array([1, 1]))
        assert node.gaussian.priors == (0.0, 1.0)
        assert node.gaussian.p_malicious(np.array([100.0])) == 1.0

    def test_posterior_follows_distance(self):
        X = [[0.0], [1.0], [0.5], [10.0], [11.0], [10.5]]
        model = train("nb-tree", vectors(X, [0, 0, 0, 1, 1, 1]))
        assert predict(model, (0.2,)).label is Label.BENIGN
        assert predict(model, (10.2,)).label is Label.MALICIOUS
        assert predict(model, (10.2,)).p_malicious > 0.99


class TestNBTree(object):

    def data(self, n=200, seed=1):
        rng = random.Random(seed)
        X, y = [], []
        for _ in range(n):
            a, b = rng.uniform(0, 10), rng.uniform(0, 10)
            X.append((a, b))
            # Separable on a first; within each half b decides.
            if a <= 5:
                y.append(1 if b > 7 else 0)
            else:
                y.append(1 if b > 3 else 0)
        return X, y

    def test_big_nodes_split_small_nodes_are_bayes(self):
        X, y = self.data()
        model = train("nb-tree", vectors(X, y), Hyperparameters(nb_leaf_size=30))
        root = model.trees[0].root
        assert not root.is_leaf

        def leaves(node):
            if node.is_leaf:
                return [node]
            return leaves(node.left) + leaves(node.right)

        for leaf in leaves(root):
            assert leaf.gaussian is not None

    def test_small_data_is_one_bayes_leaf(self):
        X, y = self.data(n=20)
        model = train("nb-tree", vectors(X, y), Hyperparameters(nb_leaf_size=30))
        assert model.trees[0].root.is_leaf
        assert model.trees[0].root.gaussian is not None

    def test_accuracy(self):
        X, y = self.data(n=300)
        model = train("nb-tree", vectors(X, y))
        test_X, test_y = self.data(n=200, seed=2)
        predictions = predict_many(model, vectors(test_X, test_y))
        correct = sum(1 for p, label in zip(predictions, test_y) if p.label.value == label)
        assert correct >= 160

    def test_deterministic(self):
        X, y = self.data()
        assert train("nb-tree", vectors(X, y), seed=4) == train("nb-tree", vectors(X, y), seed=4)

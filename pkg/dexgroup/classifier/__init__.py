"""Decision-tree family classifiers for opcode feature vectors.

Three learners are registered in `classifier_registry`:

* ``tree`` (also ``j48``, ``c4.5``): a single gain-ratio decision tree.
* ``forest`` (also ``rf``, ``random-forest``): bootstrap-sampled trees,
  each split chosen from a random subset of the features.
* ``nb-tree`` (also ``nbt``): a decision tree whose small leaves hold
  Gaussian naive Bayes models.

All of them are deterministic given their training seed. New
learners only need to subclass `Classifier` and be registered.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import (
    Any,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from dexgroup._registry import Registry
from dexgroup.exceptions import (
    DimensionMismatch,
    InconsistentDimensions,
    SingleClassData,
    UnknownClassifier,
)
from dexgroup.histogram import OpcodeHistogram

__all__ = [
    "Classifier",
    "FeatureVector",
    "Hyperparameters",
    "Label",
    "Prediction",
    "TrainedModel",
    "classifier_registry",
    "derive_seed",
    "predict",
    "predict_many",
    "project",
    "train",
]

logger = logging.getLogger(__name__)


class Label(Enum):
    """The two classes. The integer value is the class index used in
    class distributions: index 0 is benign, index 1 is malicious.
    """

    BENIGN = 0
    MALICIOUS = 1

    @classmethod
    def from_name(cls, name: str) -> Label:
        """Parse ``benign``/``malicious`` (any case) or ``0``/``1``."""
        lowered = name.strip().lower()
        for label in cls:
            if lowered in (label.name.lower(), str(label.value)):
                return label
        raise ValueError("Not a label: %r" % name)

    def __str__(self) -> str:
        return self.name.lower()


class FeatureVector(NamedTuple):
    """Values of the selected features for one app, in feature-list
    order, with the app's label when it's known.
    """

    values: Tuple[float, ...]
    label: Optional[Label] = None


def project(
    histogram: OpcodeHistogram,
    feature_list: Sequence[int],
    label: Optional[Label] = None,
) -> FeatureVector:
    """Pick the selected opcode counts out of a histogram."""
    return FeatureVector(tuple(float(histogram[op]) for op in feature_list), label)


@dataclass(frozen=True)
class Hyperparameters:
    """Knobs for the tree learners. The defaults match the usual
    settings of the reference C4.5, random forest and NBTree learners.
    """

    #: Smallest number of training apps allowed in a tree leaf.
    min_leaf: int = 2
    #: Reduced-error pruning for ``tree``.
    prune: bool = False
    #: Share of the training data held out for pruning.
    prune_fraction: float = 1.0 / 3.0
    #: Trees in a forest.
    n_trees: int = 100
    #: Features considered per forest split; None means ceil(sqrt(n)).
    max_features: Optional[int] = None
    #: Smallest leaf in a forest tree.
    forest_min_leaf: int = 1
    #: Nodes with fewer apps than this become naive Bayes leaves.
    nb_leaf_size: int = 30
    #: Added to naive Bayes variances, as a share of the largest one.
    var_smoothing: float = 1e-9

    def __post_init__(self) -> None:
        if self.min_leaf < 1 or self.forest_min_leaf < 1:
            raise ValueError("Leaves must hold at least one app.")
        if not 0.0 < self.prune_fraction < 1.0:
            raise ValueError("prune_fraction must be between 0 and 1.")
        if self.n_trees < 1:
            raise ValueError("A forest needs at least one tree.")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be at least 1.")
        if self.nb_leaf_size < 1:
            raise ValueError("nb_leaf_size must be at least 1.")

    def features_per_split(self, n_features: int) -> int:
        if self.max_features is None:
            return max(1, math.ceil(math.sqrt(n_features)))
        return min(self.max_features, n_features)


@dataclass
class GaussianLeaf:
    """Per-class priors, feature means and variances estimated from the
    apps that reached a leaf.
    """

    priors: Tuple[float, float]
    means: Tuple[Tuple[float, ...], Tuple[float, ...]]
    variances: Tuple[Tuple[float, ...], Tuple[float, ...]]

    def p_malicious(self, x: np.ndarray) -> float:
        log_posteriors = []
        for c in (0, 1):
            if self.priors[c] <= 0.0:
                log_posteriors.append(-math.inf)
                continue
            mean = np.asarray(self.means[c])
            var = np.asarray(self.variances[c])
            log_likelihood = -0.5 * float(
                np.sum(np.log(2.0 * np.pi * var)) + np.sum((x - mean) ** 2 / var)
            )
            log_posteriors.append(math.log(self.priors[c]) + log_likelihood)
        benign, malicious = log_posteriors
        if benign == malicious:
            return 0.5
        if benign == -math.inf:
            return 1.0
        if malicious == -math.inf:
            return 0.0
        return 1.0 / (1.0 + math.exp(min(benign - malicious, 700.0)))


@dataclass
class Node:
    """One node of a trained tree. A node with ``feature`` of -1 is a
    leaf; otherwise apps with ``x[feature] <= threshold`` go left.
    """

    n_samples: int
    distribution: Tuple[float, float]
    feature: int = -1
    threshold: float = 0.0
    left: Optional[Node] = None
    right: Optional[Node] = None
    gaussian: Optional[GaussianLeaf] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def leaf_for(self, x: np.ndarray) -> Node:
        node = self
        while not node.is_leaf:
            assert node.left is not None and node.right is not None
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def p_malicious(self, x: np.ndarray) -> float:
        leaf = self.leaf_for(x)
        if leaf.gaussian is not None:
            return leaf.gaussian.p_malicious(x)
        return leaf.distribution[1]

    def count(self) -> int:
        """How many nodes are in this subtree."""
        if self.is_leaf:
            return 1
        assert self.left is not None and self.right is not None
        return 1 + self.left.count() + self.right.count()

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        assert self.left is not None and self.right is not None
        return 1 + max(self.left.depth(), self.right.depth())


@dataclass
class TreeModel:
    """A trained tree and the seed its randomness was derived from."""

    root: Node
    seed: int = 0


@dataclass
class TrainedModel:
    """Everything needed to classify new feature vectors.

    :ivar kind: The registered name of the learner that built this.
    :ivar feature_list: Opcode values, in the order vectors hold them.
    :ivar trees: One tree, or a forest's worth.
    """

    kind: str
    feature_list: Tuple[int, ...]
    hyper: Hyperparameters
    train_seed: int
    trees: List[TreeModel] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.feature_list)


class Prediction(NamedTuple):
    """A classification.

    :ivar score: Confidence in ``label``: the leaf class probability,
        naive Bayes posterior, or share of forest votes for it.
    """

    label: Label
    score: float
    p_malicious: float


def derive_seed(*parts: int) -> int:
    """Mix integers into one 32-bit seed that doesn't depend on the
    process or the order work was scheduled in.
    """
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(1)[0])


class Classifier(object):
    """A learner that builds a `TrainedModel` from labelled vectors.

    This is an abstract superclass. Subclasses set `NAME` and
    `features` and implement `fit`.
    """

    NAME: str = "[Unknown classifier]"
    features: Sequence[str] = []

    def __init__(self, hyper: Optional[Hyperparameters] = None):
        self.hyper = hyper or Hyperparameters()

    def fit(self, X: np.ndarray, y: np.ndarray, seed: int) -> List[TreeModel]:
        """Build the model's trees.

        :param X: Training matrix, one row per app.
        :param y: Class index per row (0 benign, 1 malicious).
        """
        raise NotImplementedError()

    def p_malicious(self, model: TrainedModel, x: np.ndarray) -> float:
        """Probability that ``x`` is malicious under ``model``."""
        return model.trees[0].root.p_malicious(x)

    def predict(self, model: TrainedModel, x: np.ndarray) -> Prediction:
        p = self.p_malicious(model, x)
        # Ties go to benign.
        if p > 0.5:
            return Prediction(Label.MALICIOUS, p, p)
        return Prediction(Label.BENIGN, 1.0 - p, p)


classifier_registry: Registry[Classifier] = Registry()


def _lookup(kind: str) -> type:
    classifier_class = classifier_registry.lookup(kind)
    if classifier_class is None:
        raise UnknownClassifier(
            "No classifier called %r. Try one of: %s"
            % (kind, ", ".join(classifier_registry.names()))
        )
    return classifier_class


def _training_arrays(data: Sequence[FeatureVector]) -> Tuple[np.ndarray, np.ndarray]:
    if len(data) == 0:
        raise SingleClassData("No training data.")
    width = len(data[0].values)
    for vector in data:
        if len(vector.values) != width:
            raise InconsistentDimensions(
                "Training vectors have %d and %d features." % (width, len(vector.values))
            )
        if vector.label is None:
            raise ValueError("Every training vector needs a label.")
    if width == 0:
        raise InconsistentDimensions("Training vectors have no features.")
    X = np.array([v.values for v in data], dtype=np.float64)
    y = np.array([v.label.value for v in data], dtype=np.int64)  # type:ignore
    if len(np.unique(y)) < 2:
        raise SingleClassData(
            "Training data is all %s." % Label(int(y[0]))
        )
    return X, y


def train(
    kind: str,
    data: Sequence[FeatureVector],
    hyper: Optional[Hyperparameters] = None,
    seed: int = 0,
    feature_list: Optional[Sequence[int]] = None,
) -> TrainedModel:
    """Train a model of the registered ``kind``.

    :param data: Labelled vectors, all the same length.
    :param seed: Seeds every random choice the learner makes. The same
        data, hyperparameters and seed always give an identical model.
    :param feature_list: The opcodes behind each vector position.
        Defaults to 0, 1, 2, ...
    :raise UnknownClassifier: If nothing is registered as ``kind``.
    :raise SingleClassData: If the data doesn't contain both labels.
    :raise InconsistentDimensions: If vectors differ in length.
    """
    if seed < 0:
        raise ValueError("Training seeds must be non-negative.")
    classifier_class = _lookup(kind)
    X, y = _training_arrays(data)
    if feature_list is None:
        feature_list = range(X.shape[1])
    features = tuple(feature_list)
    if len(features) != X.shape[1]:
        raise InconsistentDimensions(
            "%d features named for %d-dimensional vectors." % (len(features), X.shape[1])
        )
    classifier = classifier_class(hyper)
    trees = classifier.fit(X, y, seed)
    logger.debug(
        "Trained %s on %d apps x %d features: %d nodes.",
        classifier.NAME, X.shape[0], X.shape[1], sum(t.root.count() for t in trees),
    )
    return TrainedModel(
        kind=classifier.NAME,
        feature_list=features,
        hyper=classifier.hyper,
        train_seed=seed,
        trees=trees,
    )


def _as_array(model: TrainedModel, x: Union[FeatureVector, Sequence[float]]) -> np.ndarray:
    values = x.values if isinstance(x, FeatureVector) else x
    if len(values) != model.n_features:
        raise DimensionMismatch(model.n_features, len(values))
    return np.asarray(values, dtype=np.float64)


def predict(model: TrainedModel, x: Union[FeatureVector, Sequence[float]]) -> Prediction:
    """Classify one vector.

    :raise DimensionMismatch: If ``x`` doesn't match the model's
        feature list.
    """
    classifier = _lookup(model.kind)(model.hyper)
    return classifier.predict(model, _as_array(model, x))


def predict_many(
    model: TrainedModel, vectors: Sequence[Union[FeatureVector, Sequence[float]]]
) -> List[Prediction]:
    classifier = _lookup(model.kind)(model.hyper)
    return [classifier.predict(model, _as_array(model, x)) for x in vectors]


def register_classifiers_from(module: Any) -> None:
    """Copy everything in __all__ from ``module`` into this package,
    then register any classifiers it defines.
    """
    for name in module.__all__:
        obj = getattr(module, name)
        globals()[name] = obj
        __all__.append(name)
        if isinstance(obj, type) and issubclass(obj, Classifier):
            classifier_registry.register(obj)


# Learners are registered in reverse order of priority: a bare
# lookup() with no features returns the last one registered.
from . import _nbtree  # noqa: E402
from . import _forest  # noqa: E402
from . import _tree  # noqa: E402
from . import _serialize  # noqa: E402

register_classifiers_from(_nbtree)
register_classifiers_from(_forest)
register_classifiers_from(_tree)
register_classifiers_from(_serialize)

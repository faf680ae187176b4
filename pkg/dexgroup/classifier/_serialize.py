"""Save trained models as bytes and load them back.

Layout, all little-endian::

    header      4s  magic b"DXGM"
                H   format version (1)
                B   kind tag: 0 tree, 1 forest, 2 nb-tree
                B   reserved, 0
                q   training seed
    hyper       I   min_leaf
                B   prune
                d   prune_fraction
                I   n_trees
                I   max_features, 0 meaning ceil(sqrt(n))
                I   forest_min_leaf
                I   nb_leaf_size
                d   var_smoothing
    features    H   feature count F, then F x B opcode values
    trees       I   tree count, then for each tree:
                Q   tree seed
                I   node count, then the nodes in pre-order
    node        B   tag: 0 leaf, 1 split, 2 naive Bayes leaf
                I   training rows that reached the node
                dd  class distribution (benign, malicious)
      split     H   feature position, d threshold; left subtree, then right
      NB leaf   dd  class priors, then for each class F x d means and
                    F x d variances
    trailer     I   CRC-32 of everything before it

Any deviation from this layout raises `CorruptModel`.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

__all__ = [
    "serialize_model",
    "deserialize_model",
    "MODEL_FORMAT_VERSION",
]

import struct
import zlib
from typing import (
    List,
    Tuple,
)

from dexgroup.classifier import (
    GaussianLeaf,
    Hyperparameters,
    Node,
    TrainedModel,
    TreeModel,
)
from dexgroup.exceptions import CorruptModel

MAGIC = b"DXGM"
MODEL_FORMAT_VERSION = 1

KIND_TAGS = {"tree": 0, "forest": 1, "nb-tree": 2}
_KINDS_BY_TAG = {v: k for k, v in KIND_TAGS.items()}

LEAF, SPLIT, NB_LEAF = 0, 1, 2

_HEADER = struct.Struct("<4sHBBq")
_HYPER = struct.Struct("<IBdIIIId")
_TREE = struct.Struct("<QI")
_NODE = struct.Struct("<BIdd")
_SPLIT = struct.Struct("<Hd")
_CRC = struct.Struct("<I")


def _write_node(node: Node, n_features: int, out: List[bytes]) -> None:
    if node.is_leaf:
        tag = NB_LEAF if node.gaussian is not None else LEAF
    else:
        tag = SPLIT
    out.append(_NODE.pack(tag, node.n_samples, *node.distribution))
    if tag == SPLIT:
        assert node.left is not None and node.right is not None
        out.append(_SPLIT.pack(node.feature, node.threshold))
        _write_node(node.left, n_features, out)
        _write_node(node.right, n_features, out)
    elif tag == NB_LEAF:
        g = node.gaussian
        assert g is not None
        out.append(struct.pack("<dd", *g.priors))
        for c in (0, 1):
            out.append(struct.pack("<%dd" % n_features, *g.means[c]))
            out.append(struct.pack("<%dd" % n_features, *g.variances[c]))


def serialize_model(model: TrainedModel) -> bytes:
    """Encode a model in the versioned binary format."""
    if model.kind not in KIND_TAGS:
        raise CorruptModel("Don't know how to save a %r model." % model.kind)
    hyper = model.hyper
    out = [
        _HEADER.pack(MAGIC, MODEL_FORMAT_VERSION, KIND_TAGS[model.kind], 0, model.train_seed),
        _HYPER.pack(
            hyper.min_leaf,
            int(hyper.prune),
            hyper.prune_fraction,
            hyper.n_trees,
            hyper.max_features or 0,
            hyper.forest_min_leaf,
            hyper.nb_leaf_size,
            hyper.var_smoothing,
        ),
        struct.pack("<H", model.n_features),
        bytes(model.feature_list),
        struct.pack("<I", len(model.trees)),
    ]
    for tree in model.trees:
        out.append(_TREE.pack(tree.seed, tree.root.count()))
        _write_node(tree.root, model.n_features, out)
    body = b"".join(out)
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


class _Reader(object):
    def __init__(self, data: bytes):
        self.data = data
        self.position = 0

    def unpack(self, fmt: struct.Struct) -> Tuple:
        if self.position + fmt.size > len(self.data):
            raise CorruptModel("Model data ends in the middle of a record.")
        values = fmt.unpack_from(self.data, self.position)
        self.position += fmt.size
        return values

    def doubles(self, count: int) -> Tuple[float, ...]:
        return self.unpack(struct.Struct("<%dd" % count))


def _read_node(reader: _Reader, n_features: int, budget: List[int]) -> Node:
    budget[0] -= 1
    if budget[0] < 0:
        raise CorruptModel("Tree has more nodes than its header says.")
    tag, n_samples, benign, malicious = reader.unpack(_NODE)
    if tag == LEAF:
        return Node(n_samples, (benign, malicious))
    if tag == SPLIT:
        feature, threshold = reader.unpack(_SPLIT)
        if feature >= n_features:
            raise CorruptModel("Split on feature %d of %d." % (feature, n_features))
        left = _read_node(reader, n_features, budget)
        right = _read_node(reader, n_features, budget)
        return Node(n_samples, (benign, malicious), feature, threshold, left, right)
    if tag == NB_LEAF:
        priors = reader.doubles(2)
        means = []
        variances = []
        for _ in (0, 1):
            means.append(reader.doubles(n_features))
            variances.append(reader.doubles(n_features))
        return Node(
            n_samples,
            (benign, malicious),
            gaussian=GaussianLeaf(
                priors=(priors[0], priors[1]),
                means=(means[0], means[1]),
                variances=(variances[0], variances[1]),
            ),
        )
    raise CorruptModel("Unknown node tag %d." % tag)


def deserialize_model(data: bytes) -> TrainedModel:
    """Decode a model written by `serialize_model`.

    :raise CorruptModel: On a bad magic number, an unsupported
        version, a checksum mismatch, truncation or trailing data.
    """
    data = bytes(data)
    if len(data) < _HEADER.size + _CRC.size:
        raise CorruptModel("Model data is too short (%d bytes)." % len(data))
    body, (crc,) = data[:-_CRC.size], _CRC.unpack(data[-_CRC.size:])
    magic, version, kind_tag, _reserved, train_seed = _HEADER.unpack_from(body, 0)
    if magic != MAGIC:
        raise CorruptModel("Not a dexgroup model (magic %r)." % magic)
    if version != MODEL_FORMAT_VERSION:
        raise CorruptModel("Unsupported model format version %d." % version)
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CorruptModel("Model checksum doesn't match; the data is damaged.")
    if kind_tag not in _KINDS_BY_TAG:
        raise CorruptModel("Unknown model kind tag %d." % kind_tag)

    reader = _Reader(body)
    reader.position = _HEADER.size
    (
        min_leaf, prune, prune_fraction, n_trees, max_features,
        forest_min_leaf, nb_leaf_size, var_smoothing,
    ) = reader.unpack(_HYPER)
    try:
        hyper = Hyperparameters(
            min_leaf=min_leaf,
            prune=bool(prune),
            prune_fraction=prune_fraction,
            n_trees=n_trees,
            max_features=max_features or None,
            forest_min_leaf=forest_min_leaf,
            nb_leaf_size=nb_leaf_size,
            var_smoothing=var_smoothing,
        )
    except ValueError as e:
        raise CorruptModel(e)

    (n_features,) = reader.unpack(struct.Struct("<H"))
    feature_list = reader.unpack(struct.Struct("<%dB" % n_features))
    (tree_count,) = reader.unpack(struct.Struct("<I"))
    trees = []
    for _ in range(tree_count):
        seed, node_count = reader.unpack(_TREE)
        budget = [node_count]
        root = _read_node(reader, n_features, budget)
        if budget[0] != 0:
            raise CorruptModel("Tree has fewer nodes than its header says.")
        trees.append(TreeModel(root, seed))
    if reader.position != len(body):
        raise CorruptModel("%d bytes of trailing data." % (len(body) - reader.position))
    if not trees:
        raise CorruptModel("Model has no trees.")

    return TrainedModel(
        kind=_KINDS_BY_TAG[kind_tag],
        feature_list=tuple(feature_list),
        hyper=hyper,
        train_seed=train_seed,
        trees=trees,
    )

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from collections import defaultdict
from typing import (
    Dict,
    Generic,
    List,
    Optional,
    Sequence,
    Set,
    Type,
    TypeVar,
)

from typing_extensions import Protocol

__all__ = ["Registry"]


class _Registrable(Protocol):
    #: Names and capabilities a class can be looked up by.
    features: Sequence[str]


_R = TypeVar("_R", bound=_Registrable)


class Registry(Generic[_R]):
    """A way of looking up implementation classes by their name or by
    desired features.

    Extractors, manifest parsers and classifiers each have a registry.
    A class advertises what it can do in its ``features`` attribute;
    looking up several features finds the most recently registered
    class that has all of them.
    """

    classes_for_feature: Dict[str, List[Type[_R]]]
    classes: List[Type[_R]]

    def __init__(self) -> None:
        self.classes_for_feature = defaultdict(list)
        self.classes = []

    def register(self, cls: Type[_R]) -> Type[_R]:
        """Register a class based on its advertised features.

        Returns the class, so this can be used as a decorator.
        """
        for feature in cls.features:
            self.classes_for_feature[feature].insert(0, cls)
        self.classes.insert(0, cls)
        return cls

    def lookup(self, *features: str) -> Optional[Type[_R]]:
        """Look up a registered class with the desired features.

        :param features: Features to look for. If none are provided,
            the most recently registered class is returned.
        :return: A registered class, or None if no registered class
            has every requested feature.
        """
        if len(self.classes) == 0:
            return None

        if len(features) == 0:
            return self.classes[0]

        candidates: Optional[List[Type[_R]]] = None
        candidate_set: Optional[Set[Type[_R]]] = None
        for feature in features:
            we_have_the_feature = self.classes_for_feature.get(feature, [])
            if len(we_have_the_feature) == 0:
                # Nobody has this feature, so nobody has all of them.
                return None
            if candidates is None:
                candidates = we_have_the_feature
                candidate_set = set(candidates)
            elif candidate_set is not None:
                candidate_set = candidate_set.intersection(we_have_the_feature)

        if candidate_set is None or candidates is None:
            return None
        for candidate in candidates:
            if candidate in candidate_set:
                return candidate
        return None

    def names(self) -> List[str]:
        """Every registered feature name, sorted."""
        return sorted(self.classes_for_feature)

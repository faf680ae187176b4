"""Turn app bytecode into opcode histograms.

There are two extractors, registered by the kind of input they read:
``dex`` for DEX binaries and ``smali`` for disassembled smali text.
Both produce the same histogram for the same bytecode.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from typing import (
    Any,
    Sequence,
    Union,
)

from dexgroup._registry import Registry
from dexgroup.exceptions import ExtractionError
from dexgroup.histogram import OpcodeHistogram

__all__ = [
    "AppBytecode",
    "BytecodeExtractor",
    "extractor_registry",
    "DEX",
    "SMALI",
]

# Source kinds.
DEX = "dex"
SMALI = "smali"


class BytecodeExtractor(object):
    """Turn one kind of bytecode payload into an `OpcodeHistogram`.

    This is an abstract superclass. Subclasses set `NAME` and
    `features` and implement `extract`.
    """

    #: The name this extractor is best known by.
    NAME: str = "[Unknown extractor]"

    #: Features this extractor can be looked up by.
    features: Sequence[str] = []

    def extract(self, payload: Any) -> OpcodeHistogram:
        """Build a histogram from ``payload``.

        :raise ExtractionError: If the payload can't be decoded.
        """
        raise NotImplementedError()


#: `AppBytecode.extract` looks up extractors in this registry.
extractor_registry: Registry[BytecodeExtractor] = Registry()


class AppBytecode(object):
    """The bytecode of one app, before extraction.

    :param source_kind: ``"dex"`` or ``"smali"``.
    :param payload: DEX bytes, or a sequence of smali documents.
    :param extractor_options: Passed to the extractor's constructor,
        e.g. ``verify_checksum=True`` or ``on_unknown="fail"``.
    """

    source_kind: str
    payload: Union[bytes, Sequence[Union[str, bytes]]]

    def __init__(
        self,
        source_kind: str,
        payload: Union[bytes, Sequence[Union[str, bytes]]],
        **extractor_options: Any,
    ):
        if source_kind == DEX and not isinstance(payload, (bytes, bytearray, memoryview)):
            raise TypeError("DEX payloads must be bytes.")
        self.source_kind = source_kind
        self.payload = payload
        self.extractor_options = extractor_options

    def extract(self) -> OpcodeHistogram:
        """Run the registered extractor for this source kind."""
        extractor_class = extractor_registry.lookup(self.source_kind)
        if extractor_class is None:
            raise ExtractionError(
                "No extractor is registered for %r bytecode." % self.source_kind
            )
        return extractor_class(**self.extractor_options).extract(self.payload)


def register_extractors_from(module: Any) -> None:
    """Copy everything in __all__ from ``module`` into this package,
    then register any extractor classes it defines.
    """
    for name in module.__all__:
        obj = getattr(module, name)
        globals()[name] = obj
        __all__.append(name)
        if isinstance(obj, type) and issubclass(obj, BytecodeExtractor):
            extractor_registry.register(obj)


from . import _dex  # noqa: E402
from . import _smali  # noqa: E402

register_extractors_from(_dex)
register_extractors_from(_smali)

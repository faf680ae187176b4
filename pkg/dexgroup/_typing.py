# Custom type aliases used throughout dexgroup to improve readability.

from typing_extensions import (
    Literal,
    Protocol,
    TypeAlias,
)
from typing import (
    Any,
    Callable,
    Iterable,
    Iterator,
    Sequence,
    Union,
)

# Binary input the DEX and AXML parsers read without copying.
_Buffer: TypeAlias = Union[bytes, bytearray, memoryview]

# A smali document may be handed over as decoded text or as the raw
# bytes read from disk.
_SmaliDocument: TypeAlias = Union[str, bytes]
_SmaliDocuments: TypeAlias = Sequence[_SmaliDocument]

# Raw bytes that may be AXML or text XML.
_ManifestData: TypeAlias = Union[str, bytes]

# What to do when a smali line holds an unknown mnemonic.
_OnUnknown: TypeAlias = Literal["warn", "fail"]


class _MapFunction(Protocol):
    """Anything that behaves like the built-in `map` for a single
    iterable: ``map`` itself, or ``Executor.map`` from a worker pool.
    """

    def __call__(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> Iterator[Any]: ...

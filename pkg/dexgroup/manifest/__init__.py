"""Find the permissions an app requests in its AndroidManifest.xml.

Manifests come in two encodings: the compiled binary XML found inside
APKs (``axml``) and the plain text XML that apktool and build trees
contain (``xml``). Each has a parser registered in
`manifest_registry`; `parse_manifest` sniffs the encoding and picks
one.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from typing import (
    Any,
    Iterable,
    Optional,
    Sequence,
)

from dexgroup._registry import Registry
from dexgroup._typing import _ManifestData
from dexgroup.exceptions import ManifestError

__all__ = [
    "ManifestParser",
    "PermissionSet",
    "manifest_registry",
    "parse_manifest",
    "looks_like_axml",
    "PERMISSION_ELEMENTS",
    "AXML",
    "XML",
]

AXML = "axml"
XML = "xml"

#: Element names whose android:name attribute requests a permission.
PERMISSION_ELEMENTS = frozenset(
    ["uses-permission", "uses-permission-sdk-23", "uses-permission-sdk-m"]
)


class PermissionSet(frozenset):
    """The permissions one app requests.

    Names are trimmed of surrounding whitespace but otherwise kept
    exactly as written, case included. Empty names are dropped and
    duplicates collapse, so the order permissions were declared in
    never matters.
    """

    def __new__(cls, permissions: Iterable[str] = ()) -> PermissionSet:
        cleaned = (p.strip() for p in permissions)
        return super(PermissionSet, cls).__new__(cls, (p for p in cleaned if p))

    def __repr__(self) -> str:
        return "PermissionSet(%r)" % sorted(self)


class ManifestParser(object):
    """Turn one encoding of AndroidManifest.xml into a `PermissionSet`.

    This is an abstract superclass; subclasses set `NAME` and
    `features` and implement `parse`.
    """

    NAME: str = "[Unknown manifest parser]"
    features: Sequence[str] = []

    def parse(self, data: Any) -> PermissionSet:
        raise NotImplementedError()


manifest_registry: Registry[ManifestParser] = Registry()

# The first four bytes of every compiled manifest: a RES_XML_TYPE chunk
# header with an 8-byte header.
_AXML_SIGNATURE = b"\x03\x00\x08\x00"


def looks_like_axml(data: _ManifestData) -> bool:
    """Does this data start with a binary XML chunk header?"""
    return isinstance(data, (bytes, bytearray)) and bytes(data[:4]) == _AXML_SIGNATURE


def parse_manifest(data: _ManifestData, encoding: Optional[str] = None) -> PermissionSet:
    """Extract requested permissions from either manifest encoding.

    :param data: Binary XML bytes, or text XML as str or bytes.
    :param encoding: ``"axml"`` or ``"xml"`` to skip sniffing.
    """
    if encoding is None:
        encoding = AXML if looks_like_axml(data) else XML
    parser_class = manifest_registry.lookup(encoding)
    if parser_class is None:
        raise ManifestError("No manifest parser for %r." % encoding)
    return parser_class().parse(data)


def register_parsers_from(module: Any) -> None:
    """Copy everything in __all__ from ``module`` into this package,
    then register any manifest parsers it defines.
    """
    for name in module.__all__:
        obj = getattr(module, name)
        globals()[name] = obj
        __all__.append(name)
        if isinstance(obj, type) and issubclass(obj, ManifestParser):
            manifest_registry.register(obj)


from . import _axml  # noqa: E402
from . import _lxml  # noqa: E402

register_parsers_from(_axml)
register_parsers_from(_lxml)

# encoding: utf-8
"""Read permissions out of a plain text AndroidManifest.xml using lxml."""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

__all__ = [
    "LXMLManifestParser",
    "parse_manifest_text",
]

from typing import (
    Dict,
    List,
    Optional,
    Union,
)

from lxml import etree  # type:ignore

from dexgroup.exceptions import MalformedXml
from dexgroup.manifest import (
    ManifestParser,
    PERMISSION_ELEMENTS,
    PermissionSet,
    XML,
)

ANDROID_NAMESPACE = "http://schemas.android.com/apk/res/android"


def _local_name(name: Union[str, bytes]) -> str:
    """Strip a Clark-notation namespace, or an unresolved prefix, from
    an element or attribute name.
    """
    if isinstance(name, bytes):
        name = name.decode("utf-8")
    if "}" in name:
        name = name.rsplit("}", 1)[1]
    if ":" in name:
        name = name.rsplit(":", 1)[1]
    return name


class _PermissionCollector(object):
    """An lxml parser target that remembers the name attribute of every
    permission request.

    Names are matched by local name, so a manifest that spells the
    android prefix or namespace URI unusually still works. If an
    element has more than one ``name`` attribute, the one in the
    android namespace wins.
    """

    permissions: List[str]

    def __init__(self) -> None:
        self.permissions = []

    def start(
        self, tag: Union[str, bytes], attrib: Dict[Union[str, bytes], Union[str, bytes]]
    ) -> None:
        if _local_name(tag) not in PERMISSION_ELEMENTS:
            return
        chosen: Optional[str] = None
        for key, value in attrib.items():
            if isinstance(key, bytes):
                key = key.decode("utf-8")
            if isinstance(value, bytes):
                value = value.decode("utf-8")
            if _local_name(key) != "name":
                continue
            if chosen is None or key.startswith("{%s}" % ANDROID_NAMESPACE):
                chosen = value
        if chosen is not None:
            self.permissions.append(chosen)

    def end(self, tag: Union[str, bytes]) -> None:
        pass

    def data(self, content: Union[str, bytes]) -> None:
        pass

    def close(self) -> List[str]:
        return self.permissions


def parse_manifest_text(text: Union[str, bytes]) -> PermissionSet:
    """Extract requested permissions from a text manifest.

    :param text: The manifest, as a string or as encoded bytes.
    :raise MalformedXml: If the document isn't well-formed.
    """
    if isinstance(text, str):
        text = text.encode("utf-8")
    collector = _PermissionCollector()
    parser = etree.XMLParser(
        target=collector, resolve_entities=False, no_network=True, recover=False
    )
    try:
        parser.feed(text)
        permissions = parser.close()
    except (etree.XMLSyntaxError, etree.ParserError, UnicodeDecodeError, LookupError) as e:
        raise MalformedXml(e)
    return PermissionSet(permissions)


class LXMLManifestParser(ManifestParser):
    """Use lxml to read text manifests."""

    NAME: str = "lxml"
    features = [NAME, XML, "text"]

    def parse(self, data: Union[str, bytes]) -> PermissionSet:
        return parse_manifest_text(data)

"""Read permissions out of Android's compiled binary XML.

A compiled manifest is a sequence of chunks. Each chunk starts with a
type (u16), a header size (u16) and a total size (u32), all
little-endian. The whole document is one RES_XML_TYPE chunk holding a
string pool, an optional resource map, and a flat stream of
namespace and element events. Every name and string value is an
index into the string pool.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

__all__ = [
    "AxmlParser",
    "AxmlAttribute",
    "AxmlElement",
    "StringPool",
    "iter_start_elements",
    "parse_axml",
]

import logging
import struct
from typing import (
    Dict,
    Iterator,
    List,
    NamedTuple,
    Optional,
)

from dexgroup._typing import _Buffer
from dexgroup.exceptions import MalformedAxml
from dexgroup.manifest import (
    AXML,
    ManifestParser,
    PERMISSION_ELEMENTS,
    PermissionSet,
)

logger = logging.getLogger(__name__)

# Chunk types.
RES_STRING_POOL_TYPE = 0x0001
RES_XML_TYPE = 0x0003
RES_XML_START_NAMESPACE_TYPE = 0x0100
RES_XML_END_NAMESPACE_TYPE = 0x0101
RES_XML_START_ELEMENT_TYPE = 0x0102
RES_XML_END_ELEMENT_TYPE = 0x0103
RES_XML_CDATA_TYPE = 0x0104
RES_XML_RESOURCE_MAP_TYPE = 0x0180

# String pool flags.
UTF8_FLAG = 1 << 8

# Typed value data types.
TYPE_REFERENCE = 0x01
TYPE_STRING = 0x03

NO_ENTRY = 0xFFFFFFFF

#: Resource id of the android:name attribute. Obfuscated manifests
#: sometimes blank the attribute's name string and rely on this.
ANDROID_NAME_RESOURCE_ID = 0x01010003

_CHUNK_HEADER = struct.Struct("<HHI")
_STRING_POOL_HEADER = struct.Struct("<IIIII")
_ELEMENT_EXT = struct.Struct("<IIHHHHHH")
_ATTRIBUTE = struct.Struct("<IIIHBBI")


class StringPool(object):
    """The strings of a binary XML document, decoded on demand.

    :param data: The whole document.
    :param offset: Where the string pool chunk starts.
    :param header_size: The chunk's header size.
    :param size: The chunk's total size.
    """

    def __init__(self, data: _Buffer, offset: int, header_size: int, size: int):
        if header_size < 8 + _STRING_POOL_HEADER.size:
            raise MalformedAxml("String pool header is only %d bytes." % header_size)
        (
            self.string_count,
            self.style_count,
            self.flags,
            strings_start,
            _styles_start,
        ) = _STRING_POOL_HEADER.unpack_from(data, offset + 8)
        self.utf8 = bool(self.flags & UTF8_FLAG)
        self._data = data
        self._chunk_end = offset + size
        self._strings_start = offset + strings_start

        table = offset + header_size
        if table + 4 * self.string_count > self._chunk_end:
            raise MalformedAxml(
                "String pool says it has %d strings, but the offset table doesn't fit."
                % self.string_count
            )
        self._offsets = struct.unpack_from("<%dI" % self.string_count, data, table)
        self._cache: Dict[int, str] = {}

    def __len__(self) -> int:
        return self.string_count

    def get(self, index: int) -> str:
        """Decode one string.

        :raise MalformedAxml: If the index isn't in the pool or the
            string runs past the end of the chunk.
        """
        if index in self._cache:
            return self._cache[index]
        if index < 0 or index >= self.string_count:
            raise MalformedAxml(
                "String index %d is outside a pool of %d strings."
                % (index, self.string_count)
            )
        position = self._strings_start + self._offsets[index]
        if self.utf8:
            value = self._decode8(position)
        else:
            value = self._decode16(position)
        self._cache[index] = value
        return value

    def _byte(self, position: int) -> int:
        if position >= self._chunk_end:
            raise MalformedAxml("String runs off the end of the string pool.")
        return self._data[position]

    def _decode8(self, position: int) -> str:
        # Two lengths: in UTF-16 units, then in bytes. Either one takes
        # two bytes when its high bit is set.
        lengths = []
        for _ in range(2):
            length = self._byte(position)
            position += 1
            if length & 0x80:
                length = ((length & 0x7F) << 8) | self._byte(position)
                position += 1
            lengths.append(length)
        end = position + lengths[1]
        if end > self._chunk_end:
            raise MalformedAxml("UTF-8 string runs off the end of the string pool.")
        try:
            return bytes(self._data[position:end]).decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedAxml(e)

    def _decode16(self, position: int) -> str:
        if position + 2 > self._chunk_end:
            raise MalformedAxml("UTF-16 string runs off the end of the string pool.")
        (length,) = struct.unpack_from("<H", self._data, position)
        position += 2
        if length & 0x8000:
            if position + 2 > self._chunk_end:
                raise MalformedAxml("UTF-16 string runs off the end of the string pool.")
            (low,) = struct.unpack_from("<H", self._data, position)
            length = ((length & 0x7FFF) << 16) | low
            position += 2
        end = position + length * 2
        if end > self._chunk_end:
            raise MalformedAxml("UTF-16 string runs off the end of the string pool.")
        try:
            return bytes(self._data[position:end]).decode("utf-16-le")
        except UnicodeDecodeError as e:
            raise MalformedAxml(e)


class AxmlAttribute(NamedTuple):
    """One attribute of a start-element event."""

    namespace: Optional[str]
    name: str
    resource_id: Optional[int]
    value: str


class AxmlElement(NamedTuple):
    """A start-element event."""

    name: str
    attributes: List[AxmlAttribute]

    def get(self, local_name: str, resource_id: Optional[int] = None) -> Optional[str]:
        """Find an attribute's value by name, or failing that by
        resource id.
        """
        for attribute in self.attributes:
            if attribute.name == local_name:
                return attribute.value
        if resource_id is not None:
            for attribute in self.attributes:
                if attribute.resource_id == resource_id:
                    return attribute.value
        return None


def _optional_string(pool: StringPool, index: int) -> Optional[str]:
    if index == NO_ENTRY:
        return None
    return pool.get(index)


def _attribute_value(pool: StringPool, raw_value: int, data_type: int, data: int) -> str:
    if raw_value != NO_ENTRY:
        return pool.get(raw_value)
    if data_type == TYPE_STRING:
        return pool.get(data)
    if data_type == TYPE_REFERENCE:
        # Resolving this would need resources.arsc.
        return "@0x%08x" % data
    return str(data)


def _start_element(
    data: _Buffer,
    offset: int,
    header_size: int,
    size: int,
    pool: StringPool,
    resource_map: List[int],
) -> AxmlElement:
    ext = offset + header_size
    end = offset + size
    if ext + _ELEMENT_EXT.size > end:
        raise MalformedAxml("Start-element chunk at 0x%x is truncated." % offset)
    (
        _ns, name, attribute_start, attribute_size, attribute_count,
        _id_index, _class_index, _style_index,
    ) = _ELEMENT_EXT.unpack_from(data, ext)
    if attribute_size < _ATTRIBUTE.size:
        raise MalformedAxml("Attribute records of %d bytes are too small." % attribute_size)
    if ext + attribute_start + attribute_count * attribute_size > end:
        raise MalformedAxml(
            "Attributes of the element at 0x%x run past the chunk." % offset
        )

    attributes = []
    for i in range(attribute_count):
        position = ext + attribute_start + i * attribute_size
        (
            attr_ns, attr_name, raw_value, _value_size, _res0, data_type, value_data,
        ) = _ATTRIBUTE.unpack_from(data, position)
        resource_id = resource_map[attr_name] if attr_name < len(resource_map) else None
        attributes.append(
            AxmlAttribute(
                namespace=_optional_string(pool, attr_ns),
                name=pool.get(attr_name),
                resource_id=resource_id,
                value=_attribute_value(pool, raw_value, data_type, value_data),
            )
        )
    return AxmlElement(pool.get(name), attributes)


def iter_start_elements(data: _Buffer) -> Iterator[AxmlElement]:
    """Walk a binary XML document and yield every start-element event.

    :raise MalformedAxml: If the document doesn't start with a
        RES_XML_TYPE chunk, a chunk is truncated or overruns its
        parent, or an element refers to a string outside the pool.
    """
    try:
        if len(data) < _CHUNK_HEADER.size:
            raise MalformedAxml("Document is only %d bytes." % len(data))
        doc_type, doc_header_size, doc_size = _CHUNK_HEADER.unpack_from(data, 0)
        if doc_type != RES_XML_TYPE:
            raise MalformedAxml("Not a binary XML document (chunk type 0x%04x)." % doc_type)
        if doc_size > len(data):
            raise MalformedAxml(
                "Document claims %d bytes but only %d are present." % (doc_size, len(data))
            )

        pool: Optional[StringPool] = None
        resource_map: List[int] = []
        position = doc_header_size
        while position < doc_size:
            if position + _CHUNK_HEADER.size > doc_size:
                raise MalformedAxml("Truncated chunk header at 0x%x." % position)
            chunk_type, header_size, size = _CHUNK_HEADER.unpack_from(data, position)
            if size < _CHUNK_HEADER.size or header_size > size or position + size > doc_size:
                raise MalformedAxml(
                    "Chunk at 0x%x has impossible size %d." % (position, size)
                )

            if chunk_type == RES_STRING_POOL_TYPE:
                pool = StringPool(data, position, header_size, size)
            elif chunk_type == RES_XML_RESOURCE_MAP_TYPE:
                count = (size - header_size) // 4
                resource_map = list(
                    struct.unpack_from("<%dI" % count, data, position + header_size)
                )
            elif chunk_type == RES_XML_START_ELEMENT_TYPE:
                if pool is None:
                    raise MalformedAxml("Element at 0x%x comes before the string pool." % position)
                yield _start_element(data, position, header_size, size, pool, resource_map)
            else:
                # Namespaces, end elements, CDATA and anything newer.
                pass
            position += size
    except struct.error as e:
        raise MalformedAxml(e)


def parse_axml(data: _Buffer) -> PermissionSet:
    """Extract requested permissions from a binary manifest.

    :return: The android:name of every uses-permission element.
    :raise MalformedAxml: If the document can't be walked.
    """
    permissions = []
    for element in iter_start_elements(data):
        if element.name not in PERMISSION_ELEMENTS:
            continue
        name = element.get("name", ANDROID_NAME_RESOURCE_ID)
        if name is None:
            logger.debug("%s element without a name attribute", element.name)
            continue
        permissions.append(name)
    return PermissionSet(permissions)


class AxmlParser(ManifestParser):
    """Use the built-in binary XML reader."""

    NAME: str = AXML
    features = [NAME, "binary"]

    def parse(self, data: _Buffer) -> PermissionSet:
        if isinstance(data, str):
            raise MalformedAxml("Binary XML must be given as bytes.")
        return parse_axml(data)

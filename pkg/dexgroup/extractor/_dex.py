"""Count opcodes by walking a DEX file directly.

The walk goes header -> class_defs -> class_data_item -> encoded
methods -> code_item, and decodes each code_item's instruction stream
using the instruction widths in `dexgroup.opcodes`. Switch and array
payloads share the nop opcode byte; they're recognised by their
identifying code unit and skipped as data.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

__all__ = [
    "DexExtractor",
    "DexHeader",
    "Instruction",
    "extract_from_dex",
    "iter_instructions",
    "parse_header",
    "code_item_offsets",
]

import hashlib
import logging
import struct
import zlib
from typing import (
    Iterator,
    List,
    NamedTuple,
    Sequence,
    Set,
    Tuple,
)

from dexgroup._typing import _Buffer
from dexgroup.exceptions import MalformedDex
from dexgroup.extractor import BytecodeExtractor
from dexgroup.histogram import OpcodeHistogram
from dexgroup.opcodes import (
    FILL_ARRAY_DATA_PAYLOAD,
    OPCODE_COUNT,
    OPCODES,
    PACKED_SWITCH_PAYLOAD,
    SPARSE_SWITCH_PAYLOAD,
)

logger = logging.getLogger(__name__)

DEX_MAGIC = b"dex\n"
SUPPORTED_VERSIONS = (b"035", b"036", b"037", b"038", b"039")
ENDIAN_CONSTANT = 0x12345678
HEADER_SIZE = 0x70
CLASS_DEF_SIZE = 0x20
CODE_ITEM_HEADER_SIZE = 0x10

_HEADER = struct.Struct("<8sI20s20I")


class DexHeader(NamedTuple):
    """The fields of a DEX header that extraction needs."""

    version: str
    checksum: int
    signature: bytes
    file_size: int
    header_size: int
    endian_tag: int
    map_off: int
    string_ids_size: int
    string_ids_off: int
    type_ids_size: int
    type_ids_off: int
    method_ids_size: int
    method_ids_off: int
    class_defs_size: int
    class_defs_off: int
    data_size: int
    data_off: int


class Instruction(NamedTuple):
    """One decoded instruction, or one payload pseudo-instruction."""

    #: Position in code units from the start of the code_item's insns.
    offset: int
    #: Opcode byte. Always 0 for a payload.
    opcode: int
    #: Width in code units, payload data included.
    width: int
    #: True for packed-switch, sparse-switch and fill-array-data data.
    payload: bool = False


def parse_header(dex: _Buffer, verify_checksum: bool = False) -> DexHeader:
    """Validate a DEX header and return its fields.

    :param verify_checksum: Also check the Adler-32 checksum, the SHA-1
        signature and the declared file size.
    :raise MalformedDex: If anything about the header is wrong.
    """
    if len(dex) < HEADER_SIZE:
        raise MalformedDex(
            "DEX data is %d bytes, shorter than the %d-byte header."
            % (len(dex), HEADER_SIZE)
        )
    fields = _HEADER.unpack_from(dex, 0)
    magic, checksum, signature = fields[0], fields[1], fields[2]
    (
        file_size, header_size, endian_tag,
        _link_size, _link_off, map_off,
        string_ids_size, string_ids_off,
        type_ids_size, type_ids_off,
        _proto_ids_size, _proto_ids_off,
        _field_ids_size, _field_ids_off,
        method_ids_size, method_ids_off,
        class_defs_size, class_defs_off,
        data_size, data_off,
    ) = fields[3:]

    if magic[:4] != DEX_MAGIC or magic[7:8] != b"\x00":
        raise MalformedDex("Bad DEX magic: %r" % bytes(magic))
    version = magic[4:7]
    if version not in SUPPORTED_VERSIONS:
        raise MalformedDex("Unsupported DEX version: %r" % bytes(version))
    if endian_tag != ENDIAN_CONSTANT:
        raise MalformedDex("Unsupported endian tag: 0x%08x" % endian_tag)

    if verify_checksum:
        if file_size != len(dex):
            raise MalformedDex(
                "Header says the file is %d bytes, but it's %d." % (file_size, len(dex))
            )
        actual = zlib.adler32(bytes(dex[12:])) & 0xFFFFFFFF
        if actual != checksum:
            raise MalformedDex(
                "Checksum mismatch: header has 0x%08x, data gives 0x%08x."
                % (checksum, actual)
            )
        if hashlib.sha1(bytes(dex[32:])).digest() != signature:
            raise MalformedDex("SHA-1 signature mismatch.")

    return DexHeader(
        version=version.decode("ascii"),
        checksum=checksum,
        signature=bytes(signature),
        file_size=file_size,
        header_size=header_size,
        endian_tag=endian_tag,
        map_off=map_off,
        string_ids_size=string_ids_size,
        string_ids_off=string_ids_off,
        type_ids_size=type_ids_size,
        type_ids_off=type_ids_off,
        method_ids_size=method_ids_size,
        method_ids_off=method_ids_off,
        class_defs_size=class_defs_size,
        class_defs_off=class_defs_off,
        data_size=data_size,
        data_off=data_off,
    )


def _read_uleb128(dex: _Buffer, offset: int) -> Tuple[int, int]:
    """Decode an unsigned LEB128 value.

    :return: The value and the offset just past it.
    """
    result = 0
    for i in range(5):
        if offset >= len(dex):
            raise MalformedDex("uleb128 runs off the end of the file at 0x%x." % offset)
        byte = dex[offset]
        offset += 1
        result |= (byte & 0x7F) << (7 * i)
        if byte & 0x80 == 0:
            return result, offset
    raise MalformedDex("uleb128 longer than five bytes at 0x%x." % (offset - 5))


def _check_range(dex: _Buffer, offset: int, size: int, what: str) -> None:
    if offset < 0 or size < 0 or offset + size > len(dex):
        raise MalformedDex(
            "%s at 0x%x (%d bytes) lies outside the %d-byte file."
            % (what, offset, size, len(dex))
        )


def code_item_offsets(dex: _Buffer, header: DexHeader) -> List[int]:
    """Find every code_item reachable from the class definitions.

    Each distinct offset is listed once, in the order first reached.
    Abstract and native methods have no code_item and are skipped.
    """
    _check_range(
        dex, header.class_defs_off, header.class_defs_size * CLASS_DEF_SIZE,
        "class_defs",
    )
    offsets: List[int] = []
    seen: Set[int] = set()
    for i in range(header.class_defs_size):
        class_def = header.class_defs_off + i * CLASS_DEF_SIZE
        (class_data_off,) = struct.unpack_from("<I", dex, class_def + 0x18)
        if class_data_off == 0:
            # A marker interface or a class with no fields or methods.
            continue
        _check_range(dex, class_data_off, 1, "class_data_item")

        pos = class_data_off
        static_fields, pos = _read_uleb128(dex, pos)
        instance_fields, pos = _read_uleb128(dex, pos)
        direct_methods, pos = _read_uleb128(dex, pos)
        virtual_methods, pos = _read_uleb128(dex, pos)

        for _ in range(static_fields + instance_fields):
            _, pos = _read_uleb128(dex, pos)  # field_idx_diff
            _, pos = _read_uleb128(dex, pos)  # access_flags

        for _ in range(direct_methods + virtual_methods):
            _, pos = _read_uleb128(dex, pos)  # method_idx_diff
            _, pos = _read_uleb128(dex, pos)  # access_flags
            code_off, pos = _read_uleb128(dex, pos)
            if code_off == 0 or code_off in seen:
                continue
            seen.add(code_off)
            offsets.append(code_off)
    return offsets


def _read_insns(dex: _Buffer, code_off: int) -> Tuple[int, ...]:
    _check_range(dex, code_off, CODE_ITEM_HEADER_SIZE, "code_item")
    (insns_size,) = struct.unpack_from("<I", dex, code_off + 0x0C)
    start = code_off + CODE_ITEM_HEADER_SIZE
    _check_range(dex, start, insns_size * 2, "Instructions of code_item")
    return struct.unpack_from("<%dH" % insns_size, dex, start)


def _payload_width(insns: Sequence[int], pc: int) -> int:
    """How many code units the payload starting at ``pc`` occupies."""
    ident = insns[pc]
    n = len(insns)
    if ident == PACKED_SWITCH_PAYLOAD:
        if pc + 1 >= n:
            raise MalformedDex("Truncated packed-switch payload at %d." % pc)
        return insns[pc + 1] * 2 + 4
    if ident == SPARSE_SWITCH_PAYLOAD:
        if pc + 1 >= n:
            raise MalformedDex("Truncated sparse-switch payload at %d." % pc)
        return insns[pc + 1] * 4 + 2
    # fill-array-data
    if pc + 3 >= n:
        raise MalformedDex("Truncated fill-array-data payload at %d." % pc)
    element_width = insns[pc + 1]
    size = insns[pc + 2] | (insns[pc + 3] << 16)
    return (size * element_width + 1) // 2 + 4


_PAYLOADS = (PACKED_SWITCH_PAYLOAD, SPARSE_SWITCH_PAYLOAD, FILL_ARRAY_DATA_PAYLOAD)


def iter_instructions(insns: Sequence[int]) -> Iterator[Instruction]:
    """Decode an instruction stream.

    The widths of the yielded instructions, payloads included, add up
    to ``len(insns)``.

    :param insns: The 16-bit code units of one code_item.
    :raise MalformedDex: On an unused opcode, or if an instruction or
        payload runs past the end of the stream.
    """
    pc = 0
    n = len(insns)
    while pc < n:
        unit = insns[pc]
        opcode = unit & 0xFF
        if opcode == 0 and unit in _PAYLOADS:
            width = _payload_width(insns, pc)
            payload = True
        else:
            op = OPCODES[opcode]
            if op is None:
                raise MalformedDex("Unused opcode 0x%02x at code unit %d." % (opcode, pc))
            width = op.width
            payload = False
        if pc + width > n:
            raise MalformedDex(
                "Instruction at code unit %d (width %d) overruns insns_size %d."
                % (pc, width, n)
            )
        yield Instruction(pc, opcode, width, payload)
        pc += width


def extract_from_dex(dex: _Buffer, verify_checksum: bool = False) -> OpcodeHistogram:
    """Count the opcodes in every code_item of a DEX file.

    :param dex: The complete DEX file.
    :param verify_checksum: Verify the checksum and signature too.
        Off by default.
    :raise MalformedDex: If the file can't be walked.
    """
    try:
        header = parse_header(dex, verify_checksum)
        counts = [0] * OPCODE_COUNT
        offsets = code_item_offsets(dex, header)
        for code_off in offsets:
            for instruction in iter_instructions(_read_insns(dex, code_off)):
                if not instruction.payload:
                    counts[instruction.opcode] += 1
    except struct.error as e:
        raise MalformedDex(e)
    logger.debug(
        "Walked %d code items in a version %s DEX file.", len(offsets), header.version
    )
    return OpcodeHistogram(counts)


class DexExtractor(BytecodeExtractor):
    """Extract a histogram from a single DEX file.

    :param verify_checksum: Verify the checksum and signature before
        walking the file.
    """

    NAME: str = "dex"
    features = [NAME, "binary"]

    def __init__(self, verify_checksum: bool = False):
        self.verify_checksum = verify_checksum

    def extract(self, payload: _Buffer) -> OpcodeHistogram:
        return extract_from_dex(payload, self.verify_checksum)

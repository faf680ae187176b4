"""Write small apps in the formats dexgroup reads.

These writers produce the inputs of the synthetic corpus and of the
parser tests: DEX files, binary and text manifests, and smali. They
cover what extraction needs and no more. Instruction operands are all
zero (or ``v0``), and every method is a static ``()V`` method.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import hashlib
import struct
import zlib
from typing import (
    Dict,
    Iterable,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

from lxml import etree

from dexgroup.manifest._axml import (
    ANDROID_NAME_RESOURCE_ID,
    NO_ENTRY,
    RES_STRING_POOL_TYPE,
    RES_XML_END_ELEMENT_TYPE,
    RES_XML_END_NAMESPACE_TYPE,
    RES_XML_RESOURCE_MAP_TYPE,
    RES_XML_START_ELEMENT_TYPE,
    RES_XML_START_NAMESPACE_TYPE,
    RES_XML_TYPE,
    TYPE_STRING,
    UTF8_FLAG,
)
from dexgroup.opcodes import (
    FILL_ARRAY_DATA_PAYLOAD,
    OPCODES,
    Opcode,
    PACKED_SWITCH_PAYLOAD,
    SPARSE_SWITCH_PAYLOAD,
    opcode_for,
)

__all__ = [
    "DexBuilder",
    "assemble_method",
    "build_axml",
    "render_manifest_xml",
    "render_smali",
    "ANDROID_NAMESPACE",
]

ANDROID_NAMESPACE = "http://schemas.android.com/apk/res/android"

FILL_ARRAY_DATA = opcode_for("fill-array-data")
PACKED_SWITCH = opcode_for("packed-switch")
SPARSE_SWITCH = opcode_for("sparse-switch")

# Payloads written for the three payload-using instructions. All are
# an even number of code units, so one payload never knocks the next
# off its 4-byte alignment.
_PAYLOAD_UNITS: Dict[int, Tuple[int, ...]] = {
    # No targets, first key 0.
    PACKED_SWITCH: (PACKED_SWITCH_PAYLOAD, 0, 0, 0),
    # No keys.
    SPARSE_SWITCH: (SPARSE_SWITCH_PAYLOAD, 0),
    # One 4-byte element with value 0.
    FILL_ARRAY_DATA: (FILL_ARRAY_DATA_PAYLOAD, 4, 1, 0, 0, 0),
}


def _opcode(value: int) -> Opcode:
    op = OPCODES[value]
    if op is None:
        raise ValueError("0x%02x is not an assigned opcode." % value)
    return op


def _layout(opcodes: Sequence[int]) -> Tuple[List[int], List[int]]:
    """Order a method's instructions so payloads can follow them.

    Payloads must start on an even code unit. If the instructions add
    up to an odd width, one odd-width instruction moves after the
    payloads rather than padding with a nop, which would count as an
    extra opcode. If the only odd-width instructions use payloads, the
    last of them moves and goes without a payload of its own.

    :return: Instructions before the payloads, and instructions after.
    """
    ops = [_opcode(v) for v in opcodes]
    if not any(op.value in _PAYLOAD_UNITS for op in ops):
        return list(opcodes), []
    if sum(op.width for op in ops) % 2 == 0:
        return list(opcodes), []
    odd = [i for i, op in enumerate(ops) if op.width % 2 == 1]
    plain = [i for i in odd if ops[i].value not in _PAYLOAD_UNITS]
    i = (plain or odd)[-1]
    before = [op.value for op in ops[:i]] + [op.value for op in ops[i + 1:]]
    return before, [ops[i].value]


def assemble_method(opcodes: Sequence[int]) -> List[int]:
    """Encode opcodes as a code_item instruction stream.

    Every instruction is followed by zeroed operand units. Each
    switch and fill-array-data instruction gets a payload of its own,
    placed after the other instructions, and points at it.

    :return: 16-bit code units.
    """
    before, after = _layout(opcodes)
    units: List[int] = []
    pending: List[Tuple[int, int]] = []
    for value in before:
        op = _opcode(value)
        if value in _PAYLOAD_UNITS:
            pending.append((len(units), value))
        units.append(value)
        units.extend([0] * (op.width - 1))
    for position, value in pending:
        # The 31t operand: a signed 32-bit offset from the instruction.
        delta = len(units) - position
        units[position + 1] = delta & 0xFFFF
        units[position + 2] = (delta >> 16) & 0xFFFF
        units.extend(_PAYLOAD_UNITS[value])
    for value in after:
        units.append(value)
        units.extend([0] * (_opcode(value).width - 1))
    return units


class _Method(NamedTuple):
    class_descriptor: str
    name: str
    insns: Tuple[int, ...]


def _uleb128(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _mutf8(text: str) -> bytes:
    # Good enough for the ASCII descriptors and names written here.
    return text.encode("utf-8")


def _align(buffer: bytearray, boundary: int = 4) -> None:
    while len(buffer) % boundary:
        buffer.append(0)


class DexBuilder(object):
    """Assemble a DEX file out of classes with static methods.

    The output has string, type, proto and method id sections, class
    definitions, class data, code items and a map list, with a correct
    checksum and SHA-1 signature.

    :param version: Three-digit DEX version.
    """

    ACC_PUBLIC = 0x1
    ACC_STATIC = 0x8
    REGISTERS = 16

    def __init__(self, version: str = "035"):
        if len(version) != 3 or not version.isdigit():
            raise ValueError("DEX versions are three digits, not %r." % version)
        self.version = version
        self._classes: List[str] = []
        self._methods: List[_Method] = []

    def add_class(self, descriptor: str) -> None:
        """Declare a class, e.g. ``Lcom/example/Main;``."""
        if not (descriptor.startswith("L") and descriptor.endswith(";")):
            raise ValueError("Not a class descriptor: %r" % descriptor)
        if descriptor not in self._classes:
            self._classes.append(descriptor)

    def add_method(self, class_descriptor: str, name: str, opcodes: Sequence[int]) -> None:
        """Add a static method whose body holds ``opcodes``, in order
        apart from the payload layout described in `assemble_method`.
        """
        self.add_class(class_descriptor)
        self.add_method_units(class_descriptor, name, assemble_method(opcodes))

    def add_method_units(self, class_descriptor: str, name: str, insns: Sequence[int]) -> None:
        """Add a static method with an already-encoded body."""
        self.add_class(class_descriptor)
        for method in self._methods:
            if (method.class_descriptor, method.name) == (class_descriptor, name):
                raise ValueError("%s->%s is already defined." % (class_descriptor, name))
        self._methods.append(_Method(class_descriptor, name, tuple(insns)))

    def build(self) -> bytes:
        """Lay out every section and return the finished file."""
        strings = sorted(
            set(self._classes) | {"V"} | {m.name for m in self._methods}
        )
        string_index = {s: i for i, s in enumerate(strings)}
        types = sorted(set(self._classes) | {"V"}, key=lambda t: string_index[t])
        type_index = {t: i for i, t in enumerate(types)}
        methods = sorted(
            self._methods,
            key=lambda m: (type_index[m.class_descriptor], string_index[m.name]),
        )
        classes = sorted(self._classes, key=lambda c: type_index[c])

        header_size = 0x70
        string_ids_off = header_size
        type_ids_off = string_ids_off + 4 * len(strings)
        proto_ids_off = type_ids_off + 4 * len(types)
        method_ids_off = proto_ids_off + 12
        class_defs_off = method_ids_off + 8 * len(methods)
        data_off = class_defs_off + 0x20 * len(classes)

        data = bytearray()

        def absolute(relative: int) -> int:
            return data_off + relative

        code_offsets: Dict[int, int] = {}
        for i, method in enumerate(methods):
            _align(data)
            code_offsets[i] = absolute(len(data))
            data += struct.pack(
                "<HHHHII", self.REGISTERS, 0, 0, 0, 0, len(method.insns)
            )
            data += struct.pack("<%dH" % len(method.insns), *method.insns)
        code_count = len(methods)

        string_data_offsets = []
        for s in strings:
            string_data_offsets.append(absolute(len(data)))
            data += _uleb128(len(s)) + _mutf8(s) + b"\x00"

        class_data_offsets: Dict[str, int] = {}
        method_numbers = {id(m): i for i, m in enumerate(methods)}
        for descriptor in classes:
            own = [m for m in methods if m.class_descriptor == descriptor]
            if not own:
                continue
            class_data_offsets[descriptor] = absolute(len(data))
            data += _uleb128(0) + _uleb128(0) + _uleb128(len(own)) + _uleb128(0)
            previous = 0
            for method in own:
                number = method_numbers[id(method)]
                data += _uleb128(number - previous)
                data += _uleb128(self.ACC_PUBLIC | self.ACC_STATIC)
                data += _uleb128(code_offsets[number])
                previous = number

        _align(data)
        map_off = absolute(len(data))
        sections = [
            (0x0000, 1, 0),
            (0x0001, len(strings), string_ids_off),
            (0x0002, len(types), type_ids_off),
            (0x0003, 1, proto_ids_off),
            (0x0005, len(methods), method_ids_off),
            (0x0006, len(classes), class_defs_off),
        ]
        if code_count:
            sections.append((0x2001, code_count, code_offsets[0]))
        sections.append((0x2002, len(strings), string_data_offsets[0]))
        if class_data_offsets:
            sections.append((0x2000, len(class_data_offsets), min(class_data_offsets.values())))
        sections.append((0x1000, 1, map_off))
        sections = [s for s in sections if s[1]]
        data += struct.pack("<I", len(sections))
        for type_code, size, offset in sections:
            data += struct.pack("<HHII", type_code, 0, size, offset)

        body = bytearray()
        for offset in string_data_offsets:
            body += struct.pack("<I", offset)
        for t in types:
            body += struct.pack("<I", string_index[t])
        # One proto: ()V, with shorty "V" and return type V.
        body += struct.pack("<III", string_index["V"], type_index["V"], 0)
        for method in methods:
            body += struct.pack(
                "<HHI", type_index[method.class_descriptor], 0, string_index[method.name]
            )
        object_type = NO_ENTRY
        for descriptor in classes:
            body += struct.pack(
                "<IIIIIIII",
                type_index[descriptor],
                self.ACC_PUBLIC,
                object_type,
                0,
                NO_ENTRY,
                0,
                class_data_offsets.get(descriptor, 0),
                0,
            )

        file_size = header_size + len(body) + len(data)
        header = bytearray(
            struct.pack(
                "<8sI20s20I",
                b"dex\n" + self.version.encode("ascii") + b"\x00",
                0,
                b"\x00" * 20,
                file_size,
                header_size,
                0x12345678,
                0, 0,
                map_off,
                len(strings), string_ids_off,
                len(types), type_ids_off,
                1, proto_ids_off,
                0, 0,
                len(methods), method_ids_off,
                len(classes), class_defs_off,
                len(data), data_off,
            )
        )
        dex = header + body + data
        dex[12:32] = hashlib.sha1(bytes(dex[32:])).digest()
        dex[8:12] = struct.pack("<I", zlib.adler32(bytes(dex[12:])) & 0xFFFFFFFF)
        return bytes(dex)


# Operand text for each instruction format, so rendered smali reads
# like disassembler output.
_OPERANDS: Dict[str, str] = {
    "10x": "",
    "12x": "v0, v1",
    "11n": "v0, 0x0",
    "11x": "v0",
    "10t": ":label_0",
    "20t": ":label_0",
    "30t": ":label_0",
    "22x": "v0, v1",
    "32x": "v0, v1",
    "21t": "v0, :label_0",
    "31t": "v0, :label_0",
    "22t": "v0, v1, :label_0",
    "21s": "v0, 0x0",
    "21h": "v0, 0x0",
    "31i": "v0, 0x0",
    "51l": "v0, 0x0L",
    "21c": "v0, Ljava/lang/Object;",
    "31c": 'v0, ""',
    "22c": "v0, v1, Ljava/lang/Object;",
    "23x": "v0, v1, v2",
    "22b": "v0, v1, 0x0",
    "22s": "v0, v1, 0x0",
    "35c": "{v0}, Ljava/lang/Object;-><init>()V",
    "3rc": "{v0 .. v0}, Ljava/lang/Object;-><init>()V",
    "45cc": "{v0}, Ljava/lang/Object;->hashCode()I, ()I",
    "4rcc": "{v0 .. v0}, Ljava/lang/Object;->hashCode()I, ()I",
}

_SMALI_PAYLOADS = {
    PACKED_SWITCH: ("pswitch_data", [".packed-switch 0x0", ".end packed-switch"]),
    SPARSE_SWITCH: ("sswitch_data", [".sparse-switch", ".end sparse-switch"]),
    FILL_ARRAY_DATA: ("array", [".array-data 4", "    0x0", ".end array-data"]),
}


def _smali_instruction(op: Opcode, payload_label: Optional[str]) -> str:
    if payload_label is not None:
        operands = "v0, :%s" % payload_label
    else:
        operands = _OPERANDS[op.format]
    return ("%s %s" % (op.mnemonic, operands)).rstrip()


def render_smali(
    class_descriptor: str,
    methods: Iterable[Tuple[str, Sequence[int]]],
    super_descriptor: str = "Ljava/lang/Object;",
) -> str:
    """Render one class as smali, the way a disassembler would show
    the code `DexBuilder.add_method` writes for the same methods.

    :param methods: (method name, opcodes) pairs.
    """
    lines = [
        ".class public %s" % class_descriptor,
        ".super %s" % super_descriptor,
        '.source "%s.java"' % class_descriptor.strip("L;").rsplit("/", 1)[-1],
    ]
    for name, opcodes in methods:
        before, after = _layout(opcodes)
        lines += ["", ".method public static %s()V" % name, "    .registers 16", ""]
        lines.append("    :label_0")
        payloads: List[Tuple[str, int]] = []
        for value in before:
            op = _opcode(value)
            label = None
            if value in _SMALI_PAYLOADS:
                label = "%s_%d" % (_SMALI_PAYLOADS[value][0], len(payloads))
                payloads.append((label, value))
            lines.append("    " + _smali_instruction(op, label))
        for label, value in payloads:
            lines.append("")
            lines.append("    :%s" % label)
            lines += ["    " + line for line in _SMALI_PAYLOADS[value][1]]
        for value in after:
            lines.append("    " + _smali_instruction(_opcode(value), None))
        lines.append(".end method")
    return "\n".join(lines) + "\n"


def render_manifest_xml(permissions: Iterable[str], package: str = "com.example.app") -> bytes:
    """Write a text AndroidManifest.xml requesting ``permissions``, in
    sorted order, repeats included.
    """
    nsmap = {"android": ANDROID_NAMESPACE}
    root = etree.Element("manifest", nsmap=nsmap)
    root.set("package", package)
    for permission in sorted(permissions):
        element = etree.SubElement(root, "uses-permission")
        element.set("{%s}name" % ANDROID_NAMESPACE, permission)
    etree.SubElement(root, "application")
    return etree.tostring(root, xml_declaration=True, encoding="utf-8", pretty_print=True)


def _string_pool(strings: Sequence[str], utf8: bool) -> bytes:
    offsets = []
    data = bytearray()
    for s in strings:
        offsets.append(len(data))
        if utf8:
            encoded = s.encode("utf-8")
            for length in (len(s), len(encoded)):
                if length > 0x7F:
                    data += bytes([0x80 | (length >> 8), length & 0xFF])
                else:
                    data.append(length)
            data += encoded + b"\x00"
        else:
            encoded = s.encode("utf-16-le")
            data += struct.pack("<H", len(encoded) // 2) + encoded + b"\x00\x00"
    _align(data)
    header_size = 0x1C
    strings_start = header_size + 4 * len(strings)
    size = strings_start + len(data)
    header = struct.pack(
        "<HHIIIIII",
        RES_STRING_POOL_TYPE, header_size, size,
        len(strings), 0, UTF8_FLAG if utf8 else 0, strings_start, 0,
    )
    return header + struct.pack("<%dI" % len(strings), *offsets) + bytes(data)


def _attribute(ns: int, name: int, value: int) -> bytes:
    return struct.pack("<IIIHBBI", ns, name, value, 8, 0, TYPE_STRING, value)


def _start_element(line: int, ns: int, name: int, attributes: Sequence[bytes]) -> bytes:
    body = struct.pack("<IIHHHHHH", ns, name, 0x14, 0x14, len(attributes), 0, 0, 0)
    body += b"".join(attributes)
    return struct.pack("<HHIII", RES_XML_START_ELEMENT_TYPE, 0x10, 0x10 + len(body), line, NO_ENTRY) + body


def _end_element(line: int, ns: int, name: int) -> bytes:
    return struct.pack("<HHIIIII", RES_XML_END_ELEMENT_TYPE, 0x10, 0x18, line, NO_ENTRY, ns, name)


def build_axml(
    permissions: Iterable[str], utf8: bool = False, package: str = "com.example.app"
) -> bytes:
    """Compile a manifest requesting ``permissions`` to binary XML.
    Elements come in sorted order, and a repeated permission gets an
    element per repetition.

    :param utf8: Store strings as UTF-8 rather than UTF-16.
    """
    permissions = sorted(permissions)
    # "name" comes first so the resource map can give it its id.
    strings = ["name", "android", ANDROID_NAMESPACE, "package", "manifest",
               "uses-permission", "application", package] + sorted(set(permissions))
    index = {s: i for i, s in enumerate(strings)}
    android = index[ANDROID_NAMESPACE]

    events = bytearray()
    events += struct.pack(
        "<HHIIIII", RES_XML_START_NAMESPACE_TYPE, 0x10, 0x18, 1, NO_ENTRY,
        index["android"], android,
    )
    events += _start_element(
        2, NO_ENTRY, index["manifest"], [_attribute(NO_ENTRY, index["package"], index[package])]
    )
    for line, permission in enumerate(permissions, 3):
        events += _start_element(
            line, NO_ENTRY, index["uses-permission"],
            [_attribute(android, index["name"], index[permission])],
        )
        events += _end_element(line, NO_ENTRY, index["uses-permission"])
    last = len(permissions) + 3
    events += _start_element(last, NO_ENTRY, index["application"], [])
    events += _end_element(last, NO_ENTRY, index["application"])
    events += _end_element(last + 1, NO_ENTRY, index["manifest"])
    events += struct.pack(
        "<HHIIIII", RES_XML_END_NAMESPACE_TYPE, 0x10, 0x18, last + 1, NO_ENTRY,
        index["android"], android,
    )

    resource_map = struct.pack("<HHII", RES_XML_RESOURCE_MAP_TYPE, 8, 12, ANDROID_NAME_RESOURCE_ID)
    body = _string_pool(strings, utf8) + resource_map + bytes(events)
    return struct.pack("<HHI", RES_XML_TYPE, 8, 8 + len(body)) + body

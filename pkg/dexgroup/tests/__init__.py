# encoding: utf-8
"""Helper classes for tests."""

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import io
import struct
import zipfile
import pytest # type:ignore

from typing import (
    Dict,
    Iterable,
    List,
    Optional,
    Sequence,
    Tuple,
)

from dexgroup.classifier import Label
from dexgroup.corpus import (
    ExtractedApp,
    ExtractedCorpus,
)
from dexgroup.emit import (
    DexBuilder,
    build_axml,
    render_smali,
)
from dexgroup.histogram import OpcodeHistogram
from dexgroup.manifest import PermissionSet
from dexgroup.opcodes import (
    OPCODES,
    opcode_for,
)

# A class descriptor used by most bytecode fixtures.
MAIN = "Lcom/example/Main;"

# Opcode values of a few instructions the fixtures use a lot.
NOP = opcode_for("nop")
RETURN_VOID = opcode_for("return-void")
RETURN = opcode_for("return")
CONST_4 = opcode_for("const/4")
CONST_STRING = opcode_for("const-string")
INVOKE_VIRTUAL = opcode_for("invoke-virtual")
PACKED_SWITCH = opcode_for("packed-switch")
SPARSE_SWITCH = opcode_for("sparse-switch")
FILL_ARRAY_DATA = opcode_for("fill-array-data")
CONST_WIDE = opcode_for("const-wide")

ASSIGNED = [op.value for op in OPCODES if op is not None]

CALL_PHONE = "android.permission.CALL_PHONE"
READ_CALENDAR = "android.permission.READ_CALENDAR"
INTERNET = "android.permission.INTERNET"
SEND_SMS = "android.permission.SEND_SMS"
READ_EXTERNAL_STORAGE = "android.permission.READ_EXTERNAL_STORAGE"

# The manifest snippet Android's documentation uses to show a
# permission request.
CALL_PHONE_MANIFEST = """<?xml version="1.0" encoding="utf-8"?>
<manifest xmlns:android="http://schemas.android.com/apk/res/android"
    package="com.android.app.myapp">
    <uses-permission android:name="android.permission.CALL_PHONE" />
    <application/>
</manifest>
"""

# Bytecode fixtures: each is a list of (method name, opcodes), plus the
# nonzero buckets of the histogram it should produce.
BYTECODE_FIXTURES: List[Tuple[str, List[Tuple[str, List[int]]], Dict[int, int]]] = [
    ("nop-return-void", [("run", [NOP, RETURN_VOID])], {0x00: 1, 0x0E: 1}),
    ("const-return", [("run", [CONST_4, RETURN])], {0x12: 1, 0x0F: 1}),
    (
        "packed-switch",
        [("run", [CONST_4, PACKED_SWITCH, RETURN_VOID])],
        {0x12: 1, 0x2B: 1, 0x0E: 1},
    ),
    (
        "every-payload",
        [("run", [PACKED_SWITCH, SPARSE_SWITCH, FILL_ARRAY_DATA, NOP, RETURN_VOID])],
        {0x2B: 1, 0x2C: 1, 0x26: 1, 0x00: 1, 0x0E: 1},
    ),
    (
        "odd-width-with-payload",
        [("run", [CONST_4, FILL_ARRAY_DATA, CONST_WIDE, RETURN_VOID])],
        {0x12: 1, 0x26: 1, 0x18: 1, 0x0E: 1},
    ),
    (
        "two-methods",
        [
            ("a", [CONST_STRING, INVOKE_VIRTUAL, RETURN_VOID]),
            ("b", [CONST_STRING, CONST_STRING, RETURN_VOID]),
        ],
        {0x1A: 3, 0x6E: 1, 0x0E: 2},
    ),
]


def histogram_of(mapping: Dict[int, int]) -> OpcodeHistogram:
    """A histogram with the given nonzero buckets."""
    return OpcodeHistogram.from_mapping(mapping)


def app(
    app_id: str,
    label: Label,
    counts: Optional[Dict[int, int]] = None,
    permissions: Iterable[str] = (),
) -> ExtractedApp:
    """An already-extracted app."""
    return ExtractedApp(app_id, label, histogram_of(counts or {}), PermissionSet(permissions))


def labelled_apps(
    n_benign: int, n_malicious: int, prefix: str = "app", permissions: Iterable[str] = ()
) -> List[ExtractedApp]:
    """Benign apps followed by malicious apps. Malicious apps use
    const-string more, so the two classes can be told apart.
    """
    permissions = list(permissions)
    apps = []
    for i in range(n_benign):
        apps.append(app("%s-b%d" % (prefix, i), Label.BENIGN, {0x1A: 2 + i % 3, 0x0E: 5}, permissions))
    for i in range(n_malicious):
        apps.append(app("%s-m%d" % (prefix, i), Label.MALICIOUS, {0x1A: 20 + i % 3, 0x0E: 5}, permissions))
    return apps


def corpus_of(*groups: Tuple[str, int, int, Sequence[str]]) -> ExtractedCorpus:
    """A corpus made of ``(prefix, n_benign, n_malicious, permissions)``
    blocks.
    """
    apps: List[ExtractedApp] = []
    for prefix, n_benign, n_malicious, permissions in groups:
        apps.extend(labelled_apps(n_benign, n_malicious, prefix, permissions))
    return ExtractedCorpus(apps)


def dex_for(methods: Sequence[Tuple[str, Sequence[int]]], class_descriptor: str = MAIN) -> bytes:
    """A DEX file with one class holding ``methods``."""
    builder = DexBuilder()
    builder.add_class(class_descriptor)
    for name, opcodes in methods:
        builder.add_method(class_descriptor, name, opcodes)
    return builder.build()


def smali_for(methods: Sequence[Tuple[str, Sequence[int]]], class_descriptor: str = MAIN) -> str:
    """The smali a disassembler would print for `dex_for`'s output."""
    return render_smali(class_descriptor, methods)


def apk_for(
    manifest: Optional[bytes] = None,
    dex_files: Sequence[Tuple[str, bytes]] = (),
    extra: Sequence[Tuple[str, bytes]] = (),
) -> bytes:
    """A ZIP archive laid out like an APK."""
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", zipfile.ZIP_DEFLATED) as archive:
        if manifest is not None:
            archive.writestr("AndroidManifest.xml", manifest)
        for name, data in dex_files:
            archive.writestr(name, data)
        for name, data in extra:
            archive.writestr(name, data)
    return buffer.getvalue()


def damage_deflate(archive: bytes, name: str) -> bytes:
    """Flip every bit of one entry's compressed bytes, leaving the ZIP
    structure intact.
    """
    with zipfile.ZipFile(io.BytesIO(archive)) as zf:
        info = zf.getinfo(name)
    name_length, extra_length = struct.unpack_from("<HH", archive, info.header_offset + 26)
    start = info.header_offset + 30 + name_length + extra_length
    end = start + info.compress_size
    damaged = bytes(b ^ 0xFF for b in archive[start:end])
    return archive[:start] + damaged + archive[end:]


def patch_central_entry(
    archive: bytes, name: str, flag_bits: int = 0, compress_type: Optional[int] = None
) -> bytes:
    """Change one entry's central directory record: OR in general
    purpose flag bits, or claim a different compression method.
    """
    data = bytearray(archive)
    position = data.find(b"PK\x01\x02")
    while position >= 0:
        (name_length,) = struct.unpack_from("<H", data, position + 28)
        if data[position + 46 : position + 46 + name_length] == name.encode():
            (flags,) = struct.unpack_from("<H", data, position + 8)
            struct.pack_into("<H", data, position + 8, flags | flag_bits)
            if compress_type is not None:
                struct.pack_into("<H", data, position + 10, compress_type)
            return bytes(data)
        position = data.find(b"PK\x01\x02", position + 46)
    raise KeyError(name)


def standard_apk(permissions: Iterable[str] = (CALL_PHONE,)) -> bytes:
    """An APK with a binary manifest and a single small classes.dex."""
    return apk_for(
        build_axml(permissions),
        [("classes.dex", dex_for([("run", [NOP, RETURN_VOID])]))],
    )


class ExtractorSmokeTest(object):
    """Tests every bytecode extractor should pass.

    Subclasses turn a list of (method name, opcodes) into a histogram
    by writing the methods in their own input format and extracting
    them.
    """

    def histogram_for(self, methods: Sequence[Tuple[str, Sequence[int]]]) -> OpcodeHistogram:
        raise NotImplementedError()

    @pytest.mark.parametrize(
        "name, methods, expected", BYTECODE_FIXTURES, ids=[f[0] for f in BYTECODE_FIXTURES]
    )
    def test_fixture(self, name, methods, expected):
        histogram = self.histogram_for(methods)
        assert histogram.nonzero() == expected
        assert histogram.total == sum(expected.values())

    def test_no_methods(self):
        histogram = self.histogram_for([])
        assert histogram == OpcodeHistogram.empty()
        assert histogram.total == 0

    def test_empty_method(self):
        assert self.histogram_for([("run", [])]).total == 0

    def test_every_assigned_opcode(self):
        # One method per opcode keeps each body short.
        methods = [("m%02x" % op, [op]) for op in ASSIGNED]
        histogram = self.histogram_for(methods)
        assert histogram.nonzero() == {op: 1 for op in ASSIGNED}

    def test_repeated_opcodes(self):
        histogram = self.histogram_for([("run", [CONST_4] * 7 + [RETURN_VOID])])
        assert histogram[CONST_4] == 7
        assert histogram[RETURN_VOID] == 1

    def test_deterministic(self):
        methods = BYTECODE_FIXTURES[3][1]
        assert self.histogram_for(methods) == self.histogram_for(methods)


class ManifestParserSmokeTest(object):
    """Tests every manifest parser should pass.

    Subclasses encode a list of permissions as a manifest, in order
    and with repeats, and parse it back.
    """

    def permissions_for(self, permissions: Sequence[str]) -> PermissionSet:
        raise NotImplementedError()

    def test_call_phone(self):
        assert self.permissions_for([CALL_PHONE]) == {CALL_PHONE}

    def test_no_permissions(self):
        assert self.permissions_for([]) == PermissionSet()

    def test_repeated_permission(self):
        permissions = self.permissions_for([CALL_PHONE, CALL_PHONE])
        assert len(permissions) == 1

    def test_order_does_not_matter(self):
        forward = [CALL_PHONE, READ_CALENDAR, INTERNET]
        assert self.permissions_for(forward) == self.permissions_for(list(reversed(forward)))

    def test_case_and_custom_names_preserved(self):
        names = ["com.example.permission.C2D_MESSAGE", "android.permission.camera"]
        assert self.permissions_for(names) == set(names)

    def test_returns_permission_set(self):
        assert isinstance(self.permissions_for([CALL_PHONE]), PermissionSet)


"""Tests of APK reading."""

import pytest # type:ignore

from dexgroup.apk import (
    ApkFile,
    dex_entry_names,
)
from dexgroup.emit import (
    build_axml,
    render_manifest_xml,
)
from dexgroup.exceptions import (
    MalformedApk,
    MalformedDex,
)

from . import (
    CALL_PHONE,
    CONST_4,
    NOP,
    READ_CALENDAR,
    RETURN_VOID,
    apk_for,
    damage_deflate,
    dex_for,
    patch_central_entry,
    standard_apk,
)


class TestDexEntryNames(object):

    def test_loading_order(self):
        names = ["classes10.dex", "classes2.dex", "classes.dex", "classes3.dex"]
        assert dex_entry_names(names) == [
            "classes.dex", "classes2.dex", "classes3.dex", "classes10.dex"
        ]

    @pytest.mark.parametrize(
        "name",
        ["assets/classes.dex", "classes.dex.bak", "lib/classes2.dex", "Classes.dex", "classesX.dex"],
    )
    def test_other_entries_ignored(self, name):
        assert dex_entry_names([name]) == []


class TestApkFile(object):

    def test_standard_apk(self):
        with ApkFile(standard_apk()) as apk:
            assert apk.permissions() == {CALL_PHONE}
            assert apk.histogram().nonzero() == {0x00: 1, 0x0E: 1}

    def test_from_path(self, tmp_path):
        path = tmp_path / "app.apk"
        path.write_bytes(standard_apk([READ_CALENDAR]))
        with ApkFile(path) as apk:
            assert apk.permissions() == {READ_CALENDAR}
        with ApkFile(str(path)) as apk:
            assert apk.histogram().total == 2

    def test_multidex_histograms_merge(self):
        data = apk_for(
            build_axml([CALL_PHONE]),
            [
                ("classes2.dex", dex_for([("b", [CONST_4, CONST_4, RETURN_VOID])])),
                ("classes.dex", dex_for([("a", [NOP, RETURN_VOID])])),
            ],
        )
        with ApkFile(data) as apk:
            assert [name for name, _ in apk.dex_entries()] == ["classes.dex", "classes2.dex"]
            assert apk.histogram().nonzero() == {0x00: 1, 0x12: 2, 0x0E: 2}

    def test_text_manifest_inside_apk(self):
        data = apk_for(render_manifest_xml([CALL_PHONE]), [("classes.dex", dex_for([]))])
        with ApkFile(data) as apk:
            assert apk.permissions() == {CALL_PHONE}

    def test_other_entries_do_not_count(self):
        data = apk_for(
            build_axml([]),
            [("classes.dex", dex_for([("a", [NOP])]))],
            extra=[("assets/classes.dex", dex_for([("b", [CONST_4])])), ("res/raw/x", b"x")],
        )
        with ApkFile(data) as apk:
            assert apk.histogram().nonzero() == {0x00: 1}
            assert apk.permissions() == set()


class TestBrokenApks(object):

    def test_not_a_zip(self):
        with pytest.raises(MalformedApk):
            ApkFile(b"dex\n035\x00 and then some")

    def test_missing_file(self, tmp_path):
        with pytest.raises(MalformedApk):
            ApkFile(tmp_path / "nope.apk")

    def test_missing_manifest(self):
        data = apk_for(None, [("classes.dex", dex_for([]))])
        with ApkFile(data) as apk:
            with pytest.raises(MalformedApk):
                apk.permissions()
            # The bytecode is still readable.
            assert apk.histogram().total == 0

    def test_missing_dex(self):
        with ApkFile(apk_for(build_axml([CALL_PHONE]))) as apk:
            assert apk.permissions() == {CALL_PHONE}
            with pytest.raises(MalformedDex):
                apk.histogram()

    def test_one_bad_dex_spoils_the_app(self):
        data = apk_for(
            build_axml([]),
            [("classes.dex", dex_for([("a", [NOP])])), ("classes2.dex", b"not a dex file")],
        )
        with ApkFile(data) as apk:
            with pytest.raises(MalformedDex):
                apk.histogram()

    def test_damaged_deflate_stream(self):
        data = damage_deflate(standard_apk(), "classes.dex")
        with ApkFile(data) as apk:
            assert apk.permissions() == {CALL_PHONE}
            with pytest.raises(MalformedDex):
                apk.histogram()

    @pytest.mark.parametrize(
        "patch",
        [
            # Encrypted.
            dict(flag_bits=0x1),
            # Compressed with a method zipfile can't read.
            dict(compress_type=99),
        ],
    )
    def test_unreadable_entries(self, patch):
        data = patch_central_entry(standard_apk(), "classes.dex", **patch)
        with ApkFile(data) as apk:
            with pytest.raises(MalformedDex):
                apk.histogram()
        data = patch_central_entry(standard_apk(), "AndroidManifest.xml", **patch)
        with ApkFile(data) as apk:
            with pytest.raises(MalformedApk):
                apk.permissions()

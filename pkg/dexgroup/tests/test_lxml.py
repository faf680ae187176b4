"""Tests of the text manifest parser."""

import pytest # type:ignore

from dexgroup.emit import (
    build_axml,
    render_manifest_xml,
)
from dexgroup.exceptions import (
    MalformedXml,
    ManifestError,
)
from dexgroup.manifest import (
    PermissionSet,
    looks_like_axml,
    parse_manifest,
)
from dexgroup.manifest._lxml import (
    LXMLManifestParser,
    parse_manifest_text,
)

from . import (
    CALL_PHONE,
    CALL_PHONE_MANIFEST,
    INTERNET,
    ManifestParserSmokeTest,
    READ_CALENDAR,
    SEND_SMS,
)


def manifest(*body: str) -> str:
    return (
        '<manifest xmlns:android="http://schemas.android.com/apk/res/android"'
        ' package="com.example.app">\n'
        + "\n".join(body)
        + "\n</manifest>\n"
    )


class TestLXMLManifestParser(ManifestParserSmokeTest):
    """See ``ManifestParserSmokeTest``."""

    def permissions_for(self, permissions):
        return LXMLManifestParser().parse(render_manifest_xml(permissions))


class TestHandWrittenManifests(object):

    def test_documentation_example(self):
        assert parse_manifest_text(CALL_PHONE_MANIFEST) == {CALL_PHONE}

    def test_bytes_and_str_agree(self):
        assert parse_manifest_text(CALL_PHONE_MANIFEST.encode("utf-8")) == parse_manifest_text(
            CALL_PHONE_MANIFEST
        )

    def test_sdk_specific_elements(self):
        text = manifest(
            '<uses-permission android:name="%s"/>' % CALL_PHONE,
            '<uses-permission-sdk-23 android:name="%s"/>' % SEND_SMS,
            '<uses-permission-sdk-m android:name="%s"/>' % READ_CALENDAR,
        )
        assert parse_manifest_text(text) == {CALL_PHONE, SEND_SMS, READ_CALENDAR}

    def test_declared_permissions_are_not_requested(self):
        text = manifest(
            '<permission android:name="com.example.permission.MINE"/>',
            '<uses-feature android:name="android.hardware.camera"/>',
            '<uses-permission android:name="%s"/>' % INTERNET,
        )
        assert parse_manifest_text(text) == {INTERNET}

    def test_repeats_collapse(self):
        text = manifest(*['<uses-permission android:name="%s"/>' % CALL_PHONE] * 3)
        assert parse_manifest_text(text) == PermissionSet([CALL_PHONE])

    def test_unusual_namespace_prefix(self):
        text = (
            '<manifest xmlns:a="http://schemas.android.com/apk/res/android">'
            '<uses-permission a:name="%s"/></manifest>' % CALL_PHONE
        )
        assert parse_manifest_text(text) == {CALL_PHONE}

    def test_capitalised_namespace_uri(self):
        # Hand-edited manifests sometimes capitalise the prefix and the
        # URI. Names still match on their local part.
        text = (
            '<manifest xmlns:Android="http://schemas.Android.com/apk/res/Android"'
            ' package="com.example.app">\n'
            '<uses-permission Android:name="%s"/>\n'
            '<uses-permission Android:name="%s"/>\n'
            "</manifest>\n" % (CALL_PHONE, SEND_SMS)
        )
        assert parse_manifest_text(text) == {CALL_PHONE, SEND_SMS}
        assert parse_manifest(text.encode("utf-8")) == {CALL_PHONE, SEND_SMS}

    def test_android_namespace_wins(self):
        text = manifest(
            '<uses-permission name="wrong" android:name="%s"/>' % CALL_PHONE
        )
        assert parse_manifest_text(text) == {CALL_PHONE}

    def test_whitespace_trimmed_and_empty_dropped(self):
        text = manifest(
            '<uses-permission android:name="  %s "/>' % CALL_PHONE,
            '<uses-permission android:name=""/>',
            "<uses-permission/>",
        )
        assert parse_manifest_text(text) == {CALL_PHONE}

    def test_nested_elements(self):
        text = manifest(
            "<application>",
            '<uses-permission android:name="%s"/>' % SEND_SMS,
            "</application>",
        )
        assert parse_manifest_text(text) == {SEND_SMS}


class TestMalformedXml(object):

    @pytest.mark.parametrize(
        "text",
        [
            "<manifest>",
            "<manifest><uses-permission></manifest>",
            "not xml at all",
        ],
    )
    def test_not_well_formed(self, text):
        with pytest.raises(MalformedXml):
            parse_manifest_text(text)

    def test_malformed_is_a_manifest_error(self):
        assert issubclass(MalformedXml, ManifestError)


class TestParseManifest(object):

    def test_text_is_sniffed(self):
        assert not looks_like_axml(CALL_PHONE_MANIFEST.encode("utf-8"))
        assert parse_manifest(CALL_PHONE_MANIFEST) == {CALL_PHONE}
        assert parse_manifest(CALL_PHONE_MANIFEST.encode("utf-8")) == {CALL_PHONE}

    @pytest.mark.parametrize(
        "permissions",
        [
            [],
            [CALL_PHONE],
            [INTERNET, READ_CALENDAR, SEND_SMS],
            [SEND_SMS, SEND_SMS, "com.example.permission.CUSTOM"],
        ],
    )
    @pytest.mark.parametrize("utf8", [False, True])
    def test_encodings_agree(self, permissions, utf8):
        binary = parse_manifest(build_axml(permissions, utf8=utf8))
        text = parse_manifest(render_manifest_xml(permissions))
        assert binary == text == PermissionSet(permissions)

    def test_unknown_encoding(self):
        with pytest.raises(ManifestError):
            parse_manifest(CALL_PHONE_MANIFEST, encoding="yaml")

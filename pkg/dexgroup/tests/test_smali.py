"""Tests of the smali extractor."""

import warnings
import pytest # type:ignore

from dexgroup._warnings import UnknownMnemonicWarning
from dexgroup.exceptions import (
    MalformedSmali,
    UnknownMnemonic,
)
from dexgroup.extractor._smali import (
    SmaliExtractor,
    extract_from_smali,
)
from dexgroup.histogram import OpcodeHistogram

from . import (
    BYTECODE_FIXTURES,
    ExtractorSmokeTest,
    dex_for,
    smali_for,
)
from dexgroup.extractor._dex import extract_from_dex


class TestSmaliExtractor(ExtractorSmokeTest):
    """See ``ExtractorSmokeTest``."""

    def histogram_for(self, methods):
        return SmaliExtractor(on_unknown="fail").extract([smali_for(methods)])


class TestSmaliAgreesWithDex(object):

    @pytest.mark.parametrize(
        "name, methods, expected", BYTECODE_FIXTURES, ids=[f[0] for f in BYTECODE_FIXTURES]
    )
    def test_same_histogram(self, name, methods, expected):
        smali = extract_from_smali([smali_for(methods)], on_unknown="fail")
        assert smali == extract_from_dex(dex_for(methods))

    def test_one_document_per_class(self):
        a = [("a", BYTECODE_FIXTURES[0][1][0][1])]
        b = [("b", BYTECODE_FIXTURES[4][1][0][1])]
        docs = [smali_for(a, "Lcom/example/A;"), smali_for(b, "Lcom/example/B;")]
        merged = extract_from_smali(docs)
        assert merged == extract_from_smali(docs[:1]) + extract_from_smali(docs[1:])


class TestSmaliLines(object):

    def doc(self, *body):
        return "\n".join(
            [".class public LA;", ".super Ljava/lang/Object;", ".method public static run()V"]
            + list(body)
            + [".end method", ""]
        )

    def test_instruction_lines(self):
        histogram = extract_from_smali([self.doc("    const/4 v0, 0x0", "    return v0")])
        assert histogram.nonzero() == {0x12: 1, 0x0F: 1}

    def test_directives_only(self):
        text = ".class public LA;\n.super Ljava/lang/Object;\n.field private x:I\n"
        assert extract_from_smali([text]) == OpcodeHistogram.empty()

    def test_skips_labels_comments_and_directives(self):
        histogram = extract_from_smali(
            [
                self.doc(
                    "    .registers 2",
                    "    .line 12",
                    "    # nop would count here if comments were read",
                    "    :cond_0",
                    "",
                    "    return-void",
                )
            ]
        )
        assert histogram.nonzero() == {0x0E: 1}

    def test_instructions_outside_methods_do_not_count(self):
        text = self.doc("    nop") + "nop\nreturn-void\n"
        assert extract_from_smali([text]).nonzero() == {0x00: 1}

    @pytest.mark.parametrize(
        "block",
        [
            ["    .packed-switch 0x1", "        :pswitch_0", "    .end packed-switch"],
            ["    .sparse-switch", "        0x5 -> :sswitch_0", "    .end sparse-switch"],
            ["    .array-data 4", "        0x0", "        0x1", "    .end array-data"],
            [
                "    .annotation system Ldalvik/annotation/Throws;",
                "        value = {",
                "            Ljava/io/IOException;",
                "        }",
                "    .end annotation",
            ],
        ],
    )
    def test_data_blocks_skipped(self, block):
        histogram = extract_from_smali([self.doc("    nop", *block)], on_unknown="fail")
        assert histogram.nonzero() == {0x00: 1}

    def test_bytes_documents(self):
        text = self.doc("    return-void")
        assert extract_from_smali([text.encode("utf-8")]) == extract_from_smali([text])

    def test_bad_utf8(self):
        with pytest.raises(MalformedSmali) as exc_info:
            extract_from_smali([b".method a()V\n\xff\xfe\n.end method\n"], names=["Bad.smali"])
        assert "Bad.smali" in str(exc_info.value)

    def test_single_document_payload(self):
        text = self.doc("    return-void")
        assert SmaliExtractor().extract(text).total == 1


class TestUnknownMnemonics(object):

    def doc(self):
        return ".method public static run()V\n    nop\n    frobnicate v0\n    return-void\n.end method\n"

    def test_warn_skips_the_line(self):
        with pytest.warns(UnknownMnemonicWarning) as record:
            histogram = extract_from_smali([self.doc()], names=["Main.smali"])
        assert histogram.nonzero() == {0x00: 1, 0x0E: 1}
        message = str(record[0].message)
        assert "'frobnicate'" in message
        assert "Main.smali:3" in message

    def test_warning_can_be_filtered(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            warnings.simplefilter("ignore", UnknownMnemonicWarning)
            assert extract_from_smali([self.doc()]).total == 2

    def test_fail_raises(self):
        with pytest.raises(UnknownMnemonic) as exc_info:
            extract_from_smali([self.doc()], names=["Main.smali"], on_unknown="fail")
        e = exc_info.value
        assert e.mnemonic == "frobnicate"
        assert e.document == "Main.smali"
        assert e.line_number == 3

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            extract_from_smali([self.doc()], on_unknown="ignore")

    def test_names_must_match_documents(self):
        with pytest.raises(ValueError):
            extract_from_smali([self.doc()], names=["a", "b"])

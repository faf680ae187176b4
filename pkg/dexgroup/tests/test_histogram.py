"""Tests of the opcode table and of opcode histograms."""

import io
import random
import pytest # type:ignore

from dexgroup.exceptions import CorruptArtifact
from dexgroup.histogram import (
    OpcodeHistogram,
    merge_histograms,
    read_histograms,
    write_histograms,
)
from dexgroup.opcodes import (
    FORMAT_WIDTHS,
    MNEMONICS,
    OPCODE_COUNT,
    OPCODES,
    UNUSED_OPCODES,
    mnemonic,
    opcode_for,
)

from . import histogram_of


class TestOpcodeTable(object):

    def test_table_has_every_value(self):
        assert len(OPCODES) == OPCODE_COUNT

    @pytest.mark.parametrize(
        "value, name, width",
        [
            (0x00, "nop", 1),
            (0x0E, "return-void", 1),
            (0x0F, "return", 1),
            (0x12, "const/4", 1),
            (0x18, "const-wide", 5),
            (0x1A, "const-string", 2),
            (0x26, "fill-array-data", 3),
            (0x2B, "packed-switch", 3),
            (0x2C, "sparse-switch", 3),
            (0x6E, "invoke-virtual", 3),
            (0xFA, "invoke-polymorphic", 4),
            (0xFF, "const-method-type", 2),
        ],
    )
    def test_known_rows(self, value, name, width):
        op = OPCODES[value]
        assert op is not None
        assert op.mnemonic == name
        assert op.width == width
        assert opcode_for(name) == value
        assert mnemonic(value) == name

    @pytest.mark.parametrize("value", [0x3E, 0x43, 0x73, 0x79, 0x7A, 0xE3, 0xF9])
    def test_unused_values(self, value):
        assert OPCODES[value] is None
        assert value in UNUSED_OPCODES
        assert mnemonic(value) == "unused-%02x" % value

    def test_mnemonics_are_unique(self):
        assigned = [op for op in OPCODES if op is not None]
        assert len(MNEMONICS) == len(assigned)

    def test_every_format_has_a_width(self):
        for op in OPCODES:
            if op is not None:
                assert op.format in FORMAT_WIDTHS
                assert op.width == int(op.format[0])

    def test_unknown_mnemonic(self):
        assert opcode_for("not-an-instruction") is None


class TestOpcodeHistogram(object):

    def test_empty(self):
        empty = OpcodeHistogram.empty()
        assert empty.total == 0
        assert len(empty) == OPCODE_COUNT
        assert empty.nonzero() == {}

    def test_from_opcodes(self):
        h = OpcodeHistogram.from_opcodes([0x00, 0x0E, 0x00])
        assert h[0x00] == 2
        assert h[0x0E] == 1
        assert h.total == 3

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            OpcodeHistogram([0] * 255)

    def test_negative_count(self):
        counts = [0] * OPCODE_COUNT
        counts[3] = -1
        with pytest.raises(ValueError):
            OpcodeHistogram(counts)

    def test_equality_and_hashing(self):
        a = histogram_of({1: 2, 5: 3})
        b = histogram_of({5: 3, 1: 2})
        assert a == b
        assert hash(a) == hash(b)
        assert a != histogram_of({1: 2})
        assert len({a, b}) == 1

    def test_relative(self):
        h = histogram_of({1: 1, 2: 3})
        relative = h.relative()
        assert relative[1] == 0.25
        assert relative[2] == 0.75
        assert sum(relative) == 1.0

    def test_relative_of_empty_histogram(self):
        assert OpcodeHistogram.empty().relative() == (0.0,) * OPCODE_COUNT

    def test_as_array(self):
        h = histogram_of({7: 9})
        array = h.as_array()
        assert array.shape == (OPCODE_COUNT,)
        assert array[7] == 9

    def test_addition(self):
        assert histogram_of({1: 1}) + histogram_of({1: 2, 2: 1}) == histogram_of({1: 3, 2: 1})


class TestMerge(object):

    def test_merge_nothing(self):
        assert merge_histograms([]) == OpcodeHistogram.empty()

    def test_zero_is_identity(self):
        h = histogram_of({0x1A: 4, 0x6E: 2})
        assert merge_histograms([h, OpcodeHistogram.empty()]) == h

    def test_known_sums(self):
        a = histogram_of({0x00: 1, 0x0E: 1})
        b = histogram_of({0x0E: 2, 0x12: 5})
        merged = merge_histograms([a, b])
        assert merged.nonzero() == {0x00: 1, 0x0E: 3, 0x12: 5}
        assert merged.total == a.total + b.total

    def test_associative_and_commutative(self):
        rng = random.Random(7)
        for _ in range(20):
            parts = [
                OpcodeHistogram(rng.randrange(5) for _ in range(OPCODE_COUNT))
                for _ in range(4)
            ]
            shuffled = list(parts)
            rng.shuffle(shuffled)
            assert merge_histograms(parts) == merge_histograms(shuffled)
            nested = merge_histograms(
                [merge_histograms(parts[:2]), merge_histograms(parts[2:])]
            )
            assert nested == merge_histograms(parts)


class TestHistogramRecords(object):

    def records(self):
        return [
            ("app-1", histogram_of({0x00: 1, 0x0E: 1})),
            ("app-2", OpcodeHistogram.empty()),
            ("app-3", histogram_of({0xFF: 12})),
        ]

    def test_round_trip(self):
        out = io.StringIO()
        write_histograms(self.records(), out, header=["seed: 0"])
        out.seek(0)
        assert read_histograms(out) == self.records()

    def test_layout(self):
        out = io.StringIO()
        write_histograms(self.records()[:1], out, header=["seed: 0"])
        lines = out.getvalue().splitlines()
        assert lines[0] == "# dexgroup-histograms 1"
        assert lines[1] == "# seed: 0"
        columns = lines[2].split(",")
        assert columns[0] == "app_id"
        assert columns[1] == "op_00"
        assert columns[-2] == "op_ff"
        assert columns[-1] == "total"
        fields = lines[3].split(",")
        assert fields[0] == "app-1"
        assert fields[1] == "1"
        assert fields[1 + 0x0E] == "1"
        assert fields[-1] == "2"

    def test_app_id_with_comma(self):
        with pytest.raises(ValueError):
            write_histograms([("a,b", OpcodeHistogram.empty())], io.StringIO())

    def test_bad_total(self):
        out = io.StringIO()
        write_histograms(self.records()[:1], out)
        damaged = out.getvalue().replace(",2\n", ",3\n")
        with pytest.raises(CorruptArtifact):
            read_histograms(io.StringIO(damaged))

    def test_missing_format_line(self):
        with pytest.raises(CorruptArtifact):
            read_histograms(io.StringIO("app_id,op_00\n"))

    def test_short_record(self):
        out = io.StringIO()
        write_histograms([], out)
        text = out.getvalue() + "app-1,1,2,3\n"
        with pytest.raises(CorruptArtifact):
            read_histograms(io.StringIO(text))

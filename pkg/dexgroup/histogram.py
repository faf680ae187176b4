"""Opcode histograms and the line-oriented file format they're saved in."""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

from typing import (
    Dict,
    IO,
    Iterable,
    Iterator,
    List,
    Sequence,
    Tuple,
    Union,
    overload,
)

import numpy as np

from dexgroup.exceptions import CorruptArtifact
from dexgroup.opcodes import OPCODE_COUNT

__all__ = [
    "OpcodeHistogram",
    "merge_histograms",
    "write_histograms",
    "read_histograms",
    "HISTOGRAM_FORMAT_VERSION",
]

#: Bumped whenever the histogram record layout changes.
HISTOGRAM_FORMAT_VERSION: int = 1

_FORMAT_LINE = "# dexgroup-histograms %d" % HISTOGRAM_FORMAT_VERSION
_COLUMNS = ["app_id"] + ["op_%02x" % i for i in range(OPCODE_COUNT)] + ["total"]


class OpcodeHistogram(object):
    """How many times each of the 256 Dalvik opcodes occurs in an app.

    Histograms are immutable and compare bucket by bucket. Payload
    pseudo-instructions never contribute to any bucket.

    :param counts: Exactly 256 non-negative integers, indexed by
        opcode value.
    """

    __slots__ = ("_counts", "_total")

    _counts: Tuple[int, ...]
    _total: int

    def __init__(self, counts: Iterable[int]):
        values = tuple(int(c) for c in counts)
        if len(values) != OPCODE_COUNT:
            raise ValueError(
                "An opcode histogram needs %d buckets, not %d."
                % (OPCODE_COUNT, len(values))
            )
        if any(c < 0 for c in values):
            raise ValueError("Opcode counts can't be negative.")
        self._counts = values
        self._total = sum(values)

    @classmethod
    def empty(cls) -> OpcodeHistogram:
        """A histogram with every bucket at zero."""
        return cls([0] * OPCODE_COUNT)

    @classmethod
    def from_opcodes(cls, opcodes: Iterable[int]) -> OpcodeHistogram:
        """Count a stream of opcode values."""
        counts = [0] * OPCODE_COUNT
        for op in opcodes:
            counts[op] += 1
        return cls(counts)

    @classmethod
    def from_mapping(cls, mapping: Dict[int, int]) -> OpcodeHistogram:
        """Build a histogram from a sparse opcode -> count mapping."""
        counts = [0] * OPCODE_COUNT
        for op, count in mapping.items():
            counts[op] = count
        return cls(counts)

    @property
    def counts(self) -> Tuple[int, ...]:
        return self._counts

    @property
    def total(self) -> int:
        """The sum of every bucket."""
        return self._total

    def nonzero(self) -> Dict[int, int]:
        """The buckets that aren't zero, as an opcode -> count mapping."""
        return {i: c for i, c in enumerate(self._counts) if c}

    def as_array(self) -> np.ndarray:
        """The counts as a 256-element int64 array."""
        return np.array(self._counts, dtype=np.int64)

    def relative(self) -> Tuple[float, ...]:
        """Each bucket divided by the total. An empty histogram gives
        all zeros.
        """
        if self._total == 0:
            return (0.0,) * OPCODE_COUNT
        return tuple(c / self._total for c in self._counts)

    @overload
    def __getitem__(self, index: int) -> int: ...

    @overload
    def __getitem__(self, index: slice) -> Tuple[int, ...]: ...

    def __getitem__(self, index: Union[int, slice]) -> Union[int, Tuple[int, ...]]:
        return self._counts[index]

    def __iter__(self) -> Iterator[int]:
        return iter(self._counts)

    def __len__(self) -> int:
        return OPCODE_COUNT

    def __add__(self, other: OpcodeHistogram) -> OpcodeHistogram:
        if not isinstance(other, OpcodeHistogram):
            return NotImplemented
        return OpcodeHistogram(a + b for a, b in zip(self._counts, other._counts))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OpcodeHistogram):
            return NotImplemented
        return self._counts == other._counts

    def __hash__(self) -> int:
        return hash(self._counts)

    def __repr__(self) -> str:
        return "<OpcodeHistogram total=%d %r>" % (self._total, self.nonzero())


def merge_histograms(parts: Iterable[OpcodeHistogram]) -> OpcodeHistogram:
    """Add histograms bucket by bucket.

    Merging is associative and commutative, and merging nothing gives
    an empty histogram. Multi-dex apps are merged this way.
    """
    counts = [0] * OPCODE_COUNT
    for part in parts:
        for i, c in enumerate(part.counts):
            counts[i] += c
    return OpcodeHistogram(counts)


def write_histograms(
    records: Iterable[Tuple[str, OpcodeHistogram]],
    fh: IO[str],
    header: Sequence[str] = (),
) -> None:
    """Write (app id, histogram) records, one per line.

    The file starts with a format line, then any ``header`` lines as
    comments, then a column header. Each record holds the app id, the
    256 counts in ascending opcode order, and the total.

    :param header: Extra comment lines, usually the resolved run
        configuration. Written with a leading ``# ``.
    """
    fh.write(_FORMAT_LINE + "\n")
    for line in header:
        fh.write("# %s\n" % line)
    fh.write(",".join(_COLUMNS) + "\n")
    for app_id, histogram in records:
        if "," in app_id or "\n" in app_id:
            raise ValueError("App id %r can't be written to a record file." % app_id)
        fields = [app_id] + [str(c) for c in histogram.counts] + [str(histogram.total)]
        fh.write(",".join(fields) + "\n")


def read_histograms(fh: IO[str]) -> List[Tuple[str, OpcodeHistogram]]:
    """Read records written by `write_histograms`.

    :raise CorruptArtifact: If the format line or column header is
        missing, a record has the wrong number of fields, or a record's
        total doesn't match its counts.
    """
    records: List[Tuple[str, OpcodeHistogram]] = []
    seen_columns = False
    for line_number, line in enumerate(fh, 1):
        line = line.rstrip("\n")
        if line_number == 1:
            if line != _FORMAT_LINE:
                raise CorruptArtifact("Not a dexgroup histogram file: %r" % line)
            continue
        if line.startswith("#") or not line:
            continue
        fields = line.split(",")
        if not seen_columns:
            if fields != _COLUMNS:
                raise CorruptArtifact("Unexpected column header on line %d" % line_number)
            seen_columns = True
            continue
        if len(fields) != len(_COLUMNS):
            raise CorruptArtifact(
                "Line %d has %d fields, expected %d"
                % (line_number, len(fields), len(_COLUMNS))
            )
        try:
            histogram = OpcodeHistogram(int(f) for f in fields[1:-1])
            total = int(fields[-1])
        except ValueError as e:
            raise CorruptArtifact("Line %d: %s" % (line_number, e))
        if histogram.total != total:
            raise CorruptArtifact(
                "Line %d: total %d doesn't match counts (%d)"
                % (line_number, total, histogram.total)
            )
        records.append((fields[0], histogram))
    if not seen_columns:
        raise CorruptArtifact("Histogram file has no column header.")
    return records

"""Rank opcodes by how differently benign and malicious apps use them.

For each opcode j the score is D(j) = |F_B(j) - F_M(j)|, where F_B and
F_M are the mean occurrence of j per benign and per malicious app. The
highest-scoring opcodes become the classifier's features.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import logging
import math
from typing import (
    IO,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from dexgroup.exceptions import (
    CorruptRanking,
    EmptyClass,
    NOutOfRange,
)
from dexgroup.histogram import OpcodeHistogram
from dexgroup.opcodes import (
    OPCODE_COUNT,
    mnemonic,
)

__all__ = [
    "ClassMeanProfile",
    "FeatureRanking",
    "DifferenceRow",
    "compute_profile",
    "rank_features",
    "top_n",
    "difference_report",
    "format_difference_report",
    "dump_ranking",
    "load_ranking",
    "RANKING_FORMAT_VERSION",
]

logger = logging.getLogger(__name__)

RANKING_FORMAT_VERSION = 1
_FORMAT_LINE = "# dexgroup-ranking %d" % RANKING_FORMAT_VERSION


class ClassMeanProfile(NamedTuple):
    """Per-opcode mean occurrence in each class."""

    f_benign: Tuple[float, ...]
    f_malicious: Tuple[float, ...]
    n_benign: int
    n_malicious: int
    #: True if the means are of per-app relative frequencies rather
    #: than raw counts.
    relative: bool = False


class FeatureRanking(NamedTuple):
    """Opcode scores, plus the opcodes sorted best first.

    Ties in score are broken by ascending opcode value, so the order is
    fully determined by the scores.
    """

    scores: Tuple[float, ...]
    order: Tuple[int, ...]
    n_benign: int = 0
    n_malicious: int = 0
    relative: bool = False

    def score_of(self, opcode: int) -> float:
        return self.scores[opcode]


def _class_means(histograms: Sequence[OpcodeHistogram], relative: bool) -> Tuple[float, ...]:
    n = len(histograms)
    if not relative:
        # Integer sums are exact, so the only rounding is the division.
        totals = np.zeros(OPCODE_COUNT, dtype=np.int64)
        for h in histograms:
            totals += h.as_array()
        return tuple(float(t) / n for t in totals.tolist())
    # math.fsum is correctly rounded, so the mean doesn't depend on the
    # order the apps came in.
    frequencies = [h.relative() for h in histograms]
    return tuple(
        math.fsum(f[j] for f in frequencies) / n for j in range(OPCODE_COUNT)
    )


def compute_profile(
    benign: Sequence[OpcodeHistogram],
    malicious: Sequence[OpcodeHistogram],
    relative: bool = False,
) -> ClassMeanProfile:
    """Average the histograms of each class, bucket by bucket.

    :param relative: Average each app's relative frequencies
        (count / total) instead of its raw counts. An app with no
        instructions contributes zeros.
    :raise EmptyClass: If either class has no apps.
    """
    if len(benign) == 0:
        raise EmptyClass("No benign apps to profile.")
    if len(malicious) == 0:
        raise EmptyClass("No malicious apps to profile.")
    return ClassMeanProfile(
        f_benign=_class_means(benign, relative),
        f_malicious=_class_means(malicious, relative),
        n_benign=len(benign),
        n_malicious=len(malicious),
        relative=relative,
    )


def rank_features(profile: ClassMeanProfile) -> FeatureRanking:
    """Score every opcode by the absolute difference of its class means."""
    scores = tuple(
        abs(b - m) for b, m in zip(profile.f_benign, profile.f_malicious)
    )
    order = tuple(sorted(range(OPCODE_COUNT), key=lambda j: (-scores[j], j)))
    return FeatureRanking(
        scores, order, profile.n_benign, profile.n_malicious, profile.relative
    )


def _check_n(n: int) -> None:
    if not 1 <= n <= OPCODE_COUNT:
        raise NOutOfRange("n must be between 1 and %d, not %r." % (OPCODE_COUNT, n))


def top_n(ranking: FeatureRanking, n: int) -> List[int]:
    """The ``n`` best opcodes, best first.

    :raise NOutOfRange: Unless 1 <= n <= 256.
    """
    _check_n(n)
    return list(ranking.order[:n])


class DifferenceRow(NamedTuple):
    opcode: int
    mnemonic: str
    score: float


def difference_report(ranking: FeatureRanking, k: int) -> List[DifferenceRow]:
    """The ``k`` best opcodes with their mnemonics and scores, suitable
    for a histogram of class differences.
    """
    _check_n(k)
    return [
        DifferenceRow(op, mnemonic(op), ranking.scores[op])
        for op in ranking.order[:k]
    ]


def format_difference_report(rows: Sequence[DifferenceRow]) -> str:
    """Render a difference report as two tab-separated columns."""
    lines = ["mnemonic\tscore"]
    for row in rows:
        lines.append("%s\t%r" % (row.mnemonic, row.score))
    return "\n".join(lines) + "\n"


def dump_ranking(
    ranking: FeatureRanking,
    fh: IO[str],
    group: Optional[str] = None,
    header: Sequence[str] = (),
) -> None:
    """Save a ranking so a later run can train on it.

    The file holds a format line, optional comment lines, ``key<TAB>value``
    metadata, then one ``0xNN<TAB>score`` line per opcode, best first.
    Scores are written with `repr`, so they read back exactly.
    """
    fh.write(_FORMAT_LINE + "\n")
    for line in header:
        fh.write("# %s\n" % line)
    fh.write("group\t%s\n" % (group or ""))
    fh.write("n\t%d\n" % len(ranking.order))
    fh.write("n_benign\t%d\n" % ranking.n_benign)
    fh.write("n_malicious\t%d\n" % ranking.n_malicious)
    fh.write("relative\t%s\n" % ("true" if ranking.relative else "false"))
    for op in ranking.order:
        fh.write("0x%02x\t%r\n" % (op, ranking.scores[op]))


def load_ranking(fh: IO[str]) -> Tuple[Optional[str], FeatureRanking]:
    """Read a ranking written by `dump_ranking`.

    :return: The group name (or None) and the ranking.
    :raise CorruptRanking: If the file is damaged or from an
        incompatible version.
    """
    lines = [line.rstrip("\n") for line in fh]
    if not lines or lines[0] != _FORMAT_LINE:
        raise CorruptRanking("Not a version %d ranking file." % RANKING_FORMAT_VERSION)
    body = [line for line in lines[1:] if line and not line.startswith("#")]
    meta = {}
    for line in body[:5]:
        key, _, value = line.partition("\t")
        meta[key] = value
    try:
        group = meta["group"] or None
        n = int(meta["n"])
        n_benign = int(meta["n_benign"])
        n_malicious = int(meta["n_malicious"])
        relative = meta["relative"] == "true"
    except (KeyError, ValueError) as e:
        raise CorruptRanking("Bad ranking metadata: %s" % e)

    entries = body[5:]
    if n != OPCODE_COUNT or len(entries) != n:
        raise CorruptRanking("Expected %d scored opcodes, found %d." % (OPCODE_COUNT, len(entries)))
    scores = [0.0] * OPCODE_COUNT
    order = []
    for line in entries:
        op_text, _, score_text = line.partition("\t")
        try:
            op = int(op_text, 16)
            score = float(score_text)
        except ValueError:
            raise CorruptRanking("Bad ranking line: %r" % line)
        if not 0 <= op < OPCODE_COUNT:
            raise CorruptRanking("Opcode out of range: %r" % op_text)
        if not 0.0 <= score < math.inf:
            raise CorruptRanking("Bad score for %s: %r" % (op_text, score_text))
        scores[op] = score
        order.append(op)
    if sorted(order) != list(range(OPCODE_COUNT)):
        raise CorruptRanking("Ranking doesn't list every opcode exactly once.")
    expected = sorted(order, key=lambda j: (-scores[j], j))
    if order != expected:
        raise CorruptRanking(
            "Ranking isn't sorted by score, with ties in opcode order."
        )
    return group, FeatureRanking(
        tuple(scores), tuple(order), n_benign, n_malicious, relative
    )

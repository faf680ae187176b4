"""Count opcodes in disassembled smali text."""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

__all__ = [
    "SmaliExtractor",
    "extract_from_smali",
]

import logging
import warnings
from typing import (
    Optional,
    Sequence,
)

from dexgroup._typing import (
    _OnUnknown,
    _SmaliDocument,
    _SmaliDocuments,
)
from dexgroup._warnings import UnknownMnemonicWarning
from dexgroup.exceptions import (
    MalformedSmali,
    UnknownMnemonic,
)
from dexgroup.extractor import BytecodeExtractor
from dexgroup.histogram import OpcodeHistogram
from dexgroup.opcodes import (
    MNEMONICS,
    OPCODE_COUNT,
)

logger = logging.getLogger(__name__)

# Directives that open a block of data rather than instructions, and
# the directive that closes each one.
_DATA_BLOCKS = {
    ".packed-switch": ".end packed-switch",
    ".sparse-switch": ".end sparse-switch",
    ".array-data": ".end array-data",
    ".annotation": ".end annotation",
}


def _decode(document: _SmaliDocument, name: str) -> str:
    if isinstance(document, str):
        return document
    try:
        return document.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedSmali("%s: %s" % (name, e))


def extract_from_smali(
    docs: _SmaliDocuments,
    names: Optional[Sequence[str]] = None,
    on_unknown: _OnUnknown = "warn",
) -> OpcodeHistogram:
    """Count instruction lines inside method bodies.

    Only lines between ``.method`` and ``.end method`` count. Within a
    method, directives, labels, comments and blank lines are skipped,
    and so is everything inside a switch table, an array-data table or
    an annotation. The first token of every other line is looked up in
    the Dalvik mnemonic table.

    :param docs: Smali documents, as text or UTF-8 bytes.
    :param names: Names to use for the documents in error messages.
        Defaults to ``doc[0]``, ``doc[1]`` and so on.
    :param on_unknown: ``"warn"`` to skip a line with an unknown
        mnemonic (issuing `UnknownMnemonicWarning`), ``"fail"`` to
        raise `UnknownMnemonic`.
    :raise MalformedSmali: If a document isn't valid UTF-8.
    """
    if on_unknown not in ("warn", "fail"):
        raise ValueError("on_unknown must be 'warn' or 'fail', not %r" % on_unknown)
    if names is None:
        names = ["doc[%d]" % i for i in range(len(docs))]
    elif len(names) != len(docs):
        raise ValueError("Got %d names for %d documents." % (len(names), len(docs)))

    counts = [0] * OPCODE_COUNT
    skipped = 0
    for document, name in zip(docs, names):
        text = _decode(document, name)
        in_method = False
        end_of_block: Optional[str] = None
        for line_number, raw_line in enumerate(text.splitlines(), 1):
            line = raw_line.strip()
            if not line:
                continue
            if end_of_block is not None:
                if line == end_of_block:
                    end_of_block = None
                continue
            if not in_method:
                if line.startswith(".method"):
                    in_method = True
                continue
            if line == ".end method":
                in_method = False
                continue

            first = line[0]
            if first == ".":
                directive = line.split(None, 1)[0]
                end_of_block = _DATA_BLOCKS.get(directive)
                continue
            if first in ":#":
                continue

            token = line.split(None, 1)[0]
            opcode = MNEMONICS.get(token)
            if opcode is None:
                if on_unknown == "fail":
                    raise UnknownMnemonic(token, name, line_number)
                warnings.warn(
                    UnknownMnemonicWarning.MESSAGE
                    % dict(mnemonic=token, document=name, line_number=line_number),
                    UnknownMnemonicWarning,
                    stacklevel=2,
                )
                skipped += 1
                continue
            counts[opcode] += 1

    if skipped:
        logger.info("Skipped %d lines with unknown mnemonics.", skipped)
    return OpcodeHistogram(counts)


class SmaliExtractor(BytecodeExtractor):
    """Extract a histogram from the smali files of one app.

    :param on_unknown: What to do with an unknown mnemonic; see
        `extract_from_smali`.
    """

    NAME: str = "smali"
    features = [NAME, "text"]

    def __init__(self, on_unknown: _OnUnknown = "warn"):
        self.on_unknown = on_unknown

    def extract(self, payload: _SmaliDocuments) -> OpcodeHistogram:
        if isinstance(payload, (str, bytes)):
            payload = [payload]
        return extract_from_smali(list(payload), on_unknown=self.on_unknown)

"""Exceptions defined by dexgroup itself."""

from typing import (
    Optional,
    Union,
)


class DexgroupError(Exception):
    """Superclass for every exception dexgroup raises on purpose."""


class _WrapsException(DexgroupError):
    """An exception that can be built either from a message or from
    the exception an underlying library raised.
    """

    def __init__(self, message_or_exception: Union[str, Exception]):
        if isinstance(message_or_exception, Exception):
            e = message_or_exception
            message_or_exception = "%s: %s" % (e.__class__.__name__, str(e))
        super(_WrapsException, self).__init__(message_or_exception)


# Bytecode extraction.


class ExtractionError(_WrapsException):
    """Raised when an app's bytecode can't be turned into an opcode
    histogram.
    """


class MalformedDex(ExtractionError):
    """A DEX file failed header validation, pointed outside itself, or
    contained an instruction stream that can't be decoded.
    """


class MalformedSmali(ExtractionError):
    """A smali document couldn't be read as UTF-8 text."""


class UnknownMnemonic(ExtractionError):
    """A smali instruction line started with a token that isn't a
    Dalvik mnemonic.
    """

    document: str
    line_number: int
    mnemonic: str

    def __init__(self, mnemonic: str, document: str, line_number: int):
        self.mnemonic = mnemonic
        self.document = document
        self.line_number = line_number
        super(UnknownMnemonic, self).__init__(
            "Unknown mnemonic %r at %s:%d" % (mnemonic, document, line_number)
        )


# Manifests.


class ManifestError(_WrapsException):
    """Raised when a manifest can't be read."""


class MalformedAxml(ManifestError):
    """A binary XML document was truncated or internally inconsistent."""


class MalformedXml(ManifestError):
    """A text manifest wasn't well-formed XML."""


class MalformedApk(ManifestError):
    """An APK container wasn't a ZIP archive or had no manifest."""


# Permission groups.


class GroupingError(DexgroupError):
    """Raised when apps can't be sorted into permission groups."""


class DuplicateAppId(GroupingError):
    """The same app id showed up twice in one corpus."""

    def __init__(self, app_id: str):
        self.app_id = app_id
        super(DuplicateAppId, self).__init__("Duplicate app id: %s" % app_id)


class InvalidGroupMapping(GroupingError):
    """A permission group table put a permission in two groups, or
    named a group that doesn't exist.
    """


# Feature selection.


class SelectionError(DexgroupError):
    """Raised when opcode features can't be ranked."""


class EmptyClass(SelectionError):
    """One of the two classes had no apps in it."""


class NOutOfRange(SelectionError, ValueError):
    """A feature count outside 1..256 was requested."""


class CorruptRanking(SelectionError):
    """A saved feature ranking couldn't be read back."""


# Classifiers.


class ClassifierError(DexgroupError):
    """Raised by classifier training, prediction and persistence."""


class SingleClassData(ClassifierError):
    """Training data held examples of only one class."""


class InconsistentDimensions(ClassifierError):
    """Training vectors didn't all have the same length."""


class DimensionMismatch(ClassifierError):
    """A vector given to a model didn't match the model's feature list."""

    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super(DimensionMismatch, self).__init__(
            "Model expects %d features, got %d" % (expected, got)
        )


class CorruptModel(_WrapsException, ClassifierError):
    """A serialized model failed validation."""


class UnknownClassifier(ClassifierError, ValueError):
    """No classifier is registered under the requested name."""


# Evaluation.


class EvaluationError(DexgroupError):
    """Raised when an evaluation can't be carried out."""


class TooSmallForSplit(EvaluationError):
    """A bucket couldn't be split so that both portions hold apps of
    each required label.
    """

    def __init__(self, message: str, size: Optional[int] = None):
        self.size = size
        super(TooSmallForSplit, self).__init__(message)


# Corpus handling.


class CorpusError(DexgroupError):
    """Raised while reading or writing corpora."""


class InvalidSpec(CorpusError, ValueError):
    """A synthetic corpus description had impossible parameters."""


class InvalidManifest(CorpusError):
    """A corpus manifest file couldn't be parsed."""


class CorruptArtifact(CorpusError):
    """A histogram, app or report file written by dexgroup couldn't be
    read back.
    """


class UsageError(DexgroupError):
    """The command line was used incorrectly."""

"""Define some custom warnings."""


class UnusualUsageWarning(UserWarning):
    """A superclass for warnings issued when dexgroup sees something
    that is usually a problem with the input or the calling code, but
    which doesn't have to stop the run. If you expect it, you can
    filter the individual warning class, or filter UnusualUsageWarning
    itself to get rid of all of them.
    """


class UnknownMnemonicWarning(UnusualUsageWarning):
    """The warning issued when a smali instruction line starts with a
    token that isn't a Dalvik mnemonic and the extractor was told to
    skip such lines rather than fail.
    """

    MESSAGE: str = """Skipping unknown mnemonic %(mnemonic)r at %(document)s:%(line_number)d.

The line does not count toward the opcode histogram. If the smali was produced by a newer disassembler than dexgroup knows about, this warning may repeat for every app; pass on_unknown="fail" to stop at the first occurrence instead."""


class QuarantinedAppWarning(UnusualUsageWarning):
    """The warning issued when an app in a corpus couldn't be extracted
    and was moved to the quarantine list.
    """

    MESSAGE: str = (
        """App %(app_id)s (%(path)s) was quarantined: %(reason)s"""
    )


class SkippedCellWarning(UnusualUsageWarning):
    """The warning issued when one cell of an evaluation sweep couldn't
    be evaluated, usually because a group had too few apps of one
    label.
    """

    MESSAGE: str = (
        """Skipping %(group)s/%(kind)s/n=%(n)d: %(reason)s"""
    )

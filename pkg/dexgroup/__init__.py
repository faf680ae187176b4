"""dexgroup: detect Android malware from opcode histograms, one
permission group at a time.

dexgroup counts the Dalvik opcodes in each app's bytecode, sorts apps
into groups by the dangerous permissions they request, ranks opcodes
by how differently benign and malicious apps in a group use them, and
trains a classifier per group on the best-ranked opcodes.

Apps can be read from APKs, raw DEX files or apktool-style
directories, or generated by `dexgroup.synthetic`. The command-line
interface lives in `dexgroup.cli`.
"""

__version__ = "1.0.0"
# Use of this source code is governed by the MIT license.
__license__ = "MIT"

__all__ = [
    "OpcodeHistogram",
    "PermissionSet",
    "GroupId",
    "GroupMapping",
    "assign_groups",
    "partition_corpus",
    "compute_profile",
    "rank_features",
    "top_n",
    "Label",
    "Hyperparameters",
    "train",
    "predict",
    "CorpusManifest",
    "ExtractedCorpus",
    "ingest",
    "SplitSpec",
    "split",
    "evaluate_cell",
    "sweep",
    "SyntheticSpec",
    "generate_synthetic",
    "materialize",
    "extract_from_dex",
    "extract_from_smali",
    "parse_manifest",

    # Exceptions
    "DexgroupError",

    # Warnings
    "UnusualUsageWarning",
    "UnknownMnemonicWarning",
    "QuarantinedAppWarning",
    "SkippedCellWarning",
]

from ._warnings import (
    QuarantinedAppWarning,
    SkippedCellWarning,
    UnknownMnemonicWarning,
    UnusualUsageWarning,
)
from .exceptions import DexgroupError
from .histogram import OpcodeHistogram
from .extractor import (
    extract_from_dex,  # type:ignore
    extract_from_smali,  # type:ignore
)
from .manifest import (
    PermissionSet,
    parse_manifest,
)
from .grouping import (
    GroupId,
    GroupMapping,
    assign_groups,
    partition_corpus,
)
from .selection import (
    compute_profile,
    rank_features,
    top_n,
)
from .classifier import (
    Hyperparameters,
    Label,
    predict,
    train,
)
from .corpus import (
    CorpusManifest,
    ExtractedCorpus,
    ingest,
)
from .evaluation import (
    SplitSpec,
    evaluate_cell,
    split,
    sweep,
)
from .synthetic import (
    SyntheticSpec,
    generate_synthetic,
    materialize,
)

"""Generate labelled corpora with known structure.

Real malware corpora can't be shipped, so the tests and the benchmark
sweep run on generated apps instead. Each app belongs to exactly one
permission group. Its opcode counts are drawn around its class's mean
counts: every count is the mean scaled by a Gamma-distributed factor
with mean 1 and coefficient of variation ``dispersion``, then rounded.
With zero dispersion every app's histogram equals its class means.

The benchmark plants a gap in a handful of opcodes per group, so the
generator knows which opcodes feature selection ought to find.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import (
    Dict,
    List,
    NamedTuple,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from dexgroup.classifier import (
    Label,
    derive_seed,
)
from dexgroup.corpus import (
    CorpusManifest,
    ExtractedApp,
    ExtractedCorpus,
    ManifestEntry,
)
from dexgroup._io import (
    atomic_write_bytes,
    atomic_write_text,
)
from dexgroup.emit import (
    DexBuilder,
    build_axml,
    render_manifest_xml,
    render_smali,
)
from dexgroup.exceptions import InvalidSpec
from dexgroup.grouping import (
    GroupId,
    assign_groups,
)
from dexgroup.histogram import OpcodeHistogram
from dexgroup.manifest import PermissionSet
from dexgroup.opcodes import (
    OPCODE_COUNT,
    OPCODES,
    UNUSED_OPCODES,
)

__all__ = [
    "ClassMeans",
    "GroupSpec",
    "SyntheticApp",
    "SyntheticSpec",
    "generate_synthetic",
    "materialize",
    "synthetic_corpus",
    "PERMISSION_TEMPLATES",
    "FIELD_GROUP_SIZES",
]

logger = logging.getLogger(__name__)

ASSIGNED_OPCODES: Tuple[int, ...] = tuple(op.value for op in OPCODES if op is not None)

#: Permissions requested by generated apps of each group.
PERMISSION_TEMPLATES: Dict[GroupId, Tuple[str, ...]] = {
    GroupId.CALENDAR: ("android.permission.READ_CALENDAR", "android.permission.INTERNET"),
    GroupId.CAMERA: ("android.permission.CAMERA", "android.permission.INTERNET"),
    GroupId.CONTACTS: ("android.permission.READ_CONTACTS", "android.permission.INTERNET"),
    GroupId.LOCATION: ("android.permission.ACCESS_FINE_LOCATION", "android.permission.INTERNET"),
    GroupId.MICROPHONE: ("android.permission.RECORD_AUDIO", "android.permission.INTERNET"),
    GroupId.OTHERS: ("android.permission.INTERNET", "android.permission.ACCESS_NETWORK_STATE"),
    GroupId.PHONE: ("android.permission.READ_PHONE_STATE", "android.permission.INTERNET"),
    GroupId.SENSORS: ("android.permission.BODY_SENSORS",),
    GroupId.SMS: ("android.permission.SEND_SMS", "android.permission.INTERNET"),
    GroupId.STORAGE: ("android.permission.WRITE_EXTERNAL_STORAGE", "android.permission.INTERNET"),
}

#: (malicious, benign) app counts per group in a real-world corpus
#: of Play Store and malware-repository apps.
FIELD_GROUP_SIZES: Dict[GroupId, Tuple[int, int]] = {
    GroupId.CALENDAR: (73, 71),
    GroupId.CAMERA: (223, 529),
    GroupId.CONTACTS: (1341, 445),
    GroupId.LOCATION: (1921, 86),
    GroupId.MICROPHONE: (118, 273),
    GroupId.OTHERS: (137, 1114),
    GroupId.PHONE: (4967, 1826),
    GroupId.SMS: (3389, 299),
    GroupId.STORAGE: (3653, 1047),
}

#: How far the benchmark's planted opcodes are shifted for malicious
#: apps, in mean occurrences per app.
PLANTED_GAP = 20.0
PLANTED_PER_GROUP = 10


class ClassMeans(NamedTuple):
    """Mean count of each of the 256 opcodes, per class."""

    benign: Tuple[float, ...]
    malicious: Tuple[float, ...]

    def of(self, label: Label) -> Tuple[float, ...]:
        return self.malicious if label is Label.MALICIOUS else self.benign


@dataclass(frozen=True)
class GroupSpec:
    """How to generate one group's apps.

    :ivar planted: Opcodes whose class means were made to differ, if
        the spec was built that way. Only used to check results.
    """

    group: GroupId
    n_benign: int
    n_malicious: int
    means: ClassMeans
    permissions: Tuple[str, ...] = ()
    planted: Tuple[int, ...] = ()

    def count(self, label: Label) -> int:
        return self.n_malicious if label is Label.MALICIOUS else self.n_benign


def _check_means(group: GroupId, name: str, means: Sequence[float]) -> None:
    if len(means) != OPCODE_COUNT:
        raise InvalidSpec(
            "%s %s means have %d entries, not %d." % (group, name, len(means), OPCODE_COUNT)
        )
    for op, mean in enumerate(means):
        if not math.isfinite(mean) or mean < 0:
            raise InvalidSpec("%s %s mean for 0x%02x is %r." % (group, name, op, mean))
        if mean and op in UNUSED_OPCODES:
            raise InvalidSpec(
                "%s %s mean for unused opcode 0x%02x must be 0." % (group, name, op)
            )


@dataclass(frozen=True)
class SyntheticSpec:
    """Everything that determines a generated corpus.

    :ivar dispersion: Coefficient of variation of each count around
        its mean. Zero makes every app equal to its class means.
    :raise InvalidSpec: On negative sizes or means, means for unused
        opcodes, a negative seed or dispersion, or a permission
        template that doesn't put apps in the group they're listed
        under.
    """

    groups: Tuple[GroupSpec, ...]
    dispersion: float = 0.3
    seed: int = 0
    include_sensors: bool = False

    def __post_init__(self) -> None:
        if not self.groups:
            raise InvalidSpec("A synthetic corpus needs at least one group.")
        if not math.isfinite(self.dispersion) or self.dispersion < 0:
            raise InvalidSpec("dispersion must be non-negative, not %r." % self.dispersion)
        if self.seed < 0:
            raise InvalidSpec("seed must be non-negative.")
        seen = set()
        for spec in self.groups:
            if spec.group in seen:
                raise InvalidSpec("%s is listed twice." % spec.group)
            seen.add(spec.group)
            if spec.n_benign < 0 or spec.n_malicious < 0:
                raise InvalidSpec("%s has a negative app count." % spec.group)
            _check_means(spec.group, "benign", spec.means.benign)
            _check_means(spec.group, "malicious", spec.means.malicious)
            include_sensors = self.include_sensors or spec.group is GroupId.SENSORS
            actual = assign_groups(spec.permissions, include_sensors)
            if actual != frozenset([spec.group]):
                raise InvalidSpec(
                    "Permissions %s put apps in %s, not %s."
                    % (sorted(spec.permissions), sorted(str(g) for g in actual), spec.group)
                )

    @property
    def size(self) -> int:
        return sum(g.n_benign + g.n_malicious for g in self.groups)

    def planted_opcodes(self) -> Dict[GroupId, Tuple[int, ...]]:
        return {g.group: g.planted for g in self.groups}

    @classmethod
    def planted_gap(
        cls,
        sizes: Dict[GroupId, Tuple[int, int]],
        seed: int = 0,
        dispersion: float = 0.3,
        gap: float = PLANTED_GAP,
        planted_per_group: int = PLANTED_PER_GROUP,
    ) -> SyntheticSpec:
        """A spec where malicious apps of each group use
        ``planted_per_group`` opcodes ``gap`` more times than benign
        apps do, and every other opcode has the same mean in both
        classes.

        Base means are integers from 2 to 12, shared by every group.
        Each group gets its own planted opcodes.

        :param sizes: (malicious, benign) counts per group.
        """
        rng = np.random.default_rng(derive_seed(seed, 0x5EED))
        base = np.zeros(OPCODE_COUNT)
        assigned = np.array(ASSIGNED_OPCODES)
        base[assigned] = rng.integers(2, 13, size=len(assigned))
        if planted_per_group * len(sizes) > len(assigned):
            raise InvalidSpec("Not enough opcodes to plant %d per group." % planted_per_group)
        shuffled = rng.permutation(assigned)
        groups = []
        for i, (group, (n_malicious, n_benign)) in enumerate(sizes.items()):
            planted = tuple(sorted(int(op) for op in shuffled[i * planted_per_group:(i + 1) * planted_per_group]))
            malicious = base.copy()
            malicious[list(planted)] += gap
            groups.append(
                GroupSpec(
                    group=group,
                    n_benign=n_benign,
                    n_malicious=n_malicious,
                    means=ClassMeans(tuple(base.tolist()), tuple(malicious.tolist())),
                    permissions=PERMISSION_TEMPLATES[group],
                    planted=planted,
                )
            )
        return cls(
            tuple(groups),
            dispersion=dispersion,
            seed=seed,
            include_sensors=GroupId.SENSORS in sizes,
        )

    @classmethod
    def benchmark(cls, seed: int = 0, apps_per_class: int = 83) -> SyntheticSpec:
        """Nine groups (every group but Sensors) of ``apps_per_class``
        benign and malicious apps each, with ten planted opcodes per
        group. The default comes to about 1500 apps.
        """
        sizes = {
            g: (apps_per_class, apps_per_class)
            for g in GroupId
            if g is not GroupId.SENSORS
        }
        return cls.planted_gap(sizes, seed)

    @classmethod
    def field_shaped(cls, scale: float = 0.1, seed: int = 0) -> SyntheticSpec:
        """Planted-gap groups sized in proportion to
        `FIELD_GROUP_SIZES`. Every class keeps at least two
        apps, so every group can still be split.
        """
        if not scale > 0:
            raise InvalidSpec("scale must be positive, not %r." % scale)
        sizes = {
            group: (max(2, round(m * scale)), max(2, round(b * scale)))
            for group, (m, b) in FIELD_GROUP_SIZES.items()
        }
        return cls.planted_gap(sizes, seed)


class SyntheticApp(NamedTuple):
    app_id: str
    label: Label
    group: GroupId
    histogram: OpcodeHistogram
    permissions: PermissionSet

    def extracted(self) -> ExtractedApp:
        return ExtractedApp(self.app_id, self.label, self.histogram, self.permissions)


def _draw(means: np.ndarray, dispersion: float, rng: np.random.Generator) -> List[int]:
    if dispersion == 0:
        scaled = means
    else:
        shape = 1.0 / (dispersion * dispersion)
        scaled = means * rng.gamma(shape, 1.0 / shape, size=len(means))
    return [int(c) for c in np.rint(scaled).tolist()]


def generate_synthetic(spec: SyntheticSpec) -> List[SyntheticApp]:
    """Generate every app a spec describes.

    Apps come group by group in spec order, benign before malicious.
    Each app's counts are drawn from its own random stream, derived
    from the spec seed and the app's position, so the same spec always
    gives the same apps.
    """
    apps = []
    for group_index, group_spec in enumerate(spec.groups):
        permissions = PermissionSet(group_spec.permissions)
        for label in (Label.BENIGN, Label.MALICIOUS):
            means = np.asarray(group_spec.means.of(label), dtype=np.float64)
            for i in range(group_spec.count(label)):
                rng = np.random.default_rng(
                    derive_seed(spec.seed, group_index, label.value, i)
                )
                counts = _draw(means, spec.dispersion, rng)
                app_id = "%s-%s-%04d" % (group_spec.group.value.lower(), label, i)
                apps.append(
                    SyntheticApp(
                        app_id, label, group_spec.group, OpcodeHistogram(counts), permissions
                    )
                )
    logger.info("Generated %d synthetic apps in %d groups.", len(apps), len(spec.groups))
    return apps


def synthetic_corpus(spec: SyntheticSpec) -> ExtractedCorpus:
    """Generate a spec's apps straight into an `ExtractedCorpus`,
    without writing anything to disk.
    """
    return ExtractedCorpus(app.extracted() for app in generate_synthetic(spec))


def _method_bodies(histogram: OpcodeHistogram, methods: int) -> List[List[int]]:
    """Deal an app's instructions out across its methods, opcode by
    opcode.
    """
    bodies: List[List[int]] = [[] for _ in range(methods)]
    slot = 0
    for op, count in enumerate(histogram.counts):
        for _ in range(count):
            bodies[slot].append(op)
            slot = (slot + 1) % methods
    return bodies


def _class_descriptor(app_id: str) -> str:
    return "Lcom/example/%s/Main;" % app_id.replace("-", "_")


def materialize(
    apps: Sequence[SyntheticApp],
    out_dir: Union[str, Path],
    emit_dex: bool = False,
    binary_manifest: bool = False,
    methods_per_app: int = 4,
) -> CorpusManifest:
    """Write generated apps to disk as apktool-style directories.

    Each app gets ``<out_dir>/apps/<app_id>/`` with an
    AndroidManifest.xml and ``smali/.../Main.smali``, and a
    ``manifest.tsv`` listing every app is written to ``out_dir``.

    :param emit_dex: Also write an equivalent ``classes.dex``.
    :param binary_manifest: Write AndroidManifest.xml as binary XML.
    :return: The manifest that was written.
    """
    out = Path(out_dir)
    entries = []
    for app in apps:
        relative = Path("apps") / app.app_id
        directory = out / relative
        package = "com.example.%s" % app.app_id.replace("-", "_")
        if binary_manifest:
            manifest = build_axml(app.permissions, package=package)
        else:
            manifest = render_manifest_xml(app.permissions, package=package)
        atomic_write_bytes(directory / "AndroidManifest.xml", manifest)

        descriptor = _class_descriptor(app.app_id)
        methods = [
            ("m%d" % i, body)
            for i, body in enumerate(_method_bodies(app.histogram, methods_per_app))
        ]
        smali_path = directory / "smali" / (descriptor[1:-1] + ".smali")
        atomic_write_text(smali_path, render_smali(descriptor, methods))
        if emit_dex:
            builder = DexBuilder()
            builder.add_class(descriptor)
            for name, body in methods:
                builder.add_method(descriptor, name, body)
            atomic_write_bytes(directory / "classes.dex", builder.build())
        entries.append(ManifestEntry(app.app_id, app.label, relative.as_posix()))

    manifest_file = CorpusManifest(entries, out)
    buffer = io.StringIO()
    manifest_file.write(buffer)
    atomic_write_text(out / "manifest.tsv", buffer.getvalue())
    logger.info("Wrote %d apps to %s.", len(entries), out)
    return manifest_file

"""Read a labelled corpus of apps and extract what the detector needs.

A corpus is described by a manifest file with one app per line::

    # dexgroup-corpus 1
    app_id<TAB>label<TAB>path[<TAB>histogram_ref<TAB>permissions_ref]

``label`` is ``benign`` or ``malicious``. ``path`` is relative to the
manifest file and names an APK, a raw DEX file, or an apktool-style
directory (``AndroidManifest.xml``, ``smali*/**/*.smali``, and
optionally ``classes*.dex``). When both refs are given the app has
already been extracted: ``histogram_ref`` names a histogram record
file and ``permissions_ref`` a file with one permission per line, and
``path`` may be ``-``.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import hashlib
import io
import logging
import warnings
from pathlib import Path
from typing import (
    Dict,
    IO,
    Iterable,
    Iterator,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    Union,
)

from dexgroup._io import atomic_write_text
from dexgroup._typing import (
    _MapFunction,
    _OnUnknown,
)
from dexgroup._warnings import QuarantinedAppWarning
from dexgroup.apk import ApkFile
from dexgroup.classifier import Label
from dexgroup.exceptions import (
    CorruptArtifact,
    DexgroupError,
    DuplicateAppId,
    ExtractionError,
    InvalidManifest,
    MalformedApk,
)
from dexgroup.extractor import (
    extract_from_dex,  # type:ignore
    extract_from_smali,  # type:ignore
)
from dexgroup.grouping import (
    GroupAssignment,
    GroupId,
    GroupMapping,
    assign,
    partition_corpus,
)
from dexgroup.histogram import (
    OpcodeHistogram,
    merge_histograms,
    read_histograms,
    write_histograms,
)
from dexgroup.manifest import (
    PermissionSet,
    parse_manifest,
)

__all__ = [
    "CorpusManifest",
    "ExtractedApp",
    "ExtractedCorpus",
    "IngestResult",
    "ManifestEntry",
    "QuarantineRecord",
    "ingest",
    "UNGROUPED",
]

logger = logging.getLogger(__name__)

CORPUS_FORMAT_VERSION = 1
CACHE_FORMAT_VERSION = 1

_CORPUS_LINE = "# dexgroup-corpus %d" % CORPUS_FORMAT_VERSION
_CACHE_LINE = "# dexgroup-cache %d" % CACHE_FORMAT_VERSION
_APPS_LINE = "# dexgroup-apps 1"

#: Name of the bucket that holds every app, for the ungrouped baseline.
UNGROUPED = "All"

HISTOGRAMS_FILE = "histograms.csv"
APPS_FILE = "apps.tsv"
QUARANTINE_FILE = "quarantine.tsv"


class ManifestEntry(NamedTuple):
    """One line of a corpus manifest."""

    app_id: str
    label: Label
    path: str
    histogram_ref: Optional[str] = None
    permissions_ref: Optional[str] = None

    @property
    def precomputed(self) -> bool:
        return self.histogram_ref is not None and self.permissions_ref is not None


class CorpusManifest(object):
    """The list of apps in a corpus, and where to find them.

    :param entries: The apps.
    :param base_dir: Relative paths are resolved against this.
    :raise DuplicateAppId: If two entries share an app id.
    """

    def __init__(self, entries: Iterable[ManifestEntry], base_dir: Union[str, Path] = "."):
        self.entries: List[ManifestEntry] = []
        self.base_dir = Path(base_dir)
        seen = set()
        for entry in entries:
            if entry.app_id in seen:
                raise DuplicateAppId(entry.app_id)
            seen.add(entry.app_id)
            self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    def resolve(self, relative: str) -> Path:
        return self.base_dir / relative

    @classmethod
    def parse(cls, text: str, base_dir: Union[str, Path] = ".") -> CorpusManifest:
        """Parse manifest text.

        :raise InvalidManifest: On a line with the wrong number of
            fields or an unknown label.
        """
        entries = []
        for line_number, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) not in (3, 5):
                raise InvalidManifest(
                    "Line %d has %d fields; expected 3 or 5." % (line_number, len(fields))
                )
            try:
                label = Label.from_name(fields[1])
            except ValueError as e:
                raise InvalidManifest("Line %d: %s" % (line_number, e))
            app_id = fields[0].strip()
            if not app_id:
                raise InvalidManifest("Line %d has no app id." % line_number)
            refs: Tuple[Optional[str], Optional[str]] = (None, None)
            if len(fields) == 5:
                refs = (fields[3] or None, fields[4] or None)
            entries.append(ManifestEntry(app_id, label, fields[2], *refs))
        return cls(entries, base_dir)

    @classmethod
    def read(cls, path: Union[str, Path]) -> CorpusManifest:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            raise InvalidManifest("%s: %s" % (path, e))
        return cls.parse(text, path.parent)

    def write(self, fh: IO[str]) -> None:
        fh.write(_CORPUS_LINE + "\n")
        for entry in self.entries:
            fields = [entry.app_id, str(entry.label), entry.path]
            if entry.precomputed:
                fields += [entry.histogram_ref or "", entry.permissions_ref or ""]
            fh.write("\t".join(fields) + "\n")


class ExtractedApp(NamedTuple):
    """What the detector knows about one app."""

    app_id: str
    label: Label
    histogram: OpcodeHistogram
    permissions: PermissionSet


class QuarantineRecord(NamedTuple):
    """An app that couldn't be extracted, and why."""

    app_id: str
    path: str
    reason: str


class ExtractedCorpus(object):
    """A set of extracted apps, in a fixed order.

    :raise DuplicateAppId: If two apps share an id.
    """

    def __init__(self, apps: Iterable[ExtractedApp] = ()):
        self.apps: List[ExtractedApp] = []
        self._by_id: Dict[str, ExtractedApp] = {}
        for app in apps:
            if app.app_id in self._by_id:
                raise DuplicateAppId(app.app_id)
            self._by_id[app.app_id] = app
            self.apps.append(app)

    def __len__(self) -> int:
        return len(self.apps)

    def __iter__(self) -> Iterator[ExtractedApp]:
        return iter(self.apps)

    def __getitem__(self, app_id: str) -> ExtractedApp:
        return self._by_id[app_id]

    def assignments(
        self, include_sensors: bool = False, mapping: Optional[GroupMapping] = None
    ) -> List[GroupAssignment]:
        return [
            assign(app.app_id, app.permissions, include_sensors, mapping)
            for app in self.apps
        ]

    def partition(
        self, include_sensors: bool = False, mapping: Optional[GroupMapping] = None
    ) -> Dict[GroupId, List[ExtractedApp]]:
        """Group the apps into permission buckets."""
        buckets = partition_corpus(self.assignments(include_sensors, mapping), include_sensors)
        return {
            group: [self._by_id[app_id] for app_id in app_ids]
            for group, app_ids in buckets.items()
        }

    def bucket(
        self, group: Union[GroupId, str], include_sensors: bool = False
    ) -> List[ExtractedApp]:
        """The apps in one group, or every app for `UNGROUPED`."""
        if group == UNGROUPED:
            return list(self.apps)
        if isinstance(group, str):
            group = GroupId.from_name(group)
        return self.partition(include_sensors or group is GroupId.SENSORS).get(group, [])

    def labels(self) -> Dict[str, Label]:
        return {app.app_id: app.label for app in self.apps}

    def write(self, directory: Union[str, Path], header: Sequence[str] = ()) -> None:
        """Save the corpus as a histogram file and an app table."""
        directory = Path(directory)
        histograms = io.StringIO()
        write_histograms(((a.app_id, a.histogram) for a in self.apps), histograms, header)
        atomic_write_text(directory / HISTOGRAMS_FILE, histograms.getvalue())

        lines = [_APPS_LINE] + ["# %s" % h for h in header]
        lines.append("app_id\tlabel\tpermissions")
        for app in self.apps:
            lines.append("%s\t%s\t%s" % (app.app_id, app.label, " ".join(sorted(app.permissions))))
        atomic_write_text(directory / APPS_FILE, "\n".join(lines) + "\n")

    @classmethod
    def read(cls, directory: Union[str, Path]) -> ExtractedCorpus:
        """Load a corpus saved with `write`.

        :raise CorruptArtifact: If either file is missing or damaged,
            or they disagree about which apps there are.
        """
        directory = Path(directory)
        try:
            with open(directory / HISTOGRAMS_FILE, encoding="utf-8") as fh:
                histograms = dict(read_histograms(fh))
            app_lines = (directory / APPS_FILE).read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise CorruptArtifact(e.__class__.__name__ + ": " + str(e))
        if not app_lines or app_lines[0] != _APPS_LINE:
            raise CorruptArtifact("%s is not a dexgroup app table." % APPS_FILE)
        apps = []
        for line in app_lines[1:]:
            if not line or line.startswith("#") or line.startswith("app_id\t"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise CorruptArtifact("Bad app table line: %r" % line)
            app_id, label_text, permissions = fields
            if app_id not in histograms:
                raise CorruptArtifact("App %s has no histogram." % app_id)
            try:
                label = Label.from_name(label_text)
            except ValueError as e:
                raise CorruptArtifact(str(e))
            apps.append(
                ExtractedApp(app_id, label, histograms[app_id], PermissionSet(permissions.split()))
            )
        return cls(apps)


class IngestResult(NamedTuple):
    corpus: ExtractedCorpus
    quarantine: List[QuarantineRecord]
    #: Apps whose bytecode was actually parsed this run.
    extracted: int
    #: Apps served from the cache or from precomputed refs.
    cache_hits: int

    def write_quarantine(self, fh: IO[str], header: Sequence[str] = ()) -> None:
        fh.write("# dexgroup-quarantine 1\n")
        for line in header:
            fh.write("# %s\n" % line)
        fh.write("app_id\tpath\treason\n")
        for record in self.quarantine:
            reason = record.reason.replace("\t", " ").replace("\n", " ")
            fh.write("%s\t%s\t%s\n" % (record.app_id, record.path, reason))


class _IngestJob(NamedTuple):
    entry: ManifestEntry
    location: str
    base_dir: str
    cache_dir: Optional[str]
    verify_checksum: bool
    on_unknown: str


class _IngestOutcome(NamedTuple):
    app: Optional[ExtractedApp]
    quarantine: Optional[QuarantineRecord]
    cache_hit: bool


def _read_precomputed(job: _IngestJob) -> Tuple[OpcodeHistogram, PermissionSet]:
    base = Path(job.base_dir)
    entry = job.entry
    assert entry.histogram_ref is not None and entry.permissions_ref is not None
    try:
        with open(base / entry.histogram_ref, encoding="utf-8") as fh:
            records = read_histograms(fh)
        permissions = (base / entry.permissions_ref).read_text(encoding="utf-8").split()
    except UnicodeDecodeError as e:
        raise CorruptArtifact(e)
    if len(records) != 1:
        raise CorruptArtifact(
            "%s should hold one histogram, not %d." % (entry.histogram_ref, len(records))
        )
    return records[0][1], PermissionSet(permissions)


def _directory_inputs(directory: Path) -> Tuple[Optional[Path], List[Path], List[Path]]:
    manifest = directory / "AndroidManifest.xml"
    smali = sorted(
        p for p in directory.glob("smali*/**/*.smali") if p.is_file()
    )
    dex = sorted(p for p in directory.glob("classes*.dex") if p.is_file())
    return (manifest if manifest.is_file() else None), smali, dex


def _content_key(job: _IngestJob, path: Path) -> str:
    """Hash everything extraction reads, plus the options that change
    its result.
    """
    digest = hashlib.sha256()
    digest.update(
        ("%s|%s|%s\n" % (CACHE_FORMAT_VERSION, job.verify_checksum, job.on_unknown)).encode()
    )
    if path.is_dir():
        manifest, smali, dex = _directory_inputs(path)
        files = ([manifest] if manifest else []) + smali + dex
        for f in files:
            digest.update(f.relative_to(path).as_posix().encode("utf-8") + b"\0")
            digest.update(f.read_bytes())
            digest.update(b"\0")
    else:
        digest.update(path.read_bytes())
    return digest.hexdigest()


def _cache_path(cache_dir: str, key: str) -> Path:
    return Path(cache_dir) / key[:2] / (key + ".app")


def _read_cache(path: Path) -> Optional[Tuple[OpcodeHistogram, PermissionSet]]:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError:
        return None
    except UnicodeDecodeError:
        logger.warning("Ignoring damaged cache entry %s", path)
        return None
    if len(lines) < 2 or lines[0] != _CACHE_LINE:
        logger.warning("Ignoring damaged cache entry %s", path)
        return None
    try:
        histogram = OpcodeHistogram(int(c) for c in lines[1].split(","))
    except ValueError:
        logger.warning("Ignoring damaged cache entry %s", path)
        return None
    return histogram, PermissionSet(lines[2:])


def _write_cache(path: Path, histogram: OpcodeHistogram, permissions: PermissionSet) -> None:
    lines = [_CACHE_LINE, ",".join(str(c) for c in histogram.counts)]
    lines.extend(sorted(permissions))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _extract(job: _IngestJob, path: Path) -> Tuple[OpcodeHistogram, PermissionSet]:
    if path.is_dir():
        manifest, smali, dex = _directory_inputs(path)
        if manifest is None:
            raise MalformedApk("%s has no AndroidManifest.xml." % path.name)
        permissions = parse_manifest(manifest.read_bytes())
        if smali:
            names = [p.relative_to(path).as_posix() for p in smali]
            histogram = extract_from_smali(
                [p.read_bytes() for p in smali], names, job.on_unknown
            )
        elif dex:
            histogram = merge_histograms(
                extract_from_dex(p.read_bytes(), job.verify_checksum) for p in dex
            )
        else:
            raise ExtractionError("%s has no smali or DEX files." % path.name)
        return histogram, permissions
    if path.suffix.lower() == ".dex":
        # A bare DEX file carries no manifest.
        return extract_from_dex(path.read_bytes(), job.verify_checksum), PermissionSet()
    with ApkFile(path) as apk:
        return apk.histogram(job.verify_checksum), apk.permissions()


def _ingest_one(job: _IngestJob) -> _IngestOutcome:
    entry = job.entry
    try:
        if entry.precomputed:
            histogram, permissions = _read_precomputed(job)
            return _IngestOutcome(
                ExtractedApp(entry.app_id, entry.label, histogram, permissions), None, True
            )
        path = Path(job.location)
        key = _content_key(job, path)
        if job.cache_dir is not None:
            cached = _read_cache(_cache_path(job.cache_dir, key))
            if cached is not None:
                return _IngestOutcome(
                    ExtractedApp(entry.app_id, entry.label, *cached), None, True
                )
        histogram, permissions = _extract(job, path)
        if job.cache_dir is not None:
            _write_cache(_cache_path(job.cache_dir, key), histogram, permissions)
        return _IngestOutcome(
            ExtractedApp(entry.app_id, entry.label, histogram, permissions), None, False
        )
    except (DexgroupError, OSError) as e:
        reason = "%s: %s" % (e.__class__.__name__, e)
        return _IngestOutcome(None, QuarantineRecord(entry.app_id, entry.path, reason), False)


def ingest(
    manifest: CorpusManifest,
    cache_dir: Optional[Union[str, Path]] = None,
    map_fn: _MapFunction = map,
    verify_checksum: bool = False,
    on_unknown: _OnUnknown = "warn",
) -> IngestResult:
    """Extract every app in a corpus.

    Apps that fail to extract are quarantined rather than stopping the
    run; each one also raises a `QuarantinedAppWarning`.

    :param cache_dir: Keep extraction results here, keyed by a hash of
        each app's content, so unchanged apps aren't parsed again.
    :param map_fn: How to run the per-app jobs. The built-in ``map``
        runs them in this process; pass a worker pool's ``map`` to
        spread them out. Results come back in manifest order either
        way.
    """
    jobs = [
        _IngestJob(
            entry=entry,
            location=str(manifest.resolve(entry.path)),
            base_dir=str(manifest.base_dir),
            cache_dir=None if cache_dir is None else str(cache_dir),
            verify_checksum=verify_checksum,
            on_unknown=on_unknown,
        )
        for entry in manifest
    ]
    apps = []
    quarantine = []
    extracted = cache_hits = 0
    for outcome in map_fn(_ingest_one, jobs):
        if outcome.app is not None:
            apps.append(outcome.app)
            if outcome.cache_hit:
                cache_hits += 1
            else:
                extracted += 1
        else:
            assert outcome.quarantine is not None
            record = outcome.quarantine
            quarantine.append(record)
            logger.warning("Quarantined %s: %s", record.app_id, record.reason)
            warnings.warn(
                QuarantinedAppWarning.MESSAGE % record._asdict(),
                QuarantinedAppWarning,
                stacklevel=2,
            )
    logger.info(
        "Ingested %d apps (%d extracted, %d from cache), quarantined %d.",
        len(apps), extracted, cache_hits, len(quarantine),
    )
    return IngestResult(ExtractedCorpus(apps), quarantine, extracted, cache_hits)

"""Read the pieces of an APK that dexgroup cares about."""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import io
import logging
import re
import zipfile
import zlib
from pathlib import Path
from typing import (
    List,
    Tuple,
    Union,
)

from dexgroup.exceptions import (
    MalformedApk,
    MalformedDex,
)
from dexgroup.extractor._dex import extract_from_dex
from dexgroup.histogram import (
    OpcodeHistogram,
    merge_histograms,
)
from dexgroup.manifest import (
    PermissionSet,
    parse_manifest,
)

__all__ = ["ApkFile", "dex_entry_names"]

logger = logging.getLogger(__name__)

MANIFEST_ENTRY = "AndroidManifest.xml"

_DEX_ENTRY = re.compile(r"^classes(\d*)\.dex$")

# zipfile raises RuntimeError for encrypted entries and
# NotImplementedError for unknown compression methods.
_READ_ERRORS = (
    zipfile.BadZipFile,
    zipfile.LargeZipFile,
    zlib.error,
    EOFError,
    RuntimeError,
    NotImplementedError,
    OSError,
)


def _dex_order(name: str) -> int:
    match = _DEX_ENTRY.match(name)
    assert match is not None
    number = match.group(1)
    # classes.dex is the first file; classes2.dex is the second.
    return int(number) if number else 1


def dex_entry_names(names: List[str]) -> List[str]:
    """Pick the top-level classes*.dex entries out of a ZIP listing and
    put them in loading order.
    """
    return sorted((n for n in names if _DEX_ENTRY.match(n)), key=_dex_order)


class ApkFile(object):
    """An APK: a ZIP archive holding a compiled manifest and one or
    more DEX files.

    :param source: A path to the APK, or its bytes.
    :raise MalformedApk: If ``source`` isn't a ZIP archive.
    """

    def __init__(self, source: Union[str, Path, bytes]):
        if isinstance(source, bytes):
            handle: Union[str, Path, io.BytesIO] = io.BytesIO(source)
        else:
            handle = source
        try:
            self._zip = zipfile.ZipFile(handle)
        except (zipfile.BadZipFile, OSError) as e:
            raise MalformedApk(e)

    def close(self) -> None:
        self._zip.close()

    def __enter__(self) -> ApkFile:
        return self

    def __exit__(self, *args: object) -> None:
        self.close()

    def _read(self, name: str) -> bytes:
        try:
            return self._zip.read(name)
        except _READ_ERRORS + (KeyError,) as e:
            raise MalformedApk("%s: %s" % (name, e))

    def manifest_bytes(self) -> bytes:
        """The raw AndroidManifest.xml entry.

        :raise MalformedApk: If there isn't one.
        """
        if MANIFEST_ENTRY not in self._zip.namelist():
            raise MalformedApk("APK has no %s." % MANIFEST_ENTRY)
        return self._read(MANIFEST_ENTRY)

    def dex_entries(self) -> List[Tuple[str, bytes]]:
        """Every classes*.dex entry, in loading order.

        :raise MalformedDex: If there are none.
        """
        names = dex_entry_names(self._zip.namelist())
        if not names:
            raise MalformedDex("APK has no classes.dex.")
        entries = []
        for name in names:
            try:
                entries.append((name, self._zip.read(name)))
            except _READ_ERRORS as e:
                raise MalformedDex("%s: %s" % (name, e))
        return entries

    def permissions(self) -> PermissionSet:
        """The permissions the manifest requests."""
        return parse_manifest(self.manifest_bytes())

    def histogram(self, verify_checksum: bool = False) -> OpcodeHistogram:
        """The merged opcode histogram of every DEX file."""
        entries = self.dex_entries()
        if len(entries) > 1:
            logger.debug("Merging %d DEX files.", len(entries))
        return merge_histograms(
            extract_from_dex(data, verify_checksum) for _, data in entries
        )

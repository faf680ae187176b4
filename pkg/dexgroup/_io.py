"""Small file helpers shared by the corpus cache and the command line."""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import os
import tempfile
from pathlib import Path
from typing import Union

__all__ = ["atomic_write_bytes", "atomic_write_text"]

_PathLike = Union[str, "os.PathLike[str]"]


def atomic_write_bytes(path: _PathLike, data: bytes) -> None:
    """Write ``data`` to a temporary file next to ``path``, then rename
    it into place. Readers see either the old file or the whole new
    one, never a partial write.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(
        dir=str(target.parent), prefix="." + target.name + ".", suffix=".tmp"
    )
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(temp_name, str(target))
    except BaseException:
        try:
            os.unlink(temp_name)
        except OSError:
            pass
        raise


def atomic_write_text(path: _PathLike, text: str) -> None:
    """`atomic_write_bytes` for UTF-8 text with Unix newlines."""
    atomic_write_bytes(path, text.encode("utf-8"))

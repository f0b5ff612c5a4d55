"""Atomic file writing shared by checkpoints, codecs, and CLI outputs."""

from __future__ import annotations

import os
from pathlib import Path


def write_bytes_atomic(path, data: bytes) -> None:
    """Write to a temp file in the same directory, then rename into place.

    A failed write never leaves a partial file at ``path``.
    """
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def write_text_atomic(path, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))

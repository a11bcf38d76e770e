"""Atomic file writes and content hashing shared across stages."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the target directory plus rename, so
    readers never observe a partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path, obj, indent: int | None = None) -> None:
    atomic_write_text(
        path, json.dumps(obj, sort_keys=True, indent=indent) + "\n"
    )


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()

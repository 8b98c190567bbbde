"""Small shared helpers."""
from __future__ import annotations

import os


def atomic_write_bytes(path, blob: bytes) -> None:
    """Write ``blob`` to ``path`` without ever leaving a partial file behind."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    try:
        with open(tmp, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))

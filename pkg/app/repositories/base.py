"""Base Repository Pattern"""

import os
from pathlib import Path

from app.core.exceptions import OutputError


class FileRepository:
    """Base repository over one directory of run artifacts."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def ensure_dir(self, *parts: str) -> Path:
        """Create (if needed) and return a directory below the root."""
        path = self.root.joinpath(*parts)
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OutputError(str(path), e.strerror or str(e))
        if not os.access(path, os.W_OK):
            raise OutputError(str(path), "directory is not writable")
        return path

    def write_bytes_atomic(self, path: Path, data: bytes) -> Path:
        """Write via a temporary sibling and rename into place."""
        tmp = path.with_name(path.name + ".tmp")
        try:
            tmp.write_bytes(data)
            os.replace(tmp, path)
        except OSError as e:
            raise OutputError(str(path), e.strerror or str(e))
        return path

    def write_text(self, path: Path, text: str) -> Path:
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as e:
            raise OutputError(str(path), e.strerror or str(e))
        return path

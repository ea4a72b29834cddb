"""Repository Layer - run directory persistence"""

from app.repositories.base import FileRepository
from app.repositories.checkpoint import CheckpointRepository
from app.repositories.run_store import RunStore

__all__ = [
    "FileRepository",
    "CheckpointRepository",
    "RunStore",
]

"""Stacked egocentric observations."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

STACK_DEPTH = 3


@dataclass(frozen=True)
class StateTensor:
    """The most recent rasters of one pedestrian, oldest first.

    Rasters are ``uint8`` arrays shared by reference between consecutive
    tensors, so a replay buffer of tensors stores each raster once.
    """
    frames: Tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.frames) != STACK_DEPTH:
            raise ValueError(f"StateTensor needs {STACK_DEPTH} frames, got {len(self.frames)}")

    @classmethod
    def initial(cls, raster: np.ndarray) -> "StateTensor":
        """Cold start: the first raster fills every slot."""
        return cls(frames=(raster,) * STACK_DEPTH)

    def push_frame(self, raster: np.ndarray) -> "StateTensor":
        return StateTensor(frames=self.frames[1:] + (raster,))

    def as_array(self) -> np.ndarray:
        """(frames, height, width) uint8 array."""
        return np.stack(self.frames, axis=0)


def push_frame(tensor: StateTensor, raster: np.ndarray) -> StateTensor:
    """Drop the oldest raster and append ``raster``."""
    return tensor.push_frame(raster)

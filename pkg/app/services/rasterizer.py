"""
State Rasterizer
Maps the environment (ECS) onto the screen grid (SCS) and draws egocentric
grayscale observations: background 0, walls and other pedestrians 100,
the observed pedestrian 255.
"""

import math
import re
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from app.models.pedestrian import PedestrianState, Vec2
from app.models.simulation import SimulationState
from app.schemas.scenario import RoomScenario, WallSide

BACKGROUND = 0
OCCUPIED = 100
SUBJECT = 255
DEFAULT_SIZE = 84

_PGM_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def ecs_to_scs(position: Vec2, outer_size: float, size: int = DEFAULT_SIZE) -> Tuple[int, int]:
    """(row, col) of the pixel holding ``position``; y is flipped, borders clamp."""
    scale = size / outer_size
    col = math.floor(position[0] * scale)
    row = math.floor((outer_size - position[1]) * scale)
    return min(max(row, 0), size - 1), min(max(col, 0), size - 1)


def _pixel_centers(outer_size: float, size: int) -> Tuple[np.ndarray, np.ndarray]:
    step = outer_size / size
    centers = (np.arange(size) + 0.5) * step
    # row 0 is the top of the room
    return outer_size - centers, centers


@lru_cache(maxsize=128)
def _wall_layer(scenario: RoomScenario, open_mask: Tuple[bool, ...], size: int) -> np.ndarray:
    outer = scenario.outer_size
    ys, xs = _pixel_centers(outer, size)
    x = xs[None, :]
    y = ys[:, None]
    lo, hi = scenario.interior_bounds
    inside = (x >= lo) & (x <= hi) & (y >= lo) & (y <= hi)
    walls = ~inside

    for exit_spec, is_open in zip(scenario.exits, open_mask):
        if not is_open:
            continue
        g0, g1 = exit_spec.lateral_span
        side = exit_spec.wall_side
        if side is WallSide.LEFT:
            depth, lateral = x, y
        elif side is WallSide.BOTTOM:
            depth, lateral = y, x
        elif side is WallSide.RIGHT:
            depth, lateral = outer - x, y
        else:
            depth, lateral = outer - y, x
        gap = (depth >= 0) & (depth <= scenario.wall_width) & (lateral >= g0) & (lateral <= g1)
        walls &= ~gap

    layer = np.where(walls, OCCUPIED, BACKGROUND).astype(np.uint8)
    layer.setflags(write=False)
    return layer


def wall_layer(scenario: RoomScenario, frame: int, size: int = DEFAULT_SIZE) -> np.ndarray:
    """Read-only walls-only raster at ``frame``; closed exits are drawn as wall."""
    open_mask = tuple(e.is_open(frame) for e in scenario.exits)
    return _wall_layer(scenario, open_mask, size)


def paint_disc(
    raster: np.ndarray,
    center: Vec2,
    radius: float,
    value: int,
    outer_size: float,
) -> None:
    """Fill every pixel whose center lies within the disc."""
    size = raster.shape[0]
    step = outer_size / size
    col_lo = max(int(math.floor((center[0] - radius) / step)), 0)
    col_hi = min(int(math.ceil((center[0] + radius) / step)), size - 1)
    row_lo = max(int(math.floor((outer_size - center[1] - radius) / step)), 0)
    row_hi = min(int(math.ceil((outer_size - center[1] + radius) / step)), size - 1)
    if col_lo > col_hi or row_lo > row_hi:
        return
    xs = (np.arange(col_lo, col_hi + 1) + 0.5) * step
    ys = outer_size - (np.arange(row_lo, row_hi + 1) + 0.5) * step
    mask = (xs[None, :] - center[0]) ** 2 + (ys[:, None] - center[1]) ** 2 <= radius * radius
    window = raster[row_lo : row_hi + 1, col_lo : col_hi + 1]
    window[mask] = value


def base_layer(state: SimulationState, size: int = DEFAULT_SIZE) -> np.ndarray:
    """Walls plus every active pedestrian at the occupied value."""
    scenario = state.scenario
    raster = wall_layer(scenario, state.frame, size).copy()
    for ped in state.pedestrians:
        if ped.active:
            paint_disc(raster, ped.position, ped.radius, OCCUPIED, scenario.outer_size)
    return raster


def _subject(state: SimulationState, subject_id: int) -> PedestrianState:
    ped = state.pedestrian(subject_id)
    if not ped.active:
        raise ValueError(f"pedestrian {subject_id} is inactive")
    return ped


def rasterize(
    state: SimulationState,
    subject_id: Optional[int] = None,
    size: int = DEFAULT_SIZE,
) -> np.ndarray:
    """
    Egocentric raster of ``subject_id``.

    With no subject the raster shows walls and all pedestrians at the
    occupied value only.
    """
    raster = base_layer(state, size)
    if subject_id is not None:
        ped = _subject(state, subject_id)
        paint_disc(raster, ped.position, ped.radius, SUBJECT, state.scenario.outer_size)
    return raster


def rasterize_all(state: SimulationState, size: int = DEFAULT_SIZE) -> Dict[int, np.ndarray]:
    """Egocentric rasters of every active pedestrian sharing one base layer."""
    base = base_layer(state, size)
    outer = state.scenario.outer_size
    rasters: Dict[int, np.ndarray] = {}
    for ped in state.pedestrians:
        if not ped.active:
            continue
        raster = base.copy()
        paint_disc(raster, ped.position, ped.radius, SUBJECT, outer)
        raster.setflags(write=False)
        rasters[ped.id] = raster
    return rasters


def render_scene(state: SimulationState, size: int = DEFAULT_SIZE) -> np.ndarray:
    """Overview frame: walls at the occupied value, every pedestrian at full intensity."""
    raster = wall_layer(state.scenario, state.frame, size).copy()
    for ped in state.pedestrians:
        if ped.active:
            paint_disc(raster, ped.position, ped.radius, SUBJECT, state.scenario.outer_size)
    return raster


def encode_pgm(raster: np.ndarray) -> bytes:
    """Binary PGM (P5) with maxval 255."""
    if raster.dtype != np.uint8 or raster.ndim != 2:
        raise ValueError("PGM export needs a 2D uint8 raster")
    height, width = raster.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(raster).tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    match = _PGM_HEADER.match(data)
    if match is None or match.group(3) != b"255":
        raise ValueError("not an 8-bit binary PGM")
    width, height = int(match.group(1)), int(match.group(2))
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=match.end())
    return pixels.reshape(height, width).copy()


def write_pgm(path: str | Path, raster: np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(encode_pgm(raster))
    return path


def write_png(path: str | Path, raster: np.ndarray) -> Path:
    """Grayscale PNG for figures."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    plt.imsave(path, raster, cmap="gray", vmin=0, vmax=255)
    return path

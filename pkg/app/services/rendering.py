"""Scene frames rebuilt from stored evaluation traces."""

from typing import Dict, List, Optional

import numpy as np

from app.models.pedestrian import PedestrianState
from app.models.simulation import SimulationState
from app.schemas.report import EvalReport, TraceFrame
from app.schemas.scenario import ScenarioFamily
from app.services.rasterizer import DEFAULT_SIZE, render_scene

DEFAULT_INTERVAL = 10
# delayed-open runs are dumped on the opening-frame grid
FAMILY_INTERVALS = {ScenarioFamily.DELAYED_OPEN: 15}


def default_interval(family: ScenarioFamily) -> int:
    return FAMILY_INTERVALS.get(ScenarioFamily(family), DEFAULT_INTERVAL)


def frame_schedule(total_frames: int, interval: int = DEFAULT_INTERVAL) -> List[int]:
    """Frames to dump: 0, interval, 2*interval, ... up to ``total_frames``."""
    if interval < 1:
        raise ValueError("render interval must be positive")
    return list(range(0, total_frames + 1, interval))


def state_from_trace(report: EvalReport, trace_frame: TraceFrame) -> SimulationState:
    scenario = report.scenario
    pedestrians = tuple(
        PedestrianState(id=ped_id, position=(x, y), radius=scenario.pedestrian_radius)
        for ped_id, x, y in trace_frame.positions
    )
    return SimulationState(
        frame=trace_frame.frame,
        pedestrians=pedestrians,
        scenario=scenario,
        exit_counts=(0,) * len(scenario.exits),
        horizon=max(report.total_frames, trace_frame.frame),
    )


def render_report(
    report: EvalReport,
    interval: Optional[int] = None,
    size: int = DEFAULT_SIZE,
) -> Dict[int, np.ndarray]:
    """Scene raster for every scheduled frame present in the trace.

    Without an explicit ``interval`` the scenario family picks one.
    """
    if interval is None:
        interval = default_interval(report.scenario.family)
    by_frame = {tf.frame: tf for tf in report.trace}
    frames: Dict[int, np.ndarray] = {}
    for frame in frame_schedule(report.total_frames, interval):
        trace_frame = by_frame.get(frame)
        if trace_frame is None:
            continue
        frames[frame] = render_scene(state_from_trace(report, trace_frame), size)
    return frames

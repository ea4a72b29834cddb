"""Evaluation Report Schemas"""

import enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.scenario import RoomScenario


class PolicyKind(str, enum.Enum):
    """Supported policy kinds."""
    RAINBOW = "rainbow"
    NEAREST_EXIT = "nearest_exit"
    MULTI_FACTOR = "multi_factor"
    UNIFORM_RANDOM = "uniform_random"


class PolicyHandle(BaseModel):
    """Reference to a policy: a checkpoint for rainbow, parameters for stand-ins."""

    model_config = ConfigDict(extra="forbid")

    kind: PolicyKind
    checkpoint: Optional[str] = None
    params: Dict[str, Any] = Field(default_factory=dict)


class EventRecord(BaseModel):
    """One pedestrian event in a run."""
    frame: int
    pedestrian_id: int
    kind: str
    exit_index: Optional[int] = None


class TraceFrame(BaseModel):
    """Active pedestrian positions at one frame, as (id, x, y)."""
    frame: int
    positions: List[Tuple[int, float, float]]


class EvalReport(BaseModel):
    """Outcome of one evaluation run."""

    scenario: RoomScenario
    scenario_label: str
    seed: int
    policy: str
    total_frames: int = Field(..., ge=0)
    n_l: int = Field(..., ge=0)
    n_b: int = Field(..., ge=0)
    r_util: float = Field(..., ge=0, le=1)
    events: List[EventRecord] = Field(default_factory=list)
    trace: List[TraceFrame] = Field(default_factory=list)

    def metrics_row(self) -> Dict[str, Any]:
        """Flat row written to metrics.csv."""
        w_l, w_b = self.scenario.exit_widths[0], self.scenario.exit_widths[-1]
        return {
            "scenario": self.scenario_label,
            "seed": self.seed,
            "policy": self.policy,
            "total_frames": self.total_frames,
            "N_l": self.n_l,
            "N_b": self.n_b,
            "w_l": w_l,
            "w_b": w_b,
            "r_util": self.r_util,
        }

"""
Evaluation Pipelines
Seeded policy runs, the baseline comparison grid and frame rendering.
"""

from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import pandas as pd

from app.core.exceptions import ScenarioError
from app.core.logging import get_logger
from app.models.simulation import EventKind, SimulationState
from app.policies.base import BasePolicy
from app.policies.factory import PolicyFactory
from app.repositories.run_store import RunStore
from app.schemas.config import SimulationParams
from app.schemas.report import EvalReport, EventRecord, PolicyHandle, PolicyKind, TraceFrame
from app.schemas.scenario import RoomScenario, ScenarioFamily, ScenarioParams
from app.services.environment import (
    DISTRIBUTION_RATIOS,
    OPEN_FRAMES,
    WIDTH_RATIOS,
    EvacuationEnvironment,
    build_scenario,
    scenario_label,
)
from app.services.metrics import metrics_frame, r_util, summarize
from app.services.rasterizer import write_pgm, write_png
from app.services.rendering import render_report

logger = get_logger(__name__)

COMPARISON_COLUMNS = ["family", "variant", "m", "policy", "runs", "total_frames", "r_util"]


def _trace_frame(state: SimulationState) -> TraceFrame:
    return TraceFrame(
        frame=state.frame,
        positions=[(p.id, p.position[0], p.position[1]) for p in state.pedestrians if p.active],
    )


def run_episode(
    policy: BasePolicy,
    scenario: RoomScenario,
    horizon: int = 200,
    params: Optional[SimulationParams] = None,
    keep_trace: bool = True,
) -> EvalReport:
    """Roll one episode to completion and report it."""
    params = params or SimulationParams()
    env = EvacuationEnvironment(scenario, params, horizon)
    policy.reset(scenario.seed)

    events: List[EventRecord] = []
    trace: List[TraceFrame] = [_trace_frame(env.state)] if keep_trace else []
    while not env.done:
        actions = policy.act(env.state)
        for event in env.step(actions):
            if event.kind is EventKind.MOVED:
                continue
            events.append(EventRecord(
                frame=env.state.frame,
                pedestrian_id=event.pedestrian_id,
                kind=event.kind.value,
                exit_index=event.exit_index,
            ))
        if keep_trace:
            trace.append(_trace_frame(env.state))

    state = env.state
    widths = scenario.exit_widths
    report = EvalReport(
        scenario=scenario,
        scenario_label=scenario_label(scenario),
        seed=scenario.seed,
        policy=policy.policy_name,
        total_frames=state.frame,
        n_l=state.n_l,
        n_b=state.n_b,
        r_util=r_util(state.n_l, state.n_b, widths[0], widths[-1]),
        events=events,
        trace=trace,
    )
    logger.info(
        "Episode finished",
        scenario=report.scenario_label,
        seed=report.seed,
        policy=report.policy,
        frames=report.total_frames,
        N_l=report.n_l,
        N_b=report.n_b,
    )
    return report


def evaluate(
    handle: PolicyHandle,
    scenario: RoomScenario,
    n_seeds: int,
    horizon: int = 200,
    params: Optional[SimulationParams] = None,
    base_seed: int = 0,
    policy: Optional[BasePolicy] = None,
) -> List[EvalReport]:
    """
    Evaluate a policy over ``n_seeds`` spawn seeds of one scenario.

    Seed i respawns the pedestrians with ``base_seed + i``; the rainbow
    policy runs with zeroed noise.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be positive")
    policy = policy or PolicyFactory.create(handle)
    return [
        run_episode(policy, scenario.model_copy(update={"seed": base_seed + i}), horizon, params)
        for i in range(n_seeds)
    ]


def run_evaluation(
    handle: PolicyHandle,
    scenario: RoomScenario,
    n_seeds: int,
    out_dir: str | Path,
    horizon: int = 200,
    params: Optional[SimulationParams] = None,
    base_seed: int = 0,
) -> List[EvalReport]:
    """
    Evaluation pipeline writing the run directory.

    Pipeline:
    1. Run every seed
    2. metrics.csv with one row per seed
    3. summary.csv with per-(scenario, policy) means
    4. traces/seed_N.json for later rendering
    """
    store = RunStore(out_dir)
    store.ensure_dir()
    reports = evaluate(handle, scenario, n_seeds, horizon, params, base_seed)
    metrics = metrics_frame(reports)
    store.write_metrics(metrics)
    store.write_summary(summarize(metrics))
    for report in reports:
        store.write_trace(report)
    logger.info(
        "Evaluation complete",
        out=str(store.root),
        policy=handle.kind.value,
        runs=len(reports),
        mean_frames=float(metrics["total_frames"].mean()),
    )
    return reports


def _family_variants(family: ScenarioFamily) -> List[Dict[str, object]]:
    if family is ScenarioFamily.WIDTH_RATIO:
        return [{"width_ratio": v} for v in WIDTH_RATIOS]
    if family is ScenarioFamily.DISTRIBUTION_RATIO:
        return [{"distribution_ratio": v} for v in DISTRIBUTION_RATIOS]
    return [{"open_frame": v} for v in OPEN_FRAMES]


def _variant_label(variant: Dict[str, object]) -> str:
    key, value = next(iter(variant.items()))
    if key == "width_ratio":
        return f"1:{value:g}"
    if key == "distribution_ratio":
        return f"{value[0]}:{value[1]}"
    return f"open{value}"


def compare(
    checkpoint: Optional[str],
    out_dir: str | Path,
    n_seeds: int = 10,
    pedestrian_counts: Sequence[int] = (12, 24, 36),
    families: Iterable[ScenarioFamily] = tuple(ScenarioFamily),
    horizon: int = 200,
    params: Optional[SimulationParams] = None,
    base: Optional[ScenarioParams] = None,
    base_seed: int = 0,
) -> pd.DataFrame:
    """
    Every policy over every family variant and pedestrian count.

    The rainbow policy joins the grid only when a checkpoint is given.
    r_util is left empty for the delayed-open family.
    """
    base = base or ScenarioParams()
    kinds = [k for k in PolicyKind if k is not PolicyKind.RAINBOW]
    handles = [PolicyHandle(kind=k) for k in kinds]
    if checkpoint:
        handles.insert(0, PolicyHandle(kind=PolicyKind.RAINBOW, checkpoint=checkpoint))
    policies = [(h, PolicyFactory.create(h)) for h in handles]

    rows: List[Dict[str, object]] = []
    for family in families:
        family = ScenarioFamily(family)
        for variant in _family_variants(family):
            for m in pedestrian_counts:
                try:
                    scenario = build_scenario(
                        family,
                        base.model_copy(update={"pedestrian_count": m, **variant}),
                        seed=base_seed,
                    )
                except ScenarioError as e:
                    logger.warning("Skipping scenario", family=family.value, m=m, reason=e.message)
                    continue
                for handle, policy in policies:
                    reports = evaluate(handle, scenario, n_seeds, horizon, params, base_seed, policy)
                    frames = [r.total_frames for r in reports]
                    utils = [r.r_util for r in reports]
                    rows.append({
                        "family": family.value,
                        "variant": _variant_label(variant),
                        "m": m,
                        "policy": policy.policy_name,
                        "runs": len(reports),
                        "total_frames": sum(frames) / len(frames),
                        "r_util": (
                            None if family is ScenarioFamily.DELAYED_OPEN
                            else sum(utils) / len(utils)
                        ),
                    })

    comparison = pd.DataFrame(rows, columns=COMPARISON_COLUMNS)
    RunStore(out_dir).write_comparison(comparison)
    return comparison


def render_run(
    run_dir: str | Path,
    interval: Optional[int] = None,
    png: bool = False,
    size: Optional[int] = None,
) -> pd.DataFrame:
    """
    Dump scene frames of every stored trace and a per-run CSV.

    Writes ``frames/seed_N/frame_XXXX.pgm`` (and ``.png`` when asked) plus
    ``frames/runs.csv``. Without an explicit ``interval`` each run uses its
    family default: every 15 frames for delayed_open, every 10 otherwise.
    """
    store = RunStore(run_dir)
    reports = store.read_traces()
    size = size or SimulationParams().raster_size
    written = 0
    for report in reports:
        frame_dir = store.frames_dir(f"seed_{report.seed}")
        for frame, raster in render_report(report, interval, size).items():
            write_pgm(frame_dir / f"frame_{frame:04d}.pgm", raster)
            if png:
                write_png(frame_dir / f"frame_{frame:04d}.png", raster)
            written += 1

    runs = metrics_frame(reports)
    store.write_runs(runs)
    logger.info("Frames rendered", run=str(store.root), frames=written, runs=len(reports))
    return runs

"""Run Directory Repository"""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List

import pandas as pd

from app.core.exceptions import OutputError
from app.core.logging import get_logger
from app.repositories.base import FileRepository
from app.schemas.report import EvalReport

logger = get_logger(__name__)

TRAIN_LOG_COLUMNS = [
    "env_frame",
    "update_index",
    "mean_loss",
    "mean_q",
    "buffer_size",
    "episodes_done",
    "mean_episode_frames",
]


class RunStore(FileRepository):
    """
    Files of one run directory:
    metrics.csv, summary.csv, comparison.csv, train_log.csv, traces/, frames/.
    """

    def _write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.root / name
        self.ensure_dir(*Path(name).parent.parts)
        try:
            frame.to_csv(path, index=False)
        except OSError as e:
            raise OutputError(str(path), e.strerror or str(e))
        logger.info("Table written", path=str(path), rows=len(frame))
        return path

    def write_metrics(self, metrics: pd.DataFrame) -> Path:
        return self._write_frame("metrics.csv", metrics)

    def write_summary(self, summary: pd.DataFrame) -> Path:
        return self._write_frame("summary.csv", summary)

    def write_comparison(self, comparison: pd.DataFrame) -> Path:
        return self._write_frame("comparison.csv", comparison)

    def write_runs(self, runs: pd.DataFrame) -> Path:
        return self._write_frame("frames/runs.csv", runs)

    def read_metrics(self) -> pd.DataFrame:
        return pd.read_csv(self.root / "metrics.csv")

    @property
    def train_log_path(self) -> Path:
        return self.root / "train_log.csv"

    def reset_train_log(self) -> None:
        self.ensure_dir()
        pd.DataFrame(columns=TRAIN_LOG_COLUMNS).to_csv(self.train_log_path, index=False)

    def append_train_log(self, rows: Iterable[Dict[str, Any]]) -> None:
        """Append rows, writing the header when the log does not exist yet."""
        frame = pd.DataFrame(list(rows), columns=TRAIN_LOG_COLUMNS)
        if frame.empty:
            return
        self.ensure_dir()
        exists = self.train_log_path.exists()
        try:
            frame.to_csv(self.train_log_path, mode="a", header=not exists, index=False)
        except OSError as e:
            raise OutputError(str(self.train_log_path), e.strerror or str(e))

    def read_train_log(self) -> pd.DataFrame:
        return pd.read_csv(self.train_log_path)

    def truncate_train_log(self, env_frame: int) -> None:
        """Drop rows past ``env_frame`` (used when resuming)."""
        if not self.train_log_path.exists():
            return
        log = self.read_train_log()
        log[log["env_frame"] <= env_frame].to_csv(self.train_log_path, index=False)

    def write_config(self, payload: Dict[str, Any]) -> Path:
        self.ensure_dir()
        return self.write_text(self.root / "config.json", json.dumps(payload, indent=2, sort_keys=True))

    def trace_path(self, seed: int) -> Path:
        return self.root / "traces" / f"seed_{seed}.json"

    def write_trace(self, report: EvalReport) -> Path:
        self.ensure_dir("traces")
        return self.write_text(self.trace_path(report.seed), report.model_dump_json())

    def read_traces(self) -> List[EvalReport]:
        """Every stored run, in seed order."""
        trace_dir = self.root / "traces"
        if not trace_dir.is_dir():
            raise OutputError(str(trace_dir), "run has no traces")
        paths = sorted(trace_dir.glob("seed_*.json"), key=lambda p: int(p.stem.split("_")[1]))
        return [EvalReport.model_validate_json(p.read_text(encoding="utf-8")) for p in paths]

    def frames_dir(self, *parts: str) -> Path:
        return self.ensure_dir("frames", *parts)

# Run directories: config snapshot, training data, draws and derived tables
import json
import re
import uuid
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict

from app.config import settings
from app.models.config import RUN_ID_PATTERN, RunConfig
from app.models.dataset import Dataset, Transform
from app.models.posterior import PosteriorDraws
from app.models.spec import ModelDesign, ModelSpec
from app.services.ingest_service import assemble_dataset, dataset_frames
from app.services.model import build_design, build_layout
from app.services.sampler_service import (
    chain_statistics,
    draws_frame,
    draws_from_frame,
    stats_from_frame,
)
from app.utils.errors import InputValidationError
from app.utils.logging import logger

CONFIG_FILE = "config.json"
MODEL_FILE = "model.json"
MAXIMA_FILE = "maxima.csv"
COVARIATES_FILE = "covariates.csv"
DRAWS_FILE = "draws.csv"
STATS_FILE = "sampler_stats.csv"


def valid_run_id(run_id: str) -> bool:
    return re.fullmatch(RUN_ID_PATTERN, run_id) is not None


class StoredRun(BaseModel):
    """Everything needed to recompute derived outputs of a finished fit."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    run_dir: Path
    config: RunConfig
    spec: ModelSpec
    dataset: Dataset
    design: ModelDesign
    draws: PosteriorDraws


class RunStore:
    def __init__(self, root: Optional[Path] = None):
        self.root = Path(root if root is not None else settings.RUNS_DIR)

    def create_run(self, run_id: Optional[str] = None) -> Path:
        """Create ``root/run_id`` (a fresh timestamped id when none is given)."""
        if run_id is None:
            run_id = f"{datetime.now():%Y%m%d-%H%M%S}-{uuid.uuid4().hex[:8]}"
        elif not valid_run_id(run_id):
            raise InputValidationError(f"invalid run id '{run_id}': use letters, digits, '.', '_' or '-'")
        run_dir = self.root / run_id
        run_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"run directory {run_dir}")
        return run_dir

    def run_path(self, run_id: str) -> Path:
        if not valid_run_id(run_id):
            raise FileNotFoundError(f"no stored fit '{run_id}'")
        run_dir = self.root / run_id
        if not (run_dir / MODEL_FILE).is_file():
            raise FileNotFoundError(f"no stored fit '{run_id}'")
        return run_dir

    def list_runs(self) -> List[Dict[str, Any]]:
        if not self.root.is_dir():
            return []
        runs = []
        for run_dir in sorted(p for p in self.root.iterdir() if (p / MODEL_FILE).is_file()):
            document = self.read_json(run_dir, MODEL_FILE)
            runs.append(
                {
                    "run_id": run_dir.name,
                    "model": document["spec"]["family"],
                    "covariates": document["spec"]["covariates"],
                    "n_stations": len(document.get("station_ids", [])),
                }
            )
        return runs

    @staticmethod
    def write_json(run_dir: Path, name: str, document: Any) -> Path:
        path = Path(run_dir) / name
        if isinstance(document, BaseModel):
            text = document.model_dump_json(indent=2)
        else:
            text = json.dumps(document, indent=2, sort_keys=True)
        path.write_text(text + "\n", encoding="utf-8")
        return path

    @staticmethod
    def read_json(run_dir: Path, name: str) -> Any:
        return json.loads((Path(run_dir) / name).read_text(encoding="utf-8"))

    @staticmethod
    def write_frame(run_dir: Path, name: str, frame: pd.DataFrame) -> Path:
        path = Path(run_dir) / name
        frame.to_csv(path, index=False, encoding="utf-8")
        return path

    @staticmethod
    def read_frame(run_dir: Path, name: str) -> pd.DataFrame:
        return pd.read_csv(
            Path(run_dir) / name, dtype={"station_id": str}, encoding="utf-8", float_precision="round_trip"
        )

    def save_fit(
        self,
        run_dir: Path,
        config: RunConfig,
        spec: ModelSpec,
        dataset: Dataset,
        draws: PosteriorDraws,
    ) -> None:
        """Persist the inputs and raw draws of a fit; derived tables are written separately."""
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        self.write_json(run_dir, CONFIG_FILE, config)
        self.write_json(
            run_dir,
            MODEL_FILE,
            {
                "spec": spec.model_dump(mode="json"),
                "transforms": {n: t.value for n, t in zip(dataset.covariate_names, dataset.standardization.transforms)},
                "station_ids": dataset.station_ids,
            },
        )
        maxima, covariates = dataset_frames(dataset)
        self.write_frame(run_dir, MAXIMA_FILE, maxima)
        self.write_frame(run_dir, COVARIATES_FILE, covariates)
        self.write_frame(run_dir, DRAWS_FILE, draws_frame(draws))
        self.write_frame(run_dir, STATS_FILE, chain_statistics(draws))

    def load_fit(self, run_dir: Path) -> StoredRun:
        run_dir = Path(run_dir)
        config = RunConfig.model_validate(self.read_json(run_dir, CONFIG_FILE))
        document = self.read_json(run_dir, MODEL_FILE)
        spec = ModelSpec.model_validate(document["spec"])
        transforms = {name: Transform(t) for name, t in document["transforms"].items()}
        dataset = assemble_dataset(
            self.read_frame(run_dir, MAXIMA_FILE), self.read_frame(run_dir, COVARIATES_FILE), transforms
        )
        layout = build_layout(spec, dataset.S)
        draws = draws_from_frame(
            self.read_frame(run_dir, DRAWS_FILE), layout, stats_from_frame(self.read_frame(run_dir, STATS_FILE))
        )
        return StoredRun(
            run_dir=run_dir,
            config=config,
            spec=spec,
            dataset=dataset,
            design=build_design(spec, dataset.X),
            draws=draws,
        )


# Global run store rooted at settings.RUNS_DIR
run_store = RunStore()

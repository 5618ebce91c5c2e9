"""Reading maxima and covariate tables into a standardized ``Dataset``."""

from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.models.dataset import Dataset, DroppedRow, IngestionReport, StandardizationRecord, Transform
from app.utils.errors import InputValidationError, IngestErrorCode
from app.utils.logging import logger

MAXIMA_COLUMNS = ("station_id", "year", "maximum")

# called as hook(purpose, station_id) whenever a station's data is read
AccessHook = Callable[[str, str], None]


def standardize_covariates(
    X_raw: np.ndarray, names: Sequence[str], transforms: Sequence[Transform]
) -> Tuple[np.ndarray, StandardizationRecord]:
    X_raw = np.atleast_2d(np.asarray(X_raw, dtype=float))
    if X_raw.shape[1] != len(names) or len(names) != len(transforms):
        raise ValueError("covariate names, transforms and columns must line up")
    means, sds = [], []
    for j, (name, transform) in enumerate(zip(names, transforms)):
        column = X_raw[:, j]
        if Transform(transform) == Transform.LOG:
            if np.any(column <= 0):
                raise InputValidationError(
                    f"log transform of nonpositive value in covariate '{name}'",
                    IngestErrorCode.LOG_NONPOSITIVE,
                )
            column = np.log(column)
        sd = float(np.std(column, ddof=1)) if column.size > 1 else 0.0
        if not sd > 0:
            raise InputValidationError(
                f"covariate '{name}' is constant", IngestErrorCode.CONSTANT_COVARIATE
            )
        means.append(float(np.mean(column)))
        sds.append(sd)
    record = StandardizationRecord(
        names=list(names), transforms=[Transform(t) for t in transforms], means=means, sds=sds
    )
    return record.apply(X_raw), record


def _require_columns(frame: pd.DataFrame, columns: Sequence[str], source: str) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise InputValidationError(f"{source} lacks column(s) {missing}", IngestErrorCode.MISSING_COLUMN)


def read_maxima(path: Path) -> Tuple[pd.DataFrame, List[DroppedRow]]:
    frame = pd.read_csv(path, dtype={"station_id": str}, encoding="utf-8", float_precision="round_trip")
    _require_columns(frame, MAXIMA_COLUMNS, str(path))
    dropped: List[DroppedRow] = []

    blank = frame["maximum"].isna()
    for idx in np.flatnonzero(blank):
        dropped.append(
            DroppedRow(source="maxima", row=int(idx), station_id=frame["station_id"].iloc[idx], reason="missing maximum")
        )
    frame = frame[~blank]

    values = pd.to_numeric(frame["maximum"], errors="coerce")
    bad = ~np.isfinite(values) | (values <= 0)
    if bad.any():
        first = frame[bad].iloc[0]
        raise InputValidationError(
            f"nonpositive or non-finite maximum {first['maximum']} for station {first['station_id']} "
            f"in {int(first['year'])}",
            IngestErrorCode.NONPOSITIVE_MAXIMUM,
        )
    duplicated = frame.duplicated(["station_id", "year"], keep=False)
    if duplicated.any():
        first = frame[duplicated].iloc[0]
        raise InputValidationError(
            f"duplicate key (station_id={first['station_id']}, year={int(first['year'])})",
            IngestErrorCode.DUPLICATE_KEY,
        )
    frame = frame.assign(maximum=values.astype(float), year=frame["year"].astype(int))
    return frame, dropped


def read_covariates(path: Path) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={"station_id": str}, encoding="utf-8", float_precision="round_trip")
    _require_columns(frame, ["station_id"], str(path))
    if frame["station_id"].duplicated().any():
        station = frame.loc[frame["station_id"].duplicated(), "station_id"].iloc[0]
        raise InputValidationError(
            f"duplicate covariate row for station {station}", IngestErrorCode.DUPLICATE_KEY
        )
    return frame


def assemble_dataset(
    maxima: pd.DataFrame,
    covariates: pd.DataFrame,
    transforms: Dict[str, Transform],
    access_hook: Optional[AccessHook] = None,
    purpose: str = "load",
) -> Dataset:
    """Join maxima with covariates, standardize, and index stations in sorted id order."""
    names = list(transforms)
    _require_columns(covariates, names, "covariates")
    station_ids = sorted(maxima["station_id"].unique())
    if not station_ids:
        raise InputValidationError("no maxima left after ingestion")
    known = set(covariates["station_id"])
    missing = [s for s in station_ids if s not in known]
    if missing:
        raise InputValidationError(
            f"no covariates for station(s) {missing[:5]}", IngestErrorCode.MISSING_COVARIATES
        )
    if access_hook is not None:
        for station in station_ids:
            access_hook(purpose, station)

    cov = covariates.set_index("station_id").loc[station_ids, names]
    if cov.isna().any().any():
        station = cov.index[cov.isna().any(axis=1)][0]
        raise InputValidationError(
            f"missing covariate value for station {station}", IngestErrorCode.MISSING_COVARIATES
        )
    X_raw = cov.to_numpy(float)
    X, record = standardize_covariates(X_raw, names, [transforms[n] for n in names])

    ordered = maxima.sort_values(["station_id", "year"])
    position = {s: i for i, s in enumerate(station_ids)}
    return Dataset(
        station_ids=station_ids,
        y=ordered["maximum"].to_numpy(float),
        station_index=ordered["station_id"].map(position).to_numpy(int),
        years=ordered["year"].to_numpy(int),
        X=X,
        X_raw=X_raw,
        standardization=record,
    )


def load_dataset(
    maxima_path: Path, covariates_path: Path, transforms: Dict[str, Transform]
) -> Tuple[Dataset, IngestionReport]:
    maxima, dropped = read_maxima(Path(maxima_path))
    covariates = read_covariates(Path(covariates_path))
    with_maxima = set(maxima["station_id"])
    for idx, station in enumerate(covariates["station_id"]):
        if station not in with_maxima:
            dropped.append(DroppedRow(source="covariates", row=idx, station_id=station, reason="no maxima"))
    dataset = assemble_dataset(maxima, covariates, transforms)
    report = IngestionReport(
        n_stations=dataset.S,
        n_maxima=dataset.N,
        blocks_per_station={s: int(t) for s, t in zip(dataset.station_ids, dataset.T)},
        dropped=dropped,
        rows_read={"maxima": int(len(maxima) + sum(d.source == "maxima" for d in dropped)), "covariates": int(len(covariates))},
    )
    logger.info(f"loaded {dataset.S} stations, {dataset.N} maxima, {len(dropped)} row(s) dropped")
    return dataset, report


def dataset_frames(dataset: Dataset) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Maxima and raw covariate tables of a dataset, in the on-disk layout."""
    maxima = pd.DataFrame(
        {
            "station_id": np.asarray(dataset.station_ids)[dataset.station_index],
            "year": dataset.years,
            "maximum": dataset.y,
        }
    )
    covariates = pd.DataFrame(dataset.X_raw, columns=dataset.covariate_names)
    covariates.insert(0, "station_id", dataset.station_ids)
    return maxima, covariates


def subset_dataset(
    dataset: Dataset,
    station_ids: Sequence[str],
    access_hook: Optional[AccessHook] = None,
    purpose: str = "standardize",
) -> Dataset:
    """Restrict to ``station_ids`` and recompute the standardization on them alone."""
    maxima, covariates = dataset_frames(dataset)
    keep = set(station_ids)
    transforms = dict(zip(dataset.covariate_names, dataset.standardization.transforms))
    return assemble_dataset(
        maxima[maxima["station_id"].isin(keep)],
        covariates[covariates["station_id"].isin(keep)],
        transforms,
        access_hook=access_hook,
        purpose=purpose,
    )

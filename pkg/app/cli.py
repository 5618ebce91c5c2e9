"""Command-line surface: simulate, fit, predict, cv, diagnose, serve.

Exit codes: 0 success, 1 validation error, 2 sampling failure, 3 partial
cross-validation.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from app.config import settings
from app.models.config import RunConfig
from app.models.diagnostics import FoldStatus
from app.models.spec import ModelFamily
from app.services.cv_service import CrossValidationService, partition_folds
from app.services.fit_service import FitService
from app.services.ingest_service import load_dataset
from app.services.simulation import EffectShape, SimulationSettings, simulate_basin, write_basin
from app.storage import RunStore
from app.utils.errors import InputValidationError, SamplingError
from app.utils.logging import logger

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SAMPLING = 2
EXIT_PARTIAL_CV = 3


class ConfigError(InputValidationError):
    pass


def _emit(document: Any) -> None:
    sys.stdout.write(json.dumps(document, indent=2, sort_keys=True, default=str) + "\n")


def load_config(
    path: Optional[Path], overrides: Dict[str, Any], cv_overrides: Optional[Dict[str, Any]] = None
) -> RunConfig:
    """Parse and validate a run config; relative data paths resolve against the config's folder."""
    document: Dict[str, Any] = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        base = path.parent
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found")
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}")
    document.update({k: v for k, v in overrides.items() if v is not None})
    if cv_overrides:
        document["cv"] = {**document.get("cv", {}), **cv_overrides}
    try:
        config = RunConfig.model_validate(document)
    except ValidationError as e:
        problems = [f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()]
        raise ConfigError("invalid config: " + "; ".join(problems))
    updates = {}
    for name in ("maxima_path", "covariates_path"):
        value = getattr(config, name)
        if value is not None and not value.is_absolute():
            updates[name] = base / value
    return config.model_copy(update=updates)


def _with_seed(config: RunConfig, seed: Optional[int]) -> RunConfig:
    if seed is None:
        return config
    return config.model_copy(
        update={
            "seed": seed,
            "sampler": config.sampler.model_copy(update={"seed": seed}),
            "station_sampler": config.station_sampler.model_copy(update={"seed": seed}),
            "cv": config.cv.model_copy(update={"seed": seed}),
        }
    )


def _common_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if getattr(args, "model", None):
        overrides["model"] = args.model
    if getattr(args, "return_periods", None):
        overrides["return_periods"] = args.return_periods
    return overrides


def cmd_simulate(args: argparse.Namespace) -> int:
    simulation = SimulationSettings(
        S=args.stations,
        T=args.years,
        M=args.covariates,
        effects=EffectShape(args.effects),
        n_active=args.active,
        seed=args.seed if args.seed is not None else 0,
    )
    basin = simulate_basin(simulation)
    out = Path(args.out)
    paths = write_basin(basin, out)
    starter = {
        "maxima_path": paths["maxima"].name,
        "covariates_path": paths["covariates"].name,
        "transforms": {name: "identity" for name in basin.covariates.columns[1:]},
    }
    (out / "config.json").write_text(json.dumps(starter, indent=2) + "\n", encoding="utf-8")
    _emit({name: str(path) for name, path in paths.items()})
    return EXIT_OK


def _target_dir(args: argparse.Namespace, config: RunConfig) -> Path:
    """``--out`` when given, else a fresh run directory under the config's output_dir."""
    if args.out is not None:
        return Path(args.out)
    return RunStore(config.output_dir).create_run()


def cmd_fit(args: argparse.Namespace) -> int:
    config = _with_seed(load_config(args.config, _common_overrides(args)), args.seed)
    config.require_inputs()
    run_dir = _target_dir(args, config)
    summary = FitService(config, store=RunStore(run_dir.parent)).run(run_dir)
    _emit(summary.model_dump(mode="json"))
    return EXIT_OK


def cmd_diagnose(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    report = FitService.diagnose(run_dir, RunStore(run_dir.parent))
    _emit({"run_dir": str(run_dir), "looic": report.looic, "pval_band": report.pval_band})
    return EXIT_OK


def _parse_covariates(items: List[str]) -> Dict[str, float]:
    values = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"covariate '{item}' must be written as name=value")
        try:
            values[name] = float(value)
        except ValueError:
            raise ConfigError(f"covariate '{name}' has non-numeric value '{value}'")
    return values


def cmd_predict(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    try:
        sp, rl = FitService.predict(
            run_dir,
            _parse_covariates(args.covariate),
            seed=args.seed if args.seed is not None else 0,
            periods=args.return_periods,
            store=RunStore(run_dir.parent),
        )
    except KeyError as e:
        raise ConfigError(str(e))
    _emit(
        {
            "station_id": sp.station_id,
            "clamped": sp.clamped,
            "mu_mean": float(sp.mu.mean()),
            "sigma_mean": float(sp.sigma.mean()),
            "xi_mean": float(sp.xi.mean()),
            "return_levels": [
                {"R": R, "mean": rl.mean[i], "q05": rl.q05[i], "q95": rl.q95[i]} for i, R in enumerate(rl.periods)
            ],
        }
    )
    return EXIT_OK


def cmd_cv(args: argparse.Namespace) -> int:
    overrides = _common_overrides(args)
    if args.models:
        overrides["models"] = args.models
    cv_overrides = {}
    if args.folds is not None:
        cv_overrides["folds"] = args.folds
    if args.benchmark:
        cv_overrides["benchmark"] = args.benchmark
    config = _with_seed(load_config(args.config, overrides, cv_overrides), args.seed)
    config.require_inputs()

    dataset, _ = load_dataset(config.maxima_path, config.covariates_path, config.transforms)
    plan = partition_folds(dataset.station_ids, config.cv.folds, config.cv.seed)
    out_dir = _target_dir(args, config)
    result = CrossValidationService(config, store=RunStore(out_dir.parent)).run_cv(
        dataset, config.models, plan, out_dir=out_dir
    )
    _emit(
        {
            "status": result.status.value,
            "folds": plan.G,
            "output_dir": str(out_dir),
            "failed_folds": [f.fold for f in result.folds if f.status != FoldStatus.SUCCESS],
        }
    )
    if result.status == FoldStatus.FAILED:
        return EXIT_SAMPLING
    if result.status == FoldStatus.PARTIAL:
        return EXIT_PARTIAL_CV
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    from app.main import serve

    serve(host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gevflood", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    families = [f.value for f in ModelFamily]

    p = sub.add_parser("simulate", help="write a synthetic basin")
    p.add_argument("--stations", type=int, default=20)
    p.add_argument("--years", type=int, default=30)
    p.add_argument("--covariates", type=int, default=4)
    p.add_argument("--active", type=int, default=2)
    p.add_argument("--effects", choices=[e.value for e in EffectShape], default=EffectShape.NONLINEAR.value)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("fit", help="fit one model family on the full data")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--model", choices=families)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--return-periods", type=float, nargs="+")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("predict", help="predict an ungauged station from a stored fit")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--covariate", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--seed", type=int)
    p.add_argument("--return-periods", type=float, nargs="+")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("cv", help="station-holdout cross-validation")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--models", choices=families, nargs="+")
    p.add_argument("--folds", type=int)
    p.add_argument("--benchmark", choices=families)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--return-periods", type=float, nargs="+")
    p.set_defaults(handler=cmd_cv)

    p = sub.add_parser("diagnose", help="recompute diagnostics from stored draws")
    p.add_argument("--run", type=Path, required=True)
    p.set_defaults(handler=cmd_diagnose)

    p = sub.add_parser("serve", help="start the HTTP API")
    p.add_argument("--host", default=settings.API_HOST)
    p.add_argument("--port", type=int, default=settings.API_PORT)
    p.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (InputValidationError, ValueError, FileNotFoundError) as e:
        logger.error(f"validation failed: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_VALIDATION
    except SamplingError as e:
        logger.error(f"sampling failed: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_SAMPLING


if __name__ == "__main__":
    sys.exit(main())

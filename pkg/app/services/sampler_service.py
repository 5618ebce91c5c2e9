"""NUTS sampling over a flat unconstrained vector, plus convergence statistics.

Each chain runs its own numpyro ``MCMC`` with key ``seed + chain`` so results
do not depend on how chains are scheduled. Warmup adapts the step size by dual
averaging and a diagonal mass matrix over expanding windows (numpyro defaults).
"""

from typing import Callable, Dict, List, Optional, Sequence

import jax
import jax.numpy as jnp
import numpy as np
import pandas as pd
from numpyro.diagnostics import effective_sample_size, split_gelman_rubin
from numpyro.infer import MCMC, NUTS
from numpyro.infer.hmc_util import euclidean_kinetic_energy, velocity_verlet

from app.models.dataset import Dataset
from app.models.posterior import PosteriorDraws
from app.models.spec import ModelDesign, ModelSpec, ParamLayout, SamplerConfig
from app.services.gev import LOG_ZERO
from app.services.model import GevRegressionModel
from app.utils.errors import SamplingError
from app.utils.logging import logger

EXTRA_FIELDS = ("diverging", "num_steps", "adapt_state.step_size", "potential_energy")

LogDensity = Callable[[jnp.ndarray], jnp.ndarray]


def _usable(value: float) -> bool:
    return np.isfinite(value) and value > LOG_ZERO / 2


class SamplerService:
    def __init__(self, config: SamplerConfig):
        self.config = config

    def initial_position(
        self,
        log_density: LogDensity,
        base: np.ndarray,
        jitter_scale: np.ndarray,
        chain: int,
    ) -> np.ndarray:
        """Jitter ``base`` uniformly until the log density is usable.

        The jitter half-width starts at ``initial_jitter`` and halves after
        every rejected attempt.
        """
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, chain])
        width = cfg.initial_jitter
        for attempt in range(cfg.max_init_attempts):
            candidate = base + width * jitter_scale * rng.uniform(-1.0, 1.0, size=base.shape)
            value = float(log_density(jnp.asarray(candidate)))
            if _usable(value):
                if attempt:
                    logger.debug(f"chain {chain}: usable start after {attempt + 1} attempts")
                return candidate
            width *= 0.5
        raise SamplingError(
            f"no finite starting point for chain {chain} after {cfg.max_init_attempts} attempts"
        )

    def run(
        self,
        log_density: LogDensity,
        base: np.ndarray,
        jitter_scale: Optional[np.ndarray] = None,
        layout: Optional[ParamLayout] = None,
    ) -> PosteriorDraws:
        cfg = self.config
        base = np.asarray(base, dtype=float)
        if jitter_scale is None:
            jitter_scale = np.ones_like(base)
        if layout is None:
            layout = ParamLayout.model_validate(
                {"blocks": {"x": {"start": 0, "stop": base.size, "shape": (base.size,)}}}
            )

        def potential_fn(z):
            return -log_density(z)

        chains, stats = [], []
        for chain in range(cfg.n_chains):
            start = self.initial_position(log_density, base, jitter_scale, chain)
            kernel = NUTS(
                potential_fn=potential_fn,
                target_accept_prob=cfg.target_accept,
                max_tree_depth=cfg.max_tree_depth,
            )
            mcmc = MCMC(
                kernel,
                num_warmup=cfg.n_warmup,
                num_samples=cfg.n_draws,
                num_chains=1,
                progress_bar=False,
            )
            mcmc.run(
                jax.random.PRNGKey(cfg.seed + chain),
                init_params=jnp.asarray(start),
                extra_fields=EXTRA_FIELDS,
            )
            samples = np.asarray(mcmc.get_samples())
            extra = mcmc.get_extra_fields()
            if not np.all(np.isfinite(samples)):
                raise SamplingError(f"chain {chain} produced non-finite draws")
            chains.append(samples.reshape(cfg.n_draws, base.size))
            stats.append({key: np.asarray(value) for key, value in extra.items()})
            logger.info(
                f"chain {chain}: {int(np.sum(extra['diverging']))} divergences, "
                f"step size {float(np.asarray(extra['adapt_state.step_size'])[-1]):.4g}"
            )

        num_steps = np.stack([s["num_steps"] for s in stats])
        return PosteriorDraws(
            draws=np.stack(chains),
            layout=layout,
            log_joint=-np.stack([s["potential_energy"] for s in stats]),
            divergences=np.stack([s["diverging"] for s in stats]).astype(bool),
            # a tree of depth d holds 2^d - 1 leapfrog steps
            tree_depth=np.ceil(np.log2(num_steps + 1)).astype(int),
            step_size=np.array([float(s["adapt_state.step_size"][-1]) for s in stats]),
        )


def sample(spec: ModelSpec, data: Dataset, design: ModelDesign, cfg: SamplerConfig) -> PosteriorDraws:
    model = GevRegressionModel(spec, data, design)
    logger.info(
        f"sampling {spec.family.value} model: S={data.S}, N={data.N}, M={spec.M}, dim={model.dim}, "
        f"{cfg.n_chains} chains x {cfg.n_warmup}+{cfg.n_draws}"
    )
    draws = SamplerService(cfg).run(
        model.log_density,
        model.base_position(),
        model.jitter_mask().astype(float),
        layout=model.layout,
    )
    if draws.divergence_count:
        logger.warning(f"{draws.divergence_count} divergent transitions after warmup")
    return draws


def _check_chains(x: np.ndarray, min_chains: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected draws shaped (chains, draws)")
    if x.shape[0] < min_chains:
        raise ValueError(f"at least {min_chains} chains are required")
    if x.shape[1] < 4:
        raise ValueError("at least 4 draws per chain are required")
    return x


def rhat(x: np.ndarray) -> float:
    """Split-chain potential scale reduction of one coordinate, (chains, draws)."""
    x = _check_chains(x, 2)
    if np.all(np.var(x, axis=1) == 0):
        logger.warning("rhat undefined for constant chains")
        return float("nan")
    return float(split_gelman_rubin(x))


def ess(x: np.ndarray) -> float:
    """Effective sample size of one coordinate, (chains, draws)."""
    x = _check_chains(x, 1)
    if np.all(np.var(x, axis=1) == 0):
        logger.warning("ess undefined for constant chains")
        return float("nan")
    return float(effective_sample_size(x))


def summarize_draws(draws: PosteriorDraws) -> pd.DataFrame:
    """Per-coordinate mean, sd, 5/50/95% quantiles, rhat and ess."""
    rows = []
    for j, label in enumerate(draws.layout.coordinate_labels()):
        x = draws.draws[:, :, j]
        q05, q50, q95 = np.quantile(x, [0.05, 0.5, 0.95])
        rows.append(
            {
                "parameter": label,
                "mean": float(np.mean(x)),
                "sd": float(np.std(x, ddof=1)),
                "q05": float(q05),
                "q50": float(q50),
                "q95": float(q95),
                "rhat": rhat(x) if draws.n_chains >= 2 and draws.n_draws >= 4 else float("nan"),
                "ess": ess(x) if draws.n_draws >= 4 else float("nan"),
            }
        )
    return pd.DataFrame(rows)


def leapfrog_energies(
    log_density: LogDensity,
    position: np.ndarray,
    momentum: np.ndarray,
    step_size: float,
    n_steps: int,
) -> np.ndarray:
    """Hamiltonian along one leapfrog trajectory with unit mass, starting point included."""

    def potential_fn(z):
        return -log_density(z)

    inverse_mass = jnp.ones(len(position))
    vv_init, vv_update = velocity_verlet(potential_fn, euclidean_kinetic_energy)
    state = vv_init(jnp.asarray(position, dtype=float), jnp.asarray(momentum, dtype=float))
    energies: List[float] = []
    for _ in range(n_steps + 1):
        energies.append(float(state.potential_energy + euclidean_kinetic_energy(inverse_mass, state.r)))
        state = vv_update(step_size, inverse_mass, state)
    return np.array(energies[: n_steps + 1])


def chain_statistics(draws: PosteriorDraws) -> pd.DataFrame:
    """Long table of the per-draw sampler statistics."""
    C, D = draws.divergences.shape
    return pd.DataFrame(
        {
            "chain": np.repeat(np.arange(C), D),
            "draw": np.tile(np.arange(D), C),
            "log_joint": draws.log_joint.ravel(),
            "diverging": draws.divergences.ravel(),
            "tree_depth": draws.tree_depth.ravel(),
            "step_size": np.repeat(draws.step_size, D),
        }
    )


def stats_from_frame(frame: pd.DataFrame) -> Dict[str, np.ndarray]:
    C = int(frame["chain"].max()) + 1
    D = int(frame["draw"].max()) + 1
    return {
        "log_joint": frame["log_joint"].to_numpy(float).reshape(C, D),
        "divergences": frame["diverging"].to_numpy(bool).reshape(C, D),
        "tree_depth": frame["tree_depth"].to_numpy(int).reshape(C, D),
        "step_size": frame["step_size"].to_numpy(float).reshape(C, D)[:, 0],
    }


def draws_frame(draws: PosteriorDraws) -> pd.DataFrame:
    C, D, dim = draws.draws.shape
    frame = pd.DataFrame(draws.draws.reshape(C * D, dim), columns=draws.layout.coordinate_labels())
    frame.insert(0, "draw", np.tile(np.arange(D), C))
    frame.insert(0, "chain", np.repeat(np.arange(C), D))
    return frame


def draws_from_frame(frame: pd.DataFrame, layout: ParamLayout, stats: Dict[str, np.ndarray]) -> PosteriorDraws:
    labels: Sequence[str] = layout.coordinate_labels()
    missing = [label for label in labels if label not in frame.columns]
    if missing:
        raise ValueError(f"draws file lacks coordinates: {missing[:3]}")
    C = int(frame["chain"].max()) + 1
    D = int(frame["draw"].max()) + 1
    ordered = frame.sort_values(["chain", "draw"])
    return PosteriorDraws(
        draws=ordered[list(labels)].to_numpy(float).reshape(C, D, len(labels)),
        layout=layout,
        **stats,
    )

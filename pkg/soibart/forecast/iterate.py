# Copyright 2025 soibart Developers. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================

"""
Multi-step BART forecasts by feeding predictions back as lag inputs.

Point paths feed back the posterior mean (or median) of every step. Sampled
trajectories feed back one draw of the one-step predictive distribution per
step: a uniformly chosen posterior draw's prediction plus Gaussian noise with
that draw's sigma. Trajectory ``t`` draws its randomness from
``fold_in(fold_in(key(seed), t), h)`` at step ``h``, so every trajectory is
reproducible on its own and the result does not depend on how the work is
scheduled.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import jax
import jax.numpy as jnp
import numpy as np

from soibart._bart import BartConfig, BartPosterior, fit, predict_draws_batch
from soibart._misc import derive_seed, parallel_map, set_module_as
from soibart._tree import paired_forest_sum
from soibart.data import LagSpec, MonthStamp, TimeSeries, build_lag_matrix
from .autoregressive import iterate_points

__all__ = [
    'FEEDBACK_MODES',
    'ForecastConfig',
    'ForecastResult',
    'TrajectorySample',
    'point_predictor',
    'iterate_forecast',
    'sample_trajectories',
    'quantile_label',
]

_log = logging.getLogger(__name__)

FEEDBACK_MODES = ('mean', 'median')


def quantile_label(level: float) -> str:
    """Column name of a quantile level: ``0.05 -> q05``, ``0.5 -> q50``."""
    percent = level * 100.
    if abs(percent - round(percent)) < 1e-9:
        return f'q{int(round(percent)):02d}'
    return f'q{percent:g}'


@dataclass(frozen=True)
class ForecastConfig:
    """
    Parameters
    ----------
    horizon : int
      Number of months to forecast.
    feedback : str
      ``"mean"`` or ``"median"``: the statistic of the draws fed back.
    n_trajectories : int
      Sampled trajectories for predictive quantiles, ``0`` for points only.
    quantiles : tuple of float
      Sorted, distinct levels in ``(0, 1)``.
    refit_each_step : bool
      Refit the model on the extended series before every step of the point path.
    refit_trajectories : bool
      Also refit inside every trajectory (one fit per trajectory and step).
    """
    __module__ = 'soibart.forecast'

    horizon: int = 12
    feedback: str = 'mean'
    n_trajectories: int = 0
    quantiles: Tuple[float, ...] = (0.05, 0.25, 0.5, 0.75, 0.95)
    refit_each_step: bool = True
    refit_trajectories: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'quantiles', tuple(float(q) for q in self.quantiles))
        if self.horizon < 1:
            raise ValueError(f'horizon must be >= 1. But we got {self.horizon}.')
        if self.feedback not in FEEDBACK_MODES:
            raise ValueError(f'feedback must be one of {FEEDBACK_MODES}. But we got {self.feedback!r}.')
        if self.n_trajectories < 0:
            raise ValueError(f'n_trajectories must be >= 0. But we got {self.n_trajectories}.')
        if self.n_trajectories == 1:
            raise ValueError('At least two trajectories are needed for quantiles.')
        qs = self.quantiles
        if any(not 0. < q < 1. for q in qs) or any(b <= a for a, b in zip(qs, qs[1:])):
            raise ValueError(f'quantiles must be sorted, distinct and inside (0, 1). But we got {qs}.')


@dataclass(frozen=True, eq=False)
class TrajectorySample:
    """Sampled forecast paths, shape ``(n_trajectories, horizon)``, and their per-horizon quantiles."""
    __module__ = 'soibart.forecast'

    paths: np.ndarray = field(repr=False)
    levels: Tuple[float, ...]
    quantiles: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class ForecastResult:
    """
    Point forecasts for ``horizon`` months after the series end, with optional
    predictive quantiles of shape ``(horizon, len(levels))``.
    """
    __module__ = 'soibart.forecast'

    stamps: Tuple[MonthStamp, ...]
    point: np.ndarray = field(repr=False)
    feedback: str = 'mean'
    refit: bool = False
    levels: Tuple[float, ...] = ()
    quantiles: Optional[np.ndarray] = field(default=None, repr=False)
    trajectories: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        return len(self.stamps)

    def to_rows(self) -> List[Dict[str, Any]]:
        rows = []
        for h, stamp in enumerate(self.stamps):
            row: Dict[str, Any] = {'year': stamp.year, 'month': stamp.month, 'point': float(self.point[h])}
            if self.quantiles is not None:
                for j, level in enumerate(self.levels):
                    row[quantile_label(level)] = float(self.quantiles[h, j])
            rows.append(row)
        return rows


@set_module_as('soibart.forecast')
def point_predictor(posterior: BartPosterior, feedback: str = 'mean') -> Callable[[np.ndarray], np.ndarray]:
    """A row-batch predictor returning the mean or median over posterior draws."""
    if feedback not in FEEDBACK_MODES:
        raise ValueError(f'feedback must be one of {FEEDBACK_MODES}. But we got {feedback!r}.')

    def predict(rows: np.ndarray) -> np.ndarray:
        draws = predict_draws_batch(posterior, rows)
        if feedback == 'mean':
            return draws.mean(axis=0)
        return np.quantile(draws, 0.5, axis=0, method='midpoint')

    return predict


def _check_spec(spec: LagSpec):
    if spec.target_month is not None:
        raise ValueError('Iterated forecasts need a lag specification without a target month.')


def _jax_seed(seed: int) -> int:
    return derive_seed(seed) & 0x7FFFFFFF


def _step_randomness(seed: int, trajectories: np.ndarray, step: int, n_draws: int) -> Tuple[np.ndarray, np.ndarray]:
    # draw index and standard normal noise of every trajectory at one step
    base = jax.random.PRNGKey(_jax_seed(seed))

    def one(t):
        key = jax.random.fold_in(jax.random.fold_in(base, t), step)
        k_draw, k_noise = jax.random.split(key)
        return jax.random.randint(k_draw, (), 0, n_draws), jax.random.normal(k_noise)

    index, noise = jax.vmap(one)(jnp.asarray(trajectories, dtype=jnp.uint32))
    return np.asarray(index, dtype=np.int64), np.asarray(noise, dtype=np.float64)


def _predictive_step(posterior: BartPosterior, rows: np.ndarray, seed: int,
                     trajectories: np.ndarray, step: int) -> np.ndarray:
    index, noise = _step_randomness(seed, trajectories, step, posterior.n_draws)
    f = paired_forest_sum(posterior.var, posterior.cut, posterior.mu, index, rows)
    return posterior.scaling.inverse(f) + noise * posterior.sigma_raw[index]


def _summarize(paths: np.ndarray, levels: Sequence[float]) -> TrajectorySample:
    levels = tuple(float(q) for q in levels)
    quantiles = np.quantile(paths, levels, axis=0).T if levels else np.empty((paths.shape[1], 0))
    return TrajectorySample(paths=paths, levels=levels, quantiles=np.ascontiguousarray(quantiles))


@set_module_as('soibart.forecast')
def sample_trajectories(
    series: TimeSeries,
    spec: LagSpec,
    config: BartConfig,
    horizon: int,
    n_trajectories: int,
    seed: int,
    posterior: Optional[BartPosterior] = None,
    refit: bool = False,
    levels: Sequence[float] = (0.05, 0.25, 0.5, 0.75, 0.95),
    n_jobs: Optional[int] = 1,
) -> TrajectorySample:
    """
    Sample forecast paths from the one-step predictive distribution.

    Parameters
    ----------
    series : TimeSeries
      Observed history; paths start the month after its end.
    spec : LagSpec
      Lag features, without a target month.
    config : BartConfig
      Model settings, used when fitting.
    horizon, n_trajectories : int
      Path length and number of paths.
    seed : int
      Master seed of fits and trajectory randomness.
    posterior : BartPosterior, optional
      A posterior fitted on ``series``; fitted here when omitted.
    refit : bool
      Refit inside every trajectory on its own extended series before every
      step after the first. Much slower; fans out over ``n_jobs`` workers.
    levels : sequence of float
      Quantile levels of the summary.
    """
    _check_spec(spec)
    if horizon < 1 or n_trajectories < 1:
        raise ValueError(f'horizon and n_trajectories must be >= 1. But we got {horizon}, {n_trajectories}.')
    if posterior is None:
        posterior = fit(build_lag_matrix(series, spec), None, config, seed)
    lags = np.asarray(spec.lags)
    width = spec.max_lag
    history = series.values[-width:]

    if not refit:
        work = np.concatenate([np.tile(history, (n_trajectories, 1)), np.empty((n_trajectories, horizon))], axis=1)
        trajectories = np.arange(n_trajectories)
        for h in range(horizon):
            end = width + h
            work[:, end] = _predictive_step(posterior, work[:, end - lags], seed, trajectories, h)
        return _summarize(work[:, width:], levels)

    def one(t: int) -> np.ndarray:
        current, path = posterior, np.empty(horizon)
        extended = series
        for h in range(horizon):
            if h > 0:
                extended = extended.extend(path[h - 1:h])
                current = fit(build_lag_matrix(extended, spec), None, config, derive_seed(seed, t, h))
            row = extended.values[len(extended) - lags][None]
            path[h] = _predictive_step(current, row, seed, np.array([t]), h)[0]
        return path

    paths = np.stack(parallel_map(one, range(n_trajectories), n_jobs))
    return _summarize(paths, levels)


@set_module_as('soibart.forecast')
def iterate_forecast(
    series: TimeSeries,
    spec: LagSpec,
    config: BartConfig,
    fconfig: ForecastConfig,
    seed: int,
    posterior: Optional[BartPosterior] = None,
    n_jobs: Optional[int] = 1,
) -> ForecastResult:
    """
    Forecast ``fconfig.horizon`` months beyond the end of ``series``.

    Step 1 predicts the month after the series end; the point forecast (mean
    or median of the draws) is appended to a working copy of the series. With
    ``refit_each_step`` the model is refitted on the extended series before
    each later step; otherwise the first posterior is reused on the extended
    lag vectors. Step ``h`` refits are seeded with ``derive_seed(seed, h)``.
    """
    _check_spec(spec)
    if posterior is None:
        posterior = fit(build_lag_matrix(series, spec), None, config, seed)
    horizon = fconfig.horizon
    lags = np.asarray(spec.lags)

    if fconfig.refit_each_step:
        extended, current = series, posterior
        point = np.empty(horizon)
        for h in range(horizon):
            if h > 0:
                extended = extended.extend(point[h - 1:h])
                current = fit(build_lag_matrix(extended, spec), None, config, derive_seed(seed, h))
                _log.debug('refitted for step %d on %d months', h + 1, len(extended))
            row = extended.values[len(extended) - lags][None]
            point[h] = point_predictor(current, fconfig.feedback)(row)[0]
    else:
        point = iterate_points(series.values[-spec.max_lag:], spec.lags, horizon,
                               point_predictor(posterior, fconfig.feedback))

    levels, quantiles, paths = fconfig.quantiles, None, None
    if fconfig.n_trajectories > 0:
        sample = sample_trajectories(series, spec, config, horizon, fconfig.n_trajectories, seed,
                                     posterior=posterior, refit=fconfig.refit_trajectories,
                                     levels=levels, n_jobs=n_jobs)
        quantiles, paths = sample.quantiles, sample.paths
    return ForecastResult(
        stamps=tuple(series.end.shift(h) for h in range(1, horizon + 1)),
        point=point,
        feedback=fconfig.feedback,
        refit=fconfig.refit_each_step,
        levels=levels if quantiles is not None else (),
        quantiles=quantiles,
        trajectories=paths,
    )

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
Per-horizon out-of-sample scoring of iterated forecasts.

Every run splits the lag-matrix rows at random and fits on the training rows.
Each test row launches a forecast from its anchor, the month before its
target, using only the observed history up to the anchor and the fed-back
predictions. Horizon ``h`` is scored against the observed value ``h`` months
after the anchor whenever the series reaches that far.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from soibart._bart import BartConfig, BartPosterior, fit
from soibart._misc import derive_seed, parallel_map, set_module_as
from soibart.data import (
    FitStats,
    LagSpec,
    SplitMask,
    SupervisedDataset,
    TimeSeries,
    average_stats,
    build_lag_matrix,
    fit_stats,
    lag_windows,
    random_split,
)
from .autoregressive import fit_ar, forecast_ar, iterate_points
from .iterate import FEEDBACK_MODES, _check_spec, point_predictor

__all__ = [
    'HorizonBacktest',
    'BacktestRun',
    'backtest_run',
    'backtest_horizons',
    'backtest_ar_horizons',
    'summarize_runs',
]

_log = logging.getLogger(__name__)

BASELINE = 'ar'


@dataclass(frozen=True, eq=False)
class BacktestRun:
    """
    Scores of one split.

    ``tables`` maps a feedback mode (or ``"ar"`` for the linear baseline) to
    one :py:class:`FitStats` per horizon. ``residuals`` holds the one-step
    test residuals (actual minus prediction) in time order for every table.
    """
    __module__ = 'soibart.forecast'

    seed: int
    tables: Dict[str, Tuple[FitStats, ...]]
    residuals: Dict[str, np.ndarray] = field(repr=False)


@dataclass(frozen=True, eq=False)
class HorizonBacktest:
    """
    Run-averaged skill per forecast horizon.

    Parameters
    ----------
    stats : tuple of FitStats
      Entry ``h - 1`` scores horizon ``h``.
    feedback : str
      ``"mean"``, ``"median"`` or ``"ar"`` for the linear baseline.
    refit : bool
      Whether the model was refitted on fed-back values between steps.
    runs : int
      Number of averaged runs.
    residuals : ndarray
      One-step test residuals of the first run, in time order.
    per_run : tuple
      The per-run horizon tables.
    """
    __module__ = 'soibart.forecast'

    stats: Tuple[FitStats, ...]
    feedback: str = 'mean'
    refit: bool = False
    runs: int = 1
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    per_run: Tuple[Tuple[FitStats, ...], ...] = field(default=(), repr=False)

    @property
    def horizon(self) -> int:
        return len(self.stats)

    def to_rows(self) -> List[Dict[str, Any]]:
        return [{'horizon': h, **s.as_dict()} for h, s in enumerate(self.stats, start=1)]


def _anchors(mask: SplitMask, max_lag: int) -> np.ndarray:
    # row i targets series index i + max_lag, so its anchor is one month earlier
    return mask.test_index + max_lag - 1


def _score(paths: np.ndarray, anchors: np.ndarray, values: np.ndarray) -> Tuple[Tuple[FitStats, ...], np.ndarray]:
    horizon = paths.shape[1]
    table = []
    for h in range(1, horizon + 1):
        usable = anchors + h < values.size
        table.append(fit_stats(paths[usable, h - 1], values[anchors[usable] + h]))
    residuals = values[anchors + 1] - paths[:, 0]
    return tuple(table), residuals


def _refit_paths(
    dataset: SupervisedDataset,
    mask: SplitMask,
    posterior: BartPosterior,
    windows: np.ndarray,
    anchor_stamps: Sequence,
    config: BartConfig,
    horizon: int,
    feedback: str,
    seed: int,
) -> np.ndarray:
    # fed-back points join the training rows before every later step
    lags = np.asarray(dataset.lags)
    width = windows.shape[1]
    work = np.concatenate([windows, np.empty((windows.shape[0], horizon))], axis=1)
    rows = [dataset.rows[mask.train]]
    targets = [dataset.targets[mask.train]]
    stamps = [dataset.target_stamps[i] for i in mask.train_index]
    current = posterior
    for h in range(horizon):
        end = width + h
        step_rows = work[:, end - lags]
        work[:, end] = point_predictor(current, feedback)(step_rows)
        if h == horizon - 1:
            break
        rows.append(step_rows)
        targets.append(work[:, end])
        stamps.extend(stamp.shift(h + 1) for stamp in anchor_stamps)
        extended = SupervisedDataset(dataset.feature_names, dataset.lags, np.concatenate(rows),
                                     np.concatenate(targets), stamps)
        current = fit(extended, None, config, derive_seed(seed, h + 1))
        _log.debug('refitted for step %d on %d rows', h + 2, extended.n)
    return work[:, width:]


@set_module_as('soibart.forecast')
def backtest_run(
    series: TimeSeries,
    spec: LagSpec,
    config: BartConfig,
    train_fraction: float,
    horizon: int,
    seed: int,
    feedbacks: Sequence[str] = ('mean',),
    refit_each_step: bool = False,
    baseline: bool = False,
) -> BacktestRun:
    """
    Score one split for every requested feedback mode.

    All modes share the split and the fitted posterior of the run. With
    ``baseline`` a linear AR model is fitted on the same training rows and
    scored with the same anchors. The split and the chain are seeded with
    ``seed``; refits at step ``h`` use ``derive_seed(seed, h)``.
    """
    _check_spec(spec)
    if horizon < 1:
        raise ValueError(f'horizon must be >= 1. But we got {horizon}.')
    for feedback in feedbacks:
        if feedback not in FEEDBACK_MODES:
            raise ValueError(f'feedback must be one of {FEEDBACK_MODES}. But we got {feedback!r}.')
    dataset = build_lag_matrix(series, spec)
    mask = random_split(dataset.n, train_fraction, seed)
    anchors = _anchors(mask, spec.max_lag)
    windows = lag_windows(series.values, anchors, spec.max_lag)
    posterior = fit(dataset, mask, config, seed)

    tables, residuals = {}, {}
    for feedback in feedbacks:
        if refit_each_step:
            anchor_stamps = [series.stamp(int(a)) for a in anchors]
            paths = _refit_paths(dataset, mask, posterior, windows, anchor_stamps, config, horizon, feedback, seed)
        else:
            paths = iterate_points(windows, spec.lags, horizon, point_predictor(posterior, feedback))
        tables[feedback], residuals[feedback] = _score(paths, anchors, series.values)
    if baseline:
        model = fit_ar(dataset, mask)
        tables[BASELINE], residuals[BASELINE] = _score(forecast_ar(model, windows, horizon), anchors, series.values)
    return BacktestRun(seed=int(seed), tables=tables, residuals=residuals)


@set_module_as('soibart.forecast')
def summarize_runs(runs: Sequence[BacktestRun], key: str, refit: bool = False) -> HorizonBacktest:
    """Average the ``key`` table of several runs horizon by horizon."""
    assert len(runs) > 0, 'At least one run is needed.'
    per_run = tuple(run.tables[key] for run in runs)
    stats = tuple(average_stats(column) for column in zip(*per_run))
    return HorizonBacktest(
        stats=stats,
        feedback=key,
        refit=refit and key != BASELINE,
        runs=len(runs),
        residuals=runs[0].residuals[key],
        per_run=per_run,
    )


@set_module_as('soibart.forecast')
def backtest_horizons(
    series: TimeSeries,
    spec: LagSpec,
    config: BartConfig,
    train_fraction: float = 2. / 3.,
    runs: int = 10,
    horizon: int = 12,
    seed: int = 0,
    feedback: str = 'mean',
    refit_each_step: bool = False,
    n_jobs: Optional[int] = 1,
) -> HorizonBacktest:
    """
    Run-averaged out-of-sample skill of iterated BART forecasts per horizon.

    Run ``r`` uses seed ``seed + r`` for its split and its chain. The default
    reuses the posterior fitted on the training rows for every step;
    ``refit_each_step`` refits on the training rows plus the fed-back points
    before every later step.
    """
    if runs < 1:
        raise ValueError(f'runs must be >= 1. But we got {runs}.')

    def one(r: int) -> BacktestRun:
        return backtest_run(series, spec, config, train_fraction, horizon, seed + r,
                            feedbacks=(feedback,), refit_each_step=refit_each_step)

    results = parallel_map(one, range(runs), n_jobs)
    _log.info('backtest of %d runs, horizon %d, %s feedback done', runs, horizon, feedback)
    return summarize_runs(results, feedback, refit_each_step)


@set_module_as('soibart.forecast')
def backtest_ar_horizons(
    series: TimeSeries,
    spec: LagSpec,
    train_fraction: float = 2. / 3.,
    runs: int = 10,
    horizon: int = 12,
    seed: int = 0,
) -> HorizonBacktest:
    """The BART backtest protocol applied to the least-squares AR model."""
    _check_spec(spec)
    if runs < 1:
        raise ValueError(f'runs must be >= 1. But we got {runs}.')
    dataset = build_lag_matrix(series, spec)
    results = []
    for r in range(runs):
        mask = random_split(dataset.n, train_fraction, seed + r)
        anchors = _anchors(mask, spec.max_lag)
        windows = lag_windows(series.values, anchors, spec.max_lag)
        table, residuals = _score(forecast_ar(fit_ar(dataset, mask), windows, horizon), anchors, series.values)
        results.append(BacktestRun(seed=seed + r, tables={BASELINE: table}, residuals={BASELINE: residuals}))
    return summarize_runs(results, BASELINE)

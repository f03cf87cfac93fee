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
Named reproduction experiments.

Each preset fixes a lag specification, a tree count, a train fraction and a
number of runs. Running a preset repeats split, fit and scoring ``runs``
times, run ``r`` seeded with ``master_seed + r``, and averages the
statistics. Horizon presets score iterated forecasts instead of one-step
fits.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._bart import BartConfig, ImportanceReport, fit, predict_draws_batch
from ._errors import UnknownPreset
from ._misc import parallel_map, set_module_as
from .data import FitStats, LagSpec, TimeSeries, average_stats, build_lag_matrix, fit_stats, random_split
from .diagnostics import WhiteNoiseCheck, white_noise_check
from .forecast import HorizonBacktest, backtest_run, summarize_runs

__all__ = [
    'ExperimentPreset',
    'PresetReport',
    'PRESETS',
    'get_preset',
    'run_preset',
    'overfit_gap',
    'tree_count_sweep',
    'format_report',
    'report_rows',
]

_log = logging.getLogger(__name__)

OCTOBER = 10


@dataclass(frozen=True)
class ExperimentPreset:
    """
    Parameters
    ----------
    name : str
      Registry key.
    spec : LagSpec
      Lag features and optional target month.
    m : int
      Number of trees.
    train_fraction : float
      Share of rows used for training.
    runs : int
      Number of averaged runs.
    target : str
      What the preset predicts.
    importance : bool
      Also report split-count variable importance.
    horizon : int
      ``0`` for a one-step fit preset, otherwise the backtest horizon.
    """
    __module__ = 'soibart.harness'

    name: str
    spec: LagSpec
    m: int
    train_fraction: float
    runs: int = 10
    target: str = ''
    importance: bool = False
    horizon: int = 0

    def __post_init__(self):
        if not self.name:
            raise ValueError('A preset needs a name.')
        if self.runs < 1 or self.m < 1:
            raise ValueError(f'runs and m must be >= 1. But we got runs={self.runs}, m={self.m}.')
        if not 0. < self.train_fraction < 1.:
            raise ValueError(f'train_fraction must be in (0, 1). But we got {self.train_fraction}.')
        if self.horizon < 0:
            raise ValueError(f'horizon must be >= 0. But we got {self.horizon}.')
        if self.horizon and self.spec.target_month is not None:
            raise ValueError('Horizon presets forecast every month, they cannot filter a target month.')

    @property
    def is_horizon(self) -> bool:
        return self.horizon > 0

    def config(self, base: BartConfig = BartConfig()) -> BartConfig:
        return dataclasses.replace(base, m=self.m)


def _registry(*presets: ExperimentPreset) -> Dict[str, ExperimentPreset]:
    registry = {}
    for preset in presets:
        assert preset.name not in registry, f'Duplicate preset {preset.name!r}.'
        registry[preset.name] = preset
    return registry


_OCT_ALL = tuple(range(1, 13)) + (41, 73)

PRESETS: Dict[str, ExperimentPreset] = _registry(
    ExperimentPreset('oct-full', LagSpec(_OCT_ALL, OCTOBER), m=20, train_fraction=0.8,
                     target='October from the twelve months before plus lags 41 and 73', importance=True),
    ExperimentPreset('oct-reduced', LagSpec((1, 2, 3, 4, 5), OCTOBER), m=20, train_fraction=0.8,
                     target='October from the five months before'),
    ExperimentPreset('oct-no-sep', LagSpec((2, 3, 4, 5, 6), OCTOBER), m=20, train_fraction=0.8,
                     target='October from May to August'),
    ExperimentPreset('oct-far', LagSpec((10, 41), OCTOBER), m=20, train_fraction=0.8,
                     target='October from the previous December and May three years before'),
    ExperimentPreset('oct-far-73', LagSpec((10, 41, 73), OCTOBER), m=20, train_fraction=0.8,
                     target='October from the previous December and lags 41 and 73'),
    ExperimentPreset('ar-select', LagSpec(tuple(range(1, 10)) + (41, 73)), m=20, train_fraction=2. / 3.,
                     target='every month from lags 1 to 9, 41 and 73', importance=True),
    ExperimentPreset('ar5-backtest', LagSpec((1, 2, 3, 4, 5)), m=40, train_fraction=2. / 3.,
                     target='every month from lags 1 to 5, 12 months ahead', horizon=12),
)


@set_module_as('soibart.harness')
def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownPreset(f'Unknown preset {name!r}. Choose one of {", ".join(PRESETS)}.') from None


@dataclass(frozen=True, eq=False)
class PresetReport:
    """
    Averaged results of a preset.

    Fit presets fill ``train``/``test`` (and ``importance`` when requested);
    horizon presets fill ``horizons`` with the ``mean``, ``median`` and
    ``ar`` tables and ``white_noise`` with the check of the one-step
    residuals of the first run.
    """
    __module__ = 'soibart.harness'

    preset: ExperimentPreset
    seed: int
    config: BartConfig = field(repr=False)
    train: Optional[FitStats] = None
    test: Optional[FitStats] = None
    per_run: Tuple[Tuple[FitStats, FitStats], ...] = field(default=(), repr=False)
    importance: Optional[ImportanceReport] = field(default=None, repr=False)
    horizons: Dict[str, HorizonBacktest] = field(default_factory=dict, repr=False)
    white_noise: Optional[WhiteNoiseCheck] = None
    best_run: Optional[int] = None

    @property
    def name(self) -> str:
        return self.preset.name

    @property
    def runs(self) -> int:
        return len(self.per_run) if self.per_run else self.preset.runs


def _fit_run(preset: ExperimentPreset, series: TimeSeries, config: BartConfig, seed: int):
    dataset = build_lag_matrix(series, preset.spec)
    mask = random_split(dataset.n, preset.train_fraction, seed)
    posterior = fit(dataset, mask, config, seed)
    predicted = predict_draws_batch(posterior, dataset.rows).mean(axis=0)
    train = fit_stats(predicted[mask.train], dataset.targets[mask.train])
    test = fit_stats(predicted[mask.test], dataset.targets[mask.test])
    return train, test, posterior.mean_variable_usage()


@set_module_as('soibart.harness')
def run_preset(
    name: str,
    series: TimeSeries,
    master_seed: int,
    runs: Optional[int] = None,
    m: Optional[int] = None,
    train_fraction: Optional[float] = None,
    base_config: BartConfig = BartConfig(),
    select_best: bool = False,
    n_jobs: Optional[int] = 1,
) -> PresetReport:
    """
    Run a named preset and average its statistics over runs.

    Parameters
    ----------
    name : str
      A key of :py:data:`PRESETS`.
    series : TimeSeries
      The monthly record.
    master_seed : int
      Run ``r`` uses ``master_seed + r`` for its split and its chain.
    runs, m, train_fraction : optional
      Overrides of the preset values.
    base_config : BartConfig
      Sampler settings; the tree count comes from the preset.
    select_best : bool
      Also report the run with the lowest test RMSE.
    n_jobs : int
      Workers for the run fan-out.

    Raises
    ------
    UnknownPreset
      When ``name`` is not registered.
    """
    preset = get_preset(name)
    overrides = {k: v for k, v in (('runs', runs), ('m', m), ('train_fraction', train_fraction)) if v is not None}
    if overrides:
        preset = dataclasses.replace(preset, **overrides)
    config = preset.config(base_config)
    seeds = [master_seed + r for r in range(preset.runs)]
    _log.info('preset %s: %d runs with m=%d', preset.name, preset.runs, config.m)

    if preset.is_horizon:
        results = parallel_map(
            lambda s: backtest_run(series, preset.spec, config, preset.train_fraction, preset.horizon, s,
                                   feedbacks=('mean', 'median'), baseline=True),
            seeds, n_jobs,
        )
        horizons = {key: summarize_runs(results, key) for key in ('mean', 'median', 'ar')}
        return PresetReport(
            preset=preset,
            seed=master_seed,
            config=config,
            horizons=horizons,
            white_noise=white_noise_check(horizons['mean'].residuals),
        )

    results = parallel_map(lambda s: _fit_run(preset, series, config, s), seeds, n_jobs)
    per_run = tuple((train, test) for train, test, _ in results)
    importance = None
    if preset.importance:
        usage = np.mean([u for _, _, u in results], axis=0)
        importance = ImportanceReport.from_usage(preset.spec.display_names(), usage, preset.runs)
    best = None
    if select_best:
        best = int(np.argmin([test.rmse for _, test in per_run]))
    return PresetReport(
        preset=preset,
        seed=master_seed,
        config=config,
        train=average_stats(train for train, _ in per_run),
        test=average_stats(test for _, test in per_run),
        per_run=per_run,
        importance=importance,
        best_run=best,
    )


@set_module_as('soibart.harness')
def overfit_gap(report: PresetReport) -> float:
    """Test RMSE minus train RMSE; negative on lucky splits."""
    assert report.train is not None and report.test is not None, f'{report.name} has no train/test statistics.'
    return report.test.rmse - report.train.rmse


@set_module_as('soibart.harness')
def tree_count_sweep(
    name: str,
    series: TimeSeries,
    master_seed: int,
    tree_counts: Sequence[int] = (10, 20, 40),
    **kwargs,
) -> List[PresetReport]:
    """Rerun a preset for every tree count with the same seeds."""
    return [run_preset(name, series, master_seed, m=m, **kwargs) for m in tree_counts]


def _stats_line(label: str, stats: FitStats, width: int, digits: int) -> str:
    return f'{label:<{width}}  {stats.corr:>6.{digits}f}  {stats.mae:>6.{digits}f}  {stats.rmse:>6.{digits}f}'


def _horizon_label(h: int) -> str:
    return f'{h} Month' if h == 1 else f'{h} Months'


@set_module_as('soibart.harness')
def format_report(report: PresetReport) -> str:
    """Plain text tables laid out as ``Sample | CORR | MAE | RMSE``."""
    preset = report.preset
    lines = [
        f'{preset.name}: {preset.target}',
        f'{report.runs} runs, m={report.config.m}, train fraction {preset.train_fraction:.3f}, seed {report.seed}',
        '',
    ]
    if report.train is not None:
        lines.append(f'{"Sample":<10}  {"CORR":>6}  {"MAE":>6}  {"RMSE":>6}')
        lines.append(_stats_line('Training', report.train, 10, 2))
        lines.append(_stats_line('Testing', report.test, 10, 2))
        lines.append(f'overfit gap {overfit_gap(report):.2f}')
        if report.best_run is not None:
            train, test = report.per_run[report.best_run]
            lines.append(f'best run {report.best_run} (seed {report.seed + report.best_run}):')
            lines.append(_stats_line('Training', train, 10, 2))
            lines.append(_stats_line('Testing', test, 10, 2))
    if report.importance is not None:
        lines += ['', f'{"Variable":<10}  {"Importance":>10}']
        lines += [f'{name:<10}  {value:>10.2f}' for name, value in
                  zip(report.importance.feature_names, report.importance.importance)]
    for key, table in report.horizons.items():
        title = 'AR baseline' if key == 'ar' else f'{key} feedback'
        lines += ['', title, f'{"Out of Sample":<13}  {"CORR":>6}  {"MAE":>6}  {"RMSE":>6}']
        lines += [_stats_line(_horizon_label(h), s, 13, 3) for h, s in enumerate(table.stats, start=1)]
    if report.white_noise is not None:
        wn = report.white_noise
        lines += ['', f'one-step residuals: {wn.fraction_within_bands:.1%} of acf lags 1..{wn.max_lag} '
                      f'inside +-{wn.band:.3f}, white noise: {"yes" if wn.passed else "no"}']
    return '\n'.join(lines) + '\n'


@set_module_as('soibart.harness')
def report_rows(report: PresetReport) -> Dict[str, List[Dict[str, Any]]]:
    """
    CSV records of every table of a report, keyed by file suffix.

    The ``""`` key holds the main table: train/test rows of fit presets or the
    mean-feedback horizon table of horizon presets.
    """
    tables: Dict[str, List[Dict[str, Any]]] = {}
    if report.train is not None:
        tables[''] = [
            {'sample': 'train', **report.train.as_dict()},
            {'sample': 'test', **report.test.as_dict()},
        ]
        if report.best_run is not None:
            train, test = report.per_run[report.best_run]
            tables['best'] = [
                {'sample': 'train', 'run': report.best_run, **train.as_dict()},
                {'sample': 'test', 'run': report.best_run, **test.as_dict()},
            ]
    if report.importance is not None:
        tables['importance'] = report.importance.to_rows()
    for key, table in report.horizons.items():
        tables['' if key == 'mean' else key] = table.to_rows()
    if report.white_noise is not None:
        tables['white-noise'] = [dataclasses.asdict(report.white_noise)]
    return tables

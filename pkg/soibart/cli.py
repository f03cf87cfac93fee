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
Command line entry point ``soi-bart``.

Every subcommand reads the monthly record given by ``--data``, or the record
bundled with the package when the flag is omitted, and writes its tables to
``--out`` as CSV (or JSON arrays of records). Runs are seeded with ``--seed``
(default :py:data:`DEFAULT_SEED`), so repeating a command reproduces its files
byte for byte.

Exit codes: ``0`` on success, ``1`` on data or model errors, ``2`` on usage
errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from ._bart import BartConfig, BartPosterior, fit, predict_draws_batch, variable_importance
from ._errors import DimensionMismatch, SoiBartError
from .data import (
    LagSpec,
    MissingValues,
    build_lag_matrix,
    emit_csv,
    export_dataset_csv,
    fit_stats,
    install_snapshot,
    load_snapshot,
    parse_lags,
    random_split,
    read_series,
)
from .diagnostics import correlogram, periodogram, plot_correlogram, plot_fan_chart, plot_periodogram
from .forecast import ForecastConfig, backtest_ar_horizons, backtest_horizons, iterate_forecast
from .harness import PRESETS, format_report, report_rows, run_preset, tree_count_sweep

__all__ = [
    'DEFAULT_SEED',
    'build_parser',
    'main',
]

DEFAULT_SEED = 20091001

_log = logging.getLogger(__name__)


def _lags(text: str) -> tuple:
    lags = parse_lags(text)
    LagSpec(lags)
    return lags


def _fraction(text: str) -> float:
    value = float(text)
    if not 0. < value < 1.:
        raise ValueError(text)
    return value


def _quantiles(text: str) -> tuple:
    return tuple(float(q) for q in text.split(','))


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group('common options')
    group.add_argument('--data', default=None,
                       help='SOI record, BOM plaintext or year,month,value CSV (default: the bundled record).')
    group.add_argument('--seed', type=int, default=DEFAULT_SEED, help=f'Master seed (default {DEFAULT_SEED}).')
    group.add_argument('--out', default='.', help='Output directory (created when missing).')
    group.add_argument('--format', choices=('csv', 'json'), default='csv', help='Table format.')
    group.add_argument('--jobs', type=int, default=os.cpu_count() or 1, help='Worker processes.')
    group.add_argument('--missing-token', action='append', default=None,
                       help='Token marking a missing month, repeatable (default -999.9 and *).')
    group.add_argument('--missing-abs', type=float, default=MissingValues().max_abs,
                       help='Values beyond this magnitude are missing.')
    group.add_argument('-v', '--verbose', action='count', default=0, help='-v for progress, -vv for sampler detail.')
    return common


def _model_parser(trees: int) -> argparse.ArgumentParser:
    model = argparse.ArgumentParser(add_help=False)
    group = model.add_argument_group('model options')
    group.add_argument('--trees', type=int, default=trees, help=f'Number of trees (default {trees}).')
    group.add_argument('--iterations', type=int, default=BartConfig().n_iter, help='Total MCMC sweeps.')
    group.add_argument('--burn-in', type=int, default=BartConfig().burn_in, help='Discarded sweeps.')
    return model


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog='soi-bart', description='BART modelling of the Southern Oscillation Index.')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND', required=True)

    p = sub.add_parser('ingest', parents=[common], help='Normalize a record to canonical CSV.')
    p.add_argument('--lags', type=_lags, default=None, help='Also export the lag matrix, e.g. 1..12,41,73.')
    p.add_argument('--month', type=int, default=None, help='Target month filter of the exported lag matrix.')
    p.add_argument('--install', action='store_true', help='Also install the record as the bundled default.')

    p = sub.add_parser('preset', parents=[common], help='Run a named reproduction experiment.')
    p.add_argument('name', choices=sorted(PRESETS), help='Preset name.')
    p.add_argument('--runs', type=int, default=None, help='Override the number of runs.')
    p.add_argument('--trees', type=int, default=None, help='Override the number of trees.')
    p.add_argument('--train-fraction', type=_fraction, default=None, help='Override the train fraction.')
    p.add_argument('--iterations', type=int, default=BartConfig().n_iter, help='Total MCMC sweeps.')
    p.add_argument('--burn-in', type=int, default=BartConfig().burn_in, help='Discarded sweeps.')
    p.add_argument('--select-best', action='store_true', help='Also report the run with the lowest test RMSE.')
    p.add_argument('--sweep', type=_lags, default=None, metavar='COUNTS',
                   help='Rerun for several tree counts, e.g. 10,20,40.')

    p = sub.add_parser('select', parents=[common, _model_parser(20)], help='Split-count variable importance.')
    p.add_argument('--lags', type=_lags, required=True, help='Candidate lags, e.g. 1..9,41,73.')
    p.add_argument('--month', type=int, default=None, help='Only targets in this month (1-12).')
    p.add_argument('--runs', type=int, default=10, help='Averaged runs.')

    p = sub.add_parser('backtest', parents=[common, _model_parser(40)], help='Per-horizon out-of-sample skill.')
    p.add_argument('--lags', type=_lags, default=(1, 2, 3, 4, 5), help='Lags (default 1..5).')
    p.add_argument('--train-fraction', type=_fraction, default=2. / 3., help='Train share (default 2/3).')
    p.add_argument('--runs', type=int, default=10, help='Averaged runs.')
    p.add_argument('--horizon', type=int, default=12, help='Months ahead.')
    p.add_argument('--feedback', choices=('mean', 'median'), default='mean', help='Fed-back statistic.')
    p.add_argument('--refit', action='store_true', help='Refit on fed-back values before every step.')
    p.add_argument('--baseline', action='store_true', help='Also score the linear AR model.')

    p = sub.add_parser('forecast', parents=[common, _model_parser(40)], help='Forecast beyond the end of the record.')
    p.add_argument('--lags', type=_lags, default=(1, 2, 3, 4, 5), help='Lags (default 1..5).')
    p.add_argument('--horizon', type=int, default=12, help='Months ahead.')
    p.add_argument('--feedback', choices=('mean', 'median'), default='mean', help='Fed-back statistic.')
    p.add_argument('--trajectories', type=int, default=0, help='Sampled paths for quantiles, 0 for points only.')
    p.add_argument('--quantiles', type=_quantiles, default=ForecastConfig().quantiles, help='Quantile levels.')
    p.add_argument('--no-refit', action='store_true', help='Reuse the first posterior for every step.')
    p.add_argument('--refit-trajectories', action='store_true', help='Refit inside every sampled path.')
    p.add_argument('--save-posterior', default=None, help='Write the fitted posterior as JSON.')
    p.add_argument('--load-posterior', default=None, help='Reuse a saved posterior (implies --no-refit).')
    p.add_argument('--svg', action='store_true', help='Also draw the fan chart.')

    p = sub.add_parser('diagnose', parents=[common], help='Periodogram and correlograms.')
    p.add_argument('--max-lag', type=int, default=36, help='Correlogram lags (default 36).')
    p.add_argument('--residuals', action='store_true', help='Add the one-step BART test residual correlogram.')
    p.add_argument('--lags', type=_lags, default=(1, 2, 3, 4, 5), help='Lags of the residual model.')
    p.add_argument('--trees', type=int, default=40, help='Trees of the residual model.')
    p.add_argument('--train-fraction', type=_fraction, default=2. / 3., help='Train share of the residual model.')
    p.add_argument('--iterations', type=int, default=BartConfig().n_iter, help='Total MCMC sweeps.')
    p.add_argument('--burn-in', type=int, default=BartConfig().burn_in, help='Discarded sweeps.')
    p.add_argument('--svg', action='store_true', help='Also draw the figures.')
    return parser


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_table(args, stem: str, rows: List[Dict[str, Any]]) -> Path:
    path = Path(args.out) / f'{stem}.{args.format}'
    if args.format == 'json':
        text = json.dumps(rows, indent=2) + '\n'
    else:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        if rows:
            writer.writerow(list(rows[0]))
            for row in rows:
                writer.writerow([_format_value(v) for v in row.values()])
        text = out.getvalue()
    path.write_text(text, encoding='utf-8')
    _log.info('wrote %s', path)
    return path


def _write_text(args, name: str, text: str) -> Path:
    path = Path(args.out) / name
    path.write_text(text, encoding='utf-8')
    _log.info('wrote %s', path)
    return path


def _config(args) -> BartConfig:
    return BartConfig(m=args.trees, n_iter=args.iterations, burn_in=args.burn_in)


def _missing(args) -> MissingValues:
    if args.missing_token is None:
        return MissingValues(max_abs=args.missing_abs)
    return MissingValues(tokens=tuple(args.missing_token), max_abs=args.missing_abs)


def _cmd_ingest(args, series) -> None:
    _write_text(args, 'series.csv', emit_csv(series))
    if args.lags is not None:
        dataset = build_lag_matrix(series, LagSpec(args.lags, args.month))
        _write_text(args, 'dataset.csv', export_dataset_csv(dataset))
    if args.install:
        install_snapshot(series)


def _cmd_preset(args, series) -> None:
    base = BartConfig(n_iter=args.iterations, burn_in=args.burn_in)
    options = dict(runs=args.runs, train_fraction=args.train_fraction, base_config=base,
                   select_best=args.select_best, n_jobs=args.jobs)
    if args.sweep is not None:
        reports = tree_count_sweep(args.name, series, args.seed, tree_counts=args.sweep, **options)
        rows = []
        for report in reports:
            for suffix, table in report_rows(report).items():
                if suffix == '':
                    rows += [{'m': report.config.m, **row} for row in table]
        _write_table(args, f'{args.name}-sweep', rows)
        _write_text(args, f'{args.name}-sweep.txt', '\n'.join(format_report(r) for r in reports))
        return
    report = run_preset(args.name, series, args.seed, m=args.trees, **options)
    for suffix, rows in report_rows(report).items():
        _write_table(args, f'{args.name}-{suffix}' if suffix else args.name, rows)
    _write_text(args, f'{args.name}.txt', format_report(report))


def _cmd_select(args, series) -> None:
    spec = LagSpec(args.lags, args.month)
    dataset = build_lag_matrix(series, spec)
    report = variable_importance(dataset, None, _config(args), runs=args.runs, seed=args.seed,
                                 n_jobs=args.jobs, feature_names=spec.display_names())
    _write_table(args, 'importance', report.to_rows())


def _cmd_backtest(args, series) -> None:
    spec = LagSpec(args.lags)
    result = backtest_horizons(series, spec, _config(args), args.train_fraction, args.runs, args.horizon,
                               args.seed, feedback=args.feedback, refit_each_step=args.refit, n_jobs=args.jobs)
    _write_table(args, f'backtest-{args.feedback}', result.to_rows())
    if args.baseline:
        baseline = backtest_ar_horizons(series, spec, args.train_fraction, args.runs, args.horizon, args.seed)
        _write_table(args, 'backtest-ar', baseline.to_rows())


def _cmd_forecast(args, series) -> None:
    spec = LagSpec(args.lags)
    posterior = None
    refit = not args.no_refit
    if args.load_posterior is not None:
        posterior = BartPosterior.load(args.load_posterior)
        if posterior.feature_names != spec.feature_names:
            raise DimensionMismatch(f'{args.load_posterior}: the posterior uses {", ".join(posterior.feature_names)}, '
                                    f'not {", ".join(spec.feature_names)}.')
        refit = False
    # posteriors saved without a config fall back to the model flags
    config = posterior.config if posterior is not None and posterior.config is not None else _config(args)
    if posterior is None:
        posterior = fit(build_lag_matrix(series, spec), None, config, args.seed)
    if args.save_posterior is not None:
        posterior.save(args.save_posterior)
    fconfig = ForecastConfig(
        horizon=args.horizon,
        feedback=args.feedback,
        n_trajectories=args.trajectories,
        quantiles=args.quantiles,
        refit_each_step=refit,
        refit_trajectories=args.refit_trajectories,
    )
    result = iterate_forecast(series, spec, config, fconfig, args.seed, posterior=posterior, n_jobs=args.jobs)
    _write_table(args, 'forecast', result.to_rows())
    if args.svg:
        plot_fan_chart(series, result, Path(args.out) / 'forecast.svg')


def _cmd_diagnose(args, series) -> None:
    spectrum = periodogram(series)
    _write_table(args, 'periodogram', spectrum.to_rows())
    corr = correlogram(series, args.max_lag)
    _write_table(args, 'correlogram', corr.to_rows())
    if args.svg:
        plot_periodogram(spectrum, Path(args.out) / 'periodogram.svg')
        plot_correlogram(corr, Path(args.out) / 'correlogram.svg', title='SOI correlogram')
    if args.residuals:
        dataset = build_lag_matrix(series, LagSpec(args.lags))
        mask = random_split(dataset.n, args.train_fraction, args.seed)
        posterior = fit(dataset, mask, _config(args), args.seed)
        rows, actual = dataset.rows[mask.test], dataset.targets[mask.test]
        predicted = predict_draws_batch(posterior, rows).mean(axis=0)
        _log.info('one-step test skill: %s', fit_stats(predicted, actual))
        residual = correlogram(actual - predicted, args.max_lag)
        _write_table(args, 'residual-correlogram', residual.to_rows())
        if args.svg:
            plot_correlogram(residual, Path(args.out) / 'residual-correlogram.svg',
                             title='One-step test residuals')


_COMMANDS = {
    'ingest': _cmd_ingest,
    'preset': _cmd_preset,
    'select': _cmd_select,
    'backtest': _cmd_backtest,
    'forecast': _cmd_forecast,
    'diagnose': _cmd_diagnose,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.jobs < 1:
        parser.print_usage(sys.stderr)
        print(f'{parser.prog}: error: --jobs must be >= 1', file=sys.stderr)
        return 2
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')

    try:
        missing = _missing(args)
        series = read_series(args.data, missing) if args.data is not None else load_snapshot(missing)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.command](args, series)
    except (SoiBartError, OSError) as e:
        print(f'{parser.prog}: error: {e}', file=sys.stderr)
        return 1
    except ValueError as e:
        # invalid flag combinations rejected by the configuration dataclasses
        parser.print_usage(sys.stderr)
        print(f'{parser.prog}: error: {e}', file=sys.stderr)
        return 2
    return 0

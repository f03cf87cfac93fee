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
Static SVG figures: periodogram, correlogram and forecast fan chart.

Rendering uses the non-interactive Agg backend with a fixed SVG hash salt
and no date metadata, so the same inputs give byte-identical files.
"""

from __future__ import annotations

import os
from typing import Optional, Union

import numpy as np

from soibart._misc import set_module_as
from soibart.data import TimeSeries
from .spectral import Correlogram, Periodogram

__all__ = [
    'plot_periodogram',
    'plot_correlogram',
    'plot_fan_chart',
]

_SVG_SALT = 'soibart'


def _pyplot():
    try:
        import matplotlib
    except ImportError as e:
        raise ImportError('SVG figures need matplotlib; install soibart[plot].') from e
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt
    matplotlib.rcParams['svg.hashsalt'] = _SVG_SALT
    return plt


def _save(fig, path: Union[str, os.PathLike]):
    plt = _pyplot()
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)


@set_module_as('soibart.diagnostics')
def plot_periodogram(result: Periodogram, path: Union[str, os.PathLike], title: str = 'Periodogram'):
    """Stem plot of the ordinates against frequency in cycles per month."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.vlines(result.frequencies, 0., result.power, lw=0.8, color='steelblue')
    ax.set_xlabel('Frequency (cycles per month)')
    ax.set_ylabel('Power')
    ax.set_xlim(0., 0.5)
    ax.set_title(title)
    _save(fig, path)


@set_module_as('soibart.diagnostics')
def plot_correlogram(result: Correlogram, path: Union[str, os.PathLike], title: str = 'Correlogram'):
    """ACF and PACF stems with the ``+-1.96 / sqrt(n)`` band."""
    plt = _pyplot()
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for ax, values, label in zip(axes, (result.acf, result.pacf), ('ACF', 'Partial ACF')):
        ax.vlines(result.lags, 0., values, lw=1.2, color='black')
        ax.axhline(0., lw=0.6, color='black')
        ax.axhline(result.band, ls='--', lw=0.8, color='steelblue')
        ax.axhline(-result.band, ls='--', lw=0.8, color='steelblue')
        ax.set_ylim(-1., 1.)
        ax.set_ylabel(label)
    axes[-1].set_xlabel('Lag (months)')
    axes[0].set_title(title)
    _save(fig, path)


@set_module_as('soibart.diagnostics')
def plot_fan_chart(
    history: TimeSeries,
    result,
    path: Union[str, os.PathLike],
    context: int = 48,
    title: Optional[str] = None,
):
    """
    The last ``context`` observed months followed by the point forecast and,
    when present, the predictive quantile bands of a ``ForecastResult``.
    """
    plt = _pyplot()
    context = min(context, len(history))
    x_hist = np.arange(-context + 1, 1)
    x_fc = np.arange(1, result.horizon + 1)
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(x_hist, history.values[-context:], color='black', lw=1.0, label='observed')
    if result.quantiles is not None and len(result.levels) >= 2:
        q = result.quantiles
        pairs = len(result.levels) // 2
        for j in range(pairs):
            alpha = 0.15 + 0.2 * j / max(pairs, 1)
            ax.fill_between(x_fc, q[:, j], q[:, -1 - j], color='steelblue', alpha=alpha, lw=0.)
    ax.plot(x_fc, result.point, color='darkorange', lw=1.5, marker='o', ms=3, label=f'{result.feedback} forecast')
    ticks = np.concatenate([x_hist[::12], x_fc[-1:]])
    labels = [history.stamp(int(t) - 1).label() for t in x_hist[::12]] + [result.stamps[-1].label()]
    ax.set_xticks(ticks)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel('SOI')
    ax.set_title(title or f'Forecast from {history.end.label()}')
    ax.legend(fontsize=8)
    _save(fig, path)

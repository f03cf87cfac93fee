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

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import brainstate as bst
import numpy as np

from soibart._errors import RankDeficient, TooFewRows
from soibart._misc import set_module_as
from soibart.data import SplitMask, SupervisedDataset

__all__ = [
    'ARModel',
    'fit_ar',
    'predict_ar',
    'forecast_ar',
    'iterate_points',
]


@set_module_as('soibart.forecast')
def iterate_points(
    history: bst.typing.ArrayLike,
    lags: Sequence[int],
    horizon: int,
    predict: Callable[[np.ndarray], np.ndarray],
) -> np.ndarray:
    """
    Feed point forecasts back as the newest observations.

    Parameters
    ----------
    history : ArrayLike
      Observed values, oldest first, of shape ``(W,)`` or ``(N, W)`` for ``N``
      independent windows. ``W`` must be at least ``max(lags)``.
    lags : sequence of int
      The lag of every feature column handed to ``predict``.
    horizon : int
      Number of steps.
    predict : callable
      Maps an ``(N, p)`` matrix of lag rows to ``N`` point forecasts.

    Returns
    -------
    ndarray
      Forecasts of shape ``(horizon,)`` or ``(N, horizon)``.
    """
    if horizon < 1:
        raise ValueError(f'horizon must be >= 1. But we got {horizon}.')
    history = np.asarray(history, dtype=np.float64)
    single = history.ndim == 1
    work = history[None] if single else history
    lags = np.asarray(lags, dtype=np.int64)
    assert work.shape[1] >= lags.max(), f'{work.shape[1]} history values cannot feed lag {lags.max()}.'
    work = np.concatenate([work, np.empty((work.shape[0], horizon))], axis=1)
    start = history.shape[-1]
    for h in range(horizon):
        end = start + h
        rows = work[:, end - lags]
        work[:, end] = np.asarray(predict(rows), dtype=np.float64).reshape(-1)
    out = work[:, start:]
    return out[0] if single else out


@dataclass(frozen=True, eq=False)
class ARModel:
    """
    Linear autoregression ``y_t = intercept + sum_j coefficients[j] * y_{t - lags[j]} + e_t``.
    """
    __module__ = 'soibart.forecast'

    lags: Tuple[int, ...]
    intercept: float
    coefficients: np.ndarray = field(repr=False)
    residual_sd: float = 0.

    def __post_init__(self):
        coefficients = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)
        object.__setattr__(self, 'lags', tuple(int(k) for k in self.lags))
        if coefficients.size != len(self.lags):
            raise ValueError(f'{coefficients.size} coefficients for {len(self.lags)} lags.')
        if self.residual_sd < 0.:
            raise ValueError(f'residual_sd must be >= 0. But we got {self.residual_sd}.')
        coefficients.flags.writeable = False
        object.__setattr__(self, 'coefficients', coefficients)

    @property
    def order(self) -> int:
        return len(self.lags)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'p': self.order,
            'lags': list(self.lags),
            'intercept': float(self.intercept),
            'coefficients': [float(c) for c in self.coefficients],
            'residual_sd': float(self.residual_sd),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ARModel':
        return cls(tuple(data['lags']), float(data['intercept']), np.asarray(data['coefficients']),
                   float(data['residual_sd']))


@set_module_as('soibart.forecast')
def fit_ar(dataset: SupervisedDataset, mask: Optional[SplitMask] = None) -> ARModel:
    """
    Ordinary least squares with intercept on the training rows.

    The residual sd divides the residual sum of squares by ``n - p - 1``.

    Raises
    ------
    TooFewRows
      With ``p + 1`` or fewer training rows.
    RankDeficient
      When the design matrix (intercept plus lag columns) is not of full rank.
    """
    rows, targets = dataset.rows, dataset.targets
    if mask is not None:
        rows, targets = rows[mask.train], targets[mask.train]
    n, p = rows.shape
    if n <= p + 1:
        raise TooFewRows(f'{n} training rows cannot fit an AR model with {p} lags and an intercept.')
    design = np.column_stack([np.ones(n), rows])
    if np.linalg.matrix_rank(design) < p + 1:
        raise RankDeficient(f'The lag design of {p} columns plus intercept is rank deficient.')
    coef, *_ = np.linalg.lstsq(design, targets, rcond=None)
    resid = targets - design @ coef
    return ARModel(
        lags=tuple(dataset.lags),
        intercept=float(coef[0]),
        coefficients=coef[1:],
        residual_sd=float(np.sqrt(resid @ resid / (n - p - 1))),
    )


@set_module_as('soibart.forecast')
def predict_ar(model: ARModel, rows: bst.typing.ArrayLike) -> np.ndarray:
    """One-step predictions for a lag matrix (or a single lag row)."""
    rows = np.asarray(rows, dtype=np.float64)
    return model.intercept + rows @ model.coefficients


@set_module_as('soibart.forecast')
def forecast_ar(model: ARModel, history: bst.typing.ArrayLike, horizon: int) -> np.ndarray:
    """
    Iterated plug-in forecasts for ``horizon`` steps after ``history``.

    ``history`` holds at least ``max(model.lags)`` values, newest last.
    """
    return iterate_points(history, model.lags, horizon, lambda rows: predict_ar(model, rows))

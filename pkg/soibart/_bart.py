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

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import brainstate as bst
import numpy as np

from ._errors import ConstantTarget, DimensionMismatch, LengthMismatch, TooFewRows
from ._misc import derive_seed, parallel_map, set_module_as
from ._sampler import BartSampler
from ._tree import DecisionTree, forest_predict, tree_from_dict, tree_to_dict

__all__ = [
    'BartConfig',
    'TargetScaling',
    'PosteriorDraw',
    'BartPosterior',
    'ImportanceReport',
    'fit',
    'predict_draws',
    'predict_draws_batch',
    'predict_mean',
    'predict_median',
    'predict_quantile',
    'variable_importance',
]

POSTERIOR_SCHEMA = 'soibart.posterior'
POSTERIOR_VERSION = 1


@dataclass(frozen=True)
class BartConfig:
    """
    Hyperparameters of the sum-of-trees model and of its sampler.

    Parameters
    ----------
    m : int
      Number of trees.
    alpha, beta : float
      A node at depth ``d`` splits with prior probability ``alpha * (1 + d) ** -beta``.
    k : float
      Leaf values have prior sd ``0.5 / (k * sqrt(m))`` on the standardized scale.
    nu, q : float
      Scaled inverse chi-square prior on the noise variance, calibrated so that
      the least-squares residual sd sits at the prior quantile ``q``.
    n_iter, burn_in : int
      Total sweeps and discarded sweeps; ``n_iter - burn_in`` draws are kept.
    cut_grid : int
      Number of quantile cutpoints per feature.
    min_leaf_size : int
      Minimum number of training rows in every leaf.
    move_probs : tuple of float
      Probabilities of the grow, prune, change and swap proposals.
    max_depth : int
      Nodes at this depth are never split.
    log_every : int
      Sweeps between debug log lines, ``0`` to disable.
    check_trees : bool
      Validate every tree after every update.
    use_likelihood : bool
      ``False`` samples the prior.
    sample_sigma : bool
      ``False`` keeps the noise sd at its initial estimate.
    """
    __module__ = 'soibart'

    m: int = 40
    alpha: float = 0.95
    beta: float = 2.
    k: float = 2.
    nu: float = 3.
    q: float = 0.90
    n_iter: int = 1200
    burn_in: int = 200
    cut_grid: int = 100
    min_leaf_size: int = 5
    move_probs: Tuple[float, float, float, float] = (0.25, 0.25, 0.40, 0.10)
    max_depth: int = 6
    log_every: int = 100
    check_trees: bool = False
    use_likelihood: bool = True
    sample_sigma: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'move_probs', tuple(float(p) for p in self.move_probs))
        if self.m < 1:
            raise ValueError(f'm must be >= 1. But we got {self.m}.')
        if not 0. < self.alpha < 1.:
            raise ValueError(f'alpha must be in (0, 1). But we got {self.alpha}.')
        if self.beta < 0.:
            raise ValueError(f'beta must be >= 0. But we got {self.beta}.')
        if self.k <= 0. or self.nu <= 0.:
            raise ValueError(f'k and nu must be positive. But we got k={self.k}, nu={self.nu}.')
        if not 0. < self.q < 1.:
            raise ValueError(f'q must be in (0, 1). But we got {self.q}.')
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError(f'burn_in must be in [0, n_iter). But we got burn_in={self.burn_in}, n_iter={self.n_iter}.')
        if self.cut_grid < 2:
            raise ValueError(f'cut_grid must be >= 2. But we got {self.cut_grid}.')
        if self.min_leaf_size < 1:
            raise ValueError(f'min_leaf_size must be >= 1. But we got {self.min_leaf_size}.')
        if len(self.move_probs) != 4 or min(self.move_probs) < 0.:
            raise ValueError(f'move_probs must hold four non-negative numbers. But we got {self.move_probs}.')
        if not math.isclose(sum(self.move_probs), 1., abs_tol=1e-9):
            raise ValueError(f'move_probs must sum to 1. But we got {sum(self.move_probs)}.')
        if self.move_probs[0] == 0. or self.move_probs[1] == 0.:
            raise ValueError('The grow and prune probabilities must be positive.')
        if self.max_depth < 1:
            raise ValueError(f'max_depth must be >= 1. But we got {self.max_depth}.')
        if self.log_every < 0:
            raise ValueError(f'log_every must be >= 0. But we got {self.log_every}.')

    @property
    def n_draws(self) -> int:
        return self.n_iter - self.burn_in

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        data['move_probs'] = list(self.move_probs)
        return data


@dataclass(frozen=True)
class TargetScaling:
    """Affine map of raw targets onto ``[-0.5, 0.5]``: ``z = (y - offset) / scale``."""
    __module__ = 'soibart'

    offset: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0.:
            raise ValueError(f'scale must be positive. But we got {self.scale}.')

    @classmethod
    def from_targets(cls, y: bst.typing.ArrayLike) -> 'TargetScaling':
        y = np.asarray(y, dtype=np.float64)
        lo, hi = float(y.min()), float(y.max())
        if hi == lo:
            raise ConstantTarget(f'All training targets equal {lo}.')
        return cls(offset=0.5 * (hi + lo), scale=hi - lo)

    def forward(self, y):
        return (np.asarray(y, dtype=np.float64) - self.offset) / self.scale

    def inverse(self, z):
        return self.offset + self.scale * np.asarray(z, dtype=np.float64)


@dataclass(frozen=True)
class PosteriorDraw:
    """One kept sweep: ``m`` trees and the noise sd (standardized units)."""
    __module__ = 'soibart'

    trees: Tuple[DecisionTree, ...]
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.:
            raise ValueError(f'sigma must be positive. But we got {self.sigma}.')
        if len(self.trees) < 1:
            raise ValueError('A draw holds at least one tree.')


@dataclass(frozen=True, eq=False)
class BartPosterior:
    """
    Post-burn-in draws of a fitted sum-of-trees model.

    The draws are kept in stacked heap arrays ``var``, ``cut`` and ``mu`` of
    shape ``(draws, trees, heap)``; :py:attr:`draws` materializes them as
    :py:class:`PosteriorDraw` objects.
    """
    __module__ = 'soibart'

    var: np.ndarray = field(repr=False)
    cut: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    scaling: TargetScaling
    feature_names: Tuple[str, ...]
    config: Optional[BartConfig] = None
    acceptance: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        assert self.var.ndim == 3 and self.var.shape == self.cut.shape == self.mu.shape, (
            f'Inconsistent draw arrays {self.var.shape}, {self.cut.shape}, {self.mu.shape}.'
        )
        sigma = np.asarray(self.sigma, dtype=np.float64).reshape(-1)
        assert sigma.size == self.var.shape[0], f'{sigma.size} sigmas for {self.var.shape[0]} draws.'
        assert np.all(sigma > 0.), 'Every sigma draw must be positive.'
        for name in ('var', 'cut', 'mu'):
            getattr(self, name).flags.writeable = False
        sigma.flags.writeable = False
        object.__setattr__(self, 'sigma', sigma)
        object.__setattr__(self, 'feature_names', tuple(self.feature_names))

    @property
    def n_draws(self) -> int:
        return int(self.var.shape[0])

    @property
    def n_trees(self) -> int:
        return int(self.var.shape[1])

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def sigma_raw(self) -> np.ndarray:
        """Noise sd per draw in raw target units."""
        return self.sigma * self.scaling.scale

    @property
    def draws(self) -> Tuple[PosteriorDraw, ...]:
        p = self.n_features
        return tuple(
            PosteriorDraw(
                trees=tuple(DecisionTree(self.var[d, t], self.cut[d, t], self.mu[d, t], p)
                            for t in range(self.n_trees)),
                sigma=float(self.sigma[d]),
            )
            for d in range(self.n_draws)
        )

    def forest_sum(self, X: bst.typing.ArrayLike) -> np.ndarray:
        """Sum-of-trees value per draw and row, standardized units, shape ``(draws, n)``."""
        return forest_predict(self.var, self.cut, self.mu, X, n_features=self.n_features)

    def variable_counts(self) -> np.ndarray:
        """Splits on every feature in every draw, shape ``(draws, p)``."""
        var = self.var.reshape(self.n_draws, -1).astype(np.int64)
        offsets = np.arange(self.n_draws)[:, None] * self.n_features
        used = np.where(var >= 0, var + offsets, -1)
        counts = np.bincount(used[used >= 0], minlength=self.n_draws * self.n_features)
        return counts.reshape(self.n_draws, self.n_features)

    def mean_variable_usage(self) -> np.ndarray:
        return self.variable_counts().mean(axis=0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'schema': POSTERIOR_SCHEMA,
            'version': POSTERIOR_VERSION,
            'feature_names': list(self.feature_names),
            'scaling': {'offset': self.scaling.offset, 'scale': self.scaling.scale},
            'config': None if self.config is None else self.config.to_dict(),
            'acceptance': dict(self.acceptance),
            'heap_depth': int(self.var.shape[2]).bit_length() - 2,
            'draws': [
                {'sigma': float(draw.sigma), 'trees': [tree_to_dict(tree) for tree in draw.trees]}
                for draw in self.draws
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BartPosterior':
        if data.get('schema') != POSTERIOR_SCHEMA:
            raise ValueError(f'Not a posterior snapshot (schema {data.get("schema")!r}).')
        if data.get('version') != POSTERIOR_VERSION:
            raise ValueError(f'Unsupported posterior snapshot version {data.get("version")!r}.')
        names = tuple(data['feature_names'])
        depth = int(data['heap_depth'])
        trees = [[tree_from_dict(t, len(names), depth) for t in draw['trees']] for draw in data['draws']]
        config = data.get('config')
        if config is not None:
            config = BartConfig(**{**config, 'move_probs': tuple(config['move_probs'])})
        return cls(
            var=np.array([[t.var for t in draw] for draw in trees], dtype=np.int16),
            cut=np.array([[t.cut for t in draw] for draw in trees]),
            mu=np.array([[t.mu for t in draw] for draw in trees]),
            sigma=np.array([draw['sigma'] for draw in data['draws']]),
            scaling=TargetScaling(**data['scaling']),
            feature_names=names,
            config=config,
            acceptance=dict(data.get('acceptance', {})),
        )

    def save(self, path: Union[str, os.PathLike]):
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> 'BartPosterior':
        with open(path, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


@set_module_as('soibart')
def fit(
    dataset,
    mask=None,
    config: BartConfig = BartConfig(),
    seed: int = 0,
) -> BartPosterior:
    """
    Fit the sum-of-trees model on the training rows of ``dataset``.

    Parameters
    ----------
    dataset : SupervisedDataset
      Lag features and targets.
    mask : SplitMask, optional
      Train/test assignment; ``None`` trains on every row.
    config : BartConfig
      Model and sampler settings.
    seed : int
      Chain seed. Identical inputs and seed give a bit-identical posterior.

    Raises
    ------
    TooFewRows
      With fewer than ``2 * min_leaf_size`` training rows.
    ConstantTarget
      When every training target is equal.
    """
    rows = np.asarray(dataset.rows, dtype=np.float64)
    targets = np.asarray(dataset.targets, dtype=np.float64)
    if mask is not None:
        if mask.n != targets.size:
            raise LengthMismatch(f'The mask covers {mask.n} rows, the dataset has {targets.size}.')
        rows, targets = rows[mask.train], targets[mask.train]
    if targets.size < 2 * config.min_leaf_size:
        raise TooFewRows(f'{targets.size} training rows, at least {2 * config.min_leaf_size} are needed.')
    scaling = TargetScaling.from_targets(targets)
    sampler = BartSampler(rows, scaling.forward(targets), config, derive_seed(seed))
    trace = sampler.run()
    return BartPosterior(
        var=trace.var,
        cut=trace.cut,
        mu=trace.mu,
        sigma=trace.sigma,
        scaling=scaling,
        feature_names=tuple(dataset.feature_names),
        config=config,
        acceptance=trace.acceptance,
    )


@set_module_as('soibart')
def predict_draws_batch(posterior: BartPosterior, X: bst.typing.ArrayLike) -> np.ndarray:
    """Per-draw predictions in raw units for every row of ``X``, shape ``(draws, n)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f'Expected a 2D matrix of rows, got shape {X.shape}.')
    return posterior.scaling.inverse(posterior.forest_sum(X))


@set_module_as('soibart')
def predict_draws(posterior: BartPosterior, x: bst.typing.ArrayLike) -> np.ndarray:
    """
    Posterior predictive draws of the regression function at ``x``.

    Entry ``d`` is the inverse-scaled sum over the trees of draw ``d``.

    Raises
    ------
    DimensionMismatch
      When ``x`` does not hold one value per feature.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != posterior.n_features:
        raise DimensionMismatch(f'Expected {posterior.n_features} features, got shape {x.shape}.')
    return predict_draws_batch(posterior, x[None])[:, 0]


@set_module_as('soibart')
def predict_mean(posterior: BartPosterior, x: bst.typing.ArrayLike) -> float:
    return float(np.mean(predict_draws(posterior, x)))


@set_module_as('soibart')
def predict_median(posterior: BartPosterior, x: bst.typing.ArrayLike) -> float:
    return predict_quantile(posterior, x, 0.5)


@set_module_as('soibart')
def predict_quantile(posterior: BartPosterior, x: bst.typing.ArrayLike, q: float) -> float:
    """Quantile ``q`` of the per-draw predictions, midpoint interpolation."""
    if not 0. < q < 1.:
        raise ValueError(f'q must be in (0, 1). But we got {q}.')
    return float(np.quantile(predict_draws(posterior, x), q, method='midpoint'))


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    """
    Relative variable importance from split counts.

    ``importance[j]`` is the mean number of splits on feature ``j`` per kept
    draw, divided by the across-feature mean, so the entries average to 1.
    """
    __module__ = 'soibart'

    feature_names: Tuple[str, ...]
    importance: np.ndarray
    usage: np.ndarray
    runs: int = 1

    @classmethod
    def from_usage(cls, feature_names: Sequence[str], usage: bst.typing.ArrayLike, runs: int = 1) -> 'ImportanceReport':
        usage = np.asarray(usage, dtype=np.float64).reshape(-1)
        assert usage.size == len(feature_names), f'{usage.size} counts for {len(feature_names)} features.'
        mean = usage.mean()
        # with no split at all every feature is equally (un)important
        importance = usage / mean if mean > 0. else np.ones_like(usage)
        return cls(tuple(feature_names), importance, usage, runs)

    def ranked(self) -> List[Tuple[str, float]]:
        order = np.argsort(-self.importance, kind='stable')
        return [(self.feature_names[i], float(self.importance[i])) for i in order]

    def to_rows(self) -> List[Dict[str, Any]]:
        return [
            {'feature': name, 'importance': float(value), 'usage': float(count)}
            for name, value, count in zip(self.feature_names, self.importance, self.usage)
        ]


@set_module_as('soibart')
def variable_importance(
    dataset,
    mask=None,
    config: BartConfig = BartConfig(m=20),
    runs: int = 10,
    seed: int = 0,
    n_jobs: Optional[int] = 1,
    feature_names: Optional[Sequence[str]] = None,
) -> ImportanceReport:
    """
    Split-count importance of a tree-starved model, averaged over runs.

    Run ``r`` fits a chain seeded with ``seed + r``; the per-draw split counts
    are averaged over kept draws, then over runs, then normalized to mean 1.
    """
    if runs < 1:
        raise ValueError(f'runs must be >= 1. But we got {runs}.')

    def one_run(r: int) -> np.ndarray:
        return fit(dataset, mask, config, seed + r).mean_variable_usage()

    usage = np.mean(parallel_map(one_run, range(runs), n_jobs), axis=0)
    names = tuple(feature_names) if feature_names is not None else tuple(dataset.feature_names)
    return ImportanceReport.from_usage(names, usage, runs)

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
Backfitting Metropolis-within-Gibbs sampler for the sum-of-trees model.

Every tree keeps its structure in heap arrays (see :py:mod:`soibart._tree`)
with split thresholds stored as indices into a per-feature cutpoint grid.
Training rows are pre-binned against the grid once, so routing and the
"both children keep ``min_leaf_size`` rows" check reduce to integer
comparisons and one ``bincount`` per candidate node.

The tree-structure prior is the usual depth law: a node at depth ``d`` splits
with probability ``alpha * (1 + d) ** -beta`` when at least one split rule is
available for its rows and it sits above ``max_depth``, and never otherwise.
A rule is drawn by picking a feature uniformly among those having a valid
cutpoint, then a cutpoint uniformly among that feature's valid ones. The
grow and change proposals draw rules from the same law, so rule terms cancel
in the acceptance ratios below.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Tuple

import jax.scipy.special
import numpy as np

from ._tree import DecisionTree, check_tree, heap_depth, route_rows

if TYPE_CHECKING:
    from ._bart import BartConfig

__all__ = [
    'BartSampler',
    'SamplerTrace',
    'cut_grid',
    'chi2_quantile',
    'ols_residual_sd',
    'sample_prior_tree',
]

_log = logging.getLogger(__name__)

MOVES = ('grow', 'prune', 'change', 'swap')


def cut_grid(X: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Candidate thresholds: ``size`` equally spaced interior quantiles per feature.

    Returns the ``(p, C)`` cutpoint matrix, padded with ``+inf``, and the number
    of distinct cutpoints of every feature.
    """
    X = np.asarray(X, dtype=np.float64)
    probs = np.linspace(0., 1., size + 2)[1:-1]
    per_feature = [np.unique(np.quantile(X[:, j], probs)) for j in range(X.shape[1])]
    width = max(c.size for c in per_feature)
    cuts = np.full((X.shape[1], width), np.inf)
    for j, c in enumerate(per_feature):
        cuts[j, :c.size] = c
    return cuts, np.array([c.size for c in per_feature], dtype=np.int64)


def chi2_quantile(prob: float, dof: float) -> float:
    """Quantile of the chi-square distribution, by bisection on its CDF."""
    if not 0. < prob < 1.:
        raise ValueError(f'prob must be in (0, 1). But we got {prob}.')

    def cdf(x):
        return float(jax.scipy.special.gammainc(dof / 2., x / 2.))

    lo, hi = 0., max(1., float(dof))
    while cdf(hi) < prob:
        hi *= 2.
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < prob:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-9 * hi:
            break
    return 0.5 * (lo + hi)


def ols_residual_sd(X: np.ndarray, y: np.ndarray) -> float:
    """Residual standard deviation of a least-squares fit with intercept, ``std(y)`` when underdetermined."""
    n, p = X.shape
    if n <= p + 1:
        return float(np.std(y))
    design = np.column_stack([np.ones(n), X])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    sd = math.sqrt(float(resid @ resid) / (n - p - 1))
    return sd if sd > 0. else float(np.std(y))


@dataclass
class SamplerTrace:
    """
    Raw output of one chain: kept draws in heap layout plus chain summaries.

    ``var``, ``cut`` and ``mu`` have shape ``(draws, trees, heap)``; ``cut``
    holds raw feature values.
    """
    __module__ = 'soibart'

    var: np.ndarray
    cut: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    acceptance: Dict[str, float] = field(default_factory=dict)
    sigma_hat: float = 1.
    lam: float = 1.
    tau: float = 1.


class BartSampler:
    """
    One backfitting chain over standardized targets.

    Parameters
    ----------
    X : ndarray
      Training rows, shape ``(n, p)``.
    y : ndarray
      Standardized training targets, shape ``(n,)``.
    config : BartConfig
      Priors, chain length and proposal probabilities.
    seed : int
      Seed of the chain's ``numpy.random.Generator``.
    """
    __module__ = 'soibart'

    def __init__(self, X: np.ndarray, y: np.ndarray, config: 'BartConfig', seed: int):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64).reshape(-1)
        assert self.X.ndim == 2 and self.X.shape[0] == self.y.size, (
            f'Inconsistent shapes {self.X.shape} and {self.y.shape}.'
        )
        self.config = config
        self.n, self.p = self.X.shape
        self.rng = np.random.default_rng(seed)

        # cutpoint grid and binned rows
        self.cuts, self.n_cuts = cut_grid(self.X, config.cut_grid)
        width = self.cuts.shape[1]
        self._xbin = np.stack(
            [np.searchsorted(self.cuts[j, :self.n_cuts[j]], self.X[:, j], side='left') for j in range(self.p)],
            axis=1,
        )
        self._offsets = np.arange(self.p) * (width + 1)
        self._real_cut = np.arange(width)[None, :] < self.n_cuts[:, None]

        # depth-law prior per heap slot
        self.size = 2 ** (config.max_depth + 1)
        self._depth = heap_depth(self.size)
        depth = np.maximum(self._depth, 0)
        split_prob = config.alpha * (1. + depth) ** (-config.beta)
        split_prob[self._depth >= config.max_depth] = 0.
        with np.errstate(divide='ignore'):
            self._log_ps = np.log(split_prob)
        self._log_1m_ps = np.log1p(-split_prob)
        self._parent = np.arange(self.size) // 2

        probs = np.asarray(config.move_probs, dtype=np.float64)
        self._move_cdf = np.cumsum(probs)
        self._log_grow_over_prune = math.log(probs[0]) - math.log(probs[1])

        # leaf and noise priors
        self.tau = 0.5 / (config.k * math.sqrt(config.m))
        self.sigma_hat = ols_residual_sd(self.X, self.y)
        self.lam = self.sigma_hat ** 2 * chi2_quantile(1. - config.q, config.nu) / config.nu
        self.sigma = self.sigma_hat

        # chain state
        m = config.m
        self.var = np.full((m, self.size), -1, dtype=np.int64)
        self.split = np.zeros((m, self.size), dtype=np.int64)
        self.mu = np.zeros((m, self.size))
        self.mu[:, 1] = self.y.mean() / m
        self.leaf_of = np.ones((m, self.n), dtype=np.int64)
        self.fit = np.full(self.n, self.y.mean())
        self._growable = np.full((m, self.size), -1, dtype=np.int8)
        self.proposed = np.zeros(len(MOVES), dtype=np.int64)
        self.accepted = np.zeros(len(MOVES), dtype=np.int64)

    # ------------------------------------------------------------------
    # data-dependent helpers
    # ------------------------------------------------------------------

    def _valid_rules(self, rows: np.ndarray) -> np.ndarray:
        """``(p, C)`` mask of rules leaving at least ``min_leaf_size`` rows on both sides."""
        size = self.config.min_leaf_size
        n = rows.size
        width = self.cuts.shape[1]
        if n < 2 * size:
            return np.zeros((self.p, width), dtype=bool)
        bins = (self._xbin[rows] + self._offsets).ravel()
        counts = np.bincount(bins, minlength=self.p * (width + 1)).reshape(self.p, width + 1)
        left = np.cumsum(counts[:, :width], axis=1)
        return (left >= size) & (n - left >= size) & self._real_cut

    def _can_split(self, node: int, rows: np.ndarray) -> bool:
        if self._depth[node] >= self.config.max_depth:
            return False
        return bool(self._valid_rules(rows).any())

    def _is_growable(self, t: int, node: int) -> bool:
        cache = self._growable[t]
        if cache[node] < 0:
            rows = np.flatnonzero(self.leaf_of[t] == node)
            cache[node] = self._can_split(node, rows)
        return bool(cache[node])

    def _draw_rule(self, valid: np.ndarray) -> Tuple[int, int]:
        n_valid = valid.sum(axis=1)
        features = np.flatnonzero(n_valid > 0)
        j = int(features[self.rng.integers(features.size)])
        choices = np.flatnonzero(valid[j])
        return j, int(choices[self.rng.integers(choices.size)])

    def _leaves(self, var: np.ndarray) -> np.ndarray:
        exists = np.zeros(self.size, dtype=bool)
        exists[1] = True
        exists[2:] = var[self._parent[2:]] >= 0
        return np.flatnonzero(exists & (var < 0))

    @staticmethod
    def _nogs(var: np.ndarray) -> np.ndarray:
        # internal nodes whose children are both leaves
        internal = np.flatnonzero(var >= 0)
        return internal[(var[2 * internal] < 0) & (var[2 * internal + 1] < 0)]

    def _subtree_rows(self, t: int, node: int) -> np.ndarray:
        leaf = self.leaf_of[t]
        shift = self._depth[leaf] - self._depth[node]
        ancestor = np.where(shift >= 0, leaf >> np.maximum(shift, 0), 0)
        return np.flatnonzero(ancestor == node)

    def _route(self, var: np.ndarray, split: np.ndarray, node: int, rows: np.ndarray) -> np.ndarray:
        current = np.full(rows.size, node, dtype=np.int64)
        while True:
            v = var[current]
            internal = v >= 0
            if not internal.any():
                return current
            right = self._xbin[rows, np.maximum(v, 0)] > split[current]
            current = np.where(internal, 2 * current + right, current)

    def _subtree_log_prior(self, var: np.ndarray, split: np.ndarray, node: int, rows: np.ndarray) -> float:
        """Log prior mass of the subtree below ``node`` given the rows reaching it."""
        valid = self._valid_rules(rows)
        j = var[node]
        if j < 0:
            if self._depth[node] < self.config.max_depth and valid.any():
                return float(self._log_1m_ps[node])
            return 0.
        k = split[node]
        if not valid[j, k]:
            return -math.inf
        n_valid = valid.sum(axis=1)
        lp = self._log_ps[node] - math.log(np.count_nonzero(n_valid)) - math.log(n_valid[j])
        go_left = self._xbin[rows, j] <= k
        lp += self._subtree_log_prior(var, split, 2 * node, rows[go_left])
        if lp == -math.inf:
            return lp
        return float(lp + self._subtree_log_prior(var, split, 2 * node + 1, rows[~go_left]))

    # ------------------------------------------------------------------
    # marginal likelihood of leaf values integrated out
    # ------------------------------------------------------------------

    def _leaf_loglik(self, counts, sums) -> float:
        if not self.config.use_likelihood:
            return 0.
        s2 = self.sigma ** 2
        t2 = self.tau ** 2
        counts = np.asarray(counts, dtype=np.float64)
        sums = np.asarray(sums, dtype=np.float64)
        return float(np.sum(-0.5 * np.log1p(counts * t2 / s2) + t2 * sums ** 2 / (2. * s2 * (s2 + counts * t2))))

    def _loglik_rows(self, r: np.ndarray, rows: np.ndarray) -> float:
        return self._leaf_loglik(rows.size, r[rows].sum())

    def _loglik_assignment(self, r: np.ndarray, rows: np.ndarray, leaves: np.ndarray) -> float:
        counts = np.bincount(leaves, minlength=self.size)
        sums = np.bincount(leaves, weights=r[rows], minlength=self.size)
        return self._leaf_loglik(counts, sums)

    def _accept(self, log_ratio: float) -> bool:
        return bool(math.log(self.rng.random()) < log_ratio)

    # ------------------------------------------------------------------
    # structural moves
    # ------------------------------------------------------------------

    def _grow(self, t: int, r: np.ndarray) -> bool:
        var = self.var[t]
        growable = [int(i) for i in self._leaves(var) if self._is_growable(t, i)]
        b = len(growable)
        if b == 0:
            return False
        node = growable[self.rng.integers(b)]
        rows = np.flatnonzero(self.leaf_of[t] == node)
        j, k = self._draw_rule(self._valid_rules(rows))
        go_left = self._xbin[rows, j] <= k
        left, right = rows[go_left], rows[~go_left]
        left_growable = self._can_split(2 * node, left)
        right_growable = self._can_split(2 * node + 1, right)
        w_new = self._nogs(var).size + 1 - int(node > 1 and var[node ^ 1] < 0)

        log_ratio = (
            self._loglik_rows(r, left) + self._loglik_rows(r, right) - self._loglik_rows(r, rows)
            + self._log_ps[node] - self._log_1m_ps[node]
            + (self._log_1m_ps[2 * node] if left_growable else 0.)
            + (self._log_1m_ps[2 * node + 1] if right_growable else 0.)
            - self._log_grow_over_prune + math.log(b) - math.log(w_new)
        )
        if not self._accept(log_ratio):
            return False
        var[node] = j
        self.split[t, node] = k
        self.leaf_of[t, left] = 2 * node
        self.leaf_of[t, right] = 2 * node + 1
        self._growable[t] = -1
        self._growable[t, 2 * node] = left_growable
        self._growable[t, 2 * node + 1] = right_growable
        return True

    def _prune(self, t: int, r: np.ndarray) -> bool:
        var = self.var[t]
        nogs = self._nogs(var)
        w = nogs.size
        if w == 0:
            return False
        node = int(nogs[self.rng.integers(w)])
        b = sum(self._is_growable(t, int(i)) for i in self._leaves(var))
        left_growable = self._is_growable(t, 2 * node)
        right_growable = self._is_growable(t, 2 * node + 1)
        b_new = b - int(left_growable) - int(right_growable) + 1
        leaf = self.leaf_of[t]
        left = np.flatnonzero(leaf == 2 * node)
        right = np.flatnonzero(leaf == 2 * node + 1)
        rows = np.concatenate([left, right])

        log_ratio = (
            self._loglik_rows(r, rows) - self._loglik_rows(r, left) - self._loglik_rows(r, right)
            + self._log_1m_ps[node] - self._log_ps[node]
            - (self._log_1m_ps[2 * node] if left_growable else 0.)
            - (self._log_1m_ps[2 * node + 1] if right_growable else 0.)
            + self._log_grow_over_prune + math.log(w) - math.log(b_new)
        )
        if not self._accept(log_ratio):
            return False
        var[node] = -1
        self.split[t, node] = 0
        self.leaf_of[t, rows] = node
        self._growable[t] = -1
        self._growable[t, node] = 1
        return True

    def _propose_rules(self, t: int, node: int, new_var: np.ndarray, new_split: np.ndarray,
                       r: np.ndarray, log_correction: float = 0.) -> bool:
        # shared acceptance step of change and swap: the subtree below ``node`` is re-routed
        var, split = self.var[t], self.split[t]
        rows = self._subtree_rows(t, node)
        lp_new = self._subtree_log_prior(new_var, new_split, node, rows)
        if lp_new == -math.inf:
            return False
        lp_old = self._subtree_log_prior(var, split, node, rows)
        new_leaves = self._route(new_var, new_split, node, rows)
        log_ratio = (
            self._loglik_assignment(r, rows, new_leaves) - self._loglik_assignment(r, rows, self.leaf_of[t, rows])
            + lp_new - lp_old + log_correction
        )
        if not self._accept(log_ratio):
            return False
        self.var[t] = new_var
        self.split[t] = new_split
        self.leaf_of[t, rows] = new_leaves
        self._growable[t] = -1
        return True

    def _change(self, t: int, r: np.ndarray) -> bool:
        internal = np.flatnonzero(self.var[t] >= 0)
        if internal.size == 0:
            return False
        node = int(internal[self.rng.integers(internal.size)])
        valid = self._valid_rules(self._subtree_rows(t, node))
        j, k = self._draw_rule(valid)
        n_valid = valid.sum(axis=1)
        old_j = self.var[t, node]
        new_var, new_split = self.var[t].copy(), self.split[t].copy()
        new_var[node], new_split[node] = j, k
        # the node's own rule term is part of the subtree prior; the proposal draws it from the same law
        correction = math.log(n_valid[j]) - math.log(n_valid[old_j])
        return self._propose_rules(t, node, new_var, new_split, r, correction)

    def _swap(self, t: int, r: np.ndarray) -> bool:
        var, split = self.var[t], self.split[t]
        internal = np.flatnonzero(var >= 0)
        children = internal[internal > 1]
        if children.size == 0:
            return False
        child = int(children[self.rng.integers(children.size)])
        node, sibling = child // 2, child ^ 1
        new_var, new_split = var.copy(), split.copy()
        new_var[node], new_split[node] = var[child], split[child]
        new_var[child], new_split[child] = var[node], split[node]
        if var[sibling] >= 0 and var[sibling] == var[child] and split[sibling] == split[child]:
            new_var[sibling], new_split[sibling] = var[node], split[node]
        return self._propose_rules(t, node, new_var, new_split, r)

    # ------------------------------------------------------------------
    # conjugate draws
    # ------------------------------------------------------------------

    def _draw_leaves(self, t: int, r: np.ndarray) -> np.ndarray:
        leaf = self.leaf_of[t]
        leaves = self._leaves(self.var[t])
        mu = np.zeros(self.size)
        noise = self.rng.standard_normal(leaves.size)
        if self.config.use_likelihood:
            counts = np.bincount(leaf, minlength=self.size)[leaves]
            sums = np.bincount(leaf, weights=r, minlength=self.size)[leaves]
            precision = counts / self.sigma ** 2 + 1. / self.tau ** 2
            mu[leaves] = sums / self.sigma ** 2 / precision + noise / np.sqrt(precision)
        else:
            mu[leaves] = noise * self.tau
        return mu

    def _draw_sigma(self):
        nu = self.config.nu
        if self.config.use_likelihood:
            resid = self.y - self.fit
            ssr, dof = float(resid @ resid), nu + self.n
        else:
            ssr, dof = 0., nu
        self.sigma = math.sqrt((nu * self.lam + ssr) / self.rng.chisquare(dof))

    # ------------------------------------------------------------------
    # driver
    # ------------------------------------------------------------------

    def _update_tree(self, t: int):
        contribution = self.mu[t][self.leaf_of[t]]
        r = self.y - self.fit + contribution
        move = int(np.searchsorted(self._move_cdf, self.rng.random() * self._move_cdf[-1], side='right'))
        move = min(move, len(MOVES) - 1)
        self.proposed[move] += 1
        accepted = (self._grow, self._prune, self._change, self._swap)[move](t, r)
        self.accepted[move] += accepted
        self.mu[t] = self._draw_leaves(t, r)
        self.fit += self.mu[t][self.leaf_of[t]] - contribution
        if self.config.check_trees:
            self._check(t)

    def _check(self, t: int):
        tree = self.tree(t)
        check_tree(tree, self.X, self.config.min_leaf_size)
        routed = route_rows(tree.var, tree.cut, self.X)
        assert np.array_equal(routed, self.leaf_of[t]), f'Tree {t}: stored leaf assignments are stale.'

    def _raw_cuts(self, var: np.ndarray, split: np.ndarray) -> np.ndarray:
        internal = var >= 0
        return np.where(internal, self.cuts[np.maximum(var, 0), np.where(internal, split, 0)], 0.)

    def tree(self, t: int) -> DecisionTree:
        """The current state of tree ``t`` with raw thresholds."""
        return DecisionTree(self.var[t], self._raw_cuts(self.var[t], self.split[t]), self.mu[t], self.p)

    def step(self):
        """One sweep over all trees followed by the noise update."""
        for t in range(self.config.m):
            self._update_tree(t)
        # refresh the running fit to keep rounding from accumulating
        self.fit = self.mu[np.arange(self.config.m)[:, None], self.leaf_of].sum(axis=0)
        if self.config.sample_sigma:
            self._draw_sigma()

    def run(self) -> SamplerTrace:
        config = self.config
        n_keep = config.n_iter - config.burn_in
        shape = (n_keep, config.m, self.size)
        var_out = np.empty(shape, dtype=np.int16)
        cut_out = np.empty(shape)
        mu_out = np.empty(shape)
        sigma_out = np.empty(n_keep)
        for it in range(config.n_iter):
            self.step()
            if config.log_every and (it + 1) % config.log_every == 0:
                _log.debug('iteration %d/%d, sigma %.4g', it + 1, config.n_iter, self.sigma)
            keep = it - config.burn_in
            if keep >= 0:
                var_out[keep] = self.var
                cut_out[keep] = self._raw_cuts(self.var, self.split)
                mu_out[keep] = self.mu
                sigma_out[keep] = self.sigma

        # drop heap levels no kept tree reaches
        deepest = int(self._depth[np.flatnonzero((var_out >= 0).any(axis=(0, 1)))].max(initial=-1)) + 1
        used = 2 ** (deepest + 1)
        acceptance = {
            name: float(self.accepted[i] / self.proposed[i]) if self.proposed[i] else 0.
            for i, name in enumerate(MOVES)
        }
        _log.info(
            'kept %d draws of %d trees; acceptance %s; mean sigma %.4g',
            n_keep, config.m, ', '.join(f'{k} {v:.2f}' for k, v in acceptance.items()), float(sigma_out.mean()),
        )
        return SamplerTrace(
            var=var_out[:, :, :used],
            cut=cut_out[:, :, :used],
            mu=mu_out[:, :, :used],
            sigma=sigma_out,
            acceptance=acceptance,
            sigma_hat=self.sigma_hat,
            lam=self.lam,
            tau=self.tau,
        )


def sample_prior_tree(config: 'BartConfig', n_features: int, rng: np.random.Generator) -> DecisionTree:
    """
    Draw a tree from the structure prior without data.

    Every rule is available at every node, so a node at depth ``d`` below
    ``max_depth`` splits with probability ``alpha * (1 + d) ** -beta``.
    Split features are uniform, thresholds uniform on ``[0, 1)`` and leaf
    values ``N(0, tau)`` with ``tau = 0.5 / (k * sqrt(m))``.
    """
    size = 2 ** (config.max_depth + 1)
    tau = 0.5 / (config.k * math.sqrt(config.m))
    var = np.full(size, -1, dtype=np.int64)
    cut = np.zeros(size)
    mu = np.zeros(size)
    frontier: List[int] = [1]
    while frontier:
        node = frontier.pop()
        depth = node.bit_length() - 1
        if depth < config.max_depth and rng.random() < config.alpha * (1. + depth) ** (-config.beta):
            var[node] = rng.integers(n_features)
            cut[node] = rng.random()
            frontier.extend((2 * node, 2 * node + 1))
        else:
            mu[node] = rng.normal(0., tau)
    return DecisionTree(var, cut, mu, n_features)

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
Binary regression trees with axis-aligned splits.

A tree is stored in heap order: node ``1`` is the root and node ``i`` has the
children ``2 * i`` (left) and ``2 * i + 1`` (right). Index ``0`` is unused.
For a tree of maximum depth ``D`` the three node arrays have ``2 ** (D + 1)``
entries:

- ``var[i]``: the split feature of an internal node, ``-1`` for leaves and
  for unused slots;
- ``cut[i]``: the split threshold, a raw feature value;
- ``mu[i]``: the leaf value (standardized target units).

A row goes left at node ``i`` iff ``x[var[i]] <= cut[i]``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import brainstate as bst
import jax
import jax.numpy as jnp
import numpy as np

from ._errors import DimensionMismatch
from ._misc import set_module_as

__all__ = [
    'Leaf',
    'Internal',
    'DecisionTree',
    'TreeStats',
    'predict_tree',
    'tree_stats',
    'variable_usage',
    'check_tree',
    'tree_to_dict',
    'tree_from_dict',
    'route_rows',
    'forest_predict',
    'paired_forest_sum',
]

DEFAULT_MAX_DEPTH = 6


@dataclass(frozen=True)
class Leaf:
    """A terminal node holding the value ``mu``."""
    __module__ = 'soibart'

    mu: float


@dataclass(frozen=True)
class Internal:
    """
    A split node: rows with ``x[split_var] <= split_cut`` go to ``left``.
    """
    __module__ = 'soibart'

    split_var: int
    split_cut: float
    left: 'TreeNode'
    right: 'TreeNode'


TreeNode = Union[Leaf, Internal]


def heap_depth(size: int) -> np.ndarray:
    """Depth of every heap index below ``size`` (index 0 gets depth -1)."""
    index = np.arange(size)
    depth = np.full(size, -1, dtype=np.int64)
    depth[1:] = np.floor(np.log2(index[1:])).astype(np.int64)
    return depth


class DecisionTree:
    """
    An immutable regression tree in heap layout.

    Parameters
    ----------
    var : ndarray of int
      Split feature per heap slot, ``-1`` for leaves and unused slots.
    cut : ndarray of float
      Split threshold per heap slot.
    mu : ndarray of float
      Leaf value per heap slot.
    n_features : int
      The number of features ``p`` of the rows the tree routes.
    """
    __module__ = 'soibart'

    __slots__ = ('var', 'cut', 'mu', 'n_features')

    def __init__(self, var, cut, mu, n_features: int):
        var = np.array(var, dtype=np.int64).reshape(-1)
        cut = np.array(cut, dtype=np.float64).reshape(-1)
        mu = np.array(mu, dtype=np.float64).reshape(-1)
        size = var.size
        assert size >= 2 and size & (size - 1) == 0, f'The heap size must be a power of two >= 2. Got {size}.'
        assert cut.size == size and mu.size == size, f'Inconsistent heap sizes {var.size}, {cut.size}, {mu.size}.'
        for a in (var, cut, mu):
            a.flags.writeable = False
        object.__setattr__(self, 'var', var)
        object.__setattr__(self, 'cut', cut)
        object.__setattr__(self, 'mu', mu)
        object.__setattr__(self, 'n_features', int(n_features))

    def __setattr__(self, key, value):
        raise AttributeError(f'{self.__class__.__name__} is immutable.')

    @property
    def heap_size(self) -> int:
        return int(self.var.size)

    @property
    def max_depth(self) -> int:
        return int(self.var.size).bit_length() - 2

    def is_internal(self, node: int) -> bool:
        return bool(self.var[node] >= 0)

    def __eq__(self, other):
        if not isinstance(other, DecisionTree):
            return NotImplemented
        return (self.n_features == other.n_features
                and np.array_equal(self.var, other.var)
                and np.array_equal(self.cut[self.var >= 0], other.cut[other.var >= 0])
                and np.array_equal(self._leaf_values(), other._leaf_values()))

    def __hash__(self):
        return hash((self.n_features, self.var.tobytes()))

    def __repr__(self):
        stats = tree_stats(self)
        return (f'{self.__class__.__name__}(n_features={self.n_features}, depth={stats.depth}, '
                f'leaves={stats.leaf_count})')

    def _leaf_values(self) -> Dict[int, float]:
        return {i: float(self.mu[i]) for i in _leaf_nodes(self.var)}

    @classmethod
    def leaf(cls, mu: float, n_features: int, max_depth: int = DEFAULT_MAX_DEPTH) -> 'DecisionTree':
        size = 2 ** (max_depth + 1)
        var = np.full(size, -1, dtype=np.int64)
        mu_arr = np.zeros(size)
        mu_arr[1] = mu
        return cls(var, np.zeros(size), mu_arr, n_features)

    @classmethod
    def from_node(cls, root: TreeNode, n_features: int, max_depth: int = DEFAULT_MAX_DEPTH) -> 'DecisionTree':
        """Lay out a nested node structure in heap order."""
        size = 2 ** (max_depth + 1)
        var = np.full(size, -1, dtype=np.int64)
        cut = np.zeros(size)
        mu = np.zeros(size)
        stack: List[Tuple[int, TreeNode]] = [(1, root)]
        while stack:
            index, node = stack.pop()
            if isinstance(node, Leaf):
                mu[index] = node.mu
            elif isinstance(node, Internal):
                if 2 * index >= size:
                    raise ValueError(f'The tree is deeper than max_depth={max_depth}.')
                if not 0 <= node.split_var < n_features:
                    raise ValueError(f'split_var must be in [0, {n_features}). But we got {node.split_var}.')
                var[index] = node.split_var
                cut[index] = node.split_cut
                stack.append((2 * index, node.left))
                stack.append((2 * index + 1, node.right))
            else:
                raise TypeError(f'Expected Leaf or Internal, got {type(node)}.')
        return cls(var, cut, mu, n_features)

    @property
    def root(self) -> TreeNode:
        """The tree as nested :py:class:`Leaf` / :py:class:`Internal` nodes."""

        def build(index: int) -> TreeNode:
            v = int(self.var[index])
            if v < 0:
                return Leaf(float(self.mu[index]))
            return Internal(v, float(self.cut[index]), build(2 * index), build(2 * index + 1))

        return build(1)


def _leaf_nodes(var: np.ndarray) -> List[int]:
    leaves = []
    stack = [1]
    while stack:
        i = stack.pop()
        if var[i] >= 0:
            stack.extend((2 * i + 1, 2 * i))
        else:
            leaves.append(i)
    return sorted(leaves)


@dataclass(frozen=True)
class TreeStats:
    __module__ = 'soibart'

    depth: int
    leaf_count: int
    internal_count: int


@set_module_as('soibart')
def predict_tree(tree: DecisionTree, x: bst.typing.ArrayLike) -> float:
    """
    Route ``x`` to its leaf and return the leaf value.

    Raises
    ------
    DimensionMismatch
      When ``x`` does not have ``tree.n_features`` entries.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != tree.n_features:
        raise DimensionMismatch(f'The tree expects {tree.n_features} features, got {x.size}.')
    node = 1
    while tree.var[node] >= 0:
        node = 2 * node + (0 if x[tree.var[node]] <= tree.cut[node] else 1)
    return float(tree.mu[node])


@set_module_as('soibart')
def route_rows(var: np.ndarray, cut: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Heap index of the leaf reached by every row of ``X`` in one tree."""
    X = np.asarray(X, dtype=np.float64)
    node = np.ones(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    for _ in range(int(var.size).bit_length() - 2):
        v = var[node]
        internal = v >= 0
        if not internal.any():
            break
        right = X[rows, np.maximum(v, 0)] > cut[node]
        node = np.where(internal, 2 * node + right, node)
    return node


@set_module_as('soibart')
def tree_stats(tree: DecisionTree) -> TreeStats:
    """Depth, leaf count and internal-node count of ``tree``."""
    leaves = _leaf_nodes(tree.var)
    depth = max(int(i).bit_length() - 1 for i in leaves)
    return TreeStats(depth=depth, leaf_count=len(leaves), internal_count=len(leaves) - 1)


@set_module_as('soibart')
def variable_usage(tree: DecisionTree) -> np.ndarray:
    """Number of internal nodes splitting on each feature."""
    used = tree.var[tree.var >= 0]
    return np.bincount(used, minlength=tree.n_features).astype(np.int64)


@set_module_as('soibart')
def check_tree(
    tree: DecisionTree,
    X: Optional[np.ndarray] = None,
    min_leaf_size: int = 1,
) -> None:
    """
    Validate the structure of ``tree``.

    Every internal node must have a parent that is internal (or be the root),
    split on a feature in ``[0, n_features)`` at a finite threshold, and sit
    above the maximum depth. When training rows ``X`` are given, every leaf
    must receive at least ``min_leaf_size`` of them.

    Raises
    ------
    ValueError
      Describing the first violated property.
    """
    var, cut = tree.var, tree.cut
    internal = np.flatnonzero(var >= 0)
    if internal.size:
        if internal.min() < 1:
            raise ValueError('Heap slot 0 must stay unused.')
        if internal.max() >= var.size // 2:
            raise ValueError(f'Internal node {internal.max()} lies at the maximum depth.')
        orphans = internal[(internal > 1) & (var[internal // 2] < 0)]
        if orphans.size:
            raise ValueError(f'Internal node {orphans[0]} hangs below a leaf.')
        if var[internal].max() >= tree.n_features:
            raise ValueError(f'A split variable is outside [0, {tree.n_features}).')
        if not np.all(np.isfinite(cut[internal])):
            raise ValueError('A split threshold is not finite.')
    if X is not None:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != tree.n_features:
            raise DimensionMismatch(f'The tree expects {tree.n_features} features, got {X.shape[1]}.')
        counts = np.bincount(route_rows(var, cut, X), minlength=var.size)
        for leaf in _leaf_nodes(var):
            if counts[leaf] < min_leaf_size:
                raise ValueError(f'Leaf {leaf} holds {counts[leaf]} rows, fewer than {min_leaf_size}.')


@set_module_as('soibart')
def tree_to_dict(tree: DecisionTree) -> Dict[str, Any]:
    """
    Nested JSON-compatible record of ``tree``.

    Leaves are ``{"type": "leaf", "mu": float}``; internal nodes are
    ``{"type": "internal", "split_var": int, "split_cut": float, "left": ..., "right": ...}``.
    """

    def encode(node: TreeNode) -> Dict[str, Any]:
        if isinstance(node, Leaf):
            return {'type': 'leaf', 'mu': node.mu}
        return {
            'type': 'internal',
            'split_var': node.split_var,
            'split_cut': node.split_cut,
            'left': encode(node.left),
            'right': encode(node.right),
        }

    return encode(tree.root)


@set_module_as('soibart')
def tree_from_dict(data: Dict[str, Any], n_features: int, max_depth: int = DEFAULT_MAX_DEPTH) -> DecisionTree:
    """Inverse of :py:func:`tree_to_dict`."""

    def decode(record: Dict[str, Any]) -> TreeNode:
        kind = record.get('type')
        if kind == 'leaf':
            return Leaf(float(record['mu']))
        if kind == 'internal':
            return Internal(int(record['split_var']), float(record['split_cut']),
                            decode(record['left']), decode(record['right']))
        raise ValueError(f'Unknown node type {kind!r}.')

    return DecisionTree.from_node(decode(data), n_features, max_depth)


# ---------------------------------------------------------------------------
# Batched evaluation
#
# Thresholds and features are compared through order-preserving 64-bit keys
# split into two uint32 words, so routing in the jitted kernel agrees exactly
# with the float64 rule ``x <= cut`` without enabling 64-bit JAX types.
# ---------------------------------------------------------------------------


def order_keys(values: bst.typing.ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """High and low uint32 words of an order-preserving encoding of float64 values."""
    a = np.asarray(values, dtype=np.float64) + 0.0  # folds -0.0 into +0.0
    bits = a.view(np.uint64)
    negative = (bits >> np.uint64(63)).astype(bool)
    keys = np.where(negative, ~bits, bits | np.uint64(1 << 63))
    return (keys >> np.uint64(32)).astype(np.uint32), (keys & np.uint64(0xFFFFFFFF)).astype(np.uint32)


def _walk(var, cut_hi, cut_lo, x_hi, x_lo, depth):
    def body(_, node):
        v = var[node]
        j = jnp.maximum(v, 0)
        left = (x_hi[j] < cut_hi[node]) | ((x_hi[j] == cut_hi[node]) & (x_lo[j] <= cut_lo[node]))
        child = 2 * node + jnp.where(left, 0, 1)
        return jnp.where(v >= 0, child, node)

    return jax.lax.fori_loop(0, depth, body, jnp.int32(1))


# (trees, rows) -> leaf index per tree and row
_per_row = jax.vmap(_walk, in_axes=(None, None, None, 0, 0, None))
_per_tree = jax.vmap(_per_row, in_axes=(0, 0, 0, None, None, None))


@functools.partial(jax.jit, static_argnames=('depth',))
def _forest_leaves(var, cut_hi, cut_lo, x_hi, x_lo, depth):
    # (draws, trees, heap) x (rows, features) -> (draws, trees, rows)
    return jax.vmap(_per_tree, in_axes=(0, 0, 0, None, None, None))(var, cut_hi, cut_lo, x_hi, x_lo, depth)


@functools.partial(jax.jit, static_argnames=('depth',))
def _paired_leaves(var, cut_hi, cut_lo, index, x_hi, x_lo, depth):
    # row r is routed through the trees of draw index[r] -> (rows, trees)
    def one(d, xh, xl):
        return jax.vmap(_walk, in_axes=(0, 0, 0, None, None, None))(var[d], cut_hi[d], cut_lo[d], xh, xl, depth)

    return jax.vmap(one)(index, x_hi, x_lo)


def _as_forest(var, cut, mu):
    var = np.asarray(var)
    cut = np.asarray(cut, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if var.ndim == 2:
        var, cut, mu = var[None], cut[None], mu[None]
    assert var.ndim == 3 and var.shape == cut.shape == mu.shape, (
        f'Expected (draws, trees, heap) arrays, got {var.shape}, {cut.shape}, {mu.shape}.'
    )
    return var, cut, mu


def _as_rows(X, n_features: Optional[int]) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None]
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionMismatch(f'Expected {n_features} features per row, got {X.shape[1]}.')
    return X


@set_module_as('soibart')
def forest_predict(
    var: np.ndarray,
    cut: np.ndarray,
    mu: np.ndarray,
    X: bst.typing.ArrayLike,
    n_features: Optional[int] = None,
    chunk_size: int = 1 << 22,
) -> np.ndarray:
    """
    Evaluate stacks of tree ensembles on a batch of rows.

    Parameters
    ----------
    var, cut, mu : ndarray
      Heap arrays of shape ``(draws, trees, heap)`` (or ``(trees, heap)`` for
      a single ensemble).
    X : ArrayLike
      Rows of shape ``(n, p)``.
    n_features : int, optional
      When given, ``X`` must have this many columns.
    chunk_size : int
      Upper bound on ``draws * trees * n`` leaf lookups per kernel call.

    Returns
    -------
    ndarray
      Float64 array of shape ``(draws, n)`` holding the sum over trees of the
      leaf values reached by every row.
    """
    var, cut, mu = _as_forest(var, cut, mu)
    X = _as_rows(X, n_features)
    n_draws, n_trees, size = var.shape
    depth = size.bit_length() - 2
    cut_hi, cut_lo = order_keys(cut)
    x_hi, x_lo = order_keys(X)
    var32 = var.astype(np.int32)
    step = max(1, chunk_size // max(1, n_trees * X.shape[0]))
    out = np.empty((n_draws, X.shape[0]), dtype=np.float64)
    trees = np.arange(n_trees)[:, None]
    for start in range(0, n_draws, step):
        stop = min(n_draws, start + step)
        leaves = np.asarray(_forest_leaves(var32[start:stop], cut_hi[start:stop], cut_lo[start:stop],
                                           x_hi, x_lo, depth))
        for d in range(stop - start):
            out[start + d] = mu[start + d][trees, leaves[d]].sum(axis=0)
    return out


@set_module_as('soibart')
def paired_forest_sum(
    var: np.ndarray,
    cut: np.ndarray,
    mu: np.ndarray,
    draw_index: bst.typing.ArrayLike,
    X: bst.typing.ArrayLike,
) -> np.ndarray:
    """
    Evaluate row ``r`` of ``X`` on the ensemble of draw ``draw_index[r]``.

    Returns a float64 vector with one sum-of-trees value per row.
    """
    var, cut, mu = _as_forest(var, cut, mu)
    X = _as_rows(X, None)
    index = np.asarray(draw_index, dtype=np.int64).reshape(-1)
    assert index.size == X.shape[0], f'{index.size} draw indices for {X.shape[0]} rows.'
    depth = var.shape[-1].bit_length() - 2
    cut_hi, cut_lo = order_keys(cut)
    x_hi, x_lo = order_keys(X)
    leaves = np.asarray(_paired_leaves(var.astype(np.int32), cut_hi, cut_lo, index.astype(np.int32),
                                       x_hi, x_lo, depth))
    trees = np.arange(var.shape[1])[None, :]
    return mu[index[:, None], trees, leaves].sum(axis=1)

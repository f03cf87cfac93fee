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

from typing import Any, Callable, Iterable, List, Optional

import numpy as np
from joblib import Parallel, delayed

__all__ = [
    'set_module_as',
    'derive_seed',
    'parallel_map',
]


def set_module_as(name: str):
    def decorator(module):
        module.__module__ = name
        return module

    return decorator


def derive_seed(seed: int, *path: int) -> int:
    """
    Derive an independent 32-bit seed for a unit of work.

    The derivation only depends on ``seed`` and the integer ``path`` (for
    example ``(trajectory, step)``), never on execution order.
    """
    if not path:
        return int(seed) & 0xFFFFFFFF
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def parallel_map(fun: Callable[..., Any], items: Iterable[Any], n_jobs: Optional[int] = 1) -> List[Any]:
    """
    Apply ``fun`` to every item, possibly across worker processes.

    Results come back in item order, so aggregation never depends on ``n_jobs``.
    """
    items = list(items)
    if n_jobs is None or n_jobs == 1 or len(items) <= 1:
        return [fun(item) for item in items]
    return Parallel(n_jobs=n_jobs)(delayed(fun)(item) for item in items)

"""Seeded random tensor-network fixtures."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .config import resolve_seed
from .core import CP, TT, ModeNode, TnTensor
from .errors import ContractViolationError


def _rng(seed):
    return np.random.default_rng(resolve_seed(seed))


def _full_ranks(shape: Sequence[int], ranks) -> list:
    n = len(shape)
    if np.isscalar(ranks):
        ranks = [int(ranks)] * (n - 1)
    ranks = [1] + [int(r) for r in ranks] + [1]
    if len(ranks) != n + 1:
        raise ContractViolationError(f"need {n - 1} internal ranks, got {len(ranks) - 2}")
    return ranks


def random_tt(shape, ranks, seed=None, batch_size: Optional[int] = None,
              scale: float = 1.0) -> TnTensor:
    """Random TT chain with i.i.d. standard normal core entries."""
    rng = _rng(seed)
    ranks = _full_ranks(shape, ranks)
    nodes = []
    for k, i_sz in enumerate(shape):
        dims = (ranks[k], i_sz, ranks[k + 1])
        if batch_size is not None:
            dims = (batch_size,) + dims
        nodes.append(ModeNode(TT, scale * rng.standard_normal(dims),
                              batched=batch_size is not None))
    return TnTensor(nodes, batch_size)


def random_cp(shape, rank: int, seed=None, batch_size: Optional[int] = None) -> TnTensor:
    """Random all-CP chain of the given rank."""
    rng = _rng(seed)
    nodes = []
    for i_sz in shape:
        dims = (i_sz, rank)
        if batch_size is not None:
            dims = (batch_size,) + dims
        nodes.append(ModeNode(CP, rng.standard_normal(dims),
                              batched=batch_size is not None))
    return TnTensor(nodes, batch_size)


def random_tucker(shape, core_sizes, ranks, seed=None) -> TnTensor:
    """Random TT chain with a basis factor attached to every node."""
    rng = _rng(seed)
    ranks = _full_ranks(core_sizes, ranks)
    nodes = []
    for k, (j_sz, i_sz) in enumerate(zip(shape, core_sizes)):
        core = rng.standard_normal((ranks[k], i_sz, ranks[k + 1]))
        factor = rng.standard_normal((j_sz, i_sz))
        nodes.append(ModeNode(TT, core, factor))
    return TnTensor(nodes)


def random_blended(shape, seed=None, max_rank: int = 3) -> TnTensor:
    """Random chain mixing CP runs, TT cores, and attached factors.

    CP nodes come in maximal runs sharing one rank; factors are attached to
    a random subset of nodes.  Useful as a stress fixture for contraction
    and conversion code.
    """
    rng = _rng(seed)
    n = len(shape)
    kinds = [CP if rng.random() < 0.4 else TT for _ in range(n)]
    # assign one shared rank per maximal CP run, TT edge ranks freely
    ranks = [1] * (n + 1)
    k = 0
    while k < n:
        if kinds[k] == CP:
            end = k
            while end + 1 < n and kinds[end + 1] == CP:
                end += 1
            r = int(rng.integers(1, max_rank + 1))
            for e in range(k, end + 2):
                ranks[e] = r
            k = end + 1
        else:
            k += 1
    ranks[0] = ranks[n] = 1
    for k in range(1, n):
        if kinds[k - 1] == TT and kinds[k] == TT:
            ranks[k] = int(rng.integers(1, max_rank + 1))
    nodes = []
    for k, j_sz in enumerate(shape):
        use_factor = rng.random() < 0.4
        i_sz = int(rng.integers(1, j_sz + 1)) if use_factor else j_sz
        if kinds[k] == CP:
            # a boundary CP node stores its inner-edge rank
            r = ranks[k + 1] if k == 0 else ranks[k]
            core = rng.standard_normal((i_sz, r))
        else:
            core = rng.standard_normal((ranks[k], i_sz, ranks[k + 1]))
        factor = rng.standard_normal((j_sz, i_sz)) if use_factor else None
        nodes.append(ModeNode(kinds[k], core, factor))
    return TnTensor(nodes)

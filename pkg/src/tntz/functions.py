"""Built-in black-box test functions for the cross-approximation CLI.

Each function maps an (M, N) integer index array to M values and is defined
for any mode count and shape.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolationError


def const1(idx: np.ndarray, shape) -> np.ndarray:
    return np.ones(idx.shape[0])


def index_sum(idx: np.ndarray, shape) -> np.ndarray:
    return idx.sum(axis=1).astype(np.float64)


def gaussian_bump(idx: np.ndarray, shape) -> np.ndarray:
    """Gaussian centered at floor(shape / 2) with width max(shape) / 4."""
    center = np.array([s // 2 for s in shape])
    sigma = max(shape) / 4.0
    d2 = ((idx - center[None, :]) ** 2).sum(axis=1)
    return np.exp(-d2 / (2.0 * sigma ** 2))


def reciprocal_shifted(idx: np.ndarray, shape) -> np.ndarray:
    """1 / (1 + sum of indices); strictly positive and bounded by 1."""
    return 1.0 / (1.0 + idx.sum(axis=1))


CATALOG = {
    "const1": const1,
    "index_sum": index_sum,
    "gaussian_bump": gaussian_bump,
    "reciprocal_shifted": reciprocal_shifted,
}


def get_function(name: str, shape):
    if name not in CATALOG:
        raise ContractViolationError(
            f"unknown function {name!r}; available: {', '.join(sorted(CATALOG))}"
        )
    fn = CATALOG[name]
    shape = tuple(int(s) for s in shape)

    def bound(idx):
        return fn(np.asarray(idx), shape)

    return bound

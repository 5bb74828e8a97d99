"""Compressed linear operators: TT matrices and CP matrices.

An M x N matrix with M = prod(m_i) and N = prod(n_i) is reshaped to the
interleaved index order (m_1, n_1, ..., m_k, n_k), decomposed with the
(m_i, n_i) pairs merged, and the cores split back so every core carries one
row index and one column index: shape (R_i, m_i, n_i, R_{i+1}).  Matrix x
vector products then contract the column indices without decompression.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import decompose
from .core import CP, TT, ModeNode, TnTensor, to_tt
from .errors import ContractViolationError, StructuralError


def _check_dims(row_dims, col_dims, m: Optional[int] = None, n: Optional[int] = None):
    row_dims = tuple(int(d) for d in row_dims)
    col_dims = tuple(int(d) for d in col_dims)
    if len(row_dims) != len(col_dims) or not row_dims:
        raise ContractViolationError("row and column dims must pair up one per mode")
    if any(d < 1 for d in row_dims + col_dims):
        raise ContractViolationError("dims must be positive")
    if m is not None and int(np.prod(row_dims)) != m:
        raise ContractViolationError(f"row dims {row_dims} do not multiply to {m}")
    if n is not None and int(np.prod(col_dims)) != n:
        raise ContractViolationError(f"col dims {col_dims} do not multiply to {n}")
    return row_dims, col_dims


class TTMatrix:
    """TT operator: 4D cores of shape (R_i, m_i, n_i, R_{i+1})."""

    __slots__ = ("cores", "row_dims", "col_dims")

    def __init__(self, cores: Sequence[np.ndarray], row_dims, col_dims):
        cores = [np.asarray(c, dtype=np.float64) for c in cores]
        row_dims, col_dims = _check_dims(row_dims, col_dims)
        if len(cores) != len(row_dims):
            raise StructuralError("one core per (row, col) dim pair required")
        for k, c in enumerate(cores):
            if c.ndim != 4 or c.shape[1] != row_dims[k] or c.shape[2] != col_dims[k]:
                raise StructuralError(
                    f"core {k} must be (R, {row_dims[k]}, {col_dims[k]}, R'), "
                    f"got {c.shape}"
                )
        for k in range(len(cores) - 1):
            if cores[k].shape[3] != cores[k + 1].shape[0]:
                raise StructuralError(f"rank mismatch between cores {k} and {k + 1}")
        if cores[0].shape[0] != 1 or cores[-1].shape[3] != 1:
            raise StructuralError("boundary ranks must be 1")
        self.cores = cores
        self.row_dims = row_dims
        self.col_dims = col_dims

    @property
    def shape(self) -> Tuple[int, int]:
        return int(np.prod(self.row_dims)), int(np.prod(self.col_dims))

    @property
    def ranks(self) -> list:
        return [c.shape[0] for c in self.cores] + [1]

    def __repr__(self):
        return (f"TTMatrix(shape={self.shape}, ranks={self.ranks}, "
                f"row_dims={self.row_dims}, col_dims={self.col_dims})")


class CPMatrix:
    """CP operator: per-mode factors of shape (m_i, n_i, R) sharing rank R."""

    __slots__ = ("factors", "row_dims", "col_dims")

    def __init__(self, factors: Sequence[np.ndarray], row_dims, col_dims):
        factors = [np.asarray(f, dtype=np.float64) for f in factors]
        row_dims, col_dims = _check_dims(row_dims, col_dims)
        if len(factors) != len(row_dims):
            raise StructuralError("one factor per (row, col) dim pair required")
        ranks = {f.shape[-1] for f in factors}
        if len(ranks) != 1:
            raise StructuralError(f"factors must share one rank, got {sorted(ranks)}")
        for k, f in enumerate(factors):
            if f.ndim != 3 or f.shape[0] != row_dims[k] or f.shape[1] != col_dims[k]:
                raise StructuralError(
                    f"factor {k} must be ({row_dims[k]}, {col_dims[k]}, R), "
                    f"got {f.shape}"
                )
        self.factors = factors
        self.row_dims = row_dims
        self.col_dims = col_dims

    @property
    def rank(self) -> int:
        return self.factors[0].shape[-1]

    @property
    def shape(self) -> Tuple[int, int]:
        return int(np.prod(self.row_dims)), int(np.prod(self.col_dims))

    def __repr__(self):
        return (f"CPMatrix(shape={self.shape}, rank={self.rank}, "
                f"row_dims={self.row_dims}, col_dims={self.col_dims})")


def _interleave(mx: np.ndarray, row_dims, col_dims) -> np.ndarray:
    """Reshape M x N to (m_1, n_1, ..., m_k, n_k) with merged (m, n) pairs."""
    k = len(row_dims)
    x = mx.reshape(row_dims + col_dims)
    perm = []
    for i in range(k):
        perm += [i, k + i]
    x = x.transpose(perm)
    return x.reshape(tuple(m * n for m, n in zip(row_dims, col_dims)))


def _deinterleave(x: np.ndarray, row_dims, col_dims) -> np.ndarray:
    k = len(row_dims)
    pairs = []
    for m, n in zip(row_dims, col_dims):
        pairs += [m, n]
    x = x.reshape(pairs)
    perm = [2 * i for i in range(k)] + [2 * i + 1 for i in range(k)]
    x = x.transpose(perm)
    return x.reshape(int(np.prod(row_dims)), int(np.prod(col_dims)))


def ttm_from_dense(mx: np.ndarray, row_dims, col_dims,
                   spec: decompose.TruncationSpec) -> TTMatrix:
    """Decompose a dense matrix into TT-matrix form within the given budget."""
    mx = np.asarray(mx, dtype=np.float64)
    if mx.ndim != 2:
        raise ContractViolationError("expected a 2D matrix")
    row_dims, col_dims = _check_dims(row_dims, col_dims, mx.shape[0], mx.shape[1])
    merged = _interleave(mx, row_dims, col_dims)
    chain = decompose.tt_svd(merged, spec)
    cores = []
    for k, node in enumerate(chain.nodes):
        r, _, s = node.core.shape
        cores.append(node.core.reshape(r, row_dims[k], col_dims[k], s))
    return TTMatrix(cores, row_dims, col_dims)


def ttm_to_dense(a: TTMatrix) -> np.ndarray:
    """Exact inverse of the reshaping pipeline (chain contraction first)."""
    chain = TnTensor([
        ModeNode(TT, c.reshape(c.shape[0], c.shape[1] * c.shape[2], c.shape[3]))
        for c in a.cores
    ])
    return _deinterleave(chain.full(), a.row_dims, a.col_dims)


def tt_multiply(a: TTMatrix, v):
    """Matrix x vector product in compressed form.

    A dense vector of length N is reshaped over the column dims and
    contracted core by core into a dense length-M vector.  A TT chain over
    the column dims yields a TT chain over the row dims with edge ranks
    R_A * R_v.
    """
    m, n = a.shape
    if isinstance(v, TnTensor):
        if v.shape != a.col_dims:
            raise ContractViolationError(
                f"TT vector shape {v.shape} does not match col dims {a.col_dims}"
            )
        if v.batch_size is not None:
            raise ContractViolationError("batched TT vectors are not supported")
        v = to_tt(v, absorb_factors=True)
        nodes = []
        for core_a, node_v in zip(a.cores, v.nodes):
            r1, mi, ni, r2 = core_a.shape
            s1, _, s2 = node_v.core.shape
            out = np.einsum("rmns,anb->ramsb", core_a, node_v.core)
            nodes.append(ModeNode(TT, out.reshape(r1 * s1, mi, r2 * s2)))
        return TnTensor(nodes)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape[0] != n:
        raise ContractViolationError(f"vector length {v.shape[0]} != {n}")
    # acc axes: (rank, remaining col index, finished row index)
    acc = v.reshape(1, n, 1)
    for core in a.cores:
        r1, mi, ni, r2 = core.shape
        acc = acc.reshape(r1, ni, -1, acc.shape[2])
        acc = np.einsum("rmns,rntd->mstd", core, acc, optimize=True)
        mi_, s, t, d = acc.shape
        acc = np.transpose(acc, (1, 2, 3, 0)).reshape(s, t, d * mi_)
    return acc.reshape(m).copy()


def rank1_inverse(a: TTMatrix) -> TTMatrix:
    """Inverse of a rank-1 (Kronecker-product) TT matrix, factor by factor."""
    _require_rank1_square(a)
    cores = []
    for k, core in enumerate(a.cores):
        f = core[0, :, :, 0]
        if not _invertible(f):
            raise StructuralError(f"factor {k} is singular")
        cores.append(np.linalg.inv(f)[None, :, :, None])
    return TTMatrix(cores, a.col_dims, a.row_dims)


def rank1_determinant(a: TTMatrix) -> float:
    """Determinant of a rank-1 TT matrix: prod_i det(A_i)^(M / m_i).

    Accumulated in log magnitude with separate sign tracking, so large M
    does not overflow.
    """
    _require_rank1_square(a)
    m = a.shape[0]
    log_total = 0.0
    sign_total = 1.0
    for k, core in enumerate(a.cores):
        f = core[0, :, :, 0]
        sign, logabs = np.linalg.slogdet(f)
        if sign == 0.0:
            return 0.0
        power = m // a.row_dims[k]
        log_total += power * logabs
        if sign < 0 and power % 2:
            sign_total = -sign_total
    return float(sign_total * np.exp(log_total))


def _require_rank1_square(a: TTMatrix):
    if any(r != 1 for r in a.ranks):
        raise ContractViolationError(f"requires TT ranks all 1, got {a.ranks}")
    if a.row_dims != a.col_dims:
        raise ContractViolationError(
            f"requires square factors, got {a.row_dims} x {a.col_dims}"
        )


def _invertible(f: np.ndarray) -> bool:
    s = np.linalg.svd(f, compute_uv=False)
    return s[0] > 0 and s[-1] > 1e-12 * s[0]


def cpm_from_dense(mx: np.ndarray, row_dims, col_dims, rank: int,
                   max_iters: int = 100, tol: float = 1e-10, seed=None) -> CPMatrix:
    """Fit a CP matrix by running ALS on the merged interleaved tensor."""
    mx = np.asarray(mx, dtype=np.float64)
    row_dims, col_dims = _check_dims(row_dims, col_dims, mx.shape[0], mx.shape[1])
    merged = _interleave(mx, row_dims, col_dims)
    result = decompose.cp_als(merged, rank, max_iters=max_iters, tol=tol, seed=seed)
    factors = [
        node.core.reshape(m, n, rank)
        for node, m, n in zip(result.tensor.nodes, row_dims, col_dims)
    ]
    return CPMatrix(factors, row_dims, col_dims)


def cpm_to_dense(a: CPMatrix) -> np.ndarray:
    """Dense matrix: sum over the shared rank of per-mode Kronecker products."""
    m, n = a.shape
    out = np.zeros((m, n))
    for r in range(a.rank):
        term = np.ones((1, 1))
        for f in a.factors:
            term = np.kron(term, f[:, :, r])
        out += term
    return out


def cp_multiply(a: CPMatrix, v: np.ndarray) -> np.ndarray:
    """Matrix x vector for CP matrices: per-rank separable mode products."""
    m, n = a.shape
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape[0] != n:
        raise ContractViolationError(f"vector length {v.shape[0]} != {n}")
    grid = v.reshape(a.col_dims)
    out = np.zeros(a.row_dims)
    for r in range(a.rank):
        term = grid
        for k, f in enumerate(a.factors):
            term = np.moveaxis(np.tensordot(f[:, :, r], term, axes=(1, k)), 0, k)
        out += term
    return out.reshape(m).copy()

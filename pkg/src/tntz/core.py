"""Blended tensor-network chains: TT cores and CP factors, optionally with
attached per-mode basis factors, contracted on demand to dense arrays.

A tensor of N modes is stored as a chain of N :class:`ModeNode` objects.
Each node is either

* a TT node: 3D core of shape ``(r_left, I, r_right)``, or
* a CP node: 2D factor of shape ``(I, R)``, linked to its neighbours through
  an implicit super-diagonal copy tensor, so its effective left and right
  ranks are both ``R`` (1 on the outward side at a chain boundary).

A node may additionally carry a basis factor of shape ``(J, I)`` that maps a
physical index of size ``J`` onto the core's internal index of size ``I``
(the Tucker construction).  A whole chain may carry a shared leading batch
axis on every core and factor.

All arrays are 64-bit floats.  Values are immutable: every operation returns
a new :class:`TnTensor` and never mutates its inputs.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ContractViolationError, StructuralError

TT = "tt"
CP = "cp"

INTERIOR = "interior"
LEFT_BOUNDARY = "left_boundary"
RIGHT_BOUNDARY = "right_boundary"


def _as_f64(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


class ModeNode:
    """One node of the chain: a core plus an optional basis factor.

    ``kind`` is ``"tt"`` (3D core, ``r_left x I x r_right``) or ``"cp"``
    (2D core, ``I x R``).  ``batched`` nodes carry one extra leading axis on
    both core and factor.
    """

    __slots__ = ("kind", "core", "factor", "batched")

    def __init__(self, kind: str, core, factor=None, batched: bool = False):
        if kind not in (TT, CP):
            raise ContractViolationError(f"unknown node kind {kind!r}")
        core = _as_f64(core)
        expected = (3 if kind == TT else 2) + (1 if batched else 0)
        if core.ndim != expected:
            raise StructuralError(
                f"{kind} core must have {expected} axes, got shape {core.shape}"
            )
        if factor is not None:
            factor = _as_f64(factor)
            if factor.ndim != 2 + (1 if batched else 0):
                raise StructuralError(
                    f"factor must have {2 + batched} axes, got shape {factor.shape}"
                )
            if factor.shape[-1] != core.shape[-2]:
                raise StructuralError(
                    f"factor maps onto internal size {factor.shape[-1]}, "
                    f"core has internal size {core.shape[-2]}"
                )
        self.kind = kind
        self.core = core
        self.factor = factor
        self.batched = batched

    @property
    def internal_size(self) -> int:
        """Size of the core's own mode index."""
        return self.core.shape[-2]

    @property
    def physical_size(self) -> int:
        """Mode size exposed to the outside (factor rows, if present)."""
        if self.factor is not None:
            return self.factor.shape[-2]
        return self.internal_size

    @property
    def cp_rank(self) -> int:
        if self.kind != CP:
            raise ContractViolationError("cp_rank is only defined for CP nodes")
        return self.core.shape[-1]

    def copy(self) -> "ModeNode":
        return ModeNode(self.kind, self.core, self.factor, self.batched)

    def __repr__(self):
        f = "" if self.factor is None else f", factor{self.factor.shape}"
        return f"ModeNode({self.kind}, core{self.core.shape}{f})"


class TnTensor:
    """An N-mode tensor stored as a chain of TT/CP nodes.

    Chains must satisfy rank consistency: the right rank of node k equals
    the left rank of node k+1 (a CP node exposes its rank R on both sides,
    except 1 outward at the chain boundary), and the outermost ranks are 1.
    """

    __slots__ = ("_nodes", "_batch_size")

    def __init__(self, nodes: Iterable[ModeNode], batch_size: Optional[int] = None):
        nodes = tuple(n.copy() for n in nodes)
        if len(nodes) == 0:
            raise ContractViolationError("a tensor needs at least one mode")
        if batch_size is not None and batch_size < 1:
            raise ContractViolationError("batch size must be >= 1")
        for k, node in enumerate(nodes):
            if batch_size is None:
                if node.batched:
                    raise StructuralError(f"node {k} is batched but the tensor is not")
            else:
                if not node.batched:
                    raise StructuralError(f"node {k} lacks the batch axis")
                if node.core.shape[0] != batch_size:
                    raise StructuralError(
                        f"node {k} has batch {node.core.shape[0]}, expected {batch_size}"
                    )
                if node.factor is not None and node.factor.shape[0] != batch_size:
                    raise StructuralError(f"node {k} factor has a mismatched batch")
        ranks = _rank_chain(nodes)
        if ranks[0] != 1 or ranks[-1] != 1:
            raise StructuralError(f"boundary ranks must be 1, got {ranks[0]}, {ranks[-1]}")
        self._nodes = nodes
        self._batch_size = batch_size

    # -- basic metadata -------------------------------------------------

    @property
    def nodes(self) -> tuple:
        return self._nodes

    @property
    def batch_size(self) -> Optional[int]:
        return self._batch_size

    @property
    def ndim(self) -> int:
        return len(self._nodes)

    @property
    def shape(self) -> tuple:
        """Physical shape, excluding any batch axis."""
        return tuple(n.physical_size for n in self._nodes)

    @property
    def ranks(self) -> list:
        """Chain ranks including the two boundary 1s (length N+1)."""
        return _rank_chain(self._nodes)

    def numel(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) if self.ndim else 0

    def dof(self) -> int:
        """Stored parameter count (per batch element)."""
        b = self._batch_size or 1
        total = 0
        for n in self._nodes:
            total += n.core.size // b
            if n.factor is not None:
                total += n.factor.size // b
        return total

    # -- conversions ----------------------------------------------------

    def full(self) -> np.ndarray:
        return full(self)

    def norm(self):
        return norm(self)

    def batch_element(self, b: int) -> "TnTensor":
        """Extract one element of a batched tensor as an unbatched chain."""
        if self._batch_size is None:
            raise ContractViolationError("tensor is not batched")
        nodes = [
            ModeNode(n.kind, n.core[b], None if n.factor is None else n.factor[b])
            for n in self._nodes
        ]
        return TnTensor(nodes)

    def __repr__(self):
        kinds = "".join("T" if n.kind == TT else "C" for n in self._nodes)
        b = "" if self._batch_size is None else f", batch={self._batch_size}"
        return f"TnTensor(shape={self.shape}, ranks={self.ranks}, kinds={kinds}{b})"

    # -- operator sugar (implemented in arithmetic/indexing) -------------

    def __add__(self, other):
        from . import arithmetic

        if np.isscalar(other):
            return arithmetic.add_scalar(self, float(other))
        return arithmetic.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import arithmetic

        if np.isscalar(other):
            return arithmetic.add_scalar(self, -float(other))
        return arithmetic.add(self, arithmetic.negate(other))

    def __neg__(self):
        from . import arithmetic

        return arithmetic.negate(self)

    def __mul__(self, other):
        from . import arithmetic

        if np.isscalar(other):
            return arithmetic.scale(self, float(other))
        return arithmetic.hadamard(self, other)

    __rmul__ = __mul__

    def __getitem__(self, key):
        from . import indexing

        return indexing.getitem(self, key)

    def __setitem__(self, key, value):
        # Mutate-in-place facade over the out-of-place update: the arrays
        # themselves stay immutable, only this wrapper is rebound.
        from . import indexing

        updated = indexing.setitem(self, key, value)
        self._nodes = updated._nodes
        self._batch_size = updated._batch_size


def _node_ranks(node: ModeNode, k: int, n_modes: int) -> tuple:
    """Effective (left, right) ranks a node exposes inside the chain."""
    if node.kind == TT:
        return node.core.shape[-3], node.core.shape[-1]
    r = node.cp_rank
    left = 1 if k == 0 else r
    right = 1 if k == n_modes - 1 else r
    return left, right


def _rank_chain(nodes: Sequence[ModeNode]) -> list:
    n = len(nodes)
    pairs = [_node_ranks(node, k, n) for k, node in enumerate(nodes)]
    for k in range(n - 1):
        if pairs[k][1] != pairs[k + 1][0]:
            raise StructuralError(
                f"rank mismatch between modes {k} and {k + 1}: "
                f"{pairs[k][1]} vs {pairs[k + 1][0]}"
            )
    return [pairs[0][0]] + [p[1] for p in pairs]


def promote_cp_node(node: ModeNode, position: str) -> np.ndarray:
    """Materialize the TT core equivalent to a CP node at a given position.

    Contracting a CP factor ``U`` (shape I x R) with its adjacent copy
    tensor yields, for an interior node, the diagonal 3D core
    ``D[a, i, b] = U[i, a] * delta(a, b)``; at the left/right chain boundary
    the outward rank collapses to 1 and the core is just a reshaped ``U``.
    """
    if node.kind != CP:
        raise ContractViolationError("promote_cp_node expects a CP node")
    if position not in (INTERIOR, LEFT_BOUNDARY, RIGHT_BOUNDARY):
        raise ContractViolationError(f"unknown position {position!r}")
    u = node.core
    if node.batched:
        b_sz, i_sz, r = u.shape
        if position == LEFT_BOUNDARY:
            return u[:, None, :, :].copy()
        if position == RIGHT_BOUNDARY:
            return np.swapaxes(u, 1, 2)[..., None].copy()
        d = np.zeros((b_sz, r, i_sz, r))
        for a in range(r):
            d[:, a, :, a] = u[:, :, a]
        return d
    i_sz, r = u.shape
    if position == LEFT_BOUNDARY:
        return u[None, :, :].copy()
    if position == RIGHT_BOUNDARY:
        return u.T[:, :, None].copy()
    d = np.zeros((r, i_sz, r))
    d[np.arange(r), :, np.arange(r)] = u.T
    return d


def _position(k: int, n_modes: int) -> str:
    if k == 0:
        return LEFT_BOUNDARY
    if k == n_modes - 1:
        return RIGHT_BOUNDARY
    return INTERIOR


def node_tt_core(t: TnTensor, k: int, absorb_factor: bool = True) -> np.ndarray:
    """3D (batched: 4D) TT core equivalent of node k, CP nodes promoted.

    With ``absorb_factor`` the attached basis factor, if any, is applied so
    the returned core runs over the physical index.
    """
    node = t.nodes[k]
    n = t.ndim
    if node.kind == CP:
        if n == 1:
            # both ends are a boundary: the copy tensor reduces to a sum
            core = node.core.sum(axis=-1)[..., None, :, None] \
                if node.batched else node.core.sum(axis=-1)[None, :, None]
            core = np.ascontiguousarray(core)
        else:
            core = promote_cp_node(node, _position(k, n))
    else:
        core = node.core
    if absorb_factor and node.factor is not None:
        core = apply_factor(core, node.factor, node.batched)
    return core


def apply_factor(core: np.ndarray, factor: np.ndarray, batched: bool) -> np.ndarray:
    """Contract a (J x I) factor into a TT core's middle index."""
    if batched:
        return np.einsum("bji,brik->brjk", factor, core)
    return np.einsum("ji,rik->rjk", factor, core)


def full(t: TnTensor) -> np.ndarray:
    """Contract the chain to a dense array (leading batch axis if batched).

    CP nodes are promoted, factors applied, and the chain is accumulated
    left to right through a 2D unfolding.
    """
    shape = t.shape
    if t.batch_size is None:
        m = np.ones((1, 1))
        for k in range(t.ndim):
            g = node_tt_core(t, k)
            r_l, j, r_r = g.shape
            m = m @ g.reshape(r_l, j * r_r)
            m = m.reshape(-1, r_r)
        return m.reshape(shape)
    b = t.batch_size
    m = np.ones((b, 1, 1))
    for k in range(t.ndim):
        g = node_tt_core(t, k)
        _, r_l, j, r_r = g.shape
        m = np.matmul(m, g.reshape(b, r_l, j * r_r))
        m = m.reshape(b, -1, r_r)
    return m.reshape((b,) + shape)


def chain_dot(a: TnTensor, b: TnTensor):
    """Inner product of two chains with equal physical shapes.

    Contracts mode by mode through an ``r_a x r_b`` transfer matrix.
    Returns a scalar, or a length-B vector for batched operands.
    """
    if a.shape != b.shape:
        raise ContractViolationError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.batch_size != b.batch_size:
        raise ContractViolationError("operands must agree on batching")
    if a.batch_size is None:
        m = np.ones((1, 1))
        for k in range(a.ndim):
            ga = node_tt_core(a, k)
            gb = node_tt_core(b, k)
            m = np.einsum("ab,aic,bid->cd", m, ga, gb, optimize=True)
        return float(m[0, 0])
    m = np.ones((a.batch_size, 1, 1))
    for k in range(a.ndim):
        ga = node_tt_core(a, k)
        gb = node_tt_core(b, k)
        m = np.einsum("xab,xaic,xbid->xcd", m, ga, gb, optimize=True)
    return m[:, 0, 0].copy()


def norm(t: TnTensor):
    """Frobenius norm; a length-B vector for batched tensors."""
    sq = chain_dot(t, t)
    return np.sqrt(np.maximum(sq, 0.0)) if t.batch_size is not None \
        else float(np.sqrt(max(sq, 0.0)))


def entries(t: TnTensor, indices) -> np.ndarray:
    """Evaluate the chain at explicit multi-indices.

    ``indices`` is an (M, N) integer array of physical positions; the result
    has shape (M,), or (M, B) for batched tensors.  Per-sample cost is
    O(N * R^2) via chain contraction, with samples grouped by index value so
    the inner products run as real matrix products.
    """
    idx = np.asarray(indices)
    if idx.ndim == 1:
        idx = idx[None, :]
    if idx.ndim != 2 or idx.shape[1] != t.ndim:
        raise ContractViolationError(
            f"index array must be (M, {t.ndim}), got {idx.shape}"
        )
    shape = t.shape
    norm_idx = idx.copy()
    for k, size in enumerate(shape):
        col = norm_idx[:, k]
        col = np.where(col < 0, col + size, col)
        if col.size and (col.min() < 0 or col.max() >= size):
            raise ContractViolationError(f"index out of bounds on mode {k}")
        norm_idx[:, k] = col
    m_samples = norm_idx.shape[0]
    b = t.batch_size
    if b is None:
        v = np.ones((m_samples, 1))
        for k in range(t.ndim):
            g = node_tt_core(t, k)  # (r, J, s)
            v = _step_entries(v, g, norm_idx[:, k])
        return v[:, 0].copy()
    v = np.ones((m_samples, b, 1))
    for k in range(t.ndim):
        g = node_tt_core(t, k)  # (B, r, J, s)
        v = _step_entries_batched(v, g, norm_idx[:, k])
    return v[:, :, 0].copy()


def _step_entries(v: np.ndarray, core: np.ndarray, col: np.ndarray) -> np.ndarray:
    r, j_sz, s = core.shape
    out = np.empty((v.shape[0], s))
    order = np.argsort(col, kind="stable")
    sorted_col = col[order]
    bounds = np.searchsorted(sorted_col, np.arange(j_sz + 1))
    for j in range(j_sz):
        lo, hi = bounds[j], bounds[j + 1]
        if lo == hi:
            continue
        sel = order[lo:hi]
        out[sel] = v[sel] @ core[:, j, :]
    return out


def _step_entries_batched(v: np.ndarray, core: np.ndarray, col: np.ndarray) -> np.ndarray:
    b, r, j_sz, s = core.shape
    out = np.empty((v.shape[0], b, s))
    order = np.argsort(col, kind="stable")
    sorted_col = col[order]
    bounds = np.searchsorted(sorted_col, np.arange(j_sz + 1))
    for j in range(j_sz):
        lo, hi = bounds[j], bounds[j + 1]
        if lo == hi:
            continue
        sel = order[lo:hi]
        # (m, b, r) x (b, r, s) -> (m, b, s)
        out[sel] = np.einsum("mbr,brs->mbs", v[sel], core[:, :, j, :])
    return out


def to_tt(t: TnTensor, absorb_factors: bool = False) -> TnTensor:
    """Convert every node to TT kind; optionally fold factors into cores."""
    nodes = []
    for k in range(t.ndim):
        node = t.nodes[k]
        if node.kind == TT and not (absorb_factors and node.factor is not None):
            nodes.append(node.copy())
            continue
        if node.kind == CP and not absorb_factors:
            core = node_tt_core(t, k, absorb_factor=False)
            nodes.append(ModeNode(TT, core, node.factor, node.batched))
        else:
            nodes.append(ModeNode(TT, node_tt_core(t, k), None, node.batched))
    return TnTensor(nodes, t.batch_size)

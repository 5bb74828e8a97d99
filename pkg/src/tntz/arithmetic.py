"""Compressed-domain algebra on tensor chains.

Binary operations broadcast physical shapes (size-1 modes are expanded by
rank-preserving replication) and never round implicitly: rank growth is
explicit and the caller decides when to truncate.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import decompose
from .core import CP, TT, ModeNode, TnTensor, chain_dot, to_tt
from .errors import ContractViolationError


def _broadcast_shapes(a_shape, b_shape) -> tuple:
    """Right-aligned common shape; size-1 (or missing) modes expand."""
    a, b = tuple(a_shape), tuple(b_shape)
    n = max(len(a), len(b))
    a = (1,) * (n - len(a)) + a
    b = (1,) * (n - len(b)) + b
    out = []
    for x, y in zip(a, b):
        if x != y and 1 not in (x, y):
            raise ContractViolationError(
                f"shapes {tuple(a_shape)} and {tuple(b_shape)} do not broadcast"
            )
        out.append(max(x, y))
    return tuple(out)


def _bridge_node(rank: int, batch_size: Optional[int]) -> ModeNode:
    """Size-1 mode whose core is an identity bridge across the given rank."""
    core = np.eye(rank).reshape(rank, 1, rank)
    if batch_size is not None:
        core = np.broadcast_to(core, (batch_size,) + core.shape).copy()
    return ModeNode(TT, core, batched=batch_size is not None)


def insert_size1_mode(t: TnTensor, position: int) -> TnTensor:
    """Insert a size-1 mode at ``position`` without changing the entries.

    The new node bridges the edge rank at the insertion point.  A CP node
    whose boundary role would change gets promoted to its positional TT
    form first (its copy-tensor linkage is positional).
    """
    from .core import node_tt_core

    nodes = list(t.nodes)
    affected = None
    if position == 0 and nodes[0].kind == CP:
        affected = 0
    elif position == len(nodes) and nodes[-1].kind == CP:
        affected = len(nodes) - 1
    if affected is not None:
        old = nodes[affected]
        core = node_tt_core(t, affected, absorb_factor=False)
        nodes[affected] = ModeNode(TT, core, old.factor, old.batched)
        t = TnTensor(nodes, t.batch_size)
        nodes = list(t.nodes)
    rank = t.ranks[position]
    bridge = _bridge_node(rank, t.batch_size)
    return TnTensor(nodes[:position] + [bridge] + nodes[position:], t.batch_size)


def _expand_to(t: TnTensor, target: tuple) -> TnTensor:
    """Prepend size-1 modes and replicate size-1 modes up to ``target``."""
    while t.ndim < len(target):
        t = insert_size1_mode(t, 0)
    out = t
    for k, (have, want) in enumerate(zip(t.shape, target)):
        if have == want:
            continue
        if have != 1:
            raise ContractViolationError(f"cannot expand mode {k} from {have} to {want}")
        out = ttm(out, np.ones((want, 1)), k)
    return out


def _align_binary(a: TnTensor, b: TnTensor):
    if not isinstance(a, TnTensor) or not isinstance(b, TnTensor):
        raise ContractViolationError("binary chain ops need two TnTensor operands")
    if a.batch_size != b.batch_size:
        raise ContractViolationError("operands must agree on batch size")
    common = _broadcast_shapes(a.shape, b.shape)
    if a.shape != common:
        a = _expand_to(a, common)
    if b.shape != common:
        b = _expand_to(b, common)
    return a, b


def add(a: TnTensor, b: TnTensor) -> TnTensor:
    """Element-wise sum via block cores; internal ranks add."""
    a, b = _align_binary(a, b)
    a = to_tt(a, absorb_factors=True)
    b = to_tt(b, absorb_factors=True)
    n = a.ndim
    batched = a.batch_size is not None
    nodes = []
    for k in range(n):
        ca, cb = a.nodes[k].core, b.nodes[k].core
        if n == 1:
            core = ca + cb
        elif k == 0:
            core = np.concatenate([ca, cb], axis=-1)
        elif k == n - 1:
            core = np.concatenate([ca, cb], axis=-3)
        else:
            ra, i, sa = ca.shape[-3:]
            rb, _, sb = cb.shape[-3:]
            lead = ca.shape[:-3]
            core = np.zeros(lead + (ra + rb, i, sa + sb))
            core[..., :ra, :, :sa] = ca
            core[..., ra:, :, sa:] = cb
        nodes.append(ModeNode(TT, core, batched=batched))
    return TnTensor(nodes, a.batch_size)


def hadamard(a: TnTensor, b: TnTensor) -> TnTensor:
    """Element-wise product; ranks multiply edge-wise.

    Two all-CP chains without attached factors stay CP (rank R_a * R_b);
    anything else goes through the TT Kronecker-slice construction.
    """
    a, b = _align_binary(a, b)
    batched = a.batch_size is not None
    pure_cp = all(n.kind == CP and n.factor is None for n in a.nodes) and \
        all(n.kind == CP and n.factor is None for n in b.nodes)
    nodes = []
    if pure_cp:
        for na, nb in zip(a.nodes, b.nodes):
            ua, ub = na.core, nb.core
            if batched:
                u = np.einsum("xir,xis->xirs", ua, ub)
                u = u.reshape(ua.shape[0], ua.shape[1], -1)
            else:
                u = np.einsum("ir,is->irs", ua, ub).reshape(ua.shape[0], -1)
            nodes.append(ModeNode(CP, u, batched=batched))
        return TnTensor(nodes, a.batch_size)
    a = to_tt(a, absorb_factors=True)
    b = to_tt(b, absorb_factors=True)
    for na, nb in zip(a.nodes, b.nodes):
        ca, cb = na.core, nb.core
        if batched:
            x, ra, i, sa = ca.shape
            rb, _, sb = cb.shape[1:]
            core = np.einsum("xaib,xcid->xacibd", ca, cb)
            core = core.reshape(x, ra * rb, i, sa * sb)
        else:
            ra, i, sa = ca.shape
            rb, _, sb = cb.shape
            core = np.einsum("aib,cid->acibd", ca, cb).reshape(ra * rb, i, sa * sb)
        nodes.append(ModeNode(TT, core, batched=batched))
    return TnTensor(nodes, a.batch_size)


def scale(t: TnTensor, c: float) -> TnTensor:
    """Multiply by a scalar (folded into the first core; ranks unchanged)."""
    nodes = [n.copy() for n in t.nodes]
    first = nodes[0]
    nodes[0] = ModeNode(first.kind, first.core * float(c), first.factor, first.batched)
    return TnTensor(nodes, t.batch_size)


def negate(t: TnTensor) -> TnTensor:
    return scale(t, -1.0)


def constant_like(t: TnTensor, c: float) -> TnTensor:
    """Rank-1 chain of the same physical shape filled with ``c``."""
    batched = t.batch_size is not None
    nodes = []
    for k, i in enumerate(t.shape):
        core = np.ones((1, i, 1)) * (float(c) if k == 0 else 1.0)
        if batched:
            core = np.broadcast_to(core, (t.batch_size,) + core.shape).copy()
        nodes.append(ModeNode(TT, core, batched=batched))
    return TnTensor(nodes, t.batch_size)


def add_scalar(t: TnTensor, c: float) -> TnTensor:
    return add(t, constant_like(t, c))


def dot(a: TnTensor, b: TnTensor):
    """Inner product of equal-shaped chains; vector of dots when batched."""
    if a.shape != b.shape:
        raise ContractViolationError(f"dot needs equal shapes, got {a.shape} vs {b.shape}")
    return chain_dot(a, b)


def ttm(t: TnTensor, mat: np.ndarray, mode: int) -> TnTensor:
    """Multiply a matrix into one mode (through the factor when present)."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ContractViolationError("ttm expects a matrix")
    _check_mode(t, mode)
    node = t.nodes[mode]
    if mat.shape[1] != node.physical_size:
        raise ContractViolationError(
            f"matrix has {mat.shape[1]} columns, mode {mode} has size "
            f"{node.physical_size}"
        )
    nodes = [n.copy() for n in t.nodes]
    if node.factor is not None:
        factor = np.einsum("xj,bji->bxi", mat, node.factor) if node.batched \
            else mat @ node.factor
        nodes[mode] = ModeNode(node.kind, node.core, factor, node.batched)
    elif node.kind == CP:
        core = np.einsum("xj,bjr->bxr", mat, node.core) if node.batched \
            else mat @ node.core
        nodes[mode] = ModeNode(CP, core, None, node.batched)
    else:
        core = np.einsum("xj,brjs->brxs", mat, node.core) if node.batched \
            else np.einsum("xj,rjs->rxs", mat, node.core)
        nodes[mode] = ModeNode(TT, core, None, node.batched)
    return TnTensor(nodes, t.batch_size)


def _absorb(node: ModeNode, w_kind: str, w, side: str, position: str) -> ModeNode:
    """Contract a leftover rank matrix into a neighbour node.

    ``side`` says which edge of ``node`` meets ``w``; ``position`` is the
    node's boundary role in the original chain.  A CP node stays CP when
    the contraction commutes with its copy tensor: a diagonal ``w`` always
    does, and a boundary row/column does when the node was interior (it
    simply becomes the new boundary).  Anything else promotes to TT.
    """
    from .core import INTERIOR, promote_cp_node

    batched = node.batched
    if node.kind == CP:
        if w_kind == "diag":
            vec = w[..., None, :] if batched else w[None, :]
            return ModeNode(CP, node.core * vec, node.factor, batched)
        if position == INTERIOR and side == "right" and w.shape[-1] == 1:
            vec = w[..., :, 0]
            vec = vec[..., None, :] if batched else vec[None, :]
            return ModeNode(CP, node.core * vec, node.factor, batched)
        if position == INTERIOR and side == "left" and w.shape[-2] == 1:
            vec = w[..., 0, :]
            vec = vec[..., None, :] if batched else vec[None, :]
            return ModeNode(CP, node.core * vec, node.factor, batched)
        core = promote_cp_node(node, position)
    else:
        core = node.core
    if w_kind == "diag":
        if side == "right":
            core = core * (w[..., None, None, :] if batched else w[None, None, :])
        else:
            core = core * (w[..., :, None, None] if batched else w[:, None, None])
    elif side == "right":
        core = np.einsum("bpix,bxy->bpiy", core, w) if batched \
            else np.einsum("pix,xy->piy", core, w)
    else:
        core = np.einsum("bxy,byis->bxis", w, core) if batched \
            else np.einsum("xy,yis->xis", w, core)
    return ModeNode(TT, core, node.factor, batched)


def ttv(t: TnTensor, vec: np.ndarray, mode: int):
    """Contract a vector into one mode; the mode disappears.

    The leftover rank matrix is absorbed into the left neighbour (the right
    one when ``mode`` is 0).  A 1-mode tensor contracts to a scalar (or a
    length-B vector when batched).
    """
    from .core import LEFT_BOUNDARY, RIGHT_BOUNDARY, INTERIOR

    vec = np.asarray(vec, dtype=np.float64)
    _check_mode(t, mode)
    node = t.nodes[mode]
    if vec.ndim != 1 or vec.shape[0] != node.physical_size:
        raise ContractViolationError(
            f"vector of length {vec.shape} does not fit mode {mode} "
            f"(size {node.physical_size})"
        )
    batched = node.batched
    if node.factor is not None:
        v_eff = np.einsum("j,bji->bi", vec, node.factor) if batched \
            else vec @ node.factor
    else:
        v_eff = vec
    if node.kind == CP:
        w_kind = "diag"
        w = np.einsum("bi,bir->br", v_eff, node.core) if batched and node.factor is not None \
            else (np.einsum("i,bir->br", v_eff, node.core) if batched
                  else v_eff @ node.core)
        # at a chain boundary the copy tensor collapses: w is a row/column
        if t.ndim > 1 and mode == 0:
            w_kind, w = "full", w[..., None, :]
        elif t.ndim > 1 and mode == t.ndim - 1:
            w_kind, w = "full", w[..., :, None]
    else:
        w_kind = "full"
        if batched:
            w = np.einsum("bi,bris->brs", v_eff, node.core) if node.factor is not None \
                else np.einsum("i,bris->brs", v_eff, node.core)
        else:
            w = np.einsum("i,ris->rs", v_eff, node.core)
    if t.ndim == 1:
        if w_kind == "diag":
            out = w.sum(axis=-1)
        else:
            out = w[..., 0, 0]
        return out if batched else float(out)
    nodes = [n.copy() for n in t.nodes]
    n = t.ndim
    if mode == 0:
        pos = RIGHT_BOUNDARY if mode + 1 == n - 1 else INTERIOR
        nodes[mode + 1] = _absorb(nodes[mode + 1], w_kind, w, "left", pos)
    else:
        pos = LEFT_BOUNDARY if mode - 1 == 0 else INTERIOR
        nodes[mode - 1] = _absorb(nodes[mode - 1], w_kind, w, "right", pos)
    del nodes[mode]
    return TnTensor(nodes, t.batch_size)


def sum_modes(t: TnTensor, modes: Optional[Sequence[int]] = None):
    """Sum over the given modes (all by default) via all-ones contractions."""
    if modes is None:
        modes = range(t.ndim)
    modes = sorted({int(m) for m in modes})
    if modes and (modes[0] < 0 or modes[-1] >= t.ndim):
        raise ContractViolationError(f"modes {modes} out of range for N={t.ndim}")
    out = t
    for m in reversed(modes):
        out = ttv(out, np.ones(out.shape[m]), m)
    return out


def mean(t: TnTensor):
    """Average of all entries (length-B vector when batched)."""
    return sum_modes(t) / t.numel()


def pad(t: TnTensor, mode: int, before: int, after: int) -> TnTensor:
    """Insert zero slices around one mode's physical index; ranks unchanged."""
    if before < 0 or after < 0:
        raise ContractViolationError("pad counts must be nonnegative")
    _check_mode(t, mode)
    if before == 0 and after == 0:
        return t
    node = t.nodes[mode]
    width = [(0, 0)] * (node.factor.ndim if node.factor is not None else node.core.ndim)
    width[-2] = (before, after)
    nodes = [n.copy() for n in t.nodes]
    if node.factor is not None:
        nodes[mode] = ModeNode(node.kind, node.core,
                               np.pad(node.factor, width), node.batched)
    else:
        nodes[mode] = ModeNode(node.kind, np.pad(node.core, width), None, node.batched)
    return TnTensor(nodes, t.batch_size)


def concat(a: TnTensor, b: TnTensor, mode: int) -> TnTensor:
    """Concatenate along one mode by zero-slice padding plus addition."""
    if a.ndim != b.ndim:
        raise ContractViolationError("concat operands need equal mode counts")
    _check_mode(a, mode)
    for k in range(a.ndim):
        if k != mode and a.shape[k] != b.shape[k]:
            raise ContractViolationError(
                f"off-mode shape mismatch at {k}: {a.shape} vs {b.shape}"
            )
    ia, ib = a.shape[mode], b.shape[mode]
    return add(pad(a, mode, 0, ib), pad(b, mode, ia, 0))


def transpose(t: TnTensor, permutation: Sequence[int], eps: float = 1e-14) -> TnTensor:
    """Reorder modes through adjacent merge-swap-split steps.

    The swap sequence is the bubble-sort one (minimal adjacent swaps); each
    split is a truncated SVD with budget eps*||t||_F split evenly over the
    swaps.  The identity permutation returns the input unchanged.
    """
    perm = list(permutation)
    if sorted(perm) != list(range(t.ndim)):
        raise ContractViolationError(f"{permutation} is not a permutation of 0..{t.ndim - 1}")
    if perm == list(range(t.ndim)):
        return t
    if t.batch_size is not None:
        elems = [transpose(t.batch_element(b), perm, eps) for b in range(t.batch_size)]
        return stack(elems)
    swaps = _bubble_swaps(perm)
    t = to_tt(t, absorb_factors=True)
    norm_t = t.norm()
    delta = eps * norm_t / max(len(swaps), 1)
    for j in swaps:
        t = decompose.orthogonalize(t, j)
        cores = [n.core for n in t.nodes]
        left, right = cores[j], cores[j + 1]
        r, i_sz = left.shape[0], left.shape[1]
        j_sz, s = right.shape[1], right.shape[2]
        super_core = np.einsum("rix,xjs->rjis", left, right)
        u, sig, vt, rank = decompose.svd_truncate_abs(
            super_core.reshape(r * j_sz, i_sz * s), delta)
        cores[j] = u.reshape(r, j_sz, rank)
        cores[j + 1] = (sig[:, None] * vt).reshape(rank, i_sz, s)
        t = TnTensor([ModeNode(TT, c) for c in cores])
    return t


def _bubble_swaps(perm: Sequence[int]) -> list:
    """Adjacent-swap sequence realizing ``perm`` with the minimal count."""
    target = {mode: pos for pos, mode in enumerate(perm)}
    current = list(range(len(perm)))
    swaps = []
    changed = True
    while changed:
        changed = False
        for j in range(len(current) - 1):
            if target[current[j]] > target[current[j + 1]]:
                current[j], current[j + 1] = current[j + 1], current[j]
                swaps.append(j)
                changed = True
    return swaps


def conv_mode(t: TnTensor, kernel: np.ndarray, mode: int, padding: str = "valid") -> TnTensor:
    """1-D correlation along one mode, as a Toeplitz matrix product.

    Correlation convention (no kernel flip).  ``valid`` shrinks the mode to
    I - K + 1; ``same`` keeps the size with the kernel anchored at offset
    (K-1)//2.
    """
    kernel = np.asarray(kernel, dtype=np.float64).ravel()
    _check_mode(t, mode)
    i = t.shape[mode]
    k = kernel.shape[0]
    if padding == "valid":
        if k > i:
            raise ContractViolationError(f"kernel of length {k} exceeds mode size {i}")
        mat = np.zeros((i - k + 1, i))
        for s in range(i - k + 1):
            mat[s, s:s + k] = kernel
    elif padding == "same":
        off = (k - 1) // 2
        mat = np.zeros((i, i))
        for s in range(i):
            lo = max(0, s - off)
            hi = min(i, s - off + k)
            mat[s, lo:hi] = kernel[lo - (s - off):hi - (s - off)]
    else:
        raise ContractViolationError(f"unknown padding policy {padding!r}")
    return ttm(t, mat, mode)


def stack(tensors: Sequence[TnTensor]) -> TnTensor:
    """Stack unbatched chains of equal shape into one batched chain.

    Rank profiles are aligned by zero padding so the batch shares one
    profile per edge.
    """
    tensors = [to_tt(x) for x in tensors]
    shapes = {x.shape for x in tensors}
    if len(shapes) != 1:
        raise ContractViolationError("stack needs equal physical shapes")
    n = tensors[0].ndim
    b = len(tensors)
    ranks = [max(x.ranks[k] for x in tensors) for k in range(n + 1)]
    nodes = []
    for k in range(n):
        refs = [x.nodes[k] for x in tensors]
        has_factor = any(r.factor is not None for r in refs)
        if has_factor and not all(
            r.factor is not None and r.factor.shape == refs[0].factor.shape
            for r in refs
        ):
            raise ContractViolationError("stack needs matching factors per mode")
        i = refs[0].internal_size
        core = np.zeros((b, ranks[k], i, ranks[k + 1]))
        for e, ref in enumerate(refs):
            r, _, s = ref.core.shape
            core[e, :r, :, :s] = ref.core
        factor = np.stack([r.factor for r in refs]) if has_factor else None
        nodes.append(ModeNode(TT, core, factor, batched=True))
    return TnTensor(nodes, batch_size=b)


def _check_mode(t: TnTensor, mode: int):
    if not 0 <= mode < t.ndim:
        raise ContractViolationError(f"mode {mode} out of range for N={t.ndim}")

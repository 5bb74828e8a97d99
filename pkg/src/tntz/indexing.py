"""Read and write access to chains in the compressed domain.

Reads mirror reference array semantics: slices (negative steps included),
integers, index lists, ``None`` (new axis), one ellipsis, and a whole-spec
M x N integer array that gathers M entries densely.  Index lists apply
per mode (each list subsets its own mode); a list separated from another
list by a basic index is rejected, matching the documented limitation of
compressed-domain gathering.

Writes return a new value built purely from smooth primitives (masking,
products, sums), so the construction stays differentiable end to end.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import arithmetic
from .core import TT, ModeNode, TnTensor, entries
from .errors import ContractViolationError, InterleavedIndexingError


def broadcast_shapes(a_shape, b_shape) -> tuple:
    """Common shape of two operands, right-aligned, size-1 modes expanding."""
    return arithmetic._broadcast_shapes(a_shape, b_shape)


_SLICE, _LIST, _INT, _NEW, _ELLIPSIS = "slice", "list", "int", "newaxis", "ellipsis"


def _classify(item):
    if item is None:
        return (_NEW, None)
    if item is Ellipsis:
        return (_ELLIPSIS, None)
    if isinstance(item, slice):
        return (_SLICE, item)
    if isinstance(item, (int, np.integer)):
        return (_INT, int(item))
    if isinstance(item, (list, tuple)) or (
        isinstance(item, np.ndarray) and item.ndim == 1
    ):
        arr = np.asarray(item)
        if arr.size and not np.issubdtype(arr.dtype, np.integer):
            raise ContractViolationError(f"index list must hold integers, got {arr.dtype}")
        return (_LIST, arr.astype(np.int64).tolist())
    raise ContractViolationError(f"unsupported index item {item!r}")


def parse_spec(key, n_modes: int):
    """Expand an indexing key into one action per mode plus new-axis slots.

    Returns ``(actions, new_positions)`` where ``actions[k]`` is a
    ``(kind, payload)`` pair for tensor mode k and ``new_positions`` are
    output positions of inserted size-1 modes.
    """
    if not isinstance(key, tuple):
        key = (key,)
    items = [_classify(it) for it in key]
    n_ellipsis = sum(1 for k, _ in items if k == _ELLIPSIS)
    if n_ellipsis > 1:
        raise ContractViolationError("at most one ellipsis is allowed")
    n_mode_items = sum(1 for k, _ in items if k in (_SLICE, _LIST, _INT))
    if n_mode_items > n_modes:
        raise ContractViolationError(
            f"{n_mode_items} indices for a tensor with {n_modes} modes"
        )
    fill = [( _SLICE, slice(None) )] * (n_modes - n_mode_items)
    expanded = []
    if n_ellipsis:
        pos = next(i for i, (k, _) in enumerate(items) if k == _ELLIPSIS)
        expanded = items[:pos] + fill + items[pos + 1:]
    else:
        expanded = items + fill
    # reject a list separated from another list by a basic index
    list_positions = [i for i, (k, _) in enumerate(expanded) if k == _LIST]
    if len(list_positions) > 1:
        lo, hi = list_positions[0], list_positions[-1]
        if any(expanded[i][0] in (_SLICE, _NEW) for i in range(lo + 1, hi)):
            raise InterleavedIndexingError(
                "interleaving list indices with basic indices is not supported"
            )
    actions = [it for it in expanded if it[0] != _NEW]
    out_seq = [it[0] for it in expanded if it[0] != _INT]
    new_positions = [i for i, k in enumerate(out_seq) if k == _NEW]
    return actions, new_positions


def _selection(action, size: int, allow_duplicates: bool = True):
    kind, payload = action
    if kind == _SLICE:
        return list(range(size)[payload])
    sel = []
    for raw in payload:
        i = raw + size if raw < 0 else raw
        if not 0 <= i < size:
            raise ContractViolationError(f"index {raw} out of bounds for size {size}")
        sel.append(i)
    if not allow_duplicates and len(set(sel)) != len(sel):
        raise ContractViolationError("duplicate indices are not allowed in writes")
    return sel


def _subset_node(node: ModeNode, sel) -> ModeNode:
    take = np.asarray(sel, dtype=np.intp)
    if node.factor is not None:
        return ModeNode(node.kind, node.core, np.take(node.factor, take, axis=-2),
                        node.batched)
    return ModeNode(node.kind, np.take(node.core, take, axis=-2), None, node.batched)


def _basis(i: int, size: int) -> np.ndarray:
    e = np.zeros(size)
    e[i] = 1.0
    return e


def getitem(t: TnTensor, key):
    """Compressed read: returns a chain, a scalar (all-integer key), or a
    dense vector for the whole-spec array form."""
    if isinstance(key, np.ndarray) and key.ndim == 2:
        if key.shape[1] != t.ndim:
            raise ContractViolationError(
                f"index matrix must have {t.ndim} columns, got {key.shape[1]}"
            )
        if key.size and not np.issubdtype(key.dtype, np.integer):
            raise ContractViolationError("index matrix must hold integers")
        return entries(t, key.astype(np.int64))
    actions, new_positions = parse_spec(key, t.ndim)
    nodes = list(t.nodes)
    for k, action in enumerate(actions):
        if action[0] in (_SLICE, _LIST):
            sel = _selection(action, t.shape[k])
            nodes[k] = _subset_node(nodes[k], sel)
    out = TnTensor(nodes, t.batch_size)
    int_modes = [(k, a[1]) for k, a in enumerate(actions) if a[0] == _INT]
    for k, i in reversed(int_modes):
        size = t.shape[k]
        i_norm = i + size if i < 0 else i
        if not 0 <= i_norm < size:
            raise ContractViolationError(f"index {i} out of bounds for size {size}")
        out = arithmetic.ttv(out, _basis(i_norm, size), k)
    if not isinstance(out, TnTensor):
        if not new_positions:
            return out
        return _scalar_chain(out, len(new_positions), t.batch_size)
    for p in new_positions:
        out = arithmetic.insert_size1_mode(out, p)
    return out


def _scalar_chain(value, n_modes: int, batch_size: Optional[int]) -> TnTensor:
    core = np.ones((1, 1, 1))
    if batch_size is not None:
        cores = [np.broadcast_to(core, (batch_size, 1, 1, 1)).copy()
                 for _ in range(n_modes)]
        cores[0] = cores[0] * np.asarray(value)[:, None, None, None]
        return TnTensor([ModeNode(TT, c, batched=True) for c in cores], batch_size)
    cores = [core.copy() for _ in range(n_modes)]
    cores[0] = cores[0] * float(value)
    return TnTensor([ModeNode(TT, c) for c in cores])


def _indicator(sel, size: int) -> np.ndarray:
    v = np.zeros(size)
    v[np.asarray(sel, dtype=np.intp)] = 1.0
    return v


def setitem(t: TnTensor, key, value) -> TnTensor:
    """Out-of-place compressed write: the selected region becomes ``value``.

    Built as ``t + mask * (scatter(value) - t)`` where the mask is a rank-1
    0/1 chain over the per-mode selections; array-form and new-axis items
    are not accepted in write keys, and index lists must not repeat.
    """
    if isinstance(key, np.ndarray) and key.ndim == 2:
        raise ContractViolationError("array-form keys are not supported in writes")
    actions, new_positions = parse_spec(key, t.ndim)
    if new_positions:
        raise ContractViolationError("new axes are not supported in writes")
    selections = []
    region_shape = []
    for k, action in enumerate(actions):
        size = t.shape[k]
        if action[0] == _INT:
            i = action[1] + size if action[1] < 0 else action[1]
            if not 0 <= i < size:
                raise ContractViolationError(f"index {action[1]} out of bounds")
            selections.append((k, [i], True))
        else:
            sel = _selection(action, size, allow_duplicates=False)
            selections.append((k, sel, False))
            region_shape.append(len(sel))
    region_shape = tuple(region_shape)
    if 0 in region_shape:
        return t  # writing to an empty region changes nothing
    value_t = _region_value(t, value, region_shape, selections)
    # scatter the region back to the full index space, one mode at a time
    for k, sel, _ in selections:
        p = np.zeros((t.shape[k], max(len(sel), 1)))
        for col, row in enumerate(sel):
            p[row, col] = 1.0
        value_t = arithmetic.ttm(value_t, p, k)
    mask_nodes = []
    for k, sel, _ in selections:
        core = _indicator(sel, t.shape[k])[None, :, None]
        if t.batch_size is not None:
            core = np.broadcast_to(core, (t.batch_size,) + core.shape).copy()
        mask_nodes.append(ModeNode(TT, core, batched=t.batch_size is not None))
    mask = TnTensor(mask_nodes, t.batch_size)
    update = arithmetic.hadamard(mask, arithmetic.add(value_t, arithmetic.negate(t)))
    return arithmetic.add(t, update)


def _region_value(t: TnTensor, value, region_shape, selections) -> TnTensor:
    """Broadcast the written value over the selected region, with size-1
    placeholders on integer-indexed modes."""
    if np.isscalar(value):
        nodes = []
        for idx, (k, sel, is_int) in enumerate(selections):
            size = 1 if is_int else len(sel)
            core = np.ones((1, size, 1)) * (float(value) if idx == 0 else 1.0)
            if t.batch_size is not None:
                core = np.broadcast_to(core, (t.batch_size,) + core.shape).copy()
            nodes.append(ModeNode(TT, core, batched=t.batch_size is not None))
        return TnTensor(nodes, t.batch_size)
    if isinstance(value, np.ndarray):
        raise ContractViolationError(
            "dense write values are not supported; decompose them first"
        )
    if not isinstance(value, TnTensor):
        raise ContractViolationError(f"cannot write a {type(value).__name__}")
    if value.batch_size != t.batch_size:
        raise ContractViolationError("write value must match the target's batching")
    common = broadcast_shapes(value.shape, region_shape)
    if common != region_shape:
        raise ContractViolationError(
            f"value of shape {value.shape} does not broadcast to region {region_shape}"
        )
    out = arithmetic._expand_to(value, region_shape)
    # insert size-1 modes where the key used integers
    for pos, (k, sel, is_int) in enumerate(selections):
        if is_int:
            out = arithmetic.insert_size1_mode(out, pos)
    return out

"""Sampling-based TT learning of black-box functions.

``cross_approximate`` builds a TT chain from a function of integer
multi-indices by alternating left/right pivot sweeps; pivots are chosen by
the greedy maxvol heuristic and ranks grow by a fixed increment per round
until a seeded validation sample meets the target error.  The same
machinery powers approximate element-wise functions of compressed tensors
and a simple incumbent-tracking discrete optimizer.

Internally the sweep loop supports a stack of co-sampled functions sharing
one pivot trajectory (used to fit a batch of tensors in a single pass);
the public entry point is the single-function case.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .config import resolve_seed
from .core import TT, ModeNode, TnTensor, entries, to_tt
from .errors import ContractViolationError, EvaluationError, StructuralError

MAXVOL_DELTA_IN_CROSS = 0.05


@dataclass
class MaxvolResult:
    """Selected rows and the interpolation coefficients B = A @ A_sel^-1."""

    rows: List[int]
    coeffs: np.ndarray
    volume_history: List[float] = field(default_factory=list)  # log|det| per step


def maxvol(a: np.ndarray, delta: float = 0.01) -> MaxvolResult:
    """Greedy search for a well-conditioned r-row submatrix of an n x r matrix.

    Starts from the rows picked by a row-pivoted LU, then keeps swapping in
    the row with the largest coefficient until ``max|B| <= 1 + delta`` (or
    2n swaps have been spent).  Each swap grows ``|det(A_sel)|`` by that
    coefficient, so the selected volume is non-decreasing.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < a.shape[1] or a.shape[1] < 1:
        raise ContractViolationError(f"maxvol needs a tall n x r matrix, got {a.shape}")
    if delta < 0:
        raise ContractViolationError("delta must be nonnegative")
    n, r = a.shape
    lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    diag = np.abs(np.diag(lu))
    good = diag > 1e-12 * (diag.max() if diag.size else 0.0)
    if not np.all(good):
        raise StructuralError(
            f"matrix is rank deficient: {int((~good).sum())} of {r} columns "
            "are numerically dependent"
        )
    order = np.arange(n)
    for i, p in enumerate(piv):
        order[i], order[p] = order[p], order[i]
    selected = order[:r].copy()
    history = []
    swaps = 0
    while True:
        b = np.linalg.solve(a[selected].T, a.T).T
        history.append(float(np.linalg.slogdet(a[selected])[1]))
        i, j = np.unravel_index(np.argmax(np.abs(b)), b.shape)
        if abs(b[i, j]) <= 1.0 + delta or swaps >= 2 * n:
            break
        selected[j] = i
        swaps += 1
    return MaxvolResult(rows=[int(x) for x in selected], coeffs=b,
                        volume_history=history)


@dataclass(frozen=True)
class CrossConfig:
    """Knobs for the adaptive sampling loop.

    ``max_iters`` caps directional sweeps; ranks grow by ``rank_increment``
    after every unconverged left+right round.
    """

    target_eps: float = 1e-6
    max_iters: int = 50
    initial_rank: int = 1
    rank_increment: int = 1
    validation_size: int = 200
    seed: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.target_eps < 1:
            raise ContractViolationError("target_eps must lie in (0, 1)")
        if min(self.max_iters, self.initial_rank, self.rank_increment,
               self.validation_size) < 1:
            raise ContractViolationError("all cross parameters must be positive")


@dataclass
class EvalLog:
    """Black-box call accounting plus the incumbent optimum seen so far."""

    total_evaluations: int = 0
    best_index: Optional[tuple] = None
    best_value: float = -np.inf
    final_validation_error: float = np.inf
    sweeps: int = 0

    def observe(self, idx: np.ndarray, values: np.ndarray):
        self.total_evaluations += int(values.size)
        if values.size:
            flat = int(np.argmax(values))
            row = flat // values.shape[1]
            if values.flat[flat] > self.best_value:
                self.best_value = float(values.flat[flat])
                self.best_index = tuple(int(x) for x in idx[row])


def _call_black_box(f, idx: np.ndarray, log: EvalLog, stack: int) -> np.ndarray:
    """Evaluate f on an (M, N) index batch; result is (M, stack)."""
    try:
        values = np.asarray(f(idx), dtype=np.float64)
    except Exception as exc:  # identify the offending index, then re-raise
        for row in idx:
            try:
                f(row[None, :])
            except Exception:
                raise EvaluationError(
                    f"black box raised at index {tuple(int(x) for x in row)}: {exc}",
                    index=row,
                ) from exc
        raise EvaluationError(f"black box raised on a batch: {exc}") from exc
    values = values.reshape(idx.shape[0], -1)
    if values.shape[1] != stack:
        raise EvaluationError(
            f"black box returned {values.shape} for {idx.shape[0]} indices "
            f"(expected stack of {stack})"
        )
    bad = ~np.isfinite(values)
    if bad.any():
        row = idx[int(np.argmax(bad.any(axis=1)))]
        raise EvaluationError(
            f"black box returned a non-finite value at {tuple(int(x) for x in row)}",
            index=row,
        )
    log.observe(idx, values)
    return values


def _distinct_rows(rng, sizes: Sequence[int], count: int,
                   existing: Optional[np.ndarray] = None) -> np.ndarray:
    """Up to ``count`` new distinct multi-indices over the given mode sizes."""
    space = 1
    for s in sizes:
        space = min(space * int(s), 10**9)
    seen = set() if existing is None else {tuple(r) for r in existing.tolist()}
    budget = min(count, space - len(seen))
    rows = []
    attempts = 0
    while len(rows) < budget and attempts < 200 * max(count, 1):
        candidate = tuple(int(rng.integers(0, s)) for s in sizes)
        attempts += 1
        if candidate in seen:
            continue
        seen.add(candidate)
        rows.append(candidate)
    made = np.array(rows, dtype=np.int64).reshape(len(rows), len(sizes))
    if existing is None:
        return made
    return np.vstack([existing, made])


def _fiber_indices(lset: np.ndarray, mode_size: int, rset: np.ndarray) -> np.ndarray:
    """Cross-product index matrix (left-set x mode x right-set), left major."""
    rl, rr = lset.shape[0], rset.shape[0]
    left = np.repeat(lset, mode_size * rr, axis=0)
    mid = np.tile(np.repeat(np.arange(mode_size), rr), rl)[:, None]
    right = np.tile(rset, (rl * mode_size, 1))
    return np.hstack([left, mid, right]).astype(np.int64)


class _CrossState:
    """Index sets, cores, and bookkeeping for one cross-approximation run.

    ``stack`` > 1 fits that many co-sampled functions at once: pivots come
    from the first one, the numerical refits run stacked.
    """

    def __init__(self, f, shape, cfg: CrossConfig, stack: int = 1):
        self.f = f
        self.shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in self.shape):
            raise ContractViolationError("all mode sizes must be >= 1")
        self.n = len(self.shape)
        self.cfg = cfg
        self.stack = stack
        self.rng = np.random.default_rng(resolve_seed(cfg.seed))
        self.log = EvalLog()
        n = self.n
        self.lsets = [np.zeros((1, 0), dtype=np.int64)] + [None] * n
        self.rsets = [None] * n + [np.zeros((1, 0), dtype=np.int64)]
        for k in range(n - 1, 0, -1):
            cap = min(cfg.initial_rank, self._space(k))
            self.rsets[k] = _distinct_rows(self.rng, self.shape[k:], cap)
        self.cores: List[Optional[np.ndarray]] = [None] * n  # (stack, r, I, s)
        self.x_val = np.column_stack([
            self.rng.integers(0, s, size=cfg.validation_size) for s in self.shape
        ]).astype(np.int64)
        self.y_val = _call_black_box(f, self.x_val, self.log, stack)
        self.y_val_norm = np.linalg.norm(self.y_val, axis=0)

    def _space(self, lo: int) -> int:
        out = 1
        for s in self.shape[lo:]:
            out = min(out * s, 10**9)
        return out

    def eval_fiber(self, j: int) -> np.ndarray:
        """(stack, left rank, mode size, right rank) values of one fiber."""
        idx = _fiber_indices(self.lsets[j], self.shape[j], self.rsets[j + 1])
        values = _call_black_box(self.f, idx, self.log, self.stack)
        v = values.reshape(len(self.lsets[j]), self.shape[j],
                           len(self.rsets[j + 1]), self.stack)
        return np.moveaxis(v, 3, 0)

    def _interpolation_cores(self, mat: np.ndarray) -> Tuple[np.ndarray, list]:
        """Stacked B = Q @ Q_sel^-1 with pivots from the first element."""
        q, _ = np.linalg.qr(mat)
        picked = maxvol(q[0], MAXVOL_DELTA_IN_CROSS)
        if self.stack == 1:
            return picked.coeffs[None], picked.rows
        q_sel = q[:, picked.rows, :]
        coeffs = np.linalg.solve(q_sel.transpose(0, 2, 1),
                                 q.transpose(0, 2, 1)).transpose(0, 2, 1)
        return coeffs, picked.rows

    def sweep_left_to_right(self):
        for j in range(self.n - 1):
            v = self.eval_fiber(j)
            _, rl, i, rr = v.shape
            coeffs, rows = self._interpolation_cores(v.reshape(self.stack, rl * i, rr))
            self.cores[j] = coeffs.reshape(self.stack, rl, i, coeffs.shape[2])
            a_idx, i_idx = np.divmod(np.asarray(rows), i)
            self.lsets[j + 1] = np.hstack([
                self.lsets[j][a_idx], i_idx[:, None]
            ]).astype(np.int64)
        self.log.sweeps += 1

    def sweep_right_to_left(self):
        for j in range(self.n - 1, 0, -1):
            v = self.eval_fiber(j)
            _, rl, i, rr = v.shape
            mat = v.reshape(self.stack, rl, i * rr).transpose(0, 2, 1)
            coeffs, rows = self._interpolation_cores(mat)
            self.cores[j] = coeffs.transpose(0, 2, 1).reshape(
                self.stack, coeffs.shape[2], i, rr)
            i_idx, c_idx = np.divmod(np.asarray(rows), rr)
            self.rsets[j] = np.hstack([
                i_idx[:, None], self.rsets[j + 1][c_idx]
            ]).astype(np.int64)
        self.log.sweeps += 1

    def refresh_edge(self, left: bool):
        """Re-evaluate the outermost core so the chain interpolates exactly."""
        j = 0 if left else self.n - 1
        self.cores[j] = self.eval_fiber(j)

    def tensor(self) -> TnTensor:
        if self.stack == 1:
            return TnTensor([ModeNode(TT, c[0]) for c in self.cores])
        return TnTensor([ModeNode(TT, c, batched=True) for c in self.cores],
                        batch_size=self.stack)

    def validation_error(self) -> float:
        approx = entries(self.tensor(), self.x_val).reshape(-1, self.stack)
        diff = np.linalg.norm(self.y_val - approx, axis=0)
        rel = np.where(self.y_val_norm > 0, diff / np.maximum(self.y_val_norm, 1e-300),
                       np.linalg.norm(approx, axis=0))
        return float(rel.max())

    def grow_ranks(self):
        for k in range(1, self.n):
            if len(self.rsets[k]) < self._space(k):
                self.rsets[k] = _distinct_rows(
                    self.rng, self.shape[k:], self.cfg.rank_increment, self.rsets[k]
                )


def _run_state(state: _CrossState) -> Tuple[TnTensor, EvalLog]:
    cfg = state.cfg
    if state.n == 1:
        state.cores[0] = state.eval_fiber(0)
        t = state.tensor()
        state.log.final_validation_error = state.validation_error()
        return t, state.log

    while True:
        state.sweep_left_to_right()
        if state.log.sweeps >= cfg.max_iters:
            state.refresh_edge(left=False)
            break
        state.sweep_right_to_left()
        state.refresh_edge(left=True)
        err = state.validation_error()
        state.log.final_validation_error = err
        if err <= cfg.target_eps or state.log.sweeps >= cfg.max_iters:
            break
        state.grow_ranks()
    t = state.tensor()
    state.log.final_validation_error = state.validation_error()
    return t, state.log


def cross_approximate(f: Callable, shape: Sequence[int],
                      cfg: Optional[CrossConfig] = None) -> Tuple[TnTensor, EvalLog]:
    """Learn a TT chain from a black-box function of integer multi-indices.

    ``f`` receives an (M, N) integer array and must return M finite values,
    deterministically.  Sweeps alternate until the relative error on a fixed
    seeded validation sample reaches ``cfg.target_eps`` or the sweep budget
    runs out; ranks grow by ``cfg.rank_increment`` after each unconverged
    round.  Returns the chain and an :class:`EvalLog` with the sample count
    and the incumbent optimum.
    """
    cfg = cfg or CrossConfig()
    return _run_state(_CrossState(f, shape, cfg, stack=1))


def cross_approximate_stack(f: Callable, shape: Sequence[int], stack: int,
                            cfg: Optional[CrossConfig] = None
                            ) -> Tuple[TnTensor, EvalLog]:
    """Fit a stack of co-sampled functions with one shared pivot trajectory.

    ``f`` maps (M, N) indices to (M, stack) values; pivots are selected
    from the first column while all numerical refits run stacked.  Returns
    a batched chain (batch size = ``stack``).  Mainly useful to decompose a
    batch of closely related tensors in a single pass.
    """
    if stack < 1:
        raise ContractViolationError("stack must be >= 1")
    cfg = cfg or CrossConfig()
    return _run_state(_CrossState(f, shape, cfg, stack=stack))


def elementwise(t: TnTensor, g: Callable[[np.ndarray], np.ndarray],
                cfg: Optional[CrossConfig] = None) -> TnTensor:
    """Approximate an element-wise function of a compressed chain.

    Runs cross-approximation against ``g`` applied to on-demand entry
    evaluations of ``t`` (chain contraction per sample).
    """
    if t.batch_size is not None:
        raise ContractViolationError("elementwise does not support batched tensors")
    tt = to_tt(t)

    def f(idx):
        return g(entries(tt, idx))

    approx, _ = cross_approximate(f, t.shape, cfg)
    return approx


def discrete_argopt(f: Callable, shape: Sequence[int],
                    cfg: Optional[CrossConfig] = None,
                    sense: str = "max") -> Tuple[tuple, float, EvalLog]:
    """Gradient-free discrete optimization by incumbent tracking.

    Cross-approximates a monotone transform of ``f`` (negation for ``min``)
    and reports the best sample actually evaluated along the way.
    """
    if sense not in ("min", "max"):
        raise ContractViolationError("sense must be 'min' or 'max'")
    if sense == "max":
        _, log = cross_approximate(f, shape, cfg)
        return log.best_index, log.best_value, log
    _, log = cross_approximate(lambda idx: -np.asarray(f(idx)), shape, cfg)
    log.best_value = -log.best_value
    return log.best_index, log.best_value, log

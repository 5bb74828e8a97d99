"""Deterministic fitting of dense arrays into TT, CP, and Tucker chains,
plus orthogonalization and rank truncation of existing chains.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .config import resolve_seed
from .core import CP, TT, ModeNode, TnTensor, apply_factor, to_tt
from .errors import ContractViolationError

_EPS_MACH = np.finfo(np.float64).eps


@dataclass(frozen=True)
class TruncationSpec:
    """Either a relative Frobenius error budget or per-edge rank caps.

    ``eps == 0`` means lossless truncation: only numerically negligible
    singular values (relative to machine precision) are dropped.
    """

    mode: str  # "relative_eps" | "max_ranks"
    eps: float = 0.0
    max_ranks: Optional[tuple] = None

    def __post_init__(self):
        if self.mode not in ("relative_eps", "max_ranks"):
            raise ContractViolationError(f"unknown truncation mode {self.mode!r}")
        if self.mode == "relative_eps":
            if self.eps < 0:
                raise ContractViolationError("eps must be nonnegative")
        elif self.max_ranks is None:
            raise ContractViolationError("max_ranks mode needs rank caps")

    @classmethod
    def by_eps(cls, eps: float) -> "TruncationSpec":
        return cls(mode="relative_eps", eps=float(eps))

    @classmethod
    def by_max_ranks(cls, caps) -> "TruncationSpec":
        caps = (int(caps),) if np.isscalar(caps) else tuple(int(c) for c in caps)
        if any(c < 1 for c in caps):
            raise ContractViolationError("rank caps must be positive")
        return cls(mode="max_ranks", max_ranks=caps)

    def cap_for(self, k: int) -> Optional[int]:
        if self.mode != "max_ranks":
            return None
        if len(self.max_ranks) == 1:
            return self.max_ranks[0]
        return self.max_ranks[k]


def _fix_signs(u: np.ndarray, vt: Optional[np.ndarray]):
    """Flip singular-vector signs so each U column's largest-magnitude entry
    is positive; compensate in vt when given.  Works on stacked inputs."""
    arg = np.argmax(np.abs(u), axis=-2)
    picked = np.take_along_axis(u, arg[..., None, :], axis=-2)[..., 0, :]
    signs = np.where(picked < 0, -1.0, 1.0)
    u = u * signs[..., None, :]
    if vt is not None:
        vt = vt * signs[..., :, None]
    return u, vt


def _ranks_from_tail(s: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Per-row smallest rank whose discarded energy is within delta^2."""
    q = s.shape[-1]
    tail2 = np.zeros(s.shape[:-1] + (q + 1,))
    tail2[..., :q] = np.cumsum((s ** 2)[..., ::-1], axis=-1)[..., ::-1]
    ok = tail2 <= (delta ** 2)[..., None]
    ranks = np.argmax(ok, axis=-1)
    return np.maximum(ranks, 1)


def _numerical_ranks(s: np.ndarray, m: int, n: int) -> np.ndarray:
    cutoff = _EPS_MACH * max(m, n) * s.max(axis=-1)
    return np.maximum((s > cutoff[..., None]).sum(axis=-1), 1)


def _truncated_svd(z: np.ndarray, spec: TruncationSpec, delta, k: int):
    """Batched economy SVD with per-element truncation and zero padding.

    ``z`` is (B, m, n); elements needing fewer singular values than the
    stack-wide rank are zero-padded so a single rank serves the whole
    stack.  Returns (u, s, vt, rank), already masked and cut to rank.
    """
    u, s, vt = np.linalg.svd(z, full_matrices=False)
    u, vt = _fix_signs(u, vt)
    if spec.mode == "max_ranks":
        ranks = np.full(z.shape[0], min(spec.cap_for(k), s.shape[-1]))
    elif spec.eps > 0:
        ranks = _ranks_from_tail(s, delta)
    else:
        ranks = _numerical_ranks(s, z.shape[-2], z.shape[-1])
    r = int(ranks.max())
    keep = np.arange(r)[None, :] < ranks[:, None]  # (B, r)
    u = u[:, :, :r] * keep[:, None, :]
    s = s[:, :r] * keep
    vt = vt[:, :r, :] * keep[:, :, None]
    return u, s, vt, r


def svd_truncate_abs(mat: np.ndarray, delta: float):
    """Economy SVD of a 2D array cut at absolute discarded energy delta^2.

    Returns (u, s, vt, rank) with signs fixed for reproducibility.
    """
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    u, vt = _fix_signs(u, vt)
    if delta > 0:
        rank = int(_ranks_from_tail(s[None], np.array([delta]))[0])
    else:
        rank = int(_numerical_ranks(s[None], *mat.shape)[0])
    return u[:, :rank], s[:rank], vt[:rank, :], rank


def _tt_svd_kernel(xb: np.ndarray, spec: TruncationSpec) -> List[np.ndarray]:
    """TT-SVD sweep over a stack of tensors; returns stacked 4D cores."""
    b = xb.shape[0]
    shape = xb.shape[1:]
    n = len(shape)
    if n == 1:
        return [xb.reshape(b, 1, shape[0], 1).copy()]
    norms = np.sqrt((xb.reshape(b, -1) ** 2).sum(axis=1))
    delta = spec.eps * norms / np.sqrt(n - 1) if spec.mode == "relative_eps" else None
    cores = []
    r_prev = 1
    z = xb
    for k in range(n - 1):
        z = z.reshape(b, r_prev * shape[k], -1)
        u, s, vt, r = _truncated_svd(z, spec, delta, k)
        cores.append(u.reshape(b, r_prev, shape[k], r))
        z = s[:, :, None] * vt
        r_prev = r
    cores.append(z.reshape(b, r_prev, shape[-1], 1))
    return cores


def tt_svd(x: np.ndarray, spec: TruncationSpec) -> TnTensor:
    """Decompose a dense array into an all-TT chain.

    With a relative-eps spec the reconstruction satisfies
    ``||x - full(result)||_F <= eps * ||x||_F`` (the per-step budget is
    split as eps*||x||_F/sqrt(N-1)).  With rank caps there is no error
    guarantee.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ContractViolationError("cannot decompose an empty tensor")
    cores = _tt_svd_kernel(x[None], spec)
    return TnTensor([ModeNode(TT, c[0]) for c in cores])


def tt_svd_batched(x: np.ndarray, spec: TruncationSpec) -> TnTensor:
    """TT-SVD of a stack of equally shaped tensors (leading batch axis).

    All elements share one rank profile: the per-edge maximum over the
    batch, with smaller elements zero-padded in rank.  Each element
    reconstructs within the spec's budget.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2:
        raise ContractViolationError("batched input needs a batch axis plus modes")
    if x.size == 0:
        raise ContractViolationError("cannot decompose an empty tensor")
    cores = _tt_svd_kernel(x, spec)
    return TnTensor([ModeNode(TT, c, batched=True) for c in cores],
                    batch_size=x.shape[0])


@dataclass
class CpAlsResult:
    """Outcome of an alternating-least-squares CP fit."""

    tensor: TnTensor
    rel_error: float
    sweep_errors: List[float] = field(default_factory=list)
    seed: int = 0
    restarts: int = 0


def _khatri_rao(factors: List[np.ndarray], rank: int) -> np.ndarray:
    out = np.ones((1, rank))
    for f in factors:
        out = (out[:, None, :] * f[None, :, :]).reshape(-1, rank)
    return out


def _cp_reconstruct(factors: List[np.ndarray]) -> np.ndarray:
    rank = factors[0].shape[1]
    kr = _khatri_rao(factors[1:], rank)
    return (factors[0] @ kr.T).reshape([f.shape[0] for f in factors])


def _cp_als_once(x, rank, max_iters, tol, seed):
    rng = np.random.default_rng(seed)
    shape = x.shape
    n = x.ndim
    norm_x = float(np.linalg.norm(x))
    factors = [rng.standard_normal((i, rank)) for i in shape]
    grams = [f.T @ f for f in factors]
    errors = []
    unfolds = [np.moveaxis(x, k, 0).reshape(shape[k], -1) for k in range(n)]
    for _ in range(max_iters):
        for k in range(n):
            v = np.ones((rank, rank))
            for j in range(n):
                if j != k:
                    v = v * grams[j]
            others = [factors[j] for j in range(n) if j != k]
            w = unfolds[k] @ _khatri_rao(others, rank)
            try:
                a = np.linalg.solve(v, w.T).T
                if not np.all(np.isfinite(a)):
                    raise np.linalg.LinAlgError
            except np.linalg.LinAlgError:
                a = w @ np.linalg.pinv(v, rcond=1e-12)
            factors[k] = a
            grams[k] = a.T @ a
        errors.append(float(np.linalg.norm(x - _cp_reconstruct(factors))) / norm_x)
        if len(errors) >= 2 and errors[-2] - errors[-1] < tol:
            break
    t = TnTensor([ModeNode(CP, f) for f in factors])
    return t, errors


def cp_als(x: np.ndarray, rank: int, max_iters: int = 100, tol: float = 1e-10,
           seed=None) -> CpAlsResult:
    """Fit an all-CP chain by alternating least squares.

    Initialization is a seeded standard normal; each sweep solves the
    normal equations per factor (Hadamard product of Gram matrices, with a
    pseudo-inverse fallback at cutoff 1e-12).  Stops when the relative fit
    improves by less than ``tol`` or after ``max_iters`` sweeps.  Up to 3
    automatic restarts with incremented seeds kick in while the error
    stagnates above ``10 * tol``.
    """
    x = np.asarray(x, dtype=np.float64)
    if rank < 1:
        raise ContractViolationError("CP rank must be >= 1")
    if max_iters < 1:
        raise ContractViolationError("max_iters must be >= 1")
    if tol < 0:
        raise ContractViolationError("tol must be nonnegative")
    seed = resolve_seed(seed)
    if float(np.linalg.norm(x)) == 0.0:
        zero = TnTensor([ModeNode(CP, np.zeros((i, rank))) for i in x.shape])
        return CpAlsResult(zero, 0.0, [0.0], seed, 0)
    best = None
    for attempt in range(4):
        t, errors = _cp_als_once(x, rank, max_iters, tol, seed + attempt)
        if best is None or errors[-1] < best.rel_error:
            best = CpAlsResult(t, errors[-1], errors, seed + attempt, attempt)
        if best.rel_error <= 10 * tol:
            break
    return best


def tucker_hosvd(x: np.ndarray, spec: TruncationSpec) -> TnTensor:
    """Higher-order SVD: orthonormal per-mode factors over a lossless TT core.

    Each mode's factor keeps the leading left singular vectors of that
    unfolding, budgeted at eps*||x||_F/sqrt(N); the projected core is then
    stored exactly as a TT chain with the factors attached.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ContractViolationError("cannot decompose an empty tensor")
    n = x.ndim
    norm_x = float(np.linalg.norm(x))
    delta = np.array([spec.eps * norm_x / np.sqrt(n)]) \
        if spec.mode == "relative_eps" else None
    factors = []
    core = x
    for k in range(n):
        unfold = np.moveaxis(x, k, 0).reshape(x.shape[k], -1)
        u, s, _ = np.linalg.svd(unfold, full_matrices=False)
        u, _ = _fix_signs(u, None)
        if spec.mode == "max_ranks":
            r = min(spec.cap_for(k), s.shape[-1])
        elif spec.eps > 0:
            r = int(_ranks_from_tail(s[None], delta)[0])
        else:
            r = int(_numerical_ranks(s[None], *unfold.shape)[0])
        f = u[:, :r]
        factors.append(f)
        core = np.moveaxis(np.tensordot(f.T, core, axes=(1, k)), 0, k)
    chain = tt_svd(core, TruncationSpec.by_eps(0.0))
    nodes = [ModeNode(TT, node.core, factors[k]) for k, node in enumerate(chain.nodes)]
    return TnTensor(nodes)


def orthogonalize(t: TnTensor, mu: int) -> TnTensor:
    """Sweep QR factorizations so cores left of ``mu`` are left-orthogonal
    and cores right of it are right-orthogonal.  CP nodes are promoted to
    TT on entry; attached factors are left untouched.
    """
    if t.batch_size is not None:
        raise ContractViolationError("orthogonalize does not support batched tensors")
    if not 0 <= mu < t.ndim:
        raise ContractViolationError(f"mode index {mu} out of range for N={t.ndim}")
    t = to_tt(t)
    cores = [n.core for n in t.nodes]
    for k in range(mu):
        r, i, s = cores[k].shape
        q, rr = np.linalg.qr(cores[k].reshape(r * i, s))
        cores[k] = q.reshape(r, i, -1)
        cores[k + 1] = np.einsum("xy,yis->xis", rr, cores[k + 1])
    for k in range(t.ndim - 1, mu, -1):
        r, i, s = cores[k].shape
        q, rr = np.linalg.qr(cores[k].reshape(r, i * s).T)
        cores[k] = q.T.reshape(-1, i, s)
        cores[k - 1] = np.einsum("pix,xy->piy", cores[k - 1], rr.T)
    nodes = [ModeNode(TT, c, t.nodes[k].factor) for k, c in enumerate(cores)]
    return TnTensor(nodes)


def _orthonormalize_factors(t: TnTensor) -> TnTensor:
    """QR-split every factor so truncation error bounds stay exact."""
    if all(n.factor is None for n in t.nodes):
        return t
    nodes = []
    for node in t.nodes:
        if node.factor is None:
            nodes.append(node.copy())
            continue
        q, r = np.linalg.qr(node.factor)
        core = np.einsum("xi,ris->rxs", r, node.core)
        nodes.append(ModeNode(TT, core, q))
    return TnTensor(nodes)


def round_tt(t: TnTensor, spec: TruncationSpec) -> TnTensor:
    """Truncate chain ranks within a relative error budget.

    Orthogonalizes toward the last mode, then sweeps truncated SVDs back
    with per-step budget eps*||t||_F/sqrt(N-1).  Ranks never increase:
    ``||full(t) - full(result)||_F <= eps * ||full(t)||_F``.
    """
    if t.batch_size is not None:
        raise ContractViolationError("round does not support batched tensors")
    t = _orthonormalize_factors(to_tt(t))
    n = t.ndim
    if n == 1:
        return t
    t = orthogonalize(t, n - 1)
    cores = [node.core for node in t.nodes]
    norm_t = float(np.linalg.norm(cores[-1]))
    delta = np.array([spec.eps * norm_t / np.sqrt(n - 1)]) \
        if spec.mode == "relative_eps" else None
    for k in range(n - 1, 0, -1):
        r, i, s = cores[k].shape
        u, sig, vt, rank = _truncated_svd(cores[k].reshape(1, r, i * s), spec,
                                          delta, k - 1)
        cores[k] = vt[0].reshape(rank, i, s)
        cores[k - 1] = np.einsum("pix,xy->piy", cores[k - 1], u[0] * sig[0][None, :])
    nodes = [ModeNode(TT, c, t.nodes[k].factor) for k, c in enumerate(cores)]
    return TnTensor(nodes)

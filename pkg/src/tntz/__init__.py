"""tntz: low-rank tensor chains blending CP, TT, and Tucker structure.

Compressed tensors are :class:`TnTensor` chains of per-mode nodes; linear
operators live in :class:`TTMatrix` / :class:`CPMatrix`.  Dense arrays are
plain numpy ndarrays of float64.
"""

from . import arithmetic, cross, decompose, indexing, matrices, serialization
from .arithmetic import (
    add,
    add_scalar,
    concat,
    conv_mode,
    dot,
    hadamard,
    mean,
    negate,
    pad,
    scale,
    sum_modes,
    transpose,
    ttm,
    ttv,
)
from .config import default_seed
from .core import (
    CP,
    TT,
    ModeNode,
    TnTensor,
    entries,
    full,
    norm,
    promote_cp_node,
    to_tt,
)
from .cross import CrossConfig, EvalLog, MaxvolResult, cross_approximate, \
    discrete_argopt, elementwise, maxvol
from .decompose import (
    CpAlsResult,
    TruncationSpec,
    cp_als,
    orthogonalize,
    round_tt,
    tt_svd,
    tt_svd_batched,
    tucker_hosvd,
)
from .errors import (
    ChecksumError,
    ContractViolationError,
    DataError,
    EvaluationError,
    GuardExceededError,
    InterleavedIndexingError,
    MagicError,
    SizeError,
    StructuralError,
    TntzError,
)
from .indexing import broadcast_shapes, getitem, setitem
from .matrices import (
    CPMatrix,
    TTMatrix,
    cp_multiply,
    cpm_from_dense,
    cpm_to_dense,
    rank1_determinant,
    rank1_inverse,
    tt_multiply,
    ttm_from_dense,
    ttm_to_dense,
)
from .random import random_blended, random_cp, random_tt, random_tucker
from .serialization import load, read_dense, save, write_dense

__version__ = "0.1.0"

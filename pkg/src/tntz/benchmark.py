"""Loop-vs-batch benchmark over four representative chain operations.

Each cell of the grid (operation x mode size) first verifies that batch
processing reproduces the per-element loop within 1e-12 relative error;
timings are only reported after that gate passes.  Runs are repeated after
two warmup repetitions and reported as mean seconds per processed object.

A memory guard estimates the peak working set of each cell from the rank
algebra and refuses cells that would not fit, rather than getting the
process killed; refused cells are reported and flagged in the exit status.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
import psutil

from . import arithmetic, cross, decompose
from .core import TnTensor, chain_dot, entries, full, norm
from .errors import TntzError
from .random import random_tt

OPS = ("sum", "product", "ttsvd", "cross")
MODES = ("loop", "batch")
EQUALITY_TOL = 1e-12
WARMUP_REPETITIONS = 2

CSV_HEADER = "op,I,N,R,B,mode,mean_seconds_per_item,std_seconds"


class EqualityGateError(TntzError):
    """Batch-mode results diverged from the per-element loop."""


@dataclass
class BenchmarkRow:
    op: str
    size: int
    dims: int
    rank: int
    batch: int
    mode: str
    mean_seconds_per_item: float
    std_seconds: float

    def csv(self) -> str:
        return (f"{self.op},{self.size},{self.dims},{self.rank},{self.batch},"
                f"{self.mode},{self.mean_seconds_per_item:.9e},"
                f"{self.std_seconds:.9e}")


@dataclass
class BenchmarkConfig:
    sizes: tuple = (15, 25, 35, 45)
    rank: int = 20
    dims: int = 8
    ttsvd_dims: int = 4
    batch: int = 32
    repeats: int = 10
    seed: int = 0
    ops: tuple = OPS
    modes: tuple = MODES
    memory_budget_bytes: Optional[int] = None  # default: 85% of available

    def budget(self) -> int:
        if self.memory_budget_bytes is not None:
            return self.memory_budget_bytes
        return int(psutil.virtual_memory().available * 0.85)


def _rel_diff(a: TnTensor, b: TnTensor) -> float:
    """Relative Frobenius distance computed in the compressed domain."""
    num = np.sqrt(max(
        chain_dot(a, a) - 2.0 * chain_dot(a, b) + chain_dot(b, b), 0.0))
    den = max(norm(b), 1e-300)
    return float(num / den)


class _OpHarness:
    """Fixture construction plus loop/batch runners for one grid cell."""

    def __init__(self, op: str, size: int, cfg: BenchmarkConfig):
        self.op = op
        self.size = size
        self.cfg = cfg
        self.dims = cfg.ttsvd_dims if op == "ttsvd" else cfg.dims
        self.built = False

    # -- memory estimate (bytes), used by the guard before building --------

    def estimate_bytes(self) -> int:
        b, r, i, n = self.cfg.batch, self.cfg.rank, self.size, self.dims
        fl = 8
        if self.op == "sum":
            result = max(n - 2, 0) * b * (2 * r) ** 2 * i * fl + 2 * b * 2 * r * i * fl
            fixtures = 4 * b * n * r * r * i * fl
        elif self.op == "product":
            result = max(n - 2, 0) * b * r ** 4 * i * fl + 2 * b * r * r * i * fl
            fixtures = 4 * b * n * r * r * i * fl
        elif self.op == "ttsvd":
            dense = b * i ** n * fl
            result = 3 * b * n * r * r * i * fl
            fixtures = dense * 3.3  # input + remainder + right factor
        else:  # cross
            result = 4 * b * n * r * r * i * fl
            fixtures = 4 * b * n * r * r * i * fl
        # gate holds the batch result plus one loop element at a time
        loop_element = result / b
        return int((result + fixtures + loop_element) * 1.1)

    # -- fixtures -----------------------------------------------------------

    def build(self):
        b, r, i, n = self.cfg.batch, self.cfg.rank, self.size, self.dims
        shape = (i,) * n
        seed = self.cfg.seed
        if self.op in ("sum", "product"):
            self.a_batch = random_tt(shape, r, seed=seed, batch_size=b)
            self.b_batch = random_tt(shape, r, seed=seed + 1, batch_size=b)
            self.a_loop = [self.a_batch.batch_element(e) for e in range(b)]
            self.b_loop = [self.b_batch.batch_element(e) for e in range(b)]
        elif self.op == "ttsvd":
            self.dense = full(random_tt(shape, r, seed=seed, batch_size=b))
            self.spec = decompose.TruncationSpec.by_eps(1e-10)
        else:
            base = random_tt(shape, r, seed=seed)
            self.fixture = base
            self.fixture_batch = arithmetic.stack([base] * b)
            self.cross_cfg = cross.CrossConfig(
                target_eps=1e-8, max_iters=6, initial_rank=r,
                rank_increment=1, validation_size=200, seed=seed,
            )
        self.built = True

    def free(self):
        for name in ("a_batch", "b_batch", "a_loop", "b_loop", "dense",
                     "fixture", "fixture_batch"):
            if hasattr(self, name):
                delattr(self, name)
        self.built = False

    # -- runners ------------------------------------------------------------

    def run_batch(self) -> TnTensor:
        if self.op == "sum":
            return arithmetic.add(self.a_batch, self.b_batch)
        if self.op == "product":
            return arithmetic.hadamard(self.a_batch, self.b_batch)
        if self.op == "ttsvd":
            return decompose.tt_svd_batched(self.dense, self.spec)
        t, _ = cross.cross_approximate_stack(
            lambda idx: entries(self.fixture_batch, idx),
            self.fixture_batch.shape, self.cfg.batch, self.cross_cfg)
        return t

    def run_loop_element(self, e: int) -> TnTensor:
        if self.op == "sum":
            return arithmetic.add(self.a_loop[e], self.b_loop[e])
        if self.op == "product":
            return arithmetic.hadamard(self.a_loop[e], self.b_loop[e])
        if self.op == "ttsvd":
            return decompose.tt_svd(self.dense[e], self.spec)
        return cross.elementwise(self.fixture, lambda x: x, self.cross_cfg)

    def run_loop(self):
        for e in range(self.cfg.batch):
            self.run_loop_element(e)

    # -- gate ---------------------------------------------------------------

    def verify_equality(self):
        """Batch vs loop, element by element, streaming the loop side."""
        batch_result = self.run_batch()
        worst = 0.0
        for e in range(self.cfg.batch):
            loop_result = self.run_loop_element(e)
            worst = max(worst, _rel_diff(batch_result.batch_element(e), loop_result))
            if worst > EQUALITY_TOL:
                raise EqualityGateError(
                    f"{self.op} at I={self.size}: batch/loop mismatch "
                    f"{worst:.3e} > {EQUALITY_TOL} at element {e}"
                )
        return worst


@dataclass
class BenchmarkReport:
    rows: List[BenchmarkRow]
    refused: List[str]


def run_benchmark(cfg: BenchmarkConfig, report: Callable[[str], None] = print
                  ) -> BenchmarkReport:
    """Run the grid: one row per (op, size, mode) that fits in memory.

    Raises :class:`EqualityGateError` on a correctness failure; cells the
    memory guard refused are listed in the returned report instead of
    crashing the run.
    """
    rows: List[BenchmarkRow] = []
    refused: List[str] = []
    budget = cfg.budget()
    for op in cfg.ops:
        for size in cfg.sizes:
            harness = _OpHarness(op, size, cfg)
            need = harness.estimate_bytes()
            if need > budget:
                refused.append(
                    f"{op} I={size}: needs ~{need / 2**30:.1f} GiB, "
                    f"budget {budget / 2**30:.1f} GiB"
                )
                report(f"# refused {refused[-1]}")
                continue
            harness.build()
            worst = harness.verify_equality()
            report(f"# gate ok: {op} I={size} (max rel diff {worst:.2e})")
            for mode in cfg.modes:
                runner = harness.run_batch if mode == "batch" else harness.run_loop
                for _ in range(WARMUP_REPETITIONS - 1):
                    runner()  # the gate run already counts as one warmup
                samples = []
                for _ in range(cfg.repeats):
                    t0 = time.perf_counter()
                    runner()
                    samples.append((time.perf_counter() - t0) / cfg.batch)
                row = BenchmarkRow(
                    op=op, size=size, dims=harness.dims, rank=cfg.rank,
                    batch=cfg.batch, mode=mode,
                    mean_seconds_per_item=float(np.mean(samples)),
                    std_seconds=float(np.std(samples)),
                )
                rows.append(row)
                report(row.csv())
            harness.free()
    return BenchmarkReport(rows=rows, refused=refused)

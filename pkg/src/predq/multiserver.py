"""Power-of-d-choices cluster with 1-bit predicted classes.

Each arrival samples d distinct queues (without replacement) and joins the
one holding the fewest jobs of its own predicted class, counting the job in
service; ties go to the lowest queue index. Jobs never migrate. Every queue
runs the two-class rule: Shorts ahead of Longs, FIFO within class. The
optional preemptive variant inserts Shorts at the front of their queue, so
an arriving Short displaces whatever is running and displaced jobs resume
head-of-class.

Routing draws from its own rng stream, so changing d leaves the arrival and
service processes untouched, and an n=1 cluster reproduces the single-server
two-class policy sample path exactly.
"""

from __future__ import annotations

import numpy as np

from . import _kernel
from .analytic import InstabilityError
from .engine import RngStreams, RunControl, RunRecords
from .metrics import Metrics, summarize
from .workload import (
    JobSpec,
    Poisson,
    PredictionModel,
    ServiceDistribution,
    Workload,
    generate,
)


class RoutingError(ValueError):
    pass


class ClusterState:
    """Queue contents as ordered class-bit lists (index 0 is in service)."""

    def __init__(self, n: int):
        if n < 1:
            raise RoutingError("cluster needs at least one queue")
        self.queues: list[list[int]] = [[] for _ in range(n)]

    @property
    def n(self) -> int:
        return len(self.queues)

    def same_class_count(self, q: int, bit: int) -> int:
        return sum(1 for b in self.queues[q] if b == bit)

    def push(self, q: int, bit: int) -> None:
        self.queues[q].append(bit)

    def total_jobs(self) -> int:
        return sum(len(q) for q in self.queues)


def _job_bit(job: JobSpec) -> int:
    if job.class_bit is None:
        raise RoutingError("routing needs a classified job (class_bit 'S' or 'L')")
    return 0 if job.class_bit == "S" else 1


def route(job: JobSpec, d: int, state: ClusterState, rng) -> int:
    """Pick the best of d sampled queues for one arriving job."""
    n = state.n
    if not 1 <= d <= n:
        raise RoutingError(f"d={d} must be between 1 and the {n} queues")
    bit = _job_bit(job)
    sampled = rng.choice(n, size=d, replace=False)
    best_q = -1
    best_c = -1
    for q in sampled:
        q = int(q)
        c = state.same_class_count(q, bit)
        if best_q < 0 or c < best_c or (c == best_c and q < best_q):
            best_q, best_c = q, c
    return best_q


def _candidate_matrix(n_jobs: int, d: int, nq: int, rng) -> np.ndarray:
    """Pregenerate the d sampled queues for every arrival (choice stream)."""
    if d == 1:
        return rng.integers(0, nq, size=(n_jobs, 1))
    if d == 2:
        i = rng.integers(0, nq, size=n_jobs)
        j = rng.integers(0, nq - 1, size=n_jobs)
        j += j >= i  # skip i: uniform over the remaining nq-1 queues
        return np.column_stack((i, j))
    out = np.empty((n_jobs, d), dtype=np.int64)
    chunk = max(1, 4_000_000 // nq)
    for s in range(0, n_jobs, chunk):
        m = min(chunk, n_jobs - s)
        keys = rng.random((m, nq))
        out[s : s + m] = np.argpartition(keys, d - 1, axis=1)[:, :d]
    return out


def run_cluster(
    n: int,
    d: int,
    lam_per_server: float,
    service: ServiceDistribution,
    prediction: PredictionModel | None,
    control: RunControl,
    rngs: RngStreams,
    preemptive: bool = False,
    threshold: float | None = None,
) -> RunRecords:
    """Simulate the cluster and return per-job completion records.

    Classes come from the workload's OneBit bits when present, otherwise from
    thresholding the predicted size at `threshold`.
    """
    if not 1 <= d <= n:
        raise RoutingError(f"d={d} must be between 1 and the {n} queues")
    mean_size = service.moments()[0]
    if lam_per_server * mean_size >= 1.0:
        raise InstabilityError(
            f"per-server load {lam_per_server * mean_size:.3f} >= 1; no steady state"
        )
    n_jobs = control.last_measured
    wl = generate(Poisson(n * lam_per_server), service, prediction, n_jobs, rngs)
    return simulate_cluster_workload(
        wl, n, d, control, rngs.choice, preemptive=preemptive, threshold=threshold
    )


def simulate_cluster(
    n: int,
    d: int,
    lam_per_server: float,
    service: ServiceDistribution,
    prediction: PredictionModel | None,
    control: RunControl,
    rngs: RngStreams,
    preemptive: bool = False,
    threshold: float | None = None,
    batch_count: int = 32,
) -> Metrics:
    records = run_cluster(
        n, d, lam_per_server, service, prediction, control, rngs,
        preemptive=preemptive, threshold=threshold,
    )
    return summarize(records, batch_count=batch_count)


def simulate_cluster_workload(
    wl: Workload,
    n: int,
    d: int,
    control: RunControl,
    choice_rng,
    preemptive: bool = False,
    threshold: float | None = None,
) -> RunRecords:
    """Cluster run over a prebuilt workload (shared-arrivals comparisons)."""
    if wl.bits is not None:
        bits = wl.bits.astype(np.int64)
    elif threshold is not None:
        src = wl.pred if wl.pred is not None else wl.size
        bits = (src > threshold).astype(np.int64)
    else:
        raise RoutingError("no class bits: use a OneBit prediction model or pass threshold")
    n_jobs = len(wl)
    cand = _candidate_matrix(n_jobs, d, n, choice_rng)
    lo = min(control.first_measured, n_jobs)
    hi = min(control.last_measured, n_jobs)
    first, comp = _kernel.cluster_kernel(
        np.ascontiguousarray(wl.arrival),
        np.ascontiguousarray(wl.size),
        bits,
        cand,
        n,
        preemptive,
        lo,
        hi,
    )
    sl = slice(lo, hi)
    return RunRecords(
        arrival=wl.arrival[sl].copy(),
        first_start=first[sl],
        completion=comp[sl],
        pred_cost=np.zeros(hi - lo),
    )

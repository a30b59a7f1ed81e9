"""Discrete-event simulation core.

Virtual clock plus an event queue with deterministic tie-breaking, seeded
random streams, and run-length control. A single simulation run is strictly
single-threaded; independent runs share nothing mutable, so replications and
parameter sweeps can execute in parallel processes.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class SimulationError(Exception):
    """Base class for simulation errors."""


class SchedulingError(SimulationError):
    """An event was scheduled before the current clock (a logic bug)."""


class NonTerminationError(SimulationError):
    """max_sim_time was reached before the measured-job quota was met."""


# One independent stream per stochastic source, so changing how one source
# is consumed never perturbs draws taken from the others.
STREAM_IDS = {"arrivals": 0, "service": 1, "prediction": 2, "choice": 3}


class RngStreams:
    """Independent PCG64 streams keyed by (seed, stream id).

    Two runs with identical seeds and configuration consume the streams in
    the same order and therefore produce bit-identical event sequences.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.arrivals = self.fresh("arrivals")
        self.service = self.fresh("service")
        self.prediction = self.fresh("prediction")
        self.choice = self.fresh("choice")

    def fresh(self, name: str) -> np.random.Generator:
        """A new generator for the named stream, rewound to its start."""
        ss = np.random.SeedSequence((self.seed, STREAM_IDS[name]))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class RunControl:
    """Run-length control: job-count warm-up plus a measured-job quota."""

    warmup_jobs: int = 0
    measured_jobs: int = 1
    max_sim_time: Optional[float] = None

    def __post_init__(self):
        if self.measured_jobs < 1:
            raise ValueError("measured_jobs must be >= 1")
        if self.warmup_jobs < 0:
            raise ValueError("warmup_jobs must be >= 0")
        if self.max_sim_time is not None and self.max_sim_time <= 0:
            raise ValueError("max_sim_time must be positive")

    @property
    def first_measured(self) -> int:
        return self.warmup_jobs

    @property
    def last_measured(self) -> int:
        """One past the highest measured job index."""
        return self.warmup_jobs + self.measured_jobs


@dataclass
class RunRecords:
    """Per-job completion records for the measured jobs, in arrival order.

    pred_cost is the prediction cost charged to each job (zero unless a cost
    model is active). Run-level scalars (counters, integrals) live in extras.
    """

    arrival: np.ndarray
    first_start: np.ndarray
    completion: np.ndarray
    pred_cost: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def response(self) -> np.ndarray:
        return self.completion - self.arrival

    def __len__(self) -> int:
        return len(self.arrival)


class Engine:
    """Virtual clock and event queue.

    Events fire in nondecreasing time order; equal times fire in insertion
    order. The clock never moves backward.
    """

    def __init__(self):
        self.now = 0.0
        self._heap: list = []
        self._seq = 0

    def schedule(self, time: float, action: Callable[[], None]) -> None:
        if time < self.now:
            raise SchedulingError(
                f"event at t={time!r} scheduled while clock is at t={self.now!r}"
            )
        heapq.heappush(self._heap, (time, self._seq, action))
        self._seq += 1

    def empty(self) -> bool:
        return not self._heap

    def peek_time(self) -> float:
        return self._heap[0][0]

    def step(self) -> None:
        time, _, action = heapq.heappop(self._heap)
        self.now = time
        action()


def run(model, control: RunControl) -> RunRecords:
    """Drive a simulation model until every measured job has completed.

    The model schedules its own events on the engine handed to it and reports
    each completion through the callback it receives:

        model.start(engine, report)
        report(job_index, arrival, first_start, completion, pred_cost=0.0)

    Job indices below warmup_jobs are discarded; indices in
    [warmup_jobs, warmup_jobs + measured_jobs) are measured. If the model
    exhausts its events early (finite trace), the measured jobs that did
    complete are returned; an empty workload yields empty records.
    """
    engine = Engine()
    lo, hi = control.first_measured, control.last_measured
    got: dict[int, tuple] = {}
    state = {"done": False}

    def report(idx, arrival, first_start, completion, pred_cost=0.0):
        if lo <= idx < hi:
            got[idx] = (arrival, first_start, completion, pred_cost)
            if len(got) == control.measured_jobs:
                state["done"] = True

    model.start(engine, report)
    while not engine.empty() and not state["done"]:
        if control.max_sim_time is not None and engine.peek_time() > control.max_sim_time:
            raise NonTerminationError(
                f"reached max_sim_time={control.max_sim_time} with "
                f"{len(got)}/{control.measured_jobs} measured jobs complete"
            )
        engine.step()

    idxs = sorted(got)
    return RunRecords(
        arrival=np.array([got[i][0] for i in idxs], dtype=np.float64),
        first_start=np.array([got[i][1] for i in idxs], dtype=np.float64),
        completion=np.array([got[i][2] for i in idxs], dtype=np.float64),
        pred_cost=np.array([got[i][3] for i in idxs], dtype=np.float64),
    )

"""Workload generation: arrivals, service times, and predicted service times.

Service distributions and prediction models are small immutable objects with
vectorized samplers. Prediction noise always comes from a dedicated rng
stream so that switching prediction models never perturbs the arrival or
service draws (common random numbers across policy comparisons).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .engine import RngStreams

SHORT, LONG = 0, 1


class TraceError(ValueError):
    """A trace file row failed validation; the message names the line."""


# ---------------------------------------------------------------------------
# service distributions

class ServiceDistribution:
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def moments(self) -> tuple[float, float]:
        """Exact (mean, second moment) for analytic variants."""
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(ServiceDistribution):
    mean: float = 1.0

    def __post_init__(self):
        if self.mean <= 0:
            raise ValueError("mean must be positive")

    def sample(self, rng, n):
        return rng.exponential(self.mean, n)

    def moments(self):
        return self.mean, 2.0 * self.mean * self.mean


@dataclass(frozen=True)
class WeibullPaper(ServiceDistribution):
    """Heavy-tailed Weibull with CDF F(x) = 1 - exp(-sqrt(2x)).

    Shape 1/2, scale 1/2: mean 1, second moment 6. Sampled exactly as
    X = E^2 / 2 with E standard exponential, since P(E^2/2 > x) = e^(-sqrt(2x)).
    """

    def sample(self, rng, n):
        e = rng.standard_exponential(n)
        return 0.5 * e * e

    def moments(self):
        return 1.0, 6.0


@dataclass(frozen=True)
class Deterministic(ServiceDistribution):
    value: float

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("value must be positive")

    def sample(self, rng, n):
        return np.full(n, self.value, dtype=np.float64)

    def moments(self):
        return self.value, self.value * self.value


@dataclass(frozen=True)
class Empirical(ServiceDistribution):
    """Resamples a trace column with replacement."""

    values: tuple

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.size == 0 or np.any(arr <= 0):
            raise ValueError("empirical values must be nonempty and positive")

    def sample(self, rng, n):
        arr = np.asarray(self.values, dtype=np.float64)
        return arr[rng.integers(0, arr.size, n)]

    def moments(self):
        raise ValueError(
            "Empirical distribution has no analytic moments; estimate them from the data"
        )


def moments(service: ServiceDistribution) -> tuple[float, float]:
    """Exact (mean, second moment); errors for Empirical."""
    return service.moments()


# ---------------------------------------------------------------------------
# prediction models

class PredictionModel:
    def predict(self, sizes: np.ndarray, rng: np.random.Generator):
        """Return (predicted sizes, class bits or None) for true sizes."""
        raise NotImplementedError


@dataclass(frozen=True)
class Exact(PredictionModel):
    def predict(self, sizes, rng):
        return sizes.copy(), None


@dataclass(frozen=True)
class ExponentialMean(PredictionModel):
    """y exponentially distributed with mean equal to the true size."""

    def predict(self, sizes, rng):
        return sizes * rng.standard_exponential(sizes.size), None


@dataclass(frozen=True)
class UniformMultiplicative(PredictionModel):
    """y uniform on [(1-alpha)x, (1+alpha)x]; alpha=0 gives y = x exactly."""

    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must be in [0, 1)")

    def predict(self, sizes, rng):
        u = rng.random(sizes.size)
        return sizes * (1.0 - self.alpha + 2.0 * self.alpha * u), None


@dataclass(frozen=True)
class BoundedMultiplicative(PredictionModel):
    """y in [beta*x, alpha*x] with beta <= 1 <= alpha.

    Only the support is pinned down; within it we sample uniformly, the
    least-informative choice consistent with the bounds.
    """

    beta: float
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0 <= self.alpha):
            raise ValueError("need 0 < beta <= 1 <= alpha")

    def predict(self, sizes, rng):
        u = rng.random(sizes.size)
        return sizes * (self.beta + (self.alpha - self.beta) * u), None


@dataclass(frozen=True)
class OneBit(PredictionModel):
    """Threshold classifier: Long iff the base model's prediction exceeds T.

    The base prediction is kept alongside the bit so composite policies can
    rank within the long class.
    """

    threshold: float
    base: PredictionModel

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")

    def predict(self, sizes, rng):
        y, _ = self.base.predict(sizes, rng)
        bits = (y > self.threshold).astype(np.int8)
        return y, bits


# ---------------------------------------------------------------------------
# arrivals and jobs

@dataclass(frozen=True)
class Poisson:
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    def sample(self, rng, n):
        return np.cumsum(rng.exponential(1.0 / self.rate, n))


@dataclass
class JobSpec:
    """One queueing job. class_bit is 'S' or 'L' when a OneBit model applied."""

    id: int
    arrival_time: float
    true_size: float
    predicted_size: Optional[float] = None
    class_bit: Optional[str] = None


@dataclass
class Workload:
    """Column-oriented batch of jobs, ready for the simulators."""

    arrival: np.ndarray
    size: np.ndarray
    pred: Optional[np.ndarray] = None
    bits: Optional[np.ndarray] = None  # int8, 0 short / 1 long

    def __len__(self):
        return len(self.arrival)

    def head(self, n: int) -> "Workload":
        """The first n jobs as a view (shared arrays)."""
        return Workload(
            arrival=self.arrival[:n],
            size=self.size[:n],
            pred=None if self.pred is None else self.pred[:n],
            bits=None if self.bits is None else self.bits[:n],
        )

    def job(self, i: int) -> JobSpec:
        return JobSpec(
            id=i,
            arrival_time=float(self.arrival[i]),
            true_size=float(self.size[i]),
            predicted_size=None if self.pred is None else float(self.pred[i]),
            class_bit=None if self.bits is None else ("L" if self.bits[i] else "S"),
        )


def generate(
    arrivals: Poisson,
    service: ServiceDistribution,
    prediction: Optional[PredictionModel],
    n: int,
    rngs: RngStreams,
) -> Workload:
    """Sample n jobs, one stream per stochastic source."""
    arr = arrivals.sample(rngs.arrivals, n)
    size = service.sample(rngs.service, n)
    pred = bits = None
    if prediction is not None:
        pred, bits = prediction.predict(size, rngs.prediction)
    return Workload(arrival=arr, size=size, pred=pred, bits=bits)


def sample_job(
    arrivals: Poisson,
    service: ServiceDistribution,
    prediction: Optional[PredictionModel],
    rngs: RngStreams,
    prev_arrival: float = 0.0,
    job_id: int = 0,
) -> JobSpec:
    """Sample a single job (the batch path in generate() is preferred)."""
    inter = rngs.arrivals.exponential(1.0 / arrivals.rate)
    size = service.sample(rngs.service, 1)
    pred = bits = None
    if prediction is not None:
        pred, bits = prediction.predict(size, rngs.prediction)
    return JobSpec(
        id=job_id,
        arrival_time=prev_arrival + inter,
        true_size=float(size[0]),
        predicted_size=None if pred is None else float(pred[0]),
        class_bit=None if bits is None else ("L" if bits[0] else "S"),
    )


# ---------------------------------------------------------------------------
# trace files

TRACE_COLUMNS = ("arrival_time", "true_size", "predicted_size", "class_bit")


def load_trace(path) -> Workload:
    """Read a CSV trace: arrival_time,true_size[,predicted_size][,class_bit].

    Rows are validated one at a time; errors name the offending line number.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise TraceError(f"{path}: empty trace file")

    header = [c.strip() for c in lines[0].split(",")]
    if header[: 2] != ["arrival_time", "true_size"]:
        raise TraceError(
            f"{path}:1: header must start with 'arrival_time,true_size', got {lines[0]!r}"
        )
    for col in header[2:]:
        if col not in TRACE_COLUMNS[2:]:
            raise TraceError(f"{path}:1: unknown column {col!r}")
    has_pred = "predicted_size" in header
    has_bit = "class_bit" in header

    arrivals, sizes, preds, bits = [], [], [], []
    prev_t = -np.inf
    for ln, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = [p.strip() for p in raw.split(",")]
        if len(parts) != len(header):
            raise TraceError(f"{path}:{ln}: expected {len(header)} fields, got {len(parts)}")
        row = dict(zip(header, parts))
        try:
            t = float(row["arrival_time"])
            x = float(row["true_size"])
        except ValueError as exc:
            raise TraceError(f"{path}:{ln}: {exc}") from None
        if x <= 0:
            raise TraceError(f"{path}:{ln}: true_size must be positive, got {x}")
        if t < prev_t:
            raise TraceError(f"{path}:{ln}: arrival times must be nondecreasing")
        prev_t = t
        arrivals.append(t)
        sizes.append(x)
        if has_pred:
            try:
                y = float(row["predicted_size"])
            except ValueError as exc:
                raise TraceError(f"{path}:{ln}: {exc}") from None
            if y <= 0:
                raise TraceError(f"{path}:{ln}: predicted_size must be positive, got {y}")
            preds.append(y)
        if has_bit:
            b = row["class_bit"]
            if b not in ("S", "L"):
                raise TraceError(f"{path}:{ln}: class_bit must be 'S' or 'L', got {b!r}")
            bits.append(LONG if b == "L" else SHORT)

    return Workload(
        arrival=np.asarray(arrivals, dtype=np.float64),
        size=np.asarray(sizes, dtype=np.float64),
        pred=np.asarray(preds, dtype=np.float64) if has_pred else None,
        bits=np.asarray(bits, dtype=np.int8) if has_bit else None,
    )


def save_trace(path, workload: Workload) -> None:
    """Write a Workload back out in the trace format (round-trips load_trace)."""
    cols = ["arrival_time", "true_size"]
    if workload.pred is not None:
        cols.append("predicted_size")
    if workload.bits is not None:
        cols.append("class_bit")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(workload)):
            parts = [repr(float(workload.arrival[i])), repr(float(workload.size[i]))]
            if workload.pred is not None:
                parts.append(repr(float(workload.pred[i])))
            if workload.bits is not None:
                parts.append("L" if workload.bits[i] else "S")
            fh.write(",".join(parts) + "\n")

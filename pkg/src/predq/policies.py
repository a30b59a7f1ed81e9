"""Rank-based scheduling policies for the single-server simulators.

A policy is a two-level rank function over (job view, age): the server always
serves a job of minimal (level, value, arrival_seq). Non-preemptive policies
never interrupt the job in service; preemptive policies re-evaluate at every
event. Cost-aware policies (skip_predict, delay_predict) add prediction
stages that may consume server time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .workload import LONG, SHORT

# Rank floor for delay_predict's long class: keeps promoted ranks positive
# and well ordered when the prediction says the job should already be done.
DELAY_EPS = 1e-9


class PolicyError(ValueError):
    """Policy construction or evaluation failed (bad params, missing data)."""


@dataclass(frozen=True, order=True)
class Rank:
    """Total order: compare level, then value, then arrival sequence."""

    level: int
    value: float
    tiebreak: int


@dataclass
class JobView:
    """What a policy may see about a job. True size is deliberately absent."""

    arrival_seq: int
    age: float = 0.0
    predicted_size: Optional[float] = None
    class_bit: Optional[int] = None
    pipeline_stage: str = "Ready"  # AwaitingCheapPrediction / AwaitingFullPrediction / Ready


@dataclass
class OracleView:
    """Separate view handed only to clairvoyant policies (SJF/PSJF/SRPT/Threshold)."""

    arrival_seq: int
    true_size: float
    age: float = 0.0


# ---------------------------------------------------------------------------
# cost models

@dataclass(frozen=True)
class External:
    """Predictions are instantaneous; costs accrue off the server."""

    cheap_cost: float = 0.0
    full_cost: float = 0.0

    def __post_init__(self):
        if self.cheap_cost < 0 or self.full_cost < 0:
            raise PolicyError("costs must be >= 0")


@dataclass(frozen=True)
class ServerTime:
    """Predictions consume server time before the job can be scheduled."""

    cheap_time: float = 0.0
    full_time: float = 0.0

    def __post_init__(self):
        if self.cheap_time < 0 or self.full_time < 0:
            raise PolicyError("prediction times must be >= 0")


# ---------------------------------------------------------------------------
# rank functions

def _need_pred(view: JobView) -> float:
    if view.predicted_size is None:
        raise PolicyError("policy requires a predicted size and none is present")
    return view.predicted_size


def rank_fifo(view) -> Rank:
    return Rank(0, float(view.arrival_seq), view.arrival_seq)


def rank_sjf(view: OracleView) -> Rank:
    return Rank(0, view.true_size, view.arrival_seq)


def rank_psjf(view: OracleView) -> Rank:
    return Rank(0, view.true_size, view.arrival_seq)


def rank_srpt(view: OracleView) -> Rank:
    return Rank(0, view.true_size - view.age, view.arrival_seq)


def rank_spjf(view: JobView) -> Rank:
    return Rank(0, _need_pred(view), view.arrival_seq)


def rank_pspjf(view: JobView) -> Rank:
    return Rank(0, _need_pred(view), view.arrival_seq)


def rank_sprpt(view: JobView) -> Rank:
    # Negative values are permitted: a job older than its estimate has
    # minimal rank and therefore cannot be preempted.
    return Rank(0, _need_pred(view) - view.age, view.arrival_seq)


def rank_sprpt_bounce(view: JobView) -> Rank:
    # Down from the estimate z to 0 at age z, back up to z at age 2z, then
    # flat at z: min(|z - a|, z).
    z = _need_pred(view)
    return Rank(0, min(abs(z - view.age), z), view.arrival_seq)


def rank_two_class(
    view,
    threshold: Optional[float] = None,
    use_oracle: bool = False,
    preemptive: bool = False,
) -> Rank:
    """Short jobs at level 0, long at level 1.

    Nonpreemptive: FIFO within each class. Preemptive: shorts join the front
    of the queue, so a fresh short outranks every older job (it preempts
    whatever is running) and displaced shorts resume most-recent-first;
    longs stay FIFO.
    """
    if use_oracle:
        if threshold is None:
            raise PolicyError("oracle two-class ranking needs a threshold")
        bit = LONG if view.true_size > threshold else SHORT
    else:
        bit = getattr(view, "class_bit", None)
        if bit is None:
            raise PolicyError("two-class ranking needs a class bit and none is present")
    value = float(view.arrival_seq)
    if preemptive and bit == SHORT:
        value = -value
    return Rank(int(bit), value, view.arrival_seq)


# ---------------------------------------------------------------------------
# policy objects

@dataclass(frozen=True)
class RankPolicy:
    """Declarative policy description consumed by the simulators.

    kind:
        rank            plain (two-level trivial) rank policy
        two_class       1-bit priority, FIFO within class
        two_class_sprpt 1-bit priority, FIFO shorts, SPRPT within longs
        skip_predict    cheap 1-bit for all jobs, full prediction for longs
        delay_predict   FIFO until age L, then full prediction plus SPRPT
    key_source / bit_source say which workload columns feed the rank.
    """

    name: str
    kind: str
    preemptive: bool
    key_source: Optional[str] = None      # size | pred | seq
    bit_source: Optional[str] = None      # pred | oracle | workload
    threshold: Optional[float] = None     # classification threshold when bit_source != workload
    decay: bool = False                   # rank value decreases with attained service
    bounce: bool = False
    trail_c: Optional[float] = None
    cost: Optional[object] = None         # External | ServerTime
    delay_limit: Optional[float] = None

    @property
    def needs_pred(self) -> bool:
        return self.key_source == "pred" or self.bit_source == "pred"

    @property
    def needs_bits(self) -> bool:
        return self.kind in ("two_class", "two_class_sprpt", "skip_predict")


def fifo() -> RankPolicy:
    return RankPolicy("fifo", "rank", preemptive=False, key_source="seq")


def sjf() -> RankPolicy:
    return RankPolicy("sjf", "rank", preemptive=False, key_source="size")


def spjf() -> RankPolicy:
    return RankPolicy("spjf", "rank", preemptive=False, key_source="pred")


def psjf() -> RankPolicy:
    return RankPolicy("psjf", "rank", preemptive=True, key_source="size")


def pspjf() -> RankPolicy:
    return RankPolicy("pspjf", "rank", preemptive=True, key_source="pred")


def srpt() -> RankPolicy:
    return RankPolicy("srpt", "rank", preemptive=True, key_source="size", decay=True)


def sprpt() -> RankPolicy:
    return RankPolicy("sprpt", "rank", preemptive=True, key_source="pred", decay=True)


def sprpt_bounce() -> RankPolicy:
    return RankPolicy(
        "sprpt_bounce", "rank", preemptive=True, key_source="pred", decay=True, bounce=True
    )


def trail_gate(c: float) -> RankPolicy:
    """SPRPT, but a job in service with age >= c * prediction is never preempted."""
    if not 0.0 <= c <= 1.0:
        raise PolicyError(f"trail fraction must lie in [0, 1], got {c}")
    return RankPolicy(
        f"trail_{c:g}", "rank", preemptive=True, key_source="pred", decay=True, trail_c=c
    )


def two_class(
    preemptive: bool, use_oracle: bool = False, threshold: Optional[float] = None
) -> RankPolicy:
    """1-bit two-class policy.

    With use_oracle the bit is true_size > threshold (the clairvoyant
    THRESHOLD variant); otherwise the bit comes from thresholding the noisy
    prediction, or straight from the workload's OneBit column when no
    threshold is given here.

    The nonpreemptive variant serves FIFO within each class. The preemptive
    variant inserts shorts at the front of the queue: an arriving short
    preempts whatever is running, short or long, and displaced shorts resume
    most-recent-first. Under heavy-tailed service this is what keeps a long
    job that was classified short from blocking the whole short class.
    """
    if use_oracle and threshold is None:
        raise PolicyError("oracle two-class policy needs a threshold")
    src = "oracle" if use_oracle else ("pred" if threshold is not None else "workload")
    tag = "threshold" if use_oracle else "prediction"
    pre = "p" if preemptive else "np"
    return RankPolicy(
        f"{tag}_{pre}", "two_class", preemptive=preemptive,
        bit_source=src, threshold=threshold,
    )


def two_class_sprpt(
    use_oracle: bool = False, threshold: Optional[float] = None
) -> RankPolicy:
    """Shorts FIFO with absolute priority; longs SPRPT on the full prediction."""
    if use_oracle and threshold is None:
        raise PolicyError("oracle two-class policy needs a threshold")
    src = "oracle" if use_oracle else ("pred" if threshold is not None else "workload")
    return RankPolicy(
        "two_class_sprpt", "two_class_sprpt", preemptive=True,
        key_source="pred", bit_source=src, threshold=threshold, decay=True,
    )


def skip_predict(cost, threshold: Optional[float] = None) -> RankPolicy:
    """Cheap 1-bit prediction for every job, full prediction for long jobs.

    Priority levels: classified-Short FIFO (0), awaiting cheap prediction
    FIFO (1), long awaiting full prediction FIFO (2), predicted-long SPRPT
    (3). Under ServerTime the prediction stages occupy the server and are
    not preemptible; under External they are instantaneous and only accrue
    cost.
    """
    if cost is None:
        raise PolicyError("skip_predict requires a cost model")
    src = "pred" if threshold is not None else "workload"
    return RankPolicy(
        "skip_predict", "skip_predict", preemptive=True,
        key_source="pred", bit_source=src, threshold=threshold,
        decay=True, cost=cost,
    )


def delay_predict(cost, limit: float) -> RankPolicy:
    """FIFO until age L; at L the job is preempted, pays for a full
    prediction, and joins a lower-priority SPRPT class on max(y - L, eps)."""
    if cost is None:
        raise PolicyError("delay_predict requires a cost model")
    if limit <= 0:
        raise PolicyError(f"delay limit must be positive, got {limit}")
    return RankPolicy(
        "delay_predict", "delay_predict", preemptive=True,
        key_source="pred", decay=True, cost=cost, delay_limit=limit,
    )


POLICIES = {
    "fifo": fifo,
    "sjf": sjf,
    "spjf": spjf,
    "psjf": psjf,
    "pspjf": pspjf,
    "srpt": srpt,
    "sprpt": sprpt,
    "sprpt_bounce": sprpt_bounce,
    "trail": trail_gate,
    "threshold_np": lambda threshold: two_class(False, use_oracle=True, threshold=threshold),
    "threshold_p": lambda threshold: two_class(True, use_oracle=True, threshold=threshold),
    "prediction_np": lambda threshold=None: two_class(False, threshold=threshold),
    "prediction_p": lambda threshold=None: two_class(True, threshold=threshold),
    "two_class_sprpt": two_class_sprpt,
    "skip_predict": skip_predict,
    "delay_predict": delay_predict,
}

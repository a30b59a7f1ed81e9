"""Summary statistics for simulation output.

Mean response times come with a 95% confidence interval from the method of
batch means: the measured jobs are split into equal contiguous batches, and
the batch averages are treated as roughly independent normal draws. Quantiles
are exact order statistics of the sample, not interpolated estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import RunRecords

_Z95 = 1.959963984540054


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class Metrics:
    count: int
    mean_response: float
    ci_half_width: float
    p50: float
    p90: float
    p99: float
    throughput: float
    cost_total: float
    waste: float = 0.0
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {
            "count": self.count,
            "mean_response": self.mean_response,
            "ci_half_width": self.ci_half_width,
            "p50": self.p50,
            "p90": self.p90,
            "p99": self.p99,
            "throughput": self.throughput,
            "cost_total": self.cost_total,
            "waste": self.waste,
        }
        d.update(self.extras)
        return d


def batch_means_ci(values: np.ndarray, batch_count: int) -> tuple[float, float]:
    """Return (mean, 95% half-width) using contiguous batch means."""
    n = values.size
    if batch_count > n:
        batch_count = n
    per = n // batch_count
    used = values[: per * batch_count].reshape(batch_count, per)
    means = used.mean(axis=1)
    mean = float(values.mean())
    if batch_count < 2:
        return mean, float("inf")
    sd = float(means.std(ddof=1))
    return mean, _Z95 * sd / np.sqrt(batch_count)


def exact_quantile(sorted_values: np.ndarray, q: float) -> float:
    """Smallest sample value with at least a fraction q of the sample at or below it."""
    n = sorted_values.size
    idx = int(np.ceil(q * n)) - 1
    return float(sorted_values[max(idx, 0)])


def summarize(records: RunRecords, batch_count: int = 32) -> Metrics:
    if len(records) == 0:
        raise MetricsError("no measured jobs to summarize")
    if batch_count < 10:
        raise MetricsError("batch_count below 10 gives an unusable interval estimate")
    resp = records.response
    mean, hw = batch_means_ci(resp, batch_count)
    srt = np.sort(resp)
    span = float(records.completion.max() - records.arrival.min())
    throughput = len(records) / span if span > 0 else float("inf")
    return Metrics(
        count=len(records),
        mean_response=mean,
        ci_half_width=hw,
        p50=exact_quantile(srt, 0.50),
        p90=exact_quantile(srt, 0.90),
        p99=exact_quantile(srt, 0.99),
        throughput=throughput,
        cost_total=float(records.pred_cost.sum()),
        waste=float(records.extras.get("waste", 0.0)),
        extras={k: v for k, v in records.extras.items() if np.isscalar(v)},
    )


@dataclass(frozen=True)
class PairedComparison:
    mean_diff: float
    ci_half_width: float
    significant: bool
    count: int


def paired_compare(a: RunRecords, b: RunRecords, batch_count: int = 32) -> PairedComparison:
    """Compare two runs job by job; requires common random numbers.

    Both runs must cover the same jobs of the same workload (identical arrival
    arrays), so every per-job difference is a matched pair and the comparison
    variance reflects only the policy change. The difference is flagged
    significant when the mean clears triple the half-width.
    """
    if len(a) != len(b):
        raise MetricsError(f"job counts differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise MetricsError("no measured jobs to compare")
    if not np.array_equal(a.arrival, b.arrival):
        raise MetricsError(
            "arrival times differ; paired comparison needs the same workload on both sides"
        )
    diff = a.response - b.response
    mean, hw = batch_means_ci(diff, batch_count)
    return PairedComparison(
        mean_diff=mean,
        ci_half_width=hw,
        significant=bool(abs(mean) > 3.0 * hw),
        count=diff.size,
    )

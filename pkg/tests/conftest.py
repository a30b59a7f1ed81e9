"""Shared fixtures and hand-built workloads for the test suite."""

import numpy as np
import pytest

from predq.engine import RngStreams, RunControl
from predq.workload import Workload


def make_workload(rows, pred=False, bits=False):
    """Build a Workload from (arrival, size[, pred[, bit]]) tuples."""
    arr = np.array([r[0] for r in rows], dtype=np.float64)
    size = np.array([r[1] for r in rows], dtype=np.float64)
    p = np.array([r[2] for r in rows], dtype=np.float64) if pred else None
    b = np.array([r[3] for r in rows], dtype=np.int8) if bits else None
    return Workload(arrival=arr, size=size, pred=p, bits=b)


@pytest.fixture
def rngs():
    return RngStreams(12345)


@pytest.fixture
def tiny_control():
    """Measure every job of a small hand-built workload."""

    def build(n):
        return RunControl(warmup_jobs=0, measured_jobs=n)

    return build

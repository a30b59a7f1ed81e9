"""Single-server queue simulation front-end.

simulate() dispatches a (policy, workload, control) triple either to the
compiled fast path (plain rank and two-class policies) or to the generic
event-driven model below, which additionally handles the cost-aware staged
policies. Both paths share the exact arithmetic for start, freeze, and
completion times, so on a common workload their completion records agree
bit for bit; the test suite pins that equivalence.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from . import _kernel
from .analytic import InstabilityError
from .engine import RunControl, RunRecords, run as engine_run
from .policies import DELAY_EPS, External, PolicyError, RankPolicy, ServerTime
from .workload import Workload

_INF = math.inf


def _resolve_key(policy: RankPolicy, wl: Workload):
    if policy.key_source is None:
        return None
    if policy.key_source == "size":
        return np.ascontiguousarray(wl.size, dtype=np.float64)
    if policy.key_source == "seq":
        return np.arange(len(wl), dtype=np.float64)
    if wl.pred is None:
        raise PolicyError(f"policy {policy.name!r} needs predicted sizes; workload has none")
    return np.ascontiguousarray(wl.pred, dtype=np.float64)


def _resolve_bits(policy: RankPolicy, wl: Workload):
    if policy.bit_source is None:
        return None
    if policy.bit_source == "workload":
        if wl.bits is None:
            raise PolicyError(
                f"policy {policy.name!r} needs 1-bit classes; apply a OneBit model or set a threshold"
            )
        return wl.bits.astype(np.int64)
    src = wl.size if policy.bit_source == "oracle" else wl.pred
    if src is None:
        raise PolicyError("prediction-based classification needs predicted sizes")
    return (src > policy.threshold).astype(np.int64)


def _stability_precheck(policy: RankPolicy, wl: Workload, bits):
    """Reject server-time prediction loads that push utilization past 1."""
    if not isinstance(policy.cost, ServerTime) or len(wl) < 2:
        return
    span = float(wl.arrival[-1] - wl.arrival[0])
    if span <= 0:
        return
    lam_hat = (len(wl) - 1) / span
    demand = float(wl.size.mean())
    if policy.kind == "skip_predict":
        demand += policy.cost.cheap_time + float(bits.mean()) * policy.cost.full_time
    elif policy.kind == "delay_predict":
        demand += policy.cost.full_time * float((wl.size > policy.delay_limit).mean())
    rho = lam_hat * demand
    if rho >= 1.0:
        raise InstabilityError(
            f"prediction work pushes estimated utilization to {rho:.3f} >= 1; "
            "the queue has no steady state"
        )


def simulate(
    policy: RankPolicy, wl: Workload, control: RunControl, path: str = "auto"
) -> RunRecords:
    """Run one single-server simulation and return measured completion records.

    path: "auto" picks the compiled kernel when the policy supports it,
    "kernel" insists on it, "generic" forces the event-driven reference model
    (needed for cost-staged policies, and used by the cross-validation tests).
    """
    n = len(wl)
    lo = min(control.first_measured, n)
    hi = min(control.last_measured, n)
    key = _resolve_key(policy, wl)
    bits = _resolve_bits(policy, wl)
    _stability_precheck(policy, wl, bits)

    kernelable = policy.kind in ("rank", "two_class", "two_class_sprpt")
    if path == "kernel" and not kernelable:
        raise ValueError(f"policy {policy.name!r} has no compiled path")
    if kernelable and path != "generic":
        return _run_kernel(policy, wl, key, bits, lo, hi)
    model = _GenericModel(policy, wl, key, bits)
    records = engine_run(model, RunControl(lo, max(hi - lo, 1), control.max_sim_time))
    records.extras.update(
        busy_time=model.busy_time,
        stage_time=model.stage_time,
        arrival_events=model.arrival_events,
        departure_events=model.departure_events,
    )
    return records


def _run_kernel(policy, wl, key, bits, lo, hi):
    arr = np.ascontiguousarray(wl.arrival, dtype=np.float64)
    size = np.ascontiguousarray(wl.size, dtype=np.float64)
    if policy.kind == "rank":
        if not policy.preemptive:
            mode = _kernel.MODE_NP
        elif policy.bounce:
            mode = _kernel.MODE_BOUNCE
        elif policy.trail_c is not None:
            mode = _kernel.MODE_TRAIL
        elif policy.decay:
            mode = _kernel.MODE_P_DECAY
        else:
            mode = _kernel.MODE_P_CONST
        first, comp = _kernel.rank_kernel(
            arr, size, key, mode, policy.trail_c or 0.0, lo, hi
        )
    elif policy.kind == "two_class":
        mode = _kernel.TC_PREEMPT if policy.preemptive else _kernel.TC_NONPREEMPT
        first, comp = _kernel.twoclass_kernel(arr, size, size, bits, mode, lo, hi)
    else:  # two_class_sprpt
        first, comp = _kernel.twoclass_kernel(
            arr, size, key, bits, _kernel.TC_COMPOSITE, lo, hi
        )
    sl = slice(lo, hi)
    return RunRecords(
        arrival=arr[sl].copy(),
        first_start=first[sl],
        completion=comp[sl],
        pred_cost=np.zeros(hi - lo),
    )


class _GenericModel:
    """Event-driven reference model covering every policy.

    Waiting jobs live in one heap of (level, value, seq, tag) entries frozen
    at push time; the in-service entry's value decays linearly where the
    policy says so. Prediction stages are server segments that cannot be
    preempted. Event ties resolve in insertion order, which matches the
    compiled kernels' completion-first convention for continuous workloads.
    """

    def __init__(self, policy: RankPolicy, wl: Workload, key, bits):
        self.p = policy
        self.wl = wl
        self.key = key
        self.bits = bits
        n = len(wl)
        self.rem = wl.size.astype(np.float64).copy()
        self.pred_cost = np.zeros(n)
        self.first = np.full(n, -1.0)
        self.promoted = np.zeros(n, dtype=bool) if policy.kind == "delay_predict" else None
        self.heap: list = []
        # serving-segment state
        self.serving = -1
        self.s_level = 0
        self.seg_kind = None       # work | limit | cheap | full
        self.t0 = 0.0
        self.val0 = 0.0
        self.a0 = 0.0
        self.work_end = _INF       # absolute completion time of the work segment
        self.epoch = 0
        self.rel_epoch = 0
        # instrumentation
        self.busy_time = 0.0
        self.stage_time = 0.0
        self.arrival_events = 0
        self.departure_events = 0

    # -- event wiring --------------------------------------------------------

    def start(self, engine, report):
        self.eng = engine
        self.report = report
        if len(self.wl):
            engine.schedule(self.wl.arrival[0], lambda: self._on_arrival(0))

    def _schedule_segment(self, end):
        self.epoch += 1
        self.eng.schedule(end, lambda e=self.epoch: self._on_segment_end(e))

    def _on_arrival(self, i):
        self.arrival_events += 1
        if i + 1 < len(self.wl):
            self.eng.schedule(self.wl.arrival[i + 1], lambda j=i + 1: self._on_arrival(j))
        now = self.eng.now
        for entry in self._entries_for(i):
            heapq.heappush(self.heap, entry)
        if self.serving < 0:
            self._pick_next(now)
        else:
            self._try_preempt(now)

    def _entries_for(self, i):
        p = self.p
        if p.kind == "rank":
            return [(0, self.key[i], i, "work")]
        if p.kind == "two_class":
            b = int(self.bits[i])
            if p.preemptive and b == 0:
                # front insertion: an arriving short preempts whatever is
                # running and displaced shorts resume most-recent-first
                return [(0, -float(i), i, "work")]
            return [(b, float(i), i, "work")]
        if p.kind == "two_class_sprpt":
            if self.bits[i]:
                return [(1, self.key[i], i, "work")]
            return [(0, float(i), i, "work")]
        if p.kind == "skip_predict":
            if isinstance(p.cost, External):
                self.pred_cost[i] += p.cost.cheap_cost
                if self.bits[i]:
                    self.pred_cost[i] += p.cost.full_cost
                    return [(1, self.key[i], i, "work")]
                return [(0, float(i), i, "work")]
            return [(1, float(i), i, "cheap")]
        # delay_predict: everyone starts in the FIFO stage
        return [(0, float(i), i, "work")]

    # -- serving machinery -----------------------------------------------------

    def _decays(self, level) -> bool:
        p = self.p
        if p.kind == "rank":
            return p.decay
        if p.kind == "two_class_sprpt":
            return level == 1
        if p.kind == "skip_predict":
            return level == 3 if isinstance(p.cost, ServerTime) else level == 1
        if p.kind == "delay_predict":
            return level == 1
        return False

    def _current_value(self, now):
        if self.p.bounce:
            a = self.a0 + (now - self.t0)
            d = self.key[self.serving] - a
            cur = abs(d)
            z = self.key[self.serving]
            return cur if cur <= z else z
        if self._decays(self.s_level):
            return self.val0 - (now - self.t0)
        return self.val0

    def _try_preempt(self, now):
        if not self.p.preemptive or self.seg_kind not in ("work", "limit") or not self.heap:
            return
        if self.work_end <= now:
            # the serving job finishes at this very instant and its completion
            # event is already pending; displacing a zero-remaining job would
            # only postpone the completion report past the arrival tie
            return
        level, value, seq, _ = self.heap[0]
        cur = self._current_value(now)
        if (level, value, seq) >= (self.s_level, cur, self.serving):
            if self.p.bounce:
                self._resched_release(now)
            return
        if self.p.trail_c is not None:
            age = self.wl.size[self.serving] - (self.work_end - now)
            if age >= self.p.trail_c * self.key[self.serving]:
                return
        self._freeze_serving(now, cur)
        self._pick_next(now)

    def _freeze_serving(self, now, frozen_value):
        s = self.serving
        self.rem[s] = self.work_end - now
        self.busy_time += now - self.t0
        heapq.heappush(self.heap, (self.s_level, frozen_value, s, "work"))
        self._clear_serving()

    def _clear_serving(self):
        self.serving = -1
        self.seg_kind = None
        self.work_end = _INF
        self.epoch += 1

    def _pick_next(self, now):
        self.rel_epoch += 1
        if not self.heap:
            self._clear_serving()
            return
        self._serve_entry(now, heapq.heappop(self.heap))

    def _serve_entry(self, now, entry):
        level, value, seq, tag = entry
        job = seq
        self.serving = job
        self.s_level = level
        self.t0 = now
        self.val0 = value
        if tag == "work":
            if self.first[job] < 0.0:
                self.first[job] = now
            self.a0 = self.wl.size[job] - self.rem[job]
            self.work_end = now + self.rem[job]
            end, kind = self.work_end, "work"
            if (
                self.p.kind == "delay_predict"
                and level == 0
                and not self.promoted[job]
            ):
                limit_t = now + (self.p.delay_limit - self.a0)
                if limit_t < end:
                    end, kind = limit_t, "limit"
            self.seg_kind = kind
            self._schedule_segment(end)
            if self.p.bounce:
                self._resched_release(now)
        else:
            # prediction stage occupying the server; not preemptible
            dur = self.p.cost.cheap_time if tag == "cheap" else self.p.cost.full_time
            self.seg_kind = tag
            self.work_end = _INF
            self._schedule_segment(now + dur)

    def _on_segment_end(self, epoch):
        if epoch != self.epoch:
            return
        now = self.eng.now
        job = self.serving
        kind = self.seg_kind
        self.busy_time += now - self.t0
        if kind == "work":
            self.departure_events += 1
            self.report(
                job, self.wl.arrival[job], self.first[job], now, self.pred_cost[job]
            )
            self._clear_serving()
            self._pick_next(now)
        elif kind == "limit":
            # the job hits the delay limit mid-service and pays for a prediction
            self.rem[job] = self.work_end - now
            self.promoted[job] = True
            if isinstance(self.p.cost, ServerTime):
                self.t0 = now
                self.seg_kind = "full"
                self.work_end = _INF
                self._schedule_segment(now + self.p.cost.full_time)
            else:
                self.pred_cost[job] += self.p.cost.full_cost
                heapq.heappush(
                    self.heap,
                    (1, max(self.key[job] - self.p.delay_limit, DELAY_EPS), job, "work"),
                )
                self._clear_serving()
                self._pick_next(now)
        elif kind == "cheap":
            self.stage_time += self.p.cost.cheap_time
            self.pred_cost[job] += self.p.cost.cheap_time
            if self.bits[job]:
                heapq.heappush(self.heap, (2, float(job), job, "full"))
            else:
                heapq.heappush(self.heap, (0, float(job), job, "work"))
            self._clear_serving()
            self._pick_next(now)
        else:  # full prediction stage
            self.stage_time += self.p.cost.full_time
            self.pred_cost[job] += self.p.cost.full_time
            if self.p.kind == "delay_predict":
                entry = (1, max(self.key[job] - self.p.delay_limit, DELAY_EPS), job, "work")
            else:
                entry = (3, self.key[job], job, "work")
            heapq.heappush(self.heap, entry)
            self._clear_serving()
            self._pick_next(now)

    # -- bounce crossings --------------------------------------------------------

    def _resched_release(self, now):
        self.rel_epoch += 1
        if self.serving < 0 or not self.heap:
            return
        z = self.key[self.serving]
        m = self.heap[0][1]
        if m >= z:
            return
        # only a strictly-future crossing is scheduled; at an equal-rank tie
        # the incumbent keeps the server until the next event re-evaluates,
        # which is what keeps an equal-rank pair from swapping forever
        tc = self.t0 + (z + m - self.a0)
        if tc > now and tc < self.work_end:
            self.eng.schedule(tc, lambda e=self.rel_epoch: self._on_release(e))

    def _on_release(self, epoch):
        # the served job's rising rank meets the best waiting rank: the waiting
        # job takes the server (boundary resolved in its favor, matching the
        # compiled kernel). The displaced job's rank equals the popped rank
        # exactly at the crossing; freezing it at that value pins the pair to
        # the same float, so rounding noise cannot re-trigger a crossing.
        if epoch != self.rel_epoch:
            return
        now = self.eng.now
        top = heapq.heappop(self.heap)
        self._freeze_serving(now, top[1])
        self.rel_epoch += 1
        self._serve_entry(now, top)

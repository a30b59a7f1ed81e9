"""Token-granularity LLM serving simulator.

Requests carry a prompt (prefill work) and a hidden true output length
(decode work). GPUs run iteration-level continuous batching: every iteration
re-forms the batch; decode members gain one token, prefill members advance up
to a shared per-iteration chunk budget, and completed requests leave at the
iteration boundary. A decode-only iteration lasts tpot seconds; an iteration
containing prefill work lasts max(tpot, ttft_base + ttft_per_token * chunk),
so an unbatched request alone in an empty system satisfies the decomposition

    t_response = t_waiting + (ttft_base + ttft_per_token * n_input)
                 + n_output * tpot

exactly whenever prefill fits in one chunk.

KV memory is token-granular. Admission keeps the sum of resident KV tokens
within capacity by construction, evicting paused requests in reverse rank
order through the configured strategy: Preserve keeps KV resident (frees
nothing), DiscardRecompute zeroes it and re-prefills n_input + generated
tokens on resume, Swap frees it only after a size-proportional transfer and
charges the same transfer again before resuming. API calls suspend a request
mid-decode and apply the same three strategies.

The memory-waste integral accrues at rate (resident KV not in the running
batch) per GPU; rates are piecewise constant between events, so the integral
is exact. A request preserved across an API wait of duration D contributes
exactly kv_tokens * D.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import RngStreams, RunControl, RunRecords, SchedulingError

GB = 1e9
DEFAULT_BYTES_PER_TOKEN = 2.3e9 / 512.0
DEFAULT_TPOT = 0.25
DEFAULT_SWAP_SECONDS_PER_GB = 0.036 / 2.3

PRESERVE = "preserve"
DISCARD = "discard"
SWAP = "swap"
_STRATEGIES = (PRESERVE, DISCARD, SWAP)

_RANK_EPS = 1e-9


class LlmConfigError(ValueError):
    pass


class AdmissionError(ValueError):
    """A request whose solo KV peak exceeds capacity can never be scheduled."""


class MemoryAccountingError(RuntimeError):
    """Internal capacity invariant violated; indicates a simulator bug."""


@dataclass(frozen=True)
class ApiCall:
    trigger: int                   # generated-token count at which the call fires
    duration: float                # seconds away from the GPU
    strategy: str | None = None    # overrides the run-level API strategy

    def __post_init__(self):
        if self.trigger < 0 or self.duration < 0:
            raise LlmConfigError("api call needs trigger >= 0 and duration >= 0")
        if self.strategy is not None and self.strategy not in _STRATEGIES:
            raise LlmConfigError(f"unknown strategy {self.strategy!r}")


@dataclass
class LlmRequest:
    id: int
    arrival_time: float
    n_input: int
    n_output: int
    predicted_output: float | None = None
    api_calls: list[ApiCall] = field(default_factory=list)

    # simulation state
    generated: int = 0
    prefill_done: int = 0
    prefill_target: int = 0
    kv_tokens: int = 0
    stored_kv: int = 0             # KV parked off-GPU by a swap-out
    phase: str = "Queued"
    gpu: int = -1                  # compute GPU index
    pending_gpu: int = -1          # destination of an in-flight KV transfer
    t_first: float = -1.0
    t_prefill_done: float = -1.0
    t_done: float = -1.0
    next_api: int = 0
    api_returned: bool = False
    swap_out_pending: bool = False
    rejected: bool = False

    def __post_init__(self):
        if self.n_input < 1:
            raise LlmConfigError(f"request {self.id}: n_input must be >= 1")
        if self.n_output < 0:
            raise LlmConfigError(f"request {self.id}: n_output must be >= 0")
        last = -1
        for c in self.api_calls:
            if c.trigger <= last:
                raise LlmConfigError(
                    f"request {self.id}: api triggers must be strictly increasing"
                )
            if self.n_output == 0 or c.trigger >= self.n_output:
                raise LlmConfigError(
                    f"request {self.id}: api trigger {c.trigger} not below n_output"
                )
            last = c.trigger
        self.prefill_target = self.n_input

    def reset(self) -> None:
        """Restore the pre-run state so the request can be simulated again."""
        self.generated = 0
        self.prefill_done = 0
        self.prefill_target = self.n_input
        self.kv_tokens = 0
        self.stored_kv = 0
        self.phase = "Queued"
        self.gpu = -1
        self.pending_gpu = -1
        self.t_first = -1.0
        self.t_prefill_done = -1.0
        self.t_done = -1.0
        self.next_api = 0
        self.api_returned = False
        self.swap_out_pending = False
        self.rejected = False

    @property
    def peak_kv(self) -> int:
        return self.n_input + self.n_output

    @property
    def needs_prefill(self) -> bool:
        return self.prefill_done < self.prefill_target

    @property
    def done(self) -> bool:
        return self.phase == "Done"


@dataclass(frozen=True)
class GpuConfig:
    kv_capacity: int = 4096                     # tokens
    bytes_per_token: float = DEFAULT_BYTES_PER_TOKEN
    tpot: float = DEFAULT_TPOT
    ttft_base: float = 0.1
    ttft_per_token: float = 0.4 / 512.0
    prefill_chunk: int = 512
    batch_limit: int = 8
    swap_seconds_per_gb: float = DEFAULT_SWAP_SECONDS_PER_GB

    def __post_init__(self):
        if min(self.kv_capacity, self.prefill_chunk, self.batch_limit) < 1:
            raise LlmConfigError("kv_capacity, prefill_chunk, batch_limit must be >= 1")
        if min(self.bytes_per_token, self.tpot, self.ttft_per_token) <= 0:
            raise LlmConfigError("bytes_per_token, tpot, ttft_per_token must be > 0")
        if self.ttft_base < 0 or self.swap_seconds_per_gb < 0:
            raise LlmConfigError("ttft_base and swap_seconds_per_gb must be >= 0")

    @classmethod
    def from_bytes(cls, kv_bytes: float, **kw) -> "GpuConfig":
        bpt = kw.get("bytes_per_token", DEFAULT_BYTES_PER_TOKEN)
        return cls(kv_capacity=int(kv_bytes // bpt), **kw)

    def ttft(self, n_tokens: int) -> float:
        return self.ttft_base + self.ttft_per_token * n_tokens

    def swap_delay(self, kv_tokens: int) -> float:
        return kv_tokens * self.bytes_per_token / GB * self.swap_seconds_per_gb


@dataclass(frozen=True)
class Pooled:
    g: int = 1
    gpu: GpuConfig = field(default_factory=GpuConfig)

    def __post_init__(self):
        if self.g < 1:
            raise LlmConfigError("pooled org needs at least one GPU")


@dataclass(frozen=True)
class Dedicated:
    prefill: tuple[GpuConfig, ...]
    decode: tuple[GpuConfig, ...]
    kv_transfer_seconds_per_gb: float = 0.0

    def __post_init__(self):
        if not self.prefill or not self.decode:
            raise LlmConfigError("dedicated org needs at least one GPU per role")
        if self.kv_transfer_seconds_per_gb < 0:
            raise LlmConfigError("kv_transfer_seconds_per_gb must be >= 0")


@dataclass(frozen=True)
class LlmPolicy:
    """Batch admission order: FIFO, SPRPT on predicted remaining output
    tokens, or Trail (SPRPT that never drops a running request whose
    generated tokens have reached trail_c * predicted_output)."""

    kind: str = "fifo"
    trail_c: float | None = None
    rank_inputs: bool = False     # add remaining prefill tokens to the rank

    def __post_init__(self):
        if self.kind not in ("fifo", "sprpt", "trail"):
            raise LlmConfigError(f"unknown llm policy {self.kind!r}")
        if self.kind == "trail":
            if self.trail_c is None or not 0.0 <= self.trail_c <= 1.0:
                raise LlmConfigError("trail needs trail_c in [0, 1]")

    def rank(self, req: LlmRequest) -> tuple:
        if self.kind == "fifo":
            return (req.arrival_time, req.id)
        if req.predicted_output is None:
            raise LlmConfigError(
                f"policy {self.kind!r} needs predicted_output on request {req.id}"
            )
        rem = max(req.predicted_output - req.generated, _RANK_EPS)
        if self.rank_inputs:
            rem += req.prefill_target - req.prefill_done
        return (rem, req.id)

    def gated(self, req: LlmRequest) -> bool:
        if self.kind != "trail" or req.t_first < 0 or req.kv_tokens == 0:
            return False
        return req.generated >= self.trail_c * req.predicted_output


LLM_POLICIES = {
    "fifo": lambda **kw: LlmPolicy("fifo"),
    "sprpt": lambda **kw: LlmPolicy("sprpt", rank_inputs=kw.get("rank_inputs", False)),
    "trail": lambda **kw: LlmPolicy(
        "trail", trail_c=kw.get("trail_c", 0.5), rank_inputs=kw.get("rank_inputs", False)
    ),
}


class _Gpu:
    __slots__ = (
        "idx", "cfg", "role", "ready", "swap_ready", "xfer_wait", "assigned",
        "busy", "batch", "prev_running", "active_kv", "resident_kv",
        "last_t", "waste",
    )

    def __init__(self, idx: int, cfg: GpuConfig, role: str):
        self.idx = idx
        self.cfg = cfg
        self.role = role              # pool | prefill | decode
        self.ready: list[LlmRequest] = []      # schedulable (Prefill/Decode)
        self.swap_ready: list[LlmRequest] = [] # swapped out, awaiting swap-in
        self.xfer_wait: list[LlmRequest] = []  # dedicated: awaiting KV room here
        self.assigned = 0             # incomplete requests routed here
        self.busy = False
        self.batch: list[tuple[LlmRequest, int]] = []
        self.prev_running: set = set()
        self.active_kv = 0
        self.resident_kv = 0
        self.last_t = 0.0
        self.waste = 0.0

    def advance(self, t: float):
        if t > self.last_t:
            self.waste += (self.resident_kv - self.active_kv) * (t - self.last_t)
            self.last_t = t

    def add_kv(self, delta: int):
        self.resident_kv += delta
        if self.resident_kv > self.cfg.kv_capacity:
            raise MemoryAccountingError(
                f"gpu {self.idx}: resident KV {self.resident_kv} exceeds "
                f"capacity {self.cfg.kv_capacity}"
            )


@dataclass
class LlmRunResult:
    requests: list[LlmRequest]
    rejected: list[LlmRequest]
    waste: float
    n_pauses: int
    n_evictions: int
    n_swap_out: int
    n_swap_in: int
    n_recompute_events: int
    recompute_tokens: int
    n_api_events: int
    decode_iterations: int
    makespan: float

    def records(self, first: int = 0, last: int | None = None) -> RunRecords:
        """Per-request completion records over the id window [first, last)."""
        done = [r for r in self.requests if r.done and first <= r.id < (last or 10**18)]
        done.sort(key=lambda r: r.id)
        return RunRecords(
            arrival=np.array([r.arrival_time for r in done]),
            first_start=np.array([r.t_first for r in done]),
            completion=np.array([r.t_done for r in done]),
            pred_cost=np.zeros(len(done)),
            extras={
                "waste": self.waste,
                "ttft": np.array([r.t_prefill_done - r.t_first for r in done]),
                "output_tokens": int(sum(r.n_output for r in done)),
            },
        )


def request_latency(req: LlmRequest) -> tuple[float, float, float]:
    """(t_response, ttft, decode_time) for a completed request; ttft is the
    service-side prefill duration, so t_response decomposes as waiting + ttft
    + decode_time."""
    if not req.done:
        raise LlmConfigError(f"request {req.id} has not completed")
    ttft = req.t_prefill_done - req.t_first
    return (req.t_done - req.arrival_time, ttft, req.t_done - req.t_prefill_done)


class Simulator:
    """One event timeline over every GPU in the organization."""

    def __init__(
        self,
        requests: list[LlmRequest],
        org: Pooled | Dedicated,
        policy: LlmPolicy,
        strategy: str = PRESERVE,
        api_strategy: str | None = None,
    ):
        if strategy not in _STRATEGIES:
            raise LlmConfigError(f"unknown strategy {strategy!r}")
        self.policy = policy
        self.strategy = strategy
        self.api_strategy = api_strategy or strategy
        if self.api_strategy not in _STRATEGIES:
            raise LlmConfigError(f"unknown strategy {self.api_strategy!r}")
        self.org = org
        if isinstance(org, Pooled):
            self.gpus = [_Gpu(i, org.gpu, "pool") for i in range(org.g)]
            self.prefill_gpus = self.decode_gpus = self.gpus
        else:
            self.gpus = []
            self.prefill_gpus = []
            self.decode_gpus = []
            for cfg in org.prefill:
                g = _Gpu(len(self.gpus), cfg, "prefill")
                self.gpus.append(g)
                self.prefill_gpus.append(g)
            for cfg in org.decode:
                g = _Gpu(len(self.gpus), cfg, "decode")
                self.gpus.append(g)
                self.decode_gpus.append(g)

        self.requests = sorted(requests, key=lambda r: (r.arrival_time, r.id))
        for r in self.requests:
            r.reset()
        self.rejected: list[LlmRequest] = []
        self.events: list = []
        self._seq = 0
        self.now = 0.0
        self.pending = 0
        # counters
        self.n_pauses = 0
        self.n_evictions = 0
        self.n_swap_out = 0
        self.n_swap_in = 0
        self.n_recompute_events = 0
        self.recompute_tokens = 0
        self.n_api_events = 0
        self.decode_iterations = 0

        for r in self.requests:
            if self._solo_peak_rejected(r):
                r.rejected = True
                self.rejected.append(r)
            else:
                self.pending += 1
                self._push(r.arrival_time, "arrival", r)

    # -- plumbing ---------------------------------------------------------

    def _push(self, t, kind, obj):
        self._seq += 1
        heapq.heappush(self.events, (t, self._seq, kind, obj))

    def _solo_peak_rejected(self, r: LlmRequest) -> bool:
        if isinstance(self.org, Pooled):
            return r.peak_kv > self.org.gpu.kv_capacity
        pre_cap = max(g.kv_capacity for g in self.org.prefill)
        dec_cap = max(g.kv_capacity for g in self.org.decode)
        return r.n_input > pre_cap or r.peak_kv > dec_cap

    def run(self) -> LlmRunResult:
        while self.events:
            t, _, kind, obj = heapq.heappop(self.events)
            self.now = t
            getattr(self, "_ev_" + kind)(obj, t)
        for g in self.gpus:
            g.advance(self.now)
        if self.pending > 0:
            raise SchedulingError(
                f"{self.pending} requests can never be scheduled "
                "(capacity exhausted by preserved KV); use discard or swap, "
                "or raise kv_capacity"
            )
        return LlmRunResult(
            requests=self.requests,
            rejected=self.rejected,
            waste=sum(g.waste for g in self.gpus),
            n_pauses=self.n_pauses,
            n_evictions=self.n_evictions,
            n_swap_out=self.n_swap_out,
            n_swap_in=self.n_swap_in,
            n_recompute_events=self.n_recompute_events,
            recompute_tokens=self.recompute_tokens,
            n_api_events=self.n_api_events,
            decode_iterations=self.decode_iterations,
            makespan=self.now,
        )

    def _kick(self, gpu: _Gpu, t: float):
        if not gpu.busy:
            self.iterate(gpu, t)

    # -- events -----------------------------------------------------------

    def _ev_arrival(self, r: LlmRequest, t: float):
        pool = self.prefill_gpus if isinstance(self.org, Dedicated) else self.gpus
        gpu = min(pool, key=lambda g: (g.assigned, g.idx))
        gpu.assigned += 1
        r.gpu = gpu.idx
        r.phase = "Queued"
        gpu.ready.append(r)
        self._kick(gpu, t)

    def _ev_iter(self, gpu: _Gpu, t: float):
        self._finish_iteration(gpu, t)

    def _ev_api_return(self, r: LlmRequest, t: float):
        r.api_returned = True
        gpu = self.gpus[r.gpu]
        if r.stored_kv > 0 or r.swap_out_pending:
            if not r.swap_out_pending:
                gpu.swap_ready.append(r)    # out-transfer already finished
                self._kick(gpu, t)
            return                          # else swap_out_done will enqueue it
        r.phase = "Prefill" if r.needs_prefill else "Decode"
        gpu.ready.append(r)
        self._kick(gpu, t)

    def _ev_swap_out_done(self, r: LlmRequest, t: float):
        gpu = self.gpus[r.gpu]
        gpu.advance(t)
        r.swap_out_pending = False
        r.stored_kv = r.kv_tokens
        gpu.add_kv(-r.kv_tokens)
        r.kv_tokens = 0
        if r.phase != "ApiWait" or r.api_returned:
            gpu.swap_ready.append(r)
        self._kick(gpu, t)

    def _ev_swap_in_done(self, r: LlmRequest, t: float):
        gpu = self.gpus[r.gpu]
        r.kv_tokens = r.stored_kv
        r.stored_kv = 0
        r.phase = "Prefill" if r.needs_prefill else "Decode"
        gpu.ready.append(r)
        self._kick(gpu, t)

    def _ev_xfer_done(self, r: LlmRequest, t: float):
        src = self.gpus[r.gpu]
        src.advance(t)
        src.add_kv(-r.kv_tokens)
        src.assigned -= 1
        dst = next(g for g in self.decode_gpus if g.idx == r.pending_gpu)
        r.gpu = dst.idx
        r.phase = "Decode"
        dst.ready.append(r)
        self._kick(src, t)
        self._kick(dst, t)

    # -- batching ---------------------------------------------------------

    def iterate(self, gpu: _Gpu, t: float | None = None):
        """Form and launch one batching iteration; idle if nothing fits."""
        now = self.now if t is None else t
        gpu.advance(now)
        batch, prefill_tokens = self.admit(gpu, now)
        if not batch:
            gpu.busy = False
            gpu.active_kv = 0
            return
        gpu.batch = batch
        gpu.active_kv = sum(r.kv_tokens for r, _ in batch)
        gpu.busy = True
        for r, _ in batch:
            if r.t_first < 0:
                r.t_first = now
            if r.phase == "Queued":
                r.phase = "Prefill"
        if prefill_tokens == 0:
            dur = gpu.cfg.tpot
        else:
            dur = max(gpu.cfg.tpot, gpu.cfg.ttft(prefill_tokens))
        self._push(now + dur, "iter", gpu)

    def admit(self, gpu: _Gpu, now: float) -> tuple[list, int]:
        """Greedy rank-order batch formation under slot and KV budgets.

        Trail-gated running requests are taken first and are never evicted.
        A non-resident candidate that cannot fit even after evictions stops
        the scan so large requests are not starved; paused residents that
        cannot fit are merely skipped so the GPU never idles avoidably.
        """
        cfg = gpu.cfg
        self._start_waiting_transfers(gpu, now)

        cands = sorted(
            (r for r in gpu.ready + gpu.swap_ready if not r.swap_out_pending),
            key=self.policy.rank,
        )
        if self.policy.kind == "trail":
            cands.sort(key=lambda r: not self.policy.gated(r))  # stable: gated first

        batch: list[tuple[LlmRequest, int]] = []
        planned = set()
        plan_kv = gpu.resident_kv
        in_flight = 0                 # KV tokens freed by outbound transfers
        chunk_left = cfg.prefill_chunk
        for r in cands:
            if len(batch) == cfg.batch_limit:
                break
            if r.stored_kv > 0:
                # swapped out: admission starts the swap-in transfer (no
                # slot). Swap-ins never evict; re-admitting into memory that
                # is only freed by displacing residents would let two sets of
                # requests swap each other out indefinitely.
                need = r.stored_kv
                if plan_kv + need > cfg.kv_capacity:
                    break             # no bypass, same as other non-residents
                gpu.swap_ready.remove(r)
                gpu.advance(now)
                gpu.add_kv(need)
                plan_kv += need
                r.phase = "Swapped"
                self.n_swap_in += 1
                self._push(now + cfg.swap_delay(need), "swap_in_done", r)
                continue
            if r.needs_prefill:
                alloc = min(r.prefill_target - r.prefill_done, chunk_left)
                if alloc == 0:
                    continue      # per-iteration prefill budget exhausted
                delta = alloc
            else:
                alloc = 0
                delta = 1
            shortfall = delta - (cfg.kv_capacity - plan_kv) - in_flight
            if shortfall > 0:
                freed, flying = self._evict(gpu, planned, now, shortfall)
                plan_kv -= freed
                in_flight += flying
            if plan_kv + delta > cfg.kv_capacity:
                if r.kv_tokens > 0:
                    continue      # paused resident: skip, do not starve the rest
                break             # non-resident entrant: no bypass
            plan_kv += delta
            chunk_left -= alloc
            batch.append((r, alloc))
            planned.add(id(r))

        self.n_pauses += len(gpu.prev_running - planned)
        gpu.prev_running = set()
        return batch, sum(a for _, a in batch)

    def _start_waiting_transfers(self, gpu: _Gpu, now: float):
        # dedicated org: admit queued KV transfers when room appears
        still = []
        for r in gpu.xfer_wait:
            if gpu.resident_kv + r.kv_tokens <= gpu.cfg.kv_capacity:
                self._launch_transfer(r, gpu, now)
            else:
                still.append(r)
        gpu.xfer_wait = still

    def _launch_transfer(self, r: LlmRequest, dst: _Gpu, now: float):
        dst.advance(now)
        dst.add_kv(r.kv_tokens)
        r.pending_gpu = dst.idx
        r.phase = "Transfer"
        delay = (
            r.kv_tokens * self.gpus[r.gpu].cfg.bytes_per_token / GB
            * self.org.kv_transfer_seconds_per_gb
        )
        self._push(now + delay, "xfer_done", r)

    def _evict(
        self, gpu: _Gpu, planned, now: float, shortfall: int
    ) -> tuple[int, int]:
        """Free at least `shortfall` KV tokens via the run strategy; returns
        (tokens freed now, tokens freed later by outbound swap transfers).
        The caller must credit the second figure against later shortfalls in
        the same admission scan, or every paused request would evict its own
        victim for memory that is already on its way out."""
        if self.strategy == PRESERVE:
            return 0, 0
        victims = [
            r for r in gpu.ready
            if r.kv_tokens > 0
            and id(r) not in planned
            and not r.swap_out_pending
            and not self.policy.gated(r)
        ]
        victims.sort(key=self.policy.rank, reverse=True)
        freed = 0
        in_flight = 0
        for v in victims:
            if freed + in_flight >= shortfall:
                break
            self.n_evictions += 1
            if self.strategy == DISCARD:
                freed += v.kv_tokens
                self._discard_kv(v, gpu, now)
            else:
                in_flight += v.kv_tokens
                self._swap_out(v, gpu, now)
                gpu.ready.remove(v)
        return freed, in_flight

    def _discard_kv(self, r: LlmRequest, gpu: _Gpu, now: float):
        gpu.advance(now)
        gpu.add_kv(-r.kv_tokens)
        r.kv_tokens = 0
        r.prefill_target = r.n_input + r.generated
        r.prefill_done = 0
        self.n_recompute_events += 1
        self.recompute_tokens += r.prefill_target

    def _swap_out(self, r: LlmRequest, gpu: _Gpu, now: float):
        r.swap_out_pending = True
        self.n_swap_out += 1
        self._push(now + gpu.cfg.swap_delay(r.kv_tokens), "swap_out_done", r)

    # -- iteration effects --------------------------------------------------

    def _finish_iteration(self, gpu: _Gpu, t: float):
        gpu.advance(t)
        batch = gpu.batch
        gpu.batch = []
        gpu.busy = False
        gpu.active_kv = 0
        for r, alloc in batch:
            if r.needs_prefill:
                gpu.add_kv(alloc)
                r.kv_tokens += alloc
                r.prefill_done += alloc
                if not r.needs_prefill:
                    if r.t_prefill_done < 0:
                        r.t_prefill_done = t
                    self._after_prefill(r, gpu, t)
            else:
                r.generated += 1
                gpu.add_kv(1)
                r.kv_tokens += 1
                self.decode_iterations += 1
                if r.generated == r.n_output:
                    self._complete(r, gpu, t)
                elif self._api_due(r):
                    self._api_event(r, gpu, t)
        gpu.prev_running = {
            id(r) for r, _ in batch
            if r.phase in ("Prefill", "Decode") and not r.swap_out_pending
        }
        self.iterate(gpu, t)

    def _after_prefill(self, r: LlmRequest, gpu: _Gpu, t: float):
        if r.n_output == 0 or r.generated == r.n_output:
            self._complete(r, gpu, t)
            return
        if self._api_due(r):          # trigger == generated right after prefill
            self._api_event(r, gpu, t)
            return
        if gpu.role == "prefill":
            gpu.ready.remove(r)
            r.phase = "Transfer"
            dst = min(self.decode_gpus, key=lambda g: (g.assigned, g.idx))
            dst.assigned += 1
            if dst.resident_kv + r.kv_tokens <= dst.cfg.kv_capacity:
                self._launch_transfer(r, dst, t)
            else:
                r.pending_gpu = dst.idx
                dst.xfer_wait.append(r)
        else:
            r.phase = "Decode"

    def _api_due(self, r: LlmRequest) -> bool:
        return (
            r.next_api < len(r.api_calls)
            and r.api_calls[r.next_api].trigger == r.generated
        )

    def _complete(self, r: LlmRequest, gpu: _Gpu, t: float):
        gpu.add_kv(-r.kv_tokens)
        r.kv_tokens = 0
        r.phase = "Done"
        r.t_done = t
        gpu.assigned -= 1
        gpu.ready.remove(r)
        self.pending -= 1

    def api_event(self, r: LlmRequest, gpu: _Gpu | None = None, t: float | None = None):
        self._api_event(r, gpu or self.gpus[r.gpu], self.now if t is None else t)

    def _api_event(self, r: LlmRequest, gpu: _Gpu, t: float):
        call = r.api_calls[r.next_api]
        r.next_api += 1
        self.n_api_events += 1
        strat = call.strategy or self.api_strategy
        gpu.ready.remove(r)
        r.phase = "ApiWait"
        r.api_returned = False
        if strat == DISCARD:
            self._discard_kv(r, gpu, t)
        elif strat == SWAP:
            self._swap_out(r, gpu, t)
        self._push(t + call.duration, "api_return", r)

    def preempt(self, r: LlmRequest, strategy: str, now: float | None = None):
        """Explicitly evict a resident paused request via one strategy."""
        if r.kv_tokens == 0:
            raise LlmConfigError(f"request {r.id} is not resident")
        gpu = self.gpus[r.gpu]
        t = self.now if now is None else now
        if strategy == DISCARD:
            self._discard_kv(r, gpu, t)
        elif strategy == SWAP:
            self._swap_out(r, gpu, t)
            if r in gpu.ready:
                gpu.ready.remove(r)
        elif strategy != PRESERVE:
            raise LlmConfigError(f"unknown strategy {strategy!r}")


def simulate_llm(
    requests: list[LlmRequest],
    org: Pooled | Dedicated,
    policy: LlmPolicy,
    strategy: str = PRESERVE,
    api_strategy: str | None = None,
) -> LlmRunResult:
    return Simulator(requests, org, policy, strategy, api_strategy).run()


# -- workload helpers ----------------------------------------------------------


def synthesize_requests(
    n: int,
    lam: float,
    rngs: RngStreams,
    input_sampler,
    output_sampler,
    prediction=None,
    api_sampler=None,
) -> list[LlmRequest]:
    """Poisson arrivals with sampled token counts; samplers take (rng, n)."""
    gaps = rngs.arrivals.exponential(1.0 / lam, n)
    arr = np.cumsum(gaps)
    n_in = np.asarray(input_sampler(rngs.service, n), dtype=np.int64)
    n_out = np.asarray(output_sampler(rngs.service, n), dtype=np.int64)
    pred = None
    if prediction is not None:
        pred, _ = prediction.predict(n_out.astype(np.float64), rngs.prediction)
    reqs = []
    for i in range(n):
        calls = list(api_sampler(rngs.choice, int(n_out[i]))) if api_sampler else []
        reqs.append(
            LlmRequest(
                id=i,
                arrival_time=float(arr[i]),
                n_input=int(n_in[i]),
                n_output=int(n_out[i]),
                predicted_output=float(pred[i]) if pred is not None else None,
                api_calls=calls,
            )
        )
    return reqs


def load_llm_trace(path) -> list[LlmRequest]:
    """CSV: arrival_time,n_input,n_output[,predicted_output][,apis]
    where apis is a semicolon list of trigger:duration pairs."""
    from .workload import TraceError

    reqs = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        base = ["arrival_time", "n_input", "n_output"]
        if header[: len(base)] != base:
            raise TraceError(f"bad llm trace header: {header}")
        has_pred = len(header) > 3 and header[3] == "predicted_output"
        api_col = len(header) - 1 if header[-1] == "apis" else -1
        prev = -math.inf
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                t = float(parts[0])
                n_in = int(parts[1])
                n_out = int(parts[2])
                pred = float(parts[3]) if has_pred and parts[3] != "" else None
                calls = []
                if api_col > 0 and len(parts) > api_col and parts[api_col]:
                    for pair in parts[api_col].split(";"):
                        trig, dur = pair.split(":")
                        calls.append(ApiCall(int(trig), float(dur)))
                if t < prev:
                    raise ValueError("arrival times must be nondecreasing")
                prev = t
                reqs.append(
                    LlmRequest(
                        id=len(reqs),
                        arrival_time=t,
                        n_input=n_in,
                        n_output=n_out,
                        predicted_output=pred,
                        api_calls=calls,
                    )
                )
            except (ValueError, IndexError, LlmConfigError) as exc:
                raise TraceError(f"{path}:{ln}: {exc}") from exc
    return reqs


def save_llm_trace(path, requests: list[LlmRequest]) -> None:
    with open(path, "w") as fh:
        fh.write("arrival_time,n_input,n_output,predicted_output,apis\n")
        for r in requests:
            pred = "" if r.predicted_output is None else repr(r.predicted_output)
            apis = ";".join(f"{c.trigger}:{c.duration!r}" for c in r.api_calls)
            fh.write(f"{r.arrival_time!r},{r.n_input},{r.n_output},{pred},{apis}\n")

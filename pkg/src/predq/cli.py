"""Command-line experiment runner.

Subcommands: table1, table2, table3 reproduce the benchmark tables with
reference values and per-cell tolerances; simulate runs a config-driven
single-queue or cluster experiment; analytic evaluates a closed form; llm
runs the serving simulator; sweep evaluates a parameter grid. Configuration
is JSON; command-line flags override config keys. Simulation commands demand
an explicit seed. PREDQ_THREADS caps parallel table cells.
"""

from __future__ import annotations

import argparse
import csv
import inspect
import json
import os
import sys

import numpy as np

from . import analytic, llmserve, tables
from .engine import RngStreams, RunControl, SimulationError
from .metrics import MetricsError, summarize
from .multiserver import RoutingError, simulate_cluster
from .policies import POLICIES, PolicyError, External, ServerTime
from .singleq import simulate
from .workload import (
    BoundedMultiplicative,
    Deterministic,
    Exact,
    Exponential,
    ExponentialMean,
    OneBit,
    Poisson,
    TraceError,
    UniformMultiplicative,
    WeibullPaper,
    generate,
    load_trace,
)

_USER_ERRORS = (
    ValueError,
    KeyError,
    TraceError,
    PolicyError,
    MetricsError,
    RoutingError,
    SimulationError,
    llmserve.LlmConfigError,
    FileNotFoundError,
)


# -- config assembly -----------------------------------------------------------


def _service_from(spec: dict):
    kind = spec.get("kind", "exponential")
    if kind == "exponential":
        return Exponential(spec.get("mean", 1.0))
    if kind == "weibull_paper":
        return WeibullPaper()
    if kind == "deterministic":
        return Deterministic(spec.get("value", 1.0))
    raise ValueError(f"unknown service kind {kind!r}; try exponential, weibull_paper, deterministic")


def _prediction_from(spec):
    if spec is None:
        return None
    kind = spec.get("kind", "exponential_mean")
    if kind == "exact":
        return Exact()
    if kind == "exponential_mean":
        return ExponentialMean()
    if kind == "uniform":
        return UniformMultiplicative(spec["alpha"])
    if kind == "bounded":
        return BoundedMultiplicative(spec["beta"], spec["alpha"])
    if kind == "onebit":
        base = _prediction_from(spec.get("base", {"kind": "exponential_mean"}))
        return OneBit(spec["threshold"], base)
    raise ValueError(
        f"unknown prediction kind {kind!r}; try exact, exponential_mean, uniform, bounded, onebit"
    )


def _policy_from(spec: dict):
    name = spec.get("name", "fifo")
    if name not in POLICIES:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}")
    kwargs = {k: v for k, v in spec.items() if k not in ("name", "cost")}
    cost_spec = spec.get("cost")
    if cost_spec is not None:
        if cost_spec.get("kind") == "server_time":
            kwargs["cost"] = ServerTime(cost_spec["cheap"], cost_spec["full"])
        elif cost_spec.get("kind") == "external":
            kwargs["cost"] = External(cost_spec["cheap"], cost_spec["full"])
        else:
            raise ValueError("cost kind must be server_time or external")
    return POLICIES[name](**kwargs)


def _control_from(spec: dict, jobs_override=None) -> RunControl:
    measured = jobs_override or spec.get("measured", 100_000)
    return RunControl(
        warmup_jobs=spec.get("warmup", max(measured // 10, 1000)),
        measured_jobs=measured,
        max_sim_time=spec.get("max_sim_time"),
    )


def _load_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = json.load(fh)
    for key in ("seed", "jobs", "format"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _require_seed(cfg) -> int:
    seed = cfg.get("seed")
    if seed is None:
        raise ValueError("simulation commands need --seed (or a seed key in the config)")
    return int(seed)


# -- output ----------------------------------------------------------------


def _emit(rows, fmt: str, out_path):
    if isinstance(rows, dict):
        rows = [rows]
    if fmt == "json":
        text = json.dumps(rows, indent=2, default=_jsonable)
    else:
        keys = []
        for r in rows:
            for k in r:
                if k not in keys:
                    keys.append(k)
        import io

        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: _jsonable(v) if isinstance(v, (np.generic,)) else v for k, v in r.items()})
        text = buf.getvalue().rstrip("\n")
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def _threads() -> int:
    return max(1, int(os.environ.get("PREDQ_THREADS", "1")))


# -- subcommands -------------------------------------------------------------


def cmd_table(args, which: int) -> int:
    kw = dict(seed=args.seed if args.seed is not None else 20240801, threads=_threads())
    if args.jobs:
        kw["measured"] = args.jobs
    if args.lams:
        kw["lams"] = [float(x) for x in args.lams.split(",")]
    runner = {1: tables.run_table1, 2: tables.run_table2, 3: tables.run_table3}[which]
    rows = runner(**kw)
    _emit(rows, args.format, args.out)
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    seed = _require_seed(cfg)
    scenario = cfg.get("scenario", "single_queue")
    rngs = RngStreams(seed)
    control = _control_from(cfg.get("control", {}), cfg.get("jobs"))
    w = cfg.get("workload", {})
    if scenario == "single_queue":
        policy = _policy_from(cfg.get("policy", {}))
        if "trace" in w:
            wl = load_trace(w["trace"])
        else:
            wl = generate(
                Poisson(w.get("arrival_rate", 0.8)),
                _service_from(w.get("service", {})),
                _prediction_from(w.get("prediction", {"kind": "exponential_mean"})),
                control.last_measured,
                rngs,
            )
        m = summarize(simulate(policy, wl, control))
    elif scenario == "multiserver":
        c = cfg.get("cluster", {})
        m = simulate_cluster(
            c.get("n", 10),
            c.get("d", 2),
            w.get("arrival_rate", 0.9),
            _service_from(w.get("service", {})),
            _prediction_from(w.get("prediction", {"kind": "onebit", "threshold": 1.0})),
            control,
            rngs,
            preemptive=c.get("preemptive", False),
            threshold=c.get("threshold"),
        )
    else:
        raise ValueError(f"unknown scenario {scenario!r}; try single_queue or multiserver")
    result = {"scenario": scenario, "seed": seed, **m.as_dict()}
    _emit(result, cfg.get("format", args.format), args.out)
    return 0


def cmd_analytic(args) -> int:
    name = args.formula
    if name not in analytic.FORMULAS:
        raise ValueError(f"unknown formula {name!r}; choose from {sorted(analytic.FORMULAS)}")
    fn = analytic.FORMULAS[name]
    provided = {
        "lam": args.lam,
        "threshold": args.threshold,
        "nu": args.nu,
        "x": args.x,
        "mean": args.mean,
        "second_moment": args.second_moment,
    }
    sig = inspect.signature(fn)
    kwargs = {}
    for pname in sig.parameters:
        if provided.get(pname) is None:
            raise ValueError(f"formula {name!r} needs --{pname.replace('_', '-')}")
        kwargs[pname] = int(provided[pname]) if pname == "nu" else provided[pname]
    value = fn(**kwargs)
    row = {"formula": name, **{k: v for k, v in kwargs.items()}}
    if isinstance(value, analytic.AnalyticResult):
        row["value"] = value.mean_response
    else:
        row["value"] = float(value)
    _emit(row, args.format, args.out)
    return 0


def cmd_llm(args) -> int:
    cfg = _load_config(args)
    seed = _require_seed(cfg)
    rngs = RngStreams(seed)
    spec = cfg.get("llm", {})
    gpu = llmserve.GpuConfig(**spec.get("gpu", {}))
    org_spec = spec.get("org", {"kind": "pooled", "g": 1})
    if org_spec.get("kind", "pooled") == "pooled":
        org = llmserve.Pooled(g=org_spec.get("g", 1), gpu=gpu)
    else:
        org = llmserve.Dedicated(
            prefill=tuple([gpu] * org_spec.get("prefill", 1)),
            decode=tuple([gpu] * org_spec.get("decode", 1)),
            kv_transfer_seconds_per_gb=org_spec.get("kv_transfer_seconds_per_gb", 0.0),
        )
    pol_spec = spec.get("policy", {"name": "fifo"})
    policy = llmserve.LLM_POLICIES[pol_spec.get("name", "fifo")](**{
        k: v for k, v in pol_spec.items() if k != "name"
    })
    w = cfg.get("workload", {})
    if "trace" in w:
        reqs = llmserve.load_llm_trace(w["trace"])
    else:
        n = cfg.get("jobs", w.get("jobs", 1000))
        lam = w.get("arrival_rate", 0.05)
        in_mean = w.get("input_mean", 128)
        out_mean = w.get("output_mean", 32)
        pred = _prediction_from(w.get("prediction"))
        reqs = llmserve.synthesize_requests(
            n,
            lam,
            rngs,
            lambda rng, k: rng.poisson(in_mean, k) + 1,
            lambda rng, k: rng.poisson(out_mean, k) + 1,
            prediction=pred,
        )
    result = llmserve.simulate_llm(
        reqs,
        org,
        policy,
        strategy=spec.get("strategy", "preserve"),
        api_strategy=spec.get("api_strategy"),
    )
    records = result.records()
    m = summarize(records, batch_count=max(10, min(32, len(records) // 10 or 10)))
    row = {
        "scenario": "llm",
        "seed": seed,
        **m.as_dict(),
        "waste": result.waste,
        "tokens_per_second": records.extras["output_tokens"] / result.makespan,
        "mean_ttft": float(records.extras["ttft"].mean()),
        "evictions": result.n_evictions,
        "swap_out": result.n_swap_out,
        "swap_in": result.n_swap_in,
        "recompute_events": result.n_recompute_events,
        "recompute_tokens": result.recompute_tokens,
        "api_events": result.n_api_events,
        "rejected": len(result.rejected),
    }
    _emit(row, cfg.get("format", args.format), args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    sweep = cfg.get("sweep", {})
    target = sweep.get("target", "analytic")
    grid_spec = sweep.get("grid", {})
    if isinstance(grid_spec, list):
        grid = [float(g) for g in grid_spec]
    else:
        lo, hi = grid_spec.get("start", 0.1), grid_spec.get("stop", 10.0)
        num = grid_spec.get("num", 25)
        if grid_spec.get("log", False):
            grid = list(np.geomspace(lo, hi, num))
        else:
            grid = list(np.linspace(lo, hi, num))
    param = sweep.get("parameter", "threshold")
    rows = []
    if target == "analytic":
        name = sweep.get("formula", "onebit_t2")
        if name not in analytic.FORMULAS:
            raise ValueError(f"unknown formula {name!r}; choose from {sorted(analytic.FORMULAS)}")
        fn = analytic.FORMULAS[name]
        base = {k: v for k, v in sweep.get("params", {}).items()}
        for g in grid:
            val = fn(**{**base, param: g})
            rows.append({param: g, "value": float(val)})
    elif target == "simulate":
        seed = _require_seed(cfg)
        w = cfg.get("workload", {})
        control = _control_from(cfg.get("control", {}), cfg.get("jobs"))
        rngs = RngStreams(seed)
        wl = generate(
            Poisson(w.get("arrival_rate", 0.8)),
            _service_from(w.get("service", {})),
            _prediction_from(w.get("prediction", {"kind": "exponential_mean"})),
            control.last_measured,
            rngs,
        )
        pol_spec = dict(cfg.get("policy", {}))
        for g in grid:
            pol_spec[param] = g
            m = summarize(simulate(_policy_from(pol_spec), wl, control))
            rows.append({param: g, "value": m.mean_response, "ci_half_width": m.ci_half_width})
    else:
        raise ValueError(f"unknown sweep target {target!r}; try analytic or simulate")
    best = min(range(len(rows)), key=lambda i: rows[i]["value"])
    for i, r in enumerate(rows):
        r["is_min"] = i == best
    _emit(rows, cfg.get("format", args.format), args.out)
    return 0


# -- parser ------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="predq",
        description="prediction-augmented queue scheduling: simulators, closed forms, benchmark tables",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=False):
        sp.add_argument("--config", help="JSON config file", required=False)
        sp.add_argument("--seed", type=int, default=None, help="rng seed (u64)")
        sp.add_argument("--jobs", type=int, default=None, help="measured jobs override")
        sp.add_argument("--format", choices=("csv", "json"), default="json")
        sp.add_argument("--out", default=None, help="write output to a file")

    for t in (1, 2, 3):
        sp = sub.add_parser(f"table{t}", help=f"reproduce benchmark table {t}")
        common(sp)
        sp.add_argument("--lams", default=None, help="comma-separated arrival rates")
        sp.set_defaults(fn=lambda a, t=t: cmd_table(a, t))

    sp = sub.add_parser("simulate", help="run a config-driven queue or cluster simulation")
    common(sp)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("analytic", help="evaluate a closed-form formula")
    sp.add_argument("formula")
    sp.add_argument("--lam", type=float, default=None)
    sp.add_argument("--threshold", "--T", dest="threshold", type=float, default=None)
    sp.add_argument("--nu", type=int, default=None)
    sp.add_argument("--x", type=float, default=None)
    sp.add_argument("--mean", type=float, default=None)
    sp.add_argument("--second-moment", dest="second_moment", type=float, default=None)
    sp.add_argument("--format", choices=("csv", "json"), default="json")
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_analytic)

    sp = sub.add_parser("llm", help="run the LLM serving simulator")
    common(sp)
    sp.set_defaults(fn=cmd_llm)

    sp = sub.add_parser("sweep", help="evaluate a parameter grid")
    common(sp)
    sp.set_defaults(fn=cmd_sweep)

    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _USER_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Prediction-augmented queue scheduling: simulators and closed forms.

Single-server rank-based scheduling with noisy size predictions, 1-bit
classifiers, cost-aware prediction policies, a power-of-d cluster router,
an LLM serving simulator with KV-cache memory strategies, and the matching
M/M/1 and M/G/1 analytics.
"""

from .analytic import (
    AnalyticResult,
    FORMULAS,
    InstabilityError,
    bessel_k,
    mg1_fifo_pk,
    mm1_fifo,
    onebit_long_fraction,
    onebit_t1,
    onebit_t2,
    optimal_threshold,
)
from .engine import (
    Engine,
    NonTerminationError,
    RngStreams,
    RunControl,
    RunRecords,
    SchedulingError,
    SimulationError,
    run,
)
from .llmserve import (
    ApiCall,
    Dedicated,
    GpuConfig,
    LLM_POLICIES,
    LlmPolicy,
    LlmRequest,
    Pooled,
    Simulator,
    load_llm_trace,
    request_latency,
    save_llm_trace,
    simulate_llm,
    synthesize_requests,
)
from .metrics import Metrics, MetricsError, PairedComparison, paired_compare, summarize
from .multiserver import (
    ClusterState,
    RoutingError,
    route,
    run_cluster,
    simulate_cluster,
    simulate_cluster_workload,
)
from .policies import (
    External,
    JobView,
    POLICIES,
    PolicyError,
    Rank,
    RankPolicy,
    ServerTime,
)
from .singleq import simulate
from .tables import (
    TABLE1_REF,
    TABLE2_REF,
    TABLE3_REF,
    run_table1,
    run_table2,
    run_table3,
    sweep_threshold,
)
from .workload import (
    BoundedMultiplicative,
    Deterministic,
    Empirical,
    Exact,
    Exponential,
    ExponentialMean,
    JobSpec,
    OneBit,
    Poisson,
    TraceError,
    UniformMultiplicative,
    WeibullPaper,
    Workload,
    generate,
    load_trace,
    moments,
    sample_job,
    save_trace,
)

__version__ = "0.1.0"

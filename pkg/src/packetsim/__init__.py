"""Discrete-event simulator for group-based HPC job scheduling."""

from .errors import (
    ConfigError,
    EngineInvariantError,
    JobRejectedError,
    MetricsError,
    PacketSimError,
    ParseError,
    ValidationError,
)
from .metrics import MetricsReport, measurement_window, metrics_report
from .policies import (
    DispatchDecision,
    EasyBackfillPolicy,
    FcfsPolicy,
    PacketConfig,
    PacketPolicy,
    TypeQueue,
    group_node_demand,
    grouping_advisability,
    make_policy,
    queue_weight,
    select_queue,
)
from .sim import (
    Allocation,
    ClusterState,
    Job,
    JobGroup,
    SimulationTrace,
    group_span,
    member_run_bounds,
    run_simulation,
)
from .sweep import (
    DEFAULT_K_GRID,
    DEFAULT_S_GRID,
    ExperimentSpec,
    ResultRow,
    SweepConfig,
    WorkloadSpec,
    detect_plateau,
    expand_grid,
    run_experiment,
    run_sweep,
)
from .workload import (
    GeneratorConfig,
    build_workload,
    calibrate_load,
    generate_workload,
    init_proportion,
    measured_load,
    read_workload,
    set_initialization_proportion,
    write_workload,
)

__version__ = "0.1.0"

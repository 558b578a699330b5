"""Deployment planning and analytical timing for mixture-of-experts inference.

The package covers four cluster scenarios (exclusive or colocated models, on
homogeneous or heterogeneous GPUs): contention-free all-to-all schedules with
provably minimal makespan, expert-to-GPU assignment, cross-model expert
colocation, baseline strategies to compare against, and an analytical
timeline simulator producing inference times and GPU utilization.
"""

from .baselines import (
    assign_rga,
    colocate_rec,
    colocate_same_model,
    schedule_fixed_order,
    schedule_rcs,
    schedule_sjf,
)
from .commsched import (
    AugmentedMatrix,
    CommSchedule,
    Phase,
    ScheduleReport,
    TimeMatrix,
    augment,
    bmax_heterogeneous,
    bmax_homogeneous,
    build_schedule,
    decompose,
    time_normalize,
    validate_schedule,
)
from .config import ExperimentConfig, load_config, parse_config, serialize_config
from .core import (
    ClusterSpec,
    DeploymentPlan,
    GpuSpec,
    LayerProfile,
    LoadVector,
    ModelProfile,
    TrafficMatrix,
    combine_colocated,
    deploy_to_gpus,
    reverse_all_to_all,
    row_col_sums,
    validate_traffic_matrix,
)
from .experiment import run_and_write, run_experiment
from .matching import Matching, bottleneck_matching, hopcroft_karp
from .placement import (
    assign_exclusive_hetero,
    brute_force_colocation_hetero,
    colocate_heterogeneous,
    colocate_homogeneous,
    expert_loads,
    pair_case1,
)
from .sim import (
    TimelineResult,
    component_times,
    gpu_utilization,
    inject_noise,
    simulate_colocated,
    simulate_exclusive,
    simulate_same_model,
)
from .workload import SyntheticWorkloadSpec, generate_workload

__version__ = "0.1.0"

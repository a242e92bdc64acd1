"""Forward simulation and trajectory inversion for a subsonic moving point source."""

from .errors import (
    ConfigError,
    MovingSourceError,
    PhysicsError,
    PipelineError,
)
from .forward import (
    FieldTrace,
    doppler_factor,
    field_value,
    field_values,
    retarded_time,
    retarded_times,
    synthesize_traces,
)
from .geometry import (
    DomainSpec,
    HorizonConstants,
    PhysicsConfig,
    SensorArray,
    Trajectory,
    axis_sensors,
    check_sensor_matrix,
    horizon_constants,
    select_sensors,
    validate_subsonic,
)
from .inverse import (
    ArrivalTime,
    ReconstructionReport,
    RetardedTimeCurve,
    ThresholdSpec,
    assemble_rhs,
    detect_arrival,
    estimate_initial_position,
    integrate_retarded_curve,
    invert_curve,
    reconstruct_trajectory,
    solve_position,
)
from .stability import (
    ExperimentSetup,
    PerturbationResult,
    StabilityConstants,
    noise_sweep,
    pair_experiment,
    perturbed,
    theoretical_bounds,
)

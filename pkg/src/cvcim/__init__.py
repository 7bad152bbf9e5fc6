"""Continuous-variable optical Ising machine simulator and BoxQP benchmark harness.

The package simulates the Gaussian-state dynamics of a measurement-feedback
optical parametric oscillator network applied to box-constrained quadratic
programs, with the feedback computation swappable between plain gradient
descent, momentum, and Adam.  A benchmark layer reproduces convergence-speed,
sample-distribution, and feedback-strength-sensitivity experiments with
deterministic, byte-reproducible outputs.
"""

from .boxqp import (
    AmplitudeDomain,
    BoxPoint,
    BoxQpInstance,
    amplitude_to_box,
    amplitude_to_box_unclipped,
    feedback_gradient,
    gradient,
    objective,
)
from .config import ExperimentConfig, load_config
from .dynamics import (
    CimParams,
    GapSeries,
    TrajectoryState,
    amplitude_domain,
    initial_state,
    measured_amplitudes,
    measurement_at,
    pump_at,
    simulate,
    simulate_many,
    step,
)
from .feedback import (
    NonFiniteGradientError,
    PolicyConfig,
    PolicyState,
    compute_update,
    init_state,
    parse_policy_spec,
)
from .instances import (
    ConditionedSpec,
    ReferenceTable,
    generate_conditioned,
    grid_oracle,
    load_reference,
    oracle_best,
    parse_instance,
    random_orthogonal,
    sample_seed_sequence,
    serialize_instance,
    serialize_reference,
)
from .metrics import (
    PercentileTrajectory,
    RatioResult,
    ReferenceBeatenWarning,
    gap_stddev,
    percentile_series,
    relative_gap,
    roundtrip_ratio,
    success_probability,
    ttt,
)
from .runner import (
    RunRecord,
    generate_instance_files,
    oracle_references,
    ratio_files,
    run_experiment,
    sweep_experiment,
)

__version__ = "0.1.0"

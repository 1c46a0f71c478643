"""Exit problems for SDEs with small accelerated pure-jump noise."""

from .errors import (
    ConfigParseError,
    ConfigurationError,
    DegenerateWeight,
    DomainError,
    HypothesisViolation,
    InfeasibleError,
    JumpCapExceeded,
    LevyExitError,
    NumericalBlowup,
    SupportViolation,
)
from .measures import CompactSupport, ExponentialLight, GaussTemperedStable, LevyMeasure, MarkPartition
from .noise import JumpList, JumpRecord, NoiseParams, girsanov_log_weight, simulate_prm, simulate_tilted_prm
from .dynamics import (
    Ball,
    Box,
    ConstantCoefficient,
    AffineClampedCoefficient,
    ExitResult,
    Interval,
    PolynomialDrift,
    SystemSpec,
    Trajectory,
    WholeSpace,
    effective_drift,
    first_exit,
    flow_deterministic,
    simulate_sde,
    step_halving_report,
)
from .controls import (
    BallIndicator,
    ConstantTilt,
    Control,
    GridTilt,
    Identity,
    Polyline,
    control_for_path,
    entropy,
    solve_controlled_ode,
    tilt_for_path,
    verify_control_integrability,
)
from .quasipotential import (
    PathCandidate,
    QPOptions,
    QuasiPotentialResult,
    barrier_height,
    continuity_probe,
    quasipotential_point,
    transfer_cost,
)
from .exitlab import (
    ExitExperiment,
    KramersReport,
    TCapPolicy,
    cycle_diagnostic,
    exit_location_stats,
    importance_sampled_exit,
    run_exit_mc,
)
from .config import ExperimentConfig

__version__ = "0.1.0"

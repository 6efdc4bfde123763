"""Rate computation and simulation for lossy complementary delivery."""
from .baselines import conditional_rd, lossless_cd_rate, sandwich_check, wyner_ziv
from .cd_rate import (
    AuxiliaryChannel,
    CDSolution,
    ComplementaryDeliveryRate,
    OptimizerOptions,
    achieved_distortions,
    brute_force_cd_rate,
    cardinality_saturation_check,
    cd_objective,
    optimal_decoders,
    optimize_cd_rate,
    smoothed_cd_objective,
)
from .coding_sim import CodebookConfig, SimulationReport, TypicalityParams, run_sweep, run_trials
from .exceptions import (
    BudgetNegative,
    CompDeliveryError,
    CoordOverlap,
    Infeasible,
    LengthMismatch,
    NegativeMass,
    NonConvergence,
    NotNormalized,
    ShapeMismatch,
    TooLarge,
)
from .gcd_rate import (
    DecoderSpec,
    GCDProblem,
    GCDSolution,
    GeneralizedCDRate,
    cd_as_gcd,
    optimize_gcd_rate,
    three_source_example,
)
from .prob_core import (
    DecoderRule,
    DistortionMeasure,
    JointSource,
    conditional_entropy,
    conditional_mutual_information,
    entropy_pmf,
    expected_distortion,
    joint_entropy,
    mutual_information,
    validate_joint,
)

__version__ = "0.1.0"

"""Causal feature learning on pixel worlds."""

from .discrete import (
    DiscreteWorld,
    image_marginal,
    interventional_posterior,
    observational_posterior,
    residual_confounding_world,
    sample_world,
    sample_world_constrained,
)
from .counterexamples import (
    CounterexampleWorld,
    find_coarsening_violation,
    perturb_solved_entries,
)
from .partitions import (
    CoarseningReport,
    Partition,
    causal_partition,
    is_coarsening,
    observational_partition,
    partition_values,
)
from .macro import (
    MacroAssignment,
    residual_confounding_example,
    set_partitions,
    spurious_correlate,
    verify_complete_description,
)
from .grating import (
    GratingConfig,
    GratingOracle,
    ImageSample,
    detect_hbar,
    detect_vbar,
    generate_observational_dataset,
    grating_sample,
    grating_world,
    observational_class_values,
)
from .mlp import (
    ManipulationObjective,
    Predictor,
    TrainConfig,
    forward,
    init_predictor,
    input_gradient,
    train,
    weight_gradient,
)
from .pipeline import (
    CausalDataset,
    CausalRecord,
    LoopConfig,
    ManipulationRecord,
    OptimizerConfig,
    RoundMetrics,
    causal_predictor_training,
    manipulate,
    manipulation_distance,
    manipulation_error,
    manipulator_learning,
    vbar_insensitivity_fraction,
)
from .experiment import ExperimentConfig, GratingRunResult, run_grating_experiment

__version__ = "0.1.0"

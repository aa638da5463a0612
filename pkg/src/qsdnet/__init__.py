"""Simulation and design of looped sink-network receivers for quantum state discrimination."""

from .core import (
    HADAMARD,
    Ensemble,
    PureState,
    Unitary2,
    apply_unitary,
    canonical_ensembles,
    helstrom_bound,
    inner_product,
    nearest_unitary,
    phase_distance,
    states_equal,
)
from .discrimination import (
    CountVector,
    DecisionRule,
    OutcomeTable,
    build_map_rule,
    expected_multi_copy_error,
    map_error,
    multi_copy_posterior,
    outcome_table,
    single_copy_error,
)
from .errors import QSDError
from .experiment import (
    EventRecord,
    NoiseModel,
    end_to_end_error_curve,
    estimate_background,
    postselect_k_photon,
    simulate_run,
    subtract_background,
)
from .network import (
    ExtractionSchedule,
    NetworkConfig,
    TimeBinnedDistribution,
    conditional_distribution,
    cumulative_correct,
    decay_free_distribution,
    evolve,
    loop_operator,
)
from .receivers import ObjectiveSpec, UnitaryParams, binary_optimal, gu_receiver, optimize, tetrad_receiver
from .waveplates import waveplate_decomposition

__version__ = "0.1.0"

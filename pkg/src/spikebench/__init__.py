"""Spike-count benchmarks for spiking attention: LIF/rate-coding core,
spike circuits for exp, ReLU and softmax, circuit-built attention, bound
calculators and the experiment harness."""

__version__ = "0.1.0"

from .analysis import (
    BoundInputs,
    BoundReport,
    EffDimReport,
    ScalingFit,
    compute_bounds,
    design_rule_T,
    effective_dimension,
    energy_estimate,
    estimate_lipschitz,
    fit_scaling_law,
    input_dependent_bound,
    lower_bound_spikes,
)
from .attention import (
    AttentionOutput,
    AttentionWeights,
    circuit_attention,
    float_attention_oracle,
    ssa_forward,
)
from .circuits import (
    CircuitEstimate,
    ExpCircuitConfig,
    SoftmaxConfig,
    WtaConfig,
    coincidence_product,
    exp_circuit,
    inner_product_circuit,
    relu_circuit,
    spike_softmax,
    wta_normalize,
)
from .core import (
    LifParams,
    LifState,
    SpikeTensor,
    SpikeTrain,
    concentration_trial,
    decode_rate,
    derive_seed,
    encode_matrix,
    encode_rate,
    lif_run,
    lif_step,
)
from .errors import DegenerateInputError, DomainError, FormatError, SpikeBenchError
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    ExperimentRow,
    run_encoding_concentration,
    run_experiment,
    run_spike_accuracy,
    run_task1,
    run_wta_convergence,
)

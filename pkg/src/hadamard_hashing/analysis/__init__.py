from .baselines import lsh_codes, lsh_hyperplanes
from .diagnostics import (
    activation_histogram,
    bit_balance,
    codebook_gram,
    confusion_matrix,
    max_off_diagonal,
    saturation_fraction,
)
from .experiments import (
    DEFAULT_LAMBDAS,
    Experiment,
    ExperimentResult,
    ablate,
    evaluate_network,
    lambda_sweep,
    output_stem,
    run_experiment,
)

"""diffint: surrogate models for parametric integrals.

The library learns the map from integral parameters to integral values
from single-draw Monte Carlo labels, optionally joined by their exact
pathwise gradients (differential training), and ships the problem catalog,
oracles and experiment harness used to study the error of both approaches.
"""

from .harness import (
    ConvergenceTable,
    TestSet,
    compare_modes,
    evaluate_mse,
    make_testset,
    proposition_tests,
    run_convergence,
)
from .network import ACTIVATIONS, LossWeights, ModelParams
from .preprocessing import Scaler
from .problems import (
    PROBLEM_IDS,
    Dataset,
    LabeledSample,
    ProblemSpec,
    generate_dataset,
    get_problem,
    ground_truth,
    label_and_grad,
    labels_and_grads,
)
from .sampling import RngState, substream
from .training import TrainConfig, TrainedModel, train, train_fresh

__version__ = "0.1.0"

__all__ = [
    "ACTIVATIONS",
    "ConvergenceTable",
    "Dataset",
    "LabeledSample",
    "LossWeights",
    "ModelParams",
    "PROBLEM_IDS",
    "ProblemSpec",
    "RngState",
    "Scaler",
    "TestSet",
    "TrainConfig",
    "TrainedModel",
    "compare_modes",
    "evaluate_mse",
    "generate_dataset",
    "get_problem",
    "ground_truth",
    "label_and_grad",
    "labels_and_grads",
    "make_testset",
    "proposition_tests",
    "run_convergence",
    "substream",
    "train",
    "train_fresh",
    "__version__",
]

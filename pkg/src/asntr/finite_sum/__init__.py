from .data import (
    Dataset,
    generate_synthetic,
    load_csv,
    load_idx,
    load_idx_pair,
    normalize,
    one_hot,
    read_idx,
    train_test_split,
)
from .mlp import HALF_MSE, SOFTMAX_CE, DenseMlp, default_architecture, glorot_init, mlp_loss_and_grad
from .problems import (
    FiniteSumProblem,
    GradientCounter,
    MlpProblem,
    QuadraticProblem,
    SampleIndexSet,
    subsampled_gradient,
    subsampled_value,
    subsampled_value_and_gradient,
)

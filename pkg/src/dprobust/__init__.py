"""DP training and adversarial robustness on a tractable Gaussian mixture.

The package pairs exact closed-form theory (optimal robust intercepts and
errors for a two-class Gaussian mixture) with a small training stack
(per-sample clipped gradients, Gaussian noising, SGD/momentum/Adam/RMSprop),
adversarial attacks (exact linear worst case, FGSM, BIM, PGD), evaluation
helpers, and a deterministic sweep harness that writes CSV artifacts.
"""

from .attacks import AttackConfig, bim, fgsm, pgd, worst_case_linear
from .config import ExperimentConfig, config_digest, load_experiment, parse_experiment
from .data import Dataset, load_csv, save_csv
from .dp import (
    ClipMode,
    DPConfig,
    OptimizerConfig,
    OptimizerState,
    TrainResult,
    clip,
    init_state,
    privatize,
    step,
    train,
)
from .errors import (
    DpRobustError,
    NumericError,
    ParameterError,
    ShapeError,
    UsageError,
)
from .evaluation import (
    RunRecord,
    attack_key,
    binomial_se,
    natural_accuracy,
    pareto_frontier,
    robust_accuracy,
)
from .harness import SweepGrid, cmd_attack_eval, cmd_boxplot, cmd_pareto, cmd_sweep, cmd_theory
from .mixture import (
    InterceptPair,
    MixtureSpec,
    NormFamily,
    find_gamma_star,
    normal_cdf,
    optimal_intercepts,
    optimal_robust_error,
    pareto_premise,
    q_of_k,
    robust_error_general,
    robust_error_intercept,
    sample,
)
from .models import (
    LinearModel,
    LossKind,
    Mlp,
    MlpSpec,
    batch_loss,
    input_gradients,
    load_checkpoint,
    per_sample_gradients,
    predict,
    save_checkpoint,
)

__version__ = "0.1.0"

"""Physics priors as generalized regularizers for MLP surrogates.

Networks are trained on noisy samples of a 1-D dynamical system with the
mean squared residual of an approximate model added to the loss; the
regularizer weights (and optionally the approximate model's coefficients)
are tuned by Gaussian-process Bayesian optimization.
"""

from .autodiff import Jet2, LossTerm, MlpParams, init_mlp, loss_grad, mlp_forward, mlp_jet
from .config import ExperimentConfig, load_config
from .errors import ConfigError, ContractError, DivergedError, DomainError, ExperimentError, ShapeError
from .experiment import repeatability_run, run_experiment
from .hyperopt import SearchSpace, bo_minimize, expected_improvement, gp_fit, gp_predict
from .oracles import GridSpec, OracleSpec, make_dataset
from .presets import preset, preset_names
from .priors import PriorSpec, prior_loss
from .report import emit_heatmap
from .training import TrainConfig, train

__version__ = "0.1.0"
